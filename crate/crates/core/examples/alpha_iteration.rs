//! Time-varying `α(t)` against the best constant `α` on a periodically
//! excited oscillator
//!
//! ```text
//!   ẍ + 0.4ẋ + (1 + 0.5 sin t)x = (1 + 0.8 cos t) w,   z = x
//! ```
//!
//! The disturbance gain swings by a factor of nine over a period, so the
//! optimal ellipsoid breathes and the optimal `α(t)` follows it.

use std::f64::consts::PI;

use inescapable::ellipsoid::{optimize_alpha_analysis, AlphaOptions, EllipsoidFamily};
use inescapable::ode::OdeSettings;
use inescapable::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};

fn main() -> inescapable::Result<()> {
    let period = 2.0 * PI;
    let nodes = 256;
    let a = PeriodicMatrixSignal::zeros(2, 2, period)
        .with_entry(0, 1, FourierEntry::constant(1.0))
        .with_entry(1, 0, FourierEntry::constant(-1.0).with_sin(1, -0.5))
        .with_entry(1, 1, FourierEntry::constant(-0.4));
    let b = PeriodicMatrixSignal::zeros(2, 1, period).with_entry(
        1,
        0,
        FourierEntry::constant(1.0).with_cos(1, 0.8),
    );
    let c = PeriodicMatrixSignal::zeros(1, 2, period).with_entry(0, 0, FourierEntry::constant(1.0));
    let ode = OdeSettings::new(nodes, 4)?;

    // coarse scan over constant α
    let mut best = (f64::NAN, f64::INFINITY);
    for k in 1..40 {
        let alpha = 0.01 * k as f64;
        let profile = AlphaProfile::constant(alpha, period, nodes)?;
        if let Ok(f) = EllipsoidFamily::new(&a, &b, &c, &profile, &ode) {
            if f.size < best.1 {
                best = (alpha, f.size);
            }
        }
    }
    println!("best constant alpha {:.2}: size {:.6}", best.0, best.1);

    let alpha0 = AlphaProfile::constant(best.0, period, nodes)?;
    let opt = optimize_alpha_analysis(
        &a,
        &b,
        &c,
        &alpha0,
        &AlphaOptions {
            ode,
            ..Default::default()
        },
    )?;
    println!(
        "optimal alpha(t): size {:.6} after {} iterations (converged {}, stationarity {:.1e})",
        opt.size,
        opt.history.sizes.len() - 1,
        opt.history.converged,
        opt.stationarity
    );
    println!(
        "alpha(t) ranges over [{:.4}, {:.4}]",
        opt.alpha.inf(),
        opt.alpha.sup()
    );
    for i in (0..nodes).step_by(nodes / 8) {
        println!(
            "  t = {:5.3}  alpha = {:.4}  P_11 = {:.4}",
            opt.alpha.node_time(i),
            opt.alpha.value(i),
            opt.p.trajectory.value(i)[(0, 0)]
        );
    }
    Ok(())
}
