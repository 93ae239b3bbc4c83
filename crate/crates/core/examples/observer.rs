//! Periodic observer for a rotating-frame oscillator measured through a
//! sensor whose gain fades in and out:
//!
//! ```text
//!   ẋ = [[−0.1, 1], [−1, −0.1]] x + [1; 0] w₁
//!   y = (1 + 0.9 cos t) x₁ + w₂
//! ```
//!
//! The estimation error `e = x − x̂` is weighted by the identity.

use std::f64::consts::PI;

use inescapable::ode::OdeSettings;
use inescapable::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};
use inescapable::synthesis::{optimize_controller, DesignMode, DesignOptions, LtvPlant};

fn main() -> inescapable::Result<()> {
    let period = 2.0 * PI;
    let nodes = 256;
    let a = PeriodicMatrixSignal::zeros(2, 2, period)
        .with_entry(0, 0, FourierEntry::constant(-0.1))
        .with_entry(0, 1, FourierEntry::constant(1.0))
        .with_entry(1, 0, FourierEntry::constant(-1.0))
        .with_entry(1, 1, FourierEntry::constant(-0.1));
    let b1 =
        PeriodicMatrixSignal::zeros(2, 2, period).with_entry(0, 0, FourierEntry::constant(1.0));
    let c1 = PeriodicMatrixSignal::zeros(1, 2, period).with_entry(
        0,
        0,
        FourierEntry::constant(1.0).with_cos(1, 0.9),
    );
    let d1 =
        PeriodicMatrixSignal::zeros(1, 2, period).with_entry(0, 1, FourierEntry::constant(1.0));
    let plant = LtvPlant::new(a, b1)?.with_measurement(c1, d1)?;
    let weight = PeriodicMatrixSignal::identity(2, period);

    let ode = OdeSettings::new(nodes, 4)?;
    let report = optimize_controller(
        &plant,
        DesignMode::Observer,
        &AlphaProfile::constant(0.5, period, nodes)?,
        Some(&weight),
        &DesignOptions::with_ode(ode),
    )?;
    println!(
        "observer: error-ellipsoid size {:.6}, {} iterations, converged {}, stationarity {:.1e}",
        report.size,
        report.history.sizes.len() - 1,
        report.converged,
        report.stationarity
    );
    let l = report.gains.l.as_ref().unwrap();
    for i in (0..nodes).step_by(nodes / 8) {
        let g = l.value(i);
        println!(
            "  t = {:5.3}  L = [{:8.4}; {:8.4}]  alpha = {:.4}",
            l.node_time(i),
            g[(0, 0)],
            g[(1, 0)],
            report.alpha.value(i)
        );
    }
    Ok(())
}
