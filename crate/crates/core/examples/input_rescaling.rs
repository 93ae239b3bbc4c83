//! Disturbances bounded by a time-varying ellipsoid `wᵀW(t)w ≤ 1` instead of
//! the unit ball: fold `W(t)^(-1/2)` into the input matrix and analyze as
//! usual.

use std::f64::consts::PI;

use inescapable::ellipsoid::{optimize_alpha_analysis, AlphaOptions};
use inescapable::ode::OdeSettings;
use inescapable::signal::{rescale_input, AlphaProfile, FourierEntry, PeriodicMatrixSignal};

fn main() -> inescapable::Result<()> {
    let period = 2.0 * PI;
    let nodes = 256;
    let a = PeriodicMatrixSignal::zeros(2, 2, period)
        .with_entry(0, 0, FourierEntry::constant(-1.0))
        .with_entry(0, 1, FourierEntry::constant(2.0))
        .with_entry(1, 1, FourierEntry::constant(-0.5));
    let b = PeriodicMatrixSignal::identity(2, period);
    let c = PeriodicMatrixSignal::identity(2, period);
    // |w₁| ≤ 1 always; |w₂| ≤ 1/2 around t = 0 and up to 2 around t = π
    let w = PeriodicMatrixSignal::zeros(2, 2, period)
        .with_entry(0, 0, FourierEntry::constant(1.0))
        .with_entry(1, 1, FourierEntry::constant(2.125).with_cos(1, 1.875));

    let ode = OdeSettings::new(nodes, 4)?;
    let options = AlphaOptions {
        ode,
        ..Default::default()
    };
    let alpha0 = AlphaProfile::constant(0.5, period, nodes)?;

    let unit = optimize_alpha_analysis(&a, &b, &c, &alpha0, &options)?;
    let scaled_b = rescale_input(&b, &w, nodes)?;
    let scaled = optimize_alpha_analysis(&a, &scaled_b, &c, &alpha0, &options)?;
    println!("unit ball:        size {:.6}", unit.size);
    println!("weighted bound:   size {:.6}", scaled.size);
    for i in (0..nodes).step_by(nodes / 4) {
        println!(
            "  t = {:5.3}  trace P unit {:8.4}  weighted {:8.4}",
            unit.p.trajectory.node_time(i),
            unit.p.trajectory.value(i).trace(),
            scaled.p.trajectory.value(i).trace()
        );
    }
    Ok(())
}
