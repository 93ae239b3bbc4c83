//! Periodic state feedback for a pendulum whose pivot is shaken vertically
//! (linearized about the hanging position):
//!
//! ```text
//!   θ̈ = −(1 + 0.4 cos 2t) θ − 0.2 θ̇ + u + w,   z = (θ, u)
//! ```
//!
//! Shaking at twice the natural frequency pumps energy in (parametric
//! resonance) and nearly cancels the damping: the open loop sits at the edge
//! of stability and its minimal ellipsoids are huge.

use std::f64::consts::PI;

use inescapable::ode::{spectral_radius, state_transition, OdeSettings};
use inescapable::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};
use inescapable::synthesis::{optimize_controller, DesignMode, DesignOptions, LtvPlant};

fn main() -> inescapable::Result<()> {
    let period = PI;
    let nodes = 256;
    let one = FourierEntry::constant(1.0);
    let a = PeriodicMatrixSignal::zeros(2, 2, period)
        .with_entry(0, 1, one.clone())
        .with_entry(1, 0, FourierEntry::constant(-1.0).with_cos(1, -0.4))
        .with_entry(1, 1, FourierEntry::constant(-0.2));
    let b1 = PeriodicMatrixSignal::zeros(2, 1, period).with_entry(1, 0, one.clone());
    let b2 = b1.clone();
    let c2 = PeriodicMatrixSignal::zeros(2, 2, period).with_entry(0, 0, one.clone());
    let d2 = PeriodicMatrixSignal::zeros(2, 1, period).with_entry(1, 0, one);
    let plant = LtvPlant::new(a, b1)?.with_control(b2, c2, d2)?;

    let ode = OdeSettings::new(nodes, 4)?;
    let phi = state_transition(&plant.a, None, 0.0, period, &ode)?;
    println!("open-loop monodromy radius {:.4}", spectral_radius(&phi));

    let report = optimize_controller(
        &plant,
        DesignMode::StateFeedback,
        &AlphaProfile::constant(1.0, period, nodes)?,
        None,
        &DesignOptions::with_ode(ode),
    )?;
    println!(
        "state feedback: size {:.6}, {} iterations, converged {}, stationarity {:.1e}",
        report.size,
        report.history.sizes.len() - 1,
        report.converged,
        report.stationarity
    );
    println!(
        "closed-loop monodromy radius {:.3e}",
        report.closed_loop.monodromy_radius(&ode)?
    );
    let k = report.gains.k.as_ref().unwrap();
    for i in (0..nodes).step_by(nodes / 4) {
        let g = k.value(i);
        println!(
            "  t = {:5.3}  K = [{:8.4} {:8.4}]  alpha = {:.4}",
            k.node_time(i),
            g[(0, 0)],
            g[(0, 1)],
            report.alpha.value(i)
        );
    }
    Ok(())
}
