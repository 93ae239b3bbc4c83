//! Output-feedback design for the gear pair from two very different
//! starting profiles, compared with the periodic LQR + Kalman combination.
//!
//! `cargo run --release --example gear_pair [nodes]` (default 512; the
//! reference grid is 2048).

use inescapable::ellipsoid::AlphaOptions;
use inescapable::ode::OdeSettings;
use inescapable::scenario::{gear_alpha_high, gear_alpha_low, gear_pair_plant, GEAR_PERIOD};
use inescapable::signal::AlphaProfile;
use inescapable::synthesis::{
    evaluate_fixed_controller, lqr_kalman_baseline, optimize_controller, DesignMode, DesignOptions,
};

fn main() -> inescapable::Result<()> {
    let nodes = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(512);
    let plant = gear_pair_plant()?;
    let ode = OdeSettings::new(nodes, 4)?;
    let options = DesignOptions::with_ode(ode);

    let mut finals = Vec::new();
    for (name, alpha0) in [
        ("low", gear_alpha_low(nodes)?),
        ("high", gear_alpha_high(nodes)?),
    ] {
        let r = optimize_controller(&plant, DesignMode::OutputFeedback, &alpha0, None, &options)?;
        println!(
            "start {name:4}: size {:.8} -> {:.8} in {} iterations (converged {}, worst increase {:.1e})",
            r.history.sizes[0],
            r.size,
            r.history.sizes.len() - 1,
            r.converged,
            r.history.worst_increase()
        );
        println!(
            "            alpha* in [{:.4}, {:.4}], stationarity {:.1e}",
            r.alpha.inf(),
            r.alpha.sup(),
            r.stationarity
        );
        finals.push(r);
    }
    println!(
        "sup |alpha*_low - alpha*_high| = {:.2e}",
        finals[0].alpha.sup_distance(&finals[1].alpha)
    );

    let gains = lqr_kalman_baseline(&plant, &options.riccati)?;
    let baseline = evaluate_fixed_controller(
        &plant,
        &gains,
        &AlphaProfile::constant(0.5, GEAR_PERIOD, nodes)?,
        &AlphaOptions {
            ode,
            ..Default::default()
        },
    )?;
    println!(
        "LQR + Kalman: size {:.6} (monodromy radius {:.4}), optimal design is {:.1}x smaller",
        baseline.size,
        baseline.monodromy_radius,
        baseline.size / finals[0].size
    );
    Ok(())
}
