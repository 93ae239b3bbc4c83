//! Monte-Carlo check that trajectories starting on the boundary of the
//! optimal gear-pair ellipsoid stay inside it, under random extreme
//! disturbances and under the worst-case adversary.

use inescapable::ode::OdeSettings;
use inescapable::scenario::{gear_alpha_high, gear_pair_plant, GEAR_PERIOD};
use inescapable::simulate::{
    boundary_state, monte_carlo_inescapability, simulate_closed_loop, DisturbancePolicy,
};
use inescapable::synthesis::{optimize_controller, DesignMode, DesignOptions};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> inescapable::Result<()> {
    let nodes = 256;
    let ode = OdeSettings::new(nodes, 4)?;
    let plant = gear_pair_plant()?;
    let r = optimize_controller(
        &plant,
        DesignMode::OutputFeedback,
        &gear_alpha_high(nodes)?,
        None,
        &DesignOptions::with_ode(ode),
    )?;
    let cl = &r.closed_loop;
    let p = &r.p_cl.trajectory;
    let horizon = 3.0 * GEAR_PERIOD;

    let mc = monte_carlo_inescapability(&cl.a, &cl.b, &cl.c, p, 100, horizon, 7, &ode)?;
    println!("random extreme, 100 runs: max V = {:.6}", mc.max_level);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x0 = boundary_state(p.value(0), &mut rng)?;
        let run = simulate_closed_loop(
            &cl.a,
            &cl.b,
            &cl.c,
            &DisturbancePolicy::WorstCase,
            &x0,
            horizon,
            &ode,
            Some(p),
        )?;
        worst = worst.max(run.max_level().unwrap_or(0.0));
    }
    println!("worst case, 10 runs:       max V = {:.6}", worst);

    // a state outside the ellipsoid is flagged
    let x0: DVector<f64> = boundary_state(p.value(0), &mut rng)? * 2.0;
    let run = simulate_closed_loop(
        &cl.a,
        &cl.b,
        &cl.c,
        &DisturbancePolicy::Zero,
        &x0,
        0.0,
        &ode,
        Some(p),
    )?;
    println!("doubled boundary state:    V = {:.6}", run.levels[0]);
    Ok(())
}
