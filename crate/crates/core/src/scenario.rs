//! Built-in plants.
//!
//! The gear pair is two inertias `J₁`, `J₂` coupled through a mesh with
//! periodically varying stiffness `k(t)` and damping `μ(t)`. State
//! `x = (θ₁, θ₂, θ̇₁, θ̇₂)`, torque input on the first inertia, a
//! periodically modulated disturbance torque on both, and noisy angle
//! measurements.

use std::f64::consts::PI;

use crate::error::Result;
use crate::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};
use crate::synthesis::LtvPlant;

pub const GEAR_PERIOD: f64 = 2.0 * PI;
pub const GEAR_J1: f64 = 0.5;
pub const GEAR_J2: f64 = 0.4;
pub const GEAR_K0: f64 = 10.0;
pub const GEAR_MU0: f64 = 1.0 / 300.0;

/// `k(t) = k₀(1 + 0.2 sin t + 0.3 cos 2t)`
pub fn gear_stiffness() -> FourierEntry {
    FourierEntry::constant(1.0)
        .with_sin(1, 0.2)
        .with_cos(2, 0.3)
        .scaled(GEAR_K0)
}

/// `μ(t) = μ₀(1 + 0.2 sin t − 0.3 cos 2t)`
pub fn gear_damping() -> FourierEntry {
    FourierEntry::constant(1.0)
        .with_sin(1, 0.2)
        .with_cos(2, -0.3)
        .scaled(GEAR_MU0)
}

/// The four-state gear-pair plant with `w ∈ ℝ³` (one disturbance torque, two
/// measurement noises), `u ∈ ℝ`, `y ∈ ℝ²`, `z ∈ ℝ²`.
pub fn gear_pair_plant() -> Result<LtvPlant> {
    let t = GEAR_PERIOD;
    let (k, mu) = (gear_stiffness(), gear_damping());
    let (j1, j2) = (1.0 / GEAR_J1, 1.0 / GEAR_J2);
    let a = PeriodicMatrixSignal::zeros(4, 4, t)
        .with_entry(0, 2, FourierEntry::constant(1.0))
        .with_entry(1, 3, FourierEntry::constant(1.0))
        .with_entry(2, 0, k.scaled(-j1))
        .with_entry(2, 1, k.scaled(j1))
        .with_entry(2, 2, mu.scaled(-j1))
        .with_entry(2, 3, mu.scaled(j1))
        .with_entry(3, 0, k.scaled(j2))
        .with_entry(3, 1, k.scaled(-j2))
        .with_entry(3, 2, mu.scaled(j2))
        .with_entry(3, 3, mu.scaled(-j2));
    // (1/3) sin² t and (1/10) cos² t
    let b1_1 = FourierEntry::constant(1.0 / 6.0).with_cos(2, -1.0 / 6.0);
    let b1_2 = FourierEntry::constant(1.0 / 20.0).with_cos(2, 1.0 / 20.0);
    let b1 = PeriodicMatrixSignal::zeros(4, 3, t)
        .with_entry(2, 0, b1_1.scaled(j1))
        .with_entry(3, 0, b1_2.scaled(j2));
    let b2 = PeriodicMatrixSignal::zeros(4, 1, t).with_entry(2, 0, FourierEntry::constant(j1));
    // 20 sin² t and 7.5 cos² t
    let c2 = PeriodicMatrixSignal::zeros(2, 4, t)
        .with_entry(0, 0, FourierEntry::constant(10.0).with_cos(2, -10.0))
        .with_entry(0, 1, FourierEntry::constant(3.75).with_cos(2, 3.75));
    let d2 = PeriodicMatrixSignal::zeros(2, 1, t).with_entry(1, 0, FourierEntry::constant(1.0));
    let c1 = PeriodicMatrixSignal::zeros(2, 4, t)
        .with_entry(0, 0, FourierEntry::constant(1.0))
        .with_entry(1, 1, FourierEntry::constant(1.0));
    let d1 = PeriodicMatrixSignal::zeros(2, 3, t)
        .with_entry(0, 1, FourierEntry::constant(1.0))
        .with_entry(1, 2, FourierEntry::constant(1.0));
    LtvPlant::new(a, b1)?
        .with_control(b2, c2, d2)?
        .with_measurement(c1, d1)
}

/// Piecewise-constant starting profile: 0.01 on `[π/2, 3π/2]`, 0.05 elsewhere.
pub fn gear_alpha_low(nodes: usize) -> Result<AlphaProfile> {
    AlphaProfile::from_fn(GEAR_PERIOD, nodes, |t| {
        if (PI / 2.0..=3.0 * PI / 2.0).contains(&t) {
            0.01
        } else {
            0.05
        }
    })
}

/// Starting profile `1 + sin(7t)/5`.
pub fn gear_alpha_high(nodes: usize) -> Result<AlphaProfile> {
    AlphaProfile::from_fn(GEAR_PERIOD, nodes, |t| 1.0 + (7.0 * t).sin() / 5.0)
}

/// Times at which the gear-pair examples cut the ellipsoid.
pub fn gear_section_times() -> [f64; 3] {
    [GEAR_PERIOD / 3.0, 2.0 * GEAR_PERIOD / 3.0, GEAR_PERIOD]
}
