//! Closed-loop simulation under unit-bounded disturbances.
//!
//! The disturbance is held constant over each integration step and always
//! satisfies `‖w‖ ≤ 1` at the hold instants. The level `V(t) = xᵀP(t)⁻¹x`
//! measures where a state sits relative to the ellipsoid `{x : V ≤ 1}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::OdeSettings;
use crate::signal::{sym_sqrt_pair, GridTrajectory, MatrixFunction};

/// Below this norm `BᵀP⁻¹x` has no usable direction.
const DIRECTION_FLOOR: f64 = 1e-12;

/// How `w(t)` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum DisturbancePolicy {
    /// `w = BᵀP⁻¹x / ‖BᵀP⁻¹x‖`, re-evaluated every step. Needs `P`.
    WorstCase,
    /// A fresh uniform draw on the unit sphere at every grid node.
    RandomExtreme {
        seed: u64,
    },
    /// `w_j(t) = sin((j+1)·ωt + jπ/m) / √m` with `ω = 2π/T`, so that
    /// `‖w‖ ≤ 1`.
    Harmonic,
    Zero,
    /// A fixed vector, which must satisfy `‖w‖ ≤ 1`.
    Constant(Vec<f64>),
}

impl DisturbancePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            DisturbancePolicy::WorstCase => "worst-case",
            DisturbancePolicy::RandomExtreme { .. } => "random-extreme",
            DisturbancePolicy::Harmonic => "harmonic",
            DisturbancePolicy::Zero => "zero",
            DisturbancePolicy::Constant(_) => "constant",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulationRun {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Regulated output `C(t)x(t)`.
    pub outputs: Vec<DVector<f64>>,
    /// Disturbance held from each sample to the next (the last entry repeats
    /// the final hold value).
    pub disturbances: Vec<DVector<f64>>,
    /// `V(t)` when an ellipsoid was supplied, otherwise empty.
    pub levels: Vec<f64>,
}

impl SimulationRun {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_level(&self) -> Option<f64> {
        self.levels.iter().copied().reduce(f64::max)
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }
}

/// Shape of the ellipsoid's image `{z = Cx}` at one time, with a boundary
/// polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidSection {
    pub time: f64,
    /// `S = C P Cᵀ`.
    pub shape: DMatrix<f64>,
    pub boundary: Vec<[f64; 2]>,
}

fn check_state(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!(
            "{name} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// `P(t)⁻¹x` by a Cholesky solve.
fn solve_spd(p: DMatrix<f64>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let chol = p.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        name: "P".into(),
        node: 0,
        time: t,
    })?;
    Ok(chol.solve(x))
}

/// `V(x, t) = xᵀP(t)⁻¹x`, with `P` interpolated linearly between nodes.
pub fn level(p: &GridTrajectory, x: &DVector<f64>, t: f64) -> Result<f64> {
    check_state("x", x, p.shape().0)?;
    Ok(x.dot(&solve_spd(p.eval(t), x, t)?))
}

/// Unit-norm input along `BᵀP⁻¹x`; falls back to the first unit vector when
/// that direction vanishes.
pub fn worst_case_disturbance(
    p: &GridTrajectory,
    b: &dyn MatrixFunction,
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let (n, m) = b.shape();
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "P is {:?} but B has {n} rows",
            p.shape()
        )));
    }
    check_state("x", x, n)?;
    let y = b.eval(t).transpose() * solve_spd(p.eval(t), x, t)?;
    let norm = y.norm();
    if norm > DIRECTION_FLOOR {
        Ok(y / norm)
    } else {
        let mut w = DVector::zeros(m);
        w[0] = 1.0;
        Ok(w)
    }
}

fn unit_sphere(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
        let norm: f64 = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Integrates `ẋ = A(t)x + B(t)w` with classical RK4 over `[0, horizon]`.
///
/// The step is `T / (nodes·substeps)` from `settings`; `w` is held over each
/// step. `ellipsoid` is required by [`DisturbancePolicy::WorstCase`] and, when
/// given, fills [`SimulationRun::levels`].
pub fn simulate_closed_loop(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    policy: &DisturbancePolicy,
    x0: &DVector<f64>,
    horizon: f64,
    settings: &OdeSettings,
    ellipsoid: Option<&GridTrajectory>,
) -> Result<SimulationRun> {
    let (n, n2) = a.shape();
    let (nb, m) = b.shape();
    let (_, nc) = c.shape();
    if n != n2 || nb != n || nc != n {
        return Err(Error::Dimension(format!(
            "A {:?}, B {:?}, C {:?} are inconsistent",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    check_state("x0", x0, n)?;
    if let Some(p) = ellipsoid {
        if p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "P is {:?}, expected {n}x{n}",
                p.shape()
            )));
        }
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    let period = a.period();
    let h = period / (settings.nodes * settings.substeps) as f64;
    let steps = (horizon / h - 1e-9).ceil().max(0.0) as usize;

    let mut rng = match policy {
        DisturbancePolicy::RandomExtreme { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let constant = match policy {
        DisturbancePolicy::Constant(v) => {
            let w = DVector::from_column_slice(v);
            check_state("constant disturbance", &w, m)?;
            if w.norm() > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "constant disturbance has norm {} > 1",
                    w.norm()
                )));
            }
            Some(w)
        }
        _ => None,
    };
    if *policy == DisturbancePolicy::WorstCase && ellipsoid.is_none() {
        return Err(Error::InvalidInput(
            "the worst-case policy needs the ellipsoid P(t)".into(),
        ));
    }
    let mut held_random = DVector::zeros(m);
    let omega = 2.0 * PI / period;
    let mut disturbance = |k: usize, t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(match policy {
            DisturbancePolicy::WorstCase => worst_case_disturbance(ellipsoid.unwrap(), b, x, t)?,
            DisturbancePolicy::RandomExtreme { .. } => {
                if k % settings.substeps == 0 {
                    held_random = unit_sphere(rng.as_mut().unwrap(), m);
                }
                held_random.clone()
            }
            DisturbancePolicy::Harmonic => DVector::from_fn(m, |j, _| {
                let phase = j as f64 * PI / m as f64;
                ((j + 1) as f64 * omega * t + phase).sin() / (m as f64).sqrt()
            }),
            DisturbancePolicy::Zero => DVector::zeros(m),
            DisturbancePolicy::Constant(_) => constant.clone().unwrap(),
        })
    };

    let mut run = SimulationRun::default();
    let record =
        |run: &mut SimulationRun, t: f64, x: &DVector<f64>, w: DVector<f64>| -> Result<()> {
            run.times.push(t);
            run.outputs.push(c.eval(t) * x);
            if let Some(p) = ellipsoid {
                run.levels.push(level(p, x, t)?);
            }
            run.states.push(x.clone());
            run.disturbances.push(w);
            Ok(())
        };

    let mut x = x0.clone();
    let mut t = 0.0;
    for k in 0..steps {
        let dt = (horizon - t).min(h);
        let w = disturbance(k, t, &x)?;
        let f = |s: f64, x: &DVector<f64>| a.eval(s) * x + b.eval(s) * &w;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let k3 = f(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let k4 = f(t + dt, &(&x + &k3 * dt));
        let x_next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        record(&mut run, t, &x, w)?;
        t = if k + 1 == steps {
            horizon
        } else {
            (k + 1) as f64 * h
        };
        x = x_next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t });
        }
    }
    let w_last = run
        .disturbances
        .last()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(m));
    record(&mut run, t, &x, w_last)?;
    Ok(run)
}

/// `max_t x(t)ᵀP(t)⁻¹x(t)` over the samples of a run.
pub fn inescapability_check(p: &GridTrajectory, run: &SimulationRun) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (t, x) in run.times.iter().zip(&run.states) {
        worst = worst.max(level(p, x, *t)?);
    }
    Ok(worst)
}

/// `S(t) = C(t)P(t)C(t)ᵀ` and `M` boundary points `S^(1/2)(cos θⱼ, sin θⱼ)`.
pub fn ellipsoid_boundary_2d(
    p: &GridTrajectory,
    c: &dyn MatrixFunction,
    t: f64,
    points: usize,
) -> Result<EllipsoidSection> {
    let (k, n) = c.shape();
    if k != 2 {
        return Err(Error::Dimension(format!(
            "ellipsoid sections need a 2-dimensional output, got {k}"
        )));
    }
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "P is {:?} but C has {n} columns",
            p.shape()
        )));
    }
    let ct = c.eval(t);
    let s = &ct * p.eval(t) * ct.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let (root, _) = sym_sqrt_pair(&s).ok_or(Error::NotPositiveDefinite {
        name: "C P Cᵀ".into(),
        node: 0,
        time: t,
    })?;
    let boundary = (0..points)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / points as f64;
            let u = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
            let z = &root * u;
            [z[0], z[1]]
        })
        .collect();
    Ok(EllipsoidSection {
        time: t,
        shape: s,
        boundary,
    })
}

/// A uniformly random direction scaled onto the boundary `xᵀP⁻¹x = 1`.
pub fn boundary_state(p: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let (root, _) = sym_sqrt_pair(p).ok_or(Error::NotPositiveDefinite {
        name: "P".into(),
        node: 0,
        time: 0.0,
    })?;
    Ok(root * unit_sphere(rng, p.nrows()))
}

/// Outcome of a Monte-Carlo batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSummary {
    /// Largest `V` of each run.
    pub max_levels: Vec<f64>,
    pub max_level: f64,
}

/// Runs `runs` simulations from random boundary states of the ellipsoid at
/// `t = 0`, each with its own random-extreme disturbance stream. Run `i`
/// uses seed `seed + i`, so the batch is reproducible and order-independent.
pub fn monte_carlo_inescapability(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    p: &GridTrajectory,
    runs: usize,
    horizon: f64,
    seed: u64,
    settings: &OdeSettings,
) -> Result<MonteCarloSummary> {
    let max_levels = (0..runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let x0 = boundary_state(p.value(0), &mut rng)?;
            // separate stream for the disturbance draws
            let policy = DisturbancePolicy::RandomExtreme {
                seed: run_seed ^ 0x9e37_79b9_7f4a_7c15,
            };
            let run = simulate_closed_loop(a, b, c, &policy, &x0, horizon, settings, Some(p))?;
            Ok(run.max_level().unwrap_or(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_level = max_levels.iter().copied().fold(0.0, f64::max);
    Ok(MonteCarloSummary {
        max_levels,
        max_level,
    })
}
