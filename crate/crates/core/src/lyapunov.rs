//! Periodic solutions of the shifted differential Lyapunov equations
//!
//! ```text
//!   Ṗ =  A_α P + P A_αᵀ + R(t)        (forward, ellipsoid shape)
//!  −Q̇ =  Q A_α + A_αᵀ Q + G(t)        (backward, dual matrix)
//! ```
//!
//! with `A_α = A + (α/2)·I`. The periodic boundary condition is imposed
//! exactly: the one-period affine map `X(0) ↦ Φ X(0) Φᵀ + G` is computed once
//! and its fixed point is solved as a discrete Lyapunov equation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::{check_stable, symmetrized, Flow, OdeSettings, PeriodGrid, Record};
use crate::signal::{AlphaProfile, GridTrajectory, MatrixFunction};

/// Time direction of a periodic matrix equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Ẋ = …`, integrated forward from `t = 0`.
    Forward,
    /// `−Ẋ = …`, integrated in reversed time `s = T − t`.
    Backward,
}

#[derive(Clone, Debug)]
pub struct PeriodicLyapunovSolution {
    pub trajectory: GridTrajectory,
    /// Values at every integration step, `substeps` per node interval.
    pub fine: GridTrajectory,
    pub substeps: usize,
    /// `‖X(0) − X(T)‖_F` after one pass from the computed initial condition.
    pub seam_residual: f64,
    pub alpha: AlphaProfile,
    /// Smallest eigenvalue over all nodes.
    pub min_eigenvalue: f64,
}

impl PeriodicLyapunovSolution {
    /// `(1/T)∫₀ᵀ f(t, X(t)) dt` from the step values: composite Simpson inside
    /// each node interval (trapezoid if `substeps` is odd). Coefficient kinks
    /// only occur at nodes, so this keeps fourth-order accuracy.
    pub fn mean(&self, f: impl Fn(f64, &DMatrix<f64>) -> f64) -> f64 {
        let m = self.fine.nodes();
        let values: Vec<f64> = (0..m)
            .map(|k| f(self.fine.node_time(k), self.fine.value(k)))
            .collect();
        let sub = self.substeps;
        let weights = panel_weights(sub);
        let total: f64 = (0..m / sub)
            .map(|i| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * values[(i * sub + j) % m])
                    .sum::<f64>()
            })
            .sum();
        total / m as f64
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue > 0.0
    }

    /// True when the solution is numerically singular somewhere, which for
    /// `P` points at a loss of controllability (for `Q`, observability).
    pub fn is_singular(&self) -> bool {
        let scale = self
            .trajectory
            .values()
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max);
        self.min_eigenvalue <= 1e-12 * scale.max(f64::MIN_POSITIVE)
    }
}

/// Quadrature weights (in units of one step) over a node interval split into
/// `substeps` steps: Simpson for an even count, trapezoid otherwise.
pub(crate) fn panel_weights(substeps: usize) -> Vec<f64> {
    if substeps % 2 == 0 {
        (0..=substeps)
            .map(|j| match j {
                0 => 1.0,
                j if j == substeps => 1.0,
                j if j % 2 == 1 => 4.0,
                _ => 2.0,
            })
            .map(|w| w / 3.0)
            .collect()
    } else {
        (0..=substeps)
            .map(|j| if j == 0 || j == substeps { 0.5 } else { 1.0 })
            .collect()
    }
}

/// Solves `X = Φ X Φᵀ + G` for `ρ(Φ) < 1`.
///
/// Uses the Kronecker (vectorized) form for `n ≤ 30` and Smith's squaring
/// iteration above that.
pub fn discrete_lyapunov_fixed_point(phi: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    if phi.ncols() != n || g.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Φ is {:?}, G is {:?}",
            phi.shape(),
            g.shape()
        )));
    }
    check_stable(phi, "discrete Lyapunov fixed point")?;
    if n <= 30 {
        let kron = phi.kronecker(phi);
        let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
        let rhs = DMatrix::from_column_slice(n * n, 1, g.as_slice());
        let sol = lhs.lu().solve(&rhs).ok_or_else(|| {
            Error::Degenerate("singular Kronecker system in discrete Lyapunov solve".into())
        })?;
        Ok(symmetrized(&DMatrix::from_column_slice(
            n,
            n,
            sol.as_slice(),
        )))
    } else {
        smith(phi, g)
    }
}

fn smith(phi: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut a = phi.clone();
    let mut x = g.clone();
    for _ in 0..64 {
        let inc = &a * &x * a.transpose();
        x += &inc;
        if inc.norm() <= 1e-16 * (1.0 + x.norm()) {
            return Ok(symmetrized(&x));
        }
        a = &a * &a;
    }
    Err(Error::NonConvergence {
        iterations: 64,
        last: (&a * &x * a.transpose()).norm(),
        history: Vec::new(),
    })
}

/// Exact periodic solution of a sampled Lyapunov flow, returned as values at
/// every step in flow time together with the seam residual.
pub(crate) fn periodic_flow_solution(
    flow: &Flow,
    context: &str,
) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let mono = flow.monodromy()?;
    check_stable(&mono.phi, context)?;
    let x0 = discrete_lyapunov_fixed_point(&mono.phi, &mono.g)?;
    let (x_end, steps) = flow.propagate(&x0, Record::Steps)?;
    let seam = (&x_end - &x0).norm();
    Ok((steps, seam))
}

/// Maps node (or step) values in reversed flow time back to the original time axis.
pub(crate) fn unreverse_nodes(nodes: Vec<DMatrix<f64>>) -> Vec<DMatrix<f64>> {
    let n = nodes.len();
    let mut nodes: Vec<Option<DMatrix<f64>>> = nodes.into_iter().map(Some).collect();
    (0..n)
        .map(|i| nodes[(n - i) % n].take().expect("each node used once"))
        .collect()
}

pub(crate) fn shift_diag(mut m: DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += shift;
    }
    m
}

pub(crate) fn check_square(a: &dyn MatrixFunction) -> Result<usize> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::Dimension(format!("A must be square, got {n}x{m}")));
    }
    Ok(n)
}

pub(crate) fn check_period(name: &str, f: &dyn MatrixFunction, period: f64) -> Result<()> {
    if (f.period() - period).abs() > 1e-12 * period {
        return Err(Error::Dimension(format!(
            "{name} has period {}, expected {period}",
            f.period()
        )));
    }
    Ok(())
}

fn min_eigenvalue(values: &[DMatrix<f64>]) -> f64 {
    values
        .iter()
        .map(|x| x.clone().symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min)
}

/// Periodic solution with a general PSD forcing term.
pub fn solve_periodic_lyapunov(
    a: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    forcing: &dyn MatrixFunction,
    direction: Direction,
    settings: &OdeSettings,
) -> Result<PeriodicLyapunovSolution> {
    let n = check_square(a)?;
    if forcing.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "forcing must be {n}x{n}, got {:?}",
            forcing.shape()
        )));
    }
    let period = alpha.period();
    check_period("A", a, period)?;
    let grid = PeriodGrid::new(period, alpha.nodes(), settings.substeps);
    let drift = |t: f64| shift_diag(a.eval(t), 0.5 * alpha.eval_scalar(t));
    let force = |t: f64| symmetrized(&forcing.eval(t));
    let flow = match direction {
        Direction::Forward => Flow::sample(grid, drift, force, None::<fn(f64) -> DMatrix<f64>>),
        Direction::Backward => Flow::sample(
            grid,
            |s| drift(period - s).transpose(),
            |s| force(period - s),
            None::<fn(f64) -> DMatrix<f64>>,
        ),
    };
    let (steps, seam_residual) =
        periodic_flow_solution(&flow, "A + α/2·I is not exponentially stable for this α")?;
    let steps = match direction {
        Direction::Forward => steps,
        Direction::Backward => unreverse_nodes(steps),
    };
    let nodes: Vec<_> = steps.iter().step_by(settings.substeps).cloned().collect();
    let min_eigenvalue = min_eigenvalue(&nodes);
    Ok(PeriodicLyapunovSolution {
        trajectory: GridTrajectory::new(period, nodes)?,
        fine: GridTrajectory::new(period, steps)?,
        substeps: settings.substeps,
        seam_residual,
        alpha: alpha.clone(),
        min_eigenvalue,
    })
}

struct Gram<'a> {
    m: &'a dyn MatrixFunction,
    scale: Option<&'a AlphaProfile>,
    outer: bool,
}

impl MatrixFunction for Gram<'_> {
    fn shape(&self) -> (usize, usize) {
        let (r, c) = self.m.shape();
        if self.outer {
            (r, r)
        } else {
            (c, c)
        }
    }
    fn period(&self) -> f64 {
        self.m.period()
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        let m = self.m.eval(t);
        let g = if self.outer {
            &m * m.transpose()
        } else {
            m.transpose() * &m
        };
        match self.scale {
            Some(alpha) => g / alpha.eval_scalar(t),
            None => g,
        }
    }
}

/// `P(t)` of the minimal inescapable ellipsoid for a fixed `α`:
/// `Ṗ = AP + PAᵀ + αP + (1/α)BBᵀ`, `P(0) = P(T)`.
pub fn solve_periodic_p(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    settings: &OdeSettings,
) -> Result<PeriodicLyapunovSolution> {
    let n = check_square(a)?;
    if b.shape().0 != n {
        return Err(Error::Dimension(format!(
            "B must have {n} rows, got {:?}",
            b.shape()
        )));
    }
    let forcing = Gram {
        m: b,
        scale: Some(alpha),
        outer: true,
    };
    solve_periodic_lyapunov(a, alpha, &forcing, Direction::Forward, settings)
}

/// Dual matrix `Q(t)`: `−Q̇ = QA + AᵀQ + αQ + CᵀC`, `Q(0) = Q(T)`.
pub fn solve_periodic_q(
    a: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    settings: &OdeSettings,
) -> Result<PeriodicLyapunovSolution> {
    let n = check_square(a)?;
    if c.shape().1 != n {
        return Err(Error::Dimension(format!(
            "C must have {n} columns, got {:?}",
            c.shape()
        )));
    }
    let forcing = Gram {
        m: c,
        scale: None,
        outer: false,
    };
    solve_periodic_lyapunov(a, alpha, &forcing, Direction::Backward, settings)
}
