//! Periodic stabilizing solutions of the shifted control and filter Riccati
//! differential equations, plus their standard (unshifted) LQR and Kalman
//! counterparts.
//!
//! ```text
//! control:  −Q̇ = QA + AᵀQ + αQ + CᵀC − QBBᵀQ
//! filter:    Ṗ = AP + PAᵀ + αP + (1/α)BBᵀ − αPCᵀCP
//! ```
//!
//! Both are written as a forward flow `Ẋ = F X + X Fᵀ + R − X S X` (the
//! control equation in reversed time) and solved by successive-period
//! integration. When the period-to-period contraction is too slow the solver
//! switches to Newton–Kleinman steps, each of which is an exact periodic
//! Lyapunov solve, then polishes with a few more Riccati periods.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lyapunov::{
    check_period, check_square, discrete_lyapunov_fixed_point, shift_diag, unreverse_nodes,
};
use crate::ode::{
    check_stable, monodromy_of, spectral_radius, symmetrized, Flow, OdeSettings, PeriodGrid, Record,
};
use crate::signal::{AlphaProfile, GridTrajectory, MatrixFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiccatiKind {
    /// Backward equation for `Q(t)`; gain `K = −BᵀQ`.
    Control,
    /// Forward equation for `P(t)`; gain `L = −αPCᵀ`.
    Filter,
}

/// How the disturbance parameter enters the equation.
#[derive(Clone, Copy, Debug)]
pub enum Weighting<'a> {
    /// The `α`-shifted equations of the inescapable-ellipsoid problem.
    Shifted(&'a AlphaProfile),
    /// Plain LQR / Kalman weights (`α` terms removed, unit noise weights).
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiccatiOptions {
    /// Relative seam-change tolerance per period.
    pub tol: f64,
    /// Cap on the number of one-period passes.
    pub max_periods: usize,
    pub ode: OdeSettings,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_periods: 500,
            ode: OdeSettings::default(),
        }
    }
}

impl RiccatiOptions {
    pub fn with_ode(ode: OdeSettings) -> Self {
        Self {
            ode,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiccatiMethod {
    SuccessivePeriod,
    NewtonKleinman,
}

#[derive(Clone, Debug)]
pub struct PeriodicRiccatiSolution {
    pub trajectory: GridTrajectory,
    pub seam_residual: f64,
    /// One-period passes spent, Newton steps included.
    pub iterations: usize,
    /// Relative seam change per pass.
    pub history: Vec<f64>,
    /// Max pointwise relative ODE residual, see [`riccati_residual`].
    pub max_residual: f64,
    /// Spectral radius of the monodromy of the induced closed loop.
    pub closed_loop_radius: f64,
    pub method: RiccatiMethod,
    pub kind: RiccatiKind,
}

impl PeriodicRiccatiSolution {
    /// Value at `t = 0` (equivalently `t = T`), usable as a warm start.
    pub fn initial(&self) -> &DMatrix<f64> {
        self.trajectory.value(0)
    }
}

/// A periodic Riccati equation with its data.
#[derive(Clone, Copy)]
pub struct RiccatiProblem<'a> {
    pub a: &'a dyn MatrixFunction,
    pub b: &'a dyn MatrixFunction,
    pub c: &'a dyn MatrixFunction,
    pub weighting: Weighting<'a>,
    pub kind: RiccatiKind,
}

impl<'a> RiccatiProblem<'a> {
    pub fn new(
        a: &'a dyn MatrixFunction,
        b: &'a dyn MatrixFunction,
        c: &'a dyn MatrixFunction,
        weighting: Weighting<'a>,
        kind: RiccatiKind,
    ) -> Result<Self> {
        let n = check_square(a)?;
        if b.shape().0 != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {:?}",
                b.shape()
            )));
        }
        if c.shape().1 != n {
            return Err(Error::Dimension(format!(
                "C must have {n} columns, got {:?}",
                c.shape()
            )));
        }
        let period = a.period();
        check_period("B", b, period)?;
        check_period("C", c, period)?;
        if let Weighting::Shifted(alpha) = weighting {
            check_period("alpha", alpha, period)?;
        }
        Ok(Self {
            a,
            b,
            c,
            weighting,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.shape().0
    }

    pub fn period(&self) -> f64 {
        self.a.period()
    }

    fn alpha_at(&self, t: f64) -> Option<f64> {
        match self.weighting {
            Weighting::Shifted(alpha) => Some(alpha.eval_scalar(t)),
            Weighting::Standard => None,
        }
    }

    /// `(F, R, S)` in original time for the forward form of the filter
    /// equation, or the pre-transposition data of the control equation.
    fn coefficients(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let alpha = self.alpha_at(t);
        let a = self.a.eval(t);
        let b = self.b.eval(t);
        let c = self.c.eval(t);
        let drift = match alpha {
            Some(al) => shift_diag(a, 0.5 * al),
            None => a,
        };
        let bb = &b * b.transpose();
        let cc = c.transpose() * &c;
        match (self.kind, alpha) {
            (RiccatiKind::Filter, Some(al)) => (drift, bb / al, cc * al),
            (RiccatiKind::Filter, None) => (drift, bb, cc),
            // control: F = Ãᵀ, R = CᵀC, S = BBᵀ
            (RiccatiKind::Control, _) => (drift.transpose(), cc, bb),
        }
    }

    fn grid(&self, settings: &OdeSettings) -> PeriodGrid {
        let nodes = match self.weighting {
            Weighting::Shifted(alpha) => alpha.nodes(),
            Weighting::Standard => settings.nodes,
        };
        PeriodGrid::new(self.period(), nodes, settings.substeps)
    }

    pub(crate) fn flow(&self, settings: &OdeSettings) -> Flow {
        let grid = self.grid(settings);
        let period = self.period();
        let reversed = self.kind == RiccatiKind::Control;
        let at = |s: f64| if reversed { period - s } else { s };
        let count = grid.half_samples();
        let mut drift = Vec::with_capacity(count);
        let mut forcing = Vec::with_capacity(count);
        let mut quad = Vec::with_capacity(count);
        for k in 0..count {
            let (f, r, s) = self.coefficients(at(grid.half_time(k)));
            drift.push(f);
            forcing.push(symmetrized(&r));
            quad.push(symmetrized(&s));
        }
        Flow {
            grid,
            drift,
            forcing,
            quadratic: Some(quad),
        }
    }

    /// Time derivative `Ẋ(t)` demanded by the equation at `(t, X)`.
    pub fn rhs(&self, t: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (f, r, s) = self.coefficients(t);
        let fx = &f * x;
        let flow = &fx + fx.transpose() + r - x * s * x;
        match self.kind {
            RiccatiKind::Filter => flow,
            RiccatiKind::Control => -flow,
        }
    }

    /// Successive one-period images of `x0` (in the equation's own time
    /// direction), `periods + 1` values including `x0`.
    pub fn period_iterates(
        &self,
        x0: &DMatrix<f64>,
        periods: usize,
        settings: &OdeSettings,
    ) -> Result<Vec<DMatrix<f64>>> {
        let flow = self.flow(settings);
        let mut out = vec![x0.clone()];
        let mut x = x0.clone();
        for _ in 0..periods {
            x = flow.propagate(&x, Record::Nothing)?.0;
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Stabilizing solution of the algebraic equation for the time-averaged
    /// coefficients, used to seed the periodic iteration.
    pub fn averaged_algebraic_solution(&self, settings: &OdeSettings) -> Option<DMatrix<f64>> {
        let grid = self.grid(settings);
        let n = self.dim();
        let (mut f, mut r, mut s) = (
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
        );
        for i in 0..grid.nodes {
            let (fi, ri, si) = self.coefficients(i as f64 * grid.period / grid.nodes as f64);
            f += fi;
            r += ri;
            s += si;
        }
        let scale = 1.0 / grid.nodes as f64;
        stabilizing_algebraic_riccati(
            &(f * scale),
            &symmetrized(&(r * scale)),
            &symmetrized(&(s * scale)),
        )
    }

    /// Solves the periodic equation, seeding from `seed` if given and from the
    /// time-averaged algebraic solution otherwise.
    pub fn solve(
        &self,
        options: &RiccatiOptions,
        seed: Option<&DMatrix<f64>>,
    ) -> Result<PeriodicRiccatiSolution> {
        let n = self.dim();
        let settings = options.ode;
        let flow = self.flow(&settings);
        let mut x = match seed {
            Some(s) if s.shape() == (n, n) => symmetrized(s),
            _ => self
                .averaged_algebraic_solution(&settings)
                .unwrap_or_else(|| DMatrix::zeros(n, n)),
        };
        let mut history = Vec::new();
        let mut method = RiccatiMethod::SuccessivePeriod;
        let mut newton_tried = false;
        let mut converged = false;

        while history.len() < options.max_periods {
            let next = flow.propagate(&x, Record::Nothing)?.0;
            let change = (&next - &x).norm() / (1.0 + next.norm());
            history.push(change);
            check_semidefinite(&next, history.len())?;
            x = next;
            if change <= options.tol {
                converged = true;
                break;
            }
            if !newton_tried && stalled(&history, options) {
                newton_tried = true;
                if let Ok(xn) = newton_kleinman(&flow, &x, options, &mut history) {
                    x = xn;
                    method = RiccatiMethod::NewtonKleinman;
                }
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: history.len(),
                last: history.last().copied().unwrap_or(f64::NAN),
                history,
            });
        }

        let (x_end, steps) = flow.propagate(&x, Record::Steps)?;
        let seam_residual = (&x_end - &x).norm();
        let half = flow.half_step_values(&steps);
        let quad = flow
            .quadratic
            .as_ref()
            .expect("riccati flow has a quadratic term");
        let closed: Vec<DMatrix<f64>> = half
            .iter()
            .enumerate()
            .map(|(k, xk)| &flow.drift[k] - xk * &quad[k])
            .collect();
        let closed_loop_radius = spectral_radius(&monodromy_of(flow.grid, &closed, None)?.phi);
        if !(closed_loop_radius < 1.0) {
            return Err(Error::Assumption(format!(
                "periodic Riccati solution is not stabilizing (closed-loop monodromy radius {closed_loop_radius:.6})"
            )));
        }
        let nodes: Vec<DMatrix<f64>> = steps.into_iter().step_by(settings.substeps).collect();
        let nodes = match self.kind {
            RiccatiKind::Filter => nodes,
            RiccatiKind::Control => unreverse_nodes(nodes),
        };
        let trajectory = GridTrajectory::new(self.period(), nodes)?;
        let max_residual = self.residual(&trajectory);
        Ok(PeriodicRiccatiSolution {
            trajectory,
            seam_residual,
            iterations: history.len(),
            history,
            max_residual,
            closed_loop_radius,
            method,
            kind: self.kind,
        })
    }

    /// Max over nodes of `‖Ẋ_fd − rhs‖_F / (1 + ‖rhs‖_F)`, with `Ẋ_fd` the
    /// periodic central difference across nodes.
    pub fn residual(&self, x: &GridTrajectory) -> f64 {
        let n = x.nodes();
        let dt = x.period() / n as f64;
        (0..n)
            .map(|i| {
                let fd = (x.value(i + 1) - x.value(i + n - 1)) / (2.0 * dt);
                let rhs = self.rhs(x.node_time(i), x.value(i));
                (fd - &rhs).norm() / (1.0 + rhs.norm())
            })
            .fold(0.0, f64::max)
    }
}

fn check_semidefinite(x: &DMatrix<f64>, iteration: usize) -> Result<()> {
    let min = x.clone().symmetric_eigenvalues().min();
    if min < -1e-8 * (1.0 + x.norm()) {
        return Err(Error::Assumption(format!(
            "Riccati iterate became indefinite after {iteration} periods (min eigenvalue {min:.3e}); \
             check stabilizability and detectability"
        )));
    }
    Ok(())
}

/// True when linear contraction is too slow to reach `tol` within a handful
/// of further periods.
fn stalled(history: &[f64], options: &RiccatiOptions) -> bool {
    let k = history.len();
    if k < 4 {
        return false;
    }
    let last = history[k - 1];
    let ratio = last / history[k - 2];
    if !(ratio < 1.0) {
        return k >= 8;
    }
    if ratio < 0.3 {
        return false;
    }
    (options.tol / last).ln() / ratio.ln() > 20.0
}

/// Newton–Kleinman on the periodic equation: given a stabilizing `X_k`,
/// solve `Ẋ = (F − X_k S)X + X(F − X_k S)ᵀ + R + X_k S X_k` periodically.
fn newton_kleinman(
    flow: &Flow,
    x0: &DMatrix<f64>,
    options: &RiccatiOptions,
    history: &mut Vec<f64>,
) -> Result<DMatrix<f64>> {
    let quad = flow
        .quadratic
        .as_ref()
        .expect("riccati flow has a quadratic term");
    let mut x = x0.clone();
    let mut steps = flow.propagate(&x, Record::Steps)?.1;
    let mut current: &Flow = flow;
    let mut lyap_flow;
    for iter in 0..30 {
        if history.len() >= options.max_periods {
            break;
        }
        let half = current.half_step_values(&steps);
        let drift: Vec<DMatrix<f64>> = half
            .iter()
            .enumerate()
            .map(|(k, xk)| &flow.drift[k] - xk * &quad[k])
            .collect();
        let forcing: Vec<DMatrix<f64>> = half
            .iter()
            .enumerate()
            .map(|(k, xk)| symmetrized(&(&flow.forcing[k] + xk * &quad[k] * xk)))
            .collect();
        lyap_flow = Flow {
            grid: flow.grid,
            drift,
            forcing,
            quadratic: None,
        };
        let mono = lyap_flow.monodromy()?;
        check_stable(&mono.phi, "Newton-Kleinman iterate is not stabilizing")?;
        let next = discrete_lyapunov_fixed_point(&mono.phi, &mono.g)?;
        let change = (&next - &x).norm() / (1.0 + next.norm());
        history.push(change);
        x = next;
        if change <= options.tol || iter == 29 {
            return Ok(x);
        }
        steps = lyap_flow.propagate(&x, Record::Steps)?.1;
        current = &lyap_flow;
    }
    Ok(x)
}

/// Stabilizing solution of `F X + X Fᵀ + R − X S X = 0` (so that `F − XS` is
/// Hurwitz) via the matrix sign function of the Hamiltonian.
pub fn stabilizing_algebraic_riccati(
    f: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    // AᵀX + XA − XSX + Q = 0 with A = Fᵀ, Q = R
    let a = f.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-r));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let det = z.determinant().abs();
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        let c = det.powf(-1.0 / (2 * n) as f64);
        let zc = &z * c;
        let inv = zc.clone().try_inverse()?;
        let next = (zc + inv) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-12 * z.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = symmetrized(&lhs.svd(true, true).solve(&rhs, 1e-14).ok()?);
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let residual = f * &x + &x * f.transpose() + r - &x * s * &x;
    if residual.norm() > 1e-6 * (1.0 + x.norm() * (1.0 + f.norm())) {
        return None;
    }
    let closed = f - &x * s;
    if closed.complex_eigenvalues().iter().any(|l| l.re >= 0.0) {
        return None;
    }
    Some(x)
}

/// Shifted control Riccati equation, periodic stabilizing solution `Q(t)`.
pub fn solve_control_riccati(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
) -> Result<PeriodicRiccatiSolution> {
    RiccatiProblem::new(a, b, c, Weighting::Shifted(alpha), RiccatiKind::Control)?
        .solve(options, None)
}

/// Shifted filter Riccati equation, periodic stabilizing solution `P(t)`.
pub fn solve_filter_riccati(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
) -> Result<PeriodicRiccatiSolution> {
    RiccatiProblem::new(a, b, c, Weighting::Shifted(alpha), RiccatiKind::Filter)?
        .solve(options, None)
}

/// Periodic LQR: `−Q̇ = QA + AᵀQ + CᵀC − QBBᵀQ` (state weight `CᵀC`, unit
/// input weight).
pub fn solve_lqr_riccati(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    options: &RiccatiOptions,
) -> Result<PeriodicRiccatiSolution> {
    RiccatiProblem::new(a, b, c, Weighting::Standard, RiccatiKind::Control)?.solve(options, None)
}

/// Periodic Kalman filter: `Ṗ = AP + PAᵀ + BBᵀ − PCᵀCP` (process noise
/// `BBᵀ`, unit measurement noise).
pub fn solve_kalman_riccati(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    options: &RiccatiOptions,
) -> Result<PeriodicRiccatiSolution> {
    RiccatiProblem::new(a, b, c, Weighting::Standard, RiccatiKind::Filter)?.solve(options, None)
}

/// Max relative residual of a trajectory in the given Riccati equation.
pub fn riccati_residual(
    x: &GridTrajectory,
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    weighting: Weighting<'_>,
    kind: RiccatiKind,
) -> Result<f64> {
    let problem = RiccatiProblem::new(a, b, c, weighting, kind)?;
    if x.shape() != (problem.dim(), problem.dim()) {
        return Err(Error::Dimension(format!(
            "solution is {:?}, system has {} states",
            x.shape(),
            problem.dim()
        )));
    }
    Ok(problem.residual(x))
}
