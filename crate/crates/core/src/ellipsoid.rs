//! Size of minimal inescapable ellipsoids and the fixed-point iteration for
//! the optimal `α(t)`.
//!
//! For a fixed `α`, the minimal ellipsoid `P(t)` has size
//! `(1/T)∫ trace(C P Cᵀ) dt`, which equals `(1/T)∫ trace(BᵀQB)/α dt` with the
//! dual matrix `Q(t)`. The optimal profile satisfies
//! `α(t)² · trace(Q P) = trace(BᵀQB)` pointwise, and iterating that identity
//! as an update decreases the size monotonically.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lyapunov::{solve_periodic_p, solve_periodic_q, PeriodicLyapunovSolution};
use crate::ode::OdeSettings;
use crate::signal::{AlphaProfile, GridTrajectory, MatrixFunction};

/// Lower clamp applied to `α` during iteration.
pub const ALPHA_FLOOR: f64 = 1e-8;

/// `(1/T)∫₀ᵀ trace(C P Cᵀ) dt`, integrated over the stored step values.
pub fn size_primal(c: &dyn MatrixFunction, p: &PeriodicLyapunovSolution) -> Result<f64> {
    let (_, n) = c.shape();
    if p.trajectory.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "C has {n} columns but P is {:?}",
            p.trajectory.shape()
        )));
    }
    Ok(p.mean(|t, x| {
        let ct = c.eval(t);
        (&ct * x * ct.transpose()).trace()
    }))
}

/// `(1/T)∫₀ᵀ trace(BᵀQB)/α dt`, integrated over the stored step values with
/// the `α` the solution was computed for.
pub fn size_dual(b: &dyn MatrixFunction, q: &PeriodicLyapunovSolution) -> Result<f64> {
    let (n, _) = b.shape();
    if q.trajectory.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "B has {n} rows but Q is {:?}",
            q.trajectory.shape()
        )));
    }
    Ok(q.mean(|t, x| {
        let bt = b.eval(t);
        (bt.transpose() * x * &bt).trace() / q.alpha.eval_scalar(t)
    }))
}

/// `(trace(BᵀQB), trace(QP))` at every node.
fn node_traces_pq(
    p: &PeriodicLyapunovSolution,
    q: &PeriodicLyapunovSolution,
    b: &dyn MatrixFunction,
) -> Result<Vec<(f64, f64)>> {
    let (pt, qt) = (&p.trajectory, &q.trajectory);
    if pt.nodes() != qt.nodes() || pt.shape() != qt.shape() || b.shape().0 != pt.shape().0 {
        return Err(Error::Dimension(format!(
            "P {:?} on {} nodes, Q {:?} on {} nodes, B {:?}",
            pt.shape(),
            pt.nodes(),
            qt.shape(),
            qt.nodes(),
            b.shape()
        )));
    }
    Ok((0..pt.nodes())
        .map(|i| {
            let bi = b.eval(pt.node_time(i));
            let bqb = (bi.transpose() * qt.value(i) * &bi).trace();
            let qp = (qt.value(i) * pt.value(i)).trace();
            (bqb, qp)
        })
        .collect())
}

/// Pointwise update `α(t) = sqrt(trace(BᵀQB) / trace(QP))` at the nodes.
pub fn alpha_update(
    p: &PeriodicLyapunovSolution,
    q: &PeriodicLyapunovSolution,
    b: &dyn MatrixFunction,
) -> Result<AlphaProfile> {
    let mut values = Vec::with_capacity(p.alpha.nodes());
    for (i, (bqb, qp)) in node_traces_pq(p, q, b)?.into_iter().enumerate() {
        if !(qp > 0.0) {
            return Err(Error::Degenerate(format!(
                "trace(QP) = {qp:e} at t = {}",
                p.alpha.node_time(i)
            )));
        }
        values.push((bqb.max(0.0) / qp).sqrt());
    }
    AlphaProfile::from_values(p.alpha.period(), values)
}

/// Same update, clamped below at [`ALPHA_FLOOR`]; also reports whether the
/// clamp was active anywhere.
pub(crate) fn alpha_update_clamped(
    p: &PeriodicLyapunovSolution,
    q: &PeriodicLyapunovSolution,
    b: &dyn MatrixFunction,
) -> Result<(AlphaProfile, bool)> {
    let mut clamped = false;
    let mut values = Vec::with_capacity(p.alpha.nodes());
    for (i, (bqb, qp)) in node_traces_pq(p, q, b)?.into_iter().enumerate() {
        if !(qp > 0.0) {
            return Err(Error::Degenerate(format!(
                "trace(QP) = {qp:e} at t = {}",
                p.alpha.node_time(i)
            )));
        }
        let a = (bqb.max(0.0) / qp).sqrt();
        if !(a >= ALPHA_FLOOR) {
            clamped = true;
        }
        values.push(a.max(ALPHA_FLOOR));
    }
    Ok((
        AlphaProfile::from_values(p.alpha.period(), values)?,
        clamped,
    ))
}

/// `max_t |α²·trace(QP) − trace(BᵀQB)| / (1 + trace(BᵀQB))` over the nodes,
/// with `α` the profile `P` and `Q` were computed for.
pub fn stationarity_residual(
    p: &PeriodicLyapunovSolution,
    q: &PeriodicLyapunovSolution,
    b: &dyn MatrixFunction,
) -> Result<f64> {
    let alpha = &p.alpha;
    Ok(node_traces_pq(p, q, b)?
        .into_iter()
        .enumerate()
        .map(|(i, (bqb, qp))| {
            let a = alpha.value(i);
            (a * a * qp - bqb).abs() / (1.0 + bqb)
        })
        .fold(0.0, f64::max))
}

/// The minimal ellipsoid for one `α` together with its size.
#[derive(Clone, Debug)]
pub struct EllipsoidFamily {
    pub p: PeriodicLyapunovSolution,
    pub alpha: AlphaProfile,
    pub size: f64,
}

impl EllipsoidFamily {
    pub fn new(
        a: &dyn MatrixFunction,
        b: &dyn MatrixFunction,
        c: &dyn MatrixFunction,
        alpha: &AlphaProfile,
        settings: &OdeSettings,
    ) -> Result<Self> {
        let p = solve_periodic_p(a, b, alpha, settings)?;
        let size = size_primal(c, &p)?;
        Ok(Self {
            p,
            alpha: alpha.clone(),
            size,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct AlphaIterationHistory {
    pub iterates: Vec<AlphaProfile>,
    pub sizes: Vec<f64>,
    /// Relative sup-norm step after each update.
    pub steps: Vec<f64>,
    pub converged: bool,
    pub final_step: f64,
    /// The lower clamp was active in the final profile.
    pub clamped: bool,
    /// Number of relaxation halvings taken after a size increase or an
    /// inadmissible update.
    pub damped: usize,
    /// No relaxed step decreased the size; the iteration stopped early.
    pub stalled: bool,
}

impl AlphaIterationHistory {
    /// Largest per-step increase of the size beyond `1e-8·(1 + size)` slack,
    /// or zero for a non-increasing history.
    pub fn worst_increase(&self) -> f64 {
        self.sizes
            .windows(2)
            .map(|w| w[1] - w[0] - 1e-8 * (1.0 + w[0]))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaOptions {
    /// Sup-norm step tolerance, relative to `1 + sup α`.
    pub tol: f64,
    pub max_iter: usize,
    pub ode: OdeSettings,
    pub relaxation: Relaxation,
}

/// Step-length rule of the `α` iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Relaxation {
    /// Full update steps; halved only after a size increase or an
    /// inadmissible profile.
    Plain,
    /// Secant (Aitken) estimate of the step length from the last two
    /// residuals, with the same halving safeguard.
    #[default]
    Aitken,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            ode: OdeSettings::default(),
            relaxation: Relaxation::default(),
        }
    }
}

/// Result of [`optimize_alpha_analysis`].
#[derive(Clone, Debug)]
pub struct AlphaOptimization {
    pub alpha: AlphaProfile,
    pub history: AlphaIterationHistory,
    pub p: PeriodicLyapunovSolution,
    pub q: PeriodicLyapunovSolution,
    pub size: f64,
    pub stationarity: f64,
}

fn solve_pair(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    settings: &OdeSettings,
) -> Result<(PeriodicLyapunovSolution, PeriodicLyapunovSolution)> {
    let (p, q) = rayon::join(
        || solve_periodic_p(a, b, alpha, settings),
        || solve_periodic_q(a, c, alpha, settings),
    );
    Ok((p?, q?))
}

/// Number of step halvings tried when an `α` update increases the size or
/// leaves the admissible set.
pub const MAX_HALVINGS: usize = 5;

/// One evaluated point of an `α` iteration.
pub(crate) trait AlphaPoint {
    fn alpha(&self) -> &AlphaProfile;
    fn size(&self) -> f64;
    /// The undamped pointwise update.
    fn update(&self) -> Result<(AlphaProfile, bool)>;
}

/// Bounds on the relaxation factor chosen by the secant rule.
const THETA_MIN: f64 = 1e-3;
const THETA_MAX: f64 = 4.0;

/// Relaxed fixed-point iteration `α ← α + θ(update(α) − α)`.
///
/// With [`Relaxation::Aitken`], `θ` is re-estimated every iteration from the
/// last two residuals `r = update(α) − α`, which damps the oscillating modes
/// the plain update can have near the optimum; [`Relaxation::Plain`] starts
/// every iteration at `θ = 1`. A relaxed step that raises the size by more
/// than `1e-8·(1 + size)` or leaves the admissible set is halved, at most
/// [`MAX_HALVINGS`] times. Convergence is tested on the undamped step.
pub(crate) fn relaxed_alpha_iteration<S: AlphaPoint>(
    start: S,
    tol: f64,
    max_iter: usize,
    relaxation: Relaxation,
    mut evaluate: impl FnMut(&AlphaProfile, &S) -> Result<S>,
) -> Result<(S, AlphaIterationHistory)> {
    let mut cur = start;
    let mut history = AlphaIterationHistory::default();
    history.iterates.push(cur.alpha().clone());
    history.sizes.push(cur.size());
    let mut theta = 1.0_f64;
    let mut previous_residual: Option<Vec<f64>> = None;
    for iteration in 1..=max_iter.max(1) {
        let (next, clamped) = cur.update().map_err(|e| e.at_iteration(iteration))?;
        let residual: Vec<f64> = next
            .values()
            .iter()
            .zip(cur.alpha().values())
            .map(|(n, a)| n - a)
            .collect();
        if relaxation == Relaxation::Plain {
            theta = 1.0;
        } else if let Some(prev) = &previous_residual {
            let (mut num, mut den) = (0.0, 0.0);
            for (r, p) in residual.iter().zip(prev) {
                let d = r - p;
                num += p * d;
                den += d * d;
            }
            if den > 0.0 {
                theta = (-theta * num / den).clamp(THETA_MIN, THETA_MAX);
            }
        }
        previous_residual = Some(residual);
        let step = alpha_step(cur.alpha(), &next);
        history.steps.push(step);
        history.final_step = step;
        history.clamped = clamped;
        if step <= tol {
            history.converged = true;
            break;
        }
        if iteration == max_iter.max(1) {
            break;
        }
        let slack = 1e-8 * (1.0 + cur.size());
        let mut accepted = None;
        let mut last_error = None;
        for attempt in 0..=MAX_HALVINGS {
            let trial = cur.alpha().lerp(&next, theta)?;
            match evaluate(&trial, &cur) {
                Ok(point) if point.size() <= cur.size() + slack => {
                    accepted = Some(point);
                    break;
                }
                Ok(_) => last_error = None,
                Err(e) => last_error = Some(e),
            }
            if attempt < MAX_HALVINGS {
                theta *= 0.5;
                history.damped += 1;
            }
        }
        match (accepted, last_error) {
            (Some(point), _) => {
                cur = point;
                history.iterates.push(cur.alpha().clone());
                history.sizes.push(cur.size());
            }
            (None, Some(e)) => return Err(e.at_iteration(iteration)),
            (None, None) => {
                history.stalled = true;
                break;
            }
        }
    }
    Ok((cur, history))
}

/// Relative sup-norm distance used as the stopping metric.
pub(crate) fn alpha_step(prev: &AlphaProfile, next: &AlphaProfile) -> f64 {
    prev.sup_distance(next) / (1.0 + prev.sup())
}

/// Fixed-point iteration for the optimal `α(t)` of the analysis problem.
///
/// Returns the last profile whose `P`, `Q` were computed; when the iteration
/// stops on `max_iter` the result carries `converged = false`.
pub fn optimize_alpha_analysis(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha0: &AlphaProfile,
    options: &AlphaOptions,
) -> Result<AlphaOptimization> {
    struct Point<'a> {
        alpha: AlphaProfile,
        p: PeriodicLyapunovSolution,
        q: PeriodicLyapunovSolution,
        size: f64,
        b: &'a dyn MatrixFunction,
    }
    impl AlphaPoint for Point<'_> {
        fn alpha(&self) -> &AlphaProfile {
            &self.alpha
        }
        fn size(&self) -> f64 {
            self.size
        }
        fn update(&self) -> Result<(AlphaProfile, bool)> {
            alpha_update_clamped(&self.p, &self.q, self.b)
        }
    }
    let evaluate = |alpha: &AlphaProfile| -> Result<Point> {
        let (p, q) = solve_pair(a, b, c, alpha, &options.ode)?;
        let size = size_primal(c, &p)?;
        Ok(Point {
            alpha: alpha.clone(),
            p,
            q,
            size,
            b,
        })
    };
    let start = evaluate(alpha0).map_err(|e| e.at_iteration(0))?;
    let (point, history) = relaxed_alpha_iteration(
        start,
        options.tol,
        options.max_iter,
        options.relaxation,
        |alpha, _| evaluate(alpha),
    )?;
    let stationarity = stationarity_residual(&point.p, &point.q, b)?;
    Ok(AlphaOptimization {
        alpha: point.alpha,
        history,
        p: point.p,
        q: point.q,
        size: point.size,
        stationarity,
    })
}

/// Sizes at `α1`, `α2` and their midpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityProbe {
    pub s1: f64,
    pub s2: f64,
    pub s_mid: f64,
}

impl ConvexityProbe {
    /// `s_mid − (s1 + s2)/2`; non-positive for a convex size functional.
    pub fn gap(&self) -> f64 {
        self.s_mid - 0.5 * (self.s1 + self.s2)
    }
}

pub fn convexity_probe(
    a: &dyn MatrixFunction,
    b: &dyn MatrixFunction,
    c: &dyn MatrixFunction,
    alpha1: &AlphaProfile,
    alpha2: &AlphaProfile,
    settings: &OdeSettings,
) -> Result<ConvexityProbe> {
    let mid = alpha1.midpoint(alpha2)?;
    let size =
        |alpha: &AlphaProfile| EllipsoidFamily::new(a, b, c, alpha, settings).map(|f| f.size);
    Ok(ConvexityProbe {
        s1: size(alpha1)?,
        s2: size(alpha2)?,
        s_mid: size(&mid)?,
    })
}

/// `trace(X)` per node of a square trajectory.
pub fn node_traces(x: &GridTrajectory) -> Vec<f64> {
    x.values().iter().map(DMatrix::trace).collect()
}
