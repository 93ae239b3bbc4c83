//! Gain synthesis for periodic plants
//!
//! ```text
//!   ẋ = A x + B₂ u + B₁ w
//!   y = C₁ x + D₁ w
//!   z = C₂ x + D₂ u
//! ```
//!
//! For a fixed `α(t)` the optimal state-feedback gain is `K = −B₂ᵀQ` with `Q`
//! from the shifted control Riccati equation, the optimal observer gain is
//! `L = −αPC₁ᵀ` with `P` from the shifted filter Riccati equation, and the
//! output-feedback optimum uses both independently. [`optimize_controller`]
//! then iterates the `α` update on the assembled closed loop.

use nalgebra::DMatrix;

use crate::ellipsoid::{
    alpha_update_clamped, optimize_alpha_analysis, relaxed_alpha_iteration, size_primal,
    stationarity_residual, AlphaIterationHistory, AlphaOptimization, AlphaOptions, AlphaPoint,
    Relaxation,
};
use crate::error::{Error, Result};
use crate::lyapunov::{solve_periodic_p, solve_periodic_q, PeriodicLyapunovSolution};
use crate::ode::{spectral_radius, state_transition, OdeSettings};
use crate::riccati::{
    solve_kalman_riccati, solve_lqr_riccati, PeriodicRiccatiSolution, RiccatiKind, RiccatiOptions,
    RiccatiProblem, Weighting,
};
use crate::signal::{AlphaProfile, GridTrajectory, MatrixFunction, PeriodicMatrixSignal};

/// Tolerance on the normalization identities `D₁[B₁ᵀ D₁ᵀ] = [0 I]` and
/// `D₂ᵀ[C₂ D₂] = [0 I]`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Plant data. The control channel (`B₂`, `C₂`, `D₂`) and the measurement
/// channel (`C₁`, `D₁`) are optional so that state-feedback-only and
/// observer-only problems can be stated without dummy matrices.
#[derive(Clone, Debug)]
pub struct LtvPlant {
    pub a: PeriodicMatrixSignal,
    pub b1: PeriodicMatrixSignal,
    pub b2: Option<PeriodicMatrixSignal>,
    pub c1: Option<PeriodicMatrixSignal>,
    pub c2: Option<PeriodicMatrixSignal>,
    pub d1: Option<PeriodicMatrixSignal>,
    pub d2: Option<PeriodicMatrixSignal>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantDims {
    pub n: usize,
    pub m_w: usize,
    pub m_u: Option<usize>,
    pub p_y: Option<usize>,
    pub p_z: Option<usize>,
}

fn expect_shape(name: &str, m: &PeriodicMatrixSignal, rows: usize, cols: usize) -> Result<()> {
    if (m.rows(), m.cols()) != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn expect_period(name: &str, m: &PeriodicMatrixSignal, period: f64) -> Result<()> {
    if (m.period() - period).abs() > 1e-12 * period {
        return Err(Error::Dimension(format!(
            "{name} has period {}, plant period is {period}",
            m.period()
        )));
    }
    Ok(())
}

impl LtvPlant {
    pub fn new(a: PeriodicMatrixSignal, b1: PeriodicMatrixSignal) -> Result<Self> {
        let n = a.rows();
        expect_shape("A", &a, n, n)?;
        expect_shape("B1", &b1, n, b1.cols())?;
        expect_period("B1", &b1, a.period())?;
        Ok(Self {
            a,
            b1,
            b2: None,
            c1: None,
            c2: None,
            d1: None,
            d2: None,
        })
    }

    /// Adds the control input `B₂` and regulated output `z = C₂x + D₂u`.
    pub fn with_control(
        mut self,
        b2: PeriodicMatrixSignal,
        c2: PeriodicMatrixSignal,
        d2: PeriodicMatrixSignal,
    ) -> Result<Self> {
        let n = self.n();
        let (m_u, p_z) = (b2.cols(), c2.rows());
        expect_shape("B2", &b2, n, m_u)?;
        expect_shape("C2", &c2, p_z, n)?;
        expect_shape("D2", &d2, p_z, m_u)?;
        for (name, m) in [("B2", &b2), ("C2", &c2), ("D2", &d2)] {
            expect_period(name, m, self.period())?;
        }
        self.b2 = Some(b2);
        self.c2 = Some(c2);
        self.d2 = Some(d2);
        Ok(self)
    }

    /// Adds the measurement `y = C₁x + D₁w`.
    pub fn with_measurement(
        mut self,
        c1: PeriodicMatrixSignal,
        d1: PeriodicMatrixSignal,
    ) -> Result<Self> {
        let (n, m_w, p_y) = (self.n(), self.b1.cols(), c1.rows());
        expect_shape("C1", &c1, p_y, n)?;
        expect_shape("D1", &d1, p_y, m_w)?;
        for (name, m) in [("C1", &c1), ("D1", &d1)] {
            expect_period(name, m, self.period())?;
        }
        self.c1 = Some(c1);
        self.d1 = Some(d1);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn period(&self) -> f64 {
        self.a.period()
    }

    pub fn dims(&self) -> PlantDims {
        PlantDims {
            n: self.n(),
            m_w: self.b1.cols(),
            m_u: self.b2.as_ref().map(|m| m.cols()),
            p_y: self.c1.as_ref().map(|m| m.rows()),
            p_z: self.c2.as_ref().map(|m| m.rows()),
        }
    }

    fn control(
        &self,
    ) -> Result<(
        &PeriodicMatrixSignal,
        &PeriodicMatrixSignal,
        &PeriodicMatrixSignal,
    )> {
        match (&self.b2, &self.c2, &self.d2) {
            (Some(b2), Some(c2), Some(d2)) => Ok((b2, c2, d2)),
            _ => Err(Error::InvalidInput(format!(
                "missing matrix {}: the control channel (B2, C2, D2) is required",
                [
                    ("B2", self.b2.is_none()),
                    ("C2", self.c2.is_none()),
                    ("D2", self.d2.is_none())
                ]
                .iter()
                .filter(|(_, missing)| *missing)
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
            ))),
        }
    }

    fn measurement(&self) -> Result<(&PeriodicMatrixSignal, &PeriodicMatrixSignal)> {
        match (&self.c1, &self.d1) {
            (Some(c1), Some(d1)) => Ok((c1, d1)),
            _ => Err(Error::InvalidInput(format!(
                "missing matrix {}: the measurement channel (C1, D1) is required",
                [("C1", self.c1.is_none()), ("D1", self.d1.is_none())]
                    .iter()
                    .filter(|(_, missing)| *missing)
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    /// Checks `D₂ᵀ[C₂ D₂] = [0 I]` at every node.
    pub fn check_control_normalization(&self, nodes: usize) -> Result<()> {
        let (_, c2, d2) = self.control()?;
        for i in 0..nodes {
            let t = i as f64 * self.period() / nodes as f64;
            let (c, d) = (c2.eval(t), d2.eval(t));
            let cross = d.transpose() * &c;
            let gram = d.transpose() * &d;
            let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
            if cross.amax() > NORMALIZATION_TOL || (gram - eye).amax() > NORMALIZATION_TOL {
                return Err(Error::Assumption(format!(
                    "D2ᵀ[C2 D2] = [0 I] violated at t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Checks `D₁[B₁ᵀ D₁ᵀ] = [0 I]` at every node.
    pub fn check_measurement_normalization(&self, nodes: usize) -> Result<()> {
        let (_, d1) = self.measurement()?;
        for i in 0..nodes {
            let t = i as f64 * self.period() / nodes as f64;
            let (b, d) = (self.b1.eval(t), d1.eval(t));
            let cross = &d * b.transpose();
            let gram = &d * d.transpose();
            let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
            if cross.amax() > NORMALIZATION_TOL || (gram - eye).amax() > NORMALIZATION_TOL {
                return Err(Error::Assumption(format!(
                    "D1[B1ᵀ D1ᵀ] = [0 I] violated at t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Presence and normalization checks for a design mode.
    pub fn validate_for(&self, mode: DesignMode, nodes: usize) -> Result<()> {
        match mode {
            DesignMode::StateFeedback => self.check_control_normalization(nodes),
            DesignMode::Observer => self.check_measurement_normalization(nodes),
            DesignMode::OutputFeedback => {
                self.check_control_normalization(nodes)?;
                self.check_measurement_normalization(nodes)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignMode {
    StateFeedback,
    Observer,
    OutputFeedback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    StateFeedback,
    Observer,
    OutputFeedback,
    Baseline,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::StateFeedback => "state-feedback",
            Provenance::Observer => "observer",
            Provenance::OutputFeedback => "output-feedback",
            Provenance::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GainSchedule {
    /// `u = K(t) x` (or `K(t) x̂`), `m_u × n`.
    pub k: Option<GridTrajectory>,
    /// Observer injection `L(t)`, `n × p_y`.
    pub l: Option<GridTrajectory>,
    pub alpha: Option<AlphaProfile>,
    pub provenance: Provenance,
    /// Weighting `C_w` of the estimation error for observer loops.
    pub error_weight: Option<PeriodicMatrixSignal>,
}

impl GainSchedule {
    pub fn nodes(&self) -> Option<usize> {
        self.k
            .as_ref()
            .or(self.l.as_ref())
            .map(GridTrajectory::nodes)
    }
}

/// `K(t) = −B(t)ᵀQ(t)` on the nodes of `Q`.
pub fn sf_gain(q: &PeriodicRiccatiSolution, b: &dyn MatrixFunction) -> Result<GridTrajectory> {
    gain_from(&q.trajectory, b)
}

fn gain_from(q: &GridTrajectory, b: &dyn MatrixFunction) -> Result<GridTrajectory> {
    if b.shape().0 != q.shape().0 {
        return Err(Error::Dimension(format!(
            "B is {:?} but Q is {:?}",
            b.shape(),
            q.shape()
        )));
    }
    Ok(q.map(|i, qi| -(b.eval(q.node_time(i)).transpose() * qi)))
}

/// `L(t) = −α(t)·P(t)·C(t)ᵀ` on the nodes of `P`.
pub fn obs_gain(
    p: &PeriodicRiccatiSolution,
    c: &dyn MatrixFunction,
    alpha: &AlphaProfile,
) -> Result<GridTrajectory> {
    observer_gain_from(&p.trajectory, c, |i| alpha.value(i))
}

fn observer_gain_from(
    p: &GridTrajectory,
    c: &dyn MatrixFunction,
    weight: impl Fn(usize) -> f64,
) -> Result<GridTrajectory> {
    if c.shape().1 != p.shape().0 {
        return Err(Error::Dimension(format!(
            "C is {:?} but P is {:?}",
            c.shape(),
            p.shape()
        )));
    }
    Ok(p.map(|i, pi| -(pi * c.eval(p.node_time(i)).transpose()) * weight(i)))
}

/// Closed-loop matrices sampled on the gain grid.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub a: GridTrajectory,
    pub b: GridTrajectory,
    pub c: GridTrajectory,
}

impl ClosedLoop {
    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    pub fn period(&self) -> f64 {
        self.a.period()
    }

    /// Spectral radius of the one-period state transition of `A_cl`.
    pub fn monodromy_radius(&self, settings: &OdeSettings) -> Result<f64> {
        let settings = settings.with_nodes(self.a.nodes());
        let phi = state_transition(&self.a, None, 0.0, self.period(), &settings)?;
        Ok(spectral_radius(&phi))
    }
}

fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(c);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

/// Assembles the closed loop on the gain grid.
///
/// * state feedback: `(A + B₂K, B₁, C₂ + D₂K)`
/// * observer error: `(A + LC₁, B₁ + LD₁, C_w)`
/// * output feedback, in `(x, e = x − x̂)` coordinates:
///   `A_cl = [[A + B₂K, −B₂K], [0, A + LC₁]]`, `B_cl = [[B₁], [B₁ + LD₁]]`,
///   `C_cl = [C₂ + D₂K, −D₂K]`.
pub fn closed_loop(plant: &LtvPlant, gains: &GainSchedule) -> Result<ClosedLoop> {
    let period = plant.period();
    let n = plant.n();
    let kind = match (&gains.k, &gains.l) {
        (Some(_), None) => Provenance::StateFeedback,
        (None, Some(_)) => Provenance::Observer,
        (Some(_), Some(_)) => Provenance::OutputFeedback,
        (None, None) => {
            return Err(Error::InvalidInput(
                "gain schedule holds neither K nor L".into(),
            ))
        }
    };
    let nodes = gains.nodes().expect("at least one gain present");
    let time = |i: usize| i as f64 * period / nodes as f64;

    let mut a_cl = Vec::with_capacity(nodes);
    let mut b_cl = Vec::with_capacity(nodes);
    let mut c_cl = Vec::with_capacity(nodes);
    match kind {
        Provenance::StateFeedback | Provenance::Baseline => {
            let (b2, c2, d2) = plant.control()?;
            let k = gains.k.as_ref().unwrap();
            check_gain("K", k, (b2.cols(), n), period)?;
            for i in 0..nodes {
                let t = time(i);
                let ki = k.value(i);
                a_cl.push(plant.a.eval(t) + b2.eval(t) * ki);
                b_cl.push(plant.b1.eval(t));
                c_cl.push(c2.eval(t) + d2.eval(t) * ki);
            }
        }
        Provenance::Observer => {
            let (c1, d1) = plant.measurement()?;
            let l = gains.l.as_ref().unwrap();
            check_gain("L", l, (n, c1.rows()), period)?;
            let identity = PeriodicMatrixSignal::identity(n, period);
            let cw = gains.error_weight.as_ref().unwrap_or(&identity);
            if cw.cols() != n {
                return Err(Error::Dimension(format!(
                    "error weight must have {n} columns, got {}",
                    cw.cols()
                )));
            }
            for i in 0..nodes {
                let t = time(i);
                let li = l.value(i);
                a_cl.push(plant.a.eval(t) + li * c1.eval(t));
                b_cl.push(plant.b1.eval(t) + li * d1.eval(t));
                c_cl.push(cw.eval(t));
            }
        }
        Provenance::OutputFeedback => {
            let (b2, c2, d2) = plant.control()?;
            let (c1, d1) = plant.measurement()?;
            let k = gains.k.as_ref().unwrap();
            let l = gains.l.as_ref().unwrap();
            check_gain("K", k, (b2.cols(), n), period)?;
            check_gain("L", l, (n, c1.rows()), period)?;
            if l.nodes() != nodes {
                return Err(Error::Dimension("K and L live on different grids".into()));
            }
            for i in 0..nodes {
                let t = time(i);
                let (ki, li) = (k.value(i), l.value(i));
                let a = plant.a.eval(t);
                let b1 = plant.b1.eval(t);
                let b2k = b2.eval(t) * ki;
                let d2k = d2.eval(t) * ki;
                a_cl.push(block2x2(
                    &(&a + &b2k),
                    &(-&b2k),
                    &DMatrix::zeros(n, n),
                    &(&a + li * c1.eval(t)),
                ));
                let mut b = DMatrix::zeros(2 * n, b1.ncols());
                b.view_mut((0, 0), (n, b1.ncols())).copy_from(&b1);
                b.view_mut((n, 0), (n, b1.ncols()))
                    .copy_from(&(&b1 + li * d1.eval(t)));
                b_cl.push(b);
                let cz = c2.eval(t) + &d2k;
                let mut c = DMatrix::zeros(cz.nrows(), 2 * n);
                c.view_mut((0, 0), (cz.nrows(), n)).copy_from(&cz);
                c.view_mut((0, n), (cz.nrows(), n)).copy_from(&(-d2k));
                c_cl.push(c);
            }
        }
    }
    Ok(ClosedLoop {
        a: GridTrajectory::new(period, a_cl)?,
        b: GridTrajectory::new(period, b_cl)?,
        c: GridTrajectory::new(period, c_cl)?,
    })
}

fn check_gain(name: &str, g: &GridTrajectory, shape: (usize, usize), period: f64) -> Result<()> {
    if g.shape() != shape {
        return Err(Error::Dimension(format!(
            "{name} must be {}x{}, got {:?}",
            shape.0,
            shape.1,
            g.shape()
        )));
    }
    if (g.period() - period).abs() > 1e-12 * period {
        return Err(Error::Dimension(format!(
            "{name} period differs from the plant's"
        )));
    }
    Ok(())
}

/// Options for the design-mode iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignOptions {
    /// Sup-norm `α` step tolerance relative to `1 + sup α`.
    pub tol: f64,
    pub max_iter: usize,
    pub riccati: RiccatiOptions,
    pub relaxation: Relaxation,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            riccati: RiccatiOptions::default(),
            relaxation: Relaxation::default(),
        }
    }
}

impl DesignOptions {
    pub fn with_ode(ode: OdeSettings) -> Self {
        Self {
            riccati: RiccatiOptions::with_ode(ode),
            ..Self::default()
        }
    }

    pub fn ode(&self) -> OdeSettings {
        self.riccati.ode
    }
}

fn control_riccati(
    plant: &LtvPlant,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
    seed: Option<&DMatrix<f64>>,
) -> Result<PeriodicRiccatiSolution> {
    let (b2, c2, _) = plant.control()?;
    RiccatiProblem::new(
        &plant.a,
        b2,
        c2,
        Weighting::Shifted(alpha),
        RiccatiKind::Control,
    )?
    .solve(options, seed)
}

fn filter_riccati(
    plant: &LtvPlant,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
    seed: Option<&DMatrix<f64>>,
) -> Result<PeriodicRiccatiSolution> {
    let (c1, _) = plant.measurement()?;
    RiccatiProblem::new(
        &plant.a,
        &plant.b1,
        c1,
        Weighting::Shifted(alpha),
        RiccatiKind::Filter,
    )?
    .solve(options, seed)
}

/// Optimal state feedback for a fixed `α`.
pub fn synth_state_feedback(
    plant: &LtvPlant,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
) -> Result<GainSchedule> {
    plant.check_control_normalization(alpha.nodes())?;
    let q = control_riccati(plant, alpha, options, None)?;
    Ok(GainSchedule {
        k: Some(sf_gain(&q, plant.b2.as_ref().unwrap())?),
        l: None,
        alpha: Some(alpha.clone()),
        provenance: Provenance::StateFeedback,
        error_weight: None,
    })
}

/// Optimal observer for a fixed `α`; `error_weight` is `C_w` in
/// `z = C_w (x − x̂)`.
pub fn synth_observer(
    plant: &LtvPlant,
    error_weight: &PeriodicMatrixSignal,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
) -> Result<GainSchedule> {
    plant.check_measurement_normalization(alpha.nodes())?;
    let p = filter_riccati(plant, alpha, options, None)?;
    Ok(GainSchedule {
        k: None,
        l: Some(obs_gain(&p, plant.c1.as_ref().unwrap(), alpha)?),
        alpha: Some(alpha.clone()),
        provenance: Provenance::Observer,
        error_weight: Some(error_weight.clone()),
    })
}

/// Optimal observer-based output feedback for a fixed `α`: the control and
/// filter branches are solved independently.
pub fn synth_output_feedback(
    plant: &LtvPlant,
    alpha: &AlphaProfile,
    options: &RiccatiOptions,
) -> Result<GainSchedule> {
    plant.check_control_normalization(alpha.nodes())?;
    plant.check_measurement_normalization(alpha.nodes())?;
    let (q, p) = rayon::join(
        || control_riccati(plant, alpha, options, None),
        || filter_riccati(plant, alpha, options, None),
    );
    let (q, p) = (q?, p?);
    Ok(GainSchedule {
        k: Some(sf_gain(&q, plant.b2.as_ref().unwrap())?),
        l: Some(obs_gain(&p, plant.c1.as_ref().unwrap(), alpha)?),
        alpha: Some(alpha.clone()),
        provenance: Provenance::OutputFeedback,
        error_weight: None,
    })
}

/// Output of [`optimize_controller`].
#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub mode: DesignMode,
    pub gains: GainSchedule,
    pub alpha: AlphaProfile,
    pub size: f64,
    pub history: AlphaIterationHistory,
    pub closed_loop: ClosedLoop,
    /// Minimal ellipsoid of the closed loop at the reported `α`.
    pub p_cl: PeriodicLyapunovSolution,
    pub q_cl: PeriodicLyapunovSolution,
    pub stationarity: f64,
    pub converged: bool,
}

impl AlphaPoint for DesignPoint {
    fn alpha(&self) -> &AlphaProfile {
        &self.alpha
    }
    fn size(&self) -> f64 {
        self.size
    }
    fn update(&self) -> Result<(AlphaProfile, bool)> {
        alpha_update_clamped(&self.p, &self.q, &self.closed_loop.b)
    }
}

struct DesignPoint {
    alpha: AlphaProfile,
    gains: GainSchedule,
    closed_loop: ClosedLoop,
    p: PeriodicLyapunovSolution,
    q: PeriodicLyapunovSolution,
    size: f64,
    seeds: (Option<DMatrix<f64>>, Option<DMatrix<f64>>),
}

fn design_point(
    plant: &LtvPlant,
    mode: DesignMode,
    alpha: &AlphaProfile,
    error_weight: Option<&PeriodicMatrixSignal>,
    options: &DesignOptions,
    seeds: &(Option<DMatrix<f64>>, Option<DMatrix<f64>>),
) -> Result<DesignPoint> {
    let ropts = &options.riccati;
    let want_k = mode != DesignMode::Observer;
    let want_l = mode != DesignMode::StateFeedback;
    let (q, p) = rayon::join(
        || {
            want_k
                .then(|| control_riccati(plant, alpha, ropts, seeds.0.as_ref()))
                .transpose()
        },
        || {
            want_l
                .then(|| filter_riccati(plant, alpha, ropts, seeds.1.as_ref()))
                .transpose()
        },
    );
    let (q, p) = (q?, p?);
    let k = q
        .as_ref()
        .map(|q| sf_gain(q, plant.b2.as_ref().unwrap()))
        .transpose()?;
    let l = p
        .as_ref()
        .map(|p| obs_gain(p, plant.c1.as_ref().unwrap(), alpha))
        .transpose()?;
    let gains = GainSchedule {
        k,
        l,
        alpha: Some(alpha.clone()),
        provenance: match mode {
            DesignMode::StateFeedback => Provenance::StateFeedback,
            DesignMode::Observer => Provenance::Observer,
            DesignMode::OutputFeedback => Provenance::OutputFeedback,
        },
        error_weight: error_weight.cloned(),
    };
    let cl = closed_loop(plant, &gains)?;
    let ode = options.ode();
    let (p_cl, q_cl) = rayon::join(
        || solve_periodic_p(&cl.a, &cl.b, alpha, &ode),
        || solve_periodic_q(&cl.a, &cl.c, alpha, &ode),
    );
    let (p_cl, q_cl) = (p_cl?, q_cl?);
    let size = size_primal(&cl.c, &p_cl)?;
    Ok(DesignPoint {
        alpha: alpha.clone(),
        gains,
        closed_loop: cl,
        p: p_cl,
        q: q_cl,
        size,
        seeds: (
            q.map(|q| q.initial().clone()),
            p.map(|p| p.initial().clone()),
        ),
    })
}

/// Design-mode iteration: synthesize gains for the current `α`, assemble the
/// closed loop, solve its `P` and `Q`, update `α` pointwise, repeat.
///
/// An update that increases the size beyond `1e-8·(1 + size)` is halved
/// toward the previous profile up to [`MAX_HALVINGS`] times. Hitting
/// `max_iter` returns the last point with `converged = false`.
pub fn optimize_controller(
    plant: &LtvPlant,
    mode: DesignMode,
    alpha0: &AlphaProfile,
    error_weight: Option<&PeriodicMatrixSignal>,
    options: &DesignOptions,
) -> Result<SynthesisReport> {
    plant.validate_for(mode, alpha0.nodes())?;
    let start = design_point(plant, mode, alpha0, error_weight, options, &(None, None))
        .map_err(|e| e.at_iteration(0))?;
    let (cur, history) = relaxed_alpha_iteration(
        start,
        options.tol,
        options.max_iter,
        options.relaxation,
        |alpha, prev| design_point(plant, mode, alpha, error_weight, options, &prev.seeds),
    )?;
    let converged = history.converged;
    let stationarity = stationarity_residual(&cur.p, &cur.q, &cur.closed_loop.b)?;
    Ok(SynthesisReport {
        mode,
        gains: cur.gains,
        alpha: cur.alpha,
        size: cur.size,
        history,
        closed_loop: cur.closed_loop,
        p_cl: cur.p,
        q_cl: cur.q,
        stationarity,
        converged,
    })
}

/// Periodic LQR (`Q = C₂ᵀC₂`, `R = 1`) combined with a periodic Kalman filter
/// (`Q = B₁B₁ᵀ`, `R = I`). Uses `options.ode.nodes` as the grid.
pub fn lqr_kalman_baseline(plant: &LtvPlant, options: &RiccatiOptions) -> Result<GainSchedule> {
    let (b2, c2, _) = plant.control()?;
    let (c1, _) = plant.measurement()?;
    let (q, p) = rayon::join(
        || solve_lqr_riccati(&plant.a, b2, c2, options),
        || solve_kalman_riccati(&plant.a, &plant.b1, c1, options),
    );
    let (q, p) = (q?, p?);
    Ok(GainSchedule {
        k: Some(gain_from(&q.trajectory, b2)?),
        l: Some(observer_gain_from(&p.trajectory, c1, |_| 1.0)?),
        alpha: None,
        provenance: Provenance::Baseline,
        error_weight: None,
    })
}

/// Result of evaluating frozen gains.
#[derive(Clone, Debug)]
pub struct FixedControllerEvaluation {
    pub size: f64,
    pub closed_loop: ClosedLoop,
    pub analysis: AlphaOptimization,
    /// Spectral radius of the unshifted closed-loop monodromy.
    pub monodromy_radius: f64,
    /// The starting profile actually used (scaled down if the requested one
    /// was not admissible).
    pub alpha0: AlphaProfile,
}

/// Minimal inescapable-ellipsoid size achievable with frozen gains: the
/// analysis `α` iteration run on the closed loop.
pub fn evaluate_fixed_controller(
    plant: &LtvPlant,
    gains: &GainSchedule,
    alpha0: &AlphaProfile,
    options: &AlphaOptions,
) -> Result<FixedControllerEvaluation> {
    let cl = closed_loop(plant, gains)?;
    let ode = options.ode.with_nodes(alpha0.nodes());
    let radius = cl.monodromy_radius(&ode)?;
    if !(radius < 1.0) {
        return Err(Error::Unstable {
            radius,
            context: "closed loop is not stable, no admissible alpha exists".into(),
        });
    }
    // A constant α is admissible iff ρ·exp(αT/2) < 1; shrink the start until
    // the shifted loop is stable.
    let mut start = alpha0.clone();
    let bound = -2.0 * radius.ln() / cl.period();
    if start.sup() >= bound {
        let factor = 0.5 * bound / start.sup();
        start = AlphaProfile::from_values(
            start.period(),
            start.values().iter().map(|a| a * factor).collect(),
        )?;
    }
    let analysis = optimize_alpha_analysis(
        &cl.a,
        &cl.b,
        &cl.c,
        &start,
        &AlphaOptions { ode, ..*options },
    )?;
    Ok(FixedControllerEvaluation {
        size: analysis.size,
        closed_loop: cl,
        analysis,
        monodromy_radius: radius,
        alpha0: start,
    })
}

/// Size of the closed loop for given gains at a fixed `α` (no optimization).
pub fn closed_loop_size(
    plant: &LtvPlant,
    gains: &GainSchedule,
    alpha: &AlphaProfile,
    settings: &OdeSettings,
) -> Result<f64> {
    let cl = closed_loop(plant, gains)?;
    let p = solve_periodic_p(&cl.a, &cl.b, alpha, settings)?;
    size_primal(&cl.c, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn sig(v: f64, t: f64) -> PeriodicMatrixSignal {
        PeriodicMatrixSignal::constant(&scalar(v), t)
    }

    const GOLDEN: f64 = 1.618_033_988_749_895;

    /// ẋ = u + w₁, y = x + w₂, z = (x, u)
    fn scalar_plant(t: f64) -> LtvPlant {
        let b1 = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), t);
        let c2 = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), t);
        let d2 = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), t);
        let d1 = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), t);
        LtvPlant::new(sig(0.0, t), b1)
            .unwrap()
            .with_control(sig(1.0, t), c2, d2)
            .unwrap()
            .with_measurement(sig(1.0, t), d1)
            .unwrap()
    }

    fn opts(nodes: usize) -> RiccatiOptions {
        RiccatiOptions::with_ode(OdeSettings::new(nodes, 4).unwrap())
    }

    #[test]
    fn scalar_gains() {
        let t = 1.0;
        let plant = scalar_plant(t);
        let alpha = AlphaProfile::constant(1.0, t, 64).unwrap();
        let sf = synth_state_feedback(&plant, &alpha, &opts(64)).unwrap();
        for k in sf.k.as_ref().unwrap().values() {
            assert_abs_diff_eq!(k[(0, 0)], -GOLDEN, epsilon = 1e-6);
        }
        let obs = synth_observer(&plant, &sig(1.0, t), &alpha, &opts(64)).unwrap();
        for l in obs.l.as_ref().unwrap().values() {
            assert_abs_diff_eq!(l[(0, 0)], -GOLDEN, epsilon = 1e-6);
        }
        let cl = closed_loop(&plant, &sf).unwrap();
        assert_abs_diff_eq!(cl.a.value(0)[(0, 0)], -GOLDEN, epsilon = 1e-6);
    }

    #[test]
    fn zero_gains_leave_plant() {
        let t = 1.0;
        let plant = scalar_plant(t);
        let zero = GainSchedule {
            k: Some(GridTrajectory::constant(scalar(0.0), t, 8)),
            l: None,
            alpha: None,
            provenance: Provenance::StateFeedback,
            error_weight: None,
        };
        let cl = closed_loop(&plant, &zero).unwrap();
        assert_eq!(cl.a.value(3)[(0, 0)], 0.0);
        assert_eq!(cl.c.value(3), &DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn observer_gain_formula() {
        let t = 1.0;
        let alpha = AlphaProfile::constant(2.0, t, 4).unwrap();
        let p = GridTrajectory::constant(scalar(GOLDEN), t, 4);
        let l = observer_gain_from(&p, &sig(1.0, t), |i| alpha.value(i)).unwrap();
        assert_abs_diff_eq!(l.value(0)[(0, 0)], -2.0 * GOLDEN, epsilon = 1e-14);
        let q = GridTrajectory::constant(DMatrix::identity(2, 2), t, 4);
        let b = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), t);
        let k = gain_from(&q, &b).unwrap();
        assert_eq!(k.value(0), &DMatrix::from_row_slice(1, 2, &[0.0, -1.0]));
    }

    #[test]
    fn baseline_scalar() {
        let plant = scalar_plant(1.0);
        let g = lqr_kalman_baseline(&plant, &opts(64)).unwrap();
        assert_abs_diff_eq!(g.k.unwrap().value(0)[(0, 0)], -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g.l.unwrap().value(0)[(0, 0)], -1.0, epsilon = 1e-8);
    }

    #[test]
    fn missing_channel_is_named() {
        let t = 1.0;
        let plant = LtvPlant::new(sig(0.0, t), sig(1.0, t)).unwrap();
        let alpha = AlphaProfile::constant(1.0, t, 8).unwrap();
        let err = synth_output_feedback(&plant, &alpha, &opts(8)).unwrap_err();
        assert!(err.to_string().contains("B2"), "{err}");
    }

    #[test]
    fn normalization_violation_rejected() {
        let t = 1.0;
        let b1 = PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), t);
        // noise channel slightly off unit weight
        let d1 =
            PeriodicMatrixSignal::constant(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0 + 1e-6]), t);
        let plant = LtvPlant::new(sig(0.0, t), b1)
            .unwrap()
            .with_measurement(sig(1.0, t), d1)
            .unwrap();
        let alpha = AlphaProfile::constant(1.0, t, 8).unwrap();
        let err = synth_observer(&plant, &sig(1.0, t), &alpha, &opts(8)).unwrap_err();
        assert!(matches!(err, Error::Assumption(_)));
    }

    #[test]
    fn destabilizing_gain_rejected() {
        let t = 1.0;
        let plant = scalar_plant(t);
        let bad = GainSchedule {
            k: Some(GridTrajectory::constant(scalar(GOLDEN), t, 32)),
            l: None,
            alpha: None,
            provenance: Provenance::StateFeedback,
            error_weight: None,
        };
        let alpha = AlphaProfile::constant(1.0, t, 32).unwrap();
        let options = AlphaOptions {
            ode: OdeSettings::new(32, 4).unwrap(),
            ..AlphaOptions::default()
        };
        let err = evaluate_fixed_controller(&plant, &bad, &alpha, &options).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }
}
