//! Fixed-step RK4 integration of matrix ODEs, state-transition matrices and
//! one-period (monodromy) maps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::signal::{AlphaProfile, MatrixFunction, DEFAULT_NODES};

/// Grid resolution shared by every periodic solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OdeSettings {
    /// Nodes per period at which trajectories are stored.
    pub nodes: usize,
    /// RK4 steps between consecutive nodes.
    pub substeps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            substeps: 4,
        }
    }
}

impl OdeSettings {
    pub fn new(nodes: usize, substeps: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidInput(
                "at least two grid nodes are required".into(),
            ));
        }
        if substeps == 0 {
            return Err(Error::InvalidInput(
                "substeps_per_node must be at least 1".into(),
            ));
        }
        Ok(Self { nodes, substeps })
    }

    pub fn with_nodes(self, nodes: usize) -> Self {
        Self { nodes, ..self }
    }

    /// RK4 step length for a given period.
    pub fn step(&self, period: f64) -> f64 {
        period / (self.nodes * self.substeps) as f64
    }
}

/// Output of [`integrate_matrix_ode`]: every RK4 step on `[t0, t1]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<DMatrix<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &DMatrix<f64> {
        self.values
            .last()
            .expect("trajectory holds at least the initial value")
    }
}

fn ensure_finite(x: &DMatrix<f64>, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { time })
    }
}

/// Classical RK4 with a uniform step no longer than `max_step`.
///
/// Integration runs backward when `t1 < t0`.
pub fn integrate_matrix_ode<F>(
    rhs: F,
    x0: DMatrix<f64>,
    t0: f64,
    t1: f64,
    max_step: f64,
) -> Result<Trajectory>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    if t1 == t0 {
        return Err(Error::InvalidInput("integration interval is empty".into()));
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let span = t1 - t0;
    let steps = ((span.abs() / max_step) - 1e-9).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = x0;
    times.push(t0);
    values.push(x.clone());
    for j in 0..steps {
        let t = t0 + j as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&x + &k3 * h));
        x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        let tn = if j + 1 == steps {
            t1
        } else {
            t0 + (j + 1) as f64 * h
        };
        ensure_finite(&x, tn)?;
        times.push(tn);
        values.push(x.clone());
    }
    Ok(Trajectory { times, values })
}

fn shifted_drift(a: &dyn MatrixFunction, alpha: Option<&AlphaProfile>, t: f64) -> DMatrix<f64> {
    let mut m = a.eval(t);
    if let Some(alpha) = alpha {
        let half = 0.5 * alpha.eval_scalar(t);
        for i in 0..m.nrows() {
            m[(i, i)] += half;
        }
    }
    m
}

/// `Φ(t1, t0)` for `Φ̇ = (A(t) + α(t)/2·I)Φ`, `Φ(t0) = I`.
pub fn state_transition(
    a: &dyn MatrixFunction,
    alpha: Option<&AlphaProfile>,
    t0: f64,
    t1: f64,
    settings: &OdeSettings,
) -> Result<DMatrix<f64>> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::Dimension(format!("A must be square, got {n}x{m}")));
    }
    if t0 == t1 {
        return Ok(DMatrix::identity(n, n));
    }
    let traj = integrate_matrix_ode(
        |t, phi| shifted_drift(a, alpha, t) * phi,
        DMatrix::identity(n, n),
        t0,
        t1,
        settings.step(a.period()),
    )?;
    Ok(traj.last().clone())
}

/// One-period data of the affine flow `Ẋ = A_α X + X A_αᵀ + R`.
#[derive(Clone, Debug)]
pub struct MonodromyData {
    /// State transition of `A_α` over one period.
    pub phi: DMatrix<f64>,
    /// Response over one period from a zero initial condition.
    pub g: DMatrix<f64>,
}

impl MonodromyData {
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.phi)
    }
}

/// Computes Φ and G over `[0, T]` in one pass of the augmented ODE, with
/// `A_α = A + (α/2)·I` and forcing `R(t)`.
pub fn monodromy_affine(
    a: &dyn MatrixFunction,
    alpha: &AlphaProfile,
    r: &dyn MatrixFunction,
    settings: &OdeSettings,
) -> Result<MonodromyData> {
    let (n, m) = a.shape();
    if n != m || r.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "A is {n}x{m}, forcing is {:?}",
            r.shape()
        )));
    }
    let grid = PeriodGrid::new(alpha.period(), alpha.nodes(), settings.substeps);
    let flow = Flow::sample(
        grid,
        |t| shifted_drift(a, Some(alpha), t),
        |t| {
            let x = r.eval(t);
            (&x + x.transpose()) * 0.5
        },
        None::<fn(f64) -> DMatrix<f64>>,
    );
    let data = flow.monodromy()?;
    check_stable(&data.phi, "alpha too small or too large for this A")?;
    Ok(data)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Periodic fixed points are rejected when the monodromy is this close to the
/// unit circle.
pub const STABILITY_MARGIN: f64 = 1e-9;

pub(crate) fn check_stable(phi: &DMatrix<f64>, context: &str) -> Result<f64> {
    let radius = spectral_radius(phi);
    if !(radius < 1.0 - STABILITY_MARGIN) {
        return Err(Error::Unstable {
            radius,
            context: context.to_string(),
        });
    }
    Ok(radius)
}

/// Uniform RK4 grid over one period. Coefficients are sampled on the
/// half-step lattice `k·h/2`, `k = 0..2·nodes·substeps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PeriodGrid {
    pub period: f64,
    pub nodes: usize,
    pub substeps: usize,
}

impl PeriodGrid {
    pub fn new(period: f64, nodes: usize, substeps: usize) -> Self {
        Self {
            period,
            nodes,
            substeps,
        }
    }

    pub fn steps(&self) -> usize {
        self.nodes * self.substeps
    }

    pub fn h(&self) -> f64 {
        self.period / self.steps() as f64
    }

    pub fn half_samples(&self) -> usize {
        2 * self.steps()
    }

    pub fn half_time(&self, k: usize) -> f64 {
        k as f64 * 0.5 * self.h()
    }
}

/// What a periodic pass keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Record {
    Nothing,
    /// every full RK4 step (needed to rebuild half-step values)
    Steps,
}

/// The symmetric matrix flow `Ẋ = F X + X Fᵀ + R − X S X` with coefficients
/// sampled on the half-step lattice of one period.
pub(crate) struct Flow {
    pub grid: PeriodGrid,
    pub drift: Vec<DMatrix<f64>>,
    pub forcing: Vec<DMatrix<f64>>,
    pub quadratic: Option<Vec<DMatrix<f64>>>,
}

impl Flow {
    pub fn sample<F, R, S>(grid: PeriodGrid, drift: F, forcing: R, quadratic: Option<S>) -> Self
    where
        F: Fn(f64) -> DMatrix<f64>,
        R: Fn(f64) -> DMatrix<f64>,
        S: Fn(f64) -> DMatrix<f64>,
    {
        let count = grid.half_samples();
        let times: Vec<f64> = (0..count).map(|k| grid.half_time(k)).collect();
        Self {
            grid,
            drift: times.iter().map(|&t| drift(t)).collect(),
            forcing: times.iter().map(|&t| forcing(t)).collect(),
            quadratic: quadratic.map(|s| times.iter().map(|&t| s(t)).collect()),
        }
    }

    #[inline]
    fn idx(&self, k: usize) -> usize {
        k % self.drift.len()
    }

    /// Right-hand side at half-step sample `k`, assuming `x` symmetric.
    pub fn rhs(&self, k: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.idx(k);
        let fx = &self.drift[k] * x;
        let mut out = &fx + fx.transpose() + &self.forcing[k];
        if let Some(s) = &self.quadratic {
            out -= x * &s[k] * x;
        }
        out
    }

    fn step(&self, j: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let h = self.grid.h();
        let k1 = self.rhs(2 * j, x);
        let k2 = self.rhs(2 * j + 1, &(x + &k1 * (0.5 * h)));
        let k3 = self.rhs(2 * j + 1, &(x + &k2 * (0.5 * h)));
        let k4 = self.rhs(2 * j + 2, &(x + &k3 * h));
        let mut next = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        symmetrize_in_place(&mut next);
        next
    }

    /// Integrates one period from `x0`. The returned list holds the recorded
    /// values starting with `x0`; the final state is returned separately.
    pub fn propagate(
        &self,
        x0: &DMatrix<f64>,
        record: Record,
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let grid = self.grid;
        let mut stored = match record {
            Record::Nothing => Vec::new(),
            Record::Steps => Vec::with_capacity(grid.steps()),
        };
        let mut x = x0.clone();
        for j in 0..grid.steps() {
            if let Record::Steps = record {
                stored.push(x.clone());
            }
            x = self.step(j, &x);
            if (j + 1) % grid.substeps == 0 {
                ensure_finite(&x, (j + 1) as f64 * grid.h())?;
            }
        }
        Ok((x, stored))
    }

    /// Φ of the drift and G of the affine part (quadratic term ignored).
    pub fn monodromy(&self) -> Result<MonodromyData> {
        monodromy_of(self.grid, &self.drift, Some(&self.forcing))
    }

    /// Half-step values of a solution recorded with [`Record::Steps`], using
    /// cubic Hermite interpolation between full steps.
    pub fn half_step_values(&self, steps: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let h = self.grid.h();
        let n = steps.len();
        let mut out = Vec::with_capacity(2 * n);
        for j in 0..n {
            let a = &steps[j];
            let b = &steps[(j + 1) % n];
            let da = self.rhs(2 * j, a);
            let db = self.rhs(2 * j + 2, b);
            out.push(a.clone());
            out.push((a + b) * 0.5 + (da - db) * (h / 8.0));
        }
        out
    }
}

/// Monodromy `Φ̇ = F Φ` and, if forcing is given, `Ġ = F G + G Fᵀ + R`,
/// `G(0) = 0`, over one period of sampled coefficients.
pub(crate) fn monodromy_of(
    grid: PeriodGrid,
    drift: &[DMatrix<f64>],
    forcing: Option<&[DMatrix<f64>]>,
) -> Result<MonodromyData> {
    let n = drift[0].nrows();
    let h = grid.h();
    let len = drift.len();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut g = DMatrix::<f64>::zeros(n, n);
    let lyap = |k: usize, x: &DMatrix<f64>| {
        let fx = &drift[k % len] * x;
        let mut out = &fx + fx.transpose();
        if let Some(r) = forcing {
            out += &r[k % len];
        }
        out
    };
    for j in 0..grid.steps() {
        let (k0, km, k1) = (2 * j, 2 * j + 1, 2 * j + 2);
        let p1 = &drift[k0 % len] * &phi;
        let p2 = &drift[km % len] * (&phi + &p1 * (0.5 * h));
        let p3 = &drift[km % len] * (&phi + &p2 * (0.5 * h));
        let p4 = &drift[k1 % len] * (&phi + &p3 * h);
        phi += (p1 + (p2 + p3) * 2.0 + p4) * (h / 6.0);
        if forcing.is_some() {
            let g1 = lyap(k0, &g);
            let g2 = lyap(km, &(&g + &g1 * (0.5 * h)));
            let g3 = lyap(km, &(&g + &g2 * (0.5 * h)));
            let g4 = lyap(k1, &(&g + &g3 * h));
            g += (g1 + (g2 + g3) * 2.0 + g4) * (h / 6.0);
            symmetrize_in_place(&mut g);
        }
        if (j + 1) % grid.substeps == 0 {
            ensure_finite(&phi, (j + 1) as f64 * h)?;
        }
    }
    Ok(MonodromyData { phi, g })
}

pub(crate) fn symmetrize_in_place(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

pub(crate) fn symmetrized(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x.clone();
    symmetrize_in_place(&mut y);
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::PeriodicMatrixSignal;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate_matrix_ode(|_, x| -x, scalar(1.0), 0.0, 1.0, 0.01).unwrap();
        assert_abs_diff_eq!(traj.last()[(0, 0)], (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(traj.times.len(), 101);
    }

    #[test]
    fn zero_rhs_and_polynomial() {
        let x0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let traj = integrate_matrix_ode(|_, x| x * 0.0, x0.clone(), 0.0, 1.0, 0.1).unwrap();
        assert!(traj.values.iter().all(|v| *v == x0));
        let traj = integrate_matrix_ode(|_, _| scalar(1.0), scalar(0.0), 0.0, 2.0, 0.1).unwrap();
        assert_abs_diff_eq!(traj.last()[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn backward_integration() {
        let traj = integrate_matrix_ode(|_, x| -x, scalar(1.0), 1.0, 0.0, 0.01).unwrap();
        assert_abs_diff_eq!(traj.last()[(0, 0)], 1.0f64.exp(), epsilon = 1e-7);
    }

    #[test]
    fn divergence_reports_time() {
        let err =
            integrate_matrix_ode(|_, x| x.map(|v| v * v * 1e300), scalar(1e10), 0.0, 1.0, 0.1)
                .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let traj = integrate_matrix_ode(|_, x| -x, scalar(1.0), 0.0, 1.0, h).unwrap();
            (traj.last()[(0, 0)] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn scalar_transitions() {
        let s = OdeSettings::new(64, 4).unwrap();
        let zero = PeriodicMatrixSignal::zeros(2, 2, 1.0);
        let phi = state_transition(&zero, None, 0.0, 0.7, &s).unwrap();
        assert_eq!(phi, DMatrix::identity(2, 2));
        let a = PeriodicMatrixSignal::constant(&scalar(-1.0), 1.0);
        let phi = state_transition(&a, None, 0.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(phi[(0, 0)], (-1.0f64).exp(), epsilon = 1e-8);
        let alpha = AlphaProfile::constant(1.0, 1.0, 64).unwrap();
        let phi = state_transition(&a, Some(&alpha), 0.0, 1.0, &s).unwrap();
        assert_abs_diff_eq!(phi[(0, 0)], (-0.5f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn scalar_monodromy() {
        let s = OdeSettings::new(128, 4).unwrap();
        let a = PeriodicMatrixSignal::constant(&scalar(-1.0), 1.0);
        let r = PeriodicMatrixSignal::constant(&scalar(1.0), 1.0);
        let alpha = AlphaProfile::constant(1.0, 1.0, 128).unwrap();
        let data = monodromy_affine(&a, &alpha, &r, &s).unwrap();
        assert_abs_diff_eq!(data.phi[(0, 0)], (-0.5f64).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(data.g[(0, 0)], 1.0 - (-1.0f64).exp(), epsilon = 1e-7);

        let zero = PeriodicMatrixSignal::zeros(1, 1, 1.0);
        let data = monodromy_affine(&a, &alpha, &zero, &s).unwrap();
        assert_eq!(data.g[(0, 0)], 0.0);
    }

    #[test]
    fn monodromy_rejects_unstable_shift() {
        let s = OdeSettings::new(32, 2).unwrap();
        let zero = PeriodicMatrixSignal::zeros(2, 2, 1.0);
        let alpha = AlphaProfile::constant(1e-3, 1.0, 32).unwrap();
        let err = monodromy_affine(&zero, &alpha, &zero, &s).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }
}
