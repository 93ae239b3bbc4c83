//! Periodic matrix-valued functions of time.
//!
//! Plant data is held as [`PeriodicMatrixSignal`]s (a truncated Fourier series
//! per entry), while computed quantities such as `P(t)`, `Q(t)`, the gains and
//! the `α(t)` profile live on a uniform grid as [`GridTrajectory`]s.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid nodes per period.
pub const DEFAULT_NODES: usize = 2048;

/// Anything that can be evaluated as a `T`-periodic matrix function of time.
pub trait MatrixFunction: Sync {
    fn shape(&self) -> (usize, usize);
    fn period(&self) -> f64;
    fn eval(&self, t: f64) -> DMatrix<f64>;
}

impl<M: MatrixFunction + ?Sized> MatrixFunction for &M {
    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }
    fn period(&self) -> f64 {
        (**self).period()
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        (**self).eval(t)
    }
}

/// Wraps `t` into `[0, period)`.
pub fn wrap_time(t: f64, period: f64) -> f64 {
    let w = t.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if w >= period {
        0.0
    } else {
        w
    }
}

/// One entry of a periodic matrix: `c + Σ a_k cos(kωt) + Σ b_k sin(kωt)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FourierEntry {
    #[serde(rename = "const", default)]
    pub constant: f64,
    #[serde(rename = "cos", default)]
    pub cosine: Vec<(u32, f64)>,
    #[serde(rename = "sin", default)]
    pub sine: Vec<(u32, f64)>,
}

impl FourierEntry {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            ..Self::default()
        }
    }

    pub fn new(constant: f64, cosine: Vec<(u32, f64)>, sine: Vec<(u32, f64)>) -> Result<Self> {
        let entry = Self {
            constant,
            cosine,
            sine,
        };
        entry.validate()?;
        Ok(entry)
    }

    pub fn with_cos(mut self, harmonic: u32, amplitude: f64) -> Self {
        self.cosine.push((harmonic, amplitude));
        self
    }

    pub fn with_sin(mut self, harmonic: u32, amplitude: f64) -> Self {
        self.sine.push((harmonic, amplitude));
        self
    }

    /// Scales every coefficient.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constant: self.constant * factor,
            cosine: self.cosine.iter().map(|&(k, a)| (k, a * factor)).collect(),
            sine: self.sine.iter().map(|&(k, a)| (k, a * factor)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("cos", &self.cosine), ("sin", &self.sine)] {
            let mut seen = Vec::with_capacity(list.len());
            for &(k, amp) in list {
                if k == 0 {
                    return Err(Error::InvalidInput(format!(
                        "{name} harmonic index must be a positive integer"
                    )));
                }
                if seen.contains(&k) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate {name} harmonic index {k}"
                    )));
                }
                if !amp.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite {name} amplitude for harmonic {k}"
                    )));
                }
                seen.push(k);
            }
        }
        if !self.constant.is_finite() {
            return Err(Error::InvalidInput("non-finite constant term".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0
            && self.cosine.iter().all(|&(_, a)| a == 0.0)
            && self.sine.iter().all(|&(_, a)| a == 0.0)
    }

    /// Value at phase `omega * t` where `t` is already wrapped.
    pub fn eval(&self, omega: f64, t: f64) -> f64 {
        let mut v = self.constant;
        for &(k, a) in &self.cosine {
            v += a * (k as f64 * omega * t).cos();
        }
        for &(k, b) in &self.sine {
            v += b * (k as f64 * omega * t).sin();
        }
        v
    }
}

/// A `rows × cols` matrix whose entries are truncated Fourier series with
/// base frequency `2π / period`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicMatrixSignal {
    rows: usize,
    cols: usize,
    period: f64,
    // row-major
    entries: Vec<FourierEntry>,
}

impl PeriodicMatrixSignal {
    pub fn new(rows: usize, cols: usize, period: f64, entries: Vec<FourierEntry>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(
                "signal dimensions must be positive".into(),
            ));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} signal, got {}",
                rows * cols,
                entries.len()
            )));
        }
        for e in &entries {
            e.validate()?;
        }
        Ok(Self {
            rows,
            cols,
            period,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize, period: f64) -> Self {
        Self::new(
            rows,
            cols,
            period,
            vec![FourierEntry::default(); rows * cols],
        )
        .expect("zero signal with positive dimensions")
    }

    /// A time-invariant signal.
    pub fn constant(m: &DMatrix<f64>, period: f64) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| FourierEntry::constant(m[(r, c)]))
            .collect();
        Self::new(m.nrows(), m.ncols(), period, entries).expect("constant signal")
    }

    pub fn identity(n: usize, period: f64) -> Self {
        Self::constant(&DMatrix::identity(n, n), period)
    }

    /// Replaces entry `(row, col)` (zero-based).
    pub fn with_entry(mut self, row: usize, col: usize, entry: FourierEntry) -> Self {
        assert!(
            row < self.rows && col < self.cols,
            "entry ({row},{col}) out of range"
        );
        self.entries[row * self.cols + col] = entry;
        self
    }

    pub fn set_entry(&mut self, row: usize, col: usize, entry: FourierEntry) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Dimension(format!(
                "entry ({},{}) outside a {}x{} signal",
                row + 1,
                col + 1,
                self.rows,
                self.cols
            )));
        }
        entry.validate()?;
        self.entries[row * self.cols + col] = entry;
        Ok(())
    }

    pub fn entry(&self, row: usize, col: usize) -> &FourierEntry {
        &self.entries[row * self.cols + col]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(FourierEntry::is_zero)
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                entries.push(self.entry(r, c).clone());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            period: self.period,
            entries,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|e| e.scaled(factor)).collect(),
            ..self.clone()
        }
    }
}

impl MatrixFunction for PeriodicMatrixSignal {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn eval(&self, t: f64) -> DMatrix<f64> {
        let tau = wrap_time(t, self.period);
        let omega = self.omega();
        DMatrix::from_fn(self.rows, self.cols, |r, c| {
            self.entry(r, c).eval(omega, tau)
        })
    }
}

/// An arbitrary closure treated as a periodic matrix function. Mostly useful
/// in tests and for composite signals.
pub struct FnSignal<F> {
    pub rows: usize,
    pub cols: usize,
    pub period: f64,
    pub f: F,
}

impl<F> MatrixFunction for FnSignal<F>
where
    F: Fn(f64) -> DMatrix<f64> + Sync,
{
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        (self.f)(wrap_time(t, self.period))
    }
}

/// Values of a periodic matrix function at `N` uniform nodes `iT/N`,
/// interpolated piecewise-linearly (node `N-1` connects back to node `0`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridTrajectory {
    period: f64,
    values: Vec<DMatrix<f64>>,
}

impl GridTrajectory {
    pub fn new(period: f64, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "a grid trajectory needs at least 2 nodes".into(),
            ));
        }
        let shape = values[0].shape();
        if let Some(i) = values.iter().position(|v| v.shape() != shape) {
            return Err(Error::Dimension(format!(
                "node {i} has shape {:?}, expected {shape:?}",
                values[i].shape()
            )));
        }
        Ok(Self { period, values })
    }

    /// Samples `f` at `nodes` uniform nodes.
    pub fn sample(f: &dyn MatrixFunction, nodes: usize) -> Self {
        let period = f.period();
        let values = (0..nodes)
            .map(|i| f.eval(i as f64 * period / nodes as f64))
            .collect();
        Self::new(period, values).expect("sampling needs at least two nodes")
    }

    pub fn constant(m: DMatrix<f64>, period: f64, nodes: usize) -> Self {
        Self::new(period, vec![m; nodes]).expect("constant grid trajectory")
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn node_time(&self, i: usize) -> f64 {
        i as f64 * self.period / self.values.len() as f64
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i % self.values.len()]
    }

    pub fn into_values(self) -> Vec<DMatrix<f64>> {
        self.values
    }

    /// Applies `f` node-wise.
    pub fn map(&self, f: impl Fn(usize, &DMatrix<f64>) -> DMatrix<f64>) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| f(i, v))
            .collect();
        Self::new(self.period, values).expect("mapped trajectory")
    }

    /// Largest Frobenius distance between corresponding nodes.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Locates `t` as (left node, right node, weight of the right node).
    pub fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.values.len();
        let s = wrap_time(t, self.period) * n as f64 / self.period;
        let i = (s.floor() as usize).min(n - 1);
        let w = (s - i as f64).clamp(0.0, 1.0);
        (i, (i + 1) % n, w)
    }
}

impl MatrixFunction for GridTrajectory {
    fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn eval(&self, t: f64) -> DMatrix<f64> {
        let (i, j, w) = self.locate(t);
        if w == 0.0 {
            return self.values[i].clone();
        }
        &self.values[i] * (1.0 - w) + &self.values[j] * w
    }
}

/// Strictly positive periodic scalar profile on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaProfile {
    period: f64,
    values: Vec<f64>,
}

impl AlphaProfile {
    pub fn from_values(period: f64, values: Vec<f64>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {period}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "an alpha profile needs at least 2 nodes".into(),
            ));
        }
        if let Some(i) = values.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Degenerate(format!(
                "alpha must be strictly positive, got {} at t = {}",
                values[i],
                i as f64 * period / values.len() as f64
            )));
        }
        Ok(Self { period, values })
    }

    pub fn constant(value: f64, period: f64, nodes: usize) -> Result<Self> {
        Self::from_values(period, vec![value; nodes])
    }

    pub fn from_fn(period: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(
            period,
            (0..nodes)
                .map(|i| f(i as f64 * period / nodes as f64))
                .collect(),
        )
    }

    pub fn from_entry(entry: &FourierEntry, period: f64, nodes: usize) -> Result<Self> {
        entry.validate()?;
        let omega = 2.0 * PI / period;
        Self::from_fn(period, nodes, |t| entry.eval(omega, t))
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i % self.values.len()]
    }

    pub fn node_time(&self, i: usize) -> f64 {
        i as f64 * self.period / self.values.len() as f64
    }

    /// Piecewise-linear value at any `t`.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        let n = self.values.len();
        let s = wrap_time(t, self.period) * n as f64 / self.period;
        let i = (s.floor() as usize).min(n - 1);
        let w = (s - i as f64).clamp(0.0, 1.0);
        self.values[i] * (1.0 - w) + self.values[(i + 1) % n] * w
    }

    pub fn sup(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sup-norm distance over nodes.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Node-wise average of two profiles on the same grid.
    pub fn midpoint(&self, other: &Self) -> Result<Self> {
        if self.nodes() != other.nodes() {
            return Err(Error::Dimension(
                "alpha profiles live on different grids".into(),
            ));
        }
        Self::from_values(
            self.period,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    /// `(1 − θ)·self + θ·other`, node-wise.
    pub fn lerp(&self, other: &Self, theta: f64) -> Result<Self> {
        if self.nodes() != other.nodes() {
            return Err(Error::Dimension(
                "alpha profiles live on different grids".into(),
            ));
        }
        Self::from_values(
            self.period,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + theta * (b - a))
                .collect(),
        )
    }

    pub fn as_trajectory(&self) -> GridTrajectory {
        GridTrajectory::new(
            self.period,
            self.values
                .iter()
                .map(|&a| DMatrix::from_element(1, 1, a))
                .collect(),
        )
        .expect("alpha profile has at least two nodes")
    }
}

impl MatrixFunction for AlphaProfile {
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn eval(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.eval_scalar(t))
    }
}

/// Symmetric square root and inverse square root of a symmetric PD matrix.
pub(crate) fn sym_sqrt_pair(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * scale)) {
        return None;
    }
    let v = &eig.eigenvectors;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some((v * root * v.transpose(), v * inv_root * v.transpose()))
}

/// Rescales an ellipsoidal disturbance bound `wᵀW(t)w ≤ 1` into a unit bound
/// by returning `B(t)·W(t)^(-1/2)` on `nodes` grid nodes.
pub fn rescale_input(
    b: &dyn MatrixFunction,
    w: &dyn MatrixFunction,
    nodes: usize,
) -> Result<GridTrajectory> {
    let (_, m) = b.shape();
    if w.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "weight must be {m}x{m} to match the input matrix, got {:?}",
            w.shape()
        )));
    }
    let period = b.period();
    let mut values = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let t = i as f64 * period / nodes as f64;
        let wt = w.eval(t);
        let (_, inv_root) = sym_sqrt_pair(&wt).ok_or_else(|| Error::NotPositiveDefinite {
            name: "W".into(),
            node: i,
            time: t,
        })?;
        values.push(b.eval(t) * inv_root);
    }
    GridTrajectory::new(period, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sin_squared_from_second_harmonic() {
        let e = FourierEntry::constant(0.5).with_cos(2, -0.5);
        let s = PeriodicMatrixSignal::new(1, 1, 2.0 * PI, vec![e]).unwrap();
        assert_relative_eq!(s.eval(PI / 2.0)[(0, 0)], 1.0, epsilon = 1e-15);
        // b1(t) = sin²(t)/3 vanishes at t = 0
        let b1 = FourierEntry::constant(1.0 / 6.0).with_cos(2, -1.0 / 6.0);
        assert_eq!(b1.eval(1.0, 0.0), 0.0);
    }

    #[test]
    fn constant_entry_is_constant() {
        let s = PeriodicMatrixSignal::constant(&DMatrix::from_element(1, 1, 3.5), 1.0);
        for t in [-7.3, 0.0, 0.25, 100.0] {
            assert_eq!(s.eval(t)[(0, 0)], 3.5);
        }
    }

    #[test]
    fn duplicate_or_zero_harmonics_rejected() {
        assert!(FourierEntry::new(0.0, vec![(1, 1.0), (1, 2.0)], vec![]).is_err());
        assert!(FourierEntry::new(0.0, vec![], vec![(0, 1.0)]).is_err());
        assert!(FourierEntry::new(0.0, vec![(1, 1.0)], vec![(1, 2.0)]).is_ok());
    }

    #[test]
    fn grid_interpolation_and_wrap() {
        let g = GridTrajectory::new(
            2.0,
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 3.0),
            ],
        )
        .unwrap();
        assert_eq!(g.eval(0.5)[(0, 0)], 2.0);
        assert_eq!(g.eval(1.0)[(0, 0)], 3.0);
        assert_eq!(g.eval(2.0)[(0, 0)], 1.0);
        // seam: halfway from node 1 back to node 0
        assert_eq!(g.eval(1.5)[(0, 0)], 2.0);
        assert_eq!(g.eval(-0.5)[(0, 0)], 2.0);
    }

    #[test]
    fn alpha_profile_rejects_nonpositive() {
        assert!(AlphaProfile::from_values(1.0, vec![1.0, 0.0]).is_err());
        assert!(AlphaProfile::from_values(1.0, vec![1.0, -1.0]).is_err());
        assert!(AlphaProfile::constant(0.3, 1.0, 8).is_ok());
    }

    #[test]
    fn rescale_identity_and_scalar() {
        let b = PeriodicMatrixSignal::constant(
            &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            1.0,
        );
        let w = PeriodicMatrixSignal::identity(2, 1.0);
        let out = rescale_input(&b, &w, 8).unwrap();
        for v in out.values() {
            assert_relative_eq!(*v, b.eval(0.0), epsilon = 1e-14);
        }
        let b = PeriodicMatrixSignal::constant(&DMatrix::from_element(1, 1, 2.0), 1.0);
        let w = PeriodicMatrixSignal::constant(&DMatrix::from_element(1, 1, 4.0), 1.0);
        let out = rescale_input(&b, &w, 4).unwrap();
        assert_relative_eq!(out.value(0)[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rescale_singular_weight_names_node() {
        let b = PeriodicMatrixSignal::constant(&DMatrix::from_element(1, 1, 1.0), 2.0 * PI);
        // W(t) = 1 + cos(t) vanishes at t = π, node 4 of 8
        let w = PeriodicMatrixSignal::new(
            1,
            1,
            2.0 * PI,
            vec![FourierEntry::constant(1.0).with_cos(1, 1.0)],
        )
        .unwrap();
        match rescale_input(&b, &w, 8) {
            Err(Error::NotPositiveDefinite { node, .. }) => assert_eq!(node, 4),
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}
