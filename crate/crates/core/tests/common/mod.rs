//! Independent reference computations and random problem generators shared
//! by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use inescapable::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};
use inescapable::synthesis::LtvPlant;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

pub fn const_signal(m: &DMatrix<f64>, period: f64) -> PeriodicMatrixSignal {
    PeriodicMatrixSignal::constant(m, period)
}

/// Entry with a constant and first/second harmonics, each amplitude in
/// `[-scale, scale]`.
pub fn random_entry(rng: &mut ChaCha8Rng, scale: f64) -> FourierEntry {
    let mut e = FourierEntry::constant(rng.gen_range(-scale..scale));
    for k in 1..=2 {
        e = e
            .with_cos(k, rng.gen_range(-scale..scale) / k as f64)
            .with_sin(k, rng.gen_range(-scale..scale) / k as f64);
    }
    e
}

pub fn random_signal(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    period: f64,
    scale: f64,
) -> PeriodicMatrixSignal {
    let mut m = PeriodicMatrixSignal::zeros(rows, cols, period);
    for r in 0..rows {
        for c in 0..cols {
            m.set_entry(r, c, random_entry(rng, scale)).unwrap();
        }
    }
    m
}

/// Sum of absolute Fourier amplitudes: a bound on `|entry(t)|`.
fn entry_bound(e: &FourierEntry) -> f64 {
    e.constant.abs()
        + e.cosine.iter().map(|(_, a)| a.abs()).sum::<f64>()
        + e.sine.iter().map(|(_, a)| a.abs()).sum::<f64>()
}

/// Random `A(t)` whose symmetric part stays below `−decay·I`, so that any
/// `α(t) < 2·decay` is admissible.
pub fn random_stable_a(
    rng: &mut ChaCha8Rng,
    n: usize,
    period: f64,
    decay: f64,
) -> PeriodicMatrixSignal {
    let s = random_signal(rng, n, n, period, 1.0);
    let frob: f64 = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| entry_bound(s.entry(r, c)).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut a = s;
    for i in 0..n {
        let e = a.entry(i, i).clone();
        a.set_entry(
            i,
            i,
            FourierEntry::new(e.constant - frob - decay, e.cosine, e.sine).unwrap(),
        )
        .unwrap();
    }
    a
}

/// Positive periodic profile with values inside `[lo, hi]`.
pub fn random_alpha(
    rng: &mut ChaCha8Rng,
    period: f64,
    nodes: usize,
    lo: f64,
    hi: f64,
) -> AlphaProfile {
    let mid = 0.5 * (lo + hi);
    let amp = 0.5 * (hi - lo);
    let (c1, s1, s3): (f64, f64, f64) = (
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let norm = c1.abs() + s1.abs() + s3.abs();
    let w = 2.0 * PI / period;
    AlphaProfile::from_fn(period, nodes, |t| {
        mid + amp * (c1 * (w * t).cos() + s1 * (w * t).sin() + s3 * (3.0 * w * t).sin())
            / norm.max(1.0)
    })
    .unwrap()
}

/// A random plant satisfying both normalization identities:
/// `B₁ = [G 0]`, `D₁ = [0 I]`, `C₂ = [H; 0]`, `D₂ = [0; I]`.
pub fn random_plant(rng: &mut ChaCha8Rng, n: usize, period: f64, decay: f64) -> LtvPlant {
    let (mw0, mu, py, pz0) = (1, 1, 1, 1);
    let a = random_stable_a(rng, n, period, decay);
    let g = random_signal(rng, n, mw0, period, 1.0);
    let mut b1 = PeriodicMatrixSignal::zeros(n, mw0 + py, period);
    for r in 0..n {
        b1.set_entry(r, 0, g.entry(r, 0).clone()).unwrap();
    }
    let mut d1 = PeriodicMatrixSignal::zeros(py, mw0 + py, period);
    d1.set_entry(0, mw0, FourierEntry::constant(1.0)).unwrap();
    let c1 = random_signal(rng, py, n, period, 1.0);
    let b2 = random_signal(rng, n, mu, period, 1.0);
    let h = random_signal(rng, pz0, n, period, 1.0);
    let mut c2 = PeriodicMatrixSignal::zeros(pz0 + mu, n, period);
    for c in 0..n {
        c2.set_entry(0, c, h.entry(0, c).clone()).unwrap();
    }
    let mut d2 = PeriodicMatrixSignal::zeros(pz0 + mu, mu, period);
    d2.set_entry(pz0, 0, FourierEntry::constant(1.0)).unwrap();
    LtvPlant::new(a, b1)
        .unwrap()
        .with_control(b2, c2, d2)
        .unwrap()
        .with_measurement(c1, d1)
        .unwrap()
}

/// `F X + X Fᵀ + R = 0` through the Kronecker form `(I⊗F + F⊗I) vec X = −vec R`.
pub fn kron_lyapunov(f: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(f) + f.kronecker(&eye);
    let rhs = -DVector::from_column_slice(r.as_slice());
    let x = big.lu().solve(&rhs).expect("singular Lyapunov operator");
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    (&x + x.transpose()) * 0.5
}

/// Stabilizing solution of `F X + X Fᵀ + R − X S X = 0` by Kleinman's
/// iteration from a stabilizing `X₀` (`F − X₀S` Hurwitz).
pub fn kleinman_are(
    f: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x0: DMatrix<f64>,
) -> DMatrix<f64> {
    let mut x = x0;
    for _ in 0..100 {
        let fc = f - &x * s;
        let next = kron_lyapunov(&fc, &(r + &x * s * &x));
        let done = (&next - &x).norm() <= 1e-14 * (1.0 + next.norm());
        x = next;
        if done {
            break;
        }
    }
    x
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Stable LTI triple with eigenvalue real parts in `[-2.5, -0.5]`.
pub fn random_lti(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let re = max_real_eigenvalue(&a);
        let a = a - DMatrix::identity(n, n) * (re + rng.gen_range(0.5..1.5));
        let lo = a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::INFINITY, f64::min);
        if lo >= -2.5 {
            let b = DMatrix::from_fn(n, 1 + n / 2, |_, _| rng.gen_range(-1.0..1.0));
            let c = DMatrix::from_fn(1 + n / 2, n, |_, _| rng.gen_range(-1.0..1.0));
            return (a, b, c);
        }
    }
}

/// Size of the minimal ellipsoid of an LTI system for a constant `α`, from
/// the algebraic Lyapunov equation.
pub fn lti_size(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, alpha: f64) -> f64 {
    let n = a.nrows();
    let f = a + DMatrix::identity(n, n) * (0.5 * alpha);
    let p = kron_lyapunov(&f, &(b * b.transpose() / alpha));
    (c * p * c.transpose()).trace()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
