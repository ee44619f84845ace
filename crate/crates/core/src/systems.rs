//! Coefficient sequences `A(n)` of the system `x(n+1) = A(n) x(n)`.
//!
//! A sequence is an immutable description of `A` on all integers together
//! with the time domain it is used on. Every constructor validates
//! invertibility, so `eval_inv(n) * eval(n) = I` holds up to rounding.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative singular-value floor below which a coefficient is rejected.
pub const TOL_INV: f64 = 1e-10;

/// Largest usable time index when a sequence is built without an explicit horizon.
pub const DEFAULT_HORIZON: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeDomain {
    /// `T = N`
    OneSided,
    /// `T = Z`
    TwoSided,
}

/// How a stored finite window of matrices is continued to all integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    Periodic,
    ConstantTail,
}

/// Piecewise-constant log-rate of one diagonal channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    /// `inside` on `[2^{2k}, 2^{2k+1})`, `outside` elsewhere; negative times mirror `|n|`.
    Dyadic {
        inside: T,
        outside: T,
    },
    /// Explicit blocks; uncovered times inside the horizon are rejected.
    Blocks(Vec<RateBlock<T>>),
}

/// Half-open block `[start, end)` carrying a constant log-rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBlock<T> {
    pub start: i64,
    pub end: i64,
    pub rate: T,
}

impl<T: Real> Schedule<T> {
    fn rate_at(&self, n: i64) -> T {
        match self {
            Schedule::Constant(r) => *r,
            Schedule::Dyadic { inside, outside } => {
                if in_dyadic_block(n.unsigned_abs()) {
                    *inside
                } else {
                    *outside
                }
            }
            Schedule::Blocks(blocks) => {
                if let Some(b) = blocks.iter().find(|b| b.start <= n && n < b.end) {
                    return b.rate;
                }
                // Outside the validated window the nearest block continues.
                let first = blocks.iter().min_by_key(|b| b.start).expect("nonempty blocks");
                let last = blocks.iter().max_by_key(|b| b.end).expect("nonempty blocks");
                if n < first.start {
                    first.rate
                } else {
                    last.rate
                }
            }
        }
    }

    fn first_gap(&self, lo: i64, hi: i64) -> Option<i64> {
        match self {
            Schedule::Blocks(blocks) => {
                if blocks.is_empty() {
                    return Some(lo);
                }
                (lo..hi).find(|&n| !blocks.iter().any(|b| b.start <= n && n < b.end))
            }
            _ => None,
        }
    }
}

/// `n` lies in some `[2^{2k}, 2^{2k+1})`.
fn in_dyadic_block(n: u64) -> bool {
    n >= 1 && (63 - n.leading_zeros()).is_multiple_of(2)
}

#[derive(Debug)]
enum Source<T: Real> {
    Constant { a: DMatrix<T>, a_inv: DMatrix<T> },
    Periodic { a: Vec<DMatrix<T>>, a_inv: Vec<DMatrix<T>> },
    Diagonal { channels: Vec<Schedule<T>> },
    Window { start: i64, a: Vec<DMatrix<T>>, a_inv: Vec<DMatrix<T>>, extension: Extension },
}

/// The bounded invertible sequence `A(n)` together with its inverses.
#[derive(Debug, Clone)]
pub struct CoefficientSequence<T: Real> {
    dim: usize,
    domain: TimeDomain,
    horizon: usize,
    label: String,
    shift: T,
    source: Arc<Source<T>>,
}

/// Empirical sup norms of `A` and `A^{-1}` over a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemBounds<T> {
    pub norm_a: T,
    pub norm_a_inv: T,
    pub horizon: usize,
}

impl<T: Real> SystemBounds<T> {
    /// `[-ln ||A^{-1}||, ln ||A||]`, the range every nonzero-subspace exponent lies in.
    pub fn exponent_range(&self) -> (T, T) {
        (-self.norm_a_inv.ln(), self.norm_a.ln())
    }

    pub fn max_norm(&self) -> T {
        self.norm_a.max(self.norm_a_inv)
    }
}

pub(crate) fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone().singular_values().iter().copied().fold(T::zero(), |acc, s| acc.max(s))
}

fn checked_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("coefficient must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(T::zero(), |a, s| a.max(s));
    let smin = sv.iter().copied().fold(smax, |a, s| a.min(s));
    let tol = T::lit(TOL_INV);
    if smax == T::zero() || smin < tol * smax {
        let rel = if smax == T::zero() { 0.0 } else { (smin / smax).as_f64() };
        return Err(Error::SingularMatrix { sigma_min: rel, tol: TOL_INV });
    }
    m.clone().try_inverse().ok_or(Error::SingularMatrix { sigma_min: smin.as_f64(), tol: TOL_INV })
}

impl<T: Real> CoefficientSequence<T> {
    fn from_source(dim: usize, label: impl Into<String>, source: Source<T>) -> Self {
        CoefficientSequence {
            dim,
            domain: TimeDomain::TwoSided,
            horizon: DEFAULT_HORIZON,
            label: label.into(),
            shift: T::zero(),
            source: Arc::new(source),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> TimeDomain {
        self.domain
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Accumulated exponent shift `gamma` (the sequence evaluates `e^{-gamma} A(n)`).
    pub fn shift(&self) -> T {
        self.shift
    }

    pub fn with_domain(mut self, domain: TimeDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn base_eval(&self, n: i64) -> DMatrix<T> {
        match &*self.source {
            Source::Constant { a, .. } => a.clone(),
            Source::Periodic { a, .. } => a[n.rem_euclid(a.len() as i64) as usize].clone(),
            Source::Diagonal { channels } => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                channels.len(),
                channels.iter().map(|c| c.rate_at(n).exp()),
            )),
            Source::Window { start, a, extension, .. } => a[window_index(*start, a.len(), *extension, n)].clone(),
        }
    }

    fn base_eval_inv(&self, n: i64) -> DMatrix<T> {
        match &*self.source {
            Source::Constant { a_inv, .. } => a_inv.clone(),
            Source::Periodic { a_inv, .. } => a_inv[n.rem_euclid(a_inv.len() as i64) as usize].clone(),
            Source::Diagonal { channels } => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                channels.len(),
                channels.iter().map(|c| (-c.rate_at(n)).exp()),
            )),
            Source::Window { start, a_inv, extension, .. } => {
                a_inv[window_index(*start, a_inv.len(), *extension, n)].clone()
            }
        }
    }

    pub fn eval(&self, n: i64) -> DMatrix<T> {
        let m = self.base_eval(n);
        if self.shift == T::zero() {
            m
        } else {
            m * (-self.shift).exp()
        }
    }

    pub fn eval_inv(&self, n: i64) -> DMatrix<T> {
        let m = self.base_eval_inv(n);
        if self.shift == T::zero() {
            m
        } else {
            m * self.shift.exp()
        }
    }

    /// Coefficient indices `[lo, hi)` used by a run over `horizon` steps.
    pub fn time_range(&self, horizon: usize) -> (i64, i64) {
        let t = horizon as i64;
        match self.domain {
            TimeDomain::OneSided => (0, t),
            TimeDomain::TwoSided => (-t, t),
        }
    }

    /// Checks that the state time `n` may be used.
    pub fn check_time(&self, n: i64) -> Result<()> {
        let t = self.horizon as i64;
        let lo = match self.domain {
            TimeDomain::OneSided => 0,
            TimeDomain::TwoSided => -t,
        };
        if n < lo || n > t {
            Err(Error::OutOfHorizon { time: n, lo, hi: t })
        } else {
            Ok(())
        }
    }

    /// Evaluates `A` and `A^{-1}` on the coefficient indices `[lo, hi)`.
    pub fn materialize(&self, lo: i64, hi: i64) -> Result<Materialized<T>> {
        self.check_time(lo)?;
        self.check_time(hi)?;
        let a = (lo..hi).map(|n| self.eval(n)).collect();
        let a_inv = (lo..hi).map(|n| self.eval_inv(n)).collect();
        Ok(Materialized { lo, hi, dim: self.dim, a, a_inv })
    }

    /// Like [`Self::materialize`] without the horizon check, for burn-in beyond the window.
    pub(crate) fn materialize_unchecked(&self, lo: i64, hi: i64) -> Materialized<T> {
        let a = (lo..hi).map(|n| self.eval(n)).collect();
        let a_inv = (lo..hi).map(|n| self.eval_inv(n)).collect();
        Materialized { lo, hi, dim: self.dim, a, a_inv }
    }

    /// The gamma-shifted system `x(n+1) = e^{-gamma} A(n) x(n)`.
    pub fn shifted(&self, gamma: T) -> Self {
        let mut s = self.clone();
        s.shift += gamma;
        s
    }

    /// Stores `A(0), ..., A(count-1)` in the matrix-sequence document format.
    pub fn to_document(&self, count: usize, extension: Extension) -> SequenceDocument {
        SequenceDocument {
            dim: self.dim,
            domain: self.domain,
            extension,
            matrices: (0..count as i64)
                .map(|n| {
                    let m = self.eval(n);
                    (0..self.dim).map(|r| (0..self.dim).map(|c| m[(r, c)].as_f64()).collect()).collect()
                })
                .collect(),
        }
    }
}

fn window_index(start: i64, len: usize, extension: Extension, n: i64) -> usize {
    let rel = n - start;
    match extension {
        Extension::Periodic => rel.rem_euclid(len as i64) as usize,
        Extension::ConstantTail => rel.clamp(0, len as i64 - 1) as usize,
    }
}

/// `A(n)` and `A(n)^{-1}` evaluated on `[lo, hi)` for the hot propagation loops.
#[derive(Debug, Clone)]
pub struct Materialized<T: Real> {
    pub lo: i64,
    pub hi: i64,
    dim: usize,
    a: Vec<DMatrix<T>>,
    a_inv: Vec<DMatrix<T>>,
}

impl<T: Real> Materialized<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self, n: i64) -> &DMatrix<T> {
        &self.a[(n - self.lo) as usize]
    }

    pub fn a_inv(&self, n: i64) -> &DMatrix<T> {
        &self.a_inv[(n - self.lo) as usize]
    }

    /// Whether the state time `n` is reachable by propagation on this window.
    pub fn covers(&self, n: i64) -> bool {
        self.lo <= n && n <= self.hi
    }
}

/// `A(n) = matrix` for all `n`.
pub fn make_constant<T: Real>(matrix: DMatrix<T>) -> Result<CoefficientSequence<T>> {
    let a_inv = checked_inverse(&matrix)?;
    let dim = matrix.nrows();
    Ok(CoefficientSequence::from_source(dim, "constant", Source::Constant { a: matrix, a_inv }))
}

pub fn make_identity<T: Real>(dim: usize) -> CoefficientSequence<T> {
    make_constant(DMatrix::identity(dim, dim)).expect("identity is invertible").with_label("identity")
}

/// `A(n) = period_matrices[n mod p]` with the nonnegative modulus for negative `n`.
pub fn make_periodic<T: Real>(period_matrices: Vec<DMatrix<T>>) -> Result<CoefficientSequence<T>> {
    let first = period_matrices.first().ok_or(Error::EmptyPeriod)?;
    let dim = first.nrows();
    let mut a_inv = Vec::with_capacity(period_matrices.len());
    for m in &period_matrices {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "period matrices must all be {dim}x{dim}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        a_inv.push(checked_inverse(m)?);
    }
    Ok(CoefficientSequence::from_source(
        dim,
        format!("periodic(p={})", period_matrices.len()),
        Source::Periodic { a: period_matrices, a_inv },
    ))
}

/// Diagonal system `A(n) = diag(e^{r_1(n)}, ..., e^{r_d(n)})`.
///
/// Explicit block schedules are validated against the coefficient indices
/// of `domain` and `horizon`.
pub fn make_block_switching<T: Real>(
    channels: Vec<Schedule<T>>,
    domain: TimeDomain,
    horizon: usize,
) -> Result<CoefficientSequence<T>> {
    if channels.is_empty() {
        return Err(Error::DimensionError("diagonal system needs at least one channel".into()));
    }
    let t = horizon as i64;
    let (lo, hi) = match domain {
        TimeDomain::OneSided => (0, t),
        TimeDomain::TwoSided => (-t, t),
    };
    for ch in &channels {
        if let Some(n) = ch.first_gap(lo, hi) {
            return Err(Error::ScheduleGap(n));
        }
        let finite = match ch {
            Schedule::Constant(r) => r.is_finite(),
            Schedule::Dyadic { inside, outside } => inside.is_finite() && outside.is_finite(),
            Schedule::Blocks(bs) => bs.iter().all(|b| b.rate.is_finite()),
        };
        if !finite {
            return Err(Error::Config("rates must be finite".into()));
        }
    }
    let dim = channels.len();
    Ok(CoefficientSequence::from_source(dim, "diagonal", Source::Diagonal { channels })
        .with_domain(domain)
        .with_horizon(horizon))
}

/// Constant diagonal system with the given log-rates.
pub fn make_diagonal<T: Real>(rates: &[T]) -> CoefficientSequence<T> {
    let channels = rates.iter().map(|&r| Schedule::Constant(r)).collect();
    make_block_switching(channels, TimeDomain::TwoSided, DEFAULT_HORIZON)
        .expect("constant schedules cover every time")
        .with_label("diagonal")
}

/// Window of matrices `A(start), A(start+1), ...` continued by `extension`.
pub fn make_window<T: Real>(
    start: i64,
    matrices: Vec<DMatrix<T>>,
    extension: Extension,
) -> Result<CoefficientSequence<T>> {
    let first = matrices.first().ok_or(Error::EmptyPeriod)?;
    let dim = first.nrows();
    let mut a_inv = Vec::with_capacity(matrices.len());
    for m in &matrices {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "window matrices must all be {dim}x{dim}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        a_inv.push(checked_inverse(m)?);
    }
    Ok(CoefficientSequence::from_source(dim, "window", Source::Window { start, a: matrices, a_inv, extension }))
}

fn normal_matrix<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// Random bounded system `A(n) = I + scale * G(n)` on the coefficient indices of
/// `domain`/`horizon`, rejecting draws whose singular values leave `[1/4, 4]`.
pub fn make_random<T: Real>(
    dim: usize,
    domain: TimeDomain,
    horizon: usize,
    scale: f64,
    seed: u64,
) -> CoefficientSequence<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = horizon as i64;
    let (lo, hi) = match domain {
        TimeDomain::OneSided => (0, t),
        TimeDomain::TwoSided => (-t, t),
    };
    let eye = DMatrix::<T>::identity(dim, dim);
    let mut mats = Vec::with_capacity((hi - lo) as usize);
    while mats.len() < (hi - lo) as usize {
        let m = &eye + normal_matrix::<T>(&mut rng, dim, dim) * T::lit(scale);
        let sv = m.clone().singular_values();
        let ok = sv.iter().all(|&s| s >= T::lit(0.25) && s <= T::lit(4.0));
        if ok {
            mats.push(m);
        }
    }
    make_window(lo, mats, Extension::ConstantTail)
        .expect("accepted draws are well conditioned")
        .with_domain(domain)
        .with_horizon(horizon)
        .with_label(format!("random(d={dim},seed={seed})"))
}

/// Random system with an exponential dichotomy of rank `k` and rate margin `rate`.
///
/// `A(n) = S diag(B_1(n), B_2(n)) S^{-1}` with `B_1` contracting like `e^{-rate}`
/// and `B_2` expanding like `e^{rate}`; returns the sequence and the columns of
/// `S` spanning the stable subspace.
pub fn make_split_random<T: Real>(
    dim: usize,
    k: usize,
    domain: TimeDomain,
    horizon: usize,
    rate: f64,
    seed: u64,
) -> Result<(CoefficientSequence<T>, DMatrix<T>)> {
    if k > dim {
        return Err(Error::DimensionError(format!("stable rank {k} exceeds dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eye = DMatrix::<T>::identity(dim, dim);
    let basis = loop {
        let s = &eye + normal_matrix::<T>(&mut rng, dim, dim) * T::lit(0.4);
        let sv = s.clone().singular_values();
        let smin = sv.iter().copied().fold(T::lit(f64::MAX), |a, b| a.min(b));
        if smin > T::lit(0.3) {
            break s;
        }
    };
    let basis_inv = checked_inverse(&basis)?;
    let t = horizon as i64;
    let (lo, hi) = match domain {
        TimeDomain::OneSided => (0, t),
        TimeDomain::TwoSided => (-t, t),
    };
    let mut mats = Vec::with_capacity((hi - lo) as usize);
    for _ in lo..hi {
        let mut block = DMatrix::<T>::zeros(dim, dim);
        let jitter = 0.15;
        for (r0, size, sign) in [(0usize, k, -1.0), (k, dim - k, 1.0)] {
            if size == 0 {
                continue;
            }
            let mut b = DMatrix::<T>::identity(size, size) + normal_matrix::<T>(&mut rng, size, size) * T::lit(jitter);
            // Normalize singular values into a band around e^{sign * rate}.
            let svd = b.clone().svd(true, true);
            let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let target = nalgebra::DVector::from_iterator(
                size,
                (0..size).map(|_| T::lit(sign * rate + rng.random_range(-0.1..0.1)).exp()),
            );
            b = &u * DMatrix::from_diagonal(&target) * &vt;
            block.view_mut((r0, r0), (size, size)).copy_from(&b);
        }
        mats.push(&basis * block * &basis_inv);
    }
    let seq = make_window(lo, mats, Extension::ConstantTail)?
        .with_domain(domain)
        .with_horizon(horizon)
        .with_label(format!("split-random(d={dim},k={k},seed={seed})"));
    Ok((seq, basis.columns(0, k).into_owned()))
}

/// Max over the coefficient indices of `horizon` of `||A(n)||` and `||A(n)^{-1}||`.
pub fn empirical_bounds<T: Real>(system: &CoefficientSequence<T>, horizon: usize) -> SystemBounds<T> {
    let (lo, hi) = system.time_range(horizon.max(1));
    let (norm_a, norm_a_inv) = match &*system.source {
        Source::Constant { a, a_inv } => {
            let f = (-system.shift).exp();
            (spectral_norm(a) * f, spectral_norm(a_inv) / f)
        }
        _ => (lo..hi).fold((T::zero(), T::zero()), |(na, ni), n| {
            (na.max(spectral_norm(&system.eval(n))), ni.max(spectral_norm(&system.eval_inv(n))))
        }),
    };
    SystemBounds { norm_a, norm_a_inv, horizon }
}

/// On-disk matrix-sequence document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDocument {
    pub dim: usize,
    pub domain: TimeDomain,
    pub extension: Extension,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl SequenceDocument {
    pub fn into_sequence<T: Real>(self) -> Result<CoefficientSequence<T>> {
        if self.dim == 0 {
            return Err(Error::DimensionMismatch("dim must be positive".into()));
        }
        if self.matrices.is_empty() {
            return Err(Error::Parse("matrices must be nonempty".into()));
        }
        let mut mats = Vec::with_capacity(self.matrices.len());
        for (i, rows) in self.matrices.iter().enumerate() {
            if rows.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {i} has {} rows, expected {}",
                    rows.len(),
                    self.dim
                )));
            }
            if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != self.dim) {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {i} row {r} has {} entries, expected {}",
                    row.len(),
                    self.dim
                )));
            }
            mats.push(DMatrix::from_fn(self.dim, self.dim, |r, c| T::lit(rows[r][c])));
        }
        Ok(make_window(0, mats, self.extension)?.with_domain(self.domain).with_label("file"))
    }
}

pub fn parse_sequence<T: Real>(text: &str) -> Result<CoefficientSequence<T>> {
    let doc: SequenceDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.into_sequence()
}

pub fn load_sequence<T: Real>(path: impl AsRef<Path>) -> Result<CoefficientSequence<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_sequence(&text)
}

pub fn save_sequence<T: Real>(
    system: &CoefficientSequence<T>,
    count: usize,
    extension: Extension,
    path: impl AsRef<Path>,
) -> Result<()> {
    let doc = system.to_document(count, extension);
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn constant_identity() {
        let s = make_constant(DMatrix::<f64>::identity(2, 2)).unwrap();
        for n in [-7, 0, 3] {
            assert_eq!(s.eval(n), DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn constant_diagonal_evaluates_everywhere() {
        let m = DMatrix::from_diagonal(&nalgebra::dvector![E, 1.0 / E]);
        let s = make_constant(m.clone()).unwrap();
        for n in [0, 5, -3] {
            assert_eq!(s.eval(n), m);
            assert_relative_eq!(s.eval_inv(n) * s.eval(n), DMatrix::identity(2, 2), epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_constant_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(make_constant(m), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn periodic_uses_nonnegative_modulus() {
        let s = make_periodic(vec![scalar(2.0), scalar(0.5)]).unwrap();
        assert_eq!(s.eval(0)[(0, 0)], 2.0);
        assert_eq!(s.eval(1)[(0, 0)], 0.5);
        assert_eq!(s.eval(2)[(0, 0)], 2.0);
        assert_eq!(s.eval(-1)[(0, 0)], 0.5);
        assert_eq!(s.eval(-2)[(0, 0)], 2.0);
        assert!(matches!(make_periodic::<f64>(vec![]), Err(Error::EmptyPeriod)));
    }

    #[test]
    fn periodic_of_one_is_constant() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let p = make_periodic(vec![m.clone()]).unwrap();
        let c = make_constant(m).unwrap();
        for n in -5..5 {
            assert_eq!(p.eval(n), c.eval(n));
        }
    }

    #[test]
    fn dyadic_membership() {
        let inside: Vec<u64> = (0..20).filter(|&n| in_dyadic_block(n)).collect();
        assert_eq!(inside, vec![1, 4, 5, 6, 7, 16, 17, 18, 19]);
    }

    #[test]
    fn block_switching_cases() {
        let id = make_block_switching(vec![Schedule::Constant(0.0)], TimeDomain::OneSided, 64).unwrap();
        assert_eq!(id.eval(10)[(0, 0)], 1.0);

        let two =
            make_block_switching(vec![Schedule::Constant(1.0), Schedule::Constant(-1.0)], TimeDomain::TwoSided, 8)
                .unwrap();
        assert_relative_eq!(two.eval(3)[(0, 0)], E);
        assert_relative_eq!(two.eval(-3)[(1, 1)], 1.0 / E);

        let gap = make_block_switching(
            vec![Schedule::Blocks(vec![
                RateBlock { start: 0, end: 4, rate: 1.0 },
                RateBlock { start: 5, end: 10, rate: -1.0 },
            ])],
            TimeDomain::OneSided,
            10,
        );
        assert!(matches!(gap, Err(Error::ScheduleGap(4))));
    }

    #[test]
    fn shift_is_a_group_action() {
        let s = make_periodic(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.9]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.5, 1.4]),
        ])
        .unwrap();
        assert_eq!(s.shifted(0.0).eval(3), s.eval(3));
        let ab = s.shifted(0.3).shifted(-1.1);
        let direct = s.shifted(0.3 - 1.1);
        for n in -4..4 {
            assert_relative_eq!(ab.eval(n), direct.eval(n), epsilon = 1e-14);
            assert_relative_eq!(ab.eval_inv(n), direct.eval_inv(n), epsilon = 1e-14);
        }
        let half = make_identity::<f64>(3).shifted(2f64.ln());
        assert_relative_eq!(half.eval(0), DMatrix::identity(3, 3) * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bounds_examples() {
        let b = empirical_bounds(&make_identity::<f64>(2), 16);
        assert_eq!((b.norm_a, b.norm_a_inv), (1.0, 1.0));

        let d = make_diagonal(&[1.0, -1.0]);
        let b = empirical_bounds(&d, 16);
        assert_relative_eq!(b.norm_a, E, epsilon = 1e-12);
        assert_relative_eq!(b.norm_a_inv, E, epsilon = 1e-12);

        let p = make_periodic(vec![scalar(2.0), scalar(0.5)]).unwrap();
        let b = empirical_bounds(&p, 16);
        assert_eq!((b.norm_a, b.norm_a_inv), (2.0, 2.0));
    }

    #[test]
    fn file_format_round_trip_and_errors() {
        let text = r#"{"dim":1,"domain":"two-sided","extension":"periodic","matrices":[[[2.0]],[[0.5]]]}"#;
        let loaded: CoefficientSequence<f64> = parse_sequence(text).unwrap();
        let p = make_periodic(vec![scalar(2.0), scalar(0.5)]).unwrap();
        for n in -9..9 {
            assert_eq!(loaded.eval(n), p.eval(n));
        }

        let bad = r#"{"dim":2,"domain":"one-sided","extension":"periodic","matrices":[[[1.0,0.0],[0.0]]]}"#;
        assert!(matches!(parse_sequence::<f64>(bad), Err(Error::DimensionMismatch(_))));
        assert!(matches!(parse_sequence::<f64>("{not json"), Err(Error::Parse(_))));
        let singular = r#"{"dim":1,"domain":"one-sided","extension":"constant-tail","matrices":[[[0.0]]]}"#;
        assert!(matches!(parse_sequence::<f64>(singular), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn save_then_load_agrees_on_stored_window() {
        let s = make_random::<f64>(3, TimeDomain::OneSided, 20, 0.3, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.json");
        save_sequence(&s, 20, Extension::ConstantTail, &path).unwrap();
        let back: CoefficientSequence<f64> = load_sequence(&path).unwrap();
        for n in 0..20 {
            assert_relative_eq!(back.eval(n), s.eval(n), epsilon = 1e-15);
        }
    }

    #[test]
    fn random_systems_stay_invertible() {
        for seed in 0..5 {
            let s = make_random::<f64>(3, TimeDomain::TwoSided, 30, 0.4, seed);
            for n in -30..30 {
                let err = (s.eval_inv(n) * s.eval(n) - DMatrix::identity(3, 3)).norm();
                assert!(err <= 1e-10, "seed {seed} n {n} err {err}");
            }
        }
    }

    #[test]
    fn f32_sequences_work() {
        let s = make_diagonal(&[1.0f32, -1.0]);
        assert!((s.eval(0)[(0, 0)] - std::f32::consts::E).abs() < 1e-6);
    }
}
