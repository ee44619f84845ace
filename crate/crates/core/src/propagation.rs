//! Transition matrices and subspace growth in log-scaled arithmetic.
//!
//! Long products are kept as `e^{factor_log} * body` and renormalized after
//! every factor. Growth of a subspace is tracked along its trajectory
//! `Q_n = orth(Phi(n,0) U)` through triangular step factors
//! `A(n) Q_n = Q_{n+1} S_n`, so that over a window
//! `sigma(Phi(n,m) Q_m) = sigma(S_{n-1} ... S_m)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grassmann::Subspace;
use crate::scalar::Real;
use crate::systems::{CoefficientSequence, Materialized};

/// `e^{factor_log} * body` with the Frobenius norm of `body` kept in `[1/2, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix<T: Real> {
    pub factor_log: T,
    pub body: DMatrix<T>,
}

impl<T: Real> ScaledMatrix<T> {
    pub fn identity(d: usize) -> Self {
        ScaledMatrix { factor_log: T::zero(), body: DMatrix::identity(d, d) }
    }

    pub fn from_matrix(m: DMatrix<T>) -> Self {
        let mut s = ScaledMatrix { factor_log: T::zero(), body: m };
        s.renormalize();
        s
    }

    fn renormalize(&mut self) {
        let norm = self.body.norm();
        if norm > T::zero() && (norm < T::lit(0.5) || norm > T::lit(2.0)) {
            self.body /= norm;
            self.factor_log += norm.ln();
        }
    }

    /// `m * self`.
    pub fn left_mul(&mut self, m: &DMatrix<T>) {
        self.body = m * &self.body;
        self.renormalize();
    }

    /// `self * m`.
    pub fn right_mul(&mut self, m: &DMatrix<T>) {
        self.body = &self.body * m;
        self.renormalize();
    }

    pub fn left_mul_scaled(&mut self, m: &ScaledMatrix<T>) {
        self.factor_log += m.factor_log;
        self.left_mul(&m.body);
    }

    pub fn right_mul_scaled(&mut self, m: &ScaledMatrix<T>) {
        self.factor_log += m.factor_log;
        self.right_mul(&m.body);
    }

    /// Natural log of the spectral norm.
    pub fn log_norm(&self) -> T {
        self.factor_log + sigma_max(&self.body).ln()
    }

    /// The represented matrix (may overflow for long products).
    pub fn to_matrix(&self) -> DMatrix<T> {
        &self.body * self.factor_log.exp()
    }
}

/// Largest singular value, with closed forms for `1x1` and `2x2`.
pub fn sigma_max<T: Real>(m: &DMatrix<T>) -> T {
    match m.shape() {
        (1, 1) => m[(0, 0)].abs(),
        (2, 2) => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let two = T::lit(2.0);
            ((a + d).hypot(c - b) + (a - d).hypot(b + c)) / two
        }
        _ => m.clone().singular_values().iter().copied().fold(T::zero(), |x, y| x.max(y)),
    }
}

/// Step maps of a (possibly reduced) linear system on a state-time range.
pub trait Stepper<T: Real>: Sync {
    fn dim(&self) -> usize;
    /// State times `[lo, hi]` the stepper can reach.
    fn range(&self) -> (i64, i64);
    /// `A(n) x`.
    fn forward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T>;
    /// `A(n)^{-1} x`.
    fn backward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T>;
}

impl<T: Real> Stepper<T> for Materialized<T> {
    fn dim(&self) -> usize {
        Materialized::dim(self)
    }

    fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    fn forward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        self.a(n) * x
    }

    fn backward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        self.a_inv(n) * x
    }
}

/// Thin QR with positive diagonal in `R`, by Gram-Schmidt with one reorthogonalization.
///
/// Unlike Householder QR this keeps exact zeros: coordinate subspaces of
/// diagonal systems stay exactly invariant, which matters for subspaces
/// that are unstable under iteration.
pub(crate) fn positive_qr<T: Real>(x: DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let (d, j) = x.shape();
    let mut q = x;
    let mut r = DMatrix::zeros(j, j);
    for c in 0..j {
        for _ in 0..2 {
            for i in 0..c {
                let h = q.column(i).dot(&q.column(c));
                r[(i, c)] += h;
                let qi = q.column(i).into_owned();
                q.column_mut(c).axpy(-h, &qi, T::one());
            }
        }
        let norm = q.column(c).norm();
        r[(c, c)] = norm;
        if norm > T::zero() {
            q.column_mut(c).unscale_mut(norm);
        }
    }
    debug_assert_eq!(q.nrows(), d);
    (q, r)
}

fn upper_inverse<T: Real>(r: &DMatrix<T>) -> DMatrix<T> {
    let n = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(n, n)).unwrap_or_else(|| DMatrix::from_element(n, n, T::zero()))
}

/// Trajectory `Q_n` of a subspace given at time 0, stored as step factors on `[lo, hi)`.
#[derive(Debug, Clone)]
pub struct SubspaceTrajectory<T: Real> {
    lo: i64,
    hi: i64,
    j: usize,
    /// `S_n` and `S_n^{-1}` for `n` in `[lo, hi)`.
    steps: Vec<DMatrix<T>>,
    inv_steps: Vec<DMatrix<T>>,
    /// `ln |S_n|` when `j = 1`.
    log_steps: Vec<T>,
}

impl<T: Real> SubspaceTrajectory<T> {
    /// Propagates the column span of `basis0` (orthonormal) over `[lo, hi]`, `lo <= 0 <= hi`.
    pub fn build<S: Stepper<T> + ?Sized>(stepper: &S, basis0: &DMatrix<T>, lo: i64, hi: i64) -> Self {
        Self::split(stepper, basis0, stepper, basis0, lo, hi)
    }

    /// Like [`Self::build`], with separate steppers (and matching time-0 bases in
    /// their coordinates) for the forward and the backward half.
    pub fn split<F: Stepper<T> + ?Sized, B: Stepper<T> + ?Sized>(
        fwd: &F,
        fwd_basis0: &DMatrix<T>,
        bwd: &B,
        bwd_basis0: &DMatrix<T>,
        lo: i64,
        hi: i64,
    ) -> Self {
        let j = fwd_basis0.ncols();
        let len = (hi - lo) as usize;
        let mut steps = vec![DMatrix::zeros(0, 0); len];
        let mut inv_steps = vec![DMatrix::zeros(0, 0); len];
        let mut q = fwd_basis0.clone();
        for n in 0..hi {
            let (q_next, r) = positive_qr(fwd.forward(n, &q));
            inv_steps[(n - lo) as usize] = upper_inverse(&r);
            steps[(n - lo) as usize] = r;
            q = q_next;
        }
        let mut q = bwd_basis0.clone();
        for n in (lo..0).rev() {
            let (q_prev, t) = positive_qr(bwd.backward(n, &q));
            steps[(n - lo) as usize] = upper_inverse(&t);
            inv_steps[(n - lo) as usize] = t;
            q = q_prev;
        }
        Self::assemble(lo, hi, j, steps, inv_steps)
    }

    /// Trajectory whose frames `Q_n` are given for `n = first, first + 1, ...`
    /// (a range containing 0) and propagated by QR outside of it.
    pub fn from_frames<S: Stepper<T> + ?Sized>(
        stepper: &S,
        first: i64,
        frames: Vec<DMatrix<T>>,
        lo: i64,
        hi: i64,
    ) -> Self {
        let j = frames[0].ncols();
        let last = first + frames.len() as i64 - 1;
        let len = (hi - lo) as usize;
        let mut steps = vec![DMatrix::zeros(0, 0); len];
        let mut inv_steps = vec![DMatrix::zeros(0, 0); len];
        let (a, b) = (first.max(lo), last.min(hi));
        let frame = |n: i64| &frames[(n - first) as usize];
        for n in a..b {
            let (q0, q1) = (frame(n), frame(n + 1));
            steps[(n - lo) as usize] = q1.transpose() * stepper.forward(n, q0);
            inv_steps[(n - lo) as usize] = q0.transpose() * stepper.backward(n, q1);
        }
        let mut q = frame(b).clone();
        for n in b..hi {
            let (q_next, r) = positive_qr(stepper.forward(n, &q));
            inv_steps[(n - lo) as usize] = upper_inverse(&r);
            steps[(n - lo) as usize] = r;
            q = q_next;
        }
        let mut q = frame(a).clone();
        for n in (lo..a).rev() {
            let (q_prev, t) = positive_qr(stepper.backward(n, &q));
            steps[(n - lo) as usize] = upper_inverse(&t);
            inv_steps[(n - lo) as usize] = t;
            q = q_prev;
        }
        Self::assemble(lo, hi, j, steps, inv_steps)
    }

    fn assemble(lo: i64, hi: i64, j: usize, steps: Vec<DMatrix<T>>, inv_steps: Vec<DMatrix<T>>) -> Self {
        let log_steps = if j == 1 { steps.iter().map(|s| s[(0, 0)].abs().ln()).collect() } else { Vec::new() };
        SubspaceTrajectory { lo, hi, j, steps, inv_steps, log_steps }
    }

    pub fn dim(&self) -> usize {
        self.j
    }

    pub fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn step(&self, n: i64) -> &DMatrix<T> {
        &self.steps[(n - self.lo) as usize]
    }

    /// `(ln sigma_max, ln sigma_min)` of `Phi(n,m)` restricted to `Q_m`.
    pub fn window(&self, m: i64, n: i64) -> (T, T) {
        let mut fwd = ScaledMatrix::identity(self.j);
        let mut inv = ScaledMatrix::identity(self.j);
        if self.j == 1 {
            let s = (m..n).fold(T::zero(), |acc, i| acc + self.log_steps[(i - self.lo) as usize]);
            return (s, s);
        }
        for i in m..n {
            fwd.left_mul(self.step(i));
            inv.right_mul(&self.inv_steps[(i - self.lo) as usize]);
        }
        (fwd.log_norm(), -inv.log_norm())
    }
}

/// The restriction of a system to a subspace trajectory, in the coordinates of `Q_n`.
impl<T: Real> Stepper<T> for SubspaceTrajectory<T> {
    fn dim(&self) -> usize {
        self.j
    }

    fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    fn forward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        self.step(n) * x
    }

    fn backward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        &self.inv_steps[(n - self.lo) as usize] * x
    }
}

/// Which singular values a window sweep must produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    Max,
    Min,
    Both,
}

/// One window `(m, n)` of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct WindowValue<T> {
    pub m: i64,
    pub n: i64,
    pub log_sigma_max: T,
    pub log_sigma_min: T,
}

/// Time points `lo, lo + stride, ...` with `hi` always included.
pub fn window_points(lo: i64, hi: i64, stride: usize) -> Vec<i64> {
    let mut pts: Vec<i64> = (lo..=hi).step_by(stride.max(1)).collect();
    if *pts.last().unwrap() != hi {
        pts.push(hi);
    }
    pts
}

/// Visits every window `(points[p], points[q])`, `p < q`, of length at least `min_len`.
///
/// Blocks of rows `p` are processed in parallel, each folded into one
/// accumulator; the accumulators are merged in row order, so the result is
/// deterministic.
pub fn sweep_windows<T, A, I, V, M>(
    traj: &SubspaceTrajectory<T>,
    points: &[i64],
    min_len: i64,
    need: Need,
    init: I,
    visit: V,
    merge: M,
) -> A
where
    T: Real,
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &WindowValue<T>) + Sync,
    M: Fn(A, A) -> A,
{
    let cells = points.len().saturating_sub(1);
    let rows: Vec<A> = if traj.j == 1 {
        let mut prefix = Vec::with_capacity(points.len());
        prefix.push(T::zero());
        for c in 0..cells {
            let s = (points[c]..points[c + 1]).fold(T::zero(), |acc, i| acc + traj.log_steps[(i - traj.lo) as usize]);
            prefix.push(prefix[c] + s);
        }
        chunked(cells, &init, |p, acc| {
            for q in p + 1..points.len() {
                if points[q] - points[p] < min_len {
                    continue;
                }
                let g = prefix[q] - prefix[p];
                visit(acc, &WindowValue { m: points[p], n: points[q], log_sigma_max: g, log_sigma_min: g });
            }
        })
    } else {
        let blocks: Vec<(ScaledMatrix<T>, ScaledMatrix<T>)> = (0..cells)
            .map(|c| {
                let mut f = ScaledMatrix::identity(traj.j);
                let mut b = ScaledMatrix::identity(traj.j);
                for i in points[c]..points[c + 1] {
                    if need != Need::Min {
                        f.left_mul(traj.step(i));
                    }
                    if need != Need::Max {
                        b.right_mul(&traj.inv_steps[(i - traj.lo) as usize]);
                    }
                }
                (f, b)
            })
            .collect();
        chunked(cells, &init, |p, acc| {
            let mut f = ScaledMatrix::identity(traj.j);
            let mut b = ScaledMatrix::identity(traj.j);
            for q in p + 1..points.len() {
                let (bf, bb) = &blocks[q - 1];
                if need != Need::Min {
                    f.left_mul_scaled(bf);
                }
                if need != Need::Max {
                    b.right_mul_scaled(bb);
                }
                if points[q] - points[p] < min_len {
                    continue;
                }
                let smax = if need != Need::Min { f.log_norm() } else { T::zero() };
                let smin = if need != Need::Max { -b.log_norm() } else { T::zero() };
                visit(acc, &WindowValue { m: points[p], n: points[q], log_sigma_max: smax, log_sigma_min: smin });
            }
        })
    };
    let mut it = rows.into_iter();
    let first = it.next().unwrap_or_else(&init);
    it.fold(first, merge)
}

/// Rows per parallel work item; fixed so the merge tree does not depend on the thread count.
const ROW_CHUNK: usize = 32;

fn chunked<A, I, R>(cells: usize, init: &I, row: R) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    R: Fn(usize, &mut A) + Sync,
{
    let chunks: Vec<usize> = (0..cells).step_by(ROW_CHUNK).collect();
    chunks
        .into_par_iter()
        .map(|start| {
            let mut acc = init();
            for p in start..(start + ROW_CHUNK).min(cells) {
                row(p, &mut acc);
            }
            acc
        })
        .collect()
}

/// `ln sigma_max` / `ln sigma_min` of `Phi(n,m)` restricted to `Phi(m,0) U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedExtremes<T> {
    pub log_sigma_max: T,
    pub log_sigma_min: T,
    pub m: i64,
    pub n: i64,
    pub subspace_dim: usize,
}

/// `Phi(n, m)`.
pub fn transition<T: Real>(system: &CoefficientSequence<T>, m: i64, n: i64) -> Result<ScaledMatrix<T>> {
    system.check_time(m)?;
    system.check_time(n)?;
    let mut p = ScaledMatrix::identity(system.dim());
    if n >= m {
        for i in m..n {
            p.left_mul(&system.eval(i));
        }
    } else {
        for i in (n..m).rev() {
            p.left_mul(&system.eval_inv(i));
        }
    }
    Ok(p)
}

/// Relative defect `|Phi(n,k) Phi(k,m) - Phi(n,m)| / |Phi(n,m)|` (Frobenius).
pub fn cocycle_check<T: Real>(system: &CoefficientSequence<T>, m: i64, k: i64, n: i64) -> Result<T> {
    let mut composed = transition(system, m, k)?;
    composed.left_mul_scaled(&transition(system, k, n)?);
    let direct = transition(system, m, n)?;
    // Compare at the scale of the direct product.
    let rel = (composed.factor_log - direct.factor_log).exp();
    let diff = &composed.body * rel - &direct.body;
    Ok(diff.norm() / direct.body.norm())
}

/// Orthonormal basis of `Phi(m, 0) U`.
pub fn evolve_subspace<T: Real>(system: &CoefficientSequence<T>, u: &Subspace<T>, m: i64) -> Result<Subspace<T>> {
    if u.is_zero() {
        return Err(Error::ZeroSubspace);
    }
    system.check_time(m)?;
    let mut q = u.basis().clone();
    if m > 0 {
        for i in 0..m {
            q = positive_qr(system.eval(i) * q).0;
        }
    } else {
        for i in (m..0).rev() {
            q = positive_qr(system.eval_inv(i) * q).0;
        }
    }
    Ok(if m == 0 { u.clone() } else { Subspace::from_orthonormal(q) })
}

/// Extreme growth ratios `|x(n)| / |x(m)|` over nonzero `x(0)` in `U`, for `n >= m`.
pub fn restricted_extremes<T: Real>(
    system: &CoefficientSequence<T>,
    u: &Subspace<T>,
    m: i64,
    n: i64,
) -> Result<RestrictedExtremes<T>> {
    if u.is_zero() {
        return Err(Error::ZeroSubspace);
    }
    if n < m {
        return Err(Error::DimensionError(format!("window ({m}, {n}) must satisfy n >= m")));
    }
    system.check_time(m)?;
    system.check_time(n)?;
    let (lo, hi) = (m.min(0), n.max(0));
    let mat = system.materialize(lo, hi)?;
    let traj = SubspaceTrajectory::build(&mat, u.basis(), lo, hi);
    let (log_sigma_max, log_sigma_min) = traj.window(m, n);
    Ok(RestrictedExtremes { log_sigma_max, log_sigma_min, m, n, subspace_dim: u.dim() })
}

/// Orthonormal frame at time 0 ordered by growth, with the growth rates.
#[derive(Debug, Clone)]
pub struct DecayFrame<T: Real> {
    /// Frame at time 0; columns ordered from slowest to fastest forward growth
    /// (forward frames) or fastest to slowest backward growth (backward frames).
    pub frame: DMatrix<T>,
    /// Average growth rate of each column over the horizon.
    pub rates: Vec<T>,
    /// Frames at times `first, first + 1, ...` of the iteration.
    history: Vec<DMatrix<T>>,
    first: i64,
}

impl<T: Real> DecayFrame<T> {
    /// Span of the first `count` columns.
    pub fn leading(&self, count: usize) -> Subspace<T> {
        Subspace::from_orthonormal(self.frame.columns(0, count).into_owned())
    }

    /// Span of the last `count` columns.
    pub fn trailing(&self, count: usize) -> Subspace<T> {
        let d = self.frame.ncols();
        Subspace::from_orthonormal(self.frame.columns(d - count, count).into_owned())
    }

    /// Trajectory of the span of the first `count` columns on `[lo, hi]`.
    ///
    /// Inside the iteration range the stored frames are used instead of
    /// propagating from time 0, which keeps subspaces that are unstable in
    /// the propagation direction (such as slow directions under forward
    /// iteration) accurate over long horizons.
    pub fn anchored<S: Stepper<T> + ?Sized>(
        &self,
        stepper: &S,
        count: usize,
        lo: i64,
        hi: i64,
    ) -> SubspaceTrajectory<T> {
        let frames = self.history.iter().map(|f| f.columns(0, count).into_owned()).collect();
        SubspaceTrajectory::from_frames(stepper, self.first, frames, lo, hi)
    }
}

/// Orthonormal flag `Z_n` on `[lo, hi]` whose steps `Z_{n+1}^T A(n) Z_n` are
/// exactly upper triangular.
///
/// Coordinates in the flag keep exact zeros in their trailing rows under
/// propagation in both directions, so a subspace lying in the span of the
/// leading columns stays there. This is how subspaces that are unstable under
/// QR propagation (slow directions forward, fast ones backward) are evolved.
#[derive(Debug, Clone)]
pub struct TriangularFlag<T: Real> {
    lo: i64,
    hi: i64,
    frame0: DMatrix<T>,
    steps: Vec<DMatrix<T>>,
    inv_steps: Vec<DMatrix<T>>,
}

impl<T: Real> TriangularFlag<T> {
    /// Backward iteration from the end of the stepper's range: leading columns
    /// are the slowest forward directions. Steps are kept on `[lo, hi)`.
    pub fn slow<S: Stepper<T> + ?Sized>(stepper: &S, lo: i64, hi: i64, seed: u64) -> Self {
        let len = (hi - lo) as usize;
        let (mut steps, mut inv_steps) = (vec![DMatrix::zeros(0, 0); len], vec![DMatrix::zeros(0, 0); len]);
        let mut z = seeded_frame::<T>(stepper.dim(), seed);
        let mut frame0 = z.clone();
        for n in (lo..stepper.range().1).rev() {
            // A^{-1} Z_{n+1} = Z_n R, so Z_{n+1}^T A Z_n = R^{-1}.
            let (q, r) = positive_qr(stepper.backward(n, &z));
            if n < hi {
                steps[(n - lo) as usize] = upper_inverse(&r);
                inv_steps[(n - lo) as usize] = r;
            }
            z = q;
            if n == 0 {
                frame0 = z.clone();
            }
        }
        TriangularFlag { lo, hi, frame0, steps, inv_steps }
    }

    /// Forward iteration from the start of the stepper's range: leading columns
    /// are the fastest directions arriving at time 0.
    pub fn fast<S: Stepper<T> + ?Sized>(stepper: &S, lo: i64, hi: i64, seed: u64) -> Self {
        let len = (hi - lo) as usize;
        let (mut steps, mut inv_steps) = (vec![DMatrix::zeros(0, 0); len], vec![DMatrix::zeros(0, 0); len]);
        let mut z = seeded_frame::<T>(stepper.dim(), seed);
        let mut frame0 = z.clone();
        for n in stepper.range().0..hi {
            let (q, r) = positive_qr(stepper.forward(n, &z));
            if n >= lo {
                inv_steps[(n - lo) as usize] = upper_inverse(&r);
                steps[(n - lo) as usize] = r;
            }
            z = q;
            if n + 1 == 0 {
                frame0 = z.clone();
            }
        }
        TriangularFlag { lo, hi, frame0, steps, inv_steps }
    }

    /// The flag at time 0.
    pub fn frame0(&self) -> &DMatrix<T> {
        &self.frame0
    }

    /// Flag coordinates of `u` with the trailing rows zeroed, when `u` lies within
    /// `tol` of the span of some proper leading part of the flag at time 0.
    pub fn snap(&self, u: &Subspace<T>, tol: T) -> Option<DMatrix<T>> {
        let d = self.frame0.nrows();
        let mut c = self.frame0.transpose() * u.basis();
        let k = (u.dim()..d).find(|&k| c.rows(k, d - k).norm() <= tol)?;
        c.rows_mut(k, d - k).fill(T::zero());
        Some(positive_qr(c).0)
    }
}

impl<T: Real> Stepper<T> for TriangularFlag<T> {
    fn dim(&self) -> usize {
        self.frame0.nrows()
    }

    fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    fn forward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        &self.steps[(n - self.lo) as usize] * x
    }

    fn backward(&self, n: i64, x: &DMatrix<T>) -> DMatrix<T> {
        &self.inv_steps[(n - self.lo) as usize] * x
    }
}

fn seeded_frame<T: Real>(d: usize, seed: u64) -> DMatrix<T> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| T::lit(rng.sample::<f64, _>(rand_distr::StandardNormal)));
    positive_qr(g).0
}

/// Forward decay frame on `[0, t]`: subspace iteration with `A^{-1}` from `t` back to 0.
///
/// The first `k` columns approximate the `k` directions at time 0 whose
/// forward growth over `[0, t]` is slowest; `rates` are their average
/// exponential growth rates.
pub fn forward_decay_frame<T: Real, S: Stepper<T> + ?Sized>(stepper: &S, t: i64, seed: u64) -> DecayFrame<T> {
    let d = stepper.dim();
    let mut z = seeded_frame::<T>(d, seed);
    let mut acc = vec![T::zero(); d];
    let mut history = vec![z.clone()];
    for n in (0..t).rev() {
        let (q, r) = positive_qr(stepper.backward(n, &z));
        for (i, a) in acc.iter_mut().enumerate() {
            *a += r[(i, i)].ln();
        }
        z = q;
        history.push(z.clone());
    }
    history.reverse();
    let len = T::from_i64_lossy(t.max(1));
    DecayFrame { frame: z, rates: acc.iter().map(|&a| -a / len).collect(), history, first: 0 }
}

/// Backward decay frame on `[-t, 0]`: subspace iteration with `A` from `-t` up to 0.
///
/// The first `k` columns approximate the `k` directions at time 0 reached
/// with the fastest growth from time `-t`; `rates` are descending.
pub fn backward_decay_frame<T: Real, S: Stepper<T> + ?Sized>(stepper: &S, t: i64, seed: u64) -> DecayFrame<T> {
    let d = stepper.dim();
    let mut z = seeded_frame::<T>(d, seed);
    let mut acc = vec![T::zero(); d];
    let mut history = vec![z.clone()];
    for n in -t..0 {
        let (q, r) = positive_qr(stepper.forward(n, &z));
        for (i, a) in acc.iter_mut().enumerate() {
            *a += r[(i, i)].ln();
        }
        z = q;
        history.push(z.clone());
    }
    let len = T::from_i64_lossy(t.max(1));
    DecayFrame { frame: z, rates: acc.iter().map(|&a| a / len).collect(), history, first: -t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::principal_angles;
    use crate::systems::{make_constant, make_diagonal, make_identity, make_random, TimeDomain};
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn scalar(a: f64) -> CoefficientSequence<f64> {
        make_constant(DMatrix::from_element(1, 1, a)).unwrap().with_horizon(64)
    }

    #[test]
    fn transition_examples() {
        let s = make_random::<f64>(3, TimeDomain::TwoSided, 32, 0.3, 1);
        let p = transition(&s, 5, 5).unwrap();
        assert_eq!(p.factor_log, 0.0);
        assert_eq!(p.body, DMatrix::identity(3, 3));

        let id = make_identity::<f64>(2).with_horizon(20);
        assert_relative_eq!(transition(&id, 0, 10).unwrap().to_matrix(), DMatrix::identity(2, 2));

        let two = scalar(2.0);
        for n in [1, 7, 40] {
            assert_relative_eq!(transition(&two, 0, n).unwrap().log_norm(), n as f64 * LN_2, epsilon = 1e-12);
        }
        assert_relative_eq!(transition(&two, 0, -3).unwrap().log_norm(), -3.0 * LN_2, epsilon = 1e-12);
    }

    #[test]
    fn transition_rejects_out_of_horizon() {
        let s = scalar(2.0).with_domain(TimeDomain::OneSided);
        assert!(matches!(transition(&s, -1, 3), Err(Error::OutOfHorizon { .. })));
        assert!(matches!(transition(&s, 0, 65), Err(Error::OutOfHorizon { .. })));
    }

    #[test]
    fn long_products_do_not_overflow() {
        let big = make_diagonal(&[1.0f64, -1.0]).with_horizon(1000);
        let p = transition(&big, 0, 1000).unwrap();
        assert!(p.body.norm() >= 0.5 && p.body.norm() <= 2.0);
        assert_relative_eq!(p.log_norm(), 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn cocycle_examples() {
        let id = make_identity::<f64>(3).with_horizon(20);
        assert!(cocycle_check(&id, -4, 2, 9).unwrap() < 1e-12);
        let s = make_random::<f64>(3, TimeDomain::TwoSided, 32, 0.3, 7);
        assert!(cocycle_check(&s, 0, 5, 10).unwrap() <= 1e-8);
        assert_eq!(cocycle_check(&s, 3, 3, 3).unwrap(), 0.0);
    }

    #[test]
    fn evolve_examples() {
        let s = make_random::<f64>(2, TimeDomain::TwoSided, 16, 0.3, 3);
        let u = Subspace::coordinate(2, &[0]);
        assert_eq!(evolve_subspace(&s, &u, 0).unwrap(), u);

        let diag = make_diagonal(&[0.3f64, -0.2, 0.1]).with_horizon(10);
        let e1 = Subspace::coordinate(3, &[0]);
        for m in [-7, 3, 10] {
            let v = evolve_subspace(&diag, &e1, m).unwrap();
            assert!(principal_angles(&v, &e1).unwrap()[0] < 1e-12);
        }

        let rot = make_constant(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        let v = evolve_subspace(&rot, &u, 1).unwrap();
        assert!(principal_angles(&v, &Subspace::coordinate(2, &[1])).unwrap()[0] < 1e-12);
    }

    #[test]
    fn restricted_extremes_examples() {
        let id = make_identity::<f64>(2).with_horizon(20);
        let r = restricted_extremes(&id, &Subspace::full(2), -3, 8).unwrap();
        assert_eq!((r.log_sigma_max, r.log_sigma_min), (0.0, 0.0));

        let diag = make_diagonal(&[1.0f64, -1.0]).with_horizon(20);
        let r = restricted_extremes(&diag, &Subspace::full(2), 0, 10).unwrap();
        assert_relative_eq!(r.log_sigma_max, 10.0, epsilon = 1e-12);
        assert_relative_eq!(r.log_sigma_min, -10.0, epsilon = 1e-12);

        let s = make_random::<f64>(3, TimeDomain::TwoSided, 32, 0.4, 11);
        let line = crate::grassmann::sample_uniform(3, 1, 1, 4).unwrap().remove(0);
        let r = restricted_extremes(&s, &line, -5, 17).unwrap();
        assert_eq!(r.log_sigma_max, r.log_sigma_min);
        assert!(matches!(restricted_extremes(&s, &Subspace::zero(3), 0, 1), Err(Error::ZeroSubspace)));
    }

    #[test]
    fn sweep_matches_direct_windows() {
        let s = make_random::<f64>(3, TimeDomain::TwoSided, 24, 0.4, 5);
        let u = crate::grassmann::sample_uniform(3, 2, 1, 8).unwrap().remove(0);
        let mat = s.materialize(-24, 24).unwrap();
        let traj = SubspaceTrajectory::build(&mat, u.basis(), -24, 24);
        let pts = window_points(-24, 24, 5);
        let all = sweep_windows(
            &traj,
            &pts,
            1,
            Need::Both,
            Vec::new,
            |acc, w| acc.push(*w),
            |mut a, b| {
                a.extend(b);
                a
            },
        );
        assert_eq!(all.len(), pts.len() * (pts.len() - 1) / 2);
        for w in all.iter().step_by(7) {
            let r = restricted_extremes(&s, &u, w.m, w.n).unwrap();
            assert_relative_eq!(w.log_sigma_max, r.log_sigma_max, epsilon = 1e-9);
            assert_relative_eq!(w.log_sigma_min, r.log_sigma_min, epsilon = 1e-9);
        }
    }

    #[test]
    fn decay_frames_find_axes() {
        let diag = make_diagonal(&[1.0f64, -0.5, 0.2]).with_horizon(50);
        let mat = diag.materialize(-50, 50).unwrap();
        let f = forward_decay_frame(&mat, 50, 1);
        assert_relative_eq!(f.rates[0], -0.5, epsilon = 0.05);
        assert_relative_eq!(f.rates[2], 1.0, epsilon = 0.05);
        assert!(principal_angles(&f.leading(1), &Subspace::coordinate(3, &[1])).unwrap()[0] < 1e-6);
        let b = backward_decay_frame(&mat, 50, 1);
        assert_relative_eq!(b.rates[0], 1.0, epsilon = 0.05);
        assert!(principal_angles(&b.leading(1), &Subspace::coordinate(3, &[0])).unwrap()[0] < 1e-6);
    }
}
