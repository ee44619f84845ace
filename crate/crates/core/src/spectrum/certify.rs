//! Uniform dichotomy estimates `D1(γ,U)`, `D2(γ,U)` and dichotomy certificates.
//!
//! A uniform estimate holds when the running extreme of
//! `ln |Φ(n,m)|_U| − γ(n−m)` over window lengths stops drifting: the
//! least-squares slope over the longest quarter of lengths must stay within
//! [`SLOPE_TOL`].

use serde::Serialize;

use crate::bohl::{Direction, SearchConfig, WindowGrid, Workspace};
use crate::error::{Error, Result};
use crate::grassmann::{derive_seed, sample_in, Splitting, Subspace};
use crate::propagation::{sweep_windows, Need, SubspaceTrajectory};
use crate::scalar::{Extended, Real};
use crate::spectrum::assemble::GAP_TOL;
use crate::spectrum::dims::is_admissible;
use crate::systems::CoefficientSequence;

/// Largest tolerated drift (per unit window length) of the log running extreme.
pub const SLOPE_TOL: f64 = 0.005;

/// Number of α values tried by [`certify_dichotomy`].
pub const ALPHA_POINTS: usize = 8;

/// Outcome of one uniform estimate check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DCheck<T> {
    pub holds: bool,
    /// `sup` (D1) or `inf` (D2) over windows of `e^{−γ(n−m)} |Φ(n,m)|_U|`.
    pub constant: T,
    /// Drift of the log running extreme; positive means growth for D1 and decay for D2.
    pub slope: T,
    /// Failed, but by less than twice the tolerance.
    pub ambiguous: bool,
}

impl<T: Real> DCheck<T> {
    fn trivial() -> Self {
        DCheck { holds: true, constant: T::one(), slope: T::zero(), ambiguous: false }
    }

    fn from_drift(drift: T, constant: T) -> Self {
        let tol = T::lit(SLOPE_TOL);
        let holds = drift <= tol;
        DCheck { holds, constant, slope: drift, ambiguous: !holds && drift <= tol + tol }
    }

    fn conclusive_failure(&self) -> bool {
        !self.holds && !self.ambiguous
    }
}

/// Extreme log singular values of `Φ(n,m)|_U` for each window length `n − m`.
#[derive(Debug, Clone)]
pub struct GrowthProfile<T> {
    lengths: Vec<T>,
    max_log: Vec<T>,
    min_log: Vec<T>,
}

impl<T: Real> GrowthProfile<T> {
    /// Sweeps every window between `points` (the zero-length window is included).
    pub fn new(traj: &SubspaceTrajectory<T>, points: &[i64]) -> Self {
        let span = (points[points.len() - 1] - points[0]) as usize;
        let neg = T::lit(f64::NEG_INFINITY);
        let pos = T::lit(f64::INFINITY);
        let (hi, lo) = sweep_windows(
            traj,
            points,
            1,
            Need::Both,
            || (vec![neg; span + 1], vec![pos; span + 1]),
            |acc: &mut (Vec<T>, Vec<T>), w| {
                let len = (w.n - w.m) as usize;
                if w.log_sigma_max > acc.0[len] {
                    acc.0[len] = w.log_sigma_max;
                }
                if w.log_sigma_min < acc.1[len] {
                    acc.1[len] = w.log_sigma_min;
                }
            },
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(b.0) {
                    if y > *x {
                        *x = y;
                    }
                }
                for (x, y) in a.1.iter_mut().zip(b.1) {
                    if y < *x {
                        *x = y;
                    }
                }
                a
            },
        );
        let mut profile =
            GrowthProfile { lengths: vec![T::zero()], max_log: vec![T::zero()], min_log: vec![T::zero()] };
        for len in 1..=span {
            if hi[len].is_finite() {
                profile.lengths.push(T::from_usize_lossy(len));
                profile.max_log.push(hi[len]);
                profile.min_log.push(lo[len]);
            }
        }
        profile
    }

    /// Smallest `ln |Φ(n,m)|_U| − γ(n−m)` over the profile, with its length.
    pub fn min_excess(&self, gamma: T) -> (T, T) {
        self.lengths.iter().zip(&self.min_log).map(|(&l, &v)| (v - gamma * l, l)).fold(
            (T::lit(f64::INFINITY), T::zero()),
            |a, b| {
                if b.0 < a.0 {
                    b
                } else {
                    a
                }
            },
        )
    }

    /// Uniform `D1(γ, U)`.
    pub fn check_d1(&self, gamma: T) -> DCheck<T> {
        let mut run = T::zero();
        let series: Vec<T> = self
            .lengths
            .iter()
            .zip(&self.max_log)
            .map(|(&l, &v)| {
                run = run.max(v - gamma * l);
                run
            })
            .collect();
        DCheck::from_drift(tail_slope(&self.lengths, &series), run.exp())
    }

    /// Uniform `D2(γ, U)`.
    pub fn check_d2(&self, gamma: T) -> DCheck<T> {
        let mut run = T::zero();
        let series: Vec<T> = self
            .lengths
            .iter()
            .zip(&self.min_log)
            .map(|(&l, &v)| {
                run = run.min(v - gamma * l);
                run
            })
            .collect();
        DCheck::from_drift(-tail_slope(&self.lengths, &series), run.exp())
    }
}

/// Least-squares slope over the largest quarter of the lengths.
fn tail_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let n = x.len();
    if n < 2 {
        return T::zero();
    }
    let start = (3 * n / 4).min(n - 2);
    let (xs, ys) = (&x[start..], &y[start..]);
    let k = T::from_usize_lossy(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &v| a + v) / k;
    let my = ys.iter().fold(T::zero(), |a, &v| a + v) / k;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in xs.iter().zip(ys) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx > T::zero() {
        sxy / sxx
    } else {
        T::zero()
    }
}

fn profile_of<T: Real>(ws: &Workspace<T>, u: &Subspace<T>) -> GrowthProfile<T> {
    GrowthProfile::new(&ws.trajectory(u), ws.full_points())
}

/// Uniform `D1(γ, U)` on the full window grid.
pub fn check_d1<T: Real>(
    system: &CoefficientSequence<T>,
    gamma: T,
    u: &Subspace<T>,
    grid: &WindowGrid,
) -> Result<DCheck<T>> {
    if u.is_zero() {
        return Ok(DCheck::trivial());
    }
    let ws = Workspace::new(system, grid, 2)?;
    Ok(profile_of(&ws, u).check_d1(gamma))
}

/// Uniform `D2(γ, U)` on the full window grid.
pub fn check_d2<T: Real>(
    system: &CoefficientSequence<T>,
    gamma: T,
    u: &Subspace<T>,
    grid: &WindowGrid,
) -> Result<DCheck<T>> {
    if u.is_zero() {
        return Ok(DCheck::trivial());
    }
    let ws = Workspace::new(system, grid, 2)?;
    Ok(profile_of(&ws, u).check_d2(gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    FailsD1,
    FailsD2,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyCertificate<T: Real> {
    pub gamma: T,
    /// Rate margin at which the estimates were decided (the smallest tried when none holds).
    pub alpha: T,
    pub splitting: Splitting<T>,
    pub dims: (usize, usize),
    pub c1_max: T,
    pub c2_min: T,
    pub samples: usize,
    pub verdict: Verdict,
    /// `sup` of upper Bohl exponents over the D1 samples and `inf` of lower ones over the D2 samples.
    pub exponent_bounds: (Extended<T>, Extended<T>),
    pub alphas: Vec<T>,
}

/// Profiles of random elements of `G_j(L)` (just `L` when `j = dim L`).
struct SideSamples<T> {
    profiles: Vec<GrowthProfile<T>>,
    extreme: Extended<T>,
}

fn side_samples<T: Real>(
    ws: &Workspace<T>,
    l: &Subspace<T>,
    j: usize,
    direction: Direction,
    cfg: &SearchConfig,
    stream: u64,
) -> Result<SideSamples<T>> {
    let mut out = SideSamples { profiles: Vec::new(), extreme: direction.empty() };
    for u in grassmann_samples(l, j, cfg, stream)? {
        let traj = ws.trajectory(&u);
        let v = ws.estimate_trajectory(&traj, direction).value;
        out.extreme = match direction {
            Direction::Upper => out.extreme.max_ext(v),
            Direction::Lower => out.extreme.min_ext(v),
        };
        out.profiles.push(GrowthProfile::new(&traj, ws.full_points()));
    }
    Ok(out)
}

/// `cfg.check_samples` random elements of `G_j(L)`; only `L` itself when `j = dim L`, none when `j = 0`.
pub(crate) fn grassmann_samples<T: Real>(
    l: &Subspace<T>,
    j: usize,
    cfg: &SearchConfig,
    stream: u64,
) -> Result<Vec<Subspace<T>>> {
    if j == 0 {
        return Ok(Vec::new());
    }
    if j == l.dim() {
        return Ok(vec![l.clone()]);
    }
    sample_in(l, j, cfg.check_samples, derive_seed(cfg.seed, stream))
}

/// `α` grid: geometric from the distance of `γ` to the sampled exponents down to [`GAP_TOL`].
fn alpha_grid<T: Real>(gamma: T, s1: Extended<T>, s2: Extended<T>) -> Vec<T> {
    let tol = T::lit(GAP_TOL);
    let d1 = match s1 {
        Extended::Finite(s) => Some(gamma - s),
        Extended::NegInf => None,
        Extended::PosInf => Some(T::lit(f64::NEG_INFINITY)),
    };
    let d2 = match s2 {
        Extended::Finite(s) => Some(s - gamma),
        Extended::PosInf => None,
        Extended::NegInf => Some(T::lit(f64::NEG_INFINITY)),
    };
    let top = match (d1, d2) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => T::one(),
    };
    if !(top > tol) {
        return vec![tol];
    }
    let ratio = tol / top;
    (0..ALPHA_POINTS)
        .map(|i| top * ratio.powf(T::from_usize_lossy(i) / T::from_usize_lossy(ALPHA_POINTS - 1)))
        .collect()
}

/// Numerical evidence for a dichotomy at rate `γ` on `splitting` with uniformity dimensions `dims`.
pub fn certify_dichotomy<T: Real>(
    system: &CoefficientSequence<T>,
    gamma: T,
    splitting: &Splitting<T>,
    dims: (usize, usize),
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<DichotomyCertificate<T>> {
    let ws = Workspace::new(system, grid, cfg.search_points)?;
    certify_in(&ws, gamma, splitting, dims, cfg)
}

pub(crate) fn certify_in<T: Real>(
    ws: &Workspace<T>,
    gamma: T,
    splitting: &Splitting<T>,
    dims: (usize, usize),
    cfg: &SearchConfig,
) -> Result<DichotomyCertificate<T>> {
    cfg.validate()?;
    let d = ws.dim();
    let k = splitting.l1().dim();
    if splitting.l1().ambient_dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "splitting lives in R^{}, system in R^{d}",
            splitting.l1().ambient_dim()
        )));
    }
    if !is_admissible(d, k, dims.0, dims.1) {
        return Err(Error::Config(format!("uniformity dimensions {dims:?} are not {k}-admissible in dimension {d}")));
    }
    let side1 = side_samples(ws, splitting.l1(), dims.0, Direction::Upper, cfg, 0xD1)?;
    let side2 = side_samples(ws, splitting.l2(), dims.1, Direction::Lower, cfg, 0xD2)?;
    let alphas = alpha_grid(gamma, side1.extreme, side2.extreme);

    let mut decided = None;
    for &alpha in &alphas {
        let c1: Vec<DCheck<T>> = side1.profiles.iter().map(|p| p.check_d1(gamma - alpha)).collect();
        let c2: Vec<DCheck<T>> = side2.profiles.iter().map(|p| p.check_d2(gamma + alpha)).collect();
        let holds = c1.iter().chain(&c2).all(|c| c.holds);
        decided = Some((alpha, c1, c2));
        if holds {
            break;
        }
    }
    let (alpha, c1, c2) = decided.expect("alpha grid is nonempty");
    let verdict = if c1.iter().chain(&c2).all(|c| c.holds) {
        Verdict::Holds
    } else if c1.iter().any(DCheck::conclusive_failure) {
        Verdict::FailsD1
    } else if c2.iter().any(DCheck::conclusive_failure) {
        Verdict::FailsD2
    } else {
        Verdict::Inconclusive
    };
    let c1_max = c1.iter().fold(T::one(), |a, c| a.max(c.constant));
    let c2_min = c2.iter().fold(T::one(), |a, c| a.min(c.constant));
    Ok(DichotomyCertificate {
        gamma,
        alpha,
        splitting: splitting.clone(),
        dims,
        c1_max,
        c2_min,
        samples: c1.len() + c2.len(),
        verdict,
        exponent_bounds: (side1.extreme, side2.extreme),
        alphas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_constant, make_diagonal, make_identity};
    use nalgebra::DMatrix;

    fn quick() -> SearchConfig {
        SearchConfig {
            outer_starts: 4,
            inner_samples: 8,
            rounds: 4,
            neighbors: 3,
            check_samples: 4,
            ..SearchConfig::default()
        }
    }

    fn scalar(a: f64) -> CoefficientSequence<f64> {
        make_constant(DMatrix::from_element(1, 1, a)).unwrap()
    }

    #[test]
    fn scalar_growth_checks() {
        let grid = WindowGrid::new(256);
        let u = Subspace::full(1);
        assert!(!check_d1(&scalar(2.0), 0.0, &u, &grid).unwrap().holds);
        let c = check_d1(&scalar(2.0), 2f64.ln(), &u, &grid).unwrap();
        assert!(c.holds);
        assert!((c.constant - 1.0).abs() < 1e-9);
        let c = check_d2(&scalar(2.0), 2f64.ln(), &u, &grid).unwrap();
        assert!(c.holds);
        assert!((c.constant - 1.0).abs() < 1e-9);
        assert!(!check_d2(&scalar(0.5), 0.0, &u, &grid).unwrap().holds);
    }

    #[test]
    fn identity_checks() {
        let grid = WindowGrid::new(128);
        let sys = make_identity::<f64>(2);
        let u = Subspace::coordinate(2, &[0]);
        let c = check_d1(&sys, 0.5, &u, &grid).unwrap();
        assert!(c.holds && (c.constant - 1.0).abs() < 1e-12);
        assert!(check_d2(&sys, -0.5, &u, &grid).unwrap().holds);
    }

    #[test]
    fn diagonal_certificates() {
        let grid = WindowGrid::new(256);
        let sys = make_diagonal(&[1.0, -1.0]);
        let split = Splitting::new(Subspace::coordinate(2, &[1]), Subspace::coordinate(2, &[0])).unwrap();
        let cert: DichotomyCertificate<f64> = certify_dichotomy(&sys, 0.0, &split, (1, 1), &grid, &quick()).unwrap();
        assert_eq!(cert.verdict, Verdict::Holds);
        assert!((cert.alpha - 1.0).abs() < 0.05, "alpha {}", cert.alpha);
        assert!(cert.c1_max.is_finite() && cert.c2_min > 0.0);
        let cert = certify_dichotomy(&sys, 1.0, &split, (1, 1), &grid, &quick()).unwrap();
        assert!(matches!(cert.verdict, Verdict::FailsD1 | Verdict::FailsD2), "{:?}", cert.verdict);
    }

    #[test]
    fn identity_has_no_decay_margin() {
        let grid = WindowGrid::new(128);
        let sys = make_identity::<f64>(2);
        let split = Splitting::new(Subspace::zero(2), Subspace::full(2)).unwrap();
        let cert = certify_dichotomy(&sys, 0.0, &split, (0, 2), &grid, &quick()).unwrap();
        assert_eq!(cert.verdict, Verdict::FailsD2);
    }

    #[test]
    fn inadmissible_dims_rejected() {
        let grid = WindowGrid::new(64);
        let sys = make_identity::<f64>(2);
        let split = Splitting::orthogonal(Subspace::coordinate(2, &[0])).unwrap();
        assert!(matches!(certify_dichotomy(&sys, 0.0, &split, (2, 1), &grid, &quick()), Err(Error::Config(_))));
    }
}
