//! Upper and lower Bohl exponents of subspaces and the limiting exponents
//! `beta_bar_{k,j}` (inf over `G_k` of sup over `G_j(L)`) and
//! `beta_low_{k,j}` (sup over `G_{d-k}` of inf over `G_j(L)`).
//!
//! Exponents are finite-horizon estimates: for each window floor `N` the
//! sup (upper) or inf (lower) of `ln(sigma) / (n - m)` over sampled windows
//! with `n - m > N`; the value reported is the one at the largest floor.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{derive_seed, perturb, sample_uniform, Subspace};
use crate::propagation::{
    backward_decay_frame, forward_decay_frame, sweep_windows, window_points, Need, Stepper, SubspaceTrajectory,
    TriangularFlag,
};
use crate::scalar::{Extended, Real};
use crate::systems::{CoefficientSequence, Materialized, SystemBounds, TimeDomain};

/// Largest spread between the last two floors for an estimate to count as converged.
pub const CONV_TOL: f64 = 0.02;

/// Horizon up to which every window is sampled.
pub const FULL_SWEEP_HORIZON: usize = 512;

/// Windows `(m, n)` sampled by the estimators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowGrid {
    pub horizon: usize,
    pub window_floors: Vec<usize>,
    pub window_stride: usize,
}

impl WindowGrid {
    /// Floors `T/16, T/8, T/4, T/2` and the default stride.
    pub fn new(horizon: usize) -> Self {
        let mut floors: Vec<usize> = [16, 8, 4, 2].iter().map(|q| horizon / q).collect();
        floors.dedup();
        WindowGrid { horizon, window_floors: floors, window_stride: Self::default_stride(horizon) }
    }

    pub fn with_floors(horizon: usize, floors: Vec<usize>) -> Result<Self> {
        let grid = WindowGrid { horizon, window_floors: floors, window_stride: Self::default_stride(horizon) };
        grid.validate()?;
        Ok(grid)
    }

    /// 1 up to [`FULL_SWEEP_HORIZON`], then growing with `log2` of the horizon.
    pub fn default_stride(horizon: usize) -> usize {
        if horizon <= FULL_SWEEP_HORIZON {
            1
        } else {
            1 + (horizon as f64 / FULL_SWEEP_HORIZON as f64).log2().ceil() as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.window_stride == 0 {
            return Err(Error::Config("window stride must be at least 1".into()));
        }
        if self.window_floors.is_empty() {
            return Err(Error::Config("at least one window floor is required".into()));
        }
        if self.window_floors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("window floors must be strictly increasing".into()));
        }
        if *self.window_floors.last().unwrap() >= self.horizon {
            return Err(Error::Config("window floors must be below the horizon".into()));
        }
        Ok(())
    }

    pub fn largest_floor(&self) -> usize {
        *self.window_floors.last().expect("validated grid has floors")
    }
}

/// Budgets of the Grassmannian min-max searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub outer_starts: usize,
    pub inner_samples: usize,
    pub rounds: usize,
    /// Perturbations tried per refinement round.
    pub neighbors: usize,
    pub initial_step: f64,
    /// Approximate number of time points per axis used while searching.
    pub search_points: usize,
    /// Random subspaces checked per splitting space by the certificate and uniformity routines.
    pub check_samples: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            outer_starts: 32,
            inner_samples: 64,
            rounds: 20,
            neighbors: 4,
            initial_step: 0.5,
            search_points: 64,
            check_samples: 16,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_starts == 0 || self.inner_samples == 0 || self.check_samples == 0 || self.search_points < 2 {
            return Err(Error::Config("search budgets must be positive".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial search step must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    fn need(self) -> Need {
        match self {
            Direction::Upper => Need::Max,
            Direction::Lower => Need::Min,
        }
    }

    /// `+1` for upper, `-1` for lower: the search always maximizes `sign * rate`.
    fn sign<T: Real>(self) -> T {
        match self {
            Direction::Upper => T::one(),
            Direction::Lower => -T::one(),
        }
    }

    pub fn empty<T: Real>(self) -> Extended<T> {
        match self {
            Direction::Upper => Extended::NegInf,
            Direction::Lower => Extended::PosInf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BohlEstimate<T: Real> {
    pub value: Extended<T>,
    pub per_floor: Vec<(usize, Extended<T>)>,
    pub direction: Direction,
    pub converged: bool,
    pub spread: T,
}

impl<T: Real> BohlEstimate<T> {
    fn from_floors(direction: Direction, floors: &[usize], values: Vec<Extended<T>>) -> Self {
        let value = *values.last().expect("at least one floor");
        let spread = match (values.len(), value) {
            (n, Extended::Finite(last)) if n >= 2 => match values[n - 2] {
                Extended::Finite(prev) => (last - prev).abs(),
                _ => T::zero(),
            },
            _ => T::zero(),
        };
        BohlEstimate {
            value,
            per_floor: floors.iter().copied().zip(values).collect(),
            direction,
            converged: spread <= T::lit(CONV_TOL),
            spread,
        }
    }

    fn infinite(direction: Direction, floors: &[usize]) -> Self {
        Self::from_floors(direction, floors, vec![direction.empty(); floors.len()])
    }

    /// Convergence trace as `N,value` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("N,value\n");
        for (n, v) in &self.per_floor {
            let _ = writeln!(out, "{n},{v}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitingEstimate<T: Real> {
    pub value: Extended<T>,
    #[serde(serialize_with = "serialize_subspace")]
    pub witness_l: Subspace<T>,
    #[serde(serialize_with = "serialize_subspace")]
    pub inner_witness: Subspace<T>,
    pub search_trace: Vec<(usize, Extended<T>)>,
    /// Witness estimate per window floor.
    pub per_floor: Vec<(usize, Extended<T>)>,
    /// Convergence of the witness estimate across floors.
    pub converged: bool,
}

pub(crate) fn serialize_subspace<T: Real, S: serde::Serializer>(
    u: &Subspace<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    u.to_rows().serialize(s)
}

/// Result of an inner Grassmannian search.
#[derive(Debug, Clone)]
pub struct InnerExtreme<T: Real> {
    pub value: Extended<T>,
    pub witness: Subspace<T>,
    /// Trajectory of the witness (in the coordinates of the searched space).
    pub trajectory: Arc<SubspaceTrajectory<T>>,
}

/// A system prepared for repeated exponent evaluations on one grid.
pub struct Workspace<T: Real> {
    domain: TimeDomain,
    mat: Materialized<T>,
    grid: WindowGrid,
    full_points: Vec<i64>,
    search_points: Vec<i64>,
    lo: i64,
    hi: i64,
    slow: TriangularFlag<T>,
    /// Two-sided time only.
    fast: Option<TriangularFlag<T>>,
}

/// Subspaces this close to a part of a triangular flag are evolved inside it.
pub const SNAP_TOL: f64 = 1e-9;

impl<T: Real> Workspace<T> {
    pub fn new(system: &CoefficientSequence<T>, grid: &WindowGrid, search_points: usize) -> Result<Self> {
        grid.validate()?;
        let (lo, hi) = system.time_range(grid.horizon);
        let mat = system.materialize(lo, hi)?;
        let span = (hi - lo) as usize;
        let stride = grid.window_stride;
        let factor = span.div_ceil(stride * search_points.max(2)).max(1);
        // Flags iterate over half a window length beyond the horizon so that they
        // have converged by the time they enter it.
        let burn = (span as i64 / 2).max(16);
        let ext_lo = if lo < 0 { lo - burn } else { lo };
        let ext = system.materialize_unchecked(ext_lo, hi + burn);
        let slow = TriangularFlag::slow(&ext, lo, hi, 0x51_0E);
        let fast = (lo < 0).then(|| TriangularFlag::fast(&ext, lo, hi, 0xFA_57));
        Ok(Workspace {
            domain: system.domain(),
            mat,
            grid: grid.clone(),
            full_points: window_points(lo, hi, stride),
            search_points: window_points(lo, hi, stride * factor),
            lo,
            hi,
            slow,
            fast,
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn grid(&self) -> &WindowGrid {
        &self.grid
    }

    pub fn domain(&self) -> TimeDomain {
        self.domain
    }

    pub fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn materialized(&self) -> &Materialized<T> {
        &self.mat
    }

    pub fn full_points(&self) -> &[i64] {
        &self.full_points
    }

    /// Trajectory of `u`.
    ///
    /// Subspaces on the slow flag are propagated forward in flag coordinates,
    /// and subspaces on the fast flag (two-sided time) backward, so rounding
    /// cannot pull them off it in the direction where QR propagation repels them.
    pub fn trajectory(&self, u: &Subspace<T>) -> SubspaceTrajectory<T> {
        let tol = T::lit(SNAP_TOL);
        if !u.is_zero() {
            if let Some(y) = self.slow.snap(u, tol) {
                let b0 = self.slow.frame0() * &y;
                return SubspaceTrajectory::split(&self.slow, &y, &self.mat, &b0, self.lo, self.hi);
            }
            if let Some(y) = self.fast.as_ref().and_then(|f| f.snap(u, tol)) {
                let fast = self.fast.as_ref().expect("checked above");
                let b0 = fast.frame0() * &y;
                return SubspaceTrajectory::split(&self.mat, &b0, fast, &y, self.lo, self.hi);
            }
        }
        SubspaceTrajectory::build(&self.mat, u.basis(), self.lo, self.hi)
    }

    pub fn upper(&self, u: &Subspace<T>) -> BohlEstimate<T> {
        self.estimate(u, Direction::Upper)
    }

    pub fn lower(&self, u: &Subspace<T>) -> BohlEstimate<T> {
        self.estimate(u, Direction::Lower)
    }

    pub fn estimate(&self, u: &Subspace<T>, direction: Direction) -> BohlEstimate<T> {
        if u.is_zero() {
            return BohlEstimate::infinite(direction, &self.grid.window_floors);
        }
        self.estimate_trajectory(&self.trajectory(u), direction)
    }

    /// Estimate from a precomputed trajectory (full or reduced coordinates).
    pub fn estimate_trajectory(&self, traj: &SubspaceTrajectory<T>, direction: Direction) -> BohlEstimate<T> {
        let best = floor_extremes(traj, &self.full_points, &self.grid.window_floors, direction);
        let sign = direction.sign::<T>();
        let values = best.into_iter().map(|b| b.map_or(direction.empty(), |v| Extended::Finite(sign * v))).collect();
        BohlEstimate::from_floors(direction, &self.grid.window_floors, values)
    }

    /// `max sign * rate` at the largest floor on the search points.
    fn objective(&self, traj: &SubspaceTrajectory<T>, direction: Direction) -> T {
        let floor = [self.grid.largest_floor()];
        floor_extremes(traj, &self.search_points, &floor, direction)[0].unwrap_or(T::lit(f64::NEG_INFINITY))
    }

    pub fn limiting_upper(&self, k: usize, j: usize, cfg: &SearchConfig) -> Result<LimitingEstimate<T>> {
        let d = self.dim();
        if k > d || j > k {
            return Err(Error::DimensionError(format!(
                "limiting upper exponent needs 0 <= j <= k <= d, got k={k}, j={j}, d={d}"
            )));
        }
        self.limiting(k, j, Direction::Upper, cfg)
    }

    pub fn limiting_lower(&self, k: usize, j: usize, cfg: &SearchConfig) -> Result<LimitingEstimate<T>> {
        let d = self.dim();
        if k > d || j > d - k {
            return Err(Error::DimensionError(format!(
                "limiting lower exponent needs 0 <= j <= d-k <= d, got k={k}, j={j}, d={d}"
            )));
        }
        self.limiting(d - k, j, Direction::Lower, cfg)
    }

    /// Outer minimization over `L` in `G_dim_l` of the inner maximum of `sign * rate`.
    fn limiting(
        &self,
        dim_l: usize,
        j: usize,
        direction: Direction,
        cfg: &SearchConfig,
    ) -> Result<LimitingEstimate<T>> {
        cfg.validate()?;
        let d = self.dim();
        if dim_l == 0 || j == 0 {
            return Ok(LimitingEstimate {
                value: direction.empty(),
                witness_l: Subspace::coordinate(d, &(0..dim_l).collect::<Vec<_>>()),
                inner_witness: Subspace::zero(d),
                search_trace: Vec::new(),
                per_floor: self.grid.window_floors.iter().map(|&f| (f, direction.empty())).collect(),
                converged: true,
            });
        }
        let seed = derive_seed(cfg.seed, (dim_l * 31 + j) as u64 ^ ((direction as u64) << 40));
        let eval = |c: &Candidate<T>, s: u64| self.inner_search(c, j, direction, cfg, s);

        // Upper exponents minimize growth over L, lower ones maximize it.
        let mut starts = if dim_l == d {
            vec![Candidate::plain(Subspace::full(d))]
        } else {
            let want = if direction == Direction::Upper { Want::Slow } else { Want::Fast };
            heuristics(&self.mat, dim_l, want, self.lo, self.hi, seed)
        };
        if dim_l < d {
            let random = cfg.outer_starts.saturating_sub(starts.len());
            starts.extend(sample_uniform(d, dim_l, random, derive_seed(seed, 1))?.into_iter().map(Candidate::plain));
        }
        let scored: Vec<Scored<T>> =
            starts.par_iter().enumerate().map(|(i, c)| eval(c, derive_seed(seed, 100 + i as u64))).collect();
        let mut best_i = 0;
        for (i, sc) in scored.iter().enumerate() {
            if improves(sc.value, scored[best_i].value) {
                best_i = i;
            }
        }
        let mut best = scored[best_i].clone();
        let mut best_l = starts[best_i].l.clone();
        let sign = direction.sign::<T>();
        let mut trace = vec![(0, Extended::Finite(sign * best.value))];

        if dim_l < d {
            let mut step = T::lit(cfg.initial_step);
            for round in 1..=cfg.rounds {
                let round_seed = derive_seed(seed, 10_000 + round as u64);
                let cands: Vec<Candidate<T>> =
                    perturb(&best_l, step, cfg.neighbors, round_seed).into_iter().map(Candidate::plain).collect();
                let scored: Vec<Scored<T>> =
                    cands.par_iter().enumerate().map(|(i, c)| eval(c, derive_seed(round_seed, i as u64))).collect();
                let mut pick: Option<usize> = None;
                for (i, sc) in scored.iter().enumerate() {
                    if improves(sc.value, pick.map_or(best.value, |p| scored[p].value)) {
                        pick = Some(i);
                    }
                }
                match pick {
                    Some(p) => {
                        best = scored[p].clone();
                        best_l = cands[p].l.clone();
                    }
                    None => step *= T::lit(0.5),
                }
                trace.push((round, Extended::Finite(sign * best.value)));
            }
        }

        let est = self.estimate_trajectory(&best.traj, direction);
        Ok(LimitingEstimate {
            value: est.value,
            witness_l: best_l,
            inner_witness: best.u,
            search_trace: trace,
            per_floor: est.per_floor,
            converged: est.converged,
        })
    }

    /// `sup { beta_bar(U) : U in G_j(L) }` by the inner search, with its witness.
    pub fn sup_upper_in(&self, l: &Subspace<T>, j: usize, cfg: &SearchConfig) -> Result<InnerExtreme<T>> {
        self.extreme_in(l, j, Direction::Upper, cfg)
    }

    /// `inf { beta_low(U) : U in G_j(L) }` by the inner search, with its witness.
    pub fn inf_lower_in(&self, l: &Subspace<T>, j: usize, cfg: &SearchConfig) -> Result<InnerExtreme<T>> {
        self.extreme_in(l, j, Direction::Lower, cfg)
    }

    fn extreme_in(
        &self,
        l: &Subspace<T>,
        j: usize,
        direction: Direction,
        cfg: &SearchConfig,
    ) -> Result<InnerExtreme<T>> {
        cfg.validate()?;
        if j == 0 || j > l.dim() {
            return Err(Error::DimensionError(format!("need 1 <= j <= dim L = {}, got j = {j}", l.dim())));
        }
        let seed = derive_seed(cfg.seed, (0x1_0000 + (l.dim() * 31 + j) as u64) ^ ((direction as u64) << 40));
        let sc = self.inner_search(&Candidate::plain(l.clone()), j, direction, cfg, seed);
        let est = self.estimate_trajectory(&sc.traj, direction);
        Ok(InnerExtreme { value: est.value, witness: sc.u, trajectory: sc.traj })
    }

    /// Inner maximum of `sign * rate` over `U` in `G_j(L)`.
    fn inner_search(
        &self,
        cand: &Candidate<T>,
        j: usize,
        direction: Direction,
        cfg: &SearchConfig,
        seed: u64,
    ) -> Scored<T> {
        let l = &cand.l;
        let traj_l = cand.traj.clone().unwrap_or_else(|| Arc::new(self.trajectory(l)));
        let k = l.dim();
        if j == k {
            return Scored { value: self.objective(&traj_l, direction), u: l.clone(), traj: traj_l };
        }
        let build = |c: &Subspace<T>| SubspaceTrajectory::build(&*traj_l, c.basis(), self.lo, self.hi);
        // The inner search maximizes growth for upper exponents and minimizes it for lower ones.
        let want = if direction == Direction::Upper { Want::Fast } else { Want::Slow };
        let mut cands = heuristics(&*traj_l, j, want, self.lo, self.hi, derive_seed(seed, 3));
        let random = cfg.inner_samples.saturating_sub(cands.len());
        cands.extend(
            sample_uniform(k, j, random, derive_seed(seed, 4)).expect("j < k").into_iter().map(Candidate::plain),
        );
        let mut best: Option<(T, Subspace<T>, Arc<SubspaceTrajectory<T>>)> = None;
        for c in cands {
            let traj = c.traj.unwrap_or_else(|| Arc::new(build(&c.l)));
            let v = self.objective(&traj, direction);
            if best.as_ref().is_none_or(|b| improves_max(v, b.0)) {
                best = Some((v, c.l, traj));
            }
        }
        let (mut best_v, mut best_c, mut best_t) = best.expect("at least one inner candidate");
        let mut step = T::lit(cfg.initial_step);
        for round in 0..cfg.rounds {
            let mut moved = false;
            for c in perturb(&best_c, step, cfg.neighbors, derive_seed(seed, 1000 + round as u64)) {
                let traj = build(&c);
                let v = self.objective(&traj, direction);
                if improves_max(v, best_v) {
                    best_v = v;
                    best_c = c;
                    best_t = Arc::new(traj);
                    moved = true;
                }
            }
            if !moved {
                step *= T::lit(0.5);
            }
        }
        let u = Subspace::orthonormalize(&(l.basis() * best_c.basis())).unwrap_or_else(|_| l.clone());
        Scored { value: best_v, u, traj: best_t }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Want {
    Slow,
    Fast,
}

/// A candidate subspace, optionally with a trajectory computed more accurately
/// than forward/backward propagation from time 0.
struct Candidate<T: Real> {
    l: Subspace<T>,
    traj: Option<Arc<SubspaceTrajectory<T>>>,
}

impl<T: Real> Candidate<T> {
    fn plain(l: Subspace<T>) -> Self {
        Candidate { l, traj: None }
    }
}

#[derive(Clone)]
struct Scored<T: Real> {
    value: T,
    u: Subspace<T>,
    traj: Arc<SubspaceTrajectory<T>>,
}

/// Decay-frame candidates of dimension `count` with slowest or fastest growth.
///
/// Slow forward directions and fast backward directions come with anchored
/// trajectories, since propagating them from time 0 is unstable.
fn heuristics<T: Real, S: Stepper<T> + ?Sized>(
    stepper: &S,
    count: usize,
    want: Want,
    lo: i64,
    hi: i64,
    seed: u64,
) -> Vec<Candidate<T>> {
    let d = stepper.dim();
    let fwd = forward_decay_frame(stepper, hi, derive_seed(seed, 7));
    let bwd = (lo < 0).then(|| backward_decay_frame(stepper, -lo, derive_seed(seed, 8)));
    let mut out = Vec::new();
    match want {
        Want::Slow => {
            out.push(Candidate { l: fwd.leading(count), traj: Some(Arc::new(fwd.anchored(stepper, count, lo, hi))) });
            if let Some(b) = bwd {
                out.push(Candidate::plain(b.leading(d - count).orthogonal_complement()));
            }
        }
        Want::Fast => {
            out.push(Candidate::plain(fwd.trailing(count)));
            if let Some(b) = bwd {
                out.push(Candidate { l: b.leading(count), traj: Some(Arc::new(b.anchored(stepper, count, lo, hi))) });
            }
        }
    }
    out
}

/// Relative acceptance threshold; keeps searches stable under constant shifts of the objective.
fn accept_margin<T: Real>(v: T) -> T {
    T::lit(1e-12) * (T::one() + v.abs())
}

fn improves<T: Real>(candidate: T, incumbent: T) -> bool {
    candidate < incumbent - accept_margin(incumbent)
}

fn improves_max<T: Real>(candidate: T, incumbent: T) -> bool {
    candidate > incumbent + accept_margin(incumbent)
}

/// For each floor `N`, the max over windows with `n - m > N` of `sign * ln(sigma) / (n - m)`.
fn floor_extremes<T: Real>(
    traj: &SubspaceTrajectory<T>,
    points: &[i64],
    floors: &[usize],
    direction: Direction,
) -> Vec<Option<T>> {
    let sign = direction.sign::<T>();
    let min_len = floors[0] as i64 + 1;
    sweep_windows(
        traj,
        points,
        min_len,
        direction.need(),
        || vec![None; floors.len()],
        |acc: &mut Vec<Option<T>>, w| {
            let len = w.n - w.m;
            let raw = match direction {
                Direction::Upper => w.log_sigma_max,
                Direction::Lower => w.log_sigma_min,
            };
            let rate = sign * raw / T::from_i64_lossy(len);
            for (slot, &f) in acc.iter_mut().zip(floors) {
                if len as usize <= f {
                    break;
                }
                if slot.is_none_or(|s| rate > s) {
                    *slot = Some(rate);
                }
            }
        },
        |a, b| {
            a.into_iter()
                .zip(b)
                .map(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => Some(if y > x { y } else { x }),
                    (x, None) => x,
                    (None, y) => y,
                })
                .collect()
        },
    )
}

/// `beta_bar(U)`.
pub fn upper_bohl<T: Real>(
    system: &CoefficientSequence<T>,
    u: &Subspace<T>,
    grid: &WindowGrid,
) -> Result<BohlEstimate<T>> {
    Ok(Workspace::new(system, grid, 2)?.upper(u))
}

/// `beta_low(U)`.
pub fn lower_bohl<T: Real>(
    system: &CoefficientSequence<T>,
    u: &Subspace<T>,
    grid: &WindowGrid,
) -> Result<BohlEstimate<T>> {
    Ok(Workspace::new(system, grid, 2)?.lower(u))
}

/// `beta_bar_{k,j}`.
pub fn limiting_upper<T: Real>(
    system: &CoefficientSequence<T>,
    k: usize,
    j: usize,
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<LimitingEstimate<T>> {
    Workspace::new(system, grid, cfg.search_points)?.limiting_upper(k, j, cfg)
}

/// `beta_low_{k,j}`.
pub fn limiting_lower<T: Real>(
    system: &CoefficientSequence<T>,
    k: usize,
    j: usize,
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<LimitingEstimate<T>> {
    Workspace::new(system, grid, cfg.search_points)?.limiting_lower(k, j, cfg)
}

/// Whether the estimate lies in `[-ln |A^{-1}| - slack, ln |A| + slack]`.
pub fn exponent_bounds_check<T: Real>(estimate: &BohlEstimate<T>, bounds: &SystemBounds<T>, slack: T) -> bool {
    let lo = Extended::Finite(-bounds.norm_a_inv.ln() - slack);
    let hi = Extended::Finite(bounds.norm_a.ln() + slack);
    lo.le_tol(estimate.value, T::zero()) && estimate.value.le_tol(hi, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{coordinate_subspaces, principal_angles};
    use crate::systems::{make_constant, make_diagonal, make_identity, make_random, Schedule};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn diag() -> CoefficientSequence<f64> {
        make_diagonal(&[1.0, -1.0]).with_horizon(128)
    }

    fn fin(v: Extended<f64>) -> f64 {
        v.finite().expect("finite value")
    }

    #[test]
    fn grid_defaults_and_validation() {
        let g = WindowGrid::new(2048);
        assert_eq!(g.window_floors, vec![128, 256, 512, 1024]);
        assert_eq!(g.window_stride, 3);
        assert_eq!(WindowGrid::new(512).window_stride, 1);
        assert!(WindowGrid::with_floors(100, vec![10, 5]).is_err());
        assert!(WindowGrid::with_floors(100, vec![10, 100]).is_err());
        assert!(WindowGrid::with_floors(100, vec![]).is_err());
    }

    #[test]
    fn identity_exponents_are_zero() {
        let s = make_identity::<f64>(2).with_horizon(64);
        let g = WindowGrid::new(64);
        let u = Subspace::coordinate(2, &[0]);
        let up = upper_bohl(&s, &u, &g).unwrap();
        assert!(up.per_floor.iter().all(|(_, v)| *v == Extended::Finite(0.0)));
        assert_eq!(lower_bohl(&s, &Subspace::full(2), &g).unwrap().value, Extended::Finite(0.0));
    }

    #[test]
    fn zero_subspace_sentinels() {
        let s = diag();
        let g = WindowGrid::new(128);
        assert_eq!(upper_bohl(&s, &Subspace::zero(2), &g).unwrap().value, Extended::NegInf);
        assert_eq!(lower_bohl(&s, &Subspace::zero(2), &g).unwrap().value, Extended::PosInf);
    }

    #[test]
    fn diagonal_exponents() {
        let s = diag();
        let g = WindowGrid::new(128);
        assert_relative_eq!(fin(upper_bohl(&s, &Subspace::full(2), &g).unwrap().value), 1.0, epsilon = 1e-9);
        assert_relative_eq!(fin(lower_bohl(&s, &Subspace::full(2), &g).unwrap().value), -1.0, epsilon = 1e-9);
        let e1 = Subspace::coordinate(2, &[0]);
        assert_relative_eq!(fin(lower_bohl(&s, &e1, &g).unwrap().value), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dyadic_upper_exponent() {
        let s = crate::systems::make_block_switching(
            vec![Schedule::Dyadic { inside: 1.0, outside: -1.0 }],
            TimeDomain::TwoSided,
            2048,
        )
        .unwrap();
        let e = upper_bohl(&s, &Subspace::full(1), &WindowGrid::new(2048)).unwrap();
        let v = fin(e.value);
        assert!((0.9..=1.0 + 1e-12).contains(&v), "value {v}");
    }

    #[test]
    fn per_floor_monotone() {
        let s = make_random::<f64>(3, TimeDomain::TwoSided, 96, 0.5, 21);
        let g = WindowGrid::new(96);
        let u = sample_uniform(3, 2, 1, 9).unwrap().remove(0);
        let up = upper_bohl(&s, &u, &g).unwrap();
        let lo = lower_bohl(&s, &u, &g).unwrap();
        for w in up.per_floor.windows(2) {
            assert!(w[1].1.le_tol(w[0].1, 0.0));
        }
        for w in lo.per_floor.windows(2) {
            assert!(w[0].1.le_tol(w[1].1, 0.0));
        }
        assert!(lo.value.le_tol(up.value, 1e-9));
        assert_eq!(up.converged, up.spread <= CONV_TOL);
        assert!(up.trace_csv().starts_with("N,value\n"));
    }

    #[test]
    fn limiting_examples_on_diagonal() {
        let s = diag();
        let g = WindowGrid::new(128);
        let cfg = SearchConfig::default();
        assert_eq!(limiting_upper(&s, 0, 0, &g, &cfg).unwrap().value, Extended::NegInf);
        assert_eq!(limiting_lower(&s, 2, 0, &g, &cfg).unwrap().value, Extended::PosInf);

        let up = limiting_upper(&s, 1, 1, &g, &cfg).unwrap();
        assert!((fin(up.value) + 1.0).abs() <= 0.05, "{:?}", up.value);
        assert!(principal_angles(&up.witness_l, &Subspace::coordinate(2, &[1])).unwrap()[0] < 0.05);
        let lo = limiting_lower(&s, 1, 1, &g, &cfg).unwrap();
        assert!((fin(lo.value) - 1.0).abs() <= 0.05, "{:?}", lo.value);
        assert!(lo.witness_l.contains_tol(&lo.inner_witness, 1e-8));

        // Coordinate oracle agrees.
        let ws = Workspace::new(&s, &g, 64).unwrap();
        let oracle = coordinate_subspaces::<f64>(2, 1)
            .unwrap()
            .iter()
            .map(|l| fin(ws.upper(l).value))
            .fold(f64::INFINITY, f64::min);
        assert!((fin(up.value) - oracle).abs() <= 0.05, "{:?} vs {oracle}", up.value);
        assert!(limiting_upper(&s, 1, 2, &g, &cfg).is_err());
    }

    #[test]
    fn limiting_identity_is_zero() {
        let s = make_identity::<f64>(3).with_horizon(48);
        let g = WindowGrid::new(48);
        let cfg = SearchConfig { outer_starts: 4, inner_samples: 4, rounds: 2, ..SearchConfig::default() };
        for (k, j) in [(1, 1), (2, 1), (3, 2)] {
            assert!(fin(limiting_upper(&s, k, j, &g, &cfg).unwrap().value).abs() < 1e-12);
        }
        assert!(fin(limiting_lower(&s, 0, 1, &g, &cfg).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn bounds_check_examples() {
        let id = make_identity::<f64>(2).with_horizon(32);
        let g = WindowGrid::new(32);
        let b = crate::systems::empirical_bounds(&id, 32);
        assert!(exponent_bounds_check(&upper_bohl(&id, &Subspace::full(2), &g).unwrap(), &b, 0.0));

        let two = make_constant(DMatrix::from_element(1, 1, 2.0)).unwrap().with_horizon(32);
        let b = crate::systems::empirical_bounds(&two, 32);
        let e = upper_bohl(&two, &Subspace::full(1), &g).unwrap();
        assert_relative_eq!(fin(e.value), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(exponent_bounds_check(&e, &b, 1e-12));
        assert!(exponent_bounds_check(&lower_bohl(&two, &Subspace::full(1), &g).unwrap(), &b, 1e-12));
    }

    #[test]
    fn shift_equivariance_of_subspace_exponents() {
        let s = make_random::<f64>(2, TimeDomain::TwoSided, 64, 0.4, 2);
        let g = WindowGrid::new(64);
        let u = sample_uniform(2, 1, 1, 3).unwrap().remove(0);
        let a = fin(upper_bohl(&s, &u, &g).unwrap().value);
        let b = fin(upper_bohl(&s.shifted(0.7), &u, &g).unwrap().value);
        assert_relative_eq!(b, a - 0.7, epsilon = 1e-9);
    }
}
