//! Maximal uniformity dimensions, the tail-to-global constant, and the
//! complement (in)dependence experiments for one-sided time.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::bohl::{Direction, SearchConfig, WindowGrid, Workspace};
use crate::error::{Error, Result};
use crate::grassmann::{derive_seed, is_splitting, sample_in, sample_uniform, Splitting, Subspace, RANK_TOL};
use crate::propagation::{sweep_windows, window_points, Need, SubspaceTrajectory};
use crate::scalar::{Extended, Real};
use crate::spectrum::assemble::GAP_TOL;
use crate::spectrum::certify::{certify_in, grassmann_samples, DichotomyCertificate, Verdict};
use crate::systems::{make_diagonal, make_split_random, CoefficientSequence, SystemBounds, TimeDomain};

/// Largest supported dimension of the conjecture sweep.
pub const MAX_SEARCH_DIM: usize = 4;

/// Relative slack when comparing observed and claimed D2 constants.
const CONSTANT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct MaximalUniformity<T: Real> {
    pub u1: usize,
    pub u2: usize,
    /// `s_j = sup` of upper Bohl exponents over `G_j(L1)`, for `j = 1..=dim L1` until the first failure.
    pub s1: Vec<Extended<T>>,
    /// `inf` of lower Bohl exponents over `G_j(L2)`, likewise.
    pub s2: Vec<Extended<T>>,
    pub baseline: DichotomyCertificate<T>,
    pub notes: Vec<String>,
}

/// `(u1, u2)` for a splitting on which the system is Bohl dichotomous at rate 0.
pub fn maximal_uniformity<T: Real>(
    system: &CoefficientSequence<T>,
    splitting: &Splitting<T>,
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<MaximalUniformity<T>> {
    let ws = Workspace::new(system, grid, cfg.search_points)?;
    maximal_uniformity_in(&ws, splitting, cfg)
}

fn maximal_uniformity_in<T: Real>(
    ws: &Workspace<T>,
    splitting: &Splitting<T>,
    cfg: &SearchConfig,
) -> Result<MaximalUniformity<T>> {
    let (k1, k2) = (splitting.l1().dim(), splitting.l2().dim());
    let base_dims = (k1.min(1), k2.min(1));
    let baseline = certify_in(ws, T::zero(), splitting, base_dims, cfg)?;
    if baseline.verdict != Verdict::Holds {
        return Err(Error::NotDichotomous(format!(
            "baseline certificate at rate 0 with dims {base_dims:?}: {:?}",
            baseline.verdict
        )));
    }
    let margin = T::lit(GAP_TOL);
    let mut notes = Vec::new();

    // s_j is nondecreasing in j, so the scan stops at the first j that fails.
    let mut s1 = Vec::new();
    let mut u1 = 0;
    let mut running = Extended::NegInf;
    for j in 1..=k1 {
        running = running.max_ext(sampled_extreme(ws, splitting.l1(), j, Direction::Upper, cfg)?);
        s1.push(running);
        if running.cmp_ext(&Extended::Finite(-margin)) != Ordering::Less {
            break;
        }
        u1 = j;
    }
    let mut s2 = Vec::new();
    let mut u2 = 0;
    let mut running = Extended::PosInf;
    for j in 1..=k2 {
        running = running.min_ext(sampled_extreme(ws, splitting.l2(), j, Direction::Lower, cfg)?);
        s2.push(running);
        if running.cmp_ext(&Extended::Finite(margin)) != Ordering::Greater {
            break;
        }
        u2 = j;
    }
    if u1 < base_dims.0 || u2 < base_dims.1 {
        notes
            .push(format!("exponent scan gave ({u1}, {u2}) below the certified baseline {base_dims:?}; baseline used"));
        u1 = u1.max(base_dims.0);
        u2 = u2.max(base_dims.1);
    }
    Ok(MaximalUniformity { u1, u2, s1, s2, baseline, notes })
}

/// `sup` (upper) or `inf` (lower) of Bohl exponents over sampled `U ∈ G_j(L)`.
fn sampled_extreme<T: Real>(
    ws: &Workspace<T>,
    l: &Subspace<T>,
    j: usize,
    direction: Direction,
    cfg: &SearchConfig,
) -> Result<Extended<T>> {
    let mut best = direction.empty();
    for u in grassmann_samples(l, j, cfg, 0x5A00 + j as u64)? {
        let v = ws.estimate(&u, direction).value;
        best = match direction {
            Direction::Upper => best.max_ext(v),
            Direction::Lower => best.min_ext(v),
        };
    }
    Ok(best)
}

/// `c_tail / a^2`, applied `m0` times.
pub fn inductive_constant<N: Num + Clone>(c_tail: N, a: N, m0: usize) -> N {
    (0..m0).fold(c_tail, |c, _| c / (a.clone() * a.clone()))
}

/// Worst `ln |Φ(n,m)|_U| − γ(n−m)` over windows between `points`, with the window.
fn worst_window<T: Real>(traj: &SubspaceTrajectory<T>, points: &[i64], gamma: T) -> (T, i64, i64) {
    let start = (T::zero(), points[0], points[0]);
    sweep_windows(
        traj,
        points,
        1,
        Need::Min,
        || start,
        |acc: &mut (T, i64, i64), w| {
            let v = w.log_sigma_min - gamma * T::from_i64_lossy(w.n - w.m);
            if v < acc.0 {
                *acc = (v, w.m, w.n);
            }
        },
        |a, b| if b.0 < a.0 { b } else { a },
    )
}

/// Global D2 constant for `U` from a tail estimate valid for `n >= m >= m0`.
///
/// The tail claim and the resulting global estimate are both verified on the
/// window grid of `bounds.horizon`.
pub fn tail_to_global_constant<T: Real>(
    system: &CoefficientSequence<T>,
    gamma: T,
    u: &Subspace<T>,
    m0: usize,
    c_tail: T,
    bounds: &SystemBounds<T>,
) -> Result<T> {
    if system.domain() != TimeDomain::OneSided {
        return Err(Error::Config("tail estimates are defined for one-sided time".into()));
    }
    if !(c_tail > T::zero()) {
        return Err(Error::Config(format!("tail constant must be positive, got {c_tail}")));
    }
    let a = bounds.norm_a.max(bounds.norm_a_inv);
    let global = inductive_constant(c_tail, a, m0);
    if u.is_zero() {
        return Ok(global);
    }
    let grid = WindowGrid::new(bounds.horizon);
    let ws = Workspace::new(system, &grid, 2)?;
    let (lo, hi) = ws.range();
    if m0 as i64 >= hi {
        return Err(Error::OutOfHorizon { time: m0 as i64, lo, hi });
    }
    let traj = ws.trajectory(u);
    let verify = |points: &[i64], claimed: T| -> Result<()> {
        let (v, m, n) = worst_window(&traj, points, gamma);
        let observed = v.exp();
        if observed < claimed * (T::one() - T::lit(CONSTANT_SLACK)) {
            return Err(Error::TailEstimateInvalid { observed: observed.as_f64(), claimed: claimed.as_f64(), m, n });
        }
        Ok(())
    };
    let stride = grid.window_stride;
    verify(&window_points(m0 as i64, hi, stride), c_tail)?;
    verify(ws.full_points(), global)?;
    Ok(global)
}

/// Largest D2 constant at rate `γ` valid on windows with `m >= m0`, as a tail claim.
pub fn observed_tail_constant<T: Real>(
    system: &CoefficientSequence<T>,
    gamma: T,
    u: &Subspace<T>,
    m0: usize,
    grid: &WindowGrid,
) -> Result<T> {
    let ws = Workspace::new(system, grid, 2)?;
    let traj = ws.trajectory(u);
    let (_, hi) = ws.range();
    let (v, _, _) = worst_window(&traj, &window_points(m0 as i64, hi, grid.window_stride), gamma);
    Ok(v.exp())
}

/// Per-complement outcome of [`uniformity_independence_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ComplementOutcome {
    pub l2: Vec<Vec<f64>>,
    pub orthogonal: bool,
    /// `None` when the baseline dichotomy could not be certified.
    pub dims: Option<(usize, usize)>,
    pub detail: String,
}

/// Hypothesis test of `u2(a) <= u2(b)` for two complements.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonOutcome {
    pub from: usize,
    pub to: usize,
    /// Whether every sampled `V' ∈ G_{u2(a)}(L2(b))` projects to at most `u1` dimensions of `L1`.
    pub hypothesis: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    /// The supplied complements followed by `L1^perp`.
    pub complements: Vec<ComplementOutcome>,
    pub u1_consistent: bool,
    pub comparisons: Vec<ComparisonOutcome>,
    /// Violations of the asserted relations.
    pub findings: Vec<String>,
}

impl IndependenceReport {
    pub fn is_consistent(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Dimension of the orthogonal projection of `v` onto `l1`.
fn projected_dim<T: Real>(l1: &Subspace<T>, v: &Subspace<T>) -> usize {
    if l1.is_zero() || v.is_zero() {
        return 0;
    }
    let m: DMatrix<T> = l1.basis().transpose() * v.basis();
    m.singular_values().iter().filter(|&&s| s > T::lit(RANK_TOL).sqrt()).count()
}

/// Checks `u1` agreement across complements of `l1` and `u2 <= u2'` wherever the hypothesis holds.
pub fn uniformity_independence_check<T: Real>(
    system: &CoefficientSequence<T>,
    l1: &Subspace<T>,
    l2_list: &[Subspace<T>],
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<IndependenceReport> {
    cfg.validate()?;
    if system.domain() != TimeDomain::OneSided {
        return Err(Error::Config("complement dependence is studied for one-sided time".into()));
    }
    let ws = Workspace::new(system, grid, cfg.search_points)?;
    let mut spaces: Vec<(Subspace<T>, bool)> = l2_list.iter().map(|l| (l.clone(), false)).collect();
    spaces.push((l1.orthogonal_complement(), true));

    let mut complements = Vec::with_capacity(spaces.len());
    for (l2, orthogonal) in &spaces {
        let outcome = match Splitting::new(l1.clone(), l2.clone()) {
            Err(e) => {
                ComplementOutcome { l2: l2.to_rows(), orthogonal: *orthogonal, dims: None, detail: e.to_string() }
            }
            Ok(split) => match maximal_uniformity_in(&ws, &split, cfg) {
                Ok(mu) => ComplementOutcome {
                    l2: l2.to_rows(),
                    orthogonal: *orthogonal,
                    dims: Some((mu.u1, mu.u2)),
                    detail: mu.notes.join("; "),
                },
                Err(Error::NotDichotomous(msg)) => {
                    ComplementOutcome { l2: l2.to_rows(), orthogonal: *orthogonal, dims: None, detail: msg }
                }
                Err(e) => return Err(e),
            },
        };
        complements.push(outcome);
    }

    let mut findings = Vec::new();
    let u1s: Vec<usize> = complements.iter().filter_map(|c| c.dims.map(|d| d.0)).collect();
    let u1_consistent = u1s.windows(2).all(|w| w[0] == w[1]);
    if !u1_consistent {
        findings.push(format!("u1 differs across complements: {u1s:?}"));
    }

    let mut comparisons = Vec::new();
    for (a, ca) in complements.iter().enumerate() {
        let Some((u1a, u2a)) = ca.dims else { continue };
        for (b, cb) in complements.iter().enumerate() {
            let Some((_, u2b)) = cb.dims else { continue };
            if a == b {
                continue;
            }
            let seed = derive_seed(cfg.seed, 0xC0_0000 + (a * 1000 + b) as u64);
            let hypothesis =
                sample_in(&spaces[b].0, u2a, cfg.check_samples, seed)?.iter().all(|v| projected_dim(l1, v) <= u1a);
            let satisfied = !hypothesis || u2a <= u2b;
            if !satisfied {
                findings.push(format!("u2 = {u2a} on complement {a} exceeds u2 = {u2b} on complement {b}"));
            }
            comparisons.push(ComparisonOutcome { from: a, to: b, hypothesis, satisfied });
        }
    }
    Ok(IndependenceReport { complements, u1_consistent, comparisons, findings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Constant diagonal systems with `k` negative and `d − k` positive rates.
    Diagonal,
    /// Random systems with an exponential dichotomy of rank `k`.
    SplitRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjectureConfig {
    pub families: Vec<Family>,
    pub dims: Vec<usize>,
    /// Systems per family and dimension.
    pub systems: usize,
    /// Random complements of `L1` per system.
    pub complements: usize,
    pub horizon: usize,
    pub window_floors: Option<Vec<usize>>,
    /// Rate margin of the generated dichotomies.
    pub rate: f64,
    pub seed: u64,
    pub budgets: SearchConfig,
}

impl Default for ConjectureConfig {
    fn default() -> Self {
        ConjectureConfig {
            families: vec![Family::Diagonal, Family::SplitRandom],
            dims: vec![2, 3],
            systems: 4,
            complements: 4,
            horizon: 256,
            window_floors: None,
            rate: 0.5,
            seed: 0,
            budgets: SearchConfig::default(),
        }
    }
}

impl ConjectureConfig {
    pub fn validate(&self) -> Result<()> {
        self.budgets.validate()?;
        if let Some(&d) = self.dims.iter().find(|&&d| d == 0 || d > MAX_SEARCH_DIM) {
            return Err(Error::Config(format!("search dimension {d} outside 1..={MAX_SEARCH_DIM}")));
        }
        if self.systems == 0 || self.complements == 0 {
            return Err(Error::Config("conjecture search needs at least one system and one complement".into()));
        }
        if !(self.rate > 0.0) {
            return Err(Error::Config("dichotomy rate must be positive".into()));
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<WindowGrid> {
        match &self.window_floors {
            Some(f) => WindowGrid::with_floors(self.horizon, f.clone()),
            None => {
                let g = WindowGrid::new(self.horizon);
                g.validate()?;
                Ok(g)
            }
        }
    }
}

/// `(system, L2, L2')` with different `u2` and everything needed to rerun it.
#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub family: Family,
    pub dim: usize,
    pub dim_l1: usize,
    pub system_seed: u64,
    pub system: String,
    pub l1: Vec<Vec<f64>>,
    pub l2: Vec<Vec<f64>>,
    pub l2_other: Vec<Vec<f64>>,
    pub u2: usize,
    pub u2_other: usize,
    pub grid: WindowGrid,
    pub budgets: SearchConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjectureReport {
    pub findings: Vec<Finding>,
    /// Differences where `dim L1 ∈ {1, d−1}`, which cannot depend on `L2`; these reflect estimator error.
    pub anomalies: Vec<Finding>,
    pub systems_checked: usize,
    pub complements_checked: usize,
    /// Systems or complements skipped because no baseline dichotomy was certified.
    pub skipped: usize,
}

fn family_system(
    family: Family,
    d: usize,
    k: usize,
    cfg: &ConjectureConfig,
    seed: u64,
) -> Result<(CoefficientSequence<f64>, Subspace<f64>)> {
    use rand::{Rng, SeedableRng};
    match family {
        Family::Diagonal => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rates: Vec<f64> = (0..d)
                .map(|i| {
                    let r = cfg.rate * rng.random_range(1.0..3.0);
                    if i < k {
                        -r
                    } else {
                        r
                    }
                })
                .collect();
            let sys = make_diagonal(&rates)
                .with_domain(TimeDomain::OneSided)
                .with_horizon(cfg.horizon)
                .with_label(format!("diagonal{rates:?}"));
            Ok((sys, Subspace::coordinate(d, &(0..k).collect::<Vec<_>>())))
        }
        Family::SplitRandom => {
            let (sys, stable) = make_split_random(d, k, TimeDomain::OneSided, cfg.horizon, cfg.rate, seed)?;
            Ok((sys, Subspace::orthonormalize(&stable)?))
        }
    }
}

/// Randomized sweep for systems whose `u2` depends on the complement of `L1`.
pub fn conjecture_search(cfg: &ConjectureConfig) -> Result<ConjectureReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut report = ConjectureReport {
        findings: Vec::new(),
        anomalies: Vec::new(),
        systems_checked: 0,
        complements_checked: 0,
        skipped: 0,
    };
    for (fi, &family) in cfg.families.iter().enumerate() {
        for &d in &cfg.dims {
            if d < 2 {
                continue;
            }
            for i in 0..cfg.systems {
                let k = 1 + i % (d - 1);
                let system_seed = derive_seed(cfg.seed, ((fi as u64) << 48) ^ ((d as u64) << 32) ^ i as u64);
                let (sys, l1) = family_system(family, d, k, cfg, system_seed)?;
                let ws = Workspace::new(&sys, &grid, cfg.budgets.search_points)?;
                let mut results: Vec<(Subspace<f64>, usize)> = Vec::new();
                let mut pool =
                    sample_uniform::<f64>(d, d - k, 4 * cfg.complements, derive_seed(system_seed, 0x12))?.into_iter();
                while results.len() < cfg.complements {
                    let Some(l2) = pool.next() else { break };
                    if !is_splitting(&l1, &l2) {
                        continue;
                    }
                    let split = Splitting::new(l1.clone(), l2.clone())?;
                    match maximal_uniformity_in(&ws, &split, &cfg.budgets) {
                        Ok(mu) => results.push((l2, mu.u2)),
                        Err(Error::NotDichotomous(_)) => report.skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
                report.systems_checked += 1;
                report.complements_checked += results.len();
                let Some(first) = results.first() else {
                    continue;
                };
                if let Some(other) = results.iter().find(|r| r.1 != first.1) {
                    let finding = Finding {
                        family,
                        dim: d,
                        dim_l1: k,
                        system_seed,
                        system: sys.label().to_string(),
                        l1: l1.to_rows(),
                        l2: first.0.to_rows(),
                        l2_other: other.0.to_rows(),
                        u2: first.1,
                        u2_other: other.1,
                        grid: grid.clone(),
                        budgets: cfg.budgets.clone(),
                    };
                    if k == 1 || k == d - 1 {
                        report.anomalies.push(finding);
                    } else {
                        report.findings.push(finding);
                    }
                }
            }
        }
    }
    Ok(report)
}
