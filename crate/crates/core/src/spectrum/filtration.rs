//! Spectral filtration `M_0 ⊂ ... ⊂ M_l` and, for two-sided time, the
//! decomposition `W_i = M_i ∩ N_{i-1}`.
//!
//! `M(γ)` is spanned by the directions at time 0 whose forward growth over
//! the horizon stays below `γ - margin`; `N(γ)` by those whose growth from
//! `-T` to 0 exceeds `γ + margin`. Both come from decay frames, a stable
//! form of the small (resp. dominant) singular subspaces of
//! `e^{-γT} Φ(T, 0)` (resp. `e^{γT} Φ(0, -T)`).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bohl::{serialize_subspace, WindowGrid};
use crate::error::{Error, Result};
use crate::grassmann::{derive_seed, Subspace};
use crate::propagation::{backward_decay_frame, forward_decay_frame, DecayFrame};
use crate::scalar::{Extended, Real};
use crate::systems::{empirical_bounds, CoefficientSequence, TimeDomain};

/// Largest principal angle accepted between the two halves of `M_i ∩ N_{i-1}`.
pub const INTERSECTION_TOL: f64 = 1e-2;

/// Smallest singular value of the stacked decomposition bases.
pub const INDEPENDENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationSpace<T: Real> {
    pub dim: usize,
    pub gamma_samples: Vec<T>,
    #[serde(serialize_with = "serialize_subspace")]
    pub basis: Subspace<T>,
}

/// Sample rates `γ` at 25/50/75% of the gap (infinite ends truncated one unit
/// beyond the exponent bounds) with decay margins of half the distance to
/// the nearest finite endpoint.
pub fn gap_samples<T: Real>(gap: (Extended<T>, Extended<T>), bounds: (T, T)) -> Vec<(T, T)> {
    let one = T::one();
    let lo = gap.0.finite().unwrap_or_else(|| bounds.0.min(gap.1.finite().unwrap_or(bounds.0)) - one);
    let hi = gap.1.finite().unwrap_or_else(|| bounds.1.max(gap.0.finite().unwrap_or(bounds.1)) + one);
    [0.25, 0.5, 0.75]
        .iter()
        .map(|&f| {
            let g = lo + (hi - lo) * T::lit(f);
            let dist = match (gap.0.finite(), gap.1.finite()) {
                (Some(a), Some(b)) => (g - a).min(b - g),
                (Some(a), None) => g - a,
                (None, Some(b)) => b - g,
                (None, None) => one,
            };
            (g, dist * T::lit(0.5))
        })
        .collect()
}

/// Time-0 decay frames used by the filtration and the decomposition.
pub struct DecayFrames<T: Real> {
    pub forward: DecayFrame<T>,
    pub backward: Option<DecayFrame<T>>,
    pub bounds: (T, T),
}

impl<T: Real> DecayFrames<T> {
    pub fn compute(system: &CoefficientSequence<T>, grid: &WindowGrid, seed: u64) -> Result<Self> {
        let (lo, hi) = system.time_range(grid.horizon);
        let mat = system.materialize(lo, hi)?;
        let forward = forward_decay_frame(&mat, hi, derive_seed(seed, 0xF0));
        let backward =
            (system.domain() == TimeDomain::TwoSided).then(|| backward_decay_frame(&mat, -lo, derive_seed(seed, 0xB0)));
        let b = empirical_bounds(system, grid.horizon);
        Ok(DecayFrames { forward, backward, bounds: b.exponent_range() })
    }

    fn m_count(&self, gamma: T, margin: T) -> usize {
        self.forward.rates.iter().filter(|&&r| r < gamma - margin).count()
    }

    fn n_count(&self, frame: &DecayFrame<T>, gamma: T, margin: T) -> usize {
        frame.rates.iter().filter(|&&r| r > gamma + margin).count()
    }
}

fn stable_count(gap: usize, counts: Vec<usize>) -> Result<usize> {
    if counts.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::UnstableDimension { gap, dims: counts });
    }
    Ok(counts[0])
}

/// One filtration space per resolvent gap, in increasing order of the gaps.
pub fn extract_filtration<T: Real>(
    system: &CoefficientSequence<T>,
    gaps: &[(Extended<T>, Extended<T>)],
    grid: &WindowGrid,
    seed: u64,
) -> Result<Vec<FiltrationSpace<T>>> {
    let frames = DecayFrames::compute(system, grid, seed)?;
    filtration_from_frames(&frames, gaps)
}

pub fn filtration_from_frames<T: Real>(
    frames: &DecayFrames<T>,
    gaps: &[(Extended<T>, Extended<T>)],
) -> Result<Vec<FiltrationSpace<T>>> {
    gaps.iter()
        .enumerate()
        .map(|(i, &gap)| {
            let samples = gap_samples(gap, frames.bounds);
            let count = stable_count(i, samples.iter().map(|&(g, m)| frames.m_count(g, m)).collect())?;
            Ok(FiltrationSpace {
                dim: count,
                gamma_samples: samples.iter().map(|s| s.0).collect(),
                basis: frames.forward.leading(count),
            })
        })
        .collect()
}

/// `N` spaces (backward decay), one per gap; requires two-sided time.
pub fn backward_spaces<T: Real>(
    frames: &DecayFrames<T>,
    gaps: &[(Extended<T>, Extended<T>)],
) -> Result<Vec<Subspace<T>>> {
    let back = frames
        .backward
        .as_ref()
        .ok_or_else(|| Error::DecompositionDefect("the decomposition needs two-sided time".into()))?;
    gaps.iter()
        .enumerate()
        .map(|(i, &gap)| {
            let counts = gap_samples(gap, frames.bounds).iter().map(|&(g, m)| frames.n_count(back, g, m)).collect();
            Ok(back.leading(stable_count(i, counts)?))
        })
        .collect()
}

/// `W_i = M_i ∩ N_{i-1}` for `i = 1..l`; the `W_i` must be independent and span `R^d`.
pub fn extract_decomposition<T: Real>(
    system: &CoefficientSequence<T>,
    gaps: &[(Extended<T>, Extended<T>)],
    grid: &WindowGrid,
    seed: u64,
) -> Result<Vec<Subspace<T>>> {
    let frames = DecayFrames::compute(system, grid, seed)?;
    decomposition_from_frames(&frames, gaps)
}

pub fn decomposition_from_frames<T: Real>(
    frames: &DecayFrames<T>,
    gaps: &[(Extended<T>, Extended<T>)],
) -> Result<Vec<Subspace<T>>> {
    let m = filtration_from_frames(frames, gaps)?;
    let n = backward_spaces(frames, gaps)?;
    let d = frames.forward.frame.nrows();
    let mut out = Vec::with_capacity(gaps.len().saturating_sub(1));
    for i in 1..gaps.len() {
        let want = m[i]
            .dim
            .checked_sub(m[i - 1].dim)
            .ok_or_else(|| Error::DecompositionDefect(format!("filtration dimensions decrease at gap {i}")))?;
        out.push(intersect(&m[i].basis, &n[i - 1], want, i)?);
    }
    let total: usize = out.iter().map(|w| w.dim()).sum();
    if total != d {
        return Err(Error::DecompositionDefect(format!("spaces have total dimension {total}, expected {d}")));
    }
    let mut stacked = DMatrix::zeros(d, d);
    let mut c = 0;
    for w in &out {
        stacked.view_mut((0, c), (d, w.dim())).copy_from(w.basis());
        c += w.dim();
    }
    let smin = stacked.singular_values().iter().copied().fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    if smin < T::lit(INDEPENDENCE_TOL) {
        return Err(Error::DecompositionDefect(format!("spaces are not independent (sigma_min {smin})")));
    }
    Ok(out)
}

/// The `want`-dimensional principal subspace of `m` closest to `n`.
fn intersect<T: Real>(m: &Subspace<T>, n: &Subspace<T>, want: usize, index: usize) -> Result<Subspace<T>> {
    let d = m.ambient_dim();
    if want == 0 {
        return Ok(Subspace::zero(d));
    }
    if m.dim() < want || n.dim() < want {
        return Err(Error::DecompositionDefect(format!(
            "W_{index} needs dimension {want} but M has {} and N has {}",
            m.dim(),
            n.dim()
        )));
    }
    let svd = (m.basis().transpose() * n.basis()).svd(true, false);
    let u = svd.u.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let cos_min = svd.singular_values[order[want - 1]].min(T::one());
    if cos_min.acos() > T::lit(INTERSECTION_TOL) {
        return Err(Error::DecompositionDefect(format!(
            "M_{index} and N_{} meet at angle {} in dimension {want}",
            index - 1,
            cos_min.acos()
        )));
    }
    let mut coeff = DMatrix::zeros(m.dim(), want);
    for (c, &i) in order[..want].iter().enumerate() {
        coeff.set_column(c, &u.column(i));
    }
    Subspace::orthonormalize(&(m.basis() * coeff))
}
