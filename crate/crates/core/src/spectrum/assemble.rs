//! Resolvent gaps and assembly of the dichotomy spectrum `Σ_J`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bohl::{serialize_subspace, LimitingEstimate, SearchConfig, WindowGrid, Workspace};
use crate::error::{Error, Result};
use crate::grassmann::Subspace;
use crate::scalar::{Extended, Real};
use crate::spectrum::dims::UniformityDimensions;
use crate::spectrum::filtration::{decomposition_from_frames, filtration_from_frames, DecayFrames, FiltrationSpace};
use crate::systems::{CoefficientSequence, TimeDomain};

/// Gaps narrower than this (in exponent units) count as empty.
pub const GAP_TOL: f64 = 0.02;

/// Candidate gap `(beta_bar_{k,j1k}, beta_low_{k,j2k})` at dimension `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventGap<T: Real> {
    pub k: usize,
    pub lo: Extended<T>,
    pub hi: Extended<T>,
}

impl<T: Real> ResolventGap<T> {
    pub fn is_nonempty(&self, tol: T) -> bool {
        match self.lo.width_to(self.hi) {
            Extended::PosInf => true,
            Extended::Finite(w) => w > tol,
            Extended::NegInf => false,
        }
    }
}

/// Convergence record of one limiting exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentDiagnostic<T: Real> {
    /// `"upper"` for `beta_bar_{k,j}`, `"lower"` for `beta_low_{k,j}`.
    pub kind: &'static str,
    pub k: usize,
    pub j: usize,
    pub value: Extended<T>,
    pub converged: bool,
    pub search_trace: Vec<(usize, Extended<T>)>,
    pub per_floor: Vec<(usize, Extended<T>)>,
    #[serde(serialize_with = "serialize_subspace")]
    pub witness_l: Subspace<T>,
}

impl<T: Real> ExponentDiagnostic<T> {
    fn new(kind: &'static str, k: usize, j: usize, est: LimitingEstimate<T>) -> Self {
        ExponentDiagnostic {
            kind,
            k,
            j,
            value: est.value,
            converged: est.converged,
            search_trace: est.search_trace,
            per_floor: est.per_floor,
            witness_l: est.witness_l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics<T: Real> {
    pub exponents: Vec<ExponentDiagnostic<T>>,
    pub candidate_gaps: Vec<ResolventGap<T>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport<T: Real> {
    pub intervals: Vec<(T, T)>,
    pub resolvent_gaps: Vec<(Extended<T>, Extended<T>)>,
    pub filtration_dims: Vec<usize>,
    pub filtration: Vec<FiltrationSpace<T>>,
    #[serde(serialize_with = "serialize_optional_subspaces")]
    pub decomposition: Option<Vec<Subspace<T>>>,
    pub diagnostics: Diagnostics<T>,
}

fn serialize_optional_subspaces<T: Real, S: serde::Serializer>(
    v: &Option<Vec<Subspace<T>>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize as _;
    v.as_ref().map(|spaces| spaces.iter().map(|u| u.to_rows()).collect::<Vec<_>>()).serialize(s)
}

impl<T: Real> SpectrumReport<T> {
    /// Whether `gamma` lies in one of the spectral intervals.
    pub fn contains(&self, gamma: T) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= gamma && gamma <= b)
    }
}

/// Limiting exponents `beta_bar_{k,j1k}` and `beta_low_{k,j2k}` for `k = 0..d`.
pub fn resolvent_intervals<T: Real>(
    system: &CoefficientSequence<T>,
    dims: &UniformityDimensions,
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<(Vec<ResolventGap<T>>, Vec<ExponentDiagnostic<T>>)> {
    let d = system.dim();
    dims.validate(d)?;
    let ws = Workspace::new(system, grid, cfg.search_points)?;
    let tasks: Vec<(bool, usize)> = (0..=d).flat_map(|k| [(true, k), (false, k)]).collect();
    let results: Vec<Result<ExponentDiagnostic<T>>> = tasks
        .par_iter()
        .map(|&(upper, k)| {
            if upper {
                let j = dims.j1(k);
                Ok(ExponentDiagnostic::new("upper", k, j, ws.limiting_upper(k, j, cfg)?))
            } else {
                let j = dims.j2(k);
                Ok(ExponentDiagnostic::new("lower", k, j, ws.limiting_lower(k, j, cfg)?))
            }
        })
        .collect();
    let diags = results.into_iter().collect::<Result<Vec<_>>>()?;
    let gaps = (0..=d).map(|k| ResolventGap { k, lo: diags[2 * k].value, hi: diags[2 * k + 1].value }).collect();
    Ok((gaps, diags))
}

/// `Σ_J` with its filtration (and decomposition for two-sided time).
pub fn compute_spectrum<T: Real>(
    system: &CoefficientSequence<T>,
    dims: &UniformityDimensions,
    grid: &WindowGrid,
    cfg: &SearchConfig,
) -> Result<SpectrumReport<T>> {
    let d = system.dim();
    let (gaps, exponents) = resolvent_intervals(system, dims, grid, cfg)?;
    let tol = T::lit(GAP_TOL);
    let mut notes = Vec::new();

    // k_0 = 0; k_{i+1} = first n > k_i with a nonempty gap.
    let mut ks = vec![0];
    while *ks.last().unwrap() < d {
        let k = *ks.last().unwrap();
        match (k + 1..=d).find(|&n| gaps[n].is_nonempty(tol)) {
            Some(next) => ks.push(next),
            None => {
                return Err(Error::NoSpectrumStructure(format!(
                    "no nonempty resolvent gap above k = {k}; candidate gaps {:?}",
                    gaps.iter().map(|g| (g.lo.to_f64(), g.hi.to_f64())).collect::<Vec<_>>()
                )))
            }
        }
    }
    for (k, g) in gaps.iter().enumerate().skip(1) {
        if !g.is_nonempty(tol) && !ks.contains(&k) && g.lo.width_to(g.hi).finite().is_some_and(|w| w > T::zero()) {
            notes.push(format!("gap at k = {k} narrower than {GAP_TOL}; adjacent intervals merged"));
        }
    }

    let mut intervals = Vec::with_capacity(ks.len() - 1);
    for w in ks.windows(2) {
        let (a, b) = (gaps[w[0]].hi, gaps[w[1]].lo);
        let (a, b) = match (a.finite(), b.finite()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::NoSpectrumStructure(format!(
                    "interval between k = {} and k = {} has an infinite endpoint ({a}, {b})",
                    w[0], w[1]
                )))
            }
        };
        if a > b + tol {
            return Err(Error::NoSpectrumStructure(format!(
                "interval between k = {} and k = {} is reversed: [{a}, {b}]",
                w[0], w[1]
            )));
        }
        if a > b {
            notes.push(format!(
                "endpoints between k = {} and k = {} reversed by {} (within tolerance); reported in increasing order",
                w[0],
                w[1],
                a - b
            ));
            intervals.push((b, a));
        } else {
            intervals.push((a, b));
        }
    }
    for w in intervals.windows(2) {
        if w[1].0 <= w[0].1 {
            return Err(Error::NoSpectrumStructure(format!("intervals {:?} and {:?} overlap", w[0], w[1])));
        }
    }
    for k in 0..d {
        if !gaps[k].hi.le_tol(gaps[k + 1].lo, tol) {
            notes.push(format!("interlacing violated between k = {k} and k = {}", k + 1));
        }
    }

    let mut resolvent_gaps = Vec::with_capacity(intervals.len() + 1);
    resolvent_gaps.push((Extended::NegInf, Extended::Finite(intervals[0].0)));
    for w in intervals.windows(2) {
        resolvent_gaps.push((Extended::Finite(w[0].1), Extended::Finite(w[1].0)));
    }
    resolvent_gaps.push((Extended::Finite(intervals.last().unwrap().1), Extended::PosInf));

    let frames = DecayFrames::compute(system, grid, cfg.seed)?;
    let filtration = filtration_from_frames(&frames, &resolvent_gaps)?;
    for (i, (f, &k)) in filtration.iter().zip(&ks).enumerate() {
        if f.dim != k {
            notes.push(format!("filtration space {i} has dimension {} but the exponents give k = {k}", f.dim));
        }
    }
    let decomposition = match system.domain() {
        TimeDomain::TwoSided => Some(decomposition_from_frames(&frames, &resolvent_gaps)?),
        TimeDomain::OneSided => None,
    };

    Ok(SpectrumReport {
        intervals,
        resolvent_gaps,
        filtration_dims: ks,
        filtration,
        decomposition,
        diagnostics: Diagnostics { exponents, candidate_gaps: gaps, notes },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::principal_angles;
    use crate::spectrum::dims::{j_bd, j_ed};
    use crate::systems::{make_block_switching, make_diagonal, make_identity, Schedule};

    fn quick() -> SearchConfig {
        SearchConfig { outer_starts: 8, inner_samples: 8, rounds: 4, ..SearchConfig::default() }
    }

    #[test]
    fn gap_nonemptiness() {
        let g = ResolventGap { k: 0, lo: Extended::NegInf, hi: Extended::Finite(0.0) };
        assert!(g.is_nonempty(0.02));
        let g = ResolventGap { k: 1, lo: Extended::Finite(0.0), hi: Extended::Finite(0.01) };
        assert!(!g.is_nonempty(0.02));
    }

    #[test]
    fn identity_spectrum_is_a_point() {
        for d in 1..=3 {
            let s = make_identity::<f64>(d).with_horizon(32);
            let g = WindowGrid::new(32);
            for dims in [j_bd(d), j_ed(d)] {
                let r = compute_spectrum(&s, &dims, &g, &quick()).unwrap();
                assert_eq!(r.intervals.len(), 1);
                assert!(r.intervals[0].0.abs() < 0.02 && r.intervals[0].1.abs() < 0.02);
                assert_eq!(r.decomposition.as_ref().unwrap()[0].dim(), d);
            }
        }
    }

    #[test]
    fn identity_resolvent_gaps() {
        let s = make_identity::<f64>(2).with_horizon(32);
        let (gaps, _) = resolvent_intervals(&s, &j_ed(2), &WindowGrid::new(32), &quick()).unwrap();
        assert_eq!(gaps[0].lo, Extended::NegInf);
        assert!(!gaps[1].is_nonempty(0.02));
        assert_eq!(gaps[2].hi, Extended::PosInf);
    }

    #[test]
    fn diagonal_spectrum() {
        let s = make_diagonal(&[1.0f64, -1.0]).with_horizon(128);
        let g = WindowGrid::new(128);
        let r = compute_spectrum(&s, &j_ed(2), &g, &SearchConfig::default()).unwrap();
        assert_eq!(r.intervals.len(), 2);
        assert!((r.intervals[0].0 + 1.0).abs() < 0.05 && (r.intervals[0].1 + 1.0).abs() < 0.05);
        assert!((r.intervals[1].0 - 1.0).abs() < 0.05 && (r.intervals[1].1 - 1.0).abs() < 0.05);
        assert_eq!(r.filtration_dims, vec![0, 1, 2]);
        let w = r.decomposition.unwrap();
        assert!(principal_angles(&w[0], &Subspace::coordinate(2, &[1])).unwrap()[0] < 1e-3);
        for k in 0..2 {
            assert!(r.diagnostics.candidate_gaps[k].hi.le_tol(r.diagnostics.candidate_gaps[k + 1].lo, 0.02));
        }
    }

    #[test]
    fn dyadic_interval_spectrum() {
        let s =
            make_block_switching(vec![Schedule::Dyadic { inside: 1.0f64, outside: -1.0 }], TimeDomain::TwoSided, 2048)
                .unwrap();
        let g = WindowGrid::with_floors(2048, vec![32, 64, 128, 256]).unwrap();
        let r = compute_spectrum(&s, &j_bd(1), &g, &quick()).unwrap();
        assert_eq!(r.intervals.len(), 1);
        let (a, b) = r.intervals[0];
        assert!((a + 1.0).abs() <= 0.1 && (b - 1.0).abs() <= 0.1, "[{a}, {b}]");
    }
}
