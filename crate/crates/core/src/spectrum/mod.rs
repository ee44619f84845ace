//! Dichotomy spectra, filtrations, decompositions, certificates, and maximal
//! uniformity dimensions.

pub mod assemble;
pub mod certify;
pub mod dims;
pub mod filtration;
pub mod uniformity;

pub use assemble::{
    compute_spectrum, resolvent_intervals, Diagnostics, ExponentDiagnostic, ResolventGap, SpectrumReport, GAP_TOL,
};
pub use certify::{
    certify_dichotomy, check_d1, check_d2, DCheck, DichotomyCertificate, GrowthProfile, Verdict, SLOPE_TOL,
};
pub use dims::{is_admissible, j_bd, j_ed, UniformityDimensions};
pub use filtration::{extract_decomposition, extract_filtration, FiltrationSpace};
pub use uniformity::{
    conjecture_search, inductive_constant, maximal_uniformity, observed_tail_constant, tail_to_global_constant,
    uniformity_independence_check, ConjectureConfig, ConjectureReport, Family, Finding, IndependenceReport,
    MaximalUniformity,
};
