//! Run configuration documents.

use std::path::{Path, PathBuf};

use dichotomy::bohl::{SearchConfig, WindowGrid};
use dichotomy::grassmann::derive_seed;
use dichotomy::spectrum::{j_bd, j_ed, Family, UniformityDimensions};
use dichotomy::systems::{
    load_sequence, make_block_switching, make_constant, make_identity, make_periodic, make_random, make_split_random,
    RateBlock, Schedule, TimeDomain,
};
use dichotomy::{Error, Sequence, Subspace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Rate schedule of one diagonal channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Constant {
        rate: f64,
    },
    Dyadic {
        inside: f64,
        outside: f64,
    },
    /// `[start, end, rate]` triples.
    Blocks {
        blocks: Vec<(i64, i64, f64)>,
    },
}

impl ChannelSpec {
    fn schedule(&self) -> Schedule<f64> {
        match self {
            ChannelSpec::Constant { rate } => Schedule::Constant(*rate),
            ChannelSpec::Dyadic { inside, outside } => Schedule::Dyadic { inside: *inside, outside: *outside },
            ChannelSpec::Blocks { blocks } => {
                Schedule::Blocks(blocks.iter().map(|&(start, end, rate)| RateBlock { start, end, rate }).collect())
            }
        }
    }
}

/// Generator name with parameters, or a matrix-sequence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    Identity {
        dim: usize,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// Constant `diag(e^{r_1}, ..., e^{r_d})`.
    Diagonal {
        rates: Vec<f64>,
    },
    Periodic {
        matrices: Vec<Vec<Vec<f64>>>,
    },
    /// Diagonal channels with piecewise-constant log-rates.
    BlockSwitching {
        channels: Vec<ChannelSpec>,
    },
    /// `I + scale * G(n)`; the seed defaults to one derived from the run seed.
    Random {
        dim: usize,
        scale: f64,
        seed: Option<u64>,
    },
    /// Exponential dichotomy of rank `k` with rate margin `rate`.
    SplitRandom {
        dim: usize,
        k: usize,
        rate: f64,
        seed: Option<u64>,
    },
    /// Path relative to the directory of the config file.
    File {
        path: PathBuf,
    },
}

/// Optional overrides of the default window grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub window_floors: Option<Vec<usize>>,
    pub window_stride: Option<usize>,
}

/// `"bd"`, `"ed"`, or an explicit list of `(j1, j2)` pairs for `k = 0..d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSpec {
    Named(String),
    Pairs(Vec<(usize, usize)>),
}

impl Default for DimsSpec {
    fn default() -> Self {
        DimsSpec::Named("ed".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsSpec {
    /// Basis vectors of `U`; the whole space when absent.
    pub subspace: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub gamma: f64,
    pub l1: Vec<Vec<f64>>,
    /// Defaults to the orthogonal complement of `l1`.
    #[serde(default)]
    pub l2: Option<Vec<Vec<f64>>>,
    pub dims: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformitySpec {
    pub l1: Vec<Vec<f64>>,
    /// Explicit complements of `l1`, each as basis vectors.
    #[serde(default)]
    pub complements: Vec<Vec<Vec<f64>>>,
    /// Additional uniformly sampled complements.
    #[serde(default)]
    pub random_complements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjectureSpec {
    pub families: Vec<Family>,
    pub dims: Vec<usize>,
    pub systems: usize,
    pub complements: usize,
    pub rate: f64,
}

impl Default for ConjectureSpec {
    fn default() -> Self {
        let d = dichotomy::spectrum::ConjectureConfig::default();
        ConjectureSpec {
            families: d.families,
            dims: d.dims,
            systems: d.systems,
            complements: d.complements,
            rate: d.rate,
        }
    }
}

fn default_domain() -> TimeDomain {
    TimeDomain::TwoSided
}

fn default_horizon() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    /// Rate shift `γ` applied to the system before anything else.
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_domain")]
    pub domain: TimeDomain,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, rename = "J")]
    pub dims: DimsSpec,
    #[serde(default)]
    pub seed: u64,
    /// Search budgets; their `seed` is replaced by the run seed.
    #[serde(default)]
    pub budgets: SearchConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub exponents: Option<ExponentsSpec>,
    #[serde(default)]
    pub check: Option<CheckSpec>,
    #[serde(default)]
    pub uniformity: Option<UniformitySpec>,
    #[serde(default)]
    pub conjecture: Option<ConjectureSpec>,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Core errors caused by the inputs rather than by the numerics.
pub(crate) fn input_error(e: Error) -> CliError {
    match e {
        Error::Io(io) => CliError::Io(io),
        Error::SingularMatrix { .. }
        | Error::EmptyPeriod
        | Error::ScheduleGap(_)
        | Error::Parse(_)
        | Error::DimensionMismatch(_)
        | Error::RankDeficient { .. }
        | Error::DimensionError(_)
        | Error::InvalidSplitting(_)
        | Error::OutOfHorizon { .. }
        | Error::Config(_) => CliError::Config(e.to_string()),
        other => CliError::Numerical(other),
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(config_err(format!("matrix must be square and nonempty, got {n} rows")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(config_err)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Search budgets carrying the run seed.
    pub fn search(&self) -> Result<SearchConfig, CliError> {
        let cfg = self.budgets.clone().with_seed(self.seed);
        cfg.validate().map_err(input_error)?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<WindowGrid, CliError> {
        let mut grid = WindowGrid::new(self.horizon);
        if let Some(f) = &self.grid.window_floors {
            grid.window_floors = f.clone();
        }
        if let Some(s) = self.grid.window_stride {
            grid.window_stride = s;
        }
        grid.validate().map_err(input_error)?;
        Ok(grid)
    }

    pub fn system(&self) -> Result<Sequence, CliError> {
        let seed_or = |s: Option<u64>| s.unwrap_or_else(|| derive_seed(self.seed, 0x5157));
        let seq = match &self.system {
            SystemSpec::Identity { dim } => {
                if *dim == 0 {
                    return Err(config_err("identity dimension must be positive"));
                }
                make_identity(*dim)
            }
            SystemSpec::Constant { matrix: rows } => make_constant(matrix(rows)?).map_err(input_error)?,
            SystemSpec::Diagonal { rates } => {
                let channels = rates.iter().map(|&r| Schedule::Constant(r)).collect();
                make_block_switching(channels, self.domain, self.horizon).map_err(input_error)?
            }
            SystemSpec::Periodic { matrices } => {
                let mats = matrices.iter().map(|m| matrix(m)).collect::<Result<Vec<_>, _>>()?;
                make_periodic(mats).map_err(input_error)?
            }
            SystemSpec::BlockSwitching { channels } => {
                make_block_switching(channels.iter().map(ChannelSpec::schedule).collect(), self.domain, self.horizon)
                    .map_err(input_error)?
            }
            SystemSpec::Random { dim, scale, seed } => {
                if *dim == 0 {
                    return Err(config_err("random system dimension must be positive"));
                }
                make_random(*dim, self.domain, self.horizon, *scale, seed_or(*seed))
            }
            SystemSpec::SplitRandom { dim, k, rate, seed } => {
                make_split_random(*dim, *k, self.domain, self.horizon, *rate, seed_or(*seed)).map_err(input_error)?.0
            }
            SystemSpec::File { path } => load_sequence(self.base_dir.join(path)).map_err(|e| match e {
                Error::Io(io) => CliError::Io(io),
                other => input_error(other),
            })?,
        };
        let seq = seq.with_domain(self.domain).with_horizon(self.horizon);
        Ok(if self.shift != 0.0 { seq.shifted(self.shift) } else { seq })
    }

    pub fn uniformity_dims(&self, d: usize) -> Result<UniformityDimensions, CliError> {
        match &self.dims {
            DimsSpec::Named(n) if n == "bd" => Ok(j_bd(d)),
            DimsSpec::Named(n) if n == "ed" => Ok(j_ed(d)),
            DimsSpec::Named(n) => {
                Err(config_err(format!("unknown uniformity dimensions {n:?}; use \"bd\", \"ed\" or a pair list")))
            }
            DimsSpec::Pairs(p) => UniformityDimensions::new(d, p.clone()).map_err(input_error),
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.base_dir.join(p),
            (None, None) => PathBuf::from("out"),
        }
    }
}

/// Subspace spanned by basis vectors `rows` of `R^d` (`[]` is the zero subspace).
pub fn subspace(d: usize, rows: &[Vec<f64>]) -> Result<Subspace, CliError> {
    Subspace::from_rows(d, rows).map_err(input_error)
}
