//! Uniformity dimensions `J = ((j_{1,0}, j_{2,0}), ..., (j_{1,d}, j_{2,d}))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether `(j1, j2)` is `k`-admissible in dimension `d`.
pub fn is_admissible(d: usize, k: usize, j1: usize, j2: usize) -> bool {
    if k > d {
        return false;
    }
    if k == 0 {
        j1 == 0 && (1..=d).contains(&j2)
    } else if k == d {
        (1..=d).contains(&j1) && j2 == 0
    } else {
        (1..=k).contains(&j1) && (1..=d - k).contains(&j2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UniformityDimensions {
    pub pairs: Vec<(usize, usize)>,
}

impl UniformityDimensions {
    /// Validated dimensions for `R^d`: `d + 1` pairs, each admissible at its `k`.
    pub fn new(d: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let dims = UniformityDimensions { pairs };
        dims.validate(d)?;
        Ok(dims)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.pairs.len() != d + 1 {
            return Err(Error::Config(format!(
                "uniformity dimensions need {} pairs for d = {d}, got {}",
                d + 1,
                self.pairs.len()
            )));
        }
        for (k, &(j1, j2)) in self.pairs.iter().enumerate() {
            if !is_admissible(d, k, j1, j2) {
                return Err(Error::Config(format!("pair ({j1}, {j2}) is not {k}-admissible for d = {d}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.pairs.len() - 1
    }

    pub fn j1(&self, k: usize) -> usize {
        self.pairs[k].0
    }

    pub fn j2(&self, k: usize) -> usize {
        self.pairs[k].1
    }
}

/// Bohl dichotomy: `((0,1), (1,1), ..., (1,1), (1,0))`.
pub fn j_bd(d: usize) -> UniformityDimensions {
    let pairs = (0..=d)
        .map(|k| match k {
            0 => (0, 1),
            k if k == d => (1, 0),
            _ => (1, 1),
        })
        .collect();
    UniformityDimensions { pairs }
}

/// Exponential dichotomy: `((0,d), (1,d-1), ..., (d,0))`.
pub fn j_ed(d: usize) -> UniformityDimensions {
    UniformityDimensions { pairs: (0..=d).map(|k| (k, d - k)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissibility_examples() {
        assert!(is_admissible(3, 0, 0, 2));
        assert!(!is_admissible(3, 2, 3, 1));
        assert!(is_admissible(3, 3, 2, 0));
        assert!(!is_admissible(3, 0, 1, 1));
        assert!(!is_admissible(3, 1, 1, 0));
    }

    #[test]
    fn canonical_dimensions() {
        assert_eq!(j_bd(2).pairs, vec![(0, 1), (1, 1), (1, 0)]);
        assert_eq!(j_bd(1).pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(j_ed(2).pairs, vec![(0, 2), (1, 1), (2, 0)]);
        assert_eq!(j_ed(1), j_bd(1));
        for d in 1..=5 {
            assert!(j_bd(d).validate(d).is_ok());
            assert!(j_ed(d).validate(d).is_ok());
        }
    }

    #[test]
    fn explicit_dimensions_are_checked() {
        assert!(UniformityDimensions::new(2, vec![(1, 1), (1, 1), (1, 0)]).is_err());
        assert!(UniformityDimensions::new(2, vec![(0, 1), (1, 0)]).is_err());
        assert!(UniformityDimensions::new(2, vec![(0, 2), (1, 1), (2, 0)]).is_ok());
    }
}
