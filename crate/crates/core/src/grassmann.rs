//! Subspaces, splittings, and sampling on Grassmannians `G_j(L)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default minimal principal angle (radians) between the two halves of a splitting.
pub const ANGLE_TOL: f64 = 1e-6;

/// Relative pivot size below which columns count as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Largest ambient dimension for exhaustive coordinate enumeration.
pub const MAX_COORDINATE_DIM: usize = 8;

/// Linear subspace of `R^d` stored as a `d x j` matrix with orthonormal columns.
///
/// `j = 0` (an empty basis) is the zero subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T: Real> {
    basis: DMatrix<T>,
}

/// SplitMix64 step, used to derive independent deterministic RNG streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal_matrix<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

impl<T: Real> Subspace<T> {
    pub fn zero(d: usize) -> Self {
        Subspace { basis: DMatrix::zeros(d, 0) }
    }

    pub fn full(d: usize) -> Self {
        Subspace { basis: DMatrix::identity(d, d) }
    }

    /// `span{e_i : i in indices}`.
    pub fn coordinate(d: usize, indices: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(d, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            basis[(i, c)] = T::one();
        }
        Subspace { basis }
    }

    /// Wraps a matrix whose columns are already orthonormal (not checked).
    pub(crate) fn from_orthonormal(basis: DMatrix<T>) -> Self {
        Subspace { basis }
    }

    /// Orthonormal basis of the column span of `matrix`; the columns must be independent.
    pub fn orthonormalize(matrix: &DMatrix<T>) -> Result<Self> {
        let (d, j) = matrix.shape();
        if j == 0 {
            return Ok(Self::zero(d));
        }
        if j > d {
            return Err(Error::RankDeficient { pivot: 0.0 });
        }
        let scale = matrix.column_iter().map(|c| c.norm()).fold(T::zero(), |a, b| a.max(b));
        if scale == T::zero() {
            return Err(Error::RankDeficient { pivot: 0.0 });
        }
        // Gram-Schmidt keeps exact zeros, so coordinate subspaces stay invariant.
        let (q, r) = crate::propagation::positive_qr(matrix.clone());
        let pivot = (0..j).map(|i| r[(i, i)].abs()).fold(scale, |a, b| a.min(b)) / scale;
        if pivot <= T::lit(RANK_TOL) {
            return Err(Error::RankDeficient { pivot: pivot.as_f64() });
        }
        Ok(Subspace { basis: q })
    }

    /// Orthonormal basis of the range of `matrix`, dropping directions whose
    /// singular value is below `tol * max(1, sigma_max)`.
    pub fn span_of(matrix: &DMatrix<T>, tol: T) -> Self {
        let (d, j) = matrix.shape();
        if j == 0 || matrix.iter().all(|x| *x == T::zero()) {
            return Self::zero(d);
        }
        let svd = matrix.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let cut = tol * smax.max(T::one());
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cut).collect();
        let mut basis = DMatrix::zeros(d, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            basis.set_column(c, &u.column(i));
        }
        Subspace { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// Orthogonal projector `Q Q^T`.
    pub fn projector(&self) -> DMatrix<T> {
        &self.basis * self.basis.transpose()
    }

    /// `max |Q^T Q - I|`.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.basis.transpose() * &self.basis - DMatrix::identity(self.dim(), self.dim());
        g.iter().fold(T::zero(), |a, x| a.max(x.abs()))
    }

    /// Whether `other` is contained in `self` (residual after projection below `1e-8`).
    pub fn contains(&self, other: &Subspace<T>) -> bool {
        self.contains_tol(other, T::lit(1e-8))
    }

    pub fn contains_tol(&self, other: &Subspace<T>, tol: T) -> bool {
        if other.is_zero() {
            return true;
        }
        if other.dim() > self.dim() {
            return false;
        }
        let resid = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        resid.column_iter().all(|c| c.norm() < tol)
    }

    pub fn orthogonal_complement(&self) -> Subspace<T> {
        let d = self.ambient_dim();
        let p = DMatrix::identity(d, d) - self.projector();
        Subspace::span_of(&p, T::lit(1e-8))
    }

    /// Sum `self + other`.
    pub fn join(&self, other: &Subspace<T>) -> Subspace<T> {
        let d = self.ambient_dim();
        let mut m = DMatrix::zeros(d, self.dim() + other.dim());
        m.view_mut((0, 0), (d, self.dim())).copy_from(&self.basis);
        m.view_mut((0, self.dim()), (d, other.dim())).copy_from(&other.basis);
        Subspace::span_of(&m, T::lit(1e-8))
    }

    /// Principal vectors of `self` whose principal angle to `other` is below `angle_tol`.
    pub fn intersection(&self, other: &Subspace<T>, angle_tol: T) -> Subspace<T> {
        let d = self.ambient_dim();
        if self.is_zero() || other.is_zero() {
            return Subspace::zero(d);
        }
        let svd = (self.basis.transpose() * &other.basis).svd(true, false);
        let u = svd.u.expect("requested");
        let cut = angle_tol.cos();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] >= cut).collect();
        let mut m = DMatrix::zeros(self.dim(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            m.set_column(c, &u.column(i));
        }
        Subspace::span_of(&(&self.basis * m), T::lit(1e-8))
    }

    /// Basis vectors as rows (`j` rows of `d` entries).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.basis.column_iter().map(|c| c.iter().map(|x| x.as_f64()).collect()).collect()
    }

    /// Orthonormalizes basis vectors given as rows.
    pub fn from_rows(d: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!("basis row has {} entries, expected {d}", bad.len())));
        }
        let m = DMatrix::from_fn(d, rows.len(), |r, c| T::lit(rows[c][r]));
        Self::orthonormalize(&m)
    }

    pub fn cast<S: Real>(&self) -> Subspace<S> {
        Subspace { basis: self.basis.map(|x| S::lit(x.as_f64())) }
    }
}

/// Principal angles between `u` and `v`, ascending (nonincreasing cosines), in `[0, pi/2]`.
pub fn principal_angles<T: Real>(u: &Subspace<T>, v: &Subspace<T>) -> Result<Vec<T>> {
    if u.is_zero() || v.is_zero() {
        return Err(Error::ZeroSubspace);
    }
    if u.ambient_dim() != v.ambient_dim() {
        return Err(Error::DimensionMismatch("subspaces live in different spaces".into()));
    }
    // Larger space first so the sines are the residuals of the smaller one.
    let (big, small) = if u.dim() >= v.dim() { (u, v) } else { (v, u) };
    let k = small.dim();
    let mut cosines: Vec<T> =
        (big.basis.transpose() * &small.basis).singular_values().iter().map(|&c| c.min(T::one())).collect();
    cosines.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let resid = &small.basis - &big.basis * (big.basis.transpose() * &small.basis);
    let mut sines: Vec<T> = if resid.nrows() == 0 {
        vec![T::zero(); k]
    } else {
        resid.singular_values().iter().map(|&s| s.min(T::one())).collect()
    };
    sines.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let half = T::lit(0.5);
    Ok((0..k)
        .map(|i| {
            let c = cosines[i];
            if c * c < half {
                c.acos()
            } else {
                sines[i].asin()
            }
        })
        .collect())
}

/// `(l1, l2)` with `dim l1 + dim l2 = d` and transversal halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting<T: Real> {
    l1: Subspace<T>,
    l2: Subspace<T>,
    /// `[B1 B2]^{-1}` for the oblique projections.
    coords: DMatrix<T>,
}

pub fn is_splitting<T: Real>(l1: &Subspace<T>, l2: &Subspace<T>) -> bool {
    is_splitting_tol(l1, l2, T::lit(ANGLE_TOL))
}

pub fn is_splitting_tol<T: Real>(l1: &Subspace<T>, l2: &Subspace<T>, angle_tol: T) -> bool {
    let d = l1.ambient_dim();
    if l2.ambient_dim() != d || l1.dim() + l2.dim() != d {
        return false;
    }
    if l1.is_zero() || l2.is_zero() {
        return true;
    }
    match principal_angles(l1, l2) {
        Ok(angles) => angles[0] > angle_tol,
        Err(_) => false,
    }
}

/// Serialized as `{"l1": rows, "l2": rows}`.
impl<T: Real> serde::Serialize for Splitting<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Splitting", 2)?;
        st.serialize_field("l1", &self.l1.to_rows())?;
        st.serialize_field("l2", &self.l2.to_rows())?;
        st.end()
    }
}

impl<T: Real> Splitting<T> {
    pub fn new(l1: Subspace<T>, l2: Subspace<T>) -> Result<Self> {
        if !is_splitting(&l1, &l2) {
            return Err(Error::InvalidSplitting(format!(
                "dimensions {} + {} in R^{} or halves not transversal",
                l1.dim(),
                l2.dim(),
                l1.ambient_dim()
            )));
        }
        let d = l1.ambient_dim();
        let mut b = DMatrix::zeros(d, d);
        b.view_mut((0, 0), (d, l1.dim())).copy_from(l1.basis());
        b.view_mut((0, l1.dim()), (d, l2.dim())).copy_from(l2.basis());
        let coords = b.try_inverse().ok_or_else(|| Error::InvalidSplitting("combined basis not invertible".into()))?;
        Ok(Splitting { l1, l2, coords })
    }

    /// `(L1, L1^perp)`.
    pub fn orthogonal(l1: Subspace<T>) -> Result<Self> {
        let l2 = l1.orthogonal_complement();
        Self::new(l1, l2)
    }

    pub fn l1(&self) -> &Subspace<T> {
        &self.l1
    }

    pub fn l2(&self) -> &Subspace<T> {
        &self.l2
    }

    /// Oblique projection `pi_{L_which}` of the columns of `m`.
    pub fn project_matrix(&self, m: &DMatrix<T>, which: u8) -> DMatrix<T> {
        let c = &self.coords * m;
        let k = self.l1.dim();
        match which {
            1 => self.l1.basis() * c.rows(0, k),
            _ => self.l2.basis() * c.rows(k, self.l2.dim()),
        }
    }

    pub fn project_vector(&self, v: &DVector<T>, which: u8) -> DVector<T> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.project_matrix(&m, which).column(0).into_owned()
    }
}

/// `pi_{L_which}[V]`; the dimension may drop.
pub fn project_onto<T: Real>(splitting: &Splitting<T>, v: &Subspace<T>, which: u8) -> Subspace<T> {
    if v.is_zero() {
        return Subspace::zero(v.ambient_dim());
    }
    Subspace::span_of(&splitting.project_matrix(v.basis(), which), T::lit(1e-9))
}

/// `count` independent uniformly distributed elements of `G_j(R^d)`.
pub fn sample_uniform<T: Real>(d: usize, j: usize, count: usize, seed: u64) -> Result<Vec<Subspace<T>>> {
    if j > d {
        return Err(Error::DimensionError(format!("cannot sample {j}-dimensional subspaces of R^{d}")));
    }
    sample_in(&Subspace::full(d), j, count, seed)
}

/// `count` independent uniformly distributed elements of `G_j(L)`.
pub fn sample_in<T: Real>(l: &Subspace<T>, j: usize, count: usize, seed: u64) -> Result<Vec<Subspace<T>>> {
    if j > l.dim() {
        return Err(Error::DimensionError(format!(
            "cannot sample {j}-dimensional subspaces of a {}-dimensional space",
            l.dim()
        )));
    }
    let d = l.ambient_dim();
    if j == 0 {
        return Ok(vec![Subspace::zero(d); count]);
    }
    if j == l.dim() {
        return Ok(vec![l.clone(); count]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let coeffs = normal_matrix::<T>(&mut rng, l.dim(), j);
        if let Ok(s) = Subspace::orthonormalize(&(l.basis() * coeffs)) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Neighbours of `u` at principal-angle distance at most `atan(step)`.
///
/// Each neighbour is the span of `Q + step * D` with `D` a random tangent
/// direction (`Q^T D = 0`) of unit Frobenius norm.
pub fn perturb<T: Real>(u: &Subspace<T>, step: T, count: usize, seed: u64) -> Vec<Subspace<T>> {
    perturb_within(&Subspace::full(u.ambient_dim()), u, step, count, seed)
}

/// Like [`perturb`] but the neighbours stay inside `l` (requires `u ⊆ l`).
pub fn perturb_within<T: Real>(l: &Subspace<T>, u: &Subspace<T>, step: T, count: usize, seed: u64) -> Vec<Subspace<T>> {
    let j = u.dim();
    if step == T::zero() || j == 0 || j >= l.dim() {
        return vec![u.clone(); count];
    }
    // Work in the coordinates of l.
    let coeff = l.basis().transpose() * u.basis();
    let proj = DMatrix::identity(l.dim(), l.dim()) - &coeff * coeff.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let tangent = &proj * normal_matrix::<T>(&mut rng, l.dim(), j);
        let norm = tangent.norm();
        if norm <= T::lit(1e-12) {
            continue;
        }
        let moved = &coeff + tangent * (step / norm);
        if let Ok(s) = Subspace::orthonormalize(&(l.basis() * moved)) {
            out.push(s);
        }
    }
    out
}

/// All `C(d, j)` coordinate subspaces in lexicographic index order.
pub fn coordinate_subspaces<T: Real>(d: usize, j: usize) -> Result<Vec<Subspace<T>>> {
    if j > d || d > MAX_COORDINATE_DIM {
        return Err(Error::DimensionError(format!(
            "coordinate enumeration needs 0 <= j <= d <= {MAX_COORDINATE_DIM}, got j={j}, d={d}"
        )));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..j).collect();
    loop {
        out.push(Subspace::coordinate(d, &idx));
        // Advance to the next combination.
        let mut i = j;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < d - j + i {
                idx[i] += 1;
                for k in i + 1..j {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}
