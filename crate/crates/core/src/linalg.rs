//! Dense complex matrix helpers, Hermitian tuples and clustered spectral
//! data of the first generator.
//!
//! Norms are Frobenius norms unless a function says otherwise. Scale factors
//! of the form `max(1, ‖A‖)` use the spectral norm when an eigendecomposition
//! is at hand and the Frobenius norm otherwise.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{PencilError, Result};

pub type CMat = DMatrix<Complex64>;

/// Relative Hermiticity tolerance applied at construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default relative gap used to split eigenvalue clusters.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
/// Relative eigenvalue separation required by the interpolation projector.
pub const INTERPOLATION_SEPARATION: f64 = 1e-3;
/// Relative size of the smallest eigenvalue below which a generator counts as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_real_diagonal(values: &[f64]) -> CMat {
    let mut m = CMat::zeros(values.len(), values.len());
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = c64(v, 0.0);
    }
    m
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m*) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `‖u u* − I‖` in the Frobenius norm.
pub fn unitary_deviation(u: &CMat) -> f64 {
    frobenius(&(u * u.adjoint() - identity(u.nrows())))
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Determinant by LU with partial pivoting.
pub fn determinant(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

/// Sorted eigenvalues and matching orthonormal eigenvector columns of a
/// Hermitian matrix.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitize(a);
    let n = h.nrows();
    let dense = faer::Mat::<Complex64>::from_fn(n, n, |i, j| h[(i, j)]);
    // The tridiagonal QR behind this call cannot fail on finite input.
    let eig = dense
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("self-adjoint eigensolver converges on finite input");
    let values = eig.S().column_vector().iter().map(|z| z.re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.U()[(i, j)]);
    (values, vectors)
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm(a: &CMat) -> f64 {
    let (values, _) = hermitian_eigen(a);
    values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Complex eigenvalues of a general square matrix.
///
/// Delegates to faer's Hessenberg QR, which carries exceptional shifts and
/// so does not stall on exactly repeated eigenvalues.
pub fn general_eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    if !is_finite(m) {
        return Err(PencilError::NumericalBreakdown(
            "non-finite matrix passed to the eigenvalue solver".into(),
        ));
    }
    let dense = faer::Mat::<Complex64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let values = dense
        .eigenvalues()
        .map_err(|e| PencilError::NumericalBreakdown(format!("eigenvalue iteration failed: {e:?}")))?;
    Ok(values.into_iter().collect())
}

/// Block-diagonal matrix holding `k` copies of `m`.
pub fn block_diag_copies(m: &CMat, k: usize) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(n * k, n * k);
    for b in 0..k {
        out.view_mut((b * n, b * n), (n, n)).copy_from(m);
    }
    out
}

/// An ordered tuple of square matrices of one common size, each Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianTuple {
    matrices: Vec<CMat>,
}

impl HermitianTuple {
    pub fn new(matrices: Vec<CMat>) -> Result<Self> {
        let tuple = Self::from_matrices_unchecked(matrices)?;
        for (l, a) in tuple.matrices.iter().enumerate() {
            let tol = HERMITIAN_TOL * frobenius(a).max(1.0);
            let deviation = hermitian_deviation(a);
            if deviation > tol {
                return Err(PencilError::NotHermitian {
                    index: l + 1,
                    deviation,
                });
            }
        }
        Ok(tuple)
    }

    /// Shape and finiteness checks only; Hermiticity is not enforced.
    pub fn from_matrices_unchecked(matrices: Vec<CMat>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(PencilError::InvalidArgument("tuple must hold at least one matrix".into()));
        };
        let dim = first.nrows();
        if dim == 0 {
            return Err(PencilError::InvalidArgument("matrices must be at least 1x1".into()));
        }
        for (l, a) in matrices.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(PencilError::DimensionMismatch(format!(
                    "matrix {} is {}x{}, expected {dim}x{dim}",
                    l + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
            if !is_finite(a) {
                return Err(PencilError::NonFinite);
            }
        }
        Ok(Self { matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[CMat] {
        &self.matrices
    }

    pub fn get(&self, l: usize) -> &CMat {
        &self.matrices[l]
    }

    pub fn into_matrices(self) -> Vec<CMat> {
        self.matrices
    }

    /// Largest Frobenius norm among the generators.
    pub fn max_norm(&self) -> f64 {
        self.matrices.iter().map(frobenius).fold(0.0, f64::max)
    }

    /// The tuple `Â_j = Σ_s c_js A_s`.
    pub fn transformed(&self, c: &DMatrix<f64>) -> Result<Self> {
        let m = self.len();
        if c.nrows() != m || c.ncols() != m {
            return Err(PencilError::DimensionMismatch(format!(
                "transform is {}x{}, tuple has {m} generators",
                c.nrows(),
                c.ncols()
            )));
        }
        let n = self.dim();
        let matrices = (0..m)
            .map(|j| {
                let mut acc = CMat::zeros(n, n);
                for s in 0..m {
                    acc += self.matrices[s].scale(c[(j, s)]);
                }
                hermitize(&acc)
            })
            .collect();
        Ok(Self { matrices })
    }

    /// Replace every singular generator `A_l` by `A_l + μ_l I` with
    /// `μ_l = ‖A_l‖ + 1`; returns the shifted tuple and the shifts (zero where
    /// no shift was needed). Shifts leave every invariant subspace in place.
    pub fn shifted_invertible(&self) -> (Self, Vec<f64>) {
        let mut shifts = Vec::with_capacity(self.len());
        let matrices = self
            .matrices
            .iter()
            .map(|a| {
                let (values, _) = hermitian_eigen(a);
                let norm = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let smallest = values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                if smallest < SINGULAR_TOL * norm.max(f64::MIN_POSITIVE) || norm == 0.0 {
                    let mu = norm + 1.0;
                    shifts.push(mu);
                    a + identity(a.nrows()).scale(mu)
                } else {
                    shifts.push(0.0);
                    a.clone()
                }
            })
            .collect();
        (Self { matrices }, shifts)
    }
}

/// Clustered spectral resolution `A₁ = Σ λ_j 𝒫_j`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// Cluster centres in increasing order.
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub projections: Vec<CMat>,
    /// `𝒯_j = Σ_{i≠j} λ_j/(λ_i − λ_j) 𝒫_i`.
    pub t_operators: Vec<CMat>,
    /// Eigenvector columns, grouped by cluster in increasing order.
    pub basis: CMat,
    /// Spectral norm of the decomposed matrix.
    pub norm: f64,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Offset of cluster `j` among the basis columns.
    pub fn offset(&self, j: usize) -> usize {
        self.multiplicities[..j].iter().sum()
    }

    /// `Σ_j f(λ_j) 𝒫_j`.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for (lambda, p) in self.eigenvalues.iter().zip(&self.projections) {
            out += p.scale(f(*lambda));
        }
        out
    }

    /// Residuals of the three resolution identities, in the order
    /// `‖Σ𝒫_j − I‖`, `max_{i,j} ‖𝒫_i𝒫_j − δ_ij𝒫_i‖`, `‖A − Σλ_j𝒫_j‖`.
    pub fn resolution_residuals(&self, a: &CMat) -> (f64, f64, f64) {
        let n = self.dim();
        let mut sum = CMat::zeros(n, n);
        for p in &self.projections {
            sum += p;
        }
        let completeness = frobenius(&(sum - identity(n)));
        let mut orthogonality = 0.0f64;
        for (i, pi) in self.projections.iter().enumerate() {
            for (j, pj) in self.projections.iter().enumerate() {
                let prod = pi * pj;
                let r = if i == j { frobenius(&(prod - pi)) } else { frobenius(&prod) };
                orthogonality = orthogonality.max(r);
            }
        }
        let resolution = frobenius(&(a - self.function(|x| x)));
        (completeness, orthogonality, resolution)
    }
}

/// Eigendecompose a Hermitian matrix and group eigenvalues into clusters,
/// splitting wherever consecutive sorted eigenvalues differ by more than
/// `gap_tol · max(1, ‖a‖)`.
pub fn eigendecompose_clustered(a: &CMat, gap_tol: f64) -> Result<SpectralData> {
    if !(gap_tol > 0.0) {
        return Err(PencilError::InvalidArgument("gap_tol must be positive".into()));
    }
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(PencilError::DimensionMismatch("expected a non-empty square matrix".into()));
    }
    let deviation = hermitian_deviation(a);
    if deviation > HERMITIAN_TOL * frobenius(a).max(1.0) {
        return Err(PencilError::NotHermitian { index: 1, deviation });
    }
    let (values, vectors) = hermitian_eigen(a);
    let norm = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let threshold = gap_tol * norm.max(1.0);

    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..values.len() {
        let gap = values[i] - values[i - 1];
        if gap > threshold / 10.0 && gap < threshold * 10.0 {
            return Err(PencilError::ClusterAmbiguity { gap, threshold });
        }
        if gap > threshold {
            groups.push((start, i));
            start = i;
        }
    }
    groups.push((start, values.len()));

    let dim = a.nrows();
    let mut basis = CMat::zeros(dim, dim);
    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut multiplicities = Vec::with_capacity(groups.len());
    let mut projections = Vec::with_capacity(groups.len());
    for &(lo, hi) in &groups {
        let width = hi - lo;
        let block = vectors.columns(lo, width).into_owned();
        let q = block.qr().q();
        basis.columns_mut(lo, width).copy_from(&q);
        projections.push(&q * q.adjoint());
        eigenvalues.push(values[lo..hi].iter().sum::<f64>() / width as f64);
        multiplicities.push(width);
    }
    let mut data = SpectralData {
        eigenvalues,
        multiplicities,
        projections,
        t_operators: Vec::new(),
        basis,
        norm,
    };
    data.t_operators = (0..data.n()).map(|j| t_operator(&data, j)).collect();
    Ok(data)
}

/// The spectral projector onto cluster `j` as the Lagrange polynomial
/// `∏_{r≠j}(a − λ_r I) / ∏_{r≠j}(λ_j − λ_r)`.
pub fn projection_by_interpolation(a: &CMat, spec: &SpectralData, j: usize) -> Result<CMat> {
    let n = spec.n();
    if j >= n {
        return Err(PencilError::IndexOutOfRange { index: j, limit: n });
    }
    let required = INTERPOLATION_SEPARATION * spec.norm.max(1.0);
    for r in 0..n {
        for s in (r + 1)..n {
            let separation = (spec.eigenvalues[s] - spec.eigenvalues[r]).abs();
            if separation < required {
                return Err(PencilError::SeparationTooSmall {
                    i: r + 1,
                    j: s + 1,
                    separation,
                    required,
                });
            }
        }
    }
    let dim = a.nrows();
    let lambda_j = spec.eigenvalues[j];
    let mut out = identity(dim);
    for (r, &lambda_r) in spec.eigenvalues.iter().enumerate() {
        if r == j {
            continue;
        }
        let factor = (a - identity(dim).scale(lambda_r)).unscale(lambda_j - lambda_r);
        out = factor * out;
    }
    Ok(out)
}

/// `𝒯_j = Σ_{i≠j} λ_j/(λ_i − λ_j) 𝒫_i`; the zero matrix for a single cluster.
pub fn t_operator(spec: &SpectralData, j: usize) -> CMat {
    let dim = spec.dim();
    let lambda_j = spec.eigenvalues[j];
    let mut out = CMat::zeros(dim, dim);
    for (i, p) in spec.projections.iter().enumerate() {
        if i != j {
            out += p.scale(lambda_j / (spec.eigenvalues[i] - lambda_j));
        }
    }
    out
}

/// `u a u*`, after checking that `u` is unitary.
pub fn conjugate(a: &CMat, u: &CMat) -> Result<CMat> {
    if a.shape() != u.shape() {
        return Err(PencilError::DimensionMismatch("conjugate: shapes differ".into()));
    }
    let deviation = unitary_deviation(u);
    if deviation > 1e-10 * u.nrows() as f64 {
        return Err(PencilError::NotUnitary { deviation });
    }
    Ok(u * a * u.adjoint())
}

/// Each generator replaced by the block-diagonal sum of `k` copies of itself.
pub fn direct_sum_k_copies(tuple: &HermitianTuple, k: usize) -> Result<HermitianTuple> {
    if k == 0 {
        return Err(PencilError::InvalidArgument("k must be at least 1".into()));
    }
    let matrices = tuple.matrices().iter().map(|a| block_diag_copies(a, k)).collect();
    Ok(HermitianTuple { matrices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{haar_unitary, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMat {
        from_real_diagonal(v)
    }

    #[test]
    fn eigenvectors_resolve_repeated_values_in_a_rotated_basis() {
        for seed in 0..20 {
            let u = haar_unitary(6, seed);
            let a = conjugate(&diag(&[-1.5, -1.5, -1.5, 1.1, 1.1, 1.1]), &u).unwrap();
            let (values, vectors) = hermitian_eigen(&a);
            let rebuilt = &vectors * from_real_diagonal(&values) * vectors.adjoint();
            assert!(max_abs(&(rebuilt - &a)) < 1e-12, "seed {seed}");
            let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
            assert!(spec.resolution_residuals(&a).2 < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn clusters_diagonal_matrix() {
        let spec = eigendecompose_clustered(&diag(&[1.0, 1.0, 2.0, 2.0]), 1e-8).unwrap();
        assert_eq!(spec.eigenvalues, vec![1.0, 2.0]);
        assert_eq!(spec.multiplicities, vec![2, 2]);
        assert!(frobenius(&(&spec.projections[0] - diag(&[1.0, 1.0, 0.0, 0.0]))) < 1e-14);
    }

    #[test]
    fn one_by_one_matrix() {
        let spec = eigendecompose_clustered(&diag(&[5.0]), 1e-8).unwrap();
        assert_eq!(spec.eigenvalues, vec![5.0]);
        assert_eq!(spec.multiplicities, vec![1]);
        assert!(frobenius(&(&spec.projections[0] - identity(1))) < 1e-15);
        assert!(frobenius(&spec.t_operators[0]) == 0.0);
    }

    #[test]
    fn random_resolution_of_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_hermitian(6, &mut rng);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        let (complete, orth, res) = spec.resolution_residuals(&a);
        assert!(complete <= 1e-10 * 6.0, "{complete}");
        assert!(orth <= 1e-10 * 6.0, "{orth}");
        assert!(res <= 1e-9 * hermitian_norm(&a), "{res}");
        for (p, &l) in spec.projections.iter().zip(&spec.multiplicities) {
            let trace: f64 = p.trace().re;
            assert!((trace - l as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn ambiguous_gap_is_reported() {
        let err = eigendecompose_clustered(&diag(&[1.0, 1.0 + 2e-8, 2.0]), 1e-8).unwrap_err();
        assert!(matches!(err, PencilError::ClusterAmbiguity { .. }));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = diag(&[1.0, 2.0]);
        a[(0, 1)] = c64(1.0, 0.0);
        assert!(matches!(
            eigendecompose_clustered(&a, 1e-8),
            Err(PencilError::NotHermitian { .. })
        ));
        assert!(HermitianTuple::new(vec![a]).is_err());
    }

    #[test]
    fn interpolation_projector_small_cases() {
        let a = diag(&[1.0, 2.0]);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        let p = projection_by_interpolation(&a, &spec, 0).unwrap();
        assert!(frobenius(&(p - diag(&[1.0, 0.0]))) < 1e-15);

        let a = diag(&[1.0, 1.0, 2.0, 2.0]);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        let p = projection_by_interpolation(&a, &spec, 1).unwrap();
        assert!(frobenius(&(p - diag(&[0.0, 0.0, 1.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn interpolation_projector_matches_outer_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(6, &mut rng);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        let (_, vectors) = hermitian_eigen(&a);
        for j in 0..spec.n() {
            // Independent route: outer product of the raw eigenvector column.
            let v = vectors.column(j).into_owned();
            let oracle = &v * v.adjoint();
            let p = projection_by_interpolation(&a, &spec, j).unwrap();
            assert!(max_abs(&(p - oracle)) <= 1e-9 * 6.0);
        }
    }

    #[test]
    fn interpolation_rejects_close_clusters() {
        let a = diag(&[1.0, 1.0005, 3.0]);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        assert!(matches!(
            projection_by_interpolation(&a, &spec, 0),
            Err(PencilError::SeparationTooSmall { .. })
        ));
    }

    #[test]
    fn t_operator_small_cases() {
        let spec = eigendecompose_clustered(&diag(&[1.0, 2.0]), 1e-8).unwrap();
        assert!(frobenius(&(t_operator(&spec, 0) - diag(&[0.0, 1.0]))) < 1e-15);
        assert!(frobenius(&(t_operator(&spec, 1) - diag(&[-2.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn t_operator_annihilates_its_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = block_diag_copies(&random_hermitian(3, &mut rng), 2);
        let spec = eigendecompose_clustered(&a, 1e-8).unwrap();
        for j in 0..spec.n() {
            let p = &spec.projections[j];
            let t = &spec.t_operators[j];
            assert!(frobenius(&(p * t)) <= 1e-10 * 6.0);
            assert!(frobenius(&(t * p)) <= 1e-10 * 6.0);
        }
    }

    #[test]
    fn conjugate_cases() {
        let a = diag(&[1.0, 2.0]);
        assert_eq!(conjugate(&a, &identity(2)).unwrap(), a);
        let swap = CMat::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]);
        assert!(frobenius(&(conjugate(&a, &swap).unwrap() - diag(&[2.0, 1.0]))) < 1e-15);
        assert!(matches!(
            conjugate(&a, &diag(&[1.0, 2.0])),
            Err(PencilError::NotUnitary { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(5, &mut rng);
        let u = haar_unitary(5, 9);
        let conj = conjugate(&h, &u).unwrap();
        let (before, _) = hermitian_eigen(&h);
        let (after, _) = hermitian_eigen(&conj);
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn direct_sum_shapes() {
        let x = CMat::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]);
        let t = HermitianTuple::new(vec![diag(&[1.0, 2.0]), x.clone()]).unwrap();
        let one = direct_sum_k_copies(&t, 1).unwrap();
        assert_eq!(one, t);
        let two = direct_sum_k_copies(&t, 2).unwrap();
        assert_eq!(two.dim(), 4);
        assert_eq!(two.get(1).view((2, 2), (2, 2)).into_owned(), x);
        assert_eq!(two.get(1)[(0, 2)], c64(0.0, 0.0));
    }

    #[test]
    fn direct_sum_multiplies_multiplicities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_hermitian(3, &mut rng);
        let t = HermitianTuple::new(vec![a.clone(), a]).unwrap();
        let seed_spec = eigendecompose_clustered(t.get(0), 1e-8).unwrap();
        let summed = direct_sum_k_copies(&t, 3).unwrap();
        let spec = eigendecompose_clustered(summed.get(0), 1e-8).unwrap();
        let expected: Vec<usize> = seed_spec.multiplicities.iter().map(|l| 3 * l).collect();
        assert_eq!(spec.multiplicities, expected);
    }

    #[test]
    fn shift_only_touches_singular_generators() {
        let t = HermitianTuple::new(vec![diag(&[1.0, 2.0]), diag(&[0.0, 3.0])]).unwrap();
        let (shifted, mu) = t.shifted_invertible();
        assert_eq!(mu, vec![0.0, 4.0]);
        assert_eq!(shifted.get(1), &diag(&[4.0, 7.0]));
    }
}
