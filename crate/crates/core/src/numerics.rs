//! Dense complex linear-algebra kernels.
//!
//! Everything above this module works with [`CMat`] (column-major
//! `nalgebra` matrices of `Complex<f64>`) and with [`SubspaceBasis`], an
//! orthonormal basis of a subspace of `C^n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Relative tolerance for Hermitian input checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance for orthonormality of stored bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Rank tolerance used when comparing subspaces that came out of numerical
/// computations (flags, kernels, witnesses).
pub const SUBSPACE_TOL: f64 = 1e-8;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real_diag(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { C64::from(values[i]) } else { C64::from(0.0) })
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(a + a^dag) / 2`
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::from(0.5)
}

pub fn asymmetry(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.is_square() && asymmetry(a) <= tol * a.norm().max(1.0)
}

pub fn real_trace(a: &CMat) -> f64 {
    a.trace().re
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let mut acc = C64::from(0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eigen(a: &CMat) -> (DVector<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), CMat::zeros(0, 0));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `v diag(f(w)) v^dag` for a Hermitian `a = v diag(w) v^dag`.
pub fn herm_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (w, v) = herm_eigen(a);
    spectral_compose(&v, w.iter().map(|&x| f(x)))
}

pub fn spectral_compose(frame: &CMat, values: impl IntoIterator<Item = f64>) -> CMat {
    let mut scaled = frame.clone();
    for (j, s) in values.into_iter().enumerate() {
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * frame.adjoint()
}

fn check_pd(a: &CMat) -> Result<(DVector<f64>, CMat)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    if !is_hermitian(a, HERMITIAN_TOL) {
        return Err(Error::NotHermitian { asymmetry: asymmetry(a) });
    }
    let (w, v) = herm_eigen(a);
    let n = a.nrows();
    let top = w.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    let floor = n as f64 * f64::EPSILON * top;
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && (min <= floor || !min.is_finite() || min <= 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok((w, v))
}

/// Principal square root of a positive-definite Hermitian matrix.
pub fn pd_sqrt(x: &CMat) -> Result<CMat> {
    let (w, v) = check_pd(x)?;
    Ok(spectral_compose(&v, w.iter().map(|&e| e.sqrt())))
}

pub fn pd_inv_sqrt(x: &CMat) -> Result<CMat> {
    let (w, v) = check_pd(x)?;
    Ok(spectral_compose(&v, w.iter().map(|&e| 1.0 / e.sqrt())))
}

/// Hermitian eigen-decomposition after a positive-definiteness check.
pub fn pd_eigen(x: &CMat) -> Result<(DVector<f64>, CMat)> {
    check_pd(x)
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `max(rows, cols) * eps * sigma_max`
pub fn default_rank_tol(a: &CMat) -> f64 {
    let top = singular_values(a).first().copied().unwrap_or(0.0);
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON * top
}

pub fn numeric_rank(a: &CMat, tol: Option<f64>) -> usize {
    let s = singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or(a.nrows().max(a.ncols()) as f64 * f64::EPSILON * top);
    s.iter().filter(|&&x| x > tol).count()
}

fn reverse_both(a: &CMat) -> CMat {
    let (r, c) = a.shape();
    CMat::from_fn(r, c, |i, j| a[(r - 1 - i, c - 1 - j)])
}

/// Thin QR by classical Gram–Schmidt with one reorthogonalisation pass.
/// `r` has a real positive diagonal. Exact zeros in the input stay exact,
/// so permutation-like matrices factor without rounding noise.
pub(crate) fn gs_qr(a: &CMat) -> Result<(CMat, CMat)> {
    let (rows, n) = a.shape();
    let mut q = CMat::zeros(rows, n);
    let mut r = CMat::zeros(n, n);
    for j in 0..n {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dotc(&v);
                if c != C64::from(0.0) {
                    r[(i, j)] += c;
                    v.axpy(-c, &q.column(i), C64::from(1.0));
                }
            }
        }
        let mag = v.norm();
        if mag == 0.0 || !mag.is_finite() {
            return Err(Error::Singular { rank: j, dim: n });
        }
        r[(j, j)] = C64::from(mag);
        q.set_column(j, &(v / C64::from(mag)));
    }
    Ok((q, r))
}

/// Unchecked factorisation `a = b k`, `b` upper triangular with positive
/// diagonal, `k` unitary, from the QR factorisation of the row-and-column
/// reversed adjoint. Rows of `a` are orthogonalised from the last one up,
/// so each row only carries rounding relative to its own norm; that keeps
/// strongly graded inputs (points far out along a ray) accurate.
pub(crate) fn rq_positive_raw(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let (q, r) = gs_qr(&reverse_both(&a.adjoint()))?;
    Ok((reverse_both(&r.adjoint()), reverse_both(&q.adjoint())))
}

/// `a = b k` with `b` upper triangular, real positive diagonal, and `k`
/// unitary. Fails with [`Error::Singular`] when `a` has numeric rank below
/// `n` at relative tolerance `1e-10`.
pub fn rq_positive(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    let s = singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > 1e-10 * top).count();
    if rank < n || top == 0.0 && n > 0 {
        return Err(Error::Singular { rank, dim: n });
    }
    rq_positive_raw(a)
}

/// Order-preserving Gram–Schmidt of the columns of an invertible matrix:
/// the first `i` output columns span the same space as the first `i` input
/// columns, for every `i`.
pub fn gram_schmidt(a: &CMat) -> Result<CMat> {
    let n = a.ncols();
    if n == 0 {
        return Ok(a.clone());
    }
    let rank = numeric_rank(a, Some(1e-10 * singular_values(a)[0]));
    if rank < n {
        return Err(Error::Singular { rank, dim: n });
    }
    Ok(gs_qr(a)?.0)
}

pub fn is_unitary(u: &CMat, tol: f64) -> bool {
    u.is_square() && (u.adjoint() * u - identity(u.nrows())).norm() <= tol
}

/// Numerically stable `log(sum exp(x_i))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Orthonormal basis of a subspace of `C^ambient`.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    ambient: usize,
    basis: CMat,
}

impl SubspaceBasis {
    /// Wraps an `ambient x k` matrix that is already orthonormal.
    pub fn from_orthonormal(basis: CMat) -> Result<Self> {
        let k = basis.ncols();
        if k > basis.nrows() {
            return Err(Error::DimensionMismatch { expected: basis.nrows(), found: k });
        }
        let defect = (basis.adjoint() * &basis - identity(k)).norm();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Self { ambient: basis.nrows(), basis })
    }

    /// Column span of an arbitrary `ambient x k` matrix, rank cut at `tol`
    /// (default: the machine-epsilon convention of [`default_rank_tol`]).
    pub fn span(a: &CMat, tol: Option<f64>) -> Self {
        let n = a.nrows();
        if a.ncols() == 0 || n == 0 {
            return Self::zero(n);
        }
        let svd = a.clone().svd(true, false);
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = tol.unwrap_or(n.max(a.ncols()) as f64 * f64::EPSILON * top);
        let u = svd.u.expect("u requested");
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
        let basis = CMat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])]);
        Self { ambient: n, basis }
    }

    pub fn zero(n: usize) -> Self {
        Self { ambient: n, basis: CMat::zeros(n, 0) }
    }

    pub fn full(n: usize) -> Self {
        Self { ambient: n, basis: identity(n) }
    }

    /// Span of the standard basis vectors with the given (0-based) indices.
    pub fn coordinate(n: usize, indices: &[usize]) -> Self {
        let basis = CMat::from_fn(n, indices.len(), |i, j| {
            if indices[j] == i {
                C64::from(1.0)
            } else {
                C64::from(0.0)
            }
        });
        Self { ambient: n, basis }
    }

    /// Span of the selected columns of a unitary frame.
    pub fn frame_columns(frame: &CMat, indices: &[usize]) -> Self {
        let basis = CMat::from_fn(frame.nrows(), indices.len(), |i, j| frame[(i, indices[j])]);
        Self { ambient: frame.nrows(), basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    pub fn complement(&self) -> Self {
        if self.dim() == 0 {
            return Self::full(self.ambient);
        }
        kernel_basis(&self.basis.adjoint(), Some(SUBSPACE_TOL))
    }

    /// Unitary matrix whose first `dim` columns are this basis.
    pub fn completed_frame(&self) -> CMat {
        let comp = self.complement();
        let n = self.ambient;
        let k = self.dim();
        CMat::from_fn(n, n, |i, j| if j < k { self.basis[(i, j)] } else { comp.basis[(i, j - k)] })
    }

    /// Spectral distance `||P_self - P_other||_2`.
    pub fn projector_distance(&self, other: &Self) -> f64 {
        singular_values(&(self.projector() - other.projector())).first().copied().unwrap_or(0.0)
    }

    pub fn same_subspace(&self, other: &Self, tol: f64) -> bool {
        self.ambient == other.ambient
            && self.dim() == other.dim()
            && self.projector_distance(other) < tol
    }

    fn check_ambient(&self, other: &Self) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(Error::DimensionMismatch { expected: self.ambient, found: other.ambient });
        }
        Ok(())
    }
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows();
    let (ka, kb) = (a.ncols(), b.ncols());
    CMat::from_fn(n, ka + kb, |i, j| if j < ka { a[(i, j)] } else { b[(i, j - ka)] })
}

/// `dim(u) + dim(v) - rank([u v])` at rank tolerance `tol`.
pub fn intersection_dim(u: &SubspaceBasis, v: &SubspaceBasis, tol: f64) -> Result<usize> {
    u.check_ambient(v)?;
    if u.dim() == 0 || v.dim() == 0 {
        return Ok(0);
    }
    let joint = hcat(&u.basis, &v.basis);
    let rank = numeric_rank(&joint, Some(tol));
    Ok(u.dim() + v.dim() - rank)
}

/// Orthonormal basis of the numerical null space of `a`.
pub fn kernel_basis(a: &CMat, tol: Option<f64>) -> SubspaceBasis {
    let (m, n) = a.shape();
    if n == 0 {
        return SubspaceBasis::zero(0);
    }
    if m == 0 {
        return SubspaceBasis::full(n);
    }
    // thin SVD only exposes min(m, n) right vectors; pad to square
    let padded = if m < n {
        CMat::from_fn(n, n, |i, j| if i < m { a[(i, j)] } else { C64::from(0.0) })
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = tol.unwrap_or(m.max(n) as f64 * f64::EPSILON * top);
    let v_t = svd.v_t.expect("v requested");
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol).collect();
    let basis = CMat::from_fn(n, keep.len(), |i, j| v_t[(keep[j], i)].conj());
    SubspaceBasis { ambient: n, basis }
}

/// `(u ∩ v, u + v)`.
pub fn subspace_meet_join(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
) -> Result<(SubspaceBasis, SubspaceBasis)> {
    u.check_ambient(v)?;
    let n = u.ambient;
    let join = SubspaceBasis::span(&hcat(&u.basis, &v.basis), Some(SUBSPACE_TOL));
    if u.dim() == 0 || v.dim() == 0 {
        return Ok((SubspaceBasis::zero(n), join));
    }
    // [u, -v] c = 0  <=>  u c1 = v c2
    let neg_v = -&v.basis;
    let coeffs = kernel_basis(&hcat(&u.basis, &neg_v), Some(SUBSPACE_TOL));
    let ku = u.dim();
    let c1 = coeffs.basis.rows(0, ku).into_owned();
    let meet = SubspaceBasis::span(&(&u.basis * c1), Some(SUBSPACE_TOL));
    Ok((meet, join))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_complex, random_pd, random_subspace, seeded};

    fn diag(v: &[f64]) -> CMat {
        real_diag(v)
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let s = pd_sqrt(&identity(3)).unwrap();
        assert!((s - identity(3)).norm() < 1e-14);
        let s = pd_sqrt(&diag(&[4.0, 1.0])).unwrap();
        assert!((s - diag(&[2.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn sqrt_multiplies_back() {
        let mut rng = seeded(7);
        for _ in 0..20 {
            let x = random_pd(&mut rng, 4, 3.0);
            let s = pd_sqrt(&x).unwrap();
            assert!((&s * &s - &x).norm() / x.norm() < 1e-10);
            assert!(is_hermitian(&s, 1e-12));
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        assert!(matches!(pd_sqrt(&diag(&[1.0, -1.0])), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(pd_sqrt(&diag(&[1.0, 0.0])), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rq_examples() {
        let (b, k) = rq_positive(&identity(2)).unwrap();
        assert!((b - identity(2)).norm() < 1e-14);
        assert!((k - identity(2)).norm() < 1e-14);

        let (b, k) = rq_positive(&diag(&[2.0, 3.0])).unwrap();
        assert!((b - diag(&[2.0, 3.0])).norm() < 1e-14);
        assert!((k - identity(2)).norm() < 1e-14);

        let swap = CMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(C64::from));
        let (b, k) = rq_positive(&swap).unwrap();
        assert!((b - identity(2)).norm() < 1e-14);
        assert!((k - swap).norm() < 1e-14);
    }

    #[test]
    fn rq_reconstructs_and_is_deterministic() {
        let mut rng = seeded(11);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 4, 4);
            let (b, k) = rq_positive(&a).unwrap();
            assert!((&b * &k - &a).norm() < 1e-10 * a.norm().max(1.0));
            assert!(is_unitary(&k, 1e-10));
            for i in 0..4 {
                assert!(b[(i, i)].im == 0.0 && b[(i, i)].re > 0.0);
                for j in 0..i {
                    assert!(b[(i, j)].norm() < 1e-12);
                }
            }
            let (b2, k2) = rq_positive(&a).unwrap();
            assert_eq!(b, b2);
            assert_eq!(k, k2);
        }
    }

    #[test]
    fn rq_rejects_singular() {
        assert!(matches!(rq_positive(&diag(&[1.0, 0.0])), Err(Error::Singular { .. })));
    }

    #[test]
    fn intersection_of_coordinate_lines() {
        let e1 = SubspaceBasis::coordinate(3, &[0]);
        let e2 = SubspaceBasis::coordinate(3, &[1]);
        assert_eq!(intersection_dim(&e1, &e1, SUBSPACE_TOL).unwrap(), 1);
        assert_eq!(intersection_dim(&e1, &e2, SUBSPACE_TOL).unwrap(), 0);
        let bad = SubspaceBasis::coordinate(2, &[0]);
        assert!(matches!(intersection_dim(&e1, &bad, 1e-8), Err(Error::DimensionMismatch { .. })));
    }

    /// Number of unit eigenvalues of `P_u P_v P_u`.
    fn projector_oracle(u: &SubspaceBasis, v: &SubspaceBasis) -> usize {
        let pu = u.projector();
        let m = &pu * v.projector() * &pu;
        let (w, _) = herm_eigen(&m);
        w.iter().filter(|&&x| x > 1.0 - 1e-8).count()
    }

    #[test]
    fn intersection_matches_projector_oracle() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let u = random_subspace(&mut rng, 3, 2);
            let v = random_subspace(&mut rng, 3, 2);
            assert_eq!(intersection_dim(&u, &v, SUBSPACE_TOL).unwrap(), projector_oracle(&u, &v));
            assert_eq!(projector_oracle(&u, &v), 1);
        }
        // a planted shared plane inside C^4
        for _ in 0..20 {
            let shared = random_subspace(&mut rng, 4, 2);
            let extra_u = random_complex(&mut rng, 4, 1);
            let extra_v = random_complex(&mut rng, 4, 1);
            let u = SubspaceBasis::span(&hcat(shared.basis(), &extra_u), None);
            let v = SubspaceBasis::span(&hcat(shared.basis(), &extra_v), None);
            assert_eq!(intersection_dim(&u, &v, SUBSPACE_TOL).unwrap(), 2);
            assert_eq!(projector_oracle(&u, &v), 2);
        }
    }

    #[test]
    fn kernel_examples() {
        let k = kernel_basis(&CMat::zeros(2, 2), None);
        assert_eq!(k.dim(), 2);
        assert_eq!(kernel_basis(&identity(2), None).dim(), 0);
        let k = kernel_basis(&diag(&[1.0, 0.0]), None);
        assert!(k.same_subspace(&SubspaceBasis::coordinate(2, &[1]), 1e-12));
        // wide input
        let row = CMat::from_row_slice(1, 3, &[1.0, 0.0, 0.0].map(C64::from));
        let k = kernel_basis(&row, None);
        assert!(k.same_subspace(&SubspaceBasis::coordinate(3, &[1, 2]), 1e-12));
    }

    #[test]
    fn kernel_vectors_are_annihilated() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 2, 4);
            let k = kernel_basis(&a, None);
            assert_eq!(k.dim(), 2);
            assert!((&a * k.basis()).norm() < 1e-12);
        }
    }

    #[test]
    fn meet_join_examples() {
        let e1 = SubspaceBasis::coordinate(2, &[0]);
        let e2 = SubspaceBasis::coordinate(2, &[1]);
        let (m, j) = subspace_meet_join(&e1, &e2).unwrap();
        assert_eq!(m.dim(), 0);
        assert!(j.same_subspace(&SubspaceBasis::full(2), 1e-12));
        let (m, j) = subspace_meet_join(&e1, &e1).unwrap();
        assert!(m.same_subspace(&e1, 1e-12));
        assert!(j.same_subspace(&e1, 1e-12));
    }

    #[test]
    fn modular_law_on_random_pairs() {
        let mut rng = seeded(17);
        for n in 2..=4 {
            for _ in 0..200 {
                let du = rand::Rng::random_range(&mut rng, 0..=n);
                let dv = rand::Rng::random_range(&mut rng, 0..=n);
                let u = random_subspace(&mut rng, n, du);
                let v = random_subspace(&mut rng, n, dv);
                let (meet, join) = subspace_meet_join(&u, &v).unwrap();
                assert_eq!(meet.dim() + join.dim(), u.dim() + v.dim());
                assert_eq!(
                    intersection_dim(&u, &v, SUBSPACE_TOL).unwrap(),
                    intersection_dim(&v, &u, SUBSPACE_TOL).unwrap()
                );
                assert_eq!(intersection_dim(&u, &u, SUBSPACE_TOL).unwrap(), u.dim());
            }
        }
    }

    #[test]
    fn gram_schmidt_preserves_flag() {
        let mut rng = seeded(23);
        let a = random_complex(&mut rng, 4, 4);
        let q = gram_schmidt(&a).unwrap();
        assert!(is_unitary(&q, 1e-12));
        for i in 1..=4 {
            let idx: Vec<usize> = (0..i).collect();
            let from_a = SubspaceBasis::span(&a.columns(0, i).into_owned(), None);
            let from_q = SubspaceBasis::frame_columns(&q, &idx);
            assert!(from_a.same_subspace(&from_q, 1e-10));
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
