//! The boundary cone of `P_n`: weighted complete flags `λ·[u]`.
//!
//! A point is an arranged weight vector `λ_1 ≥ … ≥ λ_n` together with a
//! unitary matrix whose leading column blocks span the flag subspaces
//! `U_1 ⊂ U_2 ⊂ … ⊂ U_n = C^n`. Only the subspaces at breakpoints
//! (`λ_i > λ_{i+1}`) matter; the rest of the frame is carried along so that
//! Busemann functions can be evaluated directly from it.

use crate::error::{Error, Result};
use crate::manifold::PdPoint;
use crate::numerics::{
    gram_schmidt, intersection_dim, numeric_rank, rq_positive_raw, singular_values, CMat,
    SubspaceBasis, C64, SUBSPACE_TOL,
};

/// Default weight tolerance for [`equals`].
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct BoundaryPoint {
    lambda: Vec<f64>,
    basis: CMat,
}

/// Canonical formal sum `Σ α_i U_i`: strictly nested subspaces, positive
/// coefficients except possibly on `C^n`.
#[derive(Clone, Debug)]
pub struct FormalSum {
    pub terms: Vec<(SubspaceBasis, f64)>,
}

impl BoundaryPoint {
    /// Sorts the weights descending (stable, carrying the basis columns
    /// along), then orthonormalises the columns without disturbing the flag.
    pub fn canonicalize(raw_lambda: &[f64], raw_basis: &CMat) -> Result<Self> {
        let n = raw_lambda.len();
        if raw_basis.nrows() != n || raw_basis.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: raw_basis.ncols() });
        }
        if raw_lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite".into()));
        }
        let top = singular_values(raw_basis).first().copied().unwrap_or(0.0);
        let rank = numeric_rank(raw_basis, Some(1e-10 * top));
        if rank < n || (n > 0 && top == 0.0) {
            return Err(Error::Singular { rank, dim: n });
        }
        if raw_lambda.iter().all(|&x| x == 0.0) {
            return Ok(Self::zero(n));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| raw_lambda[j].total_cmp(&raw_lambda[i]));
        let lambda: Vec<f64> = order.iter().map(|&i| raw_lambda[i]).collect();
        let permuted = CMat::from_fn(n, n, |r, c| raw_basis[(r, order[c])]);
        let basis = gram_schmidt(&permuted)?;
        Ok(Self { lambda, basis })
    }

    pub fn zero(n: usize) -> Self {
        Self { lambda: vec![0.0; n], basis: CMat::identity(n, n) }
    }

    /// The point `1·X`: weight one on `X`, zero elsewhere.
    pub fn from_subspace(x: &SubspaceBasis) -> Self {
        let n = x.ambient_dim();
        let k = x.dim();
        let lambda = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        Self { lambda, basis: x.completed_frame() }
    }

    /// A Euclidean vector as a point of the standard apartment.
    pub fn from_euclidean(v: &[f64]) -> Self {
        let n = v.len();
        Self::canonicalize(v, &CMat::identity(n, n)).expect("identity basis")
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.iter().all(|&x| x == 0.0)
    }

    /// `||λ||_2`.
    pub fn norm(&self) -> f64 {
        self.lambda.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `U_i`, the span of the first `i` frame columns.
    pub fn flag_subspace(&self, i: usize) -> SubspaceBasis {
        let idx: Vec<usize> = (0..i).collect();
        SubspaceBasis::frame_columns(&self.basis, &idx)
    }

    /// `α_i = λ_i − λ_{i+1}` with `λ_{n+1} = 0`.
    pub fn gaps(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| self.lambda[i] - if i + 1 < n { self.lambda[i + 1] } else { 0.0 }).collect()
    }

    pub fn formal_sum(&self) -> FormalSum {
        let terms = self
            .gaps()
            .into_iter()
            .enumerate()
            .filter(|(_, a)| *a != 0.0)
            .map(|(i, a)| (self.flag_subspace(i + 1), a))
            .collect();
        FormalSum { terms }
    }

    /// Positive rescaling of the weights.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c < 0.0 || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale factor {c} must be a finite nonnegative number")));
        }
        if c == 0.0 {
            return Ok(Self::zero(self.n()));
        }
        Ok(Self { lambda: self.lambda.iter().map(|x| x * c).collect(), basis: self.basis.clone() })
    }

    /// Weight addition inside a chamber shared by both points.
    pub fn add_in_chamber(&self, other: &Self) -> Result<Self> {
        check_same_n(self, other)?;
        let (ga, gb) = (self.gaps(), other.gaps());
        for i in 0..self.n().saturating_sub(1) {
            if ga[i] > 0.0 || gb[i] > 0.0 {
                let d = intersection_dim(&self.flag_subspace(i + 1), &other.flag_subspace(i + 1), SUBSPACE_TOL)?;
                if d != i + 1 {
                    return Err(Error::InvalidInput("points do not share a chamber".into()));
                }
            }
        }
        let lambda = self.lambda.iter().zip(&other.lambda).map(|(a, b)| a + b).collect();
        Ok(Self { lambda, basis: self.basis.clone() })
    }
}

fn check_same_n(p: &BoundaryPoint, q: &BoundaryPoint) -> Result<()> {
    if p.n() != q.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: q.n() });
    }
    Ok(())
}

/// Equality of boundary points: equal weights, and equal flag subspaces at
/// every breakpoint of the weights.
pub fn equals(p: &BoundaryPoint, q: &BoundaryPoint, tol: f64) -> Result<bool> {
    check_same_n(p, q)?;
    let n = p.n();
    let close = p.lambda.iter().zip(&q.lambda).all(|(a, b)| (a - b).abs() <= tol);
    if !close {
        return Ok(false);
    }
    for i in 0..n.saturating_sub(1) {
        if p.lambda[i] - p.lambda[i + 1] > tol {
            let d = intersection_dim(&p.flag_subspace(i + 1), &q.flag_subspace(i + 1), SUBSPACE_TOL)?;
            if d != i + 1 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `<p, q> = Σ_{i,j} (λ_i − λ_{i+1})(μ_j − μ_{j+1}) dim(U_i ∩ V_j)`.
pub fn pairing(p: &BoundaryPoint, q: &BoundaryPoint) -> Result<f64> {
    check_same_n(p, q)?;
    let (ga, gb) = (p.gaps(), q.gaps());
    let mut total = 0.0;
    for (i, a) in ga.iter().enumerate().filter(|(_, a)| **a != 0.0) {
        let ui = p.flag_subspace(i + 1);
        for (j, b) in gb.iter().enumerate().filter(|(_, b)| **b != 0.0) {
            let d = intersection_dim(&ui, &q.flag_subspace(j + 1), SUBSPACE_TOL)?;
            total += a * b * d as f64;
        }
    }
    Ok(total)
}

/// `<X, p>` for a single subspace `X`, i.e. `Σ_i (λ_i − λ_{i+1}) dim(U_i ∩ X)`.
pub fn subspace_pairing(x: &SubspaceBasis, p: &BoundaryPoint) -> Result<f64> {
    if x.ambient_dim() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: x.ambient_dim() });
    }
    let mut total = 0.0;
    for (i, a) in p.gaps().iter().enumerate().filter(|(_, a)| **a != 0.0) {
        total += a * intersection_dim(&p.flag_subspace(i + 1), x, SUBSPACE_TOL)? as f64;
    }
    Ok(total)
}

/// Cone metric `sqrt(|λ|² + |μ|² − 2<p,q>)`.
pub fn d_infty(p: &BoundaryPoint, q: &BoundaryPoint) -> Result<f64> {
    let pq = pairing(p, q)?;
    let sq = p.norm().powi(2) + q.norm().powi(2) - 2.0 * pq;
    Ok(sq.max(0.0).sqrt())
}

fn check_point(p: &BoundaryPoint, x: &PdPoint) -> Result<()> {
    if p.n() != x.dim() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: x.dim() });
    }
    Ok(())
}

/// Upper-triangular `b` with `u^dag x u = b b^dag`, returned as
/// `diag(e^{scale}) b'` so that points far out on a ray (eigenvalues beyond
/// the double range) do not overflow.
fn flag_triangular_factor(p: &BoundaryPoint, x: &PdPoint) -> Result<(Vec<f64>, CMat)> {
    let n = p.n();
    let w = p.basis.adjoint() * x.frame();
    let half: Vec<f64> = x.log_eigs().iter().map(|v| 0.5 * v).collect();
    let mut scale = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            let mag = w[(i, j)].norm();
            if mag > 0.0 {
                scale[i] = scale[i].max(mag.ln() + half[j]);
            }
        }
    }
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::NotPositiveDefinite { min_eig: 0.0 });
    }
    let m = CMat::from_fn(n, n, |i, j| {
        let mag = w[(i, j)].norm();
        if mag == 0.0 {
            return C64::from(0.0);
        }
        // exponent is at most zero by construction of `scale`
        w[(i, j)] / mag * (mag.ln() + half[j] - scale[i]).exp()
    });
    let (b, _) = rq_positive_raw(&m).map_err(|_| Error::NotPositiveDefinite { min_eig: 0.0 })?;
    Ok((scale, b))
}

/// Busemann function
/// `b_p(x) = −Σ λ_i log(det M[i..n] / det M[i+1..n])`, `M = u^dag x u`.
///
/// The trailing determinant ratios are the squared diagonal entries of the
/// upper-triangular factor `M = b b^dag`, so `b_p(x) = −2 Σ λ_i log b_ii`.
pub fn busemann(p: &BoundaryPoint, x: &PdPoint) -> Result<f64> {
    check_point(p, x)?;
    if p.is_zero() {
        return Ok(0.0);
    }
    let (scale, b) = flag_triangular_factor(p, x)?;
    Ok(-2.0
        * p.lambda.iter().enumerate().map(|(i, l)| l * (scale[i] + b[(i, i)].re.ln())).sum::<f64>())
}

/// `g = u b` with `g g^dag = x` and `g^dag`'s flag equal to that of `p`:
/// `u^dag x^{1/2} = b k` with `b` upper triangular.
pub fn flag_adapted_factor(p: &BoundaryPoint, x: &PdPoint) -> Result<CMat> {
    check_point(p, x)?;
    let (scale, mut b) = flag_triangular_factor(p, x)?;
    for (i, s) in scale.iter().enumerate() {
        b.row_mut(i).scale_mut(s.exp());
    }
    Ok(&p.basis * b)
}

/// Riemannian gradient `−u b diag(λ) b^dag u^dag` where `u^dag x^{1/2} = b k`.
pub fn busemann_grad(p: &BoundaryPoint, x: &PdPoint) -> Result<CMat> {
    let g = flag_adapted_factor(p, x)?;
    Ok(-(scale_columns(&g, &p.lambda) * g.adjoint()))
}

/// Projection `λ·U ↦ λ` onto the model chamber.
pub fn chamber_coord(p: &BoundaryPoint) -> Vec<f64> {
    p.lambda.clone()
}

/// The ray generator `u b diag(λ) b^dag u^dag` at `x` (minus the Busemann
/// gradient); at `x = I` it is `u diag(λ) u^dag`.
pub fn ray_generator(p: &BoundaryPoint, x: &PdPoint) -> Result<CMat> {
    Ok(-busemann_grad(p, x)?)
}

/// `u diag(t λ) u^dag` in spectral form: the point at time `t` on the ray
/// from the identity towards `p`.
pub fn ray_point_from_identity(p: &BoundaryPoint, t: f64) -> PdPoint {
    PdPoint::from_spectral(p.basis.clone(), p.lambda.iter().map(|l| t * l).collect())
        .expect("boundary frames are unitary")
}

pub(crate) fn scale_columns(m: &CMat, s: &[f64]) -> CMat {
    let mut out = m.clone();
    for (j, v) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(*v);
    }
    out
}
