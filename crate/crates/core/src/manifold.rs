//! The Hadamard manifold `P_n` of positive-definite Hermitian matrices
//! with the metric `<H, H'>_x = tr(x^-1 H x^-1 H')`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::{
    asymmetry, herm_eigen, hermitian_part, is_hermitian, is_unitary, pd_eigen, singular_values,
    spectral_compose, trace_product, CMat, HERMITIAN_TOL,
};

/// A point of `P_n`, stored in spectral form `frame · diag(e^w) · frame^dag`.
///
/// Keeping the logarithms of the eigenvalues lets points far out along a
/// geodesic ray (eigenvalues like `e^500`) be represented and consumed by
/// the formulas that only need the frame and the log-spectrum.
#[derive(Clone, Debug)]
pub struct PdPoint {
    frame: CMat,
    log_eigs: Vec<f64>,
}

impl PdPoint {
    pub fn new(mat: &CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        if !is_hermitian(mat, HERMITIAN_TOL) {
            return Err(Error::NotHermitian { asymmetry: asymmetry(mat) });
        }
        let (w, v) = pd_eigen(&hermitian_part(mat))?;
        Ok(Self { frame: v, log_eigs: w.iter().map(|x| x.ln()).collect() })
    }

    pub fn identity(n: usize) -> Self {
        Self { frame: CMat::identity(n, n), log_eigs: vec![0.0; n] }
    }

    /// `frame · diag(e^log_eigs) · frame^dag` for a unitary `frame`.
    pub fn from_spectral(frame: CMat, log_eigs: Vec<f64>) -> Result<Self> {
        if frame.nrows() != log_eigs.len() {
            return Err(Error::DimensionMismatch { expected: frame.nrows(), found: log_eigs.len() });
        }
        if !is_unitary(&frame, 1e-10) {
            return Err(Error::InvalidInput("spectral frame is not unitary".into()));
        }
        if log_eigs.iter().any(|w| !w.is_finite()) {
            return Err(Error::NotPositiveDefinite { min_eig: 0.0 });
        }
        Ok(Self { frame, log_eigs })
    }

    pub fn dim(&self) -> usize {
        self.log_eigs.len()
    }

    pub fn frame(&self) -> &CMat {
        &self.frame
    }

    pub fn log_eigs(&self) -> &[f64] {
        &self.log_eigs
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.log_eigs.iter().all(|w| w.abs() <= tol)
    }

    pub fn log_det(&self) -> f64 {
        self.log_eigs.iter().sum()
    }

    pub fn matrix(&self) -> CMat {
        self.power(1.0)
    }

    /// `x^s` for real `s`.
    pub fn power(&self, s: f64) -> CMat {
        spectral_compose(&self.frame, self.log_eigs.iter().map(|w| (s * w).exp()))
    }

    pub fn sqrt(&self) -> CMat {
        self.power(0.5)
    }

    pub fn inv_sqrt(&self) -> CMat {
        self.power(-0.5)
    }

    pub fn inverse(&self) -> CMat {
        self.power(-1.0)
    }

    /// Matrix logarithm (a Hermitian matrix).
    pub fn log(&self) -> CMat {
        spectral_compose(&self.frame, self.log_eigs.iter().copied())
    }

    /// `frame · diag(e^{w/2})`, a square root factor `x = f f^dag`.
    pub fn half_factor(&self) -> CMat {
        let mut f = self.frame.clone();
        for (j, w) in self.log_eigs.iter().enumerate() {
            f.column_mut(j).scale_mut((0.5 * w).exp());
        }
        f
    }

    /// `g x g^dag`.
    pub fn congruence(&self, g: &CMat) -> Result<Self> {
        let m = g * self.matrix() * g.adjoint();
        Self::new(&hermitian_part(&m))
    }

    fn check_dim(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: m.nrows() });
        }
        Ok(())
    }
}

/// A tangent vector at a point; the matrix part is symmetrised on
/// construction.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub base: PdPoint,
    pub h: CMat,
}

impl TangentVector {
    pub fn new(base: PdPoint, h: &CMat) -> Result<Self> {
        base.check_dim(h)?;
        Ok(Self { base, h: hermitian_part(h) })
    }

    pub fn norm(&self) -> f64 {
        tangent_norm(&self.base, &self.h).expect("dimension checked")
    }
}

/// `tr(x^-1 h1 x^-1 h2)`.
pub fn tangent_inner(x: &PdPoint, h1: &CMat, h2: &CMat) -> Result<f64> {
    x.check_dim(h1)?;
    x.check_dim(h2)?;
    let xi = x.inverse();
    Ok(trace_product(&(&xi * h1), &(&xi * h2)).re)
}

/// `||x^-1/2 h x^-1/2||_F`.
pub fn tangent_norm(x: &PdPoint, h: &CMat) -> Result<f64> {
    x.check_dim(h)?;
    let si = x.inv_sqrt();
    Ok((&si * h * &si).norm())
}

/// `x^1/2 exp(x^-1/2 h x^-1/2) x^1/2`.
pub fn exp_point(x: &PdPoint, h: &CMat) -> Result<PdPoint> {
    x.check_dim(h)?;
    if x.is_identity(0.0) {
        let (nu, v) = herm_eigen(h);
        return PdPoint::from_spectral(v, nu.iter().copied().collect());
    }
    let s = x.sqrt();
    let si = x.inv_sqrt();
    let z = hermitian_part(&(&si * h * &si));
    let (nu, v) = herm_eigen(&z);
    let sv = &s * &v;
    let m = spectral_compose(&sv, nu.iter().map(|w| w.exp()));
    PdPoint::new(&hermitian_part(&m))
}

/// Inverse of [`exp_point`]: `x^1/2 log(x^-1/2 y x^-1/2) x^1/2`.
pub fn log_map(x: &PdPoint, y: &PdPoint) -> Result<CMat> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    if x.is_identity(0.0) {
        return Ok(y.log());
    }
    let s = x.sqrt();
    let si = x.inv_sqrt();
    let z = hermitian_part(&(&si * y.matrix() * &si));
    let (w, v) = herm_eigen(&z);
    if w.iter().any(|&e| e <= 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: w.min() });
    }
    let l = spectral_compose(&v, w.iter().map(|e| e.ln()));
    Ok(hermitian_part(&(&s * l * &s)))
}

/// Riemannian distance `||log(x^-1/2 y x^-1/2)||_F`.
pub fn distance(x: &PdPoint, y: &PdPoint) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    if x.is_identity(0.0) {
        return Ok(DVector::from_row_slice(y.log_eigs()).norm());
    }
    if y.is_identity(0.0) {
        return Ok(DVector::from_row_slice(x.log_eigs()).norm());
    }
    // singular values of x^-1/2 y^1/2 are the square roots of the
    // eigenvalues of x^-1/2 y x^-1/2
    let m = x.inv_sqrt() * y.half_factor();
    let s = singular_values(&m);
    if s.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: 0.0 });
    }
    Ok(s.iter().map(|v| (2.0 * v.ln()).powi(2)).sum::<f64>().sqrt())
}

/// Point at parameter `t` on the geodesic from `x` (t = 0) to `y` (t = 1).
pub fn geodesic(x: &PdPoint, y: &PdPoint, t: f64) -> Result<PdPoint> {
    let h = log_map(x, y)? * crate::numerics::C64::from(t);
    exp_point(x, &h)
}

/// Riemannian gradient `x df x` from the differential `df`.
pub fn grad_from_diff(x: &PdPoint, df: &CMat) -> Result<CMat> {
    x.check_dim(df)?;
    let m = x.matrix();
    Ok(hermitian_part(&(&m * df * &m)))
}
