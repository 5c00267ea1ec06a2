//! Operator scaling with flag marginals on `P_n × P_n`.
//!
//! An instance is a tuple `A = (A_1, …, A_m)` of complex `n × n` matrices
//! and a target `(λ·U, μ·V)` of weighted flags with `Σλ = Σμ = n`. The
//! potential is `f_A(x,y) = n log Σ_k tr(x A_k y A_k^dag)`; the instance is
//! approximately scalable exactly when `f_A + b_p + b_q` is bounded below.
//!
//! Iterates are kept as factors `x = g g^dag`, `y = h h^dag` with
//! `g = u·(upper triangular)` and `h = v·(upper triangular)`, so every
//! quantity is expressed through `B_k = g^dag A_k h`.

use rayon::prelude::*;

use crate::boundary::{busemann, flag_adapted_factor, subspace_pairing, BoundaryPoint};
use crate::error::{Error, Result};
use crate::manifold::PdPoint;
use crate::numerics::{
    gs_qr, herm_eigen, kernel_basis, log_sum_exp, real_diag, singular_values, CMat, SubspaceBasis, C64,
};
use crate::random::{random_unitary, seeded};

/// Entries of `X^dag A_k Y` up to this (relative to the largest entry of
/// the tuple) count as zero when validating a pair.
pub const SA_TOL: f64 = 1e-8;

/// Support threshold for the closed-form recession function.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Weights at or below this cannot be used by the alternating updates.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OperatorTuple {
    n: usize,
    mats: Vec<CMat>,
}

impl OperatorTuple {
    pub fn new(mats: Vec<CMat>) -> Result<Self> {
        let first = mats.first().ok_or(Error::EmptyFamily)?;
        let n = first.nrows();
        for m in &mats {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.ncols().max(m.nrows()) });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput("matrix entries must be finite".into()));
            }
        }
        if mats.iter().all(|m| m.iter().all(|z| *z == C64::from(0.0))) {
            return Err(Error::AllZeroMatrix);
        }
        Ok(Self { n, mats })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    /// `(A_1^dag, …, A_m^dag)`.
    pub fn adjoint(&self) -> Self {
        Self { n: self.n, mats: self.mats.iter().map(|m| m.adjoint()).collect() }
    }

    /// `(g^dag A_k h)_k`.
    pub fn transform(&self, g: &CMat, h: &CMat) -> Self {
        let gd = g.adjoint();
        Self { n: self.n, mats: self.mats.iter().map(|m| &gd * m * h).collect() }
    }

    /// Largest entry modulus over the tuple.
    pub fn max_entry(&self) -> f64 {
        self.mats.iter().flat_map(|m| m.iter()).fold(0.0, |a, z| a.max(z.norm()))
    }

    fn stack_rows(&self, left: &CMat) -> CMat {
        let blocks: Vec<CMat> = self.mats.iter().map(|a| left * a).collect();
        let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut out = CMat::zeros(rows, self.n);
        let mut r = 0;
        for b in blocks {
            out.view_mut((r, 0), (b.nrows(), self.n)).copy_from(&b);
            r += b.nrows();
        }
        out
    }

    /// `(∩_k ker A_k, ∩_k ker A_k^dag)`.
    pub fn common_kernels(&self) -> (SubspaceBasis, SubspaceBasis) {
        let id = CMat::identity(self.n, self.n);
        (kernel_basis(&self.stack_rows(&id), None), kernel_basis(&self.adjoint().stack_rows(&id), None))
    }

    /// Whether both common kernels are nontrivial, the degenerate case the
    /// block reduction below removes.
    pub fn has_common_kernels(&self) -> bool {
        let (k, kd) = self.common_kernels();
        k.dim() > 0 && kd.dim() > 0
    }

    /// Moves `d = min(dim ∩ker A_k, dim ∩ker A_k^dag)` common-kernel
    /// directions to the last rows and columns with unitary `(g, h)` and
    /// drops them. Returns the reduced tuple on `C^{n−d}` and `(g, h)`; the
    /// removed rows and columns of `g^dag A_k h` are zero.
    pub fn reduce_common_kernels(&self) -> (OperatorTuple, CMat, CMat) {
        let (k, kd) = self.common_kernels();
        let d = k.dim().min(kd.dim());
        let last_first = |s: &SubspaceBasis| -> CMat {
            let f = s.completed_frame();
            let n = self.n;
            let sd = s.dim();
            // columns: complement first, then the kernel
            CMat::from_fn(n, n, |r, c| if c < n - sd { f[(r, sd + c)] } else { f[(r, c + sd - n)] })
        };
        let h = last_first(&k);
        let g = last_first(&kd);
        let t = self.transform(&g, &h);
        let m = self.n - d;
        let mats = t.mats.iter().map(|a| a.view((0, 0), (m, m)).into_owned()).collect();
        (OperatorTuple { n: m, mats }, g, h)
    }
}

/// The pair `(λ·U, μ·V)` of target marginals.
#[derive(Clone, Debug)]
pub struct MarginalTarget {
    pub p: BoundaryPoint,
    pub q: BoundaryPoint,
}

impl MarginalTarget {
    pub fn new(p: BoundaryPoint, q: BoundaryPoint) -> Result<Self> {
        if p.n() != q.n() {
            return Err(Error::DimensionMismatch { expected: p.n(), found: q.n() });
        }
        let n = p.n() as f64;
        for w in p.lambda().iter().chain(q.lambda()) {
            if *w < 0.0 {
                return Err(Error::InvalidInput(format!("marginal weight {w} is negative")));
            }
        }
        let (sp, sq): (f64, f64) = (p.lambda().iter().sum(), q.lambda().iter().sum());
        if (sp - n).abs() > 1e-9 * n || (sq - n).abs() > 1e-9 * n {
            return Err(Error::InvalidInput(format!("marginal sums {sp}, {sq} must both equal {n}")));
        }
        Ok(Self { p, q })
    }

    /// Weights on the standard flag.
    pub fn standard(lambda: &[f64], mu: &[f64]) -> Result<Self> {
        let n = lambda.len();
        let id = CMat::identity(n, n);
        Self::new(BoundaryPoint::canonicalize(lambda, &id)?, BoundaryPoint::canonicalize(mu, &id)?)
    }

    /// `λ = μ = (1, …, 1)`.
    pub fn uniform(n: usize) -> Self {
        Self::standard(&vec![1.0; n], &vec![1.0; n]).expect("uniform weights")
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn lambda(&self) -> &[f64] {
        self.p.lambda()
    }

    pub fn mu(&self) -> &[f64] {
        self.q.lambda()
    }

    pub fn u(&self) -> &CMat {
        self.p.basis()
    }

    pub fn v(&self) -> &CMat {
        self.q.basis()
    }

    fn check(&self, a: &OperatorTuple) -> Result<()> {
        if self.n() != a.n() {
            return Err(Error::DimensionMismatch { expected: a.n(), found: self.n() });
        }
        Ok(())
    }
}

fn check_points(a: &OperatorTuple, x: &PdPoint, y: &PdPoint) -> Result<()> {
    for d in [x.dim(), y.dim()] {
        if d != a.n() {
            return Err(Error::DimensionMismatch { expected: a.n(), found: d });
        }
    }
    Ok(())
}

/// `f_A(x,y) = n log Σ_k tr(x A_k y A_k^dag)`, evaluated on the flat through
/// the eigenframes of `x` and `y` so that it stays finite far out on rays:
/// `n log Σ_ij a_ij e^{w_i + w'_j}` with `a_ij = Σ_k |(U_x^dag A_k U_y)_ij|²`.
pub fn kempf_ness(a: &OperatorTuple, x: &PdPoint, y: &PdPoint) -> Result<f64> {
    check_points(a, x, y)?;
    let n = a.n();
    let ux = x.frame().adjoint();
    let mut weight = vec![0.0; n * n];
    for m in a.mats() {
        let b = &ux * m * y.frame();
        for i in 0..n {
            for j in 0..n {
                weight[i * n + j] += b[(i, j)].norm_sqr();
            }
        }
    }
    let (wx, wy) = (x.log_eigs(), y.log_eigs());
    let terms: Vec<f64> = (0..n * n)
        .filter(|&k| weight[k] > 0.0)
        .map(|k| weight[k].ln() + wx[k / n] + wy[k % n])
        .collect();
    if terms.is_empty() {
        return Err(Error::ZeroTrace(0.0));
    }
    Ok(n as f64 * log_sum_exp(&terms))
}

/// `f_A + b_p + b_q`.
pub fn total_objective(a: &OperatorTuple, target: &MarginalTarget, x: &PdPoint, y: &PdPoint) -> Result<f64> {
    target.check(a)?;
    Ok(kempf_ness(a, x, y)? + busemann(&target.p, x)? + busemann(&target.q, y)?)
}

/// `C_{x,y} (Σ A_k y A_k^dag, Σ A_k^dag x A_k)`, `C_{x,y} = n / Σ tr(x A_k y A_k^dag)`.
pub fn differential(a: &OperatorTuple, x: &PdPoint, y: &PdPoint) -> Result<(CMat, CMat)> {
    check_points(a, x, y)?;
    let n = a.n();
    let (xm, ym) = (x.matrix(), y.matrix());
    let mut dx = CMat::zeros(n, n);
    let mut dy = CMat::zeros(n, n);
    for m in a.mats() {
        dx += m * &ym * m.adjoint();
        dy += m.adjoint() * &xm * m;
    }
    let total = (&xm * &dx).trace().re;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroTrace(total));
    }
    let c = C64::from(n as f64 / total);
    Ok((crate::numerics::hermitian_part(&(dx * c)), crate::numerics::hermitian_part(&(dy * c))))
}

/// `(P, Q, C)` with `B_k = g^dag A_k h`, `C = n / Σ |B_k|²`,
/// `P = C Σ B_k B_k^dag`, `Q = C Σ B_k^dag B_k`.
pub fn marginal_blocks(a: &OperatorTuple, g: &CMat, h: &CMat) -> Result<(CMat, CMat, f64)> {
    let n = a.n();
    let gd = g.adjoint();
    let mut p = CMat::zeros(n, n);
    let mut q = CMat::zeros(n, n);
    for m in a.mats() {
        let b = &gd * m * h;
        p += &b * b.adjoint();
        q += b.adjoint() * &b;
    }
    let total = p.trace().re;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroTrace(total));
    }
    let c = n as f64 / total;
    Ok((p * C64::from(c), q * C64::from(c), c))
}

fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Squared Frobenius defects `(|P − diag λ|², |Q − diag μ|²)`.
pub fn marginal_defects(a: &OperatorTuple, target: &MarginalTarget, g: &CMat, h: &CMat) -> Result<(f64, f64)> {
    let (p, q, _) = marginal_blocks(a, g, h)?;
    Ok((frob_sq(&(p - real_diag(target.lambda()))), frob_sq(&(q - real_diag(target.mu())))))
}

/// `|∇(f_A + b_p + b_q)(x,y)|²` in the product metric, computed from the
/// flag-adapted factors `g = u b`, `h = v c` of `x` and `y`.
pub fn residual(a: &OperatorTuple, x: &PdPoint, y: &PdPoint, target: &MarginalTarget) -> Result<f64> {
    check_points(a, x, y)?;
    target.check(a)?;
    let g = flag_adapted_factor(&target.p, x)?;
    let h = flag_adapted_factor(&target.q, y)?;
    let (dp, dq) = marginal_defects(a, target, &g, &h)?;
    Ok(dp + dq)
}

fn check_weights(w: &[f64]) -> Result<()> {
    for (index, &value) in w.iter().enumerate() {
        if value <= DEGENERATE_WEIGHT {
            return Err(Error::DegenerateMarginal { index, value });
        }
    }
    Ok(())
}

/// `v R^{-1} diag(√μ)` where `R` is the triangular factor of the stacked
/// blocks `[g^dag A_k v]_k` (so `R^dag R = Σ_k v^dag A_k^dag x A_k v`).
fn optimal_factor(a: &OperatorTuple, g: &CMat, v: &CMat, mu: &[f64]) -> Result<CMat> {
    check_weights(mu)?;
    let n = a.n();
    let stacked = a.stack_rows(&(g.adjoint())) * v;
    let scale = stacked.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let (_, r) = gs_qr(&stacked).map_err(|_| Error::NotPositiveDefinite { min_eig: 0.0 })?;
    let min_diag = (0..n).map(|i| r[(i, i)].re).fold(f64::INFINITY, f64::min);
    if !(min_diag > 1e-13 * scale) {
        return Err(Error::NotPositiveDefinite { min_eig: min_diag * min_diag });
    }
    let rhs = real_diag(&mu.iter().map(|m| m.sqrt()).collect::<Vec<_>>());
    let rinv_d = r.solve_upper_triangular(&rhs).ok_or(Error::NotPositiveDefinite { min_eig: 0.0 })?;
    Ok(v * rinv_d)
}

/// The minimiser of `f_A(x, ·) + b_q` as `y = h h^dag` with
/// `h^dag (Σ A_k^dag x A_k) h = diag μ` and `[h] = V`.
pub fn optimal_y(a: &OperatorTuple, x: &PdPoint, q: &BoundaryPoint) -> Result<PdPoint> {
    if x.dim() != a.n() || q.n() != a.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), found: x.dim().max(q.n()) });
    }
    let h = optimal_factor(a, &x.half_factor(), q.basis(), q.lambda())?;
    PdPoint::new(&crate::numerics::hermitian_part(&(&h * h.adjoint())))
}

/// The mirror update for `x` given `y`.
pub fn optimal_x(a: &OperatorTuple, y: &PdPoint, p: &BoundaryPoint) -> Result<PdPoint> {
    optimal_y(&a.adjoint(), y, p)
}

#[derive(Clone, Debug)]
pub struct ScaleResult {
    /// Scalings with `Σ g^dag A_k h h^dag A_k^dag g ≈ diag λ` and the mirror
    /// condition; `[g] = U`, `[h] = V`.
    pub g: CMat,
    pub h: CMat,
    /// Squared gradient norm of `f_A + b_p + b_q` at `(g g^dag, h h^dag)`.
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// `f_A + b_p + b_q` after each sweep (index 0 is the start).
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    /// `|g|_F` after each sweep; unbounded growth means the instance is
    /// approximately but not exactly scalable.
    pub scaling_norm_trace: Vec<f64>,
    /// Squared Frobenius marginal defects of `(g, h)`.
    pub defects: (f64, f64),
}

/// Objective in factor form, valid when `u^dag g` and `v^dag h` are upper
/// triangular.
fn factor_objective(a: &OperatorTuple, target: &MarginalTarget, g: &CMat, h: &CMat) -> f64 {
    let n = a.n() as f64;
    let gd = g.adjoint();
    let total: f64 = a.mats().iter().map(|m| frob_sq(&(&gd * m * h))).sum();
    let bu = target.u().adjoint() * g;
    let bv = target.v().adjoint() * h;
    let lb: f64 = target.lambda().iter().enumerate().map(|(i, l)| l * bu[(i, i)].norm().ln()).sum();
    let lc: f64 = target.mu().iter().enumerate().map(|(i, m)| m * bv[(i, i)].norm().ln()).sum();
    n * total.ln() - 2.0 * lb - 2.0 * lc
}

struct Alternation<'a> {
    a: &'a OperatorTuple,
    ad: OperatorTuple,
    target: &'a MarginalTarget,
    g: CMat,
    h: CMat,
}

impl Alternation<'_> {
    fn state(&self, iters: usize, trace: Traces) -> Result<ScaleResult> {
        let (_, _, c) = marginal_blocks(self.a, &self.g, &self.h)?;
        let k = C64::from(c.powf(0.25));
        let (g, h) = (&self.g * k, &self.h * k);
        let defects = marginal_defects(self.a, self.target, &g, &h)?;
        Ok(ScaleResult {
            g,
            h,
            residual: defects.0 + defects.1,
            iters,
            converged: false,
            objective_trace: trace.objective,
            residual_trace: trace.residual,
            scaling_norm_trace: trace.norm,
            defects,
        })
    }

    fn sweep(&mut self) -> Result<()> {
        self.h = optimal_factor(self.a, &self.g, self.target.v(), self.target.mu())?;
        self.g = optimal_factor(&self.ad, &self.h, self.target.u(), self.target.lambda())?;
        let ratio = (self.h.norm() / self.g.norm()).sqrt();
        self.g *= C64::from(ratio);
        self.h /= C64::from(ratio);
        Ok(())
    }
}

#[derive(Clone, Default)]
struct Traces {
    objective: Vec<f64>,
    residual: Vec<f64>,
    norm: Vec<f64>,
}

/// Alternates the exact `y`- and `x`-minimisations from `x = y = I` until
/// the residual is at most `eps` or `budget` sweeps are spent.
///
/// Fails with [`Error::DegenerateMarginal`] when a target weight is zero and
/// with [`Error::NonConvergence`] (carrying the best iterate) when the
/// budget runs out or an update becomes singular.
pub fn scale_alternating(a: &OperatorTuple, target: &MarginalTarget, eps: f64, budget: usize) -> Result<ScaleResult> {
    target.check(a)?;
    check_weights(target.lambda())?;
    check_weights(target.mu())?;
    let mut st = Alternation { a, ad: a.adjoint(), target, g: target.u().clone(), h: target.v().clone() };
    let mut tr = Traces::default();
    let record = |st: &Alternation, tr: &mut Traces| -> Result<f64> {
        let (dp, dq) = marginal_defects(st.a, st.target, &st.g, &st.h)?;
        tr.objective.push(factor_objective(st.a, st.target, &st.g, &st.h));
        tr.residual.push(dp + dq);
        tr.norm.push(st.g.norm());
        Ok(dp + dq)
    };
    let mut res = record(&st, &mut tr)?;
    let mut best = (res, st.g.clone(), st.h.clone(), 0usize);
    let mut iters = 0;
    while res > eps && iters < budget {
        if st.sweep().is_err() {
            break;
        }
        iters += 1;
        res = record(&st, &mut tr)?;
        if res < best.0 {
            best = (res, st.g.clone(), st.h.clone(), iters);
        }
    }
    if res <= eps {
        let mut out = st.state(iters, tr)?;
        out.converged = true;
        return Ok(out);
    }
    st.g = best.1;
    st.h = best.2;
    let mut out = st.state(iters, tr)?;
    out.converged = false;
    Err(Error::NonConvergence(Box::new(out)))
}

/// `n · max { α_i + β_j : (g^dag A_k h)_ij ≠ 0 for some k }` for the
/// boundary points `α·[g]`, `β·[h]` given by invertible frames.
///
/// An entry counts as nonzero above `SUPPORT_TOL · max(1, largest entry)`.
pub fn recession_op_frames(a: &OperatorTuple, alpha: &[f64], g: &CMat, beta: &[f64], h: &CMat) -> Result<f64> {
    let n = a.n();
    if alpha.len() != n || beta.len() != n || g.nrows() != n || h.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: alpha.len() });
    }
    let t = a.transform(g, h);
    let thr = SUPPORT_TOL * t.max_entry().max(1.0);
    let mut best = f64::NEG_INFINITY;
    for m in t.mats() {
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)].norm() > thr {
                    best = best.max(alpha[i] + beta[j]);
                }
            }
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::AllZeroMatrix);
    }
    Ok(n as f64 * best)
}

/// Closed-form recession function `f_A^∞(p, q)`.
pub fn recession_op(a: &OperatorTuple, p: &BoundaryPoint, q: &BoundaryPoint) -> Result<f64> {
    recession_op_frames(a, p.lambda(), p.basis(), q.lambda(), q.basis())
}

/// Kernel tolerance used by [`perp_a`]: relative to the stacked blocks.
fn perp_tol(m: &CMat) -> f64 {
    1e-9 * singular_values(m).first().copied().unwrap_or(0.0).max(1.0)
}

/// The largest `Y` with `X^dag A_k Y = 0` for all `k`.
pub fn perp_a(a: &OperatorTuple, x: &SubspaceBasis) -> Result<SubspaceBasis> {
    if x.ambient_dim() != a.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), found: x.ambient_dim() });
    }
    if x.dim() == 0 {
        return Ok(SubspaceBasis::full(a.n()));
    }
    let m = a.stack_rows(&x.basis().adjoint());
    Ok(kernel_basis(&m, Some(perp_tol(&m))))
}

/// The largest `X` with `X^dag A_k Y = 0` for all `k`.
pub fn perp_a_adjoint(a: &OperatorTuple, y: &SubspaceBasis) -> Result<SubspaceBasis> {
    perp_a(&a.adjoint(), y)
}

/// `max_k max |X^dag A_k Y|`.
pub fn annihilation_defect(a: &OperatorTuple, x: &SubspaceBasis, y: &SubspaceBasis) -> f64 {
    if x.dim() == 0 || y.dim() == 0 {
        return 0.0;
    }
    let xd = x.basis().adjoint();
    a.mats()
        .iter()
        .map(|m| (&xd * m * y.basis()).iter().fold(0.0f64, |acc, z| acc.max(z.norm())))
        .fold(0.0, f64::max)
}

/// `n − Σ_i (λ_i − λ_{i+1}) dim(U_i ∩ X) − Σ_j (μ_j − μ_{j+1}) dim(V_j ∩ Y)`
/// for a pair annihilated by the tuple. Negative slack certifies that the
/// instance is not approximately scalable.
pub fn franks_inequality(a: &OperatorTuple, target: &MarginalTarget, x: &SubspaceBasis, y: &SubspaceBasis) -> Result<f64> {
    target.check(a)?;
    let defect = annihilation_defect(a, x, y);
    if defect > SA_TOL * a.max_entry().max(1.0) {
        return Err(Error::NotInSA { max_entry: defect });
    }
    Ok(a.n() as f64 - subspace_pairing(x, &target.p)? - subspace_pairing(y, &target.q)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    BoundedEvidence,
    UnboundedWitness,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::BoundedEvidence => "BOUNDED_EVIDENCE",
            Verdict::UnboundedWitness => "UNBOUNDED_WITNESS",
            Verdict::Indeterminate => "INDETERMINATE",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub x: SubspaceBasis,
    pub y: SubspaceBasis,
    /// Minus the Franks slack.
    pub violation: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub eps: f64,
    pub delta: f64,
    pub budget: usize,
    pub seed: u64,
    /// Random restarts per dimension pair in the last search stage.
    pub random_restarts: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { eps: 1e-8, delta: 1e-3, budget: 10_000, seed: 0, random_restarts: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub verdict: Verdict,
    /// The scaling run, when one was made (always present for bounded
    /// evidence).
    pub scaling: Option<ScaleResult>,
    pub witness: Option<Witness>,
    pub best_residual: Option<f64>,
    pub sweeps: usize,
    pub candidates_tried: usize,
    /// Why scaling was skipped or stopped early, if it was.
    pub note: Option<String>,
}

/// Largest `n` for which all coordinate subspaces of the target frames are
/// enumerated.
pub const COORDINATE_SEARCH_MAX_N: usize = 8;

fn best_of(cands: Vec<(SubspaceBasis, SubspaceBasis)>, a: &OperatorTuple, target: &MarginalTarget) -> Option<Witness> {
    cands
        .into_par_iter()
        .filter_map(|(x, y)| {
            let slack = franks_inequality(a, target, &x, &y).ok()?;
            Some(Witness { x, y, violation: -slack })
        })
        .max_by(|p, q| p.violation.total_cmp(&q.violation))
}

/// `(X, perp_A X)` for coordinate subspaces `X` of the `U` frame and
/// `(perp_{A^dag} Y, Y)` for coordinate subspaces `Y` of the `V` frame.
fn coordinate_candidates(a: &OperatorTuple, target: &MarginalTarget) -> Vec<(SubspaceBasis, SubspaceBasis)> {
    let n = a.n();
    if n > COORDINATE_SEARCH_MAX_N {
        return Vec::new();
    }
    let subsets: Vec<Vec<usize>> =
        (1u32..(1 << n)).map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect()).collect();
    subsets
        .par_iter()
        .flat_map_iter(|idx| {
            let x = SubspaceBasis::frame_columns(target.u(), idx);
            let y = SubspaceBasis::frame_columns(target.v(), idx);
            let mut out = Vec::with_capacity(2);
            if let Ok(py) = perp_a(a, &x) {
                out.push((x, py));
            }
            if let Ok(px) = perp_a_adjoint(a, &y) {
                out.push((px, y));
            }
            out
        })
        .collect()
}

/// Bottom-`k` eigenvectors of a Hermitian matrix as a subspace.
fn bottom_eigenspace(m: &CMat, k: usize) -> SubspaceBasis {
    let (_, v) = herm_eigen(m);
    let idx: Vec<usize> = (0..k).collect();
    SubspaceBasis::frame_columns(&v, &idx)
}

/// Alternately replaces `X` (dimension `kx`) and `Y` (dimension `ky`) by the
/// minimisers of `Σ_k |X^dag A_k Y|²` with the other fixed, then snaps `Y`
/// to `perp_A X`.
fn refine_pair(a: &OperatorTuple, mut y: SubspaceBasis, kx: usize, iters: usize) -> Option<(SubspaceBasis, SubspaceBasis)> {
    let n = a.n();
    let ky = y.dim();
    let ad = a.adjoint();
    let mut x = SubspaceBasis::zero(n);
    for _ in 0..iters {
        x = bottom_eigenspace(&gram_through(&ad, &y), kx);
        y = bottom_eigenspace(&gram_through(a, &x), ky);
    }
    let y = perp_a(a, &x).ok()?;
    (y.dim() >= ky).then_some((x, y))
}

fn gram_through(a: &OperatorTuple, side: &SubspaceBasis) -> CMat {
    let n = a.n();
    let ps = side.projector();
    let mut m = CMat::zeros(n, n);
    for k in a.mats() {
        m += k.adjoint() * &ps * k;
    }
    m
}

/// Candidates from the stalled scaling: in the coordinates `B_k = g^dag A_k h`
/// the obstruction shows up as small eigenvalues of `P` (rows of the `B_k`
/// that vanish) or of `Q`. Each guess is refined for every partner
/// dimension.
fn spectral_candidates(a: &OperatorTuple, g: &CMat, h: &CMat) -> Vec<(SubspaceBasis, SubspaceBasis)> {
    let n = a.n();
    let Ok((p, q, _)) = marginal_blocks(a, g, h) else {
        return Vec::new();
    };
    let ad = a.adjoint();
    let (_, ep) = herm_eigen(&p);
    let (_, eq) = herm_eigen(&q);
    let mut out = Vec::new();
    for k in 1..n {
        let idx: Vec<usize> = (0..k).collect();
        // X = g X_B: vectors whose preimage under g lies in the bottom eigenspace of P
        let x = SubspaceBasis::span(&(g * SubspaceBasis::frame_columns(&ep, &idx).basis()), None);
        let y = SubspaceBasis::span(&(h * SubspaceBasis::frame_columns(&eq, &idx).basis()), None);
        for other in 1..=n {
            let y0 = bottom_eigenspace(&gram_through(a, &x), other);
            out.extend(refine_pair(a, y0, x.dim(), 30));
            let x0 = bottom_eigenspace(&gram_through(&ad, &y), other);
            out.extend(refine_pair(&ad, x0, y.dim(), 30).map(|(yy, xx)| (xx, yy)));
        }
        if let Ok(py) = perp_a(a, &x) {
            out.push((x, py));
        }
        if let Ok(px) = perp_a_adjoint(a, &y) {
            out.push((px, y));
        }
    }
    out
}

fn random_candidates(a: &OperatorTuple, seed: u64, restarts: usize) -> Vec<(SubspaceBasis, SubspaceBasis)> {
    let n = a.n();
    let mut rng = seeded(seed);
    let mut starts = Vec::new();
    for kx in 1..n {
        for ky in 1..n {
            for _ in 0..restarts {
                let u = random_unitary(&mut rng, n);
                let idx: Vec<usize> = (0..ky).collect();
                starts.push((kx, SubspaceBasis::frame_columns(&u, &idx)));
            }
        }
    }
    starts.into_par_iter().filter_map(|(kx, y)| refine_pair(a, y, kx, 100)).collect()
}

/// Decides numerically whether `f_A + b_p + b_q` is bounded below.
///
/// Sound but incomplete: bounded evidence needs a scaling with residual at
/// most `eps`, an unbounded witness is a validated pair `(X, Y)` with
/// `X^dag A_k Y = 0` and Franks slack at most `−delta`. Candidates come from
/// coordinate subspaces of the target frames, the spectrum of the stalled
/// scaling, and seeded random restarts.
pub fn certify(a: &OperatorTuple, target: &MarginalTarget, opts: &CertifyOptions) -> Certificate {
    let mut cert = Certificate {
        verdict: Verdict::Indeterminate,
        scaling: None,
        witness: None,
        best_residual: None,
        sweeps: 0,
        candidates_tried: 0,
        note: None,
    };
    if let Err(e) = target.check(a) {
        cert.note = Some(e.to_string());
        return cert;
    }
    let accept = |w: Option<Witness>, cert: &mut Certificate| -> bool {
        match w {
            Some(w) if w.violation >= opts.delta => {
                cert.verdict = Verdict::UnboundedWitness;
                cert.witness = Some(w);
                true
            }
            _ => false,
        }
    };

    let cands = coordinate_candidates(a, target);
    cert.candidates_tried += cands.len();
    if accept(best_of(cands, a, target), &mut cert) {
        return cert;
    }

    let stalled = match scale_alternating(a, target, opts.eps, opts.budget) {
        Ok(res) => {
            cert.best_residual = Some(res.residual);
            cert.sweeps = res.iters;
            cert.verdict = Verdict::BoundedEvidence;
            cert.scaling = Some(res);
            return cert;
        }
        Err(Error::NonConvergence(res)) => {
            cert.best_residual = Some(res.residual);
            cert.sweeps = res.iters;
            let gh = (res.g.clone(), res.h.clone());
            cert.scaling = Some(*res);
            Some(gh)
        }
        Err(e) => {
            cert.note = Some(format!("scaling skipped: {e}"));
            None
        }
    };

    if let Some((g, h)) = stalled {
        let cands = spectral_candidates(a, &g, &h);
        cert.candidates_tried += cands.len();
        if accept(best_of(cands, a, target), &mut cert) {
            return cert;
        }
    }

    let cands = random_candidates(a, opts.seed, opts.random_restarts);
    cert.candidates_tried += cands.len();
    accept(best_of(cands, a, target), &mut cert);
    cert
}

/// The ray that exhibits a witness: from `(I, I)` towards
/// `(s·1_X, s·1_Y)`, as points of `P_n × P_n` at time `t`.
pub fn witness_ray_point(w: &Witness, s: f64, t: f64) -> Result<(PdPoint, PdPoint)> {
    let pt = |sub: &SubspaceBasis| -> Result<PdPoint> {
        let k = sub.dim();
        let w: Vec<f64> = (0..sub.ambient_dim()).map(|i| if i < k { s * t } else { 0.0 }).collect();
        PdPoint::from_spectral(sub.completed_frame(), w)
    };
    Ok((pt(&w.x)?, pt(&w.y)?))
}
