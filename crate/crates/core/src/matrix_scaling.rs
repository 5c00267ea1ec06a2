//! Scaling a nonnegative matrix to prescribed row sums `r` and column sums
//! `c`.
//!
//! Everything is phrased through the convex potential
//! `f_A(s,t) = l log Σ e^{s_i} a_ij e^{t_j}` and its dual objective
//! `f_A(s,t) − <r,s> − <c,t>`, evaluated in the log domain. The scaled
//! matrix at `(s,t)` is `l e^{s_i} a_ij e^{t_j} / Σ`, which has row sums `r`
//! and column sums `c` exactly at a minimiser.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

/// Tolerance on `Σr = Σc` and on the max-flow value.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct NonnegMatrixInstance {
    a: DMatrix<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    log_a: DMatrix<f64>,
}

impl NonnegMatrixInstance {
    pub fn new(a: DMatrix<f64>, r: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        if r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.len() });
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.len() });
        }
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput("matrix entries must be finite and nonnegative".into()));
        }
        if a.iter().all(|&x| x == 0.0) {
            return Err(Error::AllZeroMatrix);
        }
        if r.iter().chain(&c).any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::InvalidInput("marginals must be positive".into()));
        }
        let (sr, sc): (f64, f64) = (r.iter().sum(), c.iter().sum());
        if (sr - sc).abs() > MARGINAL_TOL * sr.max(1.0) {
            return Err(Error::InvalidInput(format!("marginal sums differ: {sr} vs {sc}")));
        }
        let log_a = a.map(f64::ln);
        Ok(Self { a, r, c, log_a })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `l = Σ r_i`.
    pub fn total(&self) -> f64 {
        self.r.iter().sum()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: v.len() });
        }
        Ok(())
    }

    fn log_terms(&self, s: &[f64], t: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                if self.a[(i, j)] > 0.0 {
                    out.push(s[i] + self.log_a[(i, j)] + t[j]);
                }
            }
        }
        out
    }

    /// The scaled matrix `l e^{s_i} a_ij e^{t_j} / Σ_kl e^{s_k} a_kl e^{t_l}`.
    pub fn scaled(&self, s: &[f64], t: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let z = log_sum_exp(&self.log_terms(s, t));
        let l = self.total();
        DMatrix::from_fn(n, n, |i, j| {
            if self.a[(i, j)] > 0.0 {
                l * (s[i] + self.log_a[(i, j)] + t[j] - z).exp()
            } else {
                0.0
            }
        })
    }
}

/// Positive diagonal scalings with `R A C` the scaled matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalScaling {
    pub rdiag: Vec<f64>,
    pub cdiag: Vec<f64>,
}

impl DiagonalScaling {
    /// `R A C` from `(s,t)`, with the free scalar split so that
    /// `Π rdiag = Π cdiag`.
    pub fn from_potentials(inst: &NonnegMatrixInstance, s: &[f64], t: &[f64]) -> Self {
        let n = inst.n() as f64;
        let z = log_sum_exp(&inst.log_terms(s, t));
        let total = inst.total().ln() - z;
        let (ms, mt) = (s.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
        // κ_s + κ_t = total and ms + κ_s = mt + κ_t
        let ks = 0.5 * (total + mt - ms);
        let kt = total - ks;
        Self {
            rdiag: s.iter().map(|x| (x + ks).exp()).collect(),
            cdiag: t.iter().map(|x| (x + kt).exp()).collect(),
        }
    }

    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| self.rdiag[i] * a[(i, j)] * self.cdiag[j])
    }
}

/// `f_A(s,t) = l log Σ e^{s_i} a_ij e^{t_j}`.
pub fn potential(inst: &NonnegMatrixInstance, s: &[f64], t: &[f64]) -> Result<f64> {
    inst.check_len(s)?;
    inst.check_len(t)?;
    Ok(inst.total() * log_sum_exp(&inst.log_terms(s, t)))
}

/// `f_A(s,t) − <r,s> − <c,t>`.
pub fn dual_objective(inst: &NonnegMatrixInstance, s: &[f64], t: &[f64]) -> Result<f64> {
    let f = potential(inst, s, t)?;
    let rs: f64 = inst.r.iter().zip(s).map(|(a, b)| a * b).sum();
    let ct: f64 = inst.c.iter().zip(t).map(|(a, b)| a * b).sum();
    Ok(f - rs - ct)
}

/// `|rowsums − r|_1 + |colsums − c|_1` of the scaled matrix at `(s,t)`.
pub fn marginal_residual(inst: &NonnegMatrixInstance, s: &[f64], t: &[f64]) -> Result<f64> {
    inst.check_len(s)?;
    inst.check_len(t)?;
    let m = inst.scaled(s, t);
    let n = inst.n();
    let rows: f64 = (0..n).map(|i| (m.row(i).sum() - inst.r[i]).abs()).sum();
    let cols: f64 = (0..n).map(|j| (m.column(j).sum() - inst.c[j]).abs()).sum();
    Ok(rows + cols)
}

/// One Sinkhorn checkpoint.
#[derive(Clone, Debug)]
pub struct SinkhornTrace {
    pub iter: usize,
    pub dual: f64,
    pub residual: f64,
    /// `max |s_i| + max |t_j|`; grows without bound when the instance is
    /// approximately but not exactly scalable.
    pub spread: f64,
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    pub scaling: DiagonalScaling,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// Checkpoints at iterations 0, 1, 2, 4, 8, … and the last one.
    pub trace: Vec<SinkhornTrace>,
}

/// Alternating exact minimisation of the dual objective in `s` and `t`.
#[derive(Clone, Debug)]
pub struct Sinkhorn<'a> {
    inst: &'a NonnegMatrixInstance,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    log_r: Vec<f64>,
    log_c: Vec<f64>,
}

impl<'a> Sinkhorn<'a> {
    pub fn new(inst: &'a NonnegMatrixInstance) -> Result<Self> {
        let n = inst.n();
        for i in 0..n {
            if inst.a.row(i).iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroLine { kind: "row", index: i });
            }
            if inst.a.column(i).iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroLine { kind: "column", index: i });
            }
        }
        Ok(Self {
            inst,
            s: vec![0.0; n],
            t: vec![0.0; n],
            log_r: inst.r.iter().map(|x| x.ln()).collect(),
            log_c: inst.c.iter().map(|x| x.ln()).collect(),
        })
    }

    /// Exact minimisation over `s` with `t` fixed.
    pub fn update_rows(&mut self) {
        let n = self.inst.n();
        for i in 0..n {
            let terms: Vec<f64> = (0..n)
                .filter(|&j| self.inst.a[(i, j)] > 0.0)
                .map(|j| self.inst.log_a[(i, j)] + self.t[j])
                .collect();
            self.s[i] = self.log_r[i] - log_sum_exp(&terms);
        }
    }

    /// Exact minimisation over `t` with `s` fixed.
    pub fn update_cols(&mut self) {
        let n = self.inst.n();
        for j in 0..n {
            let terms: Vec<f64> = (0..n)
                .filter(|&i| self.inst.a[(i, j)] > 0.0)
                .map(|i| self.s[i] + self.inst.log_a[(i, j)])
                .collect();
            self.t[j] = self.log_c[j] - log_sum_exp(&terms);
        }
    }

    /// Shift `(s + κ, t − κ)` so that `Σ s_i = 0`; the potential is unchanged.
    pub fn fix_gauge(&mut self) {
        let k = self.s.iter().sum::<f64>() / self.s.len() as f64;
        self.s.iter_mut().for_each(|x| *x -= k);
        self.t.iter_mut().for_each(|x| *x += k);
    }

    pub fn sweep(&mut self) {
        self.update_rows();
        self.update_cols();
        self.fix_gauge();
    }

    pub fn dual(&self) -> f64 {
        dual_objective(self.inst, &self.s, &self.t).expect("lengths match")
    }

    pub fn residual(&self) -> f64 {
        marginal_residual(self.inst, &self.s, &self.t).expect("lengths match")
    }

    fn checkpoint(&self, iter: usize, residual: f64) -> SinkhornTrace {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        SinkhornTrace { iter, dual: self.dual(), residual, spread: m(&self.s) + m(&self.t) }
    }
}

/// Runs Sinkhorn until the marginal residual is at most `eps` or
/// `max_iter` sweeps are spent; returns the last iterate either way.
pub fn sinkhorn(inst: &NonnegMatrixInstance, eps: f64, max_iter: usize) -> Result<SinkhornResult> {
    let mut sk = Sinkhorn::new(inst)?;
    let mut residual = sk.residual();
    let mut trace = vec![sk.checkpoint(0, residual)];
    let mut iters = 0;
    while residual > eps && iters < max_iter {
        sk.sweep();
        iters += 1;
        residual = sk.residual();
        if iters.is_power_of_two() {
            trace.push(sk.checkpoint(iters, residual));
        }
    }
    if trace.last().map(|c| c.iter) != Some(iters) {
        trace.push(sk.checkpoint(iters, residual));
    }
    Ok(SinkhornResult {
        scaling: DiagonalScaling::from_potentials(inst, &sk.s, &sk.t),
        s: sk.s,
        t: sk.t,
        residual,
        iters,
        converged: residual <= eps,
        trace,
    })
}

/// `l · max { u_i + v_j : a_ij ≠ 0 }`.
pub fn recession_matrix(inst: &NonnegMatrixInstance, u: &[f64], v: &[f64]) -> Result<f64> {
    inst.check_len(u)?;
    inst.check_len(v)?;
    let n = inst.n();
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if inst.a[(i, j)] != 0.0 {
                best = best.max(u[i] + v[j]);
            }
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::AllZeroMatrix);
    }
    Ok(inst.total() * best)
}

#[derive(Clone, Debug)]
pub struct FlowVerdict {
    pub feasible: bool,
    pub flow_value: f64,
    /// Rows `S` and columns `T` with `a_ij = 0` on `S × T` and
    /// `Σ_S r + Σ_T c > l`.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    /// `Σ_S r + Σ_T c − l` for the witness (zero when feasible).
    pub violation: f64,
}

/// Edmonds–Karp on a dense capacity matrix; returns the flow value and the
/// set of nodes reachable from the source in the final residual graph.
fn max_flow(cap: &mut DMatrix<f64>, source: usize, sink: usize, tiny: f64) -> (f64, Vec<bool>) {
    let v = cap.nrows();
    let mut total = 0.0;
    loop {
        let mut parent = vec![usize::MAX; v];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            for y in 0..v {
                if parent[y] == usize::MAX && cap[(x, y)] > tiny {
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return (total, parent.iter().map(|&p| p != usize::MAX).collect());
        }
        let mut push = f64::INFINITY;
        let mut y = sink;
        while y != source {
            let x = parent[y];
            push = push.min(cap[(x, y)]);
            y = x;
        }
        let mut y = sink;
        while y != source {
            let x = parent[y];
            cap[(x, y)] -= push;
            cap[(y, x)] += push;
            y = x;
        }
        total += push;
    }
}

/// Decides whether a transport plan with marginals `(r,c)` supported on
/// `supp(a)` exists, i.e. whether the instance is approximately scalable.
pub fn approx_scalable_flow(inst: &NonnegMatrixInstance) -> FlowVerdict {
    let n = inst.n();
    let l = inst.total();
    // nodes: source, rows 1..=n, cols n+1..=2n, sink
    let (source, sink) = (0, 2 * n + 1);
    let mut cap = DMatrix::<f64>::zeros(2 * n + 2, 2 * n + 2);
    for i in 0..n {
        cap[(source, 1 + i)] = inst.r[i];
        cap[(1 + n + i, sink)] = inst.c[i];
        for j in 0..n {
            if inst.a[(i, j)] > 0.0 {
                cap[(1 + i, 1 + n + j)] = 2.0 * l;
            }
        }
    }
    let (flow_value, reach) = max_flow(&mut cap, source, sink, 1e-15 * l);
    if flow_value >= l - MARGINAL_TOL * l.max(1.0) {
        return FlowVerdict { feasible: true, flow_value, witness: None, violation: 0.0 };
    }
    let s: Vec<usize> = (0..n).filter(|&i| reach[1 + i]).collect();
    let t: Vec<usize> = (0..n).filter(|&j| !reach[1 + n + j]).collect();
    let violation = s.iter().map(|&i| inst.r[i]).sum::<f64>() + t.iter().map(|&j| inst.c[j]).sum::<f64>() - l;
    FlowVerdict { feasible: false, flow_value, witness: Some((s, t)), violation }
}

/// Dual objective at `(τ 1_S, τ 1_T)`; tends to `−∞` linearly in `τ` with
/// slope `−violation` when `(S,T)` is a cut witness.
pub fn witness_ray_dual(inst: &NonnegMatrixInstance, rows: &[usize], cols: &[usize], tau: f64) -> f64 {
    let n = inst.n();
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    rows.iter().for_each(|&i| s[i] = tau);
    cols.iter().for_each(|&j| t[j] = tau);
    dual_objective(inst, &s, &t).expect("lengths match")
}
