//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use flagscale::boundary::{busemann, busemann_grad, d_infty, pairing};
use flagscale::manifold::{distance, tangent_inner};
use flagscale::matrix_scaling::{approx_scalable_flow, sinkhorn, witness_ray_dual};
use flagscale::numerics::{c64, real_diag};
use flagscale::operator_scaling::{
    certify, differential, kempf_ness, recession_op, residual, total_objective, CertifyOptions, Witness,
};
use flagscale::random::{
    random_boundary_point, random_complex, random_hermitian, random_pd_point, random_unitary, random_weights,
    seeded, Rng64,
};
use flagscale::recession::{ray_quotients, RayProbe};
use flagscale::sublattice::{submodularity_check, submodularity_check_pairs, LatticeFunction, SubspaceFamily};
use flagscale::{
    BoundaryPoint, CMat, MarginalTarget, NonnegMatrixInstance, OperatorTuple, PdPoint, Result, SubspaceBasis,
    Verdict, C64,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Witnesses collected across criteria, replayed by criterion 8.
type Emitted = Vec<(String, OperatorTuple, MarginalTarget, Witness)>;

fn marginal(rng: &mut Rng64, n: usize) -> Vec<f64> {
    let w = random_weights(rng, n, 0.2, 1.0);
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x * n as f64 / s).collect()
}

fn random_target(rng: &mut Rng64, n: usize, random_flags: bool) -> MarginalTarget {
    let (l, m) = (marginal(rng, n), marginal(rng, n));
    if random_flags {
        let (u, v) = (random_unitary(rng, n), random_unitary(rng, n));
        MarginalTarget::new(BoundaryPoint::canonicalize(&l, &u).unwrap(), BoundaryPoint::canonicalize(&m, &v).unwrap())
            .unwrap()
    } else {
        MarginalTarget::standard(&l, &m).unwrap()
    }
}

fn sparse_complex(rng: &mut Rng64, n: usize, density: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| {
        if rng.random_bool(density) {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        } else {
            c64(0.0, 0.0)
        }
    })
}

fn sparse_tuple(rng: &mut Rng64, n: usize, m: usize, density: f64) -> OperatorTuple {
    loop {
        let mats: Vec<CMat> = (0..m).map(|_| sparse_complex(rng, n, density)).collect();
        if let Ok(a) = OperatorTuple::new(mats) {
            return a;
        }
    }
}

fn dense_tuple(rng: &mut Rng64, n: usize, m: usize) -> OperatorTuple {
    OperatorTuple::new((0..m).map(|_| random_complex(rng, n, n)).collect()).unwrap()
}

/// Euclidean differential of `b_p` from the determinant-ratio formula
/// `b_p(x) = −Σ λ_i (log det M_{≥i} − log det M_{≥i+1})`, `M = u^dag x u`.
fn busemann_differential_oracle(p: &BoundaryPoint, x: &CMat) -> CMat {
    let n = p.n();
    let u = p.basis();
    let m = u.adjoint() * x * u;
    let trailing = |i: usize| -> CMat {
        if i == n {
            return CMat::zeros(n, n);
        }
        let k = n - i;
        let block = m.view((i, i), (k, k)).into_owned();
        let inv = block.try_inverse().expect("principal blocks of a positive matrix are invertible");
        let ui = u.columns(i, k).into_owned();
        &ui * inv * ui.adjoint()
    };
    let mut d = CMat::zeros(n, n);
    for (i, l) in p.lambda().iter().enumerate() {
        d -= (trailing(i) - trailing(i + 1)) * C64::from(*l);
    }
    d
}

fn c1_gradient_two_routes() -> Result<Outcome> {
    let mut rng = seeded(1001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = 2 + case % 3;
        let m = 1 + (case / 3) % 3;
        let a = dense_tuple(&mut rng, n, m);
        let target = random_target(&mut rng, n, true);
        let x = random_pd_point(&mut rng, n, 1.0);
        let y = random_pd_point(&mut rng, n, 1.0);
        let via_factors = residual(&a, &x, &y, &target)?;
        let (dx, dy) = differential(&a, &x, &y)?;
        let (xm, ym) = (x.matrix(), y.matrix());
        let ex = dx + busemann_differential_oracle(&target.p, &xm);
        let ey = dy + busemann_differential_oracle(&target.q, &ym);
        let tangent = (&ex * &xm * &ex * &xm).trace().re + (&ey * &ym * &ey * &ym).trace().re;
        worst = worst.max((via_factors - tangent).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && elapsed < Duration::from_secs(30),
        format!("100 instances, max |difference| = {worst:.2e} (tol 1e-8), {:.2} s (limit 30 s)", elapsed.as_secs_f64()),
    )
}

fn c2_finite_differences() -> Result<Outcome> {
    let mut rng = seeded(1002);
    let h = 1e-5;
    let (mut worst_kn, mut worst_b) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let n = 2 + case % 3;
        let a = dense_tuple(&mut rng, n, 1 + case % 3);
        let x = random_pd_point(&mut rng, n, 1.0);
        let y = random_pd_point(&mut rng, n, 1.0);
        let (hx, hy) = (random_hermitian(&mut rng, n), random_hermitian(&mut rng, n));
        let at = |s: f64| -> Result<f64> {
            let xs = PdPoint::new(&(x.matrix() + &hx * C64::from(s)))?;
            let ys = PdPoint::new(&(y.matrix() + &hy * C64::from(s)))?;
            kempf_ness(&a, &xs, &ys)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        let (dx, dy) = differential(&a, &x, &y)?;
        let an = (&dx * &hx).trace().re + (&dy * &hy).trace().re;
        worst_kn = worst_kn.max((fd - an).abs() / an.abs().max(1.0));

        let p = random_boundary_point(&mut rng, n, -1.0, 1.0);
        let bt = |s: f64| -> Result<f64> { busemann(&p, &PdPoint::new(&(x.matrix() + &hx * C64::from(s)))?) };
        let fd = (bt(h)? - bt(-h)?) / (2.0 * h);
        let an = tangent_inner(&x, &busemann_grad(&p, &x)?, &hx)?;
        worst_b = worst_b.max((fd - an).abs() / an.abs().max(1.0));
    }
    outcome(
        worst_kn <= 1e-6 && worst_b <= 1e-6,
        format!(
            "100 probes each, max relative error kempf_ness {worst_kn:.2e}, busemann {worst_b:.2e} (tol 1e-6, denominator max(|d|,1))"
        ),
    )
}

/// `(closed form, gap)` where the gap separates the largest exponent
/// `λ_i + μ_j` over the support from the next distinct one.
fn recession_oracle(a: &OperatorTuple, p: &BoundaryPoint, q: &BoundaryPoint) -> (f64, f64) {
    let n = a.n();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for m in a.mats() {
        let b = p.basis().adjoint() * m * q.basis();
        w += b.map(|z| z.norm_sqr());
    }
    let scale = w.max();
    let mut exps: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] > 1e-24 * scale {
                exps.push(p.lambda()[i] + q.lambda()[j]);
            }
        }
    }
    exps.sort_by(|a, b| b.total_cmp(a));
    let top = exps[0];
    let gap = exps.iter().find(|&&e| top - e > 1e-12).map_or(f64::INFINITY, |e| top - e);
    (n as f64 * top, gap)
}

fn c3_recession_convergence() -> Result<Outcome> {
    let mut rng = seeded(1003);
    let (mut accepted, mut drawn) = (0, 0);
    let (mut worst_err, mut worst_mono, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    while accepted < 50 {
        drawn += 1;
        let n = 2 + drawn % 3;
        let m = 1 + (drawn / 3) % 3;
        let standard = drawn % 2 == 0;
        let a = if standard { sparse_tuple(&mut rng, n, m, 0.5) } else { dense_tuple(&mut rng, n, m) };
        let (p, q) = if standard {
            let id = CMat::identity(n, n);
            (
                BoundaryPoint::canonicalize(&random_weights(&mut rng, n, -1.0, 1.0), &id)?,
                BoundaryPoint::canonicalize(&random_weights(&mut rng, n, -1.0, 1.0), &id)?,
            )
        } else {
            (random_boundary_point(&mut rng, n, -1.0, 1.0), random_boundary_point(&mut rng, n, -1.0, 1.0))
        };
        let (closed, gap) = recession_oracle(&a, &p, &q);
        if gap < 0.1 {
            continue;
        }
        accepted += 1;
        worst_oracle = worst_oracle.max((recession_op(&a, &p, &q)? - closed).abs());
        let probe = RayProbe::from_identity(vec![p, q]);
        let f = |pts: &[PdPoint]| kempf_ness(&a, &pts[0], &pts[1]);
        let est = ray_quotients(&f, &probe)?;
        worst_err = worst_err.max((est.estimate - closed).abs());
        worst_mono = worst_mono.max(est.monotone_violation);
    }
    outcome(
        worst_err <= 1e-3 && worst_mono <= 1e-9 && worst_oracle <= 1e-12,
        format!(
            "50 instances ({drawn} drawn), max |slope at 2^10 - closed form| = {worst_err:.2e} (tol 1e-3), \
             max quotient drop {worst_mono:.2e} (tol 1e-9), recession_op vs oracle {worst_oracle:.1e}"
        ),
    )
}

fn random_matrix_instance(rng: &mut Rng64) -> NonnegMatrixInstance {
    let n = 4;
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| if rng.random_bool(0.5) { rng.random_range(0.1..2.0) } else { 0.0 });
        let lines_ok = (0..n).all(|i| a.row(i).iter().any(|&v| v > 0.0) && a.column(i).iter().any(|&v| v > 0.0));
        if !lines_ok {
            continue;
        }
        // integer numerators over a common denominator of 1000
        let r_num: Vec<u32> = (0..n).map(|_| rng.random_range(1..=1000)).collect();
        let total: u32 = r_num.iter().sum();
        let mut cuts: Vec<u32> = (0..n - 1).map(|_| rng.random_range(1..total)).collect();
        cuts.sort_unstable();
        cuts.dedup();
        if cuts.len() != n - 1 {
            continue;
        }
        let mut c_num = Vec::with_capacity(n);
        let mut prev = 0;
        for &c in cuts.iter().chain(std::iter::once(&total)) {
            c_num.push(c - prev);
            prev = c;
        }
        let r = r_num.iter().map(|&k| k as f64 / 1000.0).collect();
        let c = c_num.iter().map(|&k| k as f64 / 1000.0).collect();
        return NonnegMatrixInstance::new(a, r, c).unwrap();
    }
}

fn c4_matrix_scaling_equivalence() -> Result<Outcome> {
    let mut rng = seeded(1004);
    let start = Instant::now();
    let (mut feasible, mut infeasible, mut weak, mut disagreements) = (0, 0, 0, 0);
    let mut worst_feasible_residual = 0.0f64;
    for _ in 0..200 {
        let inst = random_matrix_instance(&mut rng);
        let verdict = approx_scalable_flow(&inst);
        if verdict.feasible {
            feasible += 1;
            let res = sinkhorn(&inst, 1e-6, 10_000)?;
            worst_feasible_residual = worst_feasible_residual.max(res.residual);
            if res.residual >= 1e-6 {
                disagreements += 1;
            }
        } else if verdict.violation >= 0.1 {
            infeasible += 1;
            let (rows, cols) = verdict.witness.as_ref().expect("infeasible verdicts carry a cut");
            let drops = (0..=30).any(|k| witness_ray_dual(&inst, rows, cols, (1u64 << k) as f64) < -1e3);
            if !drops {
                disagreements += 1;
            }
        } else {
            weak += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        disagreements == 0 && elapsed < Duration::from_secs(60),
        format!(
            "200 instances: {feasible} feasible (max residual {worst_feasible_residual:.3e}), {infeasible} infeasible \
             with violation >= 0.1, {weak} infeasible below 0.1 (not tested); {disagreements} disagreements, \
             {:.2} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn c5_curated_verdicts(emitted: &mut Emitted) -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut pass = true;

    let opts = CertifyOptions { eps: 1e-8, budget: 100, ..Default::default() };
    let a = OperatorTuple::new(vec![CMat::identity(2, 2)])?;
    let cert = certify(&a, &MarginalTarget::uniform(2), &opts);
    let res = cert.best_residual.unwrap_or(f64::INFINITY);
    let ok = cert.verdict == Verdict::BoundedEvidence && res <= 1e-8 && cert.sweeps <= 100;
    pass &= ok;
    notes.push(format!("(I): {} residual {res:.1e} in {} sweeps", cert.verdict.as_str(), cert.sweeps));

    let a = OperatorTuple::new(vec![real_diag(&[1.0, 0.0])])?;
    let target = MarginalTarget::uniform(2);
    let cert = certify(&a, &target, &CertifyOptions::default());
    let ok = match &cert.witness {
        Some(w) => {
            cert.verdict == Verdict::UnboundedWitness
                && w.violation == 1.0
                && w.x.same_subspace(&SubspaceBasis::coordinate(2, &[1]), 1e-12)
                && w.y.dim() == 2
        }
        None => false,
    };
    pass &= ok;
    notes.push(format!(
        "(diag(1,0)): {} violation {:?}",
        cert.verdict.as_str(),
        cert.witness.as_ref().map(|w| w.violation)
    ));
    if let Some(w) = cert.witness {
        emitted.push(("diag(1,0)".into(), a, target, w));
    }

    // operator analogue of [[1,1],[0,1]]: A = (E11, E12, E22)
    let e = |i: usize, j: usize| {
        let mut m = CMat::zeros(2, 2);
        m[(i, j)] = c64(1.0, 0.0);
        m
    };
    let a = OperatorTuple::new(vec![e(0, 0), e(0, 1), e(1, 1)])?;
    let opts = CertifyOptions { eps: 1e-8, budget: 200_000, ..Default::default() };
    let cert = certify(&a, &MarginalTarget::uniform(2), &opts);
    let norms = cert.scaling.as_ref().map(|s| s.scaling_norm_trace.clone()).unwrap_or_default();
    // divergence: a nondecreasing norm trace with a positive power-law
    // exponent over the last quadrupling of sweeps
    let monotone = norms.windows(2).all(|w| w[1] >= w[0]);
    let exponent = if norms.len() >= 8 {
        let k = norms.len() - 1;
        (norms[k] / norms[k / 4]).ln() / ((k as f64) / ((k / 4) as f64)).ln()
    } else {
        0.0
    };
    let ok = cert.verdict == Verdict::BoundedEvidence && monotone && exponent > 0.1;
    pass &= ok;
    notes.push(format!(
        "(tight E11,E12,E22): {} residual {:.1e} in {} sweeps, scaling norm {:.2} -> {:.2} (monotone {monotone}, growth ~ k^{exponent:.2})",
        cert.verdict.as_str(),
        cert.best_residual.unwrap_or(f64::NAN),
        cert.sweeps,
        norms.first().copied().unwrap_or(f64::NAN),
        norms.last().copied().unwrap_or(f64::NAN),
    ));
    outcome(pass, notes.join("; "))
}

fn c6_building_metric() -> Result<Outcome> {
    let mut rng = seeded(1006);
    let mut exact_failures = 0;
    let mut flags = 0;
    for n in 1..=3usize {
        let perms = permutations(n);
        for perm in &perms {
            let frame = CMat::from_fn(n, n, |i, j| if perm[j] == i { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
            for _ in 0..5 {
                let lam: Vec<f64> = (0..n).map(|_| rng.random_range(-5i32..=5) as f64).collect();
                let p = BoundaryPoint::canonicalize(&lam, &frame)?;
                flags += 1;
                if pairing(&p, &p)? != lam.iter().map(|l| l * l).sum::<f64>() {
                    exact_failures += 1;
                }
            }
        }
    }
    let mut tri_slack = f64::INFINITY;
    for k in 0..1000 {
        let n = 2 + k % 3;
        let p = random_boundary_point(&mut rng, n, -1.0, 1.0);
        let q = random_boundary_point(&mut rng, n, -1.0, 1.0);
        let r = if k % 4 == 0 {
            // a third point in q's chamber
            BoundaryPoint::canonicalize(&random_weights(&mut rng, n, -1.0, 1.0), q.basis())?
        } else {
            random_boundary_point(&mut rng, n, -1.0, 1.0)
        };
        tri_slack = tri_slack.min(d_infty(&p, &q)? + d_infty(&q, &r)? - d_infty(&p, &r)?);
    }
    let mut lip_slack = f64::INFINITY;
    for k in 0..1000 {
        let n = 2 + k % 3;
        let p = random_boundary_point(&mut rng, n, -2.0, 2.0);
        let x = random_pd_point(&mut rng, n, 1.5);
        let y = random_pd_point(&mut rng, n, 1.5);
        let diff = (busemann(&p, &x)? - busemann(&p, &y)?).abs();
        lip_slack = lip_slack.min(p.norm() * distance(&x, &y)? - diff);
    }
    outcome(
        exact_failures == 0 && tri_slack >= -1e-9 && lip_slack >= -1e-9,
        format!(
            "pairing(p,p) = |lambda|^2 exact on {flags} coordinate flags ({exact_failures} misses); \
             triangle min slack {tri_slack:.2e}; Lipschitz min slack {lip_slack:.2e} (tol -1e-9)"
        ),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn c7_submodularity() -> Result<Outcome> {
    let mut rng = seeded(1007);
    let (mut min_deficit, mut violations, mut pairs) = (f64::INFINITY, 0, 0);
    let mut record = |r: flagscale::sublattice::SubmodularityReport| {
        min_deficit = min_deficit.min(r.min_deficit);
        violations += r.violations.len();
        pairs += r.pairs_checked;
    };
    for n in 1..=4usize {
        let fam = SubspaceFamily::coordinate(&CMat::identity(n, n));
        for _ in 0..3 {
            let q = random_boundary_point(&mut rng, n, -1.0, 1.0);
            record(submodularity_check(&LatticeFunction::neg_pairing(q), &fam)?);
            let a = sparse_tuple(&mut rng, n, 1 + n % 3, 0.4);
            let q = random_target(&mut rng, n, true).q;
            record(submodularity_check(&LatticeFunction::franks_rank(a, q), &fam)?);
        }
    }
    for k in 0..100 {
        let n = 2 + k % 3;
        let (dx, dy) = (rng.random_range(0..=n), rng.random_range(0..=n));
        let x = flagscale::random::random_subspace(&mut rng, n, dx);
        let y = flagscale::random::random_subspace(&mut rng, n, dy);
        let q = random_boundary_point(&mut rng, n, -1.0, 1.0);
        record(submodularity_check_pairs(&LatticeFunction::neg_pairing(q), &[(x.clone(), y.clone())])?);
        // rank-one matrices so that perp_A is nontrivial on random subspaces
        let mats = (0..1 + k % 2)
            .map(|_| random_complex(&mut rng, n, 1) * random_complex(&mut rng, 1, n))
            .collect();
        let a = OperatorTuple::new(mats)?;
        let q = random_target(&mut rng, n, true).q;
        record(submodularity_check_pairs(&LatticeFunction::franks_rank(a, q), &[(x, y)])?);
    }
    outcome(
        violations == 0,
        format!("{pairs} pairs checked, min deficit {min_deficit:.2e}, {violations} violations below -1e-9"),
    )
}

fn c8_witness_soundness(emitted: &mut Emitted) -> Result<Outcome> {
    // a certification batch of sparse instances, some with hidden frames
    let mut rng = seeded(1008);
    let mut certified = 0;
    for case in 0..24 {
        let n = 2 + case % 3;
        let base = sparse_tuple(&mut rng, n, 1 + case % 2, 0.35);
        let (a, target) = if case % 3 == 2 {
            let (g, h) = (random_unitary(&mut rng, n), random_unitary(&mut rng, n));
            let target = MarginalTarget::new(
                BoundaryPoint::canonicalize(&marginal(&mut rng, n), &g)?,
                BoundaryPoint::canonicalize(&marginal(&mut rng, n), &h)?,
            )?;
            (base.transform(&g.adjoint(), &h.adjoint()), target)
        } else {
            (base, random_target(&mut rng, n, false))
        };
        let cert = certify(&a, &target, &CertifyOptions { budget: 2000, seed: case as u64, ..Default::default() });
        certified += 1;
        if let Some(w) = cert.witness {
            emitted.push((format!("batch {case}"), a, target, w));
        }
    }
    let s = 1.0 / 64.0;
    let mut unsound = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (name, a, target, w) in emitted.iter() {
        let px = BoundaryPoint::from_subspace(&w.x).scaled(s)?;
        let py = BoundaryPoint::from_subspace(&w.y).scaled(s)?;
        let probe = RayProbe::from_identity(vec![px, py]);
        let f = |pts: &[PdPoint]| total_objective(a, target, &pts[0], &pts[1]);
        let q = ray_quotients(&f, &probe)?.final_quotient();
        worst = worst.max(q);
        if !(q < 0.0) {
            unsound.push(name.clone());
        }
    }
    outcome(
        unsound.is_empty() && !emitted.is_empty(),
        format!(
            "{} witnesses replayed ({certified} batch instances certified), largest final quotient {worst:.3e}, \
             unsound: {unsound:?}",
            emitted.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut emitted: Emitted = Vec::new();
    let mut all = true;
    let mut report = |id: usize, name: &str, r: Result<Outcome>, elapsed: Duration| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!(
            "{} [{id}] {name}: {detail} ({:.2} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    };
    macro_rules! run {
        ($id:expr, $name:expr, $body:expr) => {{
            let t = Instant::now();
            let r = $body;
            report($id, $name, r, t.elapsed());
        }};
    }
    run!(1, "gradient two-route identity", c1_gradient_two_routes());
    run!(2, "finite-difference checks", c2_finite_differences());
    run!(3, "recession convergence", c3_recession_convergence());
    run!(4, "matrix-scaling equivalence", c4_matrix_scaling_equivalence());
    run!(5, "curated operator-scaling verdicts", c5_curated_verdicts(&mut emitted));
    run!(6, "building metric", c6_building_metric());
    run!(7, "submodularity", c7_submodularity());
    run!(8, "witness soundness", c8_witness_soundness(&mut emitted));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
