//! `flagscale`: batch front end for the scaling solvers, certifiers and
//! probes. Reads one JSON instance, writes one JSON report.
//!
//! Exit codes: 0 feasible / bounded / converged, 2 certified infeasible or
//! unbounded, 3 indeterminate, 1 input error.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use flagscale::boundary::{busemann, busemann_grad};
use flagscale::io::{
    matrix_from_json, matrix_to_json, parse_json, BoundaryPointJson, CertificateJson, MatrixInstanceJson, MatrixJson,
    OperatorInstanceJson, ScaleResultJson, SubspaceJson, WitnessJson,
};
use flagscale::matrix_scaling::{
    approx_scalable_flow, dual_objective, potential, recession_matrix, sinkhorn, FlowVerdict,
};
use flagscale::operator_scaling::{
    certify, franks_inequality, kempf_ness, perp_a, recession_op, scale_alternating, total_objective,
    CertifyOptions, COORDINATE_SEARCH_MAX_N,
};
use flagscale::recession::{default_grid, ray_quotients, ray_quotients_euclidean, RayProbe, RecessionEstimate};
use flagscale::sublattice::{base_membership, LatticeFunction, SubspaceFamily};
use flagscale::{boundary, Error, PdPoint, Verdict};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_CERTIFIED: u8 = 2;
const EXIT_INDETERMINATE: u8 = 3;

#[derive(Parser)]
#[command(name = "flagscale", version, about = "Matrix and operator scaling solvers and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Clone)]
struct Opts {
    /// Target residual for the scaling iterations.
    #[arg(long, global = true, default_value_t = 1e-8)]
    eps: f64,
    /// Minimum violation for an infeasibility certificate.
    #[arg(long, global = true, default_value_t = 1e-3)]
    delta: f64,
    /// Iteration budget (Sinkhorn iterations or alternating sweeps).
    #[arg(long, global = true, default_value_t = 10_000)]
    budget: usize,
    /// Seed for candidate sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sinkhorn scaling of a nonnegative matrix, with the flow test on failure.
    Sinkhorn { input: PathBuf },
    /// Alternating operator scaling towards the target marginals.
    Opscale { input: PathBuf },
    /// Bounded evidence or an unbounded witness for an operator instance.
    Certify { input: PathBuf },
    /// Ray quotients and closed-form recession along a direction.
    Recession { input: PathBuf },
    /// Busemann function and gradient at a point.
    Busemann { input: PathBuf },
    /// Re-validate a witness, or test membership against a finite family.
    PolytopeCheck { input: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sinkhorn { .. } => "sinkhorn",
            Command::Opscale { .. } => "opscale",
            Command::Certify { .. } => "certify",
            Command::Recession { .. } => "recession",
            Command::Busemann { .. } => "busemann",
            Command::PolytopeCheck { .. } => "polytope-check",
        }
    }

    fn input(&self) -> &PathBuf {
        match self {
            Command::Sinkhorn { input }
            | Command::Opscale { input }
            | Command::Certify { input }
            | Command::Recession { input }
            | Command::Busemann { input }
            | Command::PolytopeCheck { input } => input,
        }
    }
}

struct Report {
    verdict: &'static str,
    exit: u8,
    body: Value,
}

fn report(verdict: &'static str, exit: u8, body: Value) -> anyhow::Result<Report> {
    Ok(Report { verdict, exit, body })
}

fn read_input(path: &PathBuf) -> anyhow::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
        return Ok(s);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_value(text: &str) -> anyhow::Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| Error::InvalidInput(format!("line {}, column {}: {e}", e.line(), e.column())).into())
}

fn has_key(text: &str, key: &str) -> anyhow::Result<bool> {
    Ok(parse_value(text)?.get(key).is_some_and(|v| !v.is_null()))
}

fn estimate_json(e: &RecessionEstimate) -> Value {
    json!({
        "t_grid": e.t_grid,
        "values": e.values,
        "quotients": e.quotients,
        "estimate": e.estimate,
        "final_quotient": e.final_quotient(),
        "infinite": e.infinite,
        "monotone_violation": e.monotone_violation,
    })
}

fn flow_json(f: &FlowVerdict) -> Value {
    json!({
        "feasible": f.feasible,
        "flow_value": f.flow_value,
        "violation": f.violation,
        "witness": f.witness.as_ref().map(|(s, t)| json!({"rows": s, "cols": t})),
    })
}

fn run_sinkhorn(text: &str, opts: &Opts) -> anyhow::Result<Report> {
    let inst = parse_json::<MatrixInstanceJson>(text)?.to_instance()?;
    let flow = approx_scalable_flow(&inst);
    let run = match sinkhorn(&inst, opts.eps, opts.budget) {
        Ok(r) => Some(r),
        Err(Error::ZeroLine { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let run_json = run.as_ref().map(|r| {
        json!({
            "converged": r.converged,
            "residual": r.residual,
            "iters": r.iters,
            "rdiag": r.scaling.rdiag,
            "cdiag": r.scaling.cdiag,
            "s": r.s,
            "t": r.t,
            "trace": r.trace.iter().map(|c| json!({
                "iter": c.iter, "dual": c.dual, "residual": c.residual, "spread": c.spread,
            })).collect::<Vec<_>>(),
        })
    });
    let body = json!({"sinkhorn": run_json, "flow": flow_json(&flow)});
    match (&run, flow.feasible) {
        (Some(r), _) if r.converged => report("CONVERGED", EXIT_OK, body),
        (_, false) if flow.violation >= opts.delta => report("INFEASIBLE", EXIT_CERTIFIED, body),
        _ => report("INDETERMINATE", EXIT_INDETERMINATE, body),
    }
}

fn run_opscale(text: &str, opts: &Opts) -> anyhow::Result<Report> {
    let (a, target) = parse_json::<OperatorInstanceJson>(text)?.to_parts()?;
    match scale_alternating(&a, &target, opts.eps, opts.budget) {
        Ok(r) => report("CONVERGED", EXIT_OK, json!({"scaling": ScaleResultJson::from_result(&r)})),
        Err(Error::NonConvergence(r)) => report(
            "INDETERMINATE",
            EXIT_INDETERMINATE,
            json!({"scaling": ScaleResultJson::from_result(&r), "note": "budget exhausted"}),
        ),
        Err(e @ (Error::DegenerateMarginal { .. } | Error::ZeroTrace(_))) => {
            report("INDETERMINATE", EXIT_INDETERMINATE, json!({"scaling": null, "note": e.to_string()}))
        }
        Err(e) => Err(e.into()),
    }
}

fn run_certify(text: &str, opts: &Opts) -> anyhow::Result<Report> {
    let inst = parse_json::<OperatorInstanceJson>(text)?;
    let (a, target) = inst.to_parts()?;
    let copts = CertifyOptions { eps: opts.eps, delta: opts.delta, budget: opts.budget, seed: opts.seed, ..Default::default() };
    let cert = certify(&a, &target, &copts);
    let c = CertificateJson::from_certificate(&cert);
    let body = json!({
        "instance": OperatorInstanceJson::from_parts(&a, &target),
        "witness": c.witness,
        "best_residual": c.best_residual,
        "sweeps": c.sweeps,
        "candidates_tried": c.candidates_tried,
        "note": c.note,
        "scaling": c.scaling,
    });
    match cert.verdict {
        Verdict::BoundedEvidence => report("BOUNDED_EVIDENCE", EXIT_OK, body),
        Verdict::UnboundedWitness => report("UNBOUNDED_WITNESS", EXIT_CERTIFIED, body),
        Verdict::Indeterminate => report("INDETERMINATE", EXIT_INDETERMINATE, body),
    }
}

#[derive(Deserialize)]
struct OperatorDirection {
    p: BoundaryPointJson,
    q: BoundaryPointJson,
}

#[derive(Deserialize)]
struct OperatorRecessionInput {
    #[serde(flatten)]
    instance: OperatorInstanceJson,
    direction: OperatorDirection,
}

#[derive(Deserialize)]
struct MatrixDirection {
    u: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixRecessionInput {
    #[serde(flatten)]
    instance: MatrixInstanceJson,
    direction: MatrixDirection,
}

/// Slope of the full objective along the direction: `f^∞(u) − <u, target>`.
fn slope_verdict(slope: f64, delta: f64, body: Value) -> anyhow::Result<Report> {
    if slope <= -delta {
        report("UNBOUNDED_DIRECTION", EXIT_CERTIFIED, body)
    } else {
        report("NONNEGATIVE_SLOPE", EXIT_OK, body)
    }
}

fn run_recession(text: &str, opts: &Opts) -> anyhow::Result<Report> {
    if has_key(text, "mats")? {
        let input = parse_json::<OperatorRecessionInput>(text)?;
        let (a, target) = input.instance.to_parts()?;
        let (p, q) = (input.direction.p.to_point()?, input.direction.q.to_point()?);
        let closed = recession_op(&a, &p, &q)?;
        let total_closed = closed - boundary::pairing(&p, &target.p)? - boundary::pairing(&q, &target.q)?;
        let probe = RayProbe::from_identity(vec![p, q]);
        let fa = |pts: &[PdPoint]| kempf_ness(&a, &pts[0], &pts[1]);
        let ft = |pts: &[PdPoint]| total_objective(&a, &target, &pts[0], &pts[1]);
        let body = json!({
            "closed_form": closed,
            "objective_slope": total_closed,
            "kempf_ness": estimate_json(&ray_quotients(&fa, &probe)?),
            "total_objective": estimate_json(&ray_quotients(&ft, &probe)?),
        });
        slope_verdict(total_closed, opts.delta, body)
    } else {
        let input = parse_json::<MatrixRecessionInput>(text)?;
        let inst = input.instance.to_instance()?;
        let (u, v) = (&input.direction.u, &input.direction.v);
        let closed = recession_matrix(&inst, u, v)?;
        let linear: f64 = inst.r().iter().zip(u).chain(inst.c().iter().zip(v)).map(|(a, b)| a * b).sum();
        let n = inst.n();
        let dir: Vec<f64> = u.iter().chain(v).copied().collect();
        let fa = |z: &[f64]| potential(&inst, &z[..n], &z[n..]);
        let fd = |z: &[f64]| dual_objective(&inst, &z[..n], &z[n..]);
        let base = vec![0.0; 2 * n];
        let body = json!({
            "closed_form": closed,
            "objective_slope": closed - linear,
            "potential": estimate_json(&ray_quotients_euclidean(&fa, &base, &dir, &default_grid())?),
            "dual_objective": estimate_json(&ray_quotients_euclidean(&fd, &base, &dir, &default_grid())?),
        });
        slope_verdict(closed - linear, opts.delta, body)
    }
}

#[derive(Deserialize)]
struct BusemannInput {
    p: BoundaryPointJson,
    x: MatrixJson,
}

fn run_busemann(text: &str, _opts: &Opts) -> anyhow::Result<Report> {
    let input = parse_json::<BusemannInput>(text)?;
    let p = input.p.to_point()?;
    let x = PdPoint::new(&matrix_from_json(&input.x, "x")?)?;
    let body = json!({
        "value": busemann(&p, &x)?,
        "gradient": matrix_to_json(&busemann_grad(&p, &x)?),
        "point": BoundaryPointJson::from_point(&p),
    });
    report("EVALUATED", EXIT_OK, body)
}

#[derive(Deserialize)]
struct WitnessInput {
    instance: OperatorInstanceJson,
    witness: WitnessJson,
}

fn run_polytope_check(text: &str, opts: &Opts) -> anyhow::Result<Report> {
    // a full report from `certify` is checked through its result
    let inner;
    let text = match parse_value(text)?.get("result") {
        Some(r) if r.is_object() => {
            inner = r.to_string();
            inner.as_str()
        }
        _ => text,
    };
    if has_key(text, "witness")? {
        // a certify report, or any instance paired with a witness
        let input = parse_json::<WitnessInput>(text)?;
        let (a, target) = input.instance.to_parts()?;
        let w = input.witness.to_witness()?;
        let slack = match franks_inequality(&a, &target, &w.x, &w.y) {
            Ok(s) => s,
            Err(e @ Error::NotInSA { .. }) => {
                return report("WITNESS_INVALID", EXIT_INDETERMINATE, json!({"reason": e.to_string()}))
            }
            Err(e) => return Err(e.into()),
        };
        let body = json!({"franks_slack": slack, "violation": -slack, "claimed_violation": w.violation});
        if -slack >= opts.delta {
            return report("WITNESS_VALID", EXIT_CERTIFIED, body);
        }
        return report("WITNESS_INVALID", EXIT_INDETERMINATE, body);
    }
    if has_key(text, "mats")? || has_key(text, "instance")? {
        let (a, target) = match parse_value(text)?.get("instance") {
            Some(inst) => parse_json::<OperatorInstanceJson>(&inst.to_string())?.to_parts()?,
            None => parse_json::<OperatorInstanceJson>(text)?.to_parts()?,
        };
        let n = a.n();
        if n > COORDINATE_SEARCH_MAX_N {
            bail!(Error::InvalidInput(format!("coordinate family needs n <= {COORDINATE_SEARCH_MAX_N}, got {n}")));
        }
        let fam = SubspaceFamily::coordinate(target.u());
        let rho = LatticeFunction::franks_rank(a.clone(), target.q.clone());
        let m = base_membership(&rho, &target.p, &fam)?;
        let x = fam.members()[m.worst_index].clone();
        let y = perp_a(&a, &x)?;
        let body = json!({
            "family_size": fam.len(),
            "worst_slack": m.worst_slack,
            "top_gap": m.top_gap,
            "worst": {"x": SubspaceJson::from_subspace(&x), "y": SubspaceJson::from_subspace(&y)},
        });
        if m.member {
            return report("MEMBER_ON_FAMILY", EXIT_OK, body);
        }
        let violation = -franks_inequality(&a, &target, &x, &y)?;
        let mut body = body;
        body["violation"] = json!(violation);
        if violation >= opts.delta {
            return report("VIOLATED", EXIT_CERTIFIED, body);
        }
        return report("INDETERMINATE", EXIT_INDETERMINATE, body);
    }
    let inst = parse_json::<MatrixInstanceJson>(text)?.to_instance()?;
    let flow = approx_scalable_flow(&inst);
    let body = json!({"flow": flow_json(&flow)});
    if flow.feasible {
        report("MEMBER", EXIT_OK, body)
    } else if flow.violation >= opts.delta {
        report("VIOLATED", EXIT_CERTIFIED, body)
    } else {
        report("INDETERMINATE", EXIT_INDETERMINATE, body)
    }
}

fn validate(opts: &Opts) -> anyhow::Result<()> {
    if !(opts.eps > 0.0) || !(opts.delta > 0.0) {
        bail!(Error::InvalidInput("--eps and --delta must be positive".into()));
    }
    if opts.budget < 1 {
        bail!(Error::InvalidInput("--budget must be at least 1".into()));
    }
    Ok(())
}

fn execute(cli: &Cli) -> anyhow::Result<Report> {
    validate(&cli.opts)?;
    let text = read_input(cli.command.input())?;
    let opts = &cli.opts;
    match &cli.command {
        Command::Sinkhorn { .. } => run_sinkhorn(&text, opts),
        Command::Opscale { .. } => run_opscale(&text, opts),
        Command::Certify { .. } => run_certify(&text, opts),
        Command::Recession { .. } => run_recession(&text, opts),
        Command::Busemann { .. } => run_busemann(&text, opts),
        Command::PolytopeCheck { .. } => run_polytope_check(&text, opts),
    }
}

fn emit(text: &str, output: &Option<PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing stdout"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    let start = Instant::now();
    let outcome = execute(&cli);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let rep = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let Format::Json = cli.opts.format;
    let doc = json!({
        "command": cli.command.name(),
        "verdict": rep.verdict,
        "exit_code": rep.exit,
        "config": {
            "eps": cli.opts.eps,
            "delta": cli.opts.delta,
            "budget": cli.opts.budget,
            "seed": cli.opts.seed,
        },
        "result": rep.body,
        "wall_time_ms": wall_time_ms,
    });
    let text = serde_json::to_string_pretty(&doc).expect("reports serialize");
    if let Err(e) = emit(&text, &cli.opts.output) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(rep.exit)
}
