use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use qcomb::param_comb::{self, count_parameters, count_parameters_naive, OptimizeOptions, ParamModel};
use qcomb::sdp_solver::{self, sdpa};
use qcomb::{CoefficientBlocks, CombModel, SdpProblem, SolveStatus, SolverOptions, Task};

use crate::config::{Method, RunConfig};
use crate::record::{
    summarize_blocks, write_json, BlocksFile, Conventions, NloptSection, ParamCounts, ResultRecord, SdpSection,
    Timing, Versions, SCHEMA_VERSION,
};
use crate::verify::{self, VerificationSection, VerifyOptions};

pub const MAX_REDUCED_VARIABLES: usize = 50_000;
pub const RANK_TOLERANCE: f64 = 1e-7;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const SOLVER: i32 = 2;
    pub const VERIFY: i32 = 3;
}

/// Number of free real variables of the reduced SDP, computed from the block layout.
pub fn reduced_variables(model: &CombModel) -> usize {
    model.top().blocks.iter().map(|b| b.size() * (b.size() + 1) / 2).sum()
}

fn guarded_problem(model: &CombModel, force: bool) -> Result<SdpProblem> {
    let vars = reduced_variables(model);
    if vars > MAX_REDUCED_VARIABLES && !force {
        bail!("reduced SDP has {vars} variables, above the limit {MAX_REDUCED_VARIABLES}; pass --force to assemble it");
    }
    Ok(model.assemble_sdp()?)
}

struct SdpRun {
    section: SdpSection,
    blocks: CoefficientBlocks,
}

fn run_sdp(model: &CombModel, cfg: &RunConfig) -> Result<SdpRun> {
    let problem = guarded_problem(model, cfg.force)?;
    let sol = sdp_solver::solve(&problem, &SolverOptions { tol: cfg.tol, ..Default::default() });
    let blocks = model.blocks_from_solution(&sol.x);
    let section = SdpSection {
        status: format!("{:?}", sol.status),
        fidelity: model.fidelity(&blocks),
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        duality_gap: sol.gap,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        solver_tolerance: cfg.tol,
        comb_residual: model.comb_residual(&blocks),
        iterations: sol.iterations,
        reduced_variables: problem.num_variables(),
        constraints: problem.constraints.len(),
        dropped_constraints: sol.dropped_constraints.len(),
    };
    Ok(SdpRun { section, blocks })
}

struct NloptRun {
    section: NloptSection,
    blocks: CoefficientBlocks,
}

fn nlopt_options(cfg: &RunConfig) -> OptimizeOptions {
    OptimizeOptions { restarts: cfg.restarts, seed: cfg.seed, tol: cfg.tol * 0.1, ..Default::default() }
}

fn run_nlopt(model: &CombModel, cfg: &RunConfig) -> Result<NloptRun> {
    let opts = nlopt_options(cfg);
    let cell = param_comb::optimize(cfg.task, cfg.d, cfg.n, &opts)?;
    let variants = ParamModel::variants(cfg.task, cfg.d, cfg.n)?;
    let blocks = variants[cell.variant].induced_blocks(&cell.result.best)?;
    let section = NloptSection {
        fidelity: cell.result.fidelity,
        gradient_norm: cell.result.gradient_norm,
        gradient_tolerance: opts.tol,
        converged: cell.result.converged,
        restarts: opts.restarts,
        restart_fidelities: cell.result.restarts.iter().map(|r| r.fidelity).collect(),
        variant: cell.variant,
        variant_count: cell.variant_count,
        variant_fidelities: cell.variant_fidelities,
        manifold_dim: cell.shape.manifold_dim(),
        comb_residual: model.comb_residual(&blocks),
    };
    Ok(NloptRun { section, blocks })
}

fn param_counts(task: Task, d: usize, n: usize) -> Option<ParamCounts> {
    let symmetric = count_parameters(task, d, n).ok()?;
    let naive = count_parameters_naive(task, d, n).ok()?;
    Some(ParamCounts { symmetric, naive: naive.to_string(), ratio: naive as f64 / symmetric.max(1) as f64 })
}

fn empty_record(cfg: &RunConfig) -> ResultRecord {
    ResultRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg.into(),
        status: "error".into(),
        error: None,
        sdp: None,
        nlopt: None,
        method_gap: None,
        blocks: Vec::new(),
        verification: None,
        param_counts: None,
        conventions: Conventions::default(),
        versions: Versions::default(),
        timing: Timing::default(),
    }
}

fn emit_record(record: &ResultRecord, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => write_json(p, record),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, record)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

/// Runs `solve`. The record is written even when a stage fails; the
/// returned code says which stage failed.
pub fn solve(cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let start = Instant::now();
    let mut record = empty_record(cfg);
    let code = match solve_into(cfg, &mut record) {
        Ok(code) => code,
        Err(e) => {
            record.error = Some(format!("{e:#}"));
            eprintln!("error: {e:#}");
            exit::ERROR
        }
    };
    record.status = match code {
        exit::OK => "ok",
        exit::SOLVER => "solver_failure",
        exit::VERIFY => "verification_failed",
        _ => "error",
    }
    .into();
    record.timing.total_seconds = start.elapsed().as_secs_f64();
    emit_record(&record, cfg.output.as_deref())?;
    Ok(code)
}

fn solve_into(cfg: &RunConfig, record: &mut ResultRecord) -> Result<i32> {
    let model = CombModel::new(cfg.task, cfg.d, cfg.n)?;
    record.param_counts = param_counts(cfg.task, cfg.d, cfg.n);
    if let Some(path) = &cfg.export_sdpa {
        sdpa::export_sdpa(&guarded_problem(&model, cfg.force)?, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let mut code = exit::OK;
    let mut chosen: Option<(CoefficientBlocks, &str)> = None;
    if cfg.method.runs_sdp() {
        let t = Instant::now();
        let run = run_sdp(&model, cfg)?;
        record.timing.sdp_seconds = Some(t.elapsed().as_secs_f64());
        if run.section.status != format!("{:?}", SolveStatus::Optimal) {
            eprintln!("error: SDP solver finished with status {}", run.section.status);
            code = exit::SOLVER;
        }
        record.sdp = Some(run.section);
        chosen = Some((run.blocks, "sdp"));
    }
    if cfg.method.runs_nlopt() {
        let t = Instant::now();
        let run = run_nlopt(&model, cfg)?;
        record.timing.nlopt_seconds = Some(t.elapsed().as_secs_f64());
        if let Some(sdp) = &record.sdp {
            record.method_gap = Some(run.section.fidelity - sdp.fidelity);
        }
        record.nlopt = Some(run.section);
        if chosen.is_none() {
            chosen = Some((run.blocks, "nlopt"));
        }
    }
    let (blocks, source) = chosen.ok_or_else(|| anyhow!("no method ran"))?;
    record.blocks = summarize_blocks(&model, &blocks, RANK_TOLERANCE);
    if let Some(path) = &cfg.blocks_out {
        BlocksFile::new(&model, &blocks, source).write(path)?;
    }
    if cfg.verify {
        let t = Instant::now();
        let v = verify::run(&model, &blocks, &VerifyOptions { mc_samples: cfg.mc_samples, seed: cfg.seed, force: cfg.force });
        record.timing.verify_seconds = Some(t.elapsed().as_secs_f64());
        if !v.passed && code == exit::OK {
            eprintln!("error: verification failed: {}", v.failed_checks.join(", "));
            code = exit::VERIFY;
        }
        record.verification = Some(v);
    }
    Ok(code)
}

#[derive(serde::Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub source: String,
    pub verification: VerificationSection,
}

pub fn verify_file(blocks_path: &Path, opts: &VerifyOptions, output: Option<&Path>) -> Result<i32> {
    let file = BlocksFile::load(blocks_path)?;
    let model = CombModel::new(file.task, file.d, file.n)?;
    let blocks = file.to_blocks(&model)?;
    let verification = verify::run(&model, &blocks, opts);
    let passed = verification.passed;
    let failed = verification.failed_checks.join(", ");
    let report =
        VerifyReport { schema_version: SCHEMA_VERSION, task: file.task, d: file.d, n: file.n, source: file.source, verification };
    match output {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if passed {
        Ok(exit::OK)
    } else {
        eprintln!("verification failed: {failed}");
        Ok(exit::VERIFY)
    }
}

/// One row of the `table` CSV.
#[derive(Debug, serde::Serialize)]
pub struct TableRow {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub method: String,
    pub fidelity: String,
    /// Duality gap for the SDP, gradient norm for the optimizer.
    pub error_bound: String,
    pub status: String,
}

fn table_cell(task: Task, d: usize, n: usize, method: Method, cfg: &RunConfig) -> TableRow {
    let row = |fidelity: String, bound: String, status: &str| TableRow {
        task,
        d,
        n,
        method: format!("{method:?}").to_lowercase(),
        fidelity,
        error_bound: bound,
        status: status.into(),
    };
    let skipped = |why: String| row("skipped".into(), String::new(), &why);
    let model = match CombModel::new(task, d, n) {
        Ok(m) => m,
        Err(e) => return skipped(e.to_string()),
    };
    let vars = reduced_variables(&model);
    if vars > MAX_REDUCED_VARIABLES && !cfg.force {
        return skipped(format!("{vars} reduced variables exceed {MAX_REDUCED_VARIABLES}"));
    }
    let cfg = RunConfig { task, d, n, ..cfg.clone() };
    match method {
        Method::Sdp => match run_sdp(&model, &cfg) {
            Ok(r) => row(
                format!("{:.6}", r.section.fidelity),
                format!("{:.1e}", r.section.duality_gap.abs()),
                &r.section.status.to_lowercase(),
            ),
            Err(e) => skipped(e.to_string()),
        },
        _ => match run_nlopt(&model, &cfg) {
            Ok(r) => row(
                format!("{:.6}", r.section.fidelity),
                format!("{:.1e}", r.section.gradient_norm),
                if r.section.converged { "converged" } else { "max_iter" },
            ),
            Err(e) => skipped(e.to_string()),
        },
    }
}

pub fn table(
    task: Task,
    ds: &[usize],
    ns: &[usize],
    method: Method,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["task", "d", "n", "method", "fidelity", "error_bound", "status"])?;
    let methods: &[Method] = match method {
        Method::Both => &[Method::Sdp, Method::Nlopt],
        Method::Sdp => &[Method::Sdp],
        Method::Nlopt => &[Method::Nlopt],
    };
    for &d in ds {
        for &n in ns {
            for &m in methods {
                w.serialize(table_cell(task, d, n, m, cfg))?;
                w.flush()?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn count_params(task: Task, ds: &[usize], ns: &[usize], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "d", "n", "symmetric", "naive", "ratio"])?;
    for &d in ds {
        for &n in ns {
            let (sym, naive, ratio) = match (count_parameters(task, d, n), count_parameters_naive(task, d, n)) {
                (Ok(s), Ok(nv)) => (s.to_string(), nv.to_string(), format!("{:.6e}", nv as f64 / s.max(1) as f64)),
                (s, nv) => (
                    s.map(|v| v.to_string()).unwrap_or_else(|e| format!("unavailable: {e}")),
                    nv.map(|v| v.to_string()).unwrap_or_else(|e| format!("unavailable: {e}")),
                    String::new(),
                ),
            };
            w.write_record([task.to_string(), d.to_string(), n.to_string(), sym, naive, ratio])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_sdpa(task: Task, d: usize, n: usize, force: bool, path: Option<&Path>) -> Result<()> {
    let model = CombModel::new(task, d, n)?;
    let problem = guarded_problem(&model, force)?;
    match path {
        Some(p) => sdpa::export_sdpa(&problem, p).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", sdpa::to_sdpa_string(&problem)),
    }
    Ok(())
}
