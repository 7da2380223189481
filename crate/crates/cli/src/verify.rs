//! Checks run by `solve --verify` and by the `verify` subcommand.

use qcomb::choi_verify::{
    check_comb_conditions, check_symmetry, choi_from_blocks, full_space_fidelity, haar_fidelity_mc,
    full_dim_limit, performance_operator,
};
use qcomb::circuit_synth::verify_theorem1;
use qcomb::{CoefficientBlocks, CombModel};
use serde::{Deserialize, Serialize};

pub const PSD_TOL: f64 = 1e-7;
pub const COMB_TOL: f64 = 1e-7;
pub const RECONSTRUCTION_TOL: f64 = 1e-7;
pub const ORACLE_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-7;
pub const SYMMETRY_SAMPLES: usize = 4;
/// Added to three standard errors so that a comb with constant pointwise
/// fidelity (zero sample variance) is compared at rounding level.
pub const MC_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, value: f64, tol: f64, detail: impl Into<String>) -> Self {
        let status = if value <= tol { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), status, value: Some(value), tolerance: Some(tol), detail: detail.into() }
    }

    fn skipped(name: &str, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Skipped, value: None, tolerance: None, detail: detail.into() }
    }

    fn failed(name: &str, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Fail, value: None, tolerance: None, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSection {
    pub samples: usize,
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub min_pointwise: f64,
    pub reference: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationSection {
    pub passed: bool,
    pub failed_checks: Vec<String>,
    pub full_space_dim: usize,
    pub reduced_fidelity: f64,
    pub checks: Vec<Check>,
    pub mc: Option<McSection>,
}

pub struct VerifyOptions {
    pub mc_samples: usize,
    pub seed: u64,
    pub force: bool,
}

pub fn run(model: &CombModel, blocks: &CoefficientBlocks, opts: &VerifyOptions) -> VerificationSection {
    let mut checks = Vec::new();
    let herm = blocks.hermiticity_residual();
    checks.push(Check::bound("hermiticity", herm, PSD_TOL, "max |c - c^dagger| over blocks"));
    let min_eig = blocks.min_eigenvalue();
    checks.push(Check::bound("positivity", (-min_eig).max(0.0), PSD_TOL, format!("smallest block eigenvalue {min_eig:.3e}")));
    checks.push(Check::bound("comb_conditions", model.comb_residual(blocks), COMB_TOL, "reduced marginal conditions"));
    let reduced = model.fidelity(blocks);

    let dim = model.d.pow(2 * (model.n as u32 + 1));
    let mut mc = None;
    if dim > full_dim_limit() && !opts.force {
        let why = format!("full-space dimension {dim} exceeds {}; pass --force to run", full_dim_limit());
        for name in ["full_space_comb_conditions", "symmetry", "oracle_fidelity", "reconstruction", "monte_carlo"] {
            checks.push(Check::skipped(name, why.clone()));
        }
    } else {
        full_space_checks(model, blocks, reduced, opts, &mut checks, &mut mc);
    }

    let failed_checks: Vec<String> =
        checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.clone()).collect();
    VerificationSection { passed: failed_checks.is_empty(), failed_checks, full_space_dim: dim, reduced_fidelity: reduced, checks, mc }
}

fn full_space_checks(
    model: &CombModel,
    blocks: &CoefficientBlocks,
    reduced: f64,
    opts: &VerifyOptions,
    checks: &mut Vec<Check>,
    mc: &mut Option<McSection>,
) {
    let choi = match choi_from_blocks(model, blocks) {
        Ok(c) => c,
        Err(e) => {
            checks.push(Check::failed("full_space_comb_conditions", e.to_string()));
            return;
        }
    };
    match check_comb_conditions(&choi, model.n) {
        Ok(r) => checks.push(Check::bound(
            "full_space_comb_conditions",
            r.max_residual(),
            COMB_TOL,
            format!(
                "marginal {:.3e}, normalization {:.3e}, min eigenvalue {:.3e}",
                r.marginal_residual, r.normalization_residual, r.min_eigenvalue
            ),
        )),
        Err(e) => checks.push(Check::failed("full_space_comb_conditions", e.to_string())),
    }
    match check_symmetry(&choi, model.task, model.n, SYMMETRY_SAMPLES, opts.seed) {
        Ok(r) => checks.push(Check::bound("symmetry", r, SYMMETRY_TOL, format!("{SYMMETRY_SAMPLES} Haar pairs"))),
        Err(e) => checks.push(Check::failed("symmetry", e.to_string())),
    }
    match performance_operator(model.task, model.d, model.n).and_then(|omega| full_space_fidelity(&choi, &omega)) {
        Ok(f) => checks.push(Check::bound(
            "oracle_fidelity",
            (f - reduced).abs(),
            ORACLE_TOL,
            format!("Tr(C Omega) = {f:.12}, reduced = {reduced:.12}"),
        )),
        Err(e) => checks.push(Check::failed("oracle_fidelity", e.to_string())),
    }
    match verify_theorem1(model, blocks) {
        Ok(r) => checks.push(Check::bound(
            "reconstruction",
            r.residual,
            RECONSTRUCTION_TOL,
            format!("isometry residual {:.3e}, memory dims {:?}", r.isometry_residual, r.memory_dims),
        )),
        Err(e) => checks.push(Check::failed("reconstruction", e.to_string())),
    }
    if opts.mc_samples == 0 {
        checks.push(Check::skipped("monte_carlo", "no samples requested"));
        return;
    }
    match haar_fidelity_mc(&choi, model.task, model.n, opts.mc_samples, opts.seed) {
        Ok(est) => {
            let tol = 3.0 * est.stderr + MC_FLOOR;
            checks.push(Check::bound(
                "monte_carlo",
                (est.mean - reduced).abs(),
                tol,
                format!("mean {:.9} +- {:.2e} over {} samples", est.mean, est.stderr, est.samples),
            ));
            *mc = Some(McSection {
                samples: est.samples,
                seed: opts.seed,
                mean: est.mean,
                stderr: est.stderr,
                min_pointwise: est.min,
                reference: reduced,
                tolerance: tol,
            });
        }
        Err(e) => checks.push(Check::failed("monte_carlo", e.to_string())),
    }
}
