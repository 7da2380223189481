//! Run configuration: flags merged over an optional TOML key-value file.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qcomb::Task;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sdp,
    Nlopt,
    Both,
}

impl Method {
    pub fn runs_sdp(self) -> bool {
        matches!(self, Method::Sdp | Method::Both)
    }

    pub fn runs_nlopt(self) -> bool {
        matches!(self, Method::Nlopt | Method::Both)
    }
}

/// Keys accepted in a config file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<String>,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub verify: Option<bool>,
    pub export_sdpa: Option<PathBuf>,
    pub blocks_out: Option<PathBuf>,
    pub mc_samples: Option<usize>,
    pub force: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub d: usize,
    pub n: usize,
    pub method: Method,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub verify: bool,
    pub export_sdpa: Option<PathBuf>,
    pub blocks_out: Option<PathBuf>,
    pub mc_samples: usize,
    pub force: bool,
}

pub const DEFAULT_SDP_TOL: f64 = 1e-8;
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_MC_SAMPLES: usize = 0;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            bail!("d must be at least 2 (got {})", self.d);
        }
        if self.n < 1 {
            bail!("n must be at least 1 (got {})", self.n);
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            bail!("tol must lie in (0, 1) (got {})", self.tol);
        }
        if self.restarts == 0 {
            bail!("restarts must be positive");
        }
        Ok(())
    }
}

/// Parses `3`, `1..4` (inclusive) or `2,3,5`. A reversed range is empty.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().with_context(|| format!("bad range start in `{s}`"))?;
        let b: usize = b.trim_start_matches('=').trim().parse().with_context(|| format!("bad range end in `{s}`"))?;
        return Ok(RangeInclusive::new(a, b).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad value `{p}`")))
        .collect()
}
