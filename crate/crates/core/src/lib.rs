pub mod choi_verify;
pub mod circuit_synth;
pub mod comb_sdp;
pub mod error;
pub mod haar;
pub mod linalg;
pub mod matrix_units;
pub mod param_comb;
pub mod rep_theory;
pub mod sdp_solver;

pub use error::{CombError, Result};
pub use rep_theory::{BratteliDiagram, ChainSpec, IrrepLabel, LegKind, Path, Task};
pub use comb_sdp::{CoefficientBlocks, CombModel};
pub use linalg::{CMat, RMat};
pub use sdp_solver::{SdpProblem, SdpSolution, SolveStatus, SolverOptions};
