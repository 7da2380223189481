//! Cells shared by the benchmarks.

use qcomb::Task;

/// Cells small enough to run repeatedly inside a benchmark loop.
pub const SDP_CELLS: &[(Task, usize, usize)] =
    &[(Task::Transpose, 2, 2), (Task::Transpose, 2, 3), (Task::Invert, 3, 2), (Task::Transpose, 3, 2)];

pub const OPTIMIZER_CELLS: &[(Task, usize, usize)] = &[(Task::Transpose, 2, 2), (Task::Invert, 3, 2)];

pub fn cell_name(task: Task, d: usize, n: usize) -> String {
    format!("{task}_d{d}_n{n}")
}
