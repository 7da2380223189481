//! SDPA sparse (`.dat-s`) reader and writer.
//!
//! The problem `max <C, X>, <A_i, X> = b_i, X ⪰ 0` is the SDPA dual form with
//! `F_0 = C`, `F_i = A_i` and `c_i = b_i`; matrix 0 in the file is the objective.

use std::fmt::Write as _;
use std::path::Path;

use super::{SdpProblem, SparseSym};
use crate::error::{CombError, Result};

pub fn to_sdpa_string(problem: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\"block-diagonal SDP, maximize <F0, Y> subject to <Fi, Y> = ci");
    let _ = writeln!(out, "{}", problem.constraints.len());
    let _ = writeln!(out, "{}", problem.block_sizes.len());
    let sizes: Vec<String> = problem.block_sizes.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = problem.rhs.iter().map(|v| format!("{v:?}")).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    let mut emit = |matno: usize, m: &SparseSym| {
        let mut m = m.clone();
        m.normalize();
        for (b, r, c, v) in m.entries {
            let _ = writeln!(out, "{matno} {} {} {} {v:?}", b + 1, r + 1, c + 1);
        }
    };
    emit(0, &problem.objective);
    for (i, a) in problem.constraints.iter().enumerate() {
        emit(i + 1, a);
    }
    out
}

pub fn export_sdpa(problem: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_sdpa_string(problem))?;
    Ok(())
}

pub fn import_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem> {
    parse_sdpa(&std::fs::read_to_string(path)?)
}

pub fn parse_sdpa(text: &str) -> Result<SdpProblem> {
    let body: String = text
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with('"') || t.starts_with('*'))
        })
        .map(|l| l.replace([',', '(', ')', '{', '}'], " ") + "\n")
        .collect();
    let mut tokens = body.split_whitespace();
    let mut next = |what: &str| -> Result<&str> {
        tokens.next().ok_or_else(|| CombError::Parse(format!("unexpected end of input reading {what}")))
    };
    let int = |s: &str| -> Result<i64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .map(|v| v as i64)
            .ok_or_else(|| CombError::Parse(format!("expected an integer, found `{s}`")))
    };
    let float = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| CombError::Parse(format!("expected a number, found `{s}`")))
    };
    let m = int(next("constraint count")?)? as usize;
    let nb = int(next("block count")?)? as usize;
    let mut block_sizes = Vec::with_capacity(nb);
    for _ in 0..nb {
        block_sizes.push(int(next("block size")?)?.unsigned_abs() as usize);
    }
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        rhs.push(float(next("right-hand side")?)?);
    }
    let mut objective = SparseSym::new();
    let mut constraints = vec![SparseSym::new(); m];
    while let Some(tok) = tokens.next() {
        let matno = int(tok)? as usize;
        let mut field = || tokens.next().ok_or_else(|| CombError::Parse("truncated entry line".into()));
        let blk = int(field()?)? as usize;
        let i = int(field()?)? as usize;
        let j = int(field()?)? as usize;
        let v = float(field()?)?;
        if blk == 0 || blk > nb || i == 0 || j == 0 || i.max(j) > block_sizes[blk - 1] {
            return Err(CombError::Parse(format!("entry {matno} {blk} {i} {j} out of range")));
        }
        let target = match matno {
            0 => &mut objective,
            k if k <= m => &mut constraints[k - 1],
            _ => return Err(CombError::Parse(format!("matrix number {matno} exceeds {m}"))),
        };
        target.push(blk - 1, i - 1, j - 1, v);
    }
    objective.normalize();
    for c in &mut constraints {
        c.normalize();
    }
    let problem = SdpProblem { block_sizes, objective, constraints, rhs };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_problem_round_trip() {
        let p = SdpProblem { block_sizes: vec![2], objective: SparseSym::new(), constraints: vec![], rhs: vec![] };
        let text = to_sdpa_string(&p);
        assert_eq!(text.lines().filter(|l| l.split_whitespace().count() == 5).count(), 0);
        assert_eq!(parse_sdpa(&text).unwrap(), p);
    }

    #[test]
    fn accepts_punctuated_headers_and_diagonal_blocks() {
        let text = "* comment\n1 =mdim\n2\n{2, -3}\n(1.5)\n0 1 1 2 -1.0\n1 2 3 3 2.0\n";
        let p = parse_sdpa(&text.replace("=mdim", "")).unwrap();
        assert_eq!(p.block_sizes, vec![2, 3]);
        assert_eq!(p.rhs, vec![1.5]);
        assert_eq!(p.objective.entries, vec![(0, 0, 1, -1.0)]);
        assert_eq!(p.constraints[0].entries, vec![(1, 2, 2, 2.0)]);
    }

    #[test]
    fn rejects_out_of_range_entries() {
        assert!(parse_sdpa("1\n1\n2\n1\n1 1 3 3 1.0\n").is_err());
        assert!(parse_sdpa("1\n1\n2\n1\n2 1 1 1 1.0\n").is_err());
    }
}
