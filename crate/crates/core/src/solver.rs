//! Interior-point solve of a [`ConeProgram`].
//!
//! The program is translated to Clarabel's standard form
//! `min qᵀx  s.t.  Ax + s = b, s ∈ K` with `K` a product of zero, nonnegative
//! and second-order cones. Consecutive linear rows of the same kind share one cone.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::socp::{Cone, ConeProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
    IterationLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalTrouble => "numerical_trouble",
            SolveStatus::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Absolute and relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Looser feasibility and gap tolerance still accepted as optimal when the
    /// solver stalls short of the targets above.
    pub tol_accept: f64,
    pub max_iters: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-10,
            tol_gap: 1e-10,
            tol_accept: 1e-8,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual objective of the final iterate; a lower bound on the optimum when
    /// `dual_residual` is small.
    pub dual_objective: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    /// Wall time in seconds.
    pub runtime: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Zero,
    Nonneg,
}

/// Solves `p`. Errors only on malformed programs; solver failures are reported
/// through [`SolveOutcome::status`].
pub fn solve(p: &ConeProgram, opts: &SolverOptions) -> Result<SolveOutcome> {
    p.validate()?;
    let start = Instant::now();
    let n = p.n_vars;

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut pending: Option<(RowKind, usize)> = None;

    let flush = |pending: &mut Option<(RowKind, usize)>, cones: &mut Vec<SupportedConeT<f64>>| {
        if let Some((kind, count)) = pending.take() {
            cones.push(match kind {
                RowKind::Zero => SupportedConeT::ZeroConeT(count),
                RowKind::Nonneg => SupportedConeT::NonnegativeConeT(count),
            });
        }
    };

    // each row r encodes s_r = b_r − (A x)_r, and `expr = c·x + k` gives A = −c, b = k
    let mut emit = |expr: &crate::socp::AffineExpr, sign: f64, b: &mut Vec<f64>| {
        let row = b.len();
        for &(var, coef) in &expr.terms {
            rows.push(row);
            cols.push(var);
            vals.push(-sign * coef);
        }
        b.push(sign * expr.constant);
    };

    for c in &p.constraints {
        match &c.cone {
            Cone::NonPositive(e) | Cone::Zero(e) => {
                let kind = if matches!(c.cone, Cone::Zero(_)) {
                    RowKind::Zero
                } else {
                    RowKind::Nonneg
                };
                match &mut pending {
                    Some((k, count)) if *k == kind => *count += 1,
                    _ => {
                        flush(&mut pending, &mut cones);
                        pending = Some((kind, 1));
                    }
                }
                // expr ≤ 0  ⇔  −expr ≥ 0
                emit(e, -1.0, &mut b);
            }
            Cone::SecondOrder { bound, vector } => {
                flush(&mut pending, &mut cones);
                emit(bound, 1.0, &mut b);
                for v in vector {
                    emit(v, 1.0, &mut b);
                }
                cones.push(SupportedConeT::SecondOrderConeT(vector.len() + 1));
            }
        }
    }
    flush(&mut pending, &mut cones);

    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let pmat = CscMatrix::zeros((n, n));
    let run = |tol: f64, reduced: f64| -> Result<(SolverStatus, Vec<f64>, u32, f64, f64)> {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(opts.max_iters)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .reduced_tol_feas(reduced)
            .reduced_tol_gap_abs(reduced)
            .reduced_tol_gap_rel(reduced)
            .build()
            .map_err(|e| Error::MalformedProgram(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&pmat, &p.objective, &a, &b, &cones, settings)
            .map_err(|e| Error::MalformedProgram(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        Ok((sol.status, sol.x.clone(), sol.iterations, sol.obj_val_dual, sol.r_dual))
    };

    let tight = opts.tol_feas.min(opts.tol_gap);
    let accept = opts.tol_accept.max(tight);
    let (mut raw, mut x, mut iterations, mut dual_objective, mut dual_residual) = run(tight, accept)?;
    // a stalled solve is retried with tolerances loosened tenfold per attempt,
    // down to the acceptance tolerance
    let mut tol = tight;
    while matches!(
        raw,
        SolverStatus::InsufficientProgress | SolverStatus::NumericalError
    ) && tol < accept
    {
        tol = (tol * 10.0).min(accept);
        let retry = run(tol, accept)?;
        (raw, x, dual_objective, dual_residual) = (retry.0, retry.1, retry.3, retry.4);
        iterations += retry.2;
    }
    let status = match raw {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalTrouble,
    };
    Ok(SolveOutcome {
        status,
        objective: p.objective_value(&x),
        dual_objective,
        dual_residual,
        x,
        iterations,
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::{AffineExpr, Tag};

    #[test]
    fn one_dimensional_cone() {
        // minimize x s.t. ‖x‖ ≤ 1
        let mut p = ConeProgram::new(1);
        p.objective[0] = 1.0;
        p.push(
            Tag::Other,
            Cone::SecondOrder {
                bound: AffineExpr::constant(1.0),
                vector: vec![AffineExpr::var(0)],
            },
        );
        let out = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.x[0] + 1.0).abs() < 1e-7, "{}", out.x[0]);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x ≤ 0 and x ≥ 1
        let mut p = ConeProgram::new(1);
        p.objective[0] = 1.0;
        p.push(Tag::Other, Cone::NonPositive(AffineExpr::var(0)));
        p.push(
            Tag::Other,
            Cone::NonPositive(AffineExpr::constant(1.0).term(0, -1.0)),
        );
        let out = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_rows() {
        // minimize x + y s.t. x − y = 1, ‖(x, y)‖ ≤ 2 → optimum x + y = −√7
        let mut p = ConeProgram::new(2);
        p.objective = vec![1.0, 1.0];
        p.push(
            Tag::Other,
            Cone::Zero(AffineExpr {
                terms: vec![(0, 1.0), (1, -1.0)],
                constant: -1.0,
            }),
        );
        p.push(
            Tag::Other,
            Cone::SecondOrder {
                bound: AffineExpr::constant(2.0),
                vector: vec![AffineExpr::var(0), AffineExpr::var(1)],
            },
        );
        let out = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 7f64.sqrt()).abs() < 1e-6, "{}", out.objective);
        assert!(p.max_violation(&out.x) < 1e-7);
    }

    #[test]
    fn deterministic() {
        let mut p = ConeProgram::new(3);
        p.objective = vec![1.0, -0.5, 0.25];
        p.push(
            Tag::Other,
            Cone::SecondOrder {
                bound: AffineExpr::constant(1.0).term(2, 0.1),
                vector: vec![AffineExpr::var(0), AffineExpr::var(1), AffineExpr::var(2)],
            },
        );
        let a = solve(&p, &SolverOptions::default()).unwrap();
        let b = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn malformed_program_is_an_error() {
        let mut p = ConeProgram::new(1);
        p.push(Tag::Other, Cone::NonPositive(AffineExpr::var(5)));
        assert!(matches!(
            solve(&p, &SolverOptions::default()),
            Err(Error::MalformedProgram(_))
        ));
    }
}
