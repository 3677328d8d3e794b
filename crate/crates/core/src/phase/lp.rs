//! Linear-programming relaxation of the phase problem.
//!
//! Each edge gets a slack `sigma_E in [0, 1]` with
//! `z_plus - z_minus - sigma_E <= 0` and `z_minus - z_plus - sigma_E <= 0`,
//! and the objective `sum u z + sum w sigma` is minimized over `z in [0, 1]`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::PhaseProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub z: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn solve_lp_relaxation(problem: &PhaseProblem) -> Result<LpSolution> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let z: Vec<_> = problem
        .unary
        .iter()
        .map(|&u| lp.add_var(u, (0.0, 1.0)))
        .collect();
    let sigma: Vec<_> = problem
        .weights
        .iter()
        .map(|&w| lp.add_var(w, (0.0, 1.0)))
        .collect();
    for (&(p, m), &s) in problem.edges.iter().zip(&sigma) {
        lp.add_constraint(
            [(z[p], 1.0), (z[m], -1.0), (s, -1.0)],
            ComparisonOp::Le,
            0.0,
        );
        lp.add_constraint(
            [(z[m], 1.0), (z[p], -1.0), (s, -1.0)],
            ComparisonOp::Le,
            0.0,
        );
    }
    let outcome = lp.solve().map_err(|e| Error::Lp(format!("{e:?}")))?;
    let sol = outcome
        .into_solution()
        .map_err(|e| Error::Lp(format!("interrupted: {:?}", e.termination_reason())))?;
    Ok(LpSolution {
        value: sol.objective(),
        z: z.iter().map(|&v| sol.var_value(v)).collect(),
        sigma: sigma.iter().map(|&v| sol.var_value(v)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpReport {
    pub lp_value: f64,
    pub candidate_value: f64,
    /// `candidate_value - lp_value`; nonnegative up to round-off.
    pub gap: f64,
    /// Whether every `z` entry of the LP optimum is within 1e-9 of 0 or 1.
    pub integral: bool,
    /// Largest `|sigma_E - |z_plus - z_minus||` over edges with positive weight.
    pub sigma_residual: f64,
}

impl LpReport {
    pub fn certifies(&self, tol: f64) -> bool {
        self.gap.abs() <= tol
    }
}

/// Compares the binary candidate `z` against the relaxation optimum.
pub fn lp_relaxation_check(problem: &PhaseProblem, z: &[u8]) -> Result<LpReport> {
    problem.check_weights()?;
    let sol = solve_lp_relaxation(problem)?;
    let candidate_value = problem.objective(z);
    let integral = sol.z.iter().all(|&v| v.min(1.0 - v).abs() <= 1e-9);
    let sigma_residual = problem
        .edges
        .iter()
        .zip(&problem.weights)
        .zip(&sol.sigma)
        .filter(|((_, &w), _)| w > 0.0)
        .map(|((&(p, m), _), &s)| (s - (sol.z[p] - sol.z[m]).abs()).abs())
        .fold(0.0, f64::max);
    Ok(LpReport {
        lp_value: sol.value,
        candidate_value,
        gap: candidate_value - sol.value,
        integral,
        sigma_residual,
    })
}
