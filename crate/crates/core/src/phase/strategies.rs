use super::maxflow::FlowGraph;
use super::{solve_lp_relaxation, PhaseProblem, PhaseSolver};
use crate::error::{Error, Result};

/// Closed-form minimizer when no edge couples the triangles: `z = 0` where
/// `u > 0`, `z = 1` where `u < 0`, and the previous value on ties.
pub fn solve_decoupled(problem: &PhaseProblem) -> Result<Vec<u8>> {
    if !problem.is_decoupled() {
        return Err(Error::UseCoupledSolver);
    }
    Ok(problem
        .unary
        .iter()
        .zip(&problem.z_prev)
        .map(|(&u, &zp)| {
            if u > 0.0 {
                0
            } else if u < 0.0 {
                1
            } else {
                zp
            }
        })
        .collect())
}

/// Global minimizer through a minimum s-t cut.
///
/// Triangles on the source side get `z = 0`. Among all minimum cuts the one
/// returned keeps every undetermined triangle whose previous value was 0 on
/// the source side, together with whatever the residual graph forces along.
pub fn solve_coupled(problem: &PhaseProblem) -> Result<Vec<u8>> {
    problem.check_weights()?;
    let n = problem.len();
    let (s, t) = (n, n + 1);
    let scale = problem
        .unary
        .iter()
        .chain(&problem.weights)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut g = FlowGraph::new(n + 2, 1e-13 * scale.max(f64::MIN_POSITIVE));
    for (v, &u) in problem.unary.iter().enumerate() {
        // cutting s -> v puts v on the sink side (z = 1) and costs u
        if u > 0.0 {
            g.add_edge(s, v, u, 0.0);
        } else if u < 0.0 {
            g.add_edge(v, t, -u, 0.0);
        }
    }
    for (&(p, m), &w) in problem.edges.iter().zip(&problem.weights) {
        if w > 0.0 {
            g.add_edge(p, m, w, w);
        }
    }
    g.max_flow(s, t);

    let mut source_side = g.reachable_from(s);
    let reaches_sink = g.reaching(t);
    let keep_zero: Vec<usize> = (0..n)
        .filter(|&v| !source_side[v] && !reaches_sink[v] && problem.z_prev[v] == 0)
        .collect();
    g.close(&mut source_side, keep_zero);
    debug_assert!(!source_side[t]);
    Ok((0..n).map(|v| u8::from(!source_side[v])).collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecoupledSolver;

impl PhaseSolver for DecoupledSolver {
    fn name(&self) -> &'static str {
        "decoupled"
    }

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>> {
        solve_decoupled(problem)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MinCutSolver;

impl PhaseSolver for MinCutSolver {
    fn name(&self) -> &'static str {
        "mincut"
    }

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>> {
        solve_coupled(problem)
    }
}

/// Closed form when all edge weights vanish, min-cut otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoSolver;

impl PhaseSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>> {
        if problem.is_decoupled() {
            solve_decoupled(problem)
        } else {
            solve_coupled(problem)
        }
    }
}

/// Solves the relaxation over `[0, 1]` and rounds the vertex it lands on.
#[derive(Debug, Clone, Copy, Default)]
pub struct LpSolver;

impl PhaseSolver for LpSolver {
    fn name(&self) -> &'static str {
        "lp"
    }

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>> {
        problem.check_weights()?;
        let sol = solve_lp_relaxation(problem)?;
        Ok(sol.z.iter().map(|&v| u8::from(v > 0.5)).collect())
    }
}

/// Enumerates all assignments. Ties go to the assignment closest to the
/// previous field, then to the lexicographically smallest one.
#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveSolver {
    pub max_triangles: usize,
}

impl Default for ExhaustiveSolver {
    fn default() -> Self {
        ExhaustiveSolver { max_triangles: 22 }
    }
}

impl PhaseSolver for ExhaustiveSolver {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>> {
        let n = problem.len();
        if n > self.max_triangles {
            return Err(Error::InvalidParameter(format!(
                "exhaustive phase search limited to {} triangles, got {n}",
                self.max_triangles
            )));
        }
        let mut z = vec![0u8; n];
        let mut best: Option<(f64, usize, Vec<u8>)> = None;
        for mask in 0u64..(1u64 << n) {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = ((mask >> i) & 1) as u8;
            }
            let value = problem.objective(&z);
            let flips = z
                .iter()
                .zip(&problem.z_prev)
                .filter(|(a, b)| a != b)
                .count();
            let better = match &best {
                None => true,
                Some((bv, bf, _)) => value < *bv || (value == *bv && flips < *bf),
            };
            if better {
                best = Some((value, flips, z.clone()));
            }
        }
        Ok(best.map(|b| b.2).unwrap_or_default())
    }
}
