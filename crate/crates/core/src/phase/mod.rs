//! Exact minimization over the binary phase field for a fixed deformation.
//!
//! With the dissipation linearized around the previous phase field, the
//! phase-dependent part of the incremental functional is
//!
//! ```text
//! sum_T u_T z_T + sum_E w_E |z_plus - z_minus|
//! u_T = (W1(F_T) - W2(F_T) + beta s(z_prev_T)) |T|
//! w_E = (alpha_i + alpha_s |F t|) |E|
//! ```
//!
//! which is a submodular binary energy whenever every `w_E >= 0`.

mod lp;
mod maxflow;
mod strategies;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

pub use lp::{lp_relaxation_check, solve_lp_relaxation, LpReport, LpSolution};
pub use maxflow::FlowGraph;
pub use strategies::{
    solve_coupled, solve_decoupled, AutoSolver, DecoupledSolver, ExhaustiveSolver, LpSolver,
    MinCutSolver,
};

use crate::error::{Error, Inadmissible, Result};
use crate::material::{dissipation_sign, edge_stretch, variant_density, MaterialParams, Variant};
use crate::mesh::Mesh2D;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProblem {
    pub unary: Vec<f64>,
    /// `(plus, minus)` triangle pairs.
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub z_prev: Vec<u8>,
}

impl PhaseProblem {
    pub fn new(
        unary: Vec<f64>,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        z_prev: Vec<u8>,
    ) -> Self {
        debug_assert_eq!(edges.len(), weights.len());
        debug_assert_eq!(unary.len(), z_prev.len());
        PhaseProblem {
            unary,
            edges,
            weights,
            z_prev,
        }
    }

    /// Builds the problem for deformation `y`. When `with_dissipation` is
    /// false the `beta` term is dropped (used for the initial relaxation).
    pub fn assemble(
        mesh: &Mesh2D,
        y: &[f64],
        z_prev: &[u8],
        params: &MaterialParams,
        with_dissipation: bool,
    ) -> Result<Self, Inadmissible> {
        let beta = if with_dissipation { params.beta } else { 0.0 };
        let mut unary = Vec::with_capacity(mesh.num_triangles());
        for (t, &area) in mesh.triangle_areas().iter().enumerate() {
            let f = mesh.deformation_gradient(t, y);
            let w12 = variant_density(&f, Variant::One, params)?
                - variant_density(&f, Variant::Two, params)?;
            unary.push((w12 + beta * dissipation_sign(z_prev[t])) * area);
        }
        let mut edges = Vec::with_capacity(mesh.interior_edges().len());
        let mut weights = Vec::with_capacity(mesh.interior_edges().len());
        for e in mesh.interior_edges() {
            edges.push((e.plus, e.minus));
            let mut coeff = params.alpha_i;
            if params.alpha_s > 0.0 {
                coeff += params.alpha_s
                    * edge_stretch(&mesh.deformation_gradient(e.plus, y), &e.tangent);
            }
            weights.push(coeff * e.length);
        }
        Ok(PhaseProblem::new(unary, edges, weights, z_prev.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    pub fn is_decoupled(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn objective(&self, z: &[u8]) -> f64 {
        let unary: f64 = self
            .unary
            .iter()
            .zip(z)
            .map(|(u, &zt)| if zt == 1 { *u } else { 0.0 })
            .sum();
        let pair: f64 = self
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(&(p, m), w)| if z[p] != z[m] { *w } else { 0.0 })
            .sum();
        unary + pair
    }

    /// Plain-text dump: triangle table `id u z_prev` then edge table `plus minus w`.
    pub fn dump(&self, z: Option<&[u8]>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "triangles {}", self.len());
        for (t, u) in self.unary.iter().enumerate() {
            match z {
                Some(z) => {
                    let _ = writeln!(out, "{t} {u} {} {}", self.z_prev[t], z[t]);
                }
                None => {
                    let _ = writeln!(out, "{t} {u} {}", self.z_prev[t]);
                }
            }
        }
        let _ = writeln!(out, "edges {}", self.edges.len());
        for (&(p, m), w) in self.edges.iter().zip(&self.weights) {
            let _ = writeln!(out, "{p} {m} {w}");
        }
        out
    }

    pub(crate) fn check_weights(&self) -> Result<()> {
        match self.weights.iter().position(|w| !(*w >= 0.0)) {
            Some(edge) => Err(Error::NegativeWeight {
                edge,
                weight: self.weights[edge],
            }),
            None => Ok(()),
        }
    }
}

/// A method for minimizing a [`PhaseProblem`] over binary phase fields.
pub trait PhaseSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, problem: &PhaseProblem) -> Result<Vec<u8>>;
}

/// Phase solvers addressable by name.
#[derive(Clone)]
pub struct PhaseSolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn PhaseSolver>>,
}

impl Default for PhaseSolverRegistry {
    fn default() -> Self {
        let mut reg = PhaseSolverRegistry {
            solvers: BTreeMap::new(),
        };
        reg.register(Arc::new(AutoSolver));
        reg.register(Arc::new(DecoupledSolver));
        reg.register(Arc::new(MinCutSolver));
        reg.register(Arc::new(LpSolver));
        reg.register(Arc::new(ExhaustiveSolver::default()));
        reg
    }
}

impl PhaseSolverRegistry {
    pub fn register(&mut self, solver: Arc<dyn PhaseSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PhaseSolver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownPhaseSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }
}

/// Builds a solver from the default registry.
pub fn phase_solver(name: &str) -> Result<Arc<dyn PhaseSolver>> {
    PhaseSolverRegistry::default().get(name)
}
