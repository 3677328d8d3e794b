//! Initial inverse-Hessian model for the quasi-Newton iteration.
//!
//! The base density linearized at the identity is
//! `2 alpha |sym H|^2 + 2 delta1 (tr H)^2`, an isotropic linear-elastic form.
//! Its P1 stiffness on the reduced unknowns is factored once and applied as
//! `H0 = K^-1` in the two-loop recursion.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::material::MaterialParams;
use crate::mesh::{Mesh2D, NodeKind, NodeSets};

#[derive(Debug, Clone)]
pub struct StiffnessPreconditioner {
    factor: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

fn quadratic_form(h: &Matrix2<f64>, p: &MaterialParams) -> f64 {
    let sym = 0.5 * (h + h.transpose());
    2.0 * p.alpha * sym.norm_squared() + 2.0 * p.delta1 * h.trace().powi(2)
}

impl StiffnessPreconditioner {
    /// Returns `None` when there are no unknowns or the stiffness is singular
    /// (no constraint removes the rigid motions).
    pub fn new(mesh: &Mesh2D, sets: &NodeSets, params: &MaterialParams) -> Option<Self> {
        let n = 2 * sets.free.len();
        if n == 0 {
            return None;
        }
        let mut slot = vec![None; mesh.num_nodes()];
        for (k, &node) in sets.free.iter().enumerate() {
            slot[node] = Some(k);
        }
        for (node, kind) in sets.kinds.iter().enumerate() {
            if let NodeKind::Periodic { master } = *kind {
                slot[node] = slot[master];
            }
        }
        let mut k_mat = DMatrix::<f64>::zeros(n, n);
        for (tri, nodes) in mesh.triangles().iter().enumerate() {
            let area = mesh.triangle_areas()[tri];
            let inv = mesh.reference_inverse(tri);
            // gradient of a unit displacement of local dof (node, comp)
            let unit = |local: usize| {
                let (node, comp) = (local / 2, local % 2);
                let mut ds = Matrix2::zeros();
                match node {
                    0 => {
                        ds[(comp, 0)] = -1.0;
                        ds[(comp, 1)] = -1.0;
                    }
                    1 => ds[(comp, 0)] = 1.0,
                    _ => ds[(comp, 1)] = 1.0,
                }
                ds * inv
            };
            let hs: Vec<Matrix2<f64>> = (0..6).map(unit).collect();
            for i in 0..6 {
                let Some(gi) = slot[nodes[i / 2]].map(|s| 2 * s + i % 2) else {
                    continue;
                };
                for j in 0..6 {
                    let Some(gj) = slot[nodes[j / 2]].map(|s| 2 * s + j % 2) else {
                        continue;
                    };
                    let b = quadratic_form(&(hs[i] + hs[j]), params)
                        - quadratic_form(&hs[i], params)
                        - quadratic_form(&hs[j], params);
                    k_mat[(gi, gj)] += area * b;
                }
            }
        }
        k_mat
            .cholesky()
            .map(|factor| StiffnessPreconditioner { factor })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let v = self.factor.solve(&DVector::from_column_slice(r));
        v.as_slice().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, classify_layout, BoundaryLayout};

    #[test]
    fn factors_for_both_layouts() {
        let mesh = build_structured_mesh(8, 4).unwrap();
        let params = MaterialParams::default();
        for layout in [BoundaryLayout::Clamped, BoundaryLayout::PeriodicShear] {
            let sets = classify_layout(&mesh, layout);
            let pc = StiffnessPreconditioner::new(&mesh, &sets, &params).unwrap();
            let r = vec![1.0; 2 * sets.free.len()];
            let x = pc.apply(&r);
            assert!(x.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn none_without_unknowns() {
        let mesh = build_structured_mesh(1, 1).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        assert!(StiffnessPreconditioner::new(&mesh, &sets, &MaterialParams::default()).is_none());
    }
}
