//! Elastic part of the incremental problem: minimization over nodal
//! positions with the phase field held fixed.
//!
//! Positions are stored flat as `[y0_x, y0_y, y1_x, ...]`. The reduced
//! unknowns are the coordinates of free nodes (and periodic masters); every
//! periodic slave sits at its master's position shifted by `(0, 1)`.

pub mod lbfgs;
mod precond;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Inadmissible, Result};
use crate::material::{edge_stretch, variant_energy_and_stress, MaterialParams, Variant};
use crate::mesh::{Mesh2D, NodeKind, NodeSets, DOMAIN_HEIGHT};

pub use lbfgs::{LbfgsOptions, LbfgsStatus};
pub use precond::StiffnessPreconditioner;

pub const PERIODIC_OFFSET: Vector2<f64> = Vector2::new(0.0, DOMAIN_HEIGHT);

#[derive(Debug, Clone, Copy)]
pub struct ElasticObjective<'a> {
    pub mesh: &'a Mesh2D,
    pub sets: &'a NodeSets,
    pub params: &'a MaterialParams,
    pub z: &'a [u8],
    /// Include the `alpha_s |F t|` edge term, the only interfacial part that
    /// depends on the deformation.
    pub include_alpha_s: bool,
    pub preconditioner: Option<&'a StiffnessPreconditioner>,
}

#[derive(Debug, Clone)]
pub struct ElasticResult {
    pub positions: Vec<f64>,
    pub energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
    pub history: Vec<f64>,
}

impl<'a> ElasticObjective<'a> {
    pub fn new(
        mesh: &'a Mesh2D,
        sets: &'a NodeSets,
        params: &'a MaterialParams,
        z: &'a [u8],
    ) -> Self {
        ElasticObjective {
            mesh,
            sets,
            params,
            z,
            include_alpha_s: params.alpha_s > 0.0,
            preconditioner: None,
        }
    }

    /// Bulk energy plus (optionally) the deformed-interface term, with the
    /// gradient with respect to every nodal coordinate.
    pub fn energy_and_full_gradient(&self, y: &[f64]) -> Result<(f64, Vec<f64>), Inadmissible> {
        let mesh = self.mesh;
        let mut grad = vec![0.0; y.len()];
        let mut energy = 0.0;
        let scatter = |tri: usize, piola: Matrix2<f64>, grad: &mut [f64]| {
            let h = piola * mesh.reference_inverse(tri).transpose();
            let [a, b, c] = mesh.triangles()[tri];
            for (node, col) in [(b, 0), (c, 1)] {
                grad[2 * node] += h[(0, col)];
                grad[2 * node + 1] += h[(1, col)];
            }
            grad[2 * a] -= h[(0, 0)] + h[(0, 1)];
            grad[2 * a + 1] -= h[(1, 0)] + h[(1, 1)];
        };
        for (tri, &area) in mesh.triangle_areas().iter().enumerate() {
            let f = mesh.deformation_gradient(tri, y);
            let (w, p) =
                variant_energy_and_stress(&f, Variant::from_phase(self.z[tri]), self.params)?;
            energy += w * area;
            scatter(tri, p * area, &mut grad);
        }
        if self.include_alpha_s {
            for e in mesh.interior_edges() {
                if self.z[e.plus] == self.z[e.minus] {
                    continue;
                }
                let f = mesh.deformation_gradient(e.plus, y);
                let ft = f * e.tangent;
                let stretch = edge_stretch(&f, &e.tangent);
                let coeff = self.params.alpha_s * e.length;
                energy += coeff * stretch;
                scatter(
                    e.plus,
                    coeff / stretch * ft * e.tangent.transpose(),
                    &mut grad,
                );
            }
        }
        Ok((energy, grad))
    }

    pub fn energy(&self, y: &[f64]) -> Result<f64, Inadmissible> {
        self.energy_and_full_gradient(y).map(|(e, _)| e)
    }

    /// Energy and reduced gradient (free and master coordinates only).
    pub fn evaluate(&self, y: &[f64]) -> Result<(f64, Vec<f64>), Inadmissible> {
        let (e, g) = self.energy_and_full_gradient(y)?;
        Ok((e, self.reduce_gradient(&g)))
    }

    pub fn num_unknowns(&self) -> usize {
        2 * self.sets.free.len()
    }

    pub fn reduce(&self, y: &[f64]) -> Vec<f64> {
        self.sets
            .free
            .iter()
            .flat_map(|&n| [y[2 * n], y[2 * n + 1]])
            .collect()
    }

    pub fn reduce_gradient(&self, g: &[f64]) -> Vec<f64> {
        let mut out = self.reduce(g);
        if !self.sets.periodic.is_empty() {
            let mut slot = vec![usize::MAX; self.mesh.num_nodes()];
            for (k, &n) in self.sets.free.iter().enumerate() {
                slot[n] = k;
            }
            for &(master, slave) in &self.sets.periodic {
                let k = slot[master];
                out[2 * k] += g[2 * slave];
                out[2 * k + 1] += g[2 * slave + 1];
            }
        }
        out
    }

    /// Writes reduced unknowns into `y` and refreshes periodic slaves.
    pub fn expand_into(&self, x: &[f64], y: &mut [f64]) {
        for (k, &n) in self.sets.free.iter().enumerate() {
            y[2 * n] = x[2 * k];
            y[2 * n + 1] = x[2 * k + 1];
        }
        enforce_periodicity(self.sets, y);
    }

    /// Local minimization from `initial`, which must satisfy the constraints.
    pub fn minimize(&self, initial: &[f64], opts: &LbfgsOptions) -> Result<ElasticResult> {
        let mut work = initial.to_vec();
        let x0 = self.reduce(initial);
        let objective = |x: &[f64]| {
            let mut y = work.clone();
            self.expand_into(x, &mut y);
            self.evaluate(&y).ok()
        };
        let apply = |r: &[f64]| {
            self.preconditioner
                .map(|p| p.apply(r))
                .unwrap_or_else(|| r.to_vec())
        };
        let precond: Option<&dyn Fn(&[f64]) -> Vec<f64>> = self.preconditioner.map(|_| &apply as _);
        let run =
            lbfgs::minimize_preconditioned(objective, x0, opts, precond).ok_or_else(|| {
                self.energy(initial)
                    .err()
                    .map(Error::from)
                    .unwrap_or_else(|| Error::Contract("initial state rejected".into()))
            })?;
        self.expand_into(&run.x, &mut work);
        Ok(ElasticResult {
            positions: work,
            energy: run.value,
            gradient_norm: run.gradient_norm,
            iterations: run.iterations,
            status: run.status,
            history: run.history,
        })
    }
}

pub fn enforce_periodicity(sets: &NodeSets, y: &mut [f64]) {
    for &(master, slave) in &sets.periodic {
        y[2 * slave] = y[2 * master] + PERIODIC_OFFSET.x;
        y[2 * slave + 1] = y[2 * master + 1] + PERIODIC_OFFSET.y;
    }
}

/// Smallest triangle Jacobian determinant.
pub fn min_det(mesh: &Mesh2D, y: &[f64]) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| mesh.deformation_gradient(t, y).determinant())
        .fold(f64::INFINITY, f64::min)
}

/// True when constrained coordinates of `y` agree with `target` and slaves
/// mirror their masters.
pub fn satisfies_constraints(sets: &NodeSets, y: &[f64], target: &[f64], tol: f64) -> bool {
    sets.kinds.iter().enumerate().all(|(n, kind)| match *kind {
        NodeKind::Free => true,
        NodeKind::Dirichlet => {
            (y[2 * n] - target[2 * n]).abs() <= tol
                && (y[2 * n + 1] - target[2 * n + 1]).abs() <= tol
        }
        NodeKind::Periodic { master } => {
            (y[2 * n] - y[2 * master] - PERIODIC_OFFSET.x).abs() <= tol
                && (y[2 * n + 1] - y[2 * master + 1] - PERIODIC_OFFSET.y).abs() <= tol
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Coefficients;
    use crate::mesh::{build_structured_mesh, classify_layout, BoundaryLayout};

    fn affine(mesh: &Mesh2D, a: Matrix2<f64>) -> Vec<f64> {
        mesh.nodes()
            .iter()
            .flat_map(|p| {
                let q = a * p;
                [q.x, q.y]
            })
            .collect()
    }

    #[test]
    fn identity_energy_for_variant_two() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        let params = MaterialParams::default();
        let z = vec![0; mesh.num_triangles()];
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let e = obj.energy(&mesh.reference_positions()).unwrap();
        assert!((e - 6.18).abs() < 1e-12, "{e}");
    }

    #[test]
    fn well_is_stationary() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        let params = MaterialParams::default();
        let z = vec![1; mesh.num_triangles()];
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let y = affine(&mesh, *params.stretch(Variant::One));
        let (e, g) = obj.evaluate(&y).unwrap();
        assert!((e - 6.0).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn inverted_triangle_is_inadmissible() {
        let mesh = build_structured_mesh(2, 1).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        let params = MaterialParams::default();
        let z = vec![0; 4];
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let mut y = mesh.reference_positions();
        // push the middle bottom node above the top edge
        y[3] = 1.5;
        assert!(obj.energy(&y).is_err());
    }

    #[test]
    fn fully_clamped_mesh_is_returned_unchanged() {
        let mesh = build_structured_mesh(1, 1).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        assert!(sets.free.is_empty());
        let params = MaterialParams::default();
        let z = vec![1, 0];
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let y = affine(&mesh, Matrix2::new(1.1, 0.1, 0.0, 0.95));
        let r = obj.minimize(&y, &LbfgsOptions::default()).unwrap();
        assert_eq!(r.positions, y);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    #[test]
    fn relaxes_to_the_variant_one_well() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        let params = MaterialParams::default();
        let z = vec![1; mesh.num_triangles()];
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let target = affine(&mesh, *params.stretch(Variant::One));
        // the identity interior would invert the boundary layer
        let mut y = affine(&mesh, Matrix2::new(1.0, 0.75 * params.epsilon, 0.0, 1.0));
        for &n in &sets.dirichlet {
            y[2 * n] = target[2 * n];
            y[2 * n + 1] = target[2 * n + 1];
        }
        let opts = LbfgsOptions {
            gradient_tol: 1e-10,
            ..Default::default()
        };
        let r = obj.minimize(&y, &opts).unwrap();
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!((r.energy - 6.0).abs() < 1e-10);
        let err = r
            .positions
            .iter()
            .zip(&target)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8, "max deviation {err}");
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn near_well_start_converges_quickly() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::Clamped);
        let params = MaterialParams::default();
        let z = vec![1; mesh.num_triangles()];
        let pc = StiffnessPreconditioner::new(&mesh, &sets, &params).unwrap();
        let obj = ElasticObjective {
            preconditioner: Some(&pc),
            ..ElasticObjective::new(&mesh, &sets, &params, &z)
        };
        let mut y = affine(&mesh, *params.stretch(Variant::One));
        for (k, &n) in sets.free.iter().enumerate() {
            y[2 * n] += 1e-3 * ((k as f64) * 0.37).sin();
            y[2 * n + 1] += 1e-3 * ((k as f64) * 0.91).cos();
        }
        let opts = LbfgsOptions {
            gradient_tol: 1e-8,
            ..Default::default()
        };
        let r = obj.minimize(&y, &opts).unwrap();
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!(r.iterations <= 50, "{} iterations", r.iterations);
    }

    #[test]
    fn periodic_translation_equivariance() {
        let mesh = build_structured_mesh(6, 4).unwrap();
        let sets = classify_layout(&mesh, BoundaryLayout::PeriodicShear);
        let params = MaterialParams::new(Coefficients {
            alpha_s: 0.05,
            ..Default::default()
        })
        .unwrap();
        let z: Vec<u8> = (0..mesh.num_triangles())
            .map(|t| (mesh.triangle_layer(t) % 2) as u8)
            .collect();
        let obj = ElasticObjective::new(&mesh, &sets, &params, &z);
        let mut y = mesh.reference_positions();
        for &n in &sets.dirichlet {
            let x1 = mesh.nodes()[n].x;
            y[2 * n + 1] += 0.2 * x1;
        }
        let opts = LbfgsOptions {
            gradient_tol: 1e-10,
            ..Default::default()
        };
        let a = obj.minimize(&y, &opts).unwrap();
        let shift = Vector2::new(0.3, -0.7);
        let moved: Vec<f64> = y
            .chunks(2)
            .flat_map(|p| [p[0] + shift.x, p[1] + shift.y])
            .collect();
        let b = obj.minimize(&moved, &opts).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-10);
        for (p, q) in a.positions.chunks(2).zip(b.positions.chunks(2)) {
            assert!((q[0] - p[0] - shift.x).abs() < 1e-6 && (q[1] - p[1] - shift.y).abs() < 1e-6);
        }
        assert!(satisfies_constraints(&sets, &a.positions, &y, 1e-15));
    }
}
