//! Structured triangulation of the rectangle `(0, 2) x (0, 1)`.
//!
//! Every grid rectangle is split by its lower-left to upper-right diagonal
//! into a lower-right triangle `(a, b, c)` and an upper-left triangle
//! `(a, c, d)`, both counterclockwise. Triangle `2 * (j * nx + i) + s`
//! belongs to cell `(i, j)`, so triangles of layer `j` are contiguous.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub const DOMAIN_WIDTH: f64 = 2.0;
pub const DOMAIN_HEIGHT: f64 = 1.0;

/// An edge shared by two triangles.
///
/// `normal` is the outer unit normal of `plus` (it points into `minus`);
/// `tangent` runs from `nodes[0]` to `nodes[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub nodes: [usize; 2],
    pub plus: usize,
    pub minus: usize,
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    nx: usize,
    ny: usize,
    nodes: Vec<Vector2<f64>>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    /// Inverse of the reference edge matrix `[X1 - X0, X2 - X0]`, per triangle.
    ref_inv: Vec<Matrix2<f64>>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edge_count: usize,
}

impl Mesh2D {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn reference_inverse(&self, tri: usize) -> &Matrix2<f64> {
        &self.ref_inv[tri]
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn num_edges(&self) -> usize {
        self.interior_edges.len() + self.boundary_edge_count
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Grid index of node `(i, j)`, `0 <= i <= nx`, `0 <= j <= ny`.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid position `(i, j)` of a node.
    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    /// Horizontal layer (cell row) containing a triangle.
    pub fn triangle_layer(&self, tri: usize) -> usize {
        tri / (2 * self.nx)
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_grid(node);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Deformation gradient of `tri` for the nodal positions `y` (length `2 * num_nodes`).
    pub fn deformation_gradient(&self, tri: usize, y: &[f64]) -> Matrix2<f64> {
        let [a, b, c] = self.triangles[tri];
        let pa = Vector2::new(y[2 * a], y[2 * a + 1]);
        let e1 = Vector2::new(y[2 * b], y[2 * b + 1]) - pa;
        let e2 = Vector2::new(y[2 * c], y[2 * c + 1]) - pa;
        Matrix2::from_columns(&[e1, e2]) * self.ref_inv[tri]
    }

    /// Reference positions flattened as `[x0, y0, x1, y1, ...]`.
    pub fn reference_positions(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Node table `id x1 x2`, one node per line.
    pub fn node_table(&self) -> String {
        let mut out = String::new();
        for (id, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{id} {} {}", p.x, p.y);
        }
        out
    }

    /// Triangle table `id n1 n2 n3`, one triangle per line.
    pub fn triangle_table(&self) -> String {
        let mut out = String::new();
        for (id, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "{id} {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Builds the `nx` by `ny` structured mesh of `(0, 2) x (0, 1)`.
pub fn build_structured_mesh(nx: usize, ny: usize) -> Result<Mesh2D> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!(
            "cell counts must be positive, got nx = {nx}, ny = {ny}"
        )));
    }
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Vector2::new(
                DOMAIN_WIDTH * i as f64 / nx as f64,
                DOMAIN_HEIGHT * j as f64 / ny as f64,
            ));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut areas = Vec::with_capacity(triangles.len());
    let mut ref_inv = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let e1 = nodes[tri[1]] - nodes[tri[0]];
        let e2 = nodes[tri[2]] - nodes[tri[0]];
        let dm = Matrix2::from_columns(&[e1, e2]);
        let det = dm.determinant();
        if det <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "triangle {t} is not counterclockwise"
            )));
        }
        areas.push(0.5 * det);
        ref_inv.push(dm.try_inverse().expect("nonsingular reference triangle"));
    }

    let mut owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (p, q) = (tri[k], tri[(k + 1) % 3]);
            owners.entry((p.min(q), p.max(q))).or_default().push(t);
        }
    }
    let centroid = |t: usize| {
        let [a, b, c] = triangles[t];
        (nodes[a] + nodes[b] + nodes[c]) / 3.0
    };
    let mut interior_edges = Vec::new();
    let mut boundary_edge_count = 0;
    for ((p, q), tris) in owners {
        match tris.as_slice() {
            [_] => boundary_edge_count += 1,
            &[plus, minus] => {
                let d = nodes[q] - nodes[p];
                let length = d.norm();
                let tangent = d / length;
                let mut normal = Vector2::new(tangent.y, -tangent.x);
                if normal.dot(&(centroid(minus) - centroid(plus))) < 0.0 {
                    normal = -normal;
                }
                interior_edges.push(InteriorEdge {
                    nodes: [p, q],
                    plus,
                    minus,
                    normal,
                    tangent,
                    length,
                });
            }
            other => {
                return Err(Error::InvalidMesh(format!(
                    "edge ({p}, {q}) shared by {} triangles",
                    other.len()
                )))
            }
        }
    }

    Ok(Mesh2D {
        nx,
        ny,
        nodes,
        triangles,
        areas,
        ref_inv,
        interior_edges,
        boundary_edge_count,
    })
}

/// How boundary nodes are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLayout {
    /// Every boundary node carries Dirichlet data.
    Clamped,
    /// Left and right edges carry Dirichlet data; top nodes mirror the
    /// bottom node in the same column.
    PeriodicShear,
}

impl BoundaryLayout {
    pub fn from_preset(preset: &str) -> Result<Self> {
        match preset {
            "example1" => Ok(BoundaryLayout::Clamped),
            "example2" => Ok(BoundaryLayout::PeriodicShear),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Free,
    Dirichlet,
    /// Position equals the master's position shifted by the domain height.
    Periodic {
        master: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSets {
    pub kinds: Vec<NodeKind>,
    pub dirichlet: Vec<usize>,
    /// `(bottom master, top slave)` pairs.
    pub periodic: Vec<(usize, usize)>,
    pub free: Vec<usize>,
}

impl NodeSets {
    pub fn num_free(&self) -> usize {
        self.free.len()
    }
}

/// Classifies nodes by a named preset (`example1` or `example2`).
pub fn classify_boundary(mesh: &Mesh2D, preset: &str) -> Result<NodeSets> {
    Ok(classify_layout(mesh, BoundaryLayout::from_preset(preset)?))
}

pub fn classify_layout(mesh: &Mesh2D, layout: BoundaryLayout) -> NodeSets {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let mut kinds = vec![NodeKind::Free; mesh.num_nodes()];
    for (node, kind) in kinds.iter_mut().enumerate() {
        let (i, j) = mesh.node_grid(node);
        *kind = match layout {
            BoundaryLayout::Clamped if mesh.is_boundary_node(node) => NodeKind::Dirichlet,
            BoundaryLayout::PeriodicShear if i == 0 || i == nx => NodeKind::Dirichlet,
            BoundaryLayout::PeriodicShear if j == ny => NodeKind::Periodic {
                master: mesh.node_index(i, 0),
            },
            _ => NodeKind::Free,
        };
    }
    let mut sets = NodeSets {
        kinds,
        dirichlet: Vec::new(),
        periodic: Vec::new(),
        free: Vec::new(),
    };
    for (node, kind) in sets.kinds.iter().enumerate() {
        match *kind {
            NodeKind::Free => sets.free.push(node),
            NodeKind::Dirichlet => sets.dirichlet.push(node),
            NodeKind::Periodic { master } => sets.periodic.push((master, node)),
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_mesh_counts() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        assert_eq!(mesh.num_triangles(), 256);
        assert_eq!(mesh.num_nodes(), 153);
        let layers: std::collections::BTreeSet<_> =
            (0..256).map(|t| mesh.triangle_layer(t)).collect();
        assert_eq!(layers.len(), 8);
        assert!((mesh.total_area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_has_one_interior_edge() {
        let mesh = build_structured_mesh(1, 1).unwrap();
        assert_eq!(mesh.num_triangles(), 2);
        assert_eq!(mesh.interior_edges().len(), 1);
        let e = &mesh.interior_edges()[0];
        // the "/" diagonal
        assert_eq!(e.nodes, [0, 3]);
    }

    #[test]
    fn strip_of_two_cells() {
        // two diagonals plus the shared vertical edge
        let mesh = build_structured_mesh(2, 1).unwrap();
        assert_eq!(mesh.num_triangles(), 4);
        assert_eq!(mesh.interior_edges().len(), 3);
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(build_structured_mesh(0, 3).is_err());
        assert!(build_structured_mesh(3, 0).is_err());
    }

    #[test]
    fn edge_frames_are_orthonormal_and_outward() {
        let mesh = build_structured_mesh(5, 3).unwrap();
        for e in mesh.interior_edges() {
            assert!(e.normal.dot(&e.tangent).abs() < 1e-15);
            assert!((e.normal.norm() - 1.0).abs() < 1e-15);
            assert!((e.tangent.norm() - 1.0).abs() < 1e-15);
            // normal points away from the plus triangle's opposite vertex
            let opp = mesh.triangles()[e.plus]
                .iter()
                .copied()
                .find(|n| !e.nodes.contains(n))
                .unwrap();
            let mid = (mesh.nodes()[e.nodes[0]] + mesh.nodes()[e.nodes[1]]) / 2.0;
            assert!(e.normal.dot(&(mid - mesh.nodes()[opp])) > 0.0);
        }
    }

    #[test]
    fn euler_characteristic() {
        for (nx, ny) in [(1, 1), (2, 1), (16, 8), (7, 3)] {
            let mesh = build_structured_mesh(nx, ny).unwrap();
            let chi =
                mesh.num_nodes() as i64 - mesh.num_edges() as i64 + mesh.num_triangles() as i64;
            assert_eq!(chi, 1);
        }
    }

    #[test]
    fn clamped_layout_counts() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_boundary(&mesh, "example1").unwrap();
        assert_eq!(sets.dirichlet.len(), 48);
        assert!(sets.periodic.is_empty());
        assert_eq!(sets.dirichlet.len() + sets.free.len(), mesh.num_nodes());
        let mut all: Vec<_> = sets.dirichlet.iter().chain(&sets.free).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), mesh.num_nodes());
    }

    #[test]
    fn periodic_layout_counts() {
        let mesh = build_structured_mesh(16, 8).unwrap();
        let sets = classify_boundary(&mesh, "example2").unwrap();
        assert_eq!(sets.dirichlet.len(), 18);
        assert_eq!(sets.periodic.len(), 15);
        // corners are Dirichlet
        for (i, j) in [(0, 0), (16, 0), (0, 8), (16, 8)] {
            assert_eq!(sets.kinds[mesh.node_index(i, j)], NodeKind::Dirichlet);
        }
        // (0.5, 1) pairs with (0.5, 0)
        let top = mesh.node_index(4, 8);
        let bottom = mesh.node_index(4, 0);
        assert_eq!(mesh.nodes()[top], Vector2::new(0.5, 1.0));
        assert!(sets.periodic.contains(&(bottom, top)));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let mesh = build_structured_mesh(2, 2).unwrap();
        assert!(matches!(
            classify_boundary(&mesh, "example3"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn tables_have_one_row_per_entity() {
        let mesh = build_structured_mesh(3, 2).unwrap();
        assert_eq!(mesh.node_table().lines().count(), mesh.num_nodes());
        assert_eq!(mesh.triangle_table().lines().count(), mesh.num_triangles());
        assert!(mesh.triangle_table().starts_with("0 0 1 5\n"));
    }
}
