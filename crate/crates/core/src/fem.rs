//! Quadrature rules and the quadratic velocity space.

use std::collections::HashMap;

use crate::geometry::{Mesh, Point};
use crate::sparse::TripletBuilder;

/// Barycentric point and weight (weights sum to one; multiply by the area).
pub type TriQuadPoint = ([f64; 3], f64);

/// Degree-2 rule with three interior points. Used for every potential and
/// mobility integral so that energy and scheme see the same quadrature.
pub const TRI_QUAD_3: [TriQuadPoint; 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const D7_A1: f64 = 0.059_715_871_789_770;
const D7_B1: f64 = 0.470_142_064_105_115;
const D7_A2: f64 = 0.797_426_985_353_087;
const D7_B2: f64 = 0.101_286_507_323_456;
const D7_W0: f64 = 0.225;
const D7_W1: f64 = 0.132_394_152_788_506;
const D7_W2: f64 = 0.125_939_180_544_827;

/// Seven-point degree-5 rule (Dunavant).
pub const TRI_QUAD_7: [TriQuadPoint; 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], D7_W0),
    ([D7_A1, D7_B1, D7_B1], D7_W1),
    ([D7_B1, D7_A1, D7_B1], D7_W1),
    ([D7_B1, D7_B1, D7_A1], D7_W1),
    ([D7_A2, D7_B2, D7_B2], D7_W2),
    ([D7_B2, D7_A2, D7_B2], D7_W2),
    ([D7_B2, D7_B2, D7_A2], D7_W2),
];

/// Two-point Gauss rule on `[0,1]`: (parameter, weight); multiply weights by the length.
pub const SEG_QUAD_2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

/// Three-point Gauss rule on `[0,1]`.
pub const SEG_QUAD_3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// P2 shape functions in barycentric coordinates.
/// Local nodes 0..3 are the vertices; 3 = mid(0,1), 4 = mid(1,2), 5 = mid(2,0).
#[inline]
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Physical gradients of the P2 shape functions given barycentric gradients.
#[inline]
pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for d in 0..2 {
        out[0][d] = (4.0 * l[0] - 1.0) * g[0][d];
        out[1][d] = (4.0 * l[1] - 1.0) * g[1][d];
        out[2][d] = (4.0 * l[2] - 1.0) * g[2][d];
        out[3][d] = 4.0 * (l[0] * g[1][d] + l[1] * g[0][d]);
        out[4][d] = 4.0 * (l[1] * g[2][d] + l[2] * g[1][d]);
        out[5][d] = 4.0 * (l[2] * g[0][d] + l[0] * g[2][d]);
    }
    out
}

/// Quadratic Lagrange velocity space with strong impermeability constraints.
///
/// Component `c` of P2 node `i` is scalar dof `2 i + c`. On axis-aligned
/// boundary edges the normal component is removed; at corners both are.
#[derive(Debug, Clone)]
pub struct VelocitySpace {
    /// P2 node coordinates: bulk vertices first, then edge midpoints.
    pub coords: Vec<Point>,
    /// Six P2 nodes per triangle, in the local order of [`p2_values`].
    pub elements: Vec<[usize; 6]>,
    /// P2 nodes on each boundary segment: (start vertex, midpoint, end vertex).
    pub boundary_segments: Vec<[usize; 3]>,
    /// Scalar dof -> free index (`None` when constrained to zero).
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
}

impl VelocitySpace {
    pub fn new(mesh: &Mesh) -> Self {
        let bulk = &mesh.bulk;
        let nv = bulk.n_nodes();
        let mut coords = bulk.node_coords.clone();
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_node = |a: usize, b: usize, coords: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *edge_id.entry(key).or_insert_with(|| {
                let (pa, pb) = (bulk.node_coords[a], bulk.node_coords[b]);
                coords.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                coords.len() - 1
            })
        };
        let mut elements = Vec::with_capacity(bulk.n_triangles());
        for tri in &bulk.triangles {
            let m01 = edge_node(tri[0], tri[1], &mut coords);
            let m12 = edge_node(tri[1], tri[2], &mut coords);
            let m20 = edge_node(tri[2], tri[0], &mut coords);
            elements.push([tri[0], tri[1], tri[2], m01, m12, m20]);
        }
        let boundary_segments: Vec<[usize; 3]> = bulk
            .boundary_edges
            .iter()
            .map(|&[a, b]| [a, edge_node(a, b, &mut coords), b])
            .collect();
        debug_assert!(coords.len() >= nv);

        let n_p2 = coords.len();
        let mut constrained = vec![false; 2 * n_p2];
        for (k, seg) in boundary_segments.iter().enumerate() {
            let nrm = mesh.normals.edge_normals[k];
            // axis-aligned edges: the normal is +-e_x or +-e_y
            let comp = if nrm[0].abs() > nrm[1].abs() { 0 } else { 1 };
            for &node in seg {
                constrained[2 * node + comp] = true;
            }
        }
        let mut free_index = vec![None; 2 * n_p2];
        let mut n_free = 0;
        for (dof, c) in constrained.iter().enumerate() {
            if !c {
                free_index[dof] = Some(n_free);
                n_free += 1;
            }
        }
        Self {
            coords,
            elements,
            boundary_segments,
            free_index,
            n_free,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Expands a free-dof vector to per-node velocity vectors.
    pub fn expand(&self, free: &[f64]) -> Vec<[f64; 2]> {
        assert_eq!(free.len(), self.n_free);
        (0..self.n_nodes())
            .map(|i| {
                let mut v = [0.0; 2];
                for (c, vc) in v.iter_mut().enumerate() {
                    if let Some(f) = self.free_index[2 * i + c] {
                        *vc = free[f];
                    }
                }
                v
            })
            .collect()
    }

    /// Interpolates a velocity field and keeps only the free components.
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (i, &p) in self.coords.iter().enumerate() {
            let v = f(p);
            for c in 0..2 {
                if let Some(k) = self.free_index[2 * i + c] {
                    out[k] = v[c];
                }
            }
        }
        out
    }

    pub fn is_constrained(&self, node: usize, comp: usize) -> bool {
        self.free_index[2 * node + comp].is_none()
    }
}

/// Evaluates a P1 field at barycentric coordinates on a triangle.
#[inline]
pub fn p1_at(tri: &[usize; 3], field: &[f64], l: [f64; 3]) -> f64 {
    l[0] * field[tri[0]] + l[1] * field[tri[1]] + l[2] * field[tri[2]]
}

/// Flattened quadrature points of a P1 space: nodes, barycentric values, weight.
#[derive(Debug, Clone)]
pub struct Quad<const N: usize> {
    pub nodes: Vec<[usize; N]>,
    pub bary: Vec<[f64; N]>,
    pub weight: Vec<f64>,
}

impl<const N: usize> Quad<N> {
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    #[inline]
    pub fn value(&self, q: usize, field: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..N {
            s += self.bary[q][k] * field[self.nodes[q][k]];
        }
        s
    }

    pub fn values(&self, field: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|q| self.value(q, field)).collect()
    }

    /// `sum_q w_q f(u(x_q))`
    pub fn integrate<E>(&self, field: &[f64], mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<f64, E> {
        let mut s = 0.0;
        for q in 0..self.len() {
            s += self.weight[q] * f(self.value(q, field))?;
        }
        Ok(s)
    }

    /// Load vector `sum_q w_q f(u(x_q)) chi_i(x_q)` of length `n`.
    pub fn load<E>(&self, n: usize, field: &[f64], mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<Vec<f64>, E> {
        let mut out = vec![0.0; n];
        for q in 0..self.len() {
            let v = self.weight[q] * f(self.value(q, field))?;
            for k in 0..N {
                out[self.nodes[q][k]] += v * self.bary[q][k];
            }
        }
        Ok(out)
    }

    /// Adds `sum_q w_q f(u(x_q)) chi_i chi_j` at `(map(i) + row0, map(j) + col0)`.
    pub fn add_weighted_mass<E>(
        &self,
        field: &[f64],
        mut f: impl FnMut(f64) -> Result<f64, E>,
        map: impl Fn(usize) -> usize,
        row0: usize,
        col0: usize,
        scale: f64,
        out: &mut TripletBuilder,
    ) -> Result<(), E> {
        for q in 0..self.len() {
            let v = scale * self.weight[q] * f(self.value(q, field))?;
            if v == 0.0 {
                continue;
            }
            for a in 0..N {
                for b in 0..N {
                    out.push(
                        row0 + map(self.nodes[q][a]),
                        col0 + map(self.nodes[q][b]),
                        v * self.bary[q][a] * self.bary[q][b],
                    );
                }
            }
        }
        Ok(())
    }

    /// Per-cell average of `f(u)`; cell `c` owns points `c*P..(c+1)*P`.
    pub fn cell_means<E>(&self, per_cell: usize, field: &[f64], mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<Vec<f64>, E> {
        let cells = self.len() / per_cell;
        let mut out = Vec::with_capacity(cells);
        for c in 0..cells {
            let (mut s, mut w) = (0.0, 0.0);
            for q in c * per_cell..(c + 1) * per_cell {
                s += self.weight[q] * f(self.value(q, field))?;
                w += self.weight[q];
            }
            out.push(s / w);
        }
        Ok(out)
    }
}

/// Three points per triangle (see [`TRI_QUAD_3`]).
pub fn bulk_quad(mesh: &Mesh) -> Quad<3> {
    let b = &mesh.bulk;
    let mut q = Quad {
        nodes: Vec::with_capacity(3 * b.n_triangles()),
        bary: Vec::with_capacity(3 * b.n_triangles()),
        weight: Vec::with_capacity(3 * b.n_triangles()),
    };
    for (e, tri) in b.triangles.iter().enumerate() {
        for (l, w) in TRI_QUAD_3.iter() {
            q.nodes.push(*tri);
            q.bary.push(*l);
            q.weight.push(w * b.element_areas[e]);
        }
    }
    q
}

/// Two Gauss points per surface segment, indexed by surface node.
pub fn surface_quad(mesh: &Mesh) -> Quad<2> {
    let s = &mesh.surface;
    let n = s.n_nodes();
    let mut q = Quad {
        nodes: Vec::with_capacity(2 * n),
        bary: Vec::with_capacity(2 * n),
        weight: Vec::with_capacity(2 * n),
    };
    for k in 0..n {
        for (t, w) in SEG_QUAD_2.iter() {
            q.nodes.push([k, s.next(k)]);
            q.bary.push([1.0 - t, *t]);
            q.weight.push(w * s.segment_lengths[k]);
        }
    }
    q
}
