//! Coupled bulk/surface discretization of the unit square.
//!
//! The bulk is a structured P1 triangulation; the surface is the closed
//! boundary polyline, traversed counterclockwise from the origin and treated
//! as one periodic curve (corners included).

use crate::error::{ChbError, Result};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub struct BulkMesh {
    pub node_coords: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary edges in loop order; edge `k` joins surface nodes `k` and `k+1`.
    pub boundary_edges: Vec<[usize; 2]>,
    pub element_areas: Vec<f64>,
}

impl BulkMesh {
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.element_areas.iter().sum()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.node_coords[a], self.node_coords[b], self.node_coords[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Gradients of the three barycentric coordinates on triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.node_coords[a], self.node_coords[b], self.node_coords[c]);
        let two_area = 2.0 * self.element_areas[t];
        [
            [(pb[1] - pc[1]) / two_area, (pc[0] - pb[0]) / two_area],
            [(pc[1] - pa[1]) / two_area, (pa[0] - pc[0]) / two_area],
            [(pa[1] - pb[1]) / two_area, (pb[0] - pa[0]) / two_area],
        ]
    }

    /// Maps barycentric coordinates on triangle `t` to a physical point.
    pub fn point_at(&self, t: usize, bary: [f64; 3]) -> Point {
        let tri = self.triangles[t];
        let mut p = [0.0, 0.0];
        for (k, &node) in tri.iter().enumerate() {
            p[0] += bary[k] * self.node_coords[node][0];
            p[1] += bary[k] * self.node_coords[node][1];
        }
        p
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h = 0.0f64;
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (self.node_coords[tri[k]], self.node_coords[tri[(k + 1) % 3]]);
                h = h.max((b[0] - a[0]).hypot(b[1] - a[1]));
            }
        }
        h
    }

    /// Consistent P1 mass matrix.
    pub fn mass_matrix(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.n_nodes(), self.n_nodes(), 9 * self.n_triangles());
        for (e, tri) in self.triangles.iter().enumerate() {
            let a = self.element_areas[e];
            for i in 0..3 {
                for j in 0..3 {
                    let v = if i == j { a / 6.0 } else { a / 12.0 };
                    t.push(tri[i], tri[j], v);
                }
            }
        }
        t.to_csr()
    }

    /// P1 stiffness matrix with a per-element weight (`1.0` for the plain Laplacian).
    pub fn weighted_stiffness(&self, weight: impl Fn(usize) -> f64) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.n_nodes(), self.n_nodes(), 9 * self.n_triangles());
        for (e, tri) in self.triangles.iter().enumerate() {
            let g = self.barycentric_gradients(e);
            let w = weight(e) * self.element_areas[e];
            for i in 0..3 {
                for j in 0..3 {
                    t.push(tri[i], tri[j], w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
                }
            }
        }
        t.to_csr()
    }

    pub fn stiffness_matrix(&self) -> CsrMatrix {
        self.weighted_stiffness(|_| 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    /// Cyclic node order, as bulk node indices.
    pub nodes: Vec<usize>,
    pub coords: Vec<Point>,
    /// Arclength at each node (first node at 0).
    pub arclength: Vec<f64>,
    /// `segment_lengths[k]` is the length from node `k` to node `k+1 (mod N)`.
    pub segment_lengths: Vec<f64>,
}

impl SurfaceMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths.iter().sum()
    }

    #[inline]
    pub fn next(&self, k: usize) -> usize {
        (k + 1) % self.nodes.len()
    }

    /// Unit tangent of segment `k` (counterclockwise orientation).
    pub fn tangent(&self, k: usize) -> [f64; 2] {
        let (a, b) = (self.coords[k], self.coords[self.next(k)]);
        let h = self.segment_lengths[k];
        [(b[0] - a[0]) / h, (b[1] - a[1]) / h]
    }

    fn check_segments(&self) -> Result<()> {
        if let Some(k) = self.segment_lengths.iter().position(|&h| h <= 0.0) {
            return Err(ChbError::Domain(format!("degenerate surface segment {k}")));
        }
        Ok(())
    }

    /// Arclength derivative as a (segments x nodes) operator: `(u_{k+1} - u_k) / h_k`.
    pub fn derivative_matrix(&self) -> Result<CsrMatrix> {
        self.check_segments()?;
        let n = self.n_nodes();
        let mut t = TripletBuilder::with_capacity(n, n, 2 * n);
        for k in 0..n {
            let h = self.segment_lengths[k];
            t.push(k, k, -1.0 / h);
            t.push(k, self.next(k), 1.0 / h);
        }
        Ok(t.to_csr())
    }

    /// Consistent P1 mass matrix on the closed curve.
    pub fn mass_matrix(&self) -> CsrMatrix {
        let n = self.n_nodes();
        let mut t = TripletBuilder::with_capacity(n, n, 4 * n);
        for k in 0..n {
            let h = self.segment_lengths[k];
            let (a, b) = (k, self.next(k));
            t.push(a, a, h / 3.0);
            t.push(b, b, h / 3.0);
            t.push(a, b, h / 6.0);
            t.push(b, a, h / 6.0);
        }
        t.to_csr()
    }

    /// P1 Laplace-Beltrami stiffness with a per-segment weight.
    pub fn weighted_stiffness(&self, weight: impl Fn(usize) -> f64) -> Result<CsrMatrix> {
        self.check_segments()?;
        let n = self.n_nodes();
        let mut t = TripletBuilder::with_capacity(n, n, 4 * n);
        for k in 0..n {
            let w = weight(k) / self.segment_lengths[k];
            let (a, b) = (k, self.next(k));
            t.push(a, a, w);
            t.push(b, b, w);
            t.push(a, b, -w);
            t.push(b, a, -w);
        }
        Ok(t.to_csr())
    }

    pub fn stiffness_matrix(&self) -> Result<CsrMatrix> {
        self.weighted_stiffness(|_| 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct TraceMap {
    /// Surface node index -> bulk node index.
    pub forward: Vec<usize>,
    /// Bulk node index -> surface node index, `None` for interior nodes.
    pub inverse: Vec<Option<usize>>,
}

impl TraceMap {
    pub fn n_surface(&self) -> usize {
        self.forward.len()
    }

    pub fn n_bulk(&self) -> usize {
        self.inverse.len()
    }
}

#[derive(Debug, Clone)]
pub struct NormalField {
    pub edge_normals: Vec<[f64; 2]>,
    pub node_normals: Vec<[f64; 2]>,
    pub corner: Vec<bool>,
}

/// All geometric objects of one discretization.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub n: usize,
    pub bulk: BulkMesh,
    pub surface: SurfaceMesh,
    pub trace: TraceMap,
    pub normals: NormalField,
}

impl Mesh {
    pub fn unit_square(n: usize) -> Result<Self> {
        let (bulk, surface, trace, normals) = build_square_mesh(n)?;
        Ok(Self {
            n,
            bulk,
            surface,
            trace,
            normals,
        })
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk.n_nodes()
    }

    pub fn n_surface(&self) -> usize {
        self.surface.n_nodes()
    }
}

/// Structured triangulation of `[0,1]^2` with `n` subdivisions per side.
pub fn build_square_mesh(n: usize) -> Result<(BulkMesh, SurfaceMesh, TraceMap, NormalField)> {
    if n == 0 {
        return Err(ChbError::Domain("n must be at least 1".into()));
    }
    let np = n + 1;
    let id = |i: usize, j: usize| j * np + i;
    let nf = n as f64;
    let mut node_coords = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            node_coords.push([i as f64 / nf, j as f64 / nf]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }

    // counterclockwise loop starting at the origin
    let mut loop_nodes = Vec::with_capacity(4 * n);
    for i in 0..n {
        loop_nodes.push(id(i, 0));
    }
    for j in 0..n {
        loop_nodes.push(id(n, j));
    }
    for i in (1..=n).rev() {
        loop_nodes.push(id(i, n));
    }
    for j in (1..=n).rev() {
        loop_nodes.push(id(0, j));
    }
    let ns = loop_nodes.len();
    let boundary_edges: Vec<[usize; 2]> = (0..ns)
        .map(|k| [loop_nodes[k], loop_nodes[(k + 1) % ns]])
        .collect();

    let mut bulk = BulkMesh {
        node_coords,
        triangles,
        boundary_edges,
        element_areas: Vec::new(),
    };
    bulk.element_areas = (0..bulk.triangles.len()).map(|t| bulk.signed_area(t)).collect();

    let coords: Vec<Point> = loop_nodes.iter().map(|&b| bulk.node_coords[b]).collect();
    let segment_lengths: Vec<f64> = (0..ns)
        .map(|k| {
            let (a, b) = (coords[k], coords[(k + 1) % ns]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .collect();
    let mut arclength = Vec::with_capacity(ns);
    let mut s = 0.0;
    for h in &segment_lengths {
        arclength.push(s);
        s += h;
    }
    let surface = SurfaceMesh {
        nodes: loop_nodes.clone(),
        coords,
        arclength,
        segment_lengths,
    };

    let mut inverse = vec![None; bulk.n_nodes()];
    for (k, &b) in loop_nodes.iter().enumerate() {
        inverse[b] = Some(k);
    }
    let trace = TraceMap {
        forward: loop_nodes,
        inverse,
    };

    let edge_normals: Vec<[f64; 2]> = (0..ns)
        .map(|k| {
            let t = surface.tangent(k);
            [t[1], -t[0]]
        })
        .collect();
    let mut node_normals = Vec::with_capacity(ns);
    let mut corner = Vec::with_capacity(ns);
    for k in 0..ns {
        let prev = (k + ns - 1) % ns;
        let (a, b) = (edge_normals[prev], edge_normals[k]);
        let m = [a[0] + b[0], a[1] + b[1]];
        let len = m[0].hypot(m[1]);
        node_normals.push([m[0] / len, m[1] / len]);
        corner.push((a[0] * b[0] + a[1] * b[1]) < 1.0 - 1e-12);
    }
    let normals = NormalField {
        edge_normals,
        node_normals,
        corner,
    };
    Ok((bulk, surface, trace, normals))
}

/// Restricts a bulk nodal field to the surface nodes, in cyclic order.
pub fn trace(field: &[f64], map: &TraceMap) -> Result<Vec<f64>> {
    if field.len() != map.n_bulk() {
        return Err(ChbError::LengthMismatch {
            expected: map.n_bulk(),
            got: field.len(),
        });
    }
    Ok(map.forward.iter().map(|&b| field[b]).collect())
}

/// Extends a surface field to the bulk by zero in the interior.
pub fn lift_by_zero_extension(surface_field: &[f64], map: &TraceMap) -> Result<Vec<f64>> {
    if surface_field.len() != map.n_surface() {
        return Err(ChbError::LengthMismatch {
            expected: map.n_surface(),
            got: surface_field.len(),
        });
    }
    let mut out = vec![0.0; map.n_bulk()];
    for (k, &b) in map.forward.iter().enumerate() {
        out[b] = surface_field[k];
    }
    Ok(out)
}

/// Arclength derivative operator on the closed surface curve.
pub fn surface_derivative_matrix(surface: &SurfaceMesh) -> Result<CsrMatrix> {
    surface.derivative_matrix()
}

/// Discrete `int_Gamma |d_s u|^2` for a P1 surface field.
pub fn surface_h1_seminorm_sq(surface: &SurfaceMesh, u: &[f64]) -> Result<f64> {
    let d = surface.derivative_matrix()?.mul_vec(u);
    Ok(d.iter()
        .zip(&surface.segment_lengths)
        .map(|(g, h)| g * g * h)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_small_meshes() {
        let (b, s, _, _) = build_square_mesh(1).unwrap();
        assert_eq!((b.n_nodes(), b.n_triangles(), s.n_nodes()), (4, 2, 4));
        assert!((b.area() - 1.0).abs() < 1e-15);
        assert!((s.length() - 4.0).abs() < 1e-15);
        let (b, s, _, _) = build_square_mesh(2).unwrap();
        assert_eq!((b.n_nodes(), b.n_triangles(), s.n_nodes()), (9, 8, 8));
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(build_square_mesh(0), Err(ChbError::Domain(_))));
    }

    #[test]
    fn area_and_arclength_partition() {
        let (b, s, _, _) = build_square_mesh(8).unwrap();
        assert!((b.area() - 1.0).abs() <= 1e-12);
        assert!((s.length() - 4.0).abs() <= 4e-12);
        assert!(b.element_areas.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn trace_of_x_coordinate() {
        let (b, _, map, _) = build_square_mesh(1).unwrap();
        let x: Vec<f64> = b.node_coords.iter().map(|p| p[0]).collect();
        assert_eq!(trace(&x, &map).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn trace_constant_and_interior_support() {
        let (b, _, map, _) = build_square_mesh(3).unwrap();
        let c = vec![0.7; b.n_nodes()];
        assert!(trace(&c, &map).unwrap().iter().all(|&v| v == 0.7));
        let interior: Vec<f64> = (0..b.n_nodes())
            .map(|i| if map.inverse[i].is_none() { 1.0 } else { 0.0 })
            .collect();
        assert!(trace(&interior, &map).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(
            trace(&[1.0, 2.0], &map),
            Err(ChbError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn trace_and_lift_compose() {
        let (b, _, map, _) = build_square_mesh(4).unwrap();
        let surf: Vec<f64> = (0..map.n_surface()).map(|k| k as f64).collect();
        let lifted = lift_by_zero_extension(&surf, &map).unwrap();
        assert_eq!(trace(&lifted, &map).unwrap(), surf);
        for (k, &bn) in map.forward.iter().enumerate() {
            assert_eq!(map.inverse[bn], Some(k));
            assert_eq!(b.node_coords[bn], trace_coords(&b, &map)[k]);
        }
    }

    fn trace_coords(b: &BulkMesh, map: &TraceMap) -> Vec<Point> {
        map.forward.iter().map(|&i| b.node_coords[i]).collect()
    }

    #[test]
    fn boundary_loop_degree_two() {
        let (b, _, _, _) = build_square_mesh(5).unwrap();
        let mut deg = vec![0; b.n_nodes()];
        for e in &b.boundary_edges {
            deg[e[0]] += 1;
            deg[e[1]] += 1;
        }
        assert!(deg.iter().all(|&d| d == 0 || d == 2));
    }

    #[test]
    fn normals_unit_and_outward() {
        let (_, s, _, nf) = build_square_mesh(4).unwrap();
        for (k, nrm) in nf.edge_normals.iter().enumerate() {
            assert!((nrm[0].hypot(nrm[1]) - 1.0).abs() <= 1e-14);
            let a = s.coords[k];
            let b = s.coords[s.next(k)];
            let mid = [(a[0] + b[0]) / 2.0 - 0.5, (a[1] + b[1]) / 2.0 - 0.5];
            assert!(mid[0] * nrm[0] + mid[1] * nrm[1] > 0.0);
        }
        assert_eq!(nf.corner.iter().filter(|&&c| c).count(), 4);
    }

    #[test]
    fn surface_derivative_kernel_and_row_sums() {
        let (_, s, _, _) = build_square_mesh(3).unwrap();
        let d = surface_derivative_matrix(&s).unwrap();
        assert!(d.mul_vec(&vec![2.5; s.n_nodes()]).iter().all(|v| v.abs() < 1e-12));
        let k = s.stiffness_matrix().unwrap();
        assert!(k.row_sums().iter().all(|v| v.abs() < 1e-12));
        let m = s.mass_matrix();
        let total: f64 = m.mul_vec(&vec![1.0; s.n_nodes()]).iter().sum();
        assert!((total - s.length()).abs() <= 1e-12 * s.length());
    }

    #[test]
    fn degenerate_segment_rejected() {
        let (_, mut s, _, _) = build_square_mesh(2).unwrap();
        s.segment_lengths[3] = 0.0;
        assert!(surface_derivative_matrix(&s).is_err());
    }

    #[test]
    fn refinement_halves_max_edge() {
        for n in [1usize, 2, 4, 8, 16] {
            let (a, ..) = build_square_mesh(n).unwrap();
            let (b, ..) = build_square_mesh(2 * n).unwrap();
            assert_eq!(b.max_edge_length(), a.max_edge_length() / 2.0, "n = {n}");
        }
    }
}
