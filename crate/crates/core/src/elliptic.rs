//! Stationary bulk-surface elliptic problem with Robin or Dirichlet coupling.
//!
//! Bulk: `-lap phi + phi = f`, surface: `-lap_G psi + psi + d_n phi = g`,
//! coupled by `K d_n phi = psi - phi` (or `psi = phi` on the boundary when `K = 0`).
//! Used to verify the bulk-surface blocks of the phase-field discretization.

use std::f64::consts::PI;

use crate::cahnhilliard::{sigma, Discretization};
use crate::error::Result;
use crate::fem::{SEG_QUAD_3, TRI_QUAD_7};
use crate::geometry::Point;
use crate::sparse::TripletBuilder;

/// Closed-form bulk field with all partial derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactField {
    /// `sin(pi x) sin(pi y) + cos(pi x) / 2`; its normal derivative vanishes at the corners.
    Smooth,
    /// `1 + x + 2y`
    Linear,
}

fn sin_d(k: usize, t: f64) -> f64 {
    match k % 4 {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

fn cos_d(k: usize, t: f64) -> f64 {
    sin_d(k + 1, t)
}

impl ExactField {
    /// `d^a/dx^a d^b/dy^b phi` at `p`.
    pub fn d(&self, a: usize, b: usize, p: Point) -> f64 {
        let (x, y) = (p[0], p[1]);
        match self {
            ExactField::Smooth => {
                let mut v = PI.powi((a + b) as i32) * sin_d(a, PI * x) * sin_d(b, PI * y);
                if b == 0 {
                    v += 0.5 * PI.powi(a as i32) * cos_d(a, PI * x);
                }
                v
            }
            ExactField::Linear => match (a, b) {
                (0, 0) => 1.0 + x + 2.0 * y,
                (1, 0) => 1.0,
                (0, 1) => 2.0,
                _ => 0.0,
            },
        }
    }

    /// Derivative along the directions in `dirs` (each index 0 = x, 1 = y, weighted by the vectors).
    fn directional(&self, dirs: &[[f64; 2]], p: Point) -> f64 {
        let m = dirs.len();
        let mut total = 0.0;
        for mask in 0..(1usize << m) {
            let mut w = 1.0;
            let mut a = 0;
            for (j, d) in dirs.iter().enumerate() {
                if mask >> j & 1 == 0 {
                    w *= d[0];
                    a += 1;
                } else {
                    w *= d[1];
                }
            }
            if w != 0.0 {
                total += w * self.d(a, m - a, p);
            }
        }
        total
    }

    fn laplacian(&self, p: Point) -> f64 {
        self.d(2, 0, p) + self.d(0, 2, p)
    }
}

/// Exact data of the coupled problem on one boundary segment.
struct Edge {
    tau: [f64; 2],
    nrm: [f64; 2],
}

impl Edge {
    fn psi(&self, u: &ExactField, k: f64, p: Point) -> f64 {
        u.d(0, 0, p) + k * u.directional(&[self.nrm], p)
    }

    fn psi_s(&self, u: &ExactField, k: f64, p: Point) -> f64 {
        u.directional(&[self.tau], p) + k * u.directional(&[self.tau, self.nrm], p)
    }

    fn g(&self, u: &ExactField, k: f64, p: Point) -> f64 {
        let pss = u.directional(&[self.tau, self.tau], p) + k * u.directional(&[self.tau, self.tau, self.nrm], p);
        -pss + self.psi(u, k, p) + u.directional(&[self.nrm], p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticMmsRow {
    pub n: usize,
    pub h: f64,
    pub bulk_l2: f64,
    pub surface_l2: f64,
}

/// Solves the manufactured coupled problem on an `n x n` mesh and reports L2 errors.
pub fn elliptic_mms(n: usize, k: f64, u: ExactField) -> Result<EllipticMmsRow> {
    let disc = Discretization::new(n)?;
    let mesh = &disc.mesh;
    let bulk = &mesh.bulk;
    let surf = &mesh.surface;
    let nb = disc.n_bulk();
    let ns = disc.n_surface();
    let sig = sigma(k);
    let edges: Vec<Edge> = (0..ns)
        .map(|s| Edge {
            tau: surf.tangent(s),
            nrm: mesh.normals.edge_normals[s],
        })
        .collect();

    let mut fb = vec![0.0; nb];
    for (e, tri) in bulk.triangles.iter().enumerate() {
        let area = bulk.element_areas[e];
        for (l, w) in TRI_QUAD_7.iter() {
            let x = bulk.point_at(e, *l);
            let f = -u.laplacian(x) + u.d(0, 0, x);
            for i in 0..3 {
                fb[tri[i]] += w * area * f * l[i];
            }
        }
    }
    let mut gs = vec![0.0; ns];
    for s in 0..ns {
        let (a, b) = (surf.coords[s], surf.coords[surf.next(s)]);
        let h = surf.segment_lengths[s];
        for (t, w) in SEG_QUAD_3 {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let g = edges[s].g(&u, k, x);
            gs[s] += w * h * g * (1.0 - t);
            gs[surf.next(s)] += w * h * g * t;
        }
    }
    // tangential derivative jumps at the corners
    for c in 0..ns {
        let prev = (c + ns - 1) % ns;
        let x = surf.coords[c];
        gs[c] += edges[prev].psi_s(&u, k, x) - edges[c].psi_s(&u, k, x);
    }

    let (phi_h, psi_h) = if k > 0.0 {
        let mut a = TripletBuilder::new(nb + ns, nb + ns);
        a.add_block(&disc.stiffness, 0, 0, 1.0);
        a.add_block(&disc.mass, 0, 0, 1.0);
        a.add_block(&disc.surf_stiffness, nb, nb, 1.0);
        a.add_block(&disc.surf_mass, nb, nb, 1.0 + sig);
        for r in 0..ns {
            let br = surf.nodes[r];
            for (c, v) in disc.surf_mass.row(r) {
                let bc = surf.nodes[c];
                a.push(br, bc, sig * v);
                a.push(br, nb + c, -sig * v);
                a.push(nb + r, bc, -sig * v);
            }
        }
        let mut rhs = fb;
        rhs.extend_from_slice(&gs);
        let x = a.factorize()?.solve(&rhs)?;
        (x[..nb].to_vec(), x[nb..].to_vec())
    } else {
        let mut a = TripletBuilder::new(nb, nb);
        a.add_block(&disc.stiffness, 0, 0, 1.0);
        a.add_block(&disc.mass, 0, 0, 1.0);
        for r in 0..ns {
            let br = surf.nodes[r];
            for (c, v) in disc.surf_stiffness.row(r).chain(disc.surf_mass.row(r)) {
                a.push(br, surf.nodes[c], v);
            }
        }
        let mut rhs = fb;
        for (r, g) in gs.iter().enumerate() {
            rhs[surf.nodes[r]] += g;
        }
        let x = a.factorize()?.solve(&rhs)?;
        let psi = disc.trace(&x);
        (x, psi)
    };

    let mut eb = 0.0;
    for (e, tri) in bulk.triangles.iter().enumerate() {
        let area = bulk.element_areas[e];
        for (l, w) in TRI_QUAD_7.iter() {
            let x = bulk.point_at(e, *l);
            let uh: f64 = (0..3).map(|i| l[i] * phi_h[tri[i]]).sum();
            eb += w * area * (uh - u.d(0, 0, x)).powi(2);
        }
    }
    let mut es = 0.0;
    for s in 0..ns {
        let (a, b) = (surf.coords[s], surf.coords[surf.next(s)]);
        let h = surf.segment_lengths[s];
        for (t, w) in SEG_QUAD_3 {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let uh = (1.0 - t) * psi_h[s] + t * psi_h[surf.next(s)];
            es += w * h * (uh - edges[s].psi(&u, k, x)).powi(2);
        }
    }
    Ok(EllipticMmsRow {
        n,
        h: bulk.max_edge_length(),
        bulk_l2: eb.sqrt(),
        surface_l2: es.sqrt(),
    })
}
