//! Mollified point sources and their finite-element responses.
//!
//! The singular source at `y` is replaced by a C² radial bump of radius
//! `rho`, normalised to unit mass. Loads are integrated with a tensorised
//! Gauss rule that is exact for the bump's polynomial interior; elements cut
//! by the bump's support sphere are subdivided adaptively first.

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use super::mesh::TetMesh;
use super::system::{DiscreteField, System};
use super::FemError;
use crate::geometry::point_triangle_distance;

/// The C² bump `c (1 - (r/ρ)²)³` on `r ≤ ρ`, zero outside, with unit mass.
pub struct MollifiedBump {
    pub center: Point3<f64>,
    pub radius: f64,
    norm: f64,
}

/// Unit-mass bump of radius `rho` at `y`.
pub fn mollified_bump(y: Point3<f64>, rho: f64) -> MollifiedBump {
    MollifiedBump {
        center: y,
        radius: rho,
        norm: 315.0 / (64.0 * std::f64::consts::PI * rho.powi(3)),
    }
}

impl MollifiedBump {
    pub fn eval(&self, x: Point3<f64>) -> f64 {
        let u = (x - self.center).norm_squared() / (self.radius * self.radius);
        if u >= 1.0 {
            0.0
        } else {
            self.norm * (1.0 - u).powi(3)
        }
    }
}

/// Five-point Gauss–Legendre rule on [0, 1]; the weights sum to one.
const GL5: [(f64, f64); 5] = [
    (0.046910077030668074, 0.11846344252809454),
    (0.23076534494715845, 0.23931433524968324),
    (0.5, 0.28444444444444444),
    (0.7692346550528415, 0.23931433524968324),
    (0.9530899229693319, 0.11846344252809454),
];

/// Integrates `bump · φ_a` over a sub-tet, accumulating into the parent
/// element's four nodal loads. `to_bary` maps a physical point to the
/// barycentric coordinates (λ1, λ2, λ3) of the parent element.
fn duffy_accumulate(
    sub: &[Point3<f64>; 4],
    bump: &MollifiedBump,
    to_bary: &dyn Fn(Point3<f64>) -> Vector3<f64>,
    out: &mut [f64; 4],
) {
    let m = Matrix3::from_columns(&[sub[1] - sub[0], sub[2] - sub[0], sub[3] - sub[0]]);
    let six_vol = m.determinant().abs();
    if six_vol == 0.0 {
        return;
    }
    for (u, wu) in GL5 {
        for (v, wv) in GL5 {
            for (w, ww) in GL5 {
                // Collapsed-cube map onto the simplex, exact for polynomials
                // of total degree ≤ 7 with five Gauss points per axis.
                let xi1 = u;
                let xi2 = v * (1.0 - u);
                let xi3 = w * (1.0 - u) * (1.0 - v);
                let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                let x = sub[0] + m * Vector3::new(xi1, xi2, xi3);
                let weight = wu * wv * ww * jac * six_vol;
                let f = bump.eval(x) * weight;
                if f == 0.0 {
                    continue;
                }
                let lam = to_bary(x);
                out[0] += f * (1.0 - lam.x - lam.y - lam.z);
                out[1] += f * lam.x;
                out[2] += f * lam.y;
                out[3] += f * lam.z;
            }
        }
    }
}

/// Distance bounds from `y` to the tet: (min, max) over the closed element.
fn distance_bounds(verts: &[Point3<f64>; 4], y: Point3<f64>) -> (f64, f64) {
    let max = verts.iter().map(|v| (v - y).norm()).fold(0.0, f64::max);
    // Inside test via the four face planes of a positively oriented tet.
    let faces = [[0, 2, 1], [0, 3, 2], [0, 1, 3], [1, 2, 3]];
    let mut inside = true;
    let mut min = f64::INFINITY;
    for f in faces {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&(y - a)) > 0.0 {
            inside = false;
        }
        min = min.min(point_triangle_distance(y, a, b, c));
    }
    if inside {
        min = 0.0;
    }
    (min, max)
}

fn refine_accumulate(
    sub: &[Point3<f64>; 4],
    bump: &MollifiedBump,
    to_bary: &dyn Fn(Point3<f64>) -> Vector3<f64>,
    depth: usize,
    out: &mut [f64; 4],
) {
    let (min, max) = distance_bounds(sub, bump.center);
    if min >= bump.radius {
        return;
    }
    if max <= bump.radius || depth == 0 {
        duffy_accumulate(sub, bump, to_bary, out);
        return;
    }
    let m = |a: Point3<f64>, b: Point3<f64>| Point3::from((a.coords + b.coords) / 2.0);
    let m01 = m(sub[0], sub[1]);
    let m02 = m(sub[0], sub[2]);
    let m03 = m(sub[0], sub[3]);
    let m12 = m(sub[1], sub[2]);
    let m13 = m(sub[1], sub[3]);
    let m23 = m(sub[2], sub[3]);
    let children: [[Point3<f64>; 4]; 8] = [
        [sub[0], m01, m02, m03],
        [m01, sub[1], m12, m13],
        [m02, m12, sub[2], m23],
        [m03, m13, m23, sub[3]],
        [m01, m23, m02, m03],
        [m01, m23, m03, m13],
        [m01, m23, m13, m12],
        [m01, m23, m12, m02],
    ];
    for c in &children {
        refine_accumulate(c, bump, to_bary, depth - 1, out);
    }
}

/// Depth of adaptive subdivision for elements cut by the support sphere.
const CUT_REFINEMENT_DEPTH: usize = 5;

/// Nodal loads `b_i = ∫ bump · φ_i`. The sum over all nodes recovers the
/// bump's unit mass up to quadrature error.
pub fn bump_load(mesh: &TetMesh, y: Point3<f64>, rho: f64) -> Vec<f64> {
    let bump = mollified_bump(y, rho);
    let nodes = mesh.nodes();
    let contributions: Vec<Option<(usize, [f64; 4])>> = mesh
        .tets()
        .par_iter()
        .enumerate()
        .map(|(e, t)| {
            let verts = [nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]];
            let (min, max) = distance_bounds(&verts, y);
            if min >= rho {
                return None;
            }
            let m =
                Matrix3::from_columns(&[verts[1] - verts[0], verts[2] - verts[0], verts[3] - verts[0]]);
            let inv = m.try_inverse().expect("elements have positive volume");
            let origin = verts[0];
            let to_bary = move |x: Point3<f64>| inv * (x - origin);
            let mut local = [0.0; 4];
            if max <= rho {
                duffy_accumulate(&verts, &bump, &to_bary, &mut local);
            } else {
                refine_accumulate(&verts, &bump, &to_bary, CUT_REFINEMENT_DEPTH, &mut local);
            }
            Some((e, local))
        })
        .collect();

    let mut load = vec![0.0; nodes.len()];
    for item in contributions.into_iter().flatten() {
        let (e, local) = item;
        let t = mesh.tets()[e];
        for a in 0..4 {
            load[t[a]] += local[a];
        }
    }
    load
}

/// Finite-element response to a unit-mass mollified source at `y`, with zero
/// Dirichlet data on the whole boundary.
pub fn green_approx(
    system: &System<'_>,
    y: Point3<f64>,
    rho: f64,
) -> Result<DiscreteField, FemError> {
    let mesh = system.mesh();
    if rho < 2.0 * mesh.h() {
        return Err(FemError::BadDomain(format!(
            "mollification radius {rho} is below two mesh layers ({})",
            2.0 * mesh.h()
        )));
    }
    let nodes = mesh.nodes();
    let mut clearance = f64::INFINITY;
    for (tri, _) in mesh.boundary_faces() {
        clearance = clearance.min(point_triangle_distance(
            y,
            nodes[tri[0]],
            nodes[tri[1]],
            nodes[tri[2]],
        ));
    }
    if clearance <= rho {
        return Err(FemError::SourceTooClose {
            distance: clearance,
            required: rho,
        });
    }

    let load = bump_load(mesh, y, rho);
    let mass: f64 = load.iter().sum();
    assert!(
        (mass - 1.0).abs() <= 1e-6,
        "mollified source integrates to {mass}, not 1"
    );
    system.solve_zero_dirichlet(&load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, mesh_domain, DomainSpec, InterfaceModel};
    use approx::assert_relative_eq;

    fn unit_mesh(h: f64) -> TetMesh {
        mesh_domain(
            &DomainSpec::unit_box_top_face(),
            &[],
            h,
            2.0,
            InterfaceModel::Fraction,
        )
        .unwrap()
    }

    #[test]
    fn bump_mass_is_one_to_quadrature_tolerance() {
        let mesh = unit_mesh(1.0 / 12.0);
        let load = bump_load(&mesh, Point3::new(0.05, -0.1, 0.0), 0.25);
        let mass: f64 = load.iter().sum();
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn bump_pairs_with_linear_fields_at_the_center()  {
        // ∫ bump(x − y) ℓ(x) dx = ℓ(y) for affine ℓ, by symmetry of the bump.
        let mesh = unit_mesh(1.0 / 12.0);
        let y = Point3::new(0.1, 0.05, -0.05);
        let load = bump_load(&mesh, y, 0.2);
        let lin: f64 = mesh
            .nodes()
            .iter()
            .zip(&load)
            .map(|(p, b)| (0.3 + 2.0 * p.x - p.y + 0.5 * p.z) * b)
            .sum();
        assert_relative_eq!(lin, 0.3 + 2.0 * y.x - y.y + 0.5 * y.z, epsilon = 1e-6);
    }

    #[test]
    fn green_response_is_positive_and_decays() {
        let mesh = unit_mesh(1.0 / 12.0);
        let system = assemble(&mesh);
        let y = Point3::new(0.0, 0.0, 0.1);
        let rho = 3.0 * mesh.h();
        let g = green_approx(&system, y, rho).unwrap();

        // Positive in the interior (discrete maximum principle holds for
        // this mesh family), zero on the boundary.
        for (i, p) in mesh.nodes().iter().enumerate() {
            if mesh.is_boundary_node(i) {
                assert_eq!(g.values[i], 0.0);
            } else if (p - y).norm() < 0.2 {
                assert!(
                    g.values[i] > 0.0,
                    "negative response {} at {p:?}",
                    g.values[i]
                );
            }
        }

        // Bounded by a multiple of the free-space kernel away from the bump.
        let c_free = 1.0 / (4.0 * std::f64::consts::PI);
        for (i, p) in mesh.nodes().iter().enumerate() {
            let r = (p - y).norm();
            if r > 2.0 * rho {
                assert!(
                    g.values[i] <= 2.0 * c_free / r + 1e-9,
                    "value {} at distance {r}",
                    g.values[i]
                );
            }
        }
    }

    #[test]
    fn sources_near_the_boundary_are_rejected() {
        let mesh = unit_mesh(1.0 / 8.0);
        let system = assemble(&mesh);
        let result = green_approx(&system, Point3::new(0.0, 0.0, 0.4), 0.3);
        assert!(matches!(result, Err(FemError::SourceTooClose { .. })));
    }

    #[test]
    fn undersized_mollification_radius_is_rejected() {
        let mesh = unit_mesh(1.0 / 8.0);
        let system = assemble(&mesh);
        let result = green_approx(&system, Point3::origin(), 0.1);
        assert!(matches!(result, Err(FemError::BadDomain(_))));
    }

    #[test]
    fn reciprocity_holds_between_two_sources() {
        // ⟨G_y, bump_z⟩ = ⟨G_z, bump_y⟩ by symmetry of the bilinear form.
        let mesh = unit_mesh(1.0 / 10.0);
        let system = assemble(&mesh);
        let rho = 2.5 * mesh.h();
        let y = Point3::new(-0.1, 0.0, 0.0);
        let z = Point3::new(0.15, 0.05, 0.1);
        let gy = green_approx(&system, y, rho).unwrap();
        let gz = green_approx(&system, z, rho).unwrap();
        let load_y = bump_load(&mesh, y, rho);
        let load_z = bump_load(&mesh, z, rho);
        let a: f64 = gy.values.iter().zip(&load_z).map(|(u, b)| u * b).sum();
        let b: f64 = gz.values.iter().zip(&load_y).map(|(u, b)| u * b).sum();
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }
}
