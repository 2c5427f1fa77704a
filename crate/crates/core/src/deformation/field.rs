//! Construction and evaluation of the boundary deformation field.
//!
//! The field interpolates matched vertex displacements affinely over the
//! collar triangles of the source polyhedron, extends them to all of space by
//! a componentwise inf-convolution (a constructive Lipschitz extension that is
//! exact on the collar), and tapers the result to zero with a `C¹` radial
//! cutoff in the distance to the source boundary. The result vanishes outside
//! a tube of width a quarter feature radius and reproduces every matched
//! vertex displacement exactly.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::{Matrix3, Point3, RowVector3, Vector3};

use super::collar::{collar_triangulation, TriangleCollar};
use super::DeformationError;
use crate::geometry::{AprioriData, Polyhedron, VertexPairing};

/// A vector field on ℝ³ with an evaluable Jacobian and a Lipschitz bound.
///
/// Deformation fields implement this, and so do the synthetic fields used to
/// exercise the flow algebra in isolation.
pub trait VectorField: Sync {
    /// Field value at `x`.
    fn value(&self, x: &Point3<f64>) -> Vector3<f64>;
    /// Jacobian matrix `J_ij = ∂ value_i / ∂ x_j` at `x`.
    fn jacobian(&self, x: &Point3<f64>) -> Matrix3<f64>;
    /// An upper bound on the global Lipschitz constant.
    fn lipschitz_bound(&self) -> f64;
}

/// `x ↦ L·x + c`, handy as a ground-truth field in tests.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub linear: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl VectorField for AffineField {
    fn value(&self, x: &Point3<f64>) -> Vector3<f64> {
        self.linear * x.coords + self.offset
    }

    fn jacobian(&self, _x: &Point3<f64>) -> Matrix3<f64> {
        self.linear
    }

    fn lipschitz_bound(&self) -> f64 {
        self.linear.norm()
    }
}

/// Affine interpolation data of one collar triangle: corner positions, corner
/// displacement values, plane normal, and the in-plane gradient of each
/// displacement component.
#[derive(Debug, Clone)]
struct TriangleAnchor {
    corners: [Point3<f64>; 3],
    values: [Vector3<f64>; 3],
    normal: Vector3<f64>,
    gradients: [Vector3<f64>; 3],
}

/// Per-edge frame reused across components: base corner, unit direction,
/// length, and the tangential/perpendicular coordinates of the query point.
type EdgeFrame = (Point3<f64>, Vector3<f64>, f64, f64, f64);

impl TriangleAnchor {
    fn new(corners: [Point3<f64>; 3], values: [Vector3<f64>; 3]) -> Self {
        let e1 = corners[1] - corners[0];
        let e2 = corners[2] - corners[0];
        let normal = e1.cross(&e2).normalize();
        let system = Matrix3::from_rows(&[
            RowVector3::new(e1.x, e1.y, e1.z),
            RowVector3::new(e2.x, e2.y, e2.z),
            RowVector3::new(normal.x, normal.y, normal.z),
        ]);
        let lu = system.lu();
        let mut gradients = [Vector3::zeros(); 3];
        for comp in 0..3 {
            let rhs = Vector3::new(
                values[1][comp] - values[0][comp],
                values[2][comp] - values[0][comp],
                0.0,
            );
            gradients[comp] = lu
                .solve(&rhs)
                .expect("collar triangle is non-degenerate by construction");
        }
        TriangleAnchor {
            corners,
            values,
            normal,
            gradients,
        }
    }

    /// Value of the affine interpolant at barycentric coordinates `b`.
    fn at_barycentric(&self, b: [f64; 3]) -> (Point3<f64>, Vector3<f64>) {
        let p = Point3::from(
            self.corners[0].coords * b[0]
                + self.corners[1].coords * b[1]
                + self.corners[2].coords * b[2],
        );
        let v = self.values[0] * b[0] + self.values[1] * b[1] + self.values[2] * b[2];
        (p, v)
    }

    /// Barycentric coordinates of the in-plane projection of `x`.
    fn barycentric(&self, x: &Point3<f64>) -> [f64; 3] {
        let e1 = self.corners[1] - self.corners[0];
        let e2 = self.corners[2] - self.corners[0];
        let r = x - self.corners[0];
        let (a11, a12, a22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let (r1, r2) = (r.dot(&e1), r.dot(&e2));
        let det = a11 * a22 - a12 * a12;
        let b1 = (r1 * a22 - r2 * a12) / det;
        let b2 = (r2 * a11 - r1 * a12) / det;
        [1.0 - b1 - b2, b1, b2]
    }

    /// Minimizes `f_comp(p) + lip·|x − p|` over the triangle, per component.
    ///
    /// The objective is convex, so the minimum lies at the in-plane critical
    /// point, on an edge-interior critical point, or at a corner — each with a
    /// closed form.
    fn component_minima(&self, x: &Point3<f64>, lip: f64) -> [f64; 3] {
        let d_signed = (x - self.corners[0]).dot(&self.normal);
        let x_par = x - self.normal * d_signed;
        let d_perp = d_signed.abs();
        let corner_dist = [
            (x - self.corners[0]).norm(),
            (x - self.corners[1]).norm(),
            (x - self.corners[2]).norm(),
        ];
        // Shared per-edge geometry: unit direction, length, and the foot/offset
        // of x with respect to the edge line.
        let edges = [(0usize, 1usize), (1, 2), (2, 0)];
        let edge_geo: Vec<EdgeFrame> = edges
            .iter()
            .map(|&(i, j)| {
                let qa = self.corners[i];
                let t = self.corners[j] - qa;
                let len = t.norm();
                let that = t / len;
                let s0 = (x - qa).dot(&that);
                let c2 = ((x - qa).norm_squared() - s0 * s0).max(0.0);
                (qa, that, len, s0, c2.sqrt())
            })
            .collect();

        let mut out = [0.0; 3];
        for (comp, out_c) in out.iter_mut().enumerate() {
            let a = self.gradients[comp];
            let f0 = self.values[0][comp];
            let f_at = |p: &Point3<f64>| f0 + a.dot(&(p - self.corners[0]));
            let mut best = f64::INFINITY;
            for (ci, d) in corner_dist.iter().enumerate() {
                best = best.min(self.values[ci][comp] + lip * d);
            }
            let a2 = a.norm_squared();
            if a2 < lip * lip {
                let p_int = if a2 > 0.0 {
                    x_par - a * (d_perp / (lip * lip - a2).sqrt())
                } else {
                    x_par
                };
                let b = self.barycentric(&p_int);
                if b.iter().all(|&bi| bi > 0.0) {
                    best = best.min(f_at(&p_int) + lip * (x - p_int).norm());
                }
                for &(qa, that, len, s0, c) in &edge_geo {
                    let alpha = a.dot(&that);
                    if alpha.abs() < lip {
                        let s = s0 - alpha * c / (lip * lip - alpha * alpha).sqrt();
                        if s > 0.0 && s < len {
                            let p = qa + that * s;
                            best = best.min(f_at(&p) + lip * (x - p).norm());
                        }
                    }
                }
            }
            *out_c = best;
        }
        out
    }
}

/// Componentwise inf-convolution over all anchors, clamped componentwise to
/// the anchor value range and radially to the anchor sup norm. Both clamps
/// are 1-Lipschitz and leave anchor values untouched, so the extension stays
/// exact on the collar and sup-norm preserving globally.
fn extension_value(
    anchors: &[TriangleAnchor],
    range: &[(f64, f64); 3],
    sup: f64,
    lip: f64,
    x: &Point3<f64>,
) -> Vector3<f64> {
    let mut best = [f64::INFINITY; 3];
    for anchor in anchors {
        let m = anchor.component_minima(x, lip);
        for comp in 0..3 {
            best[comp] = best[comp].min(m[comp]);
        }
    }
    let mut u = Vector3::new(
        best[0].clamp(range[0].0, range[0].1),
        best[1].clamp(range[1].0, range[1].1),
        best[2].clamp(range[2].0, range[2].1),
    );
    let norm = u.norm();
    if norm > sup && norm > 0.0 {
        u *= sup / norm;
    }
    u
}

/// Boundary deformation field: affine on the collar of the source polyhedron,
/// Lipschitz-extended off it, and cut off at a quarter feature radius.
#[derive(Debug, Clone)]
pub struct DeformationField {
    boundary: Polyhedron,
    collar: TriangleCollar,
    anchors: Vec<TriangleAnchor>,
    component_range: [(f64, f64); 3],
    extension_lipschitz: f64,
    /// Distance band of the cutoff: identically one inside `inner_radius`,
    /// identically zero outside `outer_radius`.
    inner_radius: f64,
    outer_radius: f64,
    feature_radius: f64,
    sup_value: f64,
    lipschitz: f64,
}

/// Builds the deformation field carrying `p0` onto `p1` under the given
/// vertex pairing.
///
/// Both polyhedra must admit collars; corresponding faces must have equal
/// side counts under the pairing. The displacement of each collar apex is
/// obtained by repeating the apex construction on the corresponding face of
/// `p1`, which keeps the per-triangle map affine and consistent between the
/// two collars.
pub fn build_field(
    p0: &Polyhedron,
    p1: &Polyhedron,
    pairing: &VertexPairing,
    prior: &AprioriData,
) -> Result<DeformationField, DeformationError> {
    let collar0 = collar_triangulation(p0, prior)?;
    let collar1 = collar_triangulation(p1, prior)?;

    let mut vertex_map = vec![usize::MAX; p0.vertices().len()];
    for &(s, t) in &pairing.pairs {
        vertex_map[s] = t;
    }

    // Face correspondence: a face of p0 maps to the face of p1 holding exactly
    // the paired vertex set.
    let mut p1_faces: HashMap<Vec<usize>, usize> = HashMap::new();
    for (fi, loop_) in p1.faces().iter().enumerate() {
        let mut key = loop_.clone();
        key.sort_unstable();
        p1_faces.insert(key, fi);
    }
    let mut face_map = Vec::with_capacity(p0.faces().len());
    for (fi, loop_) in p0.faces().iter().enumerate() {
        let mut key: Vec<usize> = loop_.iter().map(|&v| vertex_map[v]).collect();
        key.sort_unstable();
        match p1_faces.get(&key) {
            Some(&fj) if p1.faces()[fj].len() == loop_.len() => face_map.push(fj),
            _ => {
                return Err(DeformationError::CollarMismatch(format!(
                    "face {fi} of the source has no counterpart with the same sides"
                )))
            }
        }
    }

    // Triangle correspondence within matched faces, keyed by the unordered
    // base vertex pair.
    let mut tri_index: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for (ti, tri) in collar1.triangles().iter().enumerate() {
        let (a, b) = (tri.base_ids[0], tri.base_ids[1]);
        tri_index.insert((tri.face, a.min(b), a.max(b)), ti);
    }

    let mut anchors = Vec::with_capacity(collar0.triangles().len());
    for tri in collar0.triangles() {
        let (a, b) = (vertex_map[tri.base_ids[0]], vertex_map[tri.base_ids[1]]);
        let key = (face_map[tri.face], a.min(b), a.max(b));
        let twin = tri_index.get(&key).copied().ok_or_else(|| {
            DeformationError::CollarMismatch(format!(
                "no counterpart triangle for the base ({}, {}) on face {}",
                tri.base_ids[0], tri.base_ids[1], tri.face
            ))
        })?;
        let values = [
            p1.vertices()[a] - p0.vertices()[tri.base_ids[0]],
            p1.vertices()[b] - p0.vertices()[tri.base_ids[1]],
            collar1.triangles()[twin].apex - tri.apex,
        ];
        anchors.push(TriangleAnchor::new(tri.corners(), values));
    }

    let mut component_range = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    let mut sup_value = 0.0f64;
    for anchor in &anchors {
        for v in &anchor.values {
            for comp in 0..3 {
                let r = &mut component_range[comp];
                r.0 = r.0.min(v[comp]);
                r.1 = r.1.max(v[comp]);
            }
            // |f| is convex on each triangle, so corners attain the sup.
            sup_value = sup_value.max(v.norm());
        }
    }

    // Lipschitz constant of the anchor data: exact in-plane gradients, plus a
    // sampled cross-triangle difference quotient, inflated for safety and then
    // certified by re-checking exactness on a barycentric lattice.
    let mut lip0 = 0.0f64;
    for anchor in &anchors {
        for g in &anchor.gradients {
            lip0 = lip0.max(g.norm());
        }
    }
    let coarse = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ];
    let probes: Vec<(Point3<f64>, Vector3<f64>)> = anchors
        .iter()
        .flat_map(|a| coarse.iter().map(|&b| a.at_barycentric(b)))
        .collect();
    let min_sep = 1e-12 * p0.scale();
    for i in 0..probes.len() {
        for j in 0..i {
            let d = (probes[i].0 - probes[j].0).norm();
            if d > min_sep {
                let dv = probes[i].1 - probes[j].1;
                for comp in 0..3 {
                    lip0 = lip0.max(dv[comp].abs() / d);
                }
            }
        }
    }

    // A 15-point barycentric lattice per triangle; the inf-convolution must
    // reproduce the affine interpolant on all of it.
    let mut lattice = Vec::new();
    for i in 0..=4u32 {
        for j in 0..=(4 - i) {
            let k = 4 - i - j;
            lattice.push([i as f64 / 4.0, j as f64 / 4.0, k as f64 / 4.0]);
        }
    }
    let tol = 1e-12 * (1.0 + sup_value) + 1e-15;
    let mut lip = 1.2 * lip0;
    for _ in 0..8 {
        let exact = anchors.iter().all(|anchor| {
            lattice.iter().all(|&b| {
                let (p, v) = anchor.at_barycentric(b);
                let u = extension_value(&anchors, &component_range, sup_value, lip, &p);
                (u - v).norm() <= tol
            })
        });
        if exact {
            break;
        }
        lip *= 1.5;
    }

    let feature_radius = prior.feature_radius;
    let inner_radius = feature_radius / 8.0;
    let outer_radius = feature_radius / 4.0;
    // Product rule bound: the cutoff slope peaks at 1.5 / band width.
    let cutoff_slope = 1.5 / (outer_radius - inner_radius);
    let lipschitz = cutoff_slope * sup_value + 3.0f64.sqrt() * lip;

    Ok(DeformationField {
        boundary: p0.clone(),
        collar: collar0,
        anchors,
        component_range,
        extension_lipschitz: lip,
        inner_radius,
        outer_radius,
        feature_radius,
        sup_value,
        lipschitz,
    })
}

impl DeformationField {
    /// The collar carrying the affine part of the field.
    pub fn collar(&self) -> &TriangleCollar {
        &self.collar
    }

    /// The source polyhedron whose boundary the field displaces.
    pub fn boundary(&self) -> &Polyhedron {
        &self.boundary
    }

    /// Cached bound on `sup |U|`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_value
    }

    /// Lipschitz constant of the raw extension (before the cutoff).
    pub fn extension_lipschitz(&self) -> f64 {
        self.extension_lipschitz
    }

    /// Radius beyond which the field is identically zero.
    pub fn support_radius(&self) -> f64 {
        self.outer_radius
    }

    /// `C¹` taper profile in the distance to the source boundary.
    fn cutoff(&self, dist: f64) -> f64 {
        if dist <= self.inner_radius {
            1.0
        } else if dist >= self.outer_radius {
            0.0
        } else {
            let s = (dist - self.inner_radius) / (self.outer_radius - self.inner_radius);
            1.0 - s * s * (3.0 - 2.0 * s)
        }
    }

    /// Cheap reject: distance from `x` to the boundary's bounding box already
    /// exceeds the support radius.
    fn outside_support_box(&self, x: &Point3<f64>) -> bool {
        let (lo, hi) = self.boundary.bbox();
        let mut d2 = 0.0;
        for c in 0..3 {
            let excess = (lo[c] - x[c]).max(x[c] - hi[c]).max(0.0);
            d2 += excess * excess;
        }
        d2 > self.outer_radius * self.outer_radius
    }

    /// The anchor triangle owning `x`, if `x` lies on the collar (lowest
    /// triangle index wins on shared edges).
    fn owning_anchor(&self, x: &Point3<f64>) -> Option<&TriangleAnchor> {
        let plane_tol = 1e-9 * self.boundary.scale();
        self.anchors.iter().find(|anchor| {
            if (x - anchor.corners[0]).dot(&anchor.normal).abs() > plane_tol {
                return false;
            }
            let b = anchor.barycentric(x);
            b.iter().all(|&bi| bi >= -1e-9)
        })
    }

    /// Dumps a sampled `(x, U(x))` table as CSV, one boundary sample per row.
    pub fn dump_csv<W: Write>(&self, spacing: f64, out: &mut W) -> io::Result<()> {
        writeln!(out, "x,y,z,ux,uy,uz")?;
        for (p, _) in self.boundary.sample_boundary(spacing) {
            let u = self.value(&p);
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                p.x, p.y, p.z, u.x, u.y, u.z
            )?;
        }
        Ok(())
    }
}

impl VectorField for DeformationField {
    fn value(&self, x: &Point3<f64>) -> Vector3<f64> {
        if self.outside_support_box(x) {
            return Vector3::zeros();
        }
        let dist = self.boundary.distance_to_boundary(*x);
        if dist >= self.outer_radius {
            return Vector3::zeros();
        }
        extension_value(
            &self.anchors,
            &self.component_range,
            self.sup_value,
            self.extension_lipschitz,
            x,
        ) * self.cutoff(dist)
    }

    fn jacobian(&self, x: &Point3<f64>) -> Matrix3<f64> {
        if self.outside_support_box(x) {
            return Matrix3::zeros();
        }
        let dist = self.boundary.distance_to_boundary(*x);
        if dist >= self.outer_radius {
            return Matrix3::zeros();
        }
        // On the collar the field is exactly affine and the cutoff is flat, so
        // the Jacobian is the affine gradient itself.
        if let Some(anchor) = self.owning_anchor(x) {
            let mut m = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = anchor.gradients[i][j];
                }
            }
            return m;
        }
        let step = self.boundary.eps_geom().sqrt() * self.feature_radius;
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            let mut dx = Vector3::zeros();
            dx[j] = step;
            let fwd = self.value(&(x + dx));
            let bwd = self.value(&(x - dx));
            let col = (fwd - bwd) / (2.0 * step);
            for i in 0..3 {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::match_vertices;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn prior() -> AprioriData {
        AprioriData::new(0.15, PI / 6.0, 2.0, 1.0, 2.0, 2.0).unwrap()
    }

    fn base_cube() -> Polyhedron {
        Polyhedron::cube(Point3::new(0.0, 0.0, -0.1), 0.3)
    }

    /// A cube with every face split into two triangles, so that individual
    /// vertices can move without bending any face.
    fn split_cube() -> Polyhedron {
        let quad = base_cube();
        let verts = quad.vertices().to_vec();
        let mut faces = Vec::new();
        for loop_ in quad.faces() {
            faces.push(vec![loop_[0], loop_[1], loop_[2]]);
            faces.push(vec![loop_[0], loop_[2], loop_[3]]);
        }
        Polyhedron::from_faces(verts, faces).unwrap()
    }

    fn field_between(p0: &Polyhedron, p1: &Polyhedron) -> DeformationField {
        let pairing = match_vertices(p0, p1, 0.2).unwrap();
        build_field(p0, p1, &pairing, &prior()).unwrap()
    }

    fn field_for(p1: &Polyhedron) -> DeformationField {
        let p0 = base_cube();
        let pairing = match_vertices(&p0, p1, 0.2).unwrap();
        build_field(&p0, p1, &pairing, &prior()).unwrap()
    }

    #[test]
    fn identical_polyhedra_give_zero_field() {
        let field = field_for(&base_cube());
        let probes = [
            Point3::new(0.15, 0.0, -0.1),
            Point3::new(0.0, 0.0, 0.05),
            Point3::new(0.15, 0.15, 0.05),
            Point3::new(0.4, 0.4, 0.4),
        ];
        for p in probes {
            assert_eq!(field.value(&p), Vector3::zeros());
        }
        assert_eq!(field.sup_norm(), 0.0);
    }

    #[test]
    fn translation_reproduces_shift_on_boundary_and_tapers_off() {
        let shift = Vector3::new(0.01, -0.005, 0.0075);
        let p0 = base_cube();
        let field = field_for(&p0.translated(shift));

        // Exactly the shift everywhere on the source boundary.
        for (p, _) in p0.sample_boundary(0.06) {
            let u = field.value(&p);
            assert!((u - shift).norm() < 1e-10, "at {p:?}: {u:?}");
        }

        // At distance r0/6 the cutoff has dropped to 20/27.
        let probe = Point3::new(0.0, 0.0, 0.05 + 0.15 / 6.0);
        let expected = shift * (20.0 / 27.0);
        assert!((field.value(&probe) - expected).norm() < 1e-9);

        // Dead outside the support tube.
        let far = Point3::new(0.0, 0.0, 0.05 + 0.15 / 4.0 + 1e-6);
        assert_eq!(field.value(&far), Vector3::zeros());
        assert_eq!(field.jacobian(&far), Matrix3::zeros());
    }

    #[test]
    fn single_vertex_move_is_local_and_sup_bounded() {
        let p0 = split_cube();
        let mut shifts = vec![Vector3::zeros(); p0.vertices().len()];
        shifts[0] = Vector3::new(0.0, 0.0, 0.01);
        let p1 = p0.with_moved_vertices(&shifts).unwrap();
        let field = field_between(&p0, &p1);

        let moved = p0.vertices()[0];
        assert!((field.value(&moved) - shifts[0]).norm() < 1e-10);

        // The opposite vertex is an anchor with zero displacement.
        let far_vertex = p0
            .vertices()
            .iter()
            .copied()
            .max_by(|a, b| {
                (a - moved)
                    .norm()
                    .partial_cmp(&(b - moved).norm())
                    .unwrap()
            })
            .unwrap();
        assert!(field.value(&far_vertex).norm() < 1e-12);

        // Sup bound is preserved by the clamped extension.
        for (p, _) in p0.sample_boundary(0.03) {
            assert!(field.value(&p).norm() <= 0.01 + 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = Point3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.4..0.2),
            );
            assert!(field.value(&q).norm() <= 0.01 + 1e-9);
        }
    }

    #[test]
    fn matched_vertices_interpolated_exactly() {
        let p0 = base_cube();
        let lin = Matrix3::new(
            1.0, 0.015, -0.01, //
            0.008, 1.0, 0.012, //
            -0.01, 0.005, 1.0,
        );
        let shifts: Vec<Vector3<f64>> = p0
            .vertices()
            .iter()
            .map(|v| (lin - Matrix3::identity()) * v.coords + Vector3::new(0.004, 0.0, -0.003))
            .collect();
        let p1 = p0.with_moved_vertices(&shifts).unwrap();
        let field = field_for(&p1);
        for (i, v) in p0.vertices().iter().enumerate() {
            assert!(
                (field.value(v) - shifts[i]).norm() < 1e-10,
                "vertex {i} displacement not reproduced"
            );
        }
    }

    #[test]
    fn field_is_affine_on_every_collar_triangle() {
        let p0 = split_cube();
        let mut shifts = vec![Vector3::zeros(); p0.vertices().len()];
        shifts[3] = Vector3::new(0.006, -0.004, 0.008);
        shifts[5] = Vector3::new(-0.005, 0.002, 0.0);
        let p1 = p0.with_moved_vertices(&shifts).unwrap();
        let field = field_between(&p0, &p1);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for anchor in &field.anchors {
            for _ in 0..10 {
                let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                let b = [1.0 - u - v, u, v];
                let (p, expected) = anchor.at_barycentric(b);
                assert!(
                    (field.value(&p) - expected).norm() < 1e-10,
                    "extension disagrees with the affine interpolant"
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_affine_gradient_on_collar() {
        let p0 = split_cube();
        let mut shifts = vec![Vector3::zeros(); p0.vertices().len()];
        shifts[2] = Vector3::new(0.004, 0.009, -0.003);
        let p1 = p0.with_moved_vertices(&shifts).unwrap();
        let field = field_between(&p0, &p1);

        let anchor = &field.anchors[0];
        let (p, _) = anchor.at_barycentric([0.5, 0.3, 0.2]);
        let j = field.jacobian(&p);
        for i in 0..3 {
            for k in 0..3 {
                assert_relative_eq!(j[(i, k)], anchor.gradients[i][k], epsilon = 1e-12);
            }
        }

        // Off the collar the finite-difference Jacobian stays bounded by the
        // global Lipschitz estimate (each column is a directional difference
        // quotient, so the Frobenius norm picks up at most √3 of the bound).
        let q = Point3::new(0.11, 0.02, 0.06);
        let cap = field.lipschitz_bound() * 3.0f64.sqrt() * (1.0 + 1e-6);
        assert!(field.jacobian(&q).norm() <= cap);
    }

    #[test]
    fn scaled_families_keep_ratio_of_size_to_separation() {
        let p0 = base_cube();
        let mut ratios = Vec::new();
        for scale in [0.001, 0.004, 0.01] {
            let shift = Vector3::new(0.0, 0.0, scale);
            let field = field_for(&p0.translated(shift));
            ratios.push((field.sup_norm() + field.lipschitz_bound()) / scale);
        }
        let (lo, hi) = (
            ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            ratios.iter().cloned().fold(0.0, f64::max),
        );
        assert!(
            hi / lo < 1.5,
            "size-to-separation ratio drifts: {ratios:?}"
        );
    }

    #[test]
    fn mismatched_combinatorics_rejected() {
        let p0 = base_cube();
        // An octahedron look-alike with the same vertex count cannot exist;
        // instead pair the cube with itself under a deliberately corrupted
        // pairing that scrambles a face.
        let pairing = match_vertices(&p0, &p0, 0.1).unwrap();
        let mut bad = pairing.clone();
        bad.pairs[0].1 = pairing.pairs[1].1;
        bad.pairs[1].1 = pairing.pairs[0].1;
        let err = build_field(&p0, &p0, &bad, &prior()).unwrap_err();
        assert!(matches!(err, DeformationError::CollarMismatch(_)));
    }
}
