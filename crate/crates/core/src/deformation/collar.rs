//! Collars of isosceles triangles fringing every face of a polyhedron.
//!
//! Each face of the polyhedron receives one isosceles triangle per side: the
//! base spans the full side and the apex sits at a common height above the
//! side's midpoint, pointing into the face. On shapes satisfying the a-priori
//! bounds the triangles of one face are pairwise disjoint except for shared
//! face vertices, which is exactly what makes the piecewise-affine boundary
//! displacement of [`super::build_field`] well defined.

use nalgebra::{Point3, Vector3};

use super::DeformationError;
use crate::geometry::{AprioriData, Polyhedron};

/// One isosceles triangle of a face collar.
#[derive(Debug, Clone)]
pub struct CollarTriangle {
    /// Index of the owning face.
    pub face: usize,
    /// Global vertex indices of the base endpoints, in face-loop order.
    pub base_ids: [usize; 2],
    /// Base endpoint positions.
    pub base: [Point3<f64>; 2],
    /// Apex position, at the collar height above the base midpoint.
    pub apex: Point3<f64>,
}

impl CollarTriangle {
    /// The three corners in the order base start, base end, apex.
    pub fn corners(&self) -> [Point3<f64>; 3] {
        [self.base[0], self.base[1], self.apex]
    }
}

/// All collar triangles of a polyhedron, grouped by face.
#[derive(Debug, Clone)]
pub struct TriangleCollar {
    height: f64,
    triangles: Vec<CollarTriangle>,
    face_start: Vec<usize>,
}

impl TriangleCollar {
    /// Common height of every collar triangle.
    pub fn height(&self) -> f64 {
        self.height
    }

    /// All triangles, grouped contiguously by owning face.
    pub fn triangles(&self) -> &[CollarTriangle] {
        &self.triangles
    }

    /// The triangles belonging to one face.
    pub fn face_triangles(&self, face: usize) -> &[CollarTriangle] {
        &self.triangles[self.face_start[face]..self.face_start[face + 1]]
    }
}

/// Builds the triangle collar of `poly` with the height dictated by `prior`.
///
/// Fails with [`DeformationError::InadmissibleFace`] when some face cannot
/// host disjoint triangles of that height — which inputs satisfying the
/// a-priori geometric bounds never trigger.
pub fn collar_triangulation(
    poly: &Polyhedron,
    prior: &AprioriData,
) -> Result<TriangleCollar, DeformationError> {
    let height = prior.collar_height();
    let verts = poly.vertices();
    let eps = 1e-9 * poly.scale();

    let mut triangles = Vec::new();
    let mut face_start = vec![0usize];

    for (fi, loop_) in poly.faces().iter().enumerate() {
        let normal = poly.face_normal(fi);
        let (e1, e2) = plane_frame(&normal);
        let origin = verts[loop_[0]];
        let project =
            |p: &Point3<f64>| -> (f64, f64) { ((p - origin).dot(&e1), (p - origin).dot(&e2)) };

        let ring: Vec<(f64, f64)> = loop_.iter().map(|&vi| project(&verts[vi])).collect();
        let k = loop_.len();
        let mut flat: Vec<[(f64, f64); 3]> = Vec::with_capacity(k);

        for s in 0..k {
            let (ia, ib) = (loop_[s], loop_[(s + 1) % k]);
            let (pa, pb) = (verts[ia], verts[ib]);
            let dir = pb - pa;
            let inward = normal.cross(&dir).normalize();
            let apex = Point3::from((pa.coords + pb.coords) / 2.0 + inward * height);

            let tri = [project(&pa), project(&pb), project(&apex)];
            if !inside_polygon(tri[2], &ring, eps) {
                return Err(DeformationError::InadmissibleFace {
                    face: fi,
                    detail: format!("apex of the triangle on side {s} leaves the face"),
                });
            }
            for (t, other) in flat.iter().enumerate() {
                if triangles_overlap(&tri, other, eps) {
                    return Err(DeformationError::InadmissibleFace {
                        face: fi,
                        detail: format!("triangles on sides {t} and {s} overlap"),
                    });
                }
            }
            for b in 0..k {
                let seg = [ring[b], ring[(b + 1) % k]];
                if segment_crosses_triangle(&seg, &tri, eps) {
                    return Err(DeformationError::InadmissibleFace {
                        face: fi,
                        detail: format!("side {b} cuts through the triangle on side {s}"),
                    });
                }
            }

            flat.push(tri);
            triangles.push(CollarTriangle {
                face: fi,
                base_ids: [ia, ib],
                base: [pa, pb],
                apex,
            });
        }
        face_start.push(triangles.len());
    }

    Ok(TriangleCollar {
        height,
        triangles,
        face_start,
    })
}

/// Right-handed in-plane frame `(e1, e2)` with `e1 × e2 = n`.
fn plane_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let pivot = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = n.cross(&pivot).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Parity-based strict containment: inside, and at least `margin` away from
/// every boundary segment.
fn inside_polygon(p: (f64, f64), ring: &[(f64, f64)], margin: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if segment_distance(p, a, b) < margin {
            return false;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x_cross = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
            if p.0 < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// Penetration depth of two point sets along a unit axis; non-positive means
/// the axis separates them.
fn axis_penetration(axis: (f64, f64), a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let range = |pts: &[(f64, f64)]| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in pts {
            let s = p.0 * axis.0 + p.1 * axis.1;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    };
    let (alo, ahi) = range(a);
    let (blo, bhi) = range(b);
    ahi.min(bhi) - alo.max(blo)
}

fn edge_normals(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = pts.len();
    let mut axes = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len > 0.0 {
            axes.push((-dy / len, dx / len));
        }
    }
    axes
}

/// Separating-axis test: do two triangles overlap with more than `eps` of
/// interior penetration?  Touching at shared vertices or along grazing
/// contacts counts as disjoint.
fn triangles_overlap(a: &[(f64, f64); 3], b: &[(f64, f64); 3], eps: f64) -> bool {
    let mut axes = edge_normals(a);
    axes.extend(edge_normals(b));
    axes.into_iter()
        .all(|axis| axis_penetration(axis, a, b) > eps)
}

/// Does the segment pass through the triangle's interior (beyond `eps`)?
fn segment_crosses_triangle(seg: &[(f64, f64); 2], tri: &[(f64, f64); 3], eps: f64) -> bool {
    let mut axes = edge_normals(tri);
    let (dx, dy) = (seg[1].0 - seg[0].0, seg[1].1 - seg[0].1);
    let len = (dx * dx + dy * dy).sqrt();
    if len > 0.0 {
        axes.push((-dy / len, dx / len));
        axes.push((dx / len, dy / len));
    }
    axes.into_iter()
        .all(|axis| axis_penetration(axis, seg, tri) > eps)
}
