//! A-priori class membership: quantitative non-degeneracy checks for an
//! inclusion inside its domain.
//!
//! Every check reports a signed margin (positive = satisfied with room to
//! spare) so callers can see how close a shape sits to the class boundary.

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::domain::{OmegaShape, SigmaPatch};
use super::polyhedron::{GeometryError, Polyhedron};

/// Quantitative a-priori bounds defining the admissible class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriData {
    /// Lower bound r₀ on feature sizes: edge lengths, face inscribed-disc
    /// radius, separation from ∂Ω, and the scale of the Lipschitz cones.
    pub feature_radius: f64,
    /// Angle bound θ₀ ∈ (0, π/2): dihedral and in-face angles must stay in
    /// (θ₀, π−θ₀) ∪ (π+θ₀, 2π−θ₀).
    pub angle_bound: f64,
    /// Bound M₀ on the Lipschitz constant of local graph representations of
    /// the boundary; enters through cones of half-aperture arctan(1/M₀).
    pub slope_bound: f64,
    /// Floor κ₀ for the contrast combination k + |k−1|.
    pub contrast_floor: f64,
    /// Upper bound R₀ on the diameter of the domain Ω.
    pub diameter_bound: f64,
    /// Conductivity contrast k of the inclusion (background is 1).
    pub contrast: f64,
}

impl AprioriData {
    pub fn new(
        feature_radius: f64,
        angle_bound: f64,
        slope_bound: f64,
        contrast_floor: f64,
        diameter_bound: f64,
        contrast: f64,
    ) -> Result<Self, GeometryError> {
        let data = AprioriData {
            feature_radius,
            angle_bound,
            slope_bound,
            contrast_floor,
            diameter_bound,
            contrast,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let fail = |msg: String| Err(GeometryError::InvalidPrior(msg));
        if !self.feature_radius.is_finite() || self.feature_radius <= 0.0 {
            return fail(format!("feature radius {} must be positive", self.feature_radius));
        }
        if !self.angle_bound.is_finite() || self.angle_bound <= 0.0 || self.angle_bound >= PI / 2.0 {
            return fail(format!("angle bound {} must lie in (0, pi/2)", self.angle_bound));
        }
        if !self.slope_bound.is_finite() || self.slope_bound <= 0.0 {
            return fail(format!("slope bound {} must be positive", self.slope_bound));
        }
        if !self.contrast_floor.is_finite() || self.contrast_floor <= 0.0 {
            return fail(format!("contrast floor {} must be positive", self.contrast_floor));
        }
        if !self.diameter_bound.is_finite() || self.diameter_bound < self.feature_radius {
            return fail(format!(
                "diameter bound {} must be at least the feature radius {}",
                self.diameter_bound, self.feature_radius
            ));
        }
        if !self.contrast.is_finite() || self.contrast <= 0.0 {
            return fail(format!("contrast {} must be positive", self.contrast));
        }
        if self.contrast + (self.contrast - 1.0).abs() < self.contrast_floor {
            return fail(format!(
                "contrast {} violates the floor: k + |k-1| = {} < {}",
                self.contrast,
                self.contrast + (self.contrast - 1.0).abs(),
                self.contrast_floor
            ));
        }
        Ok(())
    }

    /// Half-aperture arctan(1/M₀) of the Lipschitz test cones.
    pub fn cone_half_aperture(&self) -> f64 {
        (1.0 / self.slope_bound).atan()
    }

    /// Apothem (axis length) r₀/2 of the Lipschitz test cones.
    pub fn cone_apothem(&self) -> f64 {
        self.feature_radius / 2.0
    }

    /// Height of the boundary collar on which deformation fields are exact:
    /// r₀·min{1, tan(θ₀/2)}/2.
    pub fn collar_height(&self) -> f64 {
        self.feature_radius * 1.0f64.min((self.angle_bound / 2.0).tan()) / 2.0
    }
}

/// One named admissibility check with its signed margin.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Positive when satisfied; units depend on the check (length or radians).
    pub margin: f64,
    pub detail: String,
}

/// Outcome of all admissibility checks for one inclusion.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    pub admissible: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Runs every admissibility check of the class against one inclusion.
pub fn validate_admissibility(
    poly: &Polyhedron,
    omega: &OmegaShape,
    sigma: &SigmaPatch,
    prior: &AprioriData,
) -> ValidationReport {
    let mut checks = Vec::new();

    // Contrast floor k + |k−1| ≥ κ₀.
    let combo = prior.contrast + (prior.contrast - 1.0).abs();
    checks.push(CheckOutcome {
        name: "contrast_floor".into(),
        passed: combo >= prior.contrast_floor,
        margin: combo - prior.contrast_floor,
        detail: format!("k + |k-1| = {combo:.6}"),
    });

    // Domain diameter within the a-priori bound.
    let diam = omega.diameter();
    checks.push(CheckOutcome {
        name: "domain_diameter".into(),
        passed: diam <= prior.diameter_bound,
        margin: prior.diameter_bound - diam,
        detail: format!("diam = {diam:.6}"),
    });

    // Separation dist(D, ∂Ω) ≥ r₀. The signed distance to ∂Ω is concave on
    // the solid for boxes and balls, so its minimum over D sits at a vertex.
    let sep = poly
        .vertices()
        .iter()
        .map(|&v| omega.signed_boundary_distance(v))
        .fold(f64::INFINITY, f64::min);
    checks.push(CheckOutcome {
        name: "boundary_separation".into(),
        passed: sep >= prior.feature_radius,
        margin: sep - prior.feature_radius,
        detail: format!("dist(D, boundary) = {sep:.6}"),
    });

    checks.push(dihedral_check(poly, prior));
    checks.push(face_angle_check(poly, prior));

    // Edge lengths ≥ r₀.
    let (min_edge, min_edge_idx) = poly
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| ((poly.vertices()[e.a] - poly.vertices()[e.b]).norm(), i))
        .fold((f64::INFINITY, 0), |acc, (l, i)| if l < acc.0 { (l, i) } else { acc });
    checks.push(CheckOutcome {
        name: "edge_lengths".into(),
        passed: min_edge >= prior.feature_radius - 1e-9 * poly.scale(),
        margin: min_edge - prior.feature_radius,
        detail: format!("shortest edge {min_edge:.6} (edge {min_edge_idx})"),
    });

    checks.push(inscribed_disc_check(poly, prior));
    checks.push(cone_check(poly, omega, prior));

    // Accessible patch deep enough inside ∂Ω: some point of Σ must keep
    // distance r₀ from ∂Ω∖Σ.
    let reach = sigma.interior_margin(omega);
    checks.push(CheckOutcome {
        name: "sigma_reach".into(),
        passed: reach >= prior.feature_radius,
        margin: reach - prior.feature_radius,
        detail: format!("max dist(Sigma, boundary minus Sigma) = {reach:.6}"),
    });

    let admissible = checks.iter().all(|c| c.passed);
    ValidationReport { checks, admissible }
}

/// Margin of an angle α with respect to the two admissible windows
/// (θ₀, π−θ₀) ∪ (π+θ₀, 2π−θ₀); positive inside either window.
fn angle_window_margin(alpha: f64, theta0: f64) -> f64 {
    let in_window = |lo: f64, hi: f64| (alpha - lo).min(hi - alpha);
    in_window(theta0, PI - theta0).max(in_window(PI + theta0, 2.0 * PI - theta0))
}

/// Interior dihedral angle along each edge, in (0, 2π); reflex edges exceed π.
pub fn dihedral_angles(poly: &Polyhedron) -> Vec<f64> {
    poly.edges()
        .iter()
        .map(|e| {
            let f1 = e.faces[0];
            let f2 = e.faces[1];
            let t1 = traversal_direction(poly, f1, e.a, e.b)
                .expect("edge must appear in its adjacent face");
            let n1 = poly.face_normal(f1);
            let n2 = poly.face_normal(f2);
            let w1 = n1.cross(&t1).normalize();
            let w2 = n2.cross(&(-t1)).normalize();
            // In the frame (w1, n1) of the plane orthogonal to the edge, the
            // solid wedge opens from w1 towards −n1 and around to w2.
            let phi = w2.dot(&n1).atan2(w2.dot(&w1));
            (-phi).rem_euclid(2.0 * PI)
        })
        .collect()
}

/// Direction of the edge (a, b) as traversed by face `fi`, or None if the
/// face traverses it as (b, a).
fn traversal_direction(poly: &Polyhedron, fi: usize, a: usize, b: usize) -> Option<Vector3<f64>> {
    let loop_ = &poly.faces()[fi];
    let m = loop_.len();
    for i in 0..m {
        let (p, q) = (loop_[i], loop_[(i + 1) % m]);
        if p == a && q == b {
            return Some(poly.vertices()[b] - poly.vertices()[a]);
        }
        if p == b && q == a {
            return Some(poly.vertices()[a] - poly.vertices()[b]);
        }
    }
    None
}

fn dihedral_check(poly: &Polyhedron, prior: &AprioriData) -> CheckOutcome {
    let angles = dihedral_angles(poly);
    let (margin, worst) = angles
        .iter()
        .enumerate()
        .map(|(i, &a)| (angle_window_margin(a, prior.angle_bound), i))
        .fold((f64::INFINITY, 0), |acc, (m, i)| if m < acc.0 { (m, i) } else { acc });
    CheckOutcome {
        name: "dihedral_angles".into(),
        passed: margin >= -1e-9,
        margin,
        detail: format!(
            "worst edge {worst} at {:.6} rad",
            angles.get(worst).copied().unwrap_or(f64::NAN)
        ),
    }
}

/// Interior angle of each face polygon at each of its vertices, in (0, 2π).
pub fn face_vertex_angles(poly: &Polyhedron, fi: usize) -> Vec<f64> {
    let loop_ = &poly.faces()[fi];
    let n = poly.face_normal(fi);
    let m = loop_.len();
    (0..m)
        .map(|i| {
            let v = poly.vertices()[loop_[i]];
            let prev = poly.vertices()[loop_[(i + m - 1) % m]];
            let next = poly.vertices()[loop_[(i + 1) % m]];
            let a = next - v;
            let b = prev - v;
            let phi = a.cross(&b).dot(&n).atan2(a.dot(&b));
            phi.rem_euclid(2.0 * PI)
        })
        .collect()
}

fn face_angle_check(poly: &Polyhedron, prior: &AprioriData) -> CheckOutcome {
    let mut margin = f64::INFINITY;
    let mut detail = String::new();
    for fi in 0..poly.faces().len() {
        for (vi, &a) in face_vertex_angles(poly, fi).iter().enumerate() {
            let m = angle_window_margin(a, prior.angle_bound);
            if m < margin {
                margin = m;
                detail = format!("worst at face {fi} corner {vi}: {a:.6} rad");
            }
        }
    }
    CheckOutcome {
        name: "face_vertex_angles".into(),
        passed: margin >= -1e-9,
        margin,
        detail,
    }
}

/// Radius of the largest disc inscribed in face `fi`, computed exactly for
/// convex faces (dual linear program) and by refined grid search otherwise.
pub fn inscribed_disc_radius(poly: &Polyhedron, fi: usize) -> f64 {
    let loop_ = &poly.faces()[fi];
    let n = poly.face_normal(fi);
    let origin = poly.vertices()[loop_[0]];
    let e1 = (poly.vertices()[loop_[1]] - origin).normalize();
    let e2 = n.cross(&e1);
    let mut pts: Vec<Point2<f64>> = loop_
        .iter()
        .map(|&vi| {
            let d = poly.vertices()[vi] - origin;
            Point2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();
    // Work with counter-clockwise orientation.
    if polygon_signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    if polygon_is_convex(&pts) {
        inscribed_disc_convex(&pts)
    } else {
        inscribed_disc_grid(&pts)
    }
}

fn polygon_signed_area(pts: &[Point2<f64>]) -> f64 {
    let m = pts.len();
    let mut s = 0.0;
    for i in 0..m {
        let p = pts[i];
        let q = pts[(i + 1) % m];
        s += p.x * q.y - q.x * p.y;
    }
    s / 2.0
}

fn polygon_is_convex(pts: &[Point2<f64>]) -> bool {
    let m = pts.len();
    let span = polygon_span(pts);
    (0..m).all(|i| {
        let a = pts[i];
        let b = pts[(i + 1) % m];
        let c = pts[(i + 2) % m];
        (b - a).perp(&(c - b)) >= -1e-12 * span * span
    })
}

fn polygon_span(pts: &[Point2<f64>]) -> f64 {
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in pts {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).norm()
}

/// Chebyshev center of a convex polygon: maximize r subject to
/// mᵢ·c − r ≥ mᵢ·pᵢ over inward edge normals mᵢ. The optimum has three
/// active constraints, so enumerating edge triples is exact.
fn inscribed_disc_convex(pts: &[Point2<f64>]) -> f64 {
    let m = pts.len();
    let span = polygon_span(pts);
    let normals: Vec<(Vector2<f64>, f64)> = (0..m)
        .map(|i| {
            let p = pts[i];
            let q = pts[(i + 1) % m];
            let t = (q - p).normalize();
            let inward = Vector2::new(-t.y, t.x);
            (inward, inward.dot(&p.coords))
        })
        .collect();
    let feasible = |c: Vector2<f64>, r: f64| {
        normals
            .iter()
            .all(|(mi, bi)| mi.dot(&c) - r >= bi - 1e-12 * span.max(1.0))
    };
    let mut best = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                let rows = [&normals[i], &normals[j], &normals[k]];
                let a = Matrix3::new(
                    rows[0].0.x, rows[0].0.y, -1.0,
                    rows[1].0.x, rows[1].0.y, -1.0,
                    rows[2].0.x, rows[2].0.y, -1.0,
                );
                let b = Vector3::new(rows[0].1, rows[1].1, rows[2].1);
                if let Some(sol) = a.lu().solve(&b) {
                    let c = Vector2::new(sol.x, sol.y);
                    let r = sol.z;
                    if r.is_finite() && r > best && feasible(c, r) {
                        best = r;
                    }
                }
            }
        }
    }
    best
}

/// Largest clearance over a refined grid, for non-convex simple polygons.
/// Accuracy is a small multiple of span·0.4⁶/48 ≈ 10⁻⁴·span.
fn inscribed_disc_grid(pts: &[Point2<f64>]) -> f64 {
    let m = pts.len();
    let clearance = |c: Point2<f64>| -> f64 {
        if !point_in_polygon(pts, c) {
            return f64::NEG_INFINITY;
        }
        (0..m)
            .map(|i| segment_distance_2d(c, pts[i], pts[(i + 1) % m]))
            .fold(f64::INFINITY, f64::min)
    };
    let (mut lo, mut hi) = (
        Point2::new(f64::INFINITY, f64::INFINITY),
        Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let mut center = Point2::from((lo.coords + hi.coords) / 2.0);
    let mut span = (hi - lo).amax();
    let mut best = clearance(center).max(0.0);
    let mut best_at = center;
    for level in 0..7 {
        let cells = if level == 0 { 48 } else { 16 };
        for i in 0..=cells {
            for j in 0..=cells {
                let c = Point2::new(
                    center.x - span / 2.0 + span * i as f64 / cells as f64,
                    center.y - span / 2.0 + span * j as f64 / cells as f64,
                );
                let v = clearance(c);
                if v > best {
                    best = v;
                    best_at = c;
                }
            }
        }
        center = best_at;
        span *= 0.4;
    }
    best
}

fn point_in_polygon(pts: &[Point2<f64>], c: Point2<f64>) -> bool {
    let m = pts.len();
    let mut inside = false;
    for i in 0..m {
        let p = pts[i];
        let q = pts[(i + 1) % m];
        if (p.y > c.y) != (q.y > c.y) {
            let x = p.x + (c.y - p.y) / (q.y - p.y) * (q.x - p.x);
            if c.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segment_distance_2d(c: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let t = ((c - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (c - (a + ab * t)).norm()
}

fn inscribed_disc_check(poly: &Polyhedron, prior: &AprioriData) -> CheckOutcome {
    let (min_r, worst) = (0..poly.faces().len())
        .map(|fi| (inscribed_disc_radius(poly, fi), fi))
        .fold((f64::INFINITY, 0), |acc, (r, i)| if r < acc.0 { (r, i) } else { acc });
    // Grid-search faces carry a small approximation error; allow for it.
    let tol = 2e-3 * prior.feature_radius;
    CheckOutcome {
        name: "face_inscribed_discs".into(),
        passed: min_r >= prior.feature_radius - tol,
        margin: min_r - prior.feature_radius,
        detail: format!("smallest inscribed disc {min_r:.6} (face {worst})"),
    }
}

/// Evenly distributed unit directions (spherical Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * (i as f64 / golden).fract();
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Two-sided cone margin at one boundary point.
///
/// Searches over axis directions for an exterior cone (contained in the
/// closure of Ω∖D) and an interior cone (contained in the closure of D),
/// both with apex at `p`, apothem r₀/2 and half-aperture arctan(1/M₀), and
/// returns min(best exterior margin, best interior margin). Non-negative
/// means both cones fit up to sampling of the cone bodies.
pub fn cone_margin_at(
    poly: &Polyhedron,
    omega: Option<&OmegaShape>,
    p: Point3<f64>,
    prior: &AprioriData,
) -> f64 {
    let apothem = prior.cone_apothem();
    let aperture = prior.cone_half_aperture();
    let eval = |axis: Vector3<f64>| cone_extremes(poly, omega, p, axis, apothem, aperture);

    // Candidate axes: normals of the faces meeting p, their sums (which give
    // edge and corner bisectors), and a global direction lattice.
    let eps = 1e-7 * poly.scale();
    let incident: Vec<Vector3<f64>> = (0..poly.faces().len())
        .filter(|&fi| face_distance(poly, fi, p) <= eps)
        .map(|fi| poly.face_normal(fi))
        .collect();
    let mut axes: Vec<Vector3<f64>> = Vec::new();
    for &n in &incident {
        axes.push(n);
        axes.push(-n);
    }
    for i in 0..incident.len() {
        for j in (i + 1)..incident.len() {
            if let Some(s) = (incident[i] + incident[j]).try_normalize(1e-12) {
                axes.push(s);
                axes.push(-s);
            }
        }
    }
    if incident.len() > 2 {
        if let Some(s) = incident.iter().sum::<Vector3<f64>>().try_normalize(1e-12) {
            axes.push(s);
            axes.push(-s);
        }
    }
    axes.extend(fibonacci_sphere(48));

    let mut best_ext = f64::NEG_INFINITY;
    let mut best_int = f64::NEG_INFINITY;
    let mut ext_axis = Vector3::z();
    let mut int_axis = -Vector3::z();
    for &axis in &axes {
        let (ext, int) = eval(axis);
        if ext > best_ext {
            best_ext = ext;
            ext_axis = axis;
        }
        if int > best_int {
            best_int = int;
            int_axis = axis;
        }
    }
    best_ext = polish_axis(ext_axis, best_ext, |a| eval(a).0);
    best_int = polish_axis(int_axis, best_int, |a| eval(a).1);
    best_ext.min(best_int)
}

/// Greedy local search over the axis sphere, returning the improved margin.
fn polish_axis<F>(mut axis: Vector3<f64>, mut value: f64, f: F) -> f64
where
    F: Fn(Vector3<f64>) -> f64,
{
    let mut step = 0.4;
    for _ in 0..14 {
        let pivot = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = axis.cross(&pivot).normalize();
        let v = axis.cross(&u);
        let mut moved = false;
        for cand in [
            (axis + u * step).normalize(),
            (axis - u * step).normalize(),
            (axis + v * step).normalize(),
            (axis - v * step).normalize(),
        ] {
            let val = f(cand);
            if val > value {
                value = val;
                axis = cand;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    value
}

/// (exterior, interior) margins of the cone with the given axis: the minimum
/// over body samples of the signed distance to the outside of D (clipped by
/// Ω), respectively to the inside of D.
fn cone_extremes(
    poly: &Polyhedron,
    omega: Option<&OmegaShape>,
    apex: Point3<f64>,
    axis: Vector3<f64>,
    apothem: f64,
    aperture: f64,
) -> (f64, f64) {
    let pivot = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = axis.cross(&pivot).normalize();
    let v = axis.cross(&u);
    let mut ext = f64::INFINITY;
    let mut int = f64::INFINITY;
    // Geometric depth ladder: pinch violations near a reentrant corner live at
    // depths far below the apothem, so the samples must crowd toward the apex.
    for depth in [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0] {
        let s = apothem * depth;
        let base = apex + axis * s;
        let mut probe = |q: Point3<f64>| {
            let sd = poly.signed_distance(q);
            let clip = omega.map_or(f64::INFINITY, |o| o.signed_boundary_distance(q));
            ext = ext.min(sd.min(clip));
            int = int.min(-sd);
        };
        probe(base);
        for (count, angle) in [(6usize, aperture), (3usize, aperture / 2.0)] {
            let radius = s * angle.tan();
            for a in 0..count {
                let phi = 2.0 * PI * a as f64 / count as f64;
                probe(base + (u * phi.cos() + v * phi.sin()) * radius);
            }
        }
    }
    (ext, int)
}

fn face_distance(poly: &Polyhedron, fi: usize, p: Point3<f64>) -> f64 {
    poly.triangles()
        .filter(|(_, f)| *f == fi)
        .map(|(t, _)| {
            super::polyhedron::point_triangle_distance(
                p,
                poly.vertices()[t[0]],
                poly.vertices()[t[1]],
                poly.vertices()[t[2]],
            )
        })
        .fold(f64::INFINITY, f64::min)
}

fn cone_check(poly: &Polyhedron, omega: &OmegaShape, prior: &AprioriData) -> CheckOutcome {
    // Sample the boundary at the feature scale; vertices and edge points are
    // included, which is where the criterion binds on polyhedra.
    let mut samples: Vec<Point3<f64>> = poly
        .sample_boundary(prior.feature_radius)
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    samples.sort_by(|a, b| {
        (a.x, a.y, a.z)
            .partial_cmp(&(b.x, b.y, b.z))
            .expect("boundary samples are finite")
    });
    samples.dedup();

    let margins: Vec<f64> = samples
        .par_iter()
        .map(|&p| cone_margin_at(poly, Some(omega), p, prior))
        .collect();
    let (margin, worst) = margins
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, i))
        .fold((f64::INFINITY, 0), |acc, (m, i)| if m < acc.0 { (m, i) } else { acc });
    let tol = 1e-8 * poly.scale();
    CheckOutcome {
        name: "lipschitz_cones".into(),
        passed: margin >= -tol,
        margin,
        detail: format!(
            "worst sample at ({:.4}, {:.4}, {:.4}) over {} samples",
            samples[worst].x,
            samples[worst].y,
            samples[worst].z,
            samples.len()
        ),
    }
}

/// A prism over a "bowtie" polygon: two unit bricks sharing only a thin
/// square neck of half-width `delta`. Manifold and angle-admissible, but the
/// interior Lipschitz cone fails at the neck corners — the standard example
/// showing why the class needs the cone condition on top of angle bounds.
pub fn bowtie_bricks(delta: f64) -> Result<Polyhedron, GeometryError> {
    assert!(delta > 0.0 && delta < 0.5);
    let profile: [(f64, f64); 12] = [
        (0.0, 0.0),
        (1.0, 0.0),
        (1.0, 1.0 - delta),
        (1.0 + delta, 1.0 - delta),
        (1.0 + delta, 1.0),
        (2.0, 1.0),
        (2.0, 2.0),
        (1.0, 2.0),
        (1.0, 1.0 + delta),
        (1.0 - delta, 1.0 + delta),
        (1.0 - delta, 1.0),
        (0.0, 1.0),
    ];
    let m = profile.len();
    let mut vertices = Vec::with_capacity(2 * m);
    for &(x, z) in &profile {
        vertices.push(Point3::new(x, 0.0, z));
    }
    for &(x, z) in &profile {
        vertices.push(Point3::new(x, 1.0, z));
    }
    let mut faces: Vec<Vec<usize>> = Vec::with_capacity(m + 2);
    faces.push((0..m).collect());
    faces.push((0..m).map(|i| m + i).collect());
    for i in 0..m {
        let j = (i + 1) % m;
        faces.push(vec![i, j, m + j, m + i]);
    }
    Polyhedron::from_faces(vertices, faces)
}
