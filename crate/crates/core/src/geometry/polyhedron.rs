//! Closed, oriented polyhedral surfaces bounding a solid.
//!
//! A [`Polyhedron`] is built from a vertex list and planar face loops. The
//! constructor repairs inconsistent loop orientations, rejects non-manifold
//! or topologically wrong input, and caches the derived data (edges, face
//! planes, a boundary triangulation) that every downstream query uses.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::{EPS_GEOM_REL, EPS_PLANAR_REL};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-manifold surface: {0}")]
    NonManifold(String),
    #[error("face {face} deviates from its plane by {deviation:.3e} (tolerance {tolerance:.3e})")]
    NonPlanarFace {
        face: usize,
        deviation: f64,
        tolerance: f64,
    },
    #[error("Euler characteristic is {got}, expected 2 (V={v}, E={e}, F={f})")]
    WrongEuler { got: i64, v: usize, e: usize, f: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("vertex counts differ: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("ambiguous vertex pairing: two assignments within {0:.3e} of equal cost")]
    AmbiguousMatch(f64),
    #[error("pair ({index}) at distance {distance:.3e} exceeds the matching threshold {threshold:.3e}")]
    PairTooFar {
        index: usize,
        distance: f64,
        threshold: f64,
    },
    #[error("voxel resolution {resolution} too coarse: feature of size {feature:.3e} needs at least 2 voxels ({voxel:.3e} each)")]
    ResolutionTooCoarse {
        resolution: usize,
        feature: f64,
        voxel: f64,
    },
    #[error("invalid a-priori data: {0}")]
    InvalidPrior(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed OFF data: {0}")]
    Parse(String),
}

/// Result of a point-membership query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Inside,
    OnBoundary,
    Outside,
}

/// An undirected edge of the surface with its two incident faces.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub faces: [usize; 2],
}

/// A closed, outward-oriented polyhedral surface and the solid it bounds.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    vertices: Vec<Point3<f64>>,
    faces: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    face_normals: Vec<Vector3<f64>>,
    face_offsets: Vec<f64>,
    tris: Vec<[usize; 3]>,
    tri_face: Vec<usize>,
    scale: f64,
    volume: f64,
}

impl Polyhedron {
    /// Builds a polyhedron from vertices and face loops.
    ///
    /// Face loops may come in inconsistent orientations; they are repaired so
    /// that every edge is traversed once in each direction and the enclosed
    /// signed volume is positive. Fails on non-manifold edges, non-planar
    /// faces (tolerance `1e-9` relative to the bounding-box diagonal), and
    /// surfaces whose Euler characteristic is not 2.
    pub fn from_faces(
        vertices: Vec<Point3<f64>>,
        faces: Vec<Vec<usize>>,
    ) -> Result<Self, GeometryError> {
        if vertices.len() < 4 {
            return Err(GeometryError::Degenerate(format!(
                "{} vertices cannot bound a solid",
                vertices.len()
            )));
        }
        let mut faces = faces;
        for (fi, loop_) in faces.iter().enumerate() {
            if loop_.len() < 3 {
                return Err(GeometryError::Degenerate(format!(
                    "face {fi} has {} vertices",
                    loop_.len()
                )));
            }
            for &v in loop_ {
                if v >= vertices.len() {
                    return Err(GeometryError::Degenerate(format!(
                        "face {fi} references vertex {v} out of range"
                    )));
                }
            }
            for i in 0..loop_.len() {
                for j in (i + 1)..loop_.len() {
                    if loop_[i] == loop_[j] {
                        return Err(GeometryError::Degenerate(format!(
                            "face {fi} repeats vertex {}",
                            loop_[i]
                        )));
                    }
                }
            }
        }

        let scale = bbox_diagonal(&vertices);
        if scale <= 0.0 {
            return Err(GeometryError::Degenerate("all vertices coincide".into()));
        }

        orient_consistently(&mut faces)?;

        // Edge table: every undirected edge must now be traversed exactly once
        // in each direction.
        let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, loop_) in faces.iter().enumerate() {
            for i in 0..loop_.len() {
                let a = loop_[i];
                let b = loop_[(i + 1) % loop_.len()];
                let key = (a.min(b), a.max(b));
                edge_map.entry(key).or_default().push(fi);
            }
        }
        let mut edges = Vec::with_capacity(edge_map.len());
        let mut keys: Vec<_> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let incident = &edge_map[&key];
            if incident.len() != 2 {
                return Err(GeometryError::NonManifold(format!(
                    "edge ({}, {}) belongs to {} faces",
                    key.0,
                    key.1,
                    incident.len()
                )));
            }
            edges.push(Edge {
                a: key.0,
                b: key.1,
                faces: [incident[0], incident[1]],
            });
        }

        let (v, e, f) = (vertices.len(), edges.len(), faces.len());
        let euler = v as i64 - e as i64 + f as i64;
        if euler != 2 {
            return Err(GeometryError::WrongEuler { got: euler, v, e, f });
        }

        // Face planes by Newell's method; verify planarity.
        let eps_planar = EPS_PLANAR_REL * scale;
        let mut face_normals = Vec::with_capacity(faces.len());
        let mut face_offsets = Vec::with_capacity(faces.len());
        for (fi, loop_) in faces.iter().enumerate() {
            let mut n = Vector3::zeros();
            let mut centroid = Vector3::zeros();
            for i in 0..loop_.len() {
                let p = vertices[loop_[i]].coords;
                let q = vertices[loop_[(i + 1) % loop_.len()]].coords;
                n += p.cross(&q);
                centroid += p;
            }
            centroid /= loop_.len() as f64;
            let area2 = n.norm();
            if area2 <= eps_planar * scale {
                return Err(GeometryError::Degenerate(format!(
                    "face {fi} has vanishing area"
                )));
            }
            let n = n / area2;
            let d = n.dot(&centroid);
            let deviation = loop_
                .iter()
                .map(|&v| (n.dot(&vertices[v].coords) - d).abs())
                .fold(0.0, f64::max);
            if deviation > eps_planar {
                return Err(GeometryError::NonPlanarFace {
                    face: fi,
                    deviation,
                    tolerance: eps_planar,
                });
            }
            face_normals.push(n);
            face_offsets.push(d);
        }

        // Triangulate faces (fan from the first loop vertex) and orient globally.
        let mut poly = Polyhedron {
            vertices,
            faces,
            edges,
            face_normals,
            face_offsets,
            tris: Vec::new(),
            tri_face: Vec::new(),
            scale,
            volume: 0.0,
        };
        poly.retriangulate();
        if poly.volume < 0.0 {
            for loop_ in &mut poly.faces {
                loop_.reverse();
            }
            for n in &mut poly.face_normals {
                *n = -*n;
            }
            for d in &mut poly.face_offsets {
                *d = -*d;
            }
            poly.retriangulate();
        }
        if poly.volume <= (EPS_GEOM_REL * poly.scale).powi(3) {
            return Err(GeometryError::Degenerate(
                "enclosed volume is not positive".into(),
            ));
        }
        Ok(poly)
    }

    fn retriangulate(&mut self) {
        self.tris.clear();
        self.tri_face.clear();
        for (fi, loop_) in self.faces.iter().enumerate() {
            // Ear clipping in a local in-plane frame, so that non-convex
            // faces are covered exactly (a fan would spill outside them).
            let n = self.face_normals[fi];
            let pivot = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let e1 = n.cross(&pivot).normalize();
            let e2 = n.cross(&e1);
            let origin = self.vertices[loop_[0]].coords;
            let proj: Vec<(f64, f64)> = loop_
                .iter()
                .map(|&v| {
                    let d = self.vertices[v].coords - origin;
                    (d.dot(&e1), d.dot(&e2))
                })
                .collect();
            for [a, b, c] in ear_clip(&proj) {
                self.tris.push([loop_[a], loop_[b], loop_[c]]);
                self.tri_face.push(fi);
            }
        }
        let mut vol6 = 0.0;
        for t in &self.tris {
            let a = self.vertices[t[0]].coords;
            let b = self.vertices[t[1]].coords;
            let c = self.vertices[t[2]].coords;
            vol6 += a.dot(&b.cross(&c));
        }
        self.volume = vol6 / 6.0;
    }

    /// Axis-aligned box with outward-oriented quad faces.
    pub fn axis_box(lo: Point3<f64>, hi: Point3<f64>) -> Self {
        let v = vec![
            Point3::new(lo.x, lo.y, lo.z),
            Point3::new(hi.x, lo.y, lo.z),
            Point3::new(hi.x, hi.y, lo.z),
            Point3::new(lo.x, hi.y, lo.z),
            Point3::new(lo.x, lo.y, hi.z),
            Point3::new(hi.x, lo.y, hi.z),
            Point3::new(hi.x, hi.y, hi.z),
            Point3::new(lo.x, hi.y, hi.z),
        ];
        let f = vec![
            vec![0, 3, 2, 1],
            vec![4, 5, 6, 7],
            vec![0, 1, 5, 4],
            vec![1, 2, 6, 5],
            vec![2, 3, 7, 6],
            vec![3, 0, 4, 7],
        ];
        Self::from_faces(v, f).expect("axis box is a valid polyhedron")
    }

    /// Cube of side `side` centered at `center`.
    pub fn cube(center: Point3<f64>, side: f64) -> Self {
        let h = side / 2.0;
        let d = Vector3::new(h, h, h);
        Self::axis_box(center - d, center + d)
    }

    /// Copy with every vertex translated by `shift`.
    pub fn translated(&self, shift: Vector3<f64>) -> Self {
        let vertices = self.vertices.iter().map(|p| p + shift).collect();
        Self::from_faces(vertices, self.faces.clone()).expect("translation preserves validity")
    }

    /// Copy scaled by `factor` about `center`.
    pub fn scaled_about(&self, center: Point3<f64>, factor: f64) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|p| center + (p - center) * factor)
            .collect();
        Self::from_faces(vertices, self.faces.clone()).expect("scaling preserves validity")
    }

    /// Copy rotated by `angle` about the vertical axis through the centroid.
    pub fn rotated_z(&self, angle: f64) -> Self {
        let c = self.centroid();
        let (s, co) = angle.sin_cos();
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                let d = p - c;
                c + Vector3::new(co * d.x - s * d.y, s * d.x + co * d.y, d.z)
            })
            .collect();
        Self::from_faces(vertices, self.faces.clone()).expect("rotation preserves validity")
    }

    /// Copy with vertex `index` displaced by `shift`. Fails if the move breaks
    /// face planarity.
    pub fn with_moved_vertex(
        &self,
        index: usize,
        shift: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let mut vertices = self.vertices.clone();
        vertices[index] += shift;
        Self::from_faces(vertices, self.faces.clone())
    }

    /// Copy with each vertex `i` displaced by `shifts[i]`.
    pub fn with_moved_vertices(&self, shifts: &[Vector3<f64>]) -> Result<Self, GeometryError> {
        assert_eq!(shifts.len(), self.vertices.len());
        let vertices = self
            .vertices
            .iter()
            .zip(shifts)
            .map(|(p, s)| p + s)
            .collect();
        Self::from_faces(vertices, self.faces.clone())
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outward unit normal of face `fi`.
    pub fn face_normal(&self, fi: usize) -> Vector3<f64> {
        self.face_normals[fi]
    }

    /// Boundary triangulation as vertex-index triples with owning face ids.
    pub fn triangles(&self) -> impl Iterator<Item = ([usize; 3], usize)> + '_ {
        self.tris.iter().copied().zip(self.tri_face.iter().copied())
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Bounding-box diagonal; the reference scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eps_geom(&self) -> f64 {
        EPS_GEOM_REL * self.scale
    }

    pub fn bbox(&self) -> (Point3<f64>, Point3<f64>) {
        bbox(&self.vertices)
    }

    pub fn centroid(&self) -> Point3<f64> {
        let mut c = Vector3::zeros();
        for p in &self.vertices {
            c += p.coords;
        }
        Point3::from(c / self.vertices.len() as f64)
    }

    /// Area of face `fi`.
    pub fn face_area(&self, fi: usize) -> f64 {
        self.tris
            .iter()
            .zip(&self.tri_face)
            .filter(|(_, &f)| f == fi)
            .map(|(t, _)| self.triangle_area(t))
            .sum()
    }

    fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        let a = self.vertices[t[0]];
        let b = self.vertices[t[1]];
        let c = self.vertices[t[2]];
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Total boundary area.
    pub fn boundary_area(&self) -> f64 {
        self.tris.iter().map(|t| self.triangle_area(t)).sum()
    }

    /// Distance from `x` to the boundary surface.
    pub fn distance_to_boundary(&self, x: Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for t in &self.tris {
            let d = point_triangle_distance(
                x,
                self.vertices[t[0]],
                self.vertices[t[1]],
                self.vertices[t[2]],
            );
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Distance from `x` to the union of the (closed) edges.
    pub fn distance_to_edge_skeleton(&self, x: Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for e in &self.edges {
            let d = point_segment_distance(x, self.vertices[e.a], self.vertices[e.b]);
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Distance from `x` to the solid (zero for interior and boundary points).
    pub fn distance_to_solid(&self, x: Point3<f64>) -> f64 {
        match self.classify(x) {
            Containment::Outside => self.distance_to_boundary(x),
            _ => 0.0,
        }
    }

    /// Signed distance: negative inside, positive outside.
    pub fn signed_distance(&self, x: Point3<f64>) -> f64 {
        let d = self.distance_to_boundary(x);
        match self.classify_with_boundary_distance(x, d) {
            Containment::Inside => -d,
            Containment::OnBoundary => 0.0,
            Containment::Outside => d,
        }
    }

    /// Three-way membership with an `eps_geom`-wide boundary band.
    pub fn classify(&self, x: Point3<f64>) -> Containment {
        let d = self.distance_to_boundary(x);
        self.classify_with_boundary_distance(x, d)
    }

    fn classify_with_boundary_distance(&self, x: Point3<f64>, d: f64) -> Containment {
        if d <= self.eps_geom() {
            return Containment::OnBoundary;
        }
        if self.ray_parity_inside(x) {
            Containment::Inside
        } else {
            Containment::Outside
        }
    }

    /// Membership with boundary points counting as inside.
    pub fn contains(&self, x: Point3<f64>) -> bool {
        self.classify(x) != Containment::Outside
    }

    /// Strict membership for quadrature: no boundary band, pure ray parity.
    /// Points exactly on the boundary get an arbitrary but deterministic side.
    pub fn contains_strict(&self, x: Point3<f64>) -> bool {
        self.ray_parity_inside(x)
    }

    fn ray_parity_inside(&self, x: Point3<f64>) -> bool {
        // Ray casting over the triangulated boundary. A cast is accepted only
        // if every hit is comfortably transversal and interior to its
        // triangle; otherwise retry along the next deterministic direction.
        for dir in RAY_DIRECTIONS {
            let dir = Vector3::new(dir[0], dir[1], dir[2]).normalize();
            if let Some(count) = self.count_crossings(x, dir) {
                return count % 2 == 1;
            }
        }
        // Every direction was degenerate; fall back to the last, counting
        // marginal hits. This happens only for adversarial inputs.
        let dir = Vector3::new(
            RAY_DIRECTIONS[15][0],
            RAY_DIRECTIONS[15][1],
            RAY_DIRECTIONS[15][2],
        )
        .normalize();
        let mut count = 0usize;
        for t in &self.tris {
            if let Hit::Clean | Hit::Marginal = self.ray_triangle(x, dir, t) {
                count += 1;
            }
        }
        count % 2 == 1
    }

    fn count_crossings(&self, x: Point3<f64>, dir: Vector3<f64>) -> Option<usize> {
        let mut count = 0usize;
        for t in &self.tris {
            match self.ray_triangle(x, dir, t) {
                Hit::Clean => count += 1,
                Hit::Miss => {}
                Hit::Marginal => return None,
            }
        }
        Some(count)
    }

    fn ray_triangle(&self, origin: Point3<f64>, dir: Vector3<f64>, t: &[usize; 3]) -> Hit {
        let a = self.vertices[t[0]];
        let b = self.vertices[t[1]];
        let c = self.vertices[t[2]];
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        let tri_scale = e1.norm().max(e2.norm());
        if det.abs() < 1e-12 * tri_scale * tri_scale {
            // Nearly parallel: only a problem if the ray passes close by.
            let d = point_triangle_distance(origin, a, b, c);
            let along = (self.scale + (origin - a).norm()).max(tri_scale);
            if d < along {
                return Hit::Marginal;
            }
            return Hit::Miss;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        let ray_t = e2.dot(&q) * inv;
        let margin = 1e-10;
        if u < -margin || v < -margin || u + v > 1.0 + margin || ray_t < -margin {
            return Hit::Miss;
        }
        if u < margin || v < margin || u + v > 1.0 - margin || ray_t < margin {
            return Hit::Marginal;
        }
        Hit::Clean
    }

    /// Boundary sample points with spacing at most `spacing`, tagged by face.
    /// Includes face vertices and edge subdivision points, so suprema over the
    /// samples converge to suprema over the boundary from below.
    pub fn sample_boundary(&self, spacing: f64) -> Vec<(Point3<f64>, usize)> {
        assert!(spacing > 0.0, "sampling spacing must be positive");
        let mut out = Vec::new();
        for (t, fi) in self.tris.iter().zip(&self.tri_face) {
            let a = self.vertices[t[0]];
            let b = self.vertices[t[1]];
            let c = self.vertices[t[2]];
            let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
            let n = (longest / spacing).ceil().max(1.0) as usize;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let u = i as f64 / n as f64;
                    let v = j as f64 / n as f64;
                    let w = 1.0 - u - v;
                    let p = Point3::from(a.coords * w + b.coords * u + c.coords * v);
                    out.push((p, *fi));
                }
            }
        }
        out
    }

    /// Midpoint-rule quadrature over face `fi`: `(point, weight)` pairs whose
    /// weights sum to the face area. `spacing` bounds the subtriangle size.
    pub fn face_quadrature(&self, fi: usize, spacing: f64) -> Vec<(Point3<f64>, f64)> {
        let mut out = Vec::new();
        for (t, f) in self.tris.iter().zip(&self.tri_face) {
            if *f != fi {
                continue;
            }
            let a = self.vertices[t[0]];
            let b = self.vertices[t[1]];
            let c = self.vertices[t[2]];
            let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
            let n = (longest / spacing).ceil().max(1.0) as usize;
            let sub_area = self.triangle_area(t) / (n * n) as f64;
            for i in 0..n {
                for j in 0..(n - i) {
                    // Upward subtriangle centroid.
                    let (u, v) = ((i as f64 + 1.0 / 3.0) / n as f64, (j as f64 + 1.0 / 3.0) / n as f64);
                    out.push((bary_point(a, b, c, u, v), sub_area));
                    if i + j + 1 < n {
                        // Downward subtriangle centroid.
                        let (u, v) =
                            ((i as f64 + 2.0 / 3.0) / n as f64, (j as f64 + 2.0 / 3.0) / n as f64);
                        out.push((bary_point(a, b, c, u, v), sub_area));
                    }
                }
            }
        }
        out
    }

    /// Reads a polyhedron from OFF text.
    pub fn from_off(text: &str) -> Result<Self, GeometryError> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>());
        let header = tokens
            .next()
            .ok_or_else(|| GeometryError::Parse("empty file".into()))?;
        if header != "OFF" {
            return Err(GeometryError::Parse(format!(
                "expected OFF header, got {header:?}"
            )));
        }
        let next_usize = |what: &str, tokens: &mut dyn Iterator<Item = String>| {
            tokens
                .next()
                .ok_or_else(|| GeometryError::Parse(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| GeometryError::Parse(format!("bad {what}: {e}")))
        };
        let nv = next_usize("vertex count", &mut tokens)?;
        let nf = next_usize("face count", &mut tokens)?;
        let _ne = next_usize("edge count", &mut tokens)?;
        let next_f64 = |what: &str, tokens: &mut dyn Iterator<Item = String>| {
            tokens
                .next()
                .ok_or_else(|| GeometryError::Parse(format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|e| GeometryError::Parse(format!("bad {what}: {e}")))
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = next_f64("coordinate", &mut tokens)?;
            let y = next_f64("coordinate", &mut tokens)?;
            let z = next_f64("coordinate", &mut tokens)?;
            vertices.push(Point3::new(x, y, z));
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let n = next_usize("face size", &mut tokens)?;
            let mut loop_ = Vec::with_capacity(n);
            for _ in 0..n {
                loop_.push(next_usize("face index", &mut tokens)?);
            }
            faces.push(loop_);
        }
        Self::from_faces(vertices, faces)
    }

    /// Serializes to OFF text.
    pub fn to_off(&self) -> String {
        let mut s = String::new();
        s.push_str("OFF\n");
        let _ = writeln!(s, "{} {} {}", self.vertices.len(), self.faces.len(), self.edges.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z);
        }
        for loop_ in &self.faces {
            let _ = write!(s, "{}", loop_.len());
            for &v in loop_ {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn read_off(path: &Path) -> Result<Self, GeometryError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeometryError::Io(e.to_string()))?;
        Self::from_off(&text)
    }

    pub fn write_off(&self, path: &Path) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_off()).map_err(|e| GeometryError::Io(e.to_string()))
    }
}

enum Hit {
    Clean,
    Marginal,
    Miss,
}

/// Deterministic, irrationally-oriented ray directions for membership casts.
const RAY_DIRECTIONS: [[f64; 3]; 16] = [
    [0.8191725133, 0.4387482194, 0.3694741542],
    [-0.2871253271, 0.9034875214, 0.3187652314],
    [0.4123789021, -0.5812346710, 0.7012345876],
    [0.1029384756, 0.3041928375, -0.9471029384],
    [-0.7215634890, -0.4310298765, 0.5420176543],
    [0.6543217890, 0.2098765432, -0.7265432109],
    [-0.1987654321, -0.8412345678, -0.5029876543],
    [0.9213456780, -0.1523456789, 0.3587654321],
    [0.3345678901, 0.7034567890, 0.6276543210],
    [-0.5567890123, 0.6012345678, -0.5734567890],
    [0.2678901234, -0.3545678901, -0.8961234567],
    [-0.8789012345, 0.2156789012, 0.4252345678],
    [0.5890123456, -0.7267890123, 0.3543456789],
    [-0.4901234567, -0.2378901234, 0.8384567890],
    [0.7012345678, 0.5989012345, 0.3865678901],
    [0.5773502692, 0.5773502692, 0.5773502692],
];

/// Triangulates a simple polygon given in counter-clockwise order by ear
/// clipping; returns index triples into `pts`.
fn ear_clip(pts: &[(f64, f64)]) -> Vec<[usize; 3]> {
    let cross = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
    };
    let span = pts
        .iter()
        .map(|p| p.0.abs().max(p.1.abs()))
        .fold(1e-300, f64::max);
    let eps = 1e-12 * span * span;
    let inside = |x: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        cross(a, b, x) >= -eps && cross(b, c, x) >= -eps && cross(c, a, x) >= -eps
    };

    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        let mut flattest = (f64::NEG_INFINITY, 0usize);
        for i in 0..m {
            let (ip, ic, iq) = ((i + m - 1) % m, i, (i + 1) % m);
            let (p, q, r) = (pts[idx[ip]], pts[idx[ic]], pts[idx[iq]]);
            let c = cross(p, q, r);
            if c > flattest.0 {
                flattest = (c, i);
            }
            if c <= eps {
                continue; // reflex or collinear corner, not an ear
            }
            let blocked = (0..m)
                .filter(|&j| j != ip && j != ic && j != iq)
                .any(|j| inside(pts[idx[j]], p, q, r));
            if !blocked {
                tris.push([idx[ip], idx[ic], idx[iq]]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Collinear runs can hide every strict ear; clip the most convex
            // corner to guarantee progress. Sliver triangles produced here
            // are harmless (zero area).
            let i = flattest.1;
            let m = idx.len();
            tris.push([idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]]);
            idx.remove(i);
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    tris
}

fn bary_point(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>, u: f64, v: f64) -> Point3<f64> {
    Point3::from(a.coords * (1.0 - u - v) + b.coords * u + c.coords * v)
}

fn bbox(vertices: &[Point3<f64>]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in vertices {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

fn bbox_diagonal(vertices: &[Point3<f64>]) -> f64 {
    let (lo, hi) = bbox(vertices);
    (hi - lo).norm()
}

/// Repairs face-loop orientations by breadth-first propagation across shared
/// edges: adjacent faces must traverse their common edge in opposite
/// directions. Fails on surfaces where no consistent choice exists.
fn orient_consistently(faces: &mut [Vec<usize>]) -> Result<(), GeometryError> {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, loop_) in faces.iter().enumerate() {
        for i in 0..loop_.len() {
            let a = loop_[i];
            let b = loop_[(i + 1) % loop_.len()];
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    for (key, incident) in &edge_faces {
        if incident.len() != 2 {
            return Err(GeometryError::NonManifold(format!(
                "edge ({}, {}) belongs to {} faces",
                key.0,
                key.1,
                incident.len()
            )));
        }
    }

    let traverses_forward = |loop_: &[usize], a: usize, b: usize| -> bool {
        for i in 0..loop_.len() {
            if loop_[i] == a && loop_[(i + 1) % loop_.len()] == b {
                return true;
            }
        }
        false
    };

    let n = faces.len();
    let mut state = vec![0u8; n]; // 0 unvisited, 1 keep, 2 flipped
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        state[start] = 1;
        queue.push_back(start);
        while let Some(fi) = queue.pop_front() {
            let loop_ = faces[fi].clone();
            for i in 0..loop_.len() {
                let a = loop_[i];
                let b = loop_[(i + 1) % loop_.len()];
                let key = (a.min(b), a.max(b));
                for &fj in &edge_faces[&key] {
                    if fj == fi {
                        continue;
                    }
                    // Neighbor must traverse b -> a.
                    let agrees = traverses_forward(&faces[fj], b, a);
                    if state[fj] == 0 {
                        if !agrees {
                            faces[fj].reverse();
                        }
                        state[fj] = if agrees { 1 } else { 2 };
                        queue.push_back(fj);
                    } else if !traverses_forward(&faces[fj], b, a) {
                        return Err(GeometryError::NonManifold(
                            "surface is not orientable".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Closest-point distance from `p` to triangle `abc`.
pub fn point_triangle_distance(
    p: Point3<f64>,
    a: Point3<f64>,
    b: Point3<f64>,
    c: Point3<f64>,
) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Closest point on triangle `abc` to `p` (Ericson's region method).
pub fn closest_point_on_triangle(
    p: Point3<f64>,
    a: Point3<f64>,
    b: Point3<f64>,
    c: Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Distance from `p` to segment `ab`.
pub fn point_segment_distance(p: Point3<f64>, a: Point3<f64>, b: Point3<f64>) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}
