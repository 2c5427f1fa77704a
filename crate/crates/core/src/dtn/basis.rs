//! Tent functions on the accessible patch and their boundary Gram matrices.

use std::collections::HashMap;

use nalgebra::{DMatrix, Point3};

use super::DtnError;
use crate::fem::{BoundaryMarker, TetMesh};
use crate::geometry::{OmegaShape, SigmaPatch};

/// A finite family of boundary data supported inside Σ, with the boundary
/// mass and stiffness matrices reduced to the family.
///
/// Each member is a bilinear tent centred on a grid point of a square patch
/// well inside Σ, sampled at the mesh's boundary nodes. Members vanish
/// identically on ∂Ω∖Σ, which is checked at construction.
#[derive(Clone, Debug)]
pub struct BoundaryBasis {
    /// Sparse nodal samples of each member: (node index, value).
    supports: Vec<Vec<(usize, f64)>>,
    /// L²(Σ) Gram of the members.
    mass: DMatrix<f64>,
    /// H¹(Σ) seminorm Gram of the members.
    stiffness: DMatrix<f64>,
    /// Node count of the owning mesh, for cheap compatibility checks.
    n_nodes: usize,
}

impl BoundaryBasis {
    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    /// Full-length nodal vector of member `i`, for use as Dirichlet data.
    pub fn nodal_data(&self, i: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.n_nodes];
        for &(n, v) in &self.supports[i] {
            g[n] = v;
        }
        g
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// The H¹(Σ) Gram (stiffness + mass), the base of the fractional-norm
    /// surrogates.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.stiffness + &self.mass
    }

    pub(crate) fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

/// One-dimensional hat profile of half-width `w` around 0.
fn hat(s: f64, w: f64) -> f64 {
    (1.0 - (s / w).abs()).max(0.0)
}

/// Builds the `per_side × per_side` tent basis on a square of side `extent`
/// centred on the accessible box face.
///
/// Tent spacing is `extent / (per_side - 1)` and each tent's half-width
/// equals the spacing, so neighbouring tents overlap and the family spans a
/// connected patch. The square plus one half-width margin must stay strictly
/// inside Σ; a tent sampling nonzero on any wall node aborts with
/// [`DtnError::BasisLeak`].
pub fn tent_basis(mesh: &TetMesh, per_side: usize, extent: f64) -> Result<BoundaryBasis, DtnError> {
    if per_side < 2 || !extent.is_finite() || extent <= 0.0 {
        return Err(DtnError::UnsupportedPatch(format!(
            "tent grid {per_side} x {per_side} over extent {extent} is degenerate"
        )));
    }
    if mesh.augmented_region().is_some() {
        return Err(DtnError::UnsupportedPatch(
            "tents belong on the physical domain, not the source-carrying augmented one".into(),
        ));
    }
    let spec = mesh.spec();
    let SigmaPatch::BoxFace { axis, positive } = spec.sigma else {
        return Err(DtnError::UnsupportedPatch(
            "tents require a single accessible box face".into(),
        ));
    };
    let OmegaShape::Box { lo, hi } = spec.omega else {
        return Err(DtnError::UnsupportedPatch(
            "tents require a box-shaped domain".into(),
        ));
    };
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let center = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let face_half = ((hi[u] - lo[u]) / 2.0).min((hi[v] - lo[v]) / 2.0);
    let spacing = extent / (per_side - 1) as f64;
    if extent / 2.0 + spacing >= face_half {
        return Err(DtnError::UnsupportedPatch(format!(
            "tent patch of extent {extent} plus margin {spacing} does not fit a face of half-width {face_half}"
        )));
    }
    let plane = if positive { hi[axis] } else { lo[axis] };

    // Boundary nodes on the accessible face, and the wall nodes used for the
    // leak check. Rim nodes shared by Σ and a wall count as wall.
    let nodes = mesh.nodes();
    let mut on_sigma = vec![false; nodes.len()];
    let mut on_wall = vec![false; nodes.len()];
    for (tri, marker) in mesh.boundary_faces() {
        let target = if *marker == BoundaryMarker::Sigma {
            &mut on_sigma
        } else {
            &mut on_wall
        };
        for &n in tri {
            target[n] = true;
        }
    }

    let centers: Vec<(f64, f64)> = (0..per_side)
        .flat_map(|i| {
            (0..per_side).map(move |j| {
                (
                    center[u] - extent / 2.0 + i as f64 * spacing,
                    center[v] - extent / 2.0 + j as f64 * spacing,
                )
            })
        })
        .collect();

    let tol = 1e-9 * mesh.h();
    let mut supports: Vec<Vec<(usize, f64)>> = vec![Vec::new(); centers.len()];
    for (n, p) in nodes.iter().enumerate() {
        if !on_sigma[n] || (p[axis] - plane).abs() > tol {
            continue;
        }
        for (b, &(cu, cv)) in centers.iter().enumerate() {
            let val = hat(p[u] - cu, spacing) * hat(p[v] - cv, spacing);
            if val > 0.0 {
                if on_wall[n] {
                    return Err(DtnError::BasisLeak {
                        index: b,
                        value: val,
                    });
                }
                supports[b].push((n, val));
            }
        }
    }
    if supports.iter().any(Vec::is_empty) {
        return Err(DtnError::UnsupportedPatch(
            "a tent has no boundary node in its support; refine the mesh or widen the tents".into(),
        ));
    }

    // Per-node sparse basis values for the Gram reductions.
    let mut node_vals: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (b, sup) in supports.iter().enumerate() {
        for &(n, val) in sup {
            node_vals.entry(n).or_default().push((b, val));
        }
    }

    let nb = centers.len();
    let mut mass = DMatrix::zeros(nb, nb);
    let mut stiffness = DMatrix::zeros(nb, nb);
    let empty: Vec<(usize, f64)> = Vec::new();
    for (tri, marker) in mesh.boundary_faces() {
        if *marker != BoundaryMarker::Sigma {
            continue;
        }
        let [a, b, c] = *tri;
        let (m_loc, s_loc) = triangle_matrices(nodes[a], nodes[b], nodes[c]);
        let locals = [
            node_vals.get(&a).unwrap_or(&empty),
            node_vals.get(&b).unwrap_or(&empty),
            node_vals.get(&c).unwrap_or(&empty),
        ];
        for i in 0..3 {
            for j in 0..3 {
                for &(p, pv) in locals[i] {
                    for &(q, qv) in locals[j] {
                        mass[(p, q)] += pv * m_loc[i][j] * qv;
                        stiffness[(p, q)] += pv * s_loc[i][j] * qv;
                    }
                }
            }
        }
    }

    Ok(BoundaryBasis {
        supports,
        mass,
        stiffness,
        n_nodes: nodes.len(),
    })
}

/// P1 mass and stiffness of one surface triangle (in its own plane).
fn triangle_matrices(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let ab = b - a;
    let ac = c - a;
    let normal = ab.cross(&ac);
    let area2 = normal.norm();
    let area = area2 / 2.0;

    let mut mass = [[area / 12.0; 3]; 3];
    for (i, row) in mass.iter_mut().enumerate() {
        row[i] *= 2.0;
    }

    // In-plane barycentric gradients: ∇λ_i = (n̂ × e_i) / (2A) with e_i the
    // edge opposite vertex i, oriented to run counterclockwise around n̂.
    let n_hat = normal / area2;
    let edges = [c - b, a - c, ab];
    let grads = [
        n_hat.cross(&edges[0]) / area2,
        n_hat.cross(&edges[1]) / area2,
        n_hat.cross(&edges[2]) / area2,
    ];
    let mut stiff = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            stiff[i][j] = area * grads[i].dot(&grads[j]);
        }
    }
    (mass, stiff)
}
