//! P1 stiffness assembly and the deterministic conjugate-gradient solver.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::mesh::{ElementConductivity, TetMesh};
use super::FemError;

/// What a nodal field represents; purely informational.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    /// Solution of a Dirichlet problem.
    Solution,
    /// Boundary data lifted by zero into the interior.
    Lift,
    /// Response to a mollified point source.
    Green,
}

/// Nodal values of a P1 field over a fixed mesh.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub values: Vec<f64>,
    pub role: FieldRole,
}

/// Compressed sparse rows, symmetric content by construction.
struct Csr {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }
}

/// Assembled stiffness operator with its mesh.
pub struct System<'m> {
    mesh: &'m TetMesh,
    matrix: Csr,
    /// Diagonal of the stiffness matrix, for Jacobi preconditioning.
    diag: Vec<f64>,
}

/// Stiffness contribution of one element: `K[a][b] = vol * (cond ∇φ_b)·∇φ_a`.
pub(crate) fn element_matrix(
    grads: &[Vector3<f64>; 4],
    vol: f64,
    cond: &ElementConductivity,
) -> [[f64; 4]; 4] {
    let flux = [
        cond.apply(&grads[0]),
        cond.apply(&grads[1]),
        cond.apply(&grads[2]),
        cond.apply(&grads[3]),
    ];
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = vol * flux[b].dot(&grads[a]);
        }
    }
    k
}

/// Assembles the global stiffness matrix `K_ij = Σ_e (γ_e ∇φ_j)·∇φ_i |e|`.
///
/// Element matrices are computed in parallel into indexed slots and scattered
/// serially, so the result is bitwise deterministic.
pub fn assemble(mesh: &TetMesh) -> System<'_> {
    let n = mesh.nodes().len();
    let tets = mesh.tets();

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in tets {
        for &a in t {
            for &b in t {
                neighbors[a].push(b);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0usize);
    let mut col_idx = Vec::new();
    for nb in neighbors.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
        col_idx.extend_from_slice(nb);
        row_ptr.push(col_idx.len());
    }

    let element: Vec<[[f64; 4]; 4]> = (0..tets.len())
        .into_par_iter()
        .map(|e| {
            element_matrix(
                &mesh.tet_gradients(e),
                mesh.tet_volume(e),
                &mesh.conductivity()[e],
            )
        })
        .collect();

    let mut vals = vec![0.0; col_idx.len()];
    for (e, t) in tets.iter().enumerate() {
        for a in 0..4 {
            let cols = &col_idx[row_ptr[t[a]]..row_ptr[t[a] + 1]];
            let base = row_ptr[t[a]];
            for b in 0..4 {
                let at = cols.binary_search(&t[b]).expect("sparsity covers elements");
                vals[base + at] += element[e][a][b];
            }
        }
    }

    let matrix = Csr {
        row_ptr,
        col_idx,
        vals,
    };
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let (cols, v) = matrix.row(i);
            let at = cols.binary_search(&i).expect("diagonal present");
            v[at]
        })
        .collect();

    System { mesh, matrix, diag }
}

const CG_TOLERANCE: f64 = 1e-10;
const CG_MAX_ITERATIONS: usize = 30_000;

impl<'m> System<'m> {
    pub fn mesh(&self) -> &'m TetMesh {
        self.mesh
    }

    /// `K x` over all nodes, no boundary handling.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.matrix.row(i);
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    acc += v * x[*c];
                }
                acc
            })
            .collect()
    }

    fn apply_free(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                if self.mesh.is_boundary_node(i) {
                    return 0.0;
                }
                let (cols, vals) = self.matrix.row(i);
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    acc += v * x[*c];
                }
                acc
            })
            .collect()
    }

    /// Preconditioned conjugate gradients on the interior nodes. `rhs` must
    /// vanish on boundary nodes; the returned vector does too.
    fn cg_interior(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let n = self.diag.len();
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            // Sequential reduction: the solve must be bitwise reproducible.
            a.iter().zip(b).map(|(x, y)| x * y).sum()
        };
        let bnorm = dot(rhs, rhs).sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let precond = |r: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    if self.mesh.is_boundary_node(i) {
                        0.0
                    } else {
                        r[i] / self.diag[i]
                    }
                })
                .collect()
        };

        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut residual = bnorm;

        for it in 0..CG_MAX_ITERATIONS {
            let q = self.apply_free(&p);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                return Err(FemError::NoConvergence {
                    iterations: it,
                    residual: residual / bnorm,
                    tolerance: CG_TOLERANCE,
                });
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            residual = dot(&r, &r).sqrt();
            if residual <= CG_TOLERANCE * bnorm {
                return Ok(x);
            }
            z = precond(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(FemError::NoConvergence {
            iterations: CG_MAX_ITERATIONS,
            residual: residual / bnorm,
            tolerance: CG_TOLERANCE,
        })
    }

    /// Solves `div(γ ∇u) = 0` with `u = g` on the whole boundary. Only the
    /// boundary entries of `g` are read.
    pub fn solve_dirichlet(&self, g: &[f64]) -> Result<DiscreteField, FemError> {
        let n = self.diag.len();
        if g.len() != n {
            return Err(FemError::MeshMismatch);
        }
        let mut lift = vec![0.0; n];
        for &i in self.mesh.boundary_nodes() {
            lift[i] = g[i];
        }
        let k_lift = self.apply(&lift);
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if self.mesh.is_boundary_node(i) {
                    0.0
                } else {
                    -k_lift[i]
                }
            })
            .collect();
        let correction = self.cg_interior(&rhs)?;
        let values: Vec<f64> = (0..n).map(|i| lift[i] + correction[i]).collect();
        Ok(DiscreteField {
            values,
            role: FieldRole::Solution,
        })
    }

    /// Solves `div(γ ∇u) = -load` with `u = 0` on the whole boundary.
    pub fn solve_zero_dirichlet(&self, load: &[f64]) -> Result<DiscreteField, FemError> {
        let n = self.diag.len();
        if load.len() != n {
            return Err(FemError::MeshMismatch);
        }
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if self.mesh.is_boundary_node(i) {
                    0.0
                } else {
                    load[i]
                }
            })
            .collect();
        let values = self.cg_interior(&rhs)?;
        Ok(DiscreteField {
            values,
            role: FieldRole::Green,
        })
    }

    /// The bilinear form `∫ γ ∇u · ∇v`, evaluated exactly for P1 fields.
    pub fn energy_pairing(&self, u: &DiscreteField, v: &DiscreteField) -> Result<f64, FemError> {
        let n = self.diag.len();
        if u.values.len() != n || v.values.len() != n {
            return Err(FemError::MeshMismatch);
        }
        let kv = self.apply(&v.values);
        Ok(u.values.iter().zip(&kv).map(|(a, b)| a * b).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mesh_domain, DomainSpec, Inclusion, InterfaceModel};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Point3};

    fn box_mesh(h: f64) -> TetMesh {
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
    fn element_matrices_have_zero_row_sums_and_scale_with_conductivity() {
        let mesh = box_mesh(0.5);
        for e in 0..mesh.tets().len() {
            let grads = mesh.tet_gradients(e);
            let vol = mesh.tet_volume(e);
            let base = element_matrix(&grads, vol, &ElementConductivity::Iso(1.0));
            let scaled = element_matrix(&grads, vol, &ElementConductivity::Iso(3.0));
            for a in 0..4 {
                let row: f64 = base[a].iter().sum();
                assert!(row.abs() < 1e-12, "row sum {row}");
                for b in 0..4 {
                    assert_relative_eq!(base[a][b], base[b][a], epsilon = 1e-14);
                    assert_relative_eq!(scaled[a][b], 3.0 * base[a][b], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn anisotropic_elements_stay_symmetric() {
        let mesh = box_mesh(0.5);
        let tensor = Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.5, 0.0, 0.1, 0.0, 1.2);
        let k = element_matrix(
            &mesh.tet_gradients(0),
            mesh.tet_volume(0),
            &ElementConductivity::Aniso(tensor),
        );
        for (a, row) in k.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!(sum.abs() < 1e-12);
            for (b, entry) in row.iter().enumerate() {
                assert_relative_eq!(*entry, k[b][a], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn global_matrix_annihilates_constants() {
        let mesh = box_mesh(0.25);
        let system = assemble(&mesh);
        let ones = vec![1.0; mesh.nodes().len()];
        let k1 = system.apply(&ones);
        for (i, v) in k1.iter().enumerate() {
            assert!(v.abs() < 1e-11, "row {i} sums to {v}");
        }
    }

    #[test]
    fn linear_boundary_data_is_reproduced_exactly() {
        let mesh = box_mesh(0.25);
        let system = assemble(&mesh);
        let g: Vec<f64> = mesh.nodes().iter().map(|p| p.x).collect();
        let u = system.solve_dirichlet(&g).unwrap();
        for (i, p) in mesh.nodes().iter().enumerate() {
            assert!(
                (u.values[i] - p.x).abs() < 1e-8,
                "node {i}: {} vs {}",
                u.values[i],
                p.x
            );
        }
    }

    #[test]
    fn constant_boundary_data_gives_constant_solution() {
        let ball = Inclusion::Ball {
            center: Point3::origin(),
            radius: 0.25,
        };
        let mesh = mesh_domain(
            &DomainSpec::unit_box_top_face(),
            &[ball],
            0.125,
            2.0,
            InterfaceModel::Fraction,
        )
        .unwrap();
        let system = assemble(&mesh);
        let g = vec![1.0; mesh.nodes().len()];
        let u = system.solve_dirichlet(&g).unwrap();
        for v in &u.values {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_of_unit_gradient_is_the_volume()  {
        let mesh = box_mesh(0.25);
        let system = assemble(&mesh);
        let u = DiscreteField {
            values: mesh.nodes().iter().map(|p| p.x).collect(),
            role: FieldRole::Solution,
        };
        let e = system.energy_pairing(&u, &u).unwrap();
        assert_relative_eq!(e, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn pairing_against_a_constant_field_vanishes() {
        let mesh = box_mesh(0.25);
        let system = assemble(&mesh);
        let u = DiscreteField {
            values: mesh.nodes().iter().map(|p| p.x + 0.3 * p.y * p.z).collect(),
            role: FieldRole::Solution,
        };
        let c = DiscreteField {
            values: vec![0.7; mesh.nodes().len()],
            role: FieldRole::Solution,
        };
        let e = system.energy_pairing(&u, &c).unwrap();
        assert!(e.abs() < 1e-11, "pairing with a constant gave {e}");
    }

    #[test]
    fn energy_pairing_is_symmetric_and_checks_length() {
        let mesh = box_mesh(0.25);
        let system = assemble(&mesh);
        let u = DiscreteField {
            values: mesh.nodes().iter().map(|p| p.x + 0.3 * p.y * p.z).collect(),
            role: FieldRole::Solution,
        };
        let v = DiscreteField {
            values: mesh.nodes().iter().map(|p| p.z * p.z - p.x).collect(),
            role: FieldRole::Solution,
        };
        let uv = system.energy_pairing(&u, &v).unwrap();
        let vu = system.energy_pairing(&v, &u).unwrap();
        assert_relative_eq!(uv, vu, max_relative = 1e-12);

        let short = DiscreteField {
            values: vec![0.0; 3],
            role: FieldRole::Solution,
        };
        assert!(matches!(
            system.energy_pairing(&u, &short),
            Err(FemError::MeshMismatch)
        ));
    }

    /// Series solution for the two-phase concentric-ball problem with data
    /// x₃/|x| on the outer sphere: coefficients from the interface/boundary
    /// conditions for radii (a, R) and contrast k.
    fn two_phase_series(a: f64, big_r: f64, k: f64) -> impl Fn(Point3<f64>) -> f64 {
        let mu = (k - 1.0) / (k + 2.0);
        let b = big_r.powi(2) / (big_r.powi(3) - mu * a.powi(3));
        let c = -mu * b * a.powi(3);
        let a_in = b + c / a.powi(3);
        move |p: Point3<f64>| {
            let r = p.coords.norm();
            if r <= a {
                a_in * p.z
            } else {
                (b + c / r.powi(3)) * p.z
            }
        }
    }

    fn spheres_error(h: f64, model: InterfaceModel) -> f64 {
        let inclusion = Inclusion::Ball {
            center: Point3::origin(),
            radius: 0.25,
        };
        let mesh = mesh_domain(&DomainSpec::ball(0.5), &[inclusion], h, 2.0, model).unwrap();
        let system = assemble(&mesh);
        let g: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| {
                let r = p.coords.norm();
                if r < 1e-12 { 0.0 } else { p.z / r }
            })
            .collect();
        let u = system.solve_dirichlet(&g).unwrap();
        let exact = two_phase_series(0.25, 0.5, 2.0);
        mesh.nodes()
            .iter()
            .zip(&u.values)
            .map(|(p, v)| (v - exact(*p)).abs())
            .fold(0.0, f64::max)
    }

    /// Discrete Steklov quotient a_γ(u,u) / ∮ g² dσ for boundary data
    /// g = x₃/|x| on the two-phase ball.
    fn spheres_eigenvalue(h: f64, model: InterfaceModel) -> f64 {
        let inclusion = Inclusion::Ball {
            center: Point3::origin(),
            radius: 0.25,
        };
        let mesh = mesh_domain(&DomainSpec::ball(0.5), &[inclusion], h, 2.0, model).unwrap();
        let system = assemble(&mesh);
        let g: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| {
                let r = p.coords.norm();
                if r < 1e-12 { 0.0 } else { p.z / r }
            })
            .collect();
        let u = system.solve_dirichlet(&g).unwrap();
        let energy = system.energy_pairing(&u, &u).unwrap();
        let mut denom = 0.0;
        for (tri, _) in mesh.boundary_faces() {
            let [a, b, c] = *tri;
            let area = 0.5
                * (mesh.nodes()[b] - mesh.nodes()[a])
                    .cross(&(mesh.nodes()[c] - mesh.nodes()[a]))
                    .norm();
            let (ga, gb, gc) = (g[a], g[b], g[c]);
            let s = ga + gb + gc;
            denom += area / 12.0 * (ga * ga + gb * gb + gc * gc + s * s);
        }
        energy / denom
    }

    /// Steklov quotient of the discrete solution: the energy pairing over the
    /// squared boundary mass of the datum, which for the degree-one datum
    /// equals the boundary map's eigenvalue.
    #[test]
    fn concentric_spheres_match_the_series_eigenvalue() {
        // mu = (k - 1)/(k + 2) with k = 2, radii 0.25 inside 0.5: the
        // degree-one eigenvalue is (1 + 2 mu a^3)/(1 - mu a^3) / R = 68/31.
        let exact = 68.0 / 31.0;
        let coarse = (spheres_eigenvalue(1.0 / 12.0, InterfaceModel::Layered) - exact).abs() / exact;
        let fine = (spheres_eigenvalue(1.0 / 24.0, InterfaceModel::Layered) - exact).abs() / exact;
        let order = (coarse / fine).log2();
        assert!(fine <= 5e-3, "relative eigenvalue error {fine:.3e} at h = 1/24");
        assert!(order >= 1.5, "observed order {order:.2} (errors {coarse:.3e} / {fine:.3e})");
    }

    /// Pointwise agreement with the series solution. The max-norm error is
    /// dominated by the first-order kink smearing on cut elements, so only a
    /// fixed budget is asserted, not an order.
    #[test]
    fn concentric_spheres_track_the_series_pointwise() {
        let err = spheres_error(1.0 / 12.0, InterfaceModel::Layered);
        assert!(err <= 2.5e-2, "nodal max error {err:.3e}");
    }
}
