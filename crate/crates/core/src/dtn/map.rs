//! The boundary response matrix over a tent basis and its operator norms.

use nalgebra::DMatrix;

use super::basis::BoundaryBasis;
use super::DtnError;
use crate::fem::System;

/// Galerkin sample of the current-to-voltage boundary operator:
/// `matrix[(i, j)] = ∫ γ ∇u_i · ∇u_j` with `u_i` the conducting solution for
/// tent datum `i`. Exactly symmetric by construction.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    matrix: DMatrix<f64>,
    /// Mesh size of the provenance mesh.
    pub h: f64,
    /// Inclusion contrast of the provenance mesh.
    pub contrast: f64,
}

impl DtnMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

/// Solves one Dirichlet problem per basis member and pairs the solutions in
/// energy.
///
/// The pairing `a_γ(u_i, u_j)` equals `⟨Λ φ_i, φ_j⟩` because `u_j` lifts
/// `φ_j` and the pairing is lift-independent; using the conducting solutions
/// as lifts makes the matrix symmetric up to solver tolerance, and the upper
/// triangle is mirrored so it is symmetric exactly.
pub fn dtn_matrix(system: &System<'_>, basis: &BoundaryBasis) -> Result<DtnMatrix, DtnError> {
    if basis.n_nodes() != system.mesh().nodes().len() {
        return Err(DtnError::BasisMismatch(
            "basis was sampled on a different mesh".into(),
        ));
    }
    let n = basis.len();
    let mut fields = Vec::with_capacity(n);
    for i in 0..n {
        fields.push(system.solve_dirichlet(&basis.nodal_data(i))?);
    }
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = system.energy_pairing(&fields[i], &fields[j])?;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(DtnMatrix {
        matrix,
        h: system.mesh().h(),
        contrast: system.mesh().contrast(),
    })
}

/// Spectral power of a symmetric positive definite matrix.
fn symmetric_power(m: &DMatrix<f64>, exponent: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let powered = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).powf(exponent)));
    &eig.eigenvectors * powered * eig.eigenvectors.transpose()
}

/// Operator norm of `L0 − L1` between the fractional trace norms induced by
/// the basis Gram.
///
/// With `G` the spectral square root of the H¹(Σ) Gram, the trace norm is
/// `‖f‖² = fᵀ G f` and its dual is `‖ψ‖² = ψᵀ G⁻¹ ψ`, so the norm is the
/// spectral radius of `G^{-1/2} (L0 − L1) G^{-1/2}` — the largest generalized
/// singular value of the difference between the two induced norms.
pub fn norm_diff(l0: &DtnMatrix, l1: &DtnMatrix, basis: &BoundaryBasis) -> Result<f64, DtnError> {
    if l0.len() != l1.len() || l0.len() != basis.len() {
        return Err(DtnError::BasisMismatch(format!(
            "operator sizes {} and {} over a basis of {}",
            l0.len(),
            l1.len(),
            basis.len()
        )));
    }
    let g = symmetric_power(&basis.gram(), 0.5);
    let w = symmetric_power(&g, -0.5);
    let delta = l0.matrix() - l1.matrix();
    let pencil = &w * delta * &w;
    let eig = pencil.symmetric_eigen();
    Ok(eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs())))
}

/// Extreme eigenvalues of the symmetric part of `L1 − L0`.
///
/// For elementwise-ordered conductivities the boundary response is monotone,
/// so the difference is sign-semidefinite up to solver tolerance; the
/// returned (min, max) pair makes that checkable.
pub fn form_extremes(l0: &DtnMatrix, l1: &DtnMatrix) -> Result<(f64, f64), DtnError> {
    if l0.len() != l1.len() {
        return Err(DtnError::BasisMismatch(format!(
            "operator sizes {} and {}",
            l0.len(),
            l1.len()
        )));
    }
    let d = l1.matrix() - l0.matrix();
    let sym = (&d + d.transpose()) / 2.0;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtn::basis::tent_basis;
    use crate::fem::{assemble, mesh_domain, DomainSpec, Inclusion, InterfaceModel};
    use approx::assert_relative_eq;
    use nalgebra::Point3;

    fn box_mesh(h: f64, inclusions: &[Inclusion], k: f64) -> crate::fem::TetMesh {
        mesh_domain(
            &DomainSpec::unit_box_top_face(),
            inclusions,
            h,
            k,
            InterfaceModel::default(),
        )
        .unwrap()
    }

    fn small_inclusion() -> Inclusion {
        Inclusion::Ball {
            center: Point3::new(0.0, 0.0, -0.1),
            radius: 0.18,
        }
    }

    #[test]
    fn matrix_is_symmetric_and_positive_semidefinite() {
        let mesh = box_mesh(1.0 / 12.0, &[small_inclusion()], 2.0);
        let system = assemble(&mesh);
        let basis = tent_basis(&mesh, 3, 0.4).unwrap();
        let lam = dtn_matrix(&system, &basis).unwrap();
        let m = lam.matrix();
        assert_relative_eq!((m - m.transpose()).norm(), 0.0, epsilon = 1e-14);
        let eig = m.clone().symmetric_eigen();
        // The quadratic form is a Dirichlet energy, hence nonnegative.
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10), "{eig:?}");
    }

    #[test]
    fn identical_inclusions_give_zero_norm_even_across_rebuilds() {
        let mesh_a = box_mesh(1.0 / 12.0, &[small_inclusion()], 2.0);
        let mesh_b = box_mesh(1.0 / 12.0, &[small_inclusion()], 2.0);
        let basis = tent_basis(&mesh_a, 3, 0.4).unwrap();
        let la = dtn_matrix(&assemble(&mesh_a), &basis).unwrap();
        let lb = dtn_matrix(&assemble(&mesh_b), &basis).unwrap();
        // Meshing and solving are deterministic, so two independent builds
        // with identical inputs agree bitwise and the norm is exactly zero.
        assert_eq!(norm_diff(&la, &lb, &basis).unwrap(), 0.0);
    }

    #[test]
    fn norm_is_invariant_under_basis_reordering() {
        let mesh = box_mesh(1.0 / 12.0, &[], 2.0);
        let with = mesh.reassign(&[small_inclusion()], 2.0, InterfaceModel::default()).unwrap();
        let basis = tent_basis(&mesh, 3, 0.4).unwrap();
        let l0 = dtn_matrix(&assemble(&mesh), &basis).unwrap();
        let l1 = dtn_matrix(&assemble(&with), &basis).unwrap();
        let reference = norm_diff(&l0, &l1, &basis).unwrap();

        // Conjugate everything by one permutation: the generalized singular
        // values are unchanged.
        let n = basis.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let pm = DMatrix::from_fn(n, n, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
        let permuted_basis = BoundaryBasisPermuted {
            gram: &pm * basis.gram() * pm.transpose(),
        };
        let dl0 = &pm * l0.matrix() * pm.transpose();
        let dl1 = &pm * l1.matrix() * pm.transpose();
        let g = symmetric_power(&permuted_basis.gram, 0.5);
        let w = symmetric_power(&g, -0.5);
        let pencil = &w * (dl0 - dl1) * &w;
        let permuted = pencil
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &l| m.max(l.abs()));
        assert_relative_eq!(permuted, reference, max_relative = 1e-10);
    }

    struct BoundaryBasisPermuted {
        gram: DMatrix<f64>,
    }

    #[test]
    fn raising_conductivity_raises_the_quadratic_form() {
        let mesh = box_mesh(1.0 / 12.0, &[], 2.0);
        let basis = tent_basis(&mesh, 3, 0.4).unwrap();
        let l_empty = dtn_matrix(&assemble(&mesh), &basis).unwrap();

        let raised = mesh.reassign(&[small_inclusion()], 2.0, InterfaceModel::default()).unwrap();
        let l_raised = dtn_matrix(&assemble(&raised), &basis).unwrap();
        let (min, _) = form_extremes(&l_empty, &l_raised).unwrap();
        assert!(min >= -1e-8, "k > 1 must not lower the form: min {min}");

        let lowered = mesh.reassign(&[small_inclusion()], 0.5, InterfaceModel::default()).unwrap();
        let l_lowered = dtn_matrix(&assemble(&lowered), &basis).unwrap();
        let (_, max) = form_extremes(&l_empty, &l_lowered).unwrap();
        assert!(max <= 1e-8, "k < 1 must not raise the form: max {max}");

        let same = mesh.reassign(&[small_inclusion()], 1.0, InterfaceModel::default()).unwrap();
        let l_same = dtn_matrix(&assemble(&same), &basis).unwrap();
        assert_relative_eq!(
            (l_same.matrix() - l_empty.matrix()).norm(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn unit_ball_degree_one_mode_has_unit_response() {
        // With γ ≡ 1 on the unit ball and boundary datum x₃, the conducting
        // solution is x₃ itself and the normal current equals the datum, so
        // the Rayleigh quotient of the boundary operator on that mode is 1.
        let mesh = mesh_domain(
            &DomainSpec::ball(1.0),
            &[],
            1.0 / 6.0,
            2.0,
            InterfaceModel::default(),
        )
        .unwrap();
        let system = assemble(&mesh);
        let g: Vec<f64> = mesh.nodes().iter().map(|p| p.z).collect();
        let u = system.solve_dirichlet(&g).unwrap();
        let energy = system.energy_pairing(&u, &u).unwrap();
        let mut datum_mass = 0.0;
        for (tri, _) in mesh.boundary_faces() {
            let [a, b, c] = *tri;
            let (pa, pb, pc) = (mesh.nodes()[a], mesh.nodes()[b], mesh.nodes()[c]);
            let area = 0.5 * (pb - pa).cross(&(pc - pa)).norm();
            let (ga, gb, gc) = (g[a], g[b], g[c]);
            datum_mass +=
                area / 12.0 * (ga * ga + gb * gb + gc * gc + (ga + gb + gc).powi(2));
        }
        assert_relative_eq!(energy / datum_mass, 1.0, max_relative = 0.03);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let mesh = box_mesh(1.0 / 8.0, &[], 2.0);
        let basis3 = tent_basis(&mesh, 3, 0.4).unwrap();
        let basis4 = tent_basis(&mesh, 4, 0.4).unwrap();
        let l3 = dtn_matrix(&assemble(&mesh), &basis3).unwrap();
        let l4 = dtn_matrix(&assemble(&mesh), &basis4).unwrap();
        assert!(matches!(
            norm_diff(&l3, &l4, &basis3),
            Err(DtnError::BasisMismatch(_))
        ));
    }
}
