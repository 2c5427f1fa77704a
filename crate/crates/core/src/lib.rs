//! Polyhedral inclusion reconstruction from local boundary current-voltage data.
//!
//! The crate models a conductor with a polyhedral inclusion of contrast `k`,
//! computes the local Dirichlet-to-Neumann response on an accessible boundary
//! patch, and provides the geometric and variational machinery (admissible
//! polyhedra, boundary deformation fields, shape derivatives of the boundary
//! response) used by the stability and reconstruction experiments in
//! [`harness`].
//!
//! Module map:
//! * [`geometry`] — polyhedra, admissibility validation, set distances, vertex matching
//! * [`deformation`] — face collars, Lipschitz vertex-displacement fields, flows
//! * [`fem`] — background tetrahedral meshes, P1 assembly, solves, mollified Green functions
//! * [`dtn`] — boundary bases, discrete Dirichlet-to-Neumann maps, layered fundamental
//!   solutions, the singular probe and three-spheres checks
//! * [`shape`] — the forward map `t ↦ ⟨Λ_{D_t} f, g⟩` and its derivative at `t = 0`
//! * [`harness`] — experiment configs, sweeps, gradient-descent reconstruction, CLI

pub mod deformation;
pub mod dtn;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod shape;

/// Planarity tolerance relative to the object scale (bounding-box diagonal).
pub const EPS_PLANAR_REL: f64 = 1e-9;

/// General geometric tolerance relative to the object scale.
pub const EPS_GEOM_REL: f64 = 1e-12;
