//! Structured tetrahedral meshing and P1 finite elements for the conductivity
//! Dirichlet problem.
//!
//! The mesh is a fixed body-centered subdivision of a background grid: node
//! and element arrays depend only on the domain and mesh size, never on the
//! inclusions, which enter purely through per-element conductivities (exact
//! volume fractions). Paired experiments on two inclusion sets therefore
//! difference on identical meshes. The module also provides mollified Green
//! functions on an augmented domain obtained by gluing a box across a
//! sub-patch of the accessible boundary.

mod domain;
mod green;
mod mesh;
mod system;
mod vtk;

pub use domain::{Augmentation, DomainSpec};
pub use green::{bump_load, green_approx, mollified_bump};
pub use mesh::{
    mesh_domain, BoundaryMarker, ElementConductivity, Inclusion, InterfaceModel, TetMesh,
};
pub use system::{assemble, DiscreteField, FieldRole, System};
pub use vtk::write_vtk;

use thiserror::Error;

/// Failures in meshing, assembly, and solves.
#[derive(Debug, Error)]
pub enum FemError {
    /// The domain description cannot be meshed as requested.
    #[error("domain setup invalid: {0}")]
    BadDomain(String),
    /// An inclusion has features the mesh cannot resolve.
    #[error("inclusion feature below mesh resolution: {0}")]
    FeatureUnderResolved(String),
    /// The iterative solver stalled; signals a mesh or conditioning defect.
    #[error("solver reached {iterations} iterations with relative residual {residual:.3e} (tolerance {tolerance:.1e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
    /// A mollified source overlaps the boundary.
    #[error("source point {distance:.4} from the boundary needs clearance > {required:.4}")]
    SourceTooClose { distance: f64, required: f64 },
    /// Two discrete fields do not live on the same mesh.
    #[error("fields live on different meshes")]
    MeshMismatch,
}
