//! Discrete local current-to-voltage boundary operators and the singular
//! pairings built from them.
//!
//! The boundary response is sampled on a coarse tent basis supported inside
//! the accessible patch Σ; operator norms between the fractional trace
//! spaces are realized through the spectral square root of the boundary
//! H¹(Σ) Gram matrix. The module also provides the layered-space fundamental
//! solution (image charges across a flat interface), the volume/boundary
//! pairing S built from two mollified Green functions, and a dense-sampling
//! three-spheres check for harmonic functions.

mod basis;
mod biphase;
mod map;
mod sfunc;
mod spheres;

pub use basis::{tent_basis, BoundaryBasis};
pub use biphase::BiphasePlane;
pub use map::{dtn_matrix, form_extremes, norm_diff, DtnMatrix};
pub use sfunc::{
    alessandrini_residual, pairing_functional, s_function, singular_probe, AlessandriniReport,
    ProbeTable,
};
pub use spheres::{solid_harmonic, three_spheres_trials, ThreeSpheresReport};

use thiserror::Error;

use crate::fem::FemError;

/// Failures in boundary-operator assembly and the singular pairings.
#[derive(Debug, Error)]
pub enum DtnError {
    /// Propagated meshing or solver failure.
    #[error(transparent)]
    Fem(#[from] FemError),
    /// Two operators were built over different bases.
    #[error("bases disagree: {0}")]
    BasisMismatch(String),
    /// A basis function is nonzero on the inaccessible boundary.
    #[error("basis function {index} leaks outside the accessible patch (value {value:.3e})")]
    BasisLeak { index: usize, value: f64 },
    /// The accessible patch cannot carry the requested basis.
    #[error("accessible patch cannot carry a tent basis: {0}")]
    UnsupportedPatch(String),
    /// Fundamental-solution evaluation at the source point.
    #[error("evaluation point coincides with the source")]
    SingularPoint,
    /// A layered-space source on the material interface has no one-sided
    /// formula.
    #[error("source lies on the material interface")]
    SourceOnInterface,
    /// A Green trace fails to vanish on the inaccessible boundary.
    #[error("Green trace reaches {value:.3e} on the inaccessible boundary (tolerance {tolerance:.1e})")]
    TraceNotCompact { value: f64, tolerance: f64 },
    /// Two systems expected to share a mesh do not.
    #[error("paired systems live on different meshes")]
    MeshMismatch,
}
