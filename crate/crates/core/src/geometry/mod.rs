//! Polyhedral inclusions: representation, admissibility, correspondence and
//! distances.

pub mod admissibility;
pub mod domain;
pub mod matching;
pub mod metrics;
pub mod polyhedron;

pub use admissibility::{
    bowtie_bricks, cone_margin_at, dihedral_angles, face_vertex_angles, fibonacci_sphere,
    inscribed_disc_radius, validate_admissibility, AprioriData, CheckOutcome, ValidationReport,
};
pub use domain::{OmegaShape, SigmaPatch};
pub use matching::{assignment, match_vertices, matched_displacements, VertexPairing};
pub use metrics::{hausdorff_boundary, hausdorff_solid, modified_distance, SampledDistance};
pub use polyhedron::{
    closest_point_on_triangle, point_segment_distance, point_triangle_distance, Containment, Edge,
    GeometryError, Polyhedron,
};
