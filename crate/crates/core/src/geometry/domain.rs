//! The computational domain Ω and the accessible boundary patch Σ.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

/// Shape of the domain Ω containing the inclusions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum OmegaShape {
    Box { lo: [f64; 3], hi: [f64; 3] },
    Ball { center: [f64; 3], radius: f64 },
}

impl OmegaShape {
    pub fn unit_box_centered() -> Self {
        OmegaShape::Box {
            lo: [-0.5, -0.5, -0.5],
            hi: [0.5, 0.5, 0.5],
        }
    }

    pub fn contains(&self, x: Point3<f64>) -> bool {
        match self {
            OmegaShape::Box { lo, hi } => {
                (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i])
            }
            OmegaShape::Ball { center, radius } => {
                (x - Point3::from(*center)).norm() <= *radius
            }
        }
    }

    /// Distance to ∂Ω, positive inside and negative outside.
    pub fn signed_boundary_distance(&self, x: Point3<f64>) -> f64 {
        match self {
            OmegaShape::Box { lo, hi } => {
                let mut inside_min = f64::INFINITY;
                let mut outside = 0.0f64;
                for i in 0..3 {
                    let (a, b) = (x[i] - lo[i], hi[i] - x[i]);
                    inside_min = inside_min.min(a).min(b);
                    if a < 0.0 {
                        outside += a * a;
                    }
                    if b < 0.0 {
                        outside += b * b;
                    }
                }
                if outside > 0.0 {
                    -outside.sqrt()
                } else {
                    inside_min
                }
            }
            OmegaShape::Ball { center, radius } => {
                radius - (x - Point3::from(*center)).norm()
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            OmegaShape::Box { lo, hi } => {
                let d = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            }
            OmegaShape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn bbox(&self) -> (Point3<f64>, Point3<f64>) {
        match self {
            OmegaShape::Box { lo, hi } => (Point3::from(*lo), Point3::from(*hi)),
            OmegaShape::Ball { center, radius } => {
                let c = Point3::from(*center);
                let r = *radius;
                (
                    Point3::new(c.x - r, c.y - r, c.z - r),
                    Point3::new(c.x + r, c.y + r, c.z + r),
                )
            }
        }
    }
}

/// The accessible boundary patch Σ ⊆ ∂Ω where data are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "patch", rename_all = "snake_case")]
pub enum SigmaPatch {
    /// The whole boundary is accessible.
    Full,
    /// One face of a box domain: `axis` ∈ {0,1,2}, `positive` picks the side.
    BoxFace { axis: usize, positive: bool },
}

impl SigmaPatch {
    /// Whether a boundary point x ∈ ∂Ω belongs to Σ (up to `tol`).
    pub fn contains_boundary_point(&self, omega: &OmegaShape, x: Point3<f64>, tol: f64) -> bool {
        match self {
            SigmaPatch::Full => true,
            SigmaPatch::BoxFace { axis, positive } => match omega {
                OmegaShape::Box { lo, hi } => {
                    let plane = if *positive { hi[*axis] } else { lo[*axis] };
                    (x[*axis] - plane).abs() <= tol
                }
                OmegaShape::Ball { .. } => false,
            },
        }
    }

    /// Largest achievable distance from a point of Σ to ∂Ω∖Σ. For a full
    /// boundary patch the condition is vacuous and the domain diameter is
    /// returned.
    pub fn interior_margin(&self, omega: &OmegaShape) -> f64 {
        match self {
            SigmaPatch::Full => omega.diameter(),
            SigmaPatch::BoxFace { axis, .. } => match omega {
                OmegaShape::Box { lo, hi } => {
                    // At the face center, the nearest point of ∂Ω∖Σ lies on an
                    // adjacent face at half the smallest in-plane extent, or on
                    // the opposite face at the full axis extent.
                    let mut best = hi[*axis] - lo[*axis];
                    for i in 0..3 {
                        if i != *axis {
                            best = best.min((hi[i] - lo[i]) / 2.0);
                        }
                    }
                    best
                }
                OmegaShape::Ball { .. } => 0.0,
            },
        }
    }
}
