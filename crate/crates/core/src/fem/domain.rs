//! Domain descriptions consumed by the mesher.

use serde::{Deserialize, Serialize};

use super::FemError;
use crate::geometry::{AprioriData, OmegaShape, SigmaPatch};

/// A box glued onto the outside of the accessible patch, used to carry
/// singular sources outside the physical domain.
///
/// Extents are physical lengths; the mesher snaps them to whole grid cells
/// (the footprint to a cell count of the same parity as the face, so the box
/// stays centred on whole cells). Snapping keeps the glued geometry fixed
/// under mesh refinement, so refinement studies compare like with like. The
/// conductivity inside the box is one.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Augmentation {
    /// Footprint side length along both in-plane axes.
    pub width: f64,
    /// Outward extent.
    pub height: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation {
            width: 7.0 / 12.0,
            height: 1.0 / 3.0,
        }
    }
}

/// Everything the mesher needs to know about the domain: its shape, the
/// accessible boundary patch, and an optional glued box across that patch.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainSpec {
    pub omega: OmegaShape,
    pub sigma: SigmaPatch,
    #[serde(default)]
    pub augmentation: Option<Augmentation>,
}

impl DomainSpec {
    /// Unit box centred at the origin with the top face accessible and no
    /// glued box.
    pub fn unit_box_top_face() -> Self {
        DomainSpec {
            omega: OmegaShape::unit_box_centered(),
            sigma: SigmaPatch::BoxFace {
                axis: 2,
                positive: true,
            },
            augmentation: None,
        }
    }

    /// Same as [`unit_box_top_face`](Self::unit_box_top_face) but with the
    /// default glued box across the accessible face.
    pub fn augmented_unit_box() -> Self {
        DomainSpec {
            augmentation: Some(Augmentation::default()),
            ..Self::unit_box_top_face()
        }
    }

    /// Ball centred at the origin with fully accessible boundary.
    pub fn ball(radius: f64) -> Self {
        DomainSpec {
            omega: OmegaShape::Ball {
                center: [0.0; 3],
                radius,
            },
            sigma: SigmaPatch::Full,
            augmentation: None,
        }
    }

    /// Checks the domain against the a-priori bounds: diameter within the
    /// global bound and an accessible patch deep enough to contain a point
    /// at distance `feature_radius` from its rim.
    pub fn check_against(&self, prior: &AprioriData) -> Result<(), FemError> {
        let diameter = self.omega.diameter();
        if diameter > prior.diameter_bound + 1e-12 {
            return Err(FemError::BadDomain(format!(
                "domain diameter {diameter} exceeds the a-priori bound {}",
                prior.diameter_bound
            )));
        }
        let margin = self.sigma.interior_margin(&self.omega);
        if margin < prior.feature_radius {
            return Err(FemError::BadDomain(format!(
                "accessible patch margin {margin} is below the feature radius {}",
                prior.feature_radius
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> AprioriData {
        AprioriData::new(0.15, std::f64::consts::FRAC_PI_6, 2.0, 1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn default_box_satisfies_prior_bounds() {
        DomainSpec::unit_box_top_face()
            .check_against(&prior())
            .unwrap();
        DomainSpec::augmented_unit_box()
            .check_against(&prior())
            .unwrap();
    }

    #[test]
    fn oversized_domain_is_rejected() {
        let spec = DomainSpec {
            omega: OmegaShape::Box {
                lo: [-2.0, -2.0, -2.0],
                hi: [2.0, 2.0, 2.0],
            },
            sigma: SigmaPatch::Full,
            augmentation: None,
        };
        assert!(matches!(
            spec.check_against(&prior()),
            Err(FemError::BadDomain(_))
        ));
    }

    #[test]
    fn shallow_patch_is_rejected() {
        // A patch on the top face of a thin sliver leaves no room for an
        // interior point at the required depth.
        let spec = DomainSpec {
            omega: OmegaShape::Box {
                lo: [-0.5, -0.5, -0.05],
                hi: [0.5, 0.5, 0.05],
            },
            sigma: SigmaPatch::BoxFace {
                axis: 2,
                positive: true,
            },
            augmentation: None,
        };
        assert!(matches!(
            spec.check_against(&prior()),
            Err(FemError::BadDomain(_))
        ));
    }

    #[test]
    fn spec_round_trips_through_serde() {
        let spec = DomainSpec::augmented_unit_box();
        let text = toml::to_string(&spec).unwrap();
        let back: DomainSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
