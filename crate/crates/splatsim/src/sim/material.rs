//! Per-object material parameters and the constitutive-model tag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constitutive models available per object. Only fixed-corotated
/// elasticity is implemented; the tag exists so configurations stay
/// forward-compatible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstitutiveModel {
    #[default]
    FixedCorotated,
}

/// Material description: density, engineering elastic constants, the
/// constitutive model, and the object's initial velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Mass density, kg per cubic world unit.
    pub density: f64,
    /// Young's modulus E (Pa).
    pub youngs_modulus: f64,
    /// Poisson's ratio ν, in (0, 0.5).
    pub poisson_ratio: f64,
    #[serde(default)]
    pub model: ConstitutiveModel,
    /// Velocity assigned to every particle of the object at t = 0.
    #[serde(default)]
    pub initial_velocity: [f64; 3],
}

impl Material {
    pub fn elastic(density: f64, youngs_modulus: f64, poisson_ratio: f64, v0: [f64; 3]) -> Self {
        Material {
            density,
            youngs_modulus,
            poisson_ratio,
            model: ConstitutiveModel::FixedCorotated,
            initial_velocity: v0,
        }
    }

    /// Lamé parameters (μ, λ) derived from E and ν.
    pub fn lame(&self) -> (f64, f64) {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        (mu, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.density <= 0.0 {
            return Err(Error::Config(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        if self.youngs_modulus <= 0.0 {
            return Err(Error::Config(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::Config(format!(
                "Poisson's ratio must lie in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        let (mu, lambda) = self.lame();
        if !(mu > 0.0 && lambda.is_finite()) {
            return Err(Error::Config("degenerate Lame parameters".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_from_paper_constants() {
        // E = 1e7, nu = 0.2: mu = E/2.4, lambda = E*0.2/(1.2*0.6)
        let m = Material::elastic(1000.0, 1e7, 0.2, [0.0; 3]);
        let (mu, lambda) = m.lame();
        assert!((mu - 1e7 / 2.4).abs() < 1e-6);
        assert!((lambda - 1e7 * 0.2 / (1.2 * 0.6)).abs() < 1e-6);
    }

    #[test]
    fn validation_bounds() {
        assert!(Material::elastic(0.0, 1e7, 0.2, [0.0; 3]).validate().is_err());
        assert!(Material::elastic(1000.0, 1e7, 0.5, [0.0; 3])
            .validate()
            .is_err());
        assert!(Material::elastic(1000.0, 1e7, 0.49, [0.0; 3])
            .validate()
            .is_ok());
    }
}
