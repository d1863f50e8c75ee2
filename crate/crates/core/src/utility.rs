//! Private utility functions held by suppliers and consumers.
//!
//! Each agent owns one [`Utility`] and never shares it. The market only ever
//! sees quantities, so everything an agent needs to decide how to react to a
//! capacity signal has to come from the value and slope of its own function.

use serde::{Deserialize, Serialize};

use crate::error::UtilityError;

/// A concave utility function.
///
/// Serialized as a flat record tagged by `kind`, e.g.
/// `{ kind = "Quadratic", optimum = 50.0, curvature = 10.0 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Utility {
    /// `-(z - optimum)^2 / curvature + 1.5 * curvature`, maximized at `optimum`.
    Quadratic { optimum: f64, curvature: f64 },
    /// `scale * sqrt(z)`: concave and strictly increasing, no finite maximum.
    SqrtMonotone { scale: f64 },
}

impl Utility {
    pub fn quadratic(optimum: f64, curvature: f64) -> Result<Self, UtilityError> {
        let u = Utility::Quadratic { optimum, curvature };
        u.validate()?;
        Ok(u)
    }

    pub fn sqrt_monotone(scale: f64) -> Result<Self, UtilityError> {
        let u = Utility::SqrtMonotone { scale };
        u.validate()?;
        Ok(u)
    }

    /// Checks the parameter invariants of this utility family.
    pub fn validate(&self) -> Result<(), UtilityError> {
        match *self {
            Utility::Quadratic { optimum, curvature } => {
                if !(optimum.is_finite() && optimum >= 0.0) {
                    return Err(UtilityError::InvalidParameter {
                        name: "optimum",
                        value: optimum,
                    });
                }
                if !(curvature.is_finite() && curvature > 0.0) {
                    return Err(UtilityError::InvalidParameter {
                        name: "curvature",
                        value: curvature,
                    });
                }
            }
            Utility::SqrtMonotone { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(UtilityError::InvalidParameter {
                        name: "scale",
                        value: scale,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, z: f64) -> Result<f64, UtilityError> {
        check_domain(z)?;
        Ok(match *self {
            Utility::Quadratic { optimum, curvature } => {
                let d = z - optimum;
                -d * d / curvature + 1.5 * curvature
            }
            Utility::SqrtMonotone { scale } => scale * z.sqrt(),
        })
    }

    /// First derivative at `z`.
    ///
    /// `SqrtMonotone` has an infinite slope at zero; that case is reported as
    /// [`UtilityError::UnboundedDerivative`] so the caller picks the clamp.
    pub fn derivative(&self, z: f64) -> Result<f64, UtilityError> {
        check_domain(z)?;
        match *self {
            Utility::Quadratic { optimum, curvature } => Ok(-2.0 * (z - optimum) / curvature),
            Utility::SqrtMonotone { scale } => {
                if z == 0.0 {
                    Err(UtilityError::UnboundedDerivative)
                } else {
                    Ok(scale / (2.0 * z.sqrt()))
                }
            }
        }
    }

    /// Location of the unconstrained maximum, if the function has one.
    pub fn argmax(&self) -> Option<f64> {
        match *self {
            Utility::Quadratic { optimum, .. } => Some(optimum),
            Utility::SqrtMonotone { .. } => None,
        }
    }

    /// Value at [`Self::argmax`], if any.
    pub fn max_value(&self) -> Option<f64> {
        match *self {
            Utility::Quadratic { curvature, .. } => Some(1.5 * curvature),
            Utility::SqrtMonotone { .. } => None,
        }
    }

    /// Absolute gap between [`Self::derivative`] and a central finite
    /// difference with step `h`.
    pub fn check_derivative(&self, z: f64, h: f64) -> Result<f64, UtilityError> {
        if !(h > 0.0) {
            return Err(UtilityError::InvalidParameter { name: "h", value: h });
        }
        let analytic = self.derivative(z)?;
        let numeric = (self.evaluate(z + h)? - self.evaluate(z - h)?) / (2.0 * h);
        Ok((analytic - numeric).abs())
    }
}

fn check_domain(z: f64) -> Result<(), UtilityError> {
    if z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(UtilityError::NegativeQuantity(z))
    }
}
