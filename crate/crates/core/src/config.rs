use serde::{Deserialize, Serialize};

use crate::error::{PencilError, Result};

/// Every numerical threshold used by the pipelines. Scales are
/// `max(1, ‖A‖)` of the matrix a test is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalue clustering threshold, relative.
    pub gap_tol: f64,
    /// Line-root clustering threshold, relative to `1 + max|root|`.
    pub cluster_rel_tol: f64,
    /// Minimum cluster separation and modulus for admissibility, relative.
    pub separation_tol: f64,
    /// Block factorization, layer and cycle checks.
    pub structural_tol: f64,
    /// Final decomposition residual, relative.
    pub residual_tol: f64,
    /// Finite-difference step for branch slopes.
    pub fd_step: f64,
    /// Perturbation radius for admissible transforms.
    pub admissible_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            cluster_rel_tol: 1e-6,
            separation_tol: 1e-4,
            structural_tol: 1e-7,
            residual_tol: 1e-6,
            fd_step: 1e-5,
            admissible_radius: 0.05,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 7] = [
        "gap_tol",
        "cluster_rel_tol",
        "separation_tol",
        "structural_tol",
        "residual_tol",
        "fd_step",
        "admissible_radius",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(PencilError::InvalidArgument(format!("tolerance {key} must be positive, got {value}")));
        }
        let slot = match key {
            "gap_tol" => &mut self.gap_tol,
            "cluster_rel_tol" => &mut self.cluster_rel_tol,
            "separation_tol" => &mut self.separation_tol,
            "structural_tol" => &mut self.structural_tol,
            "residual_tol" => &mut self.residual_tol,
            "fd_step" => &mut self.fd_step,
            "admissible_radius" => {
                if value > 0.5 {
                    return Err(PencilError::InvalidArgument("admissible_radius must lie in (0, 0.5]".into()));
                }
                &mut self.admissible_radius
            }
            other => {
                return Err(PencilError::InvalidArgument(format!(
                    "unknown tolerance `{other}`; expected one of {}",
                    Self::KEYS.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| PencilError::InvalidArgument(format!("expected key=value, got `{assignment}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| PencilError::InvalidArgument(format!("`{value}` is not a number")))?;
        self.set(key.trim(), value)
    }
}
