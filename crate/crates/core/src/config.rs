//! Numerical tolerances used across the lab, overridable per scenario or flag.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// |F_a(x)| allowed for a point to count as lying on a level set.
    pub membership: f64,
    /// Pointwise coisotropy residual with unit-normalized Jacobian rows.
    pub coisotropy: f64,
    /// Relative singular-value cutoff for every rank decision.
    pub rank: f64,
    /// Largest admissible distance of an orthogonal vector from W + ker.
    pub inclusion: f64,
    /// Per-unit-length residual targeted by the path solver.
    pub solve: f64,
    /// Allowed gap |X(1) - X(0)| for periodic pairs.
    pub closure: f64,
    /// Jacobiator max-norm below which a sampled field counts as Poisson.
    pub poisson: f64,
    /// Residual bound for the twisted linear equation.
    pub twist: f64,
    /// Two-sided subspace defect between gauge vectors and the orthogonal.
    pub characteristic: f64,
    /// Values at or below this floor are treated as exact zeros in order fits.
    pub order_floor: f64,
    /// Minimal fitted convergence order for refinement checks.
    pub min_order: f64,
    /// Lower bound on p_drift that flags a non-Poisson field.
    pub drift_detect: f64,
    /// Upper bound on p_drift for a Poisson field at any refinement level.
    pub drift_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            membership: 1e-9,
            coisotropy: 1e-8,
            rank: 1e-10,
            inclusion: 1e-8,
            solve: 1e-12,
            closure: 1e-9,
            poisson: 1e-12,
            twist: 1e-9,
            characteristic: 1e-7,
            order_floor: 1e-10,
            min_order: 1.9,
            drift_detect: 0.05,
            drift_bound: 1e-3,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 13] = [
        "membership",
        "coisotropy",
        "rank",
        "inclusion",
        "solve",
        "closure",
        "poisson",
        "twist",
        "characteristic",
        "order_floor",
        "min_order",
        "drift_detect",
        "drift_bound",
    ];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(LabError::Parse(format!(
                "tolerance {key} must be a finite non-negative number"
            )));
        }
        let slot = match key {
            "membership" => &mut self.membership,
            "coisotropy" => &mut self.coisotropy,
            "rank" => &mut self.rank,
            "inclusion" => &mut self.inclusion,
            "solve" => &mut self.solve,
            "closure" => &mut self.closure,
            "poisson" => &mut self.poisson,
            "twist" => &mut self.twist,
            "characteristic" => &mut self.characteristic,
            "order_floor" => &mut self.order_floor,
            "min_order" => &mut self.min_order,
            "drift_detect" => &mut self.drift_detect,
            "drift_bound" => &mut self.drift_bound,
            _ => {
                return Err(LabError::Parse(format!(
                    "unknown tolerance key {key:?}; expected one of {}",
                    Self::KEYS.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Applies a `KEY=VAL` override string.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| LabError::Parse(format!("override {spec:?} is not KEY=VAL")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| LabError::Parse(format!("override value {v:?} is not a number")))?;
        self.set(k.trim(), v)
    }
}
