//! Observed convergence order from values on a sequence of grids.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OrderFit {
    /// Every value sits at or below the floor: the quantity vanishes exactly
    /// in the discrete model.
    Exact { floor: f64 },
    /// Least-squares slope of `log value` against `log h`, using only the
    /// grids whose value is above the floor.
    Fitted { order: f64, points: usize },
    /// Fewer than two usable grids.
    Insufficient { points: usize },
}

impl OrderFit {
    pub fn meets(&self, min_order: f64) -> bool {
        match self {
            OrderFit::Exact { .. } => true,
            OrderFit::Fitted { order, .. } => *order >= min_order,
            OrderFit::Insufficient { .. } => false,
        }
    }

    pub fn order(&self) -> Option<f64> {
        match self {
            OrderFit::Fitted { order, .. } => Some(*order),
            _ => None,
        }
    }
}

pub fn fit_order(ns: &[usize], values: &[f64], floor: f64) -> OrderFit {
    assert_eq!(ns.len(), values.len());
    if !values.is_empty() && values.iter().all(|v| v.abs() <= floor) {
        return OrderFit::Exact { floor };
    }
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| v.abs() > floor && v.is_finite())
        .map(|(n, v)| ((1.0 / *n as f64).ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return OrderFit::Insufficient { points: pts.len() };
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    OrderFit::Fitted {
        order: sxy / sxx,
        points: pts.len(),
    }
}
