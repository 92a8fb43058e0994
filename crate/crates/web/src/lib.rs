//! Browser bindings: a handful of single-scenario checks that return JSON
//! strings for the static page in `www/`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use coiso_lab::catalog;
use coiso_lab::convergence::{fit_order, OrderFit};
use coiso_lab::harness::{build_tangent, characteristic_match, coisotropy_verdict, AmbientDiscretization};
use coiso_lab::path::{constraint_residual, p_drift};
use coiso_lab::runner::base_pair;
use coiso_lab::scenario::Scenario;
use coiso_lab::tensor::jacobiator;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(err)
}

#[derive(Serialize)]
struct Entry {
    name: &'static str,
    description: String,
    dim: usize,
    periodic: bool,
    x0: Vec<f64>,
}

/// Built-in scenarios as `[{name, description, dim, periodic, x0}]`.
#[wasm_bindgen]
pub fn catalog_json() -> Result<String, JsValue> {
    let list: Vec<Entry> = catalog::names()
        .map(|n| {
            let s = catalog::builtin(n).expect("built-ins parse");
            Entry {
                name: n,
                description: s.spec.description.clone().unwrap_or_default(),
                dim: s.dim(),
                periodic: s.periodic(),
                x0: s.x0().to_vec(),
            }
        })
        .collect();
    to_json(&list)
}

fn scenario(name: &str) -> Result<Scenario, JsValue> {
    catalog::builtin(name).map_err(err)
}

#[derive(Serialize)]
struct JacobiatorOut {
    max_abs: f64,
    /// Nonzero entries `J^{ijk}` with `i < j < k`, zero-based.
    entries: Vec<(usize, usize, usize, f64)>,
}

/// Jacobiator of the scenario's bivector at `x`.
#[wasm_bindgen]
pub fn jacobiator_at(name: &str, x: Vec<f64>) -> Result<String, JsValue> {
    let s = scenario(name)?;
    let j = jacobiator(&s.pi, &x).map_err(err)?;
    let m = s.dim();
    let mut entries = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let v = j.get(a, b, c);
                if v != 0.0 {
                    entries.push((a, b, c, v));
                }
            }
        }
    }
    to_json(&JacobiatorOut {
        max_abs: j.max_abs(),
        entries,
    })
}

#[derive(Serialize)]
struct DriftOut {
    ns: Vec<usize>,
    drift: Vec<f64>,
    fit: OrderFit,
}

/// `p_drift` of the base pair over a doubling grid starting at `n0`. A
/// nonzero `seed` re-draws random eta.
#[wasm_bindgen]
pub fn drift_curve(name: &str, n0: usize, levels: usize, seed: u64) -> Result<String, JsValue> {
    let mut s = scenario(name)?;
    if seed != 0 {
        s.reseed(seed);
    }
    let ns: Vec<usize> = (0..levels.clamp(2, 7)).map(|k| n0.max(2) << k).collect();
    let mut drift = Vec::new();
    for &n in &ns {
        let pair = base_pair(&s, n).map_err(err)?;
        drift.push(p_drift(&pair, &s.pi, &s.conn).map_err(err)?);
    }
    let fit = fit_order(&ns, &drift, s.tol.order_floor);
    to_json(&DriftOut { ns, drift, fit })
}

#[derive(Serialize)]
struct VerdictOut {
    n: usize,
    constraint_residual: f64,
    coisotropic: bool,
    defect: usize,
    worst_residual: f64,
    kernel_dim: usize,
    tangent_dim: usize,
    orthogonal_dim: usize,
    characteristic_defect: Option<f64>,
}

/// Coisotropy verdict of the discretized constraint set at `n` cells.
#[wasm_bindgen]
pub fn coisotropy_at(name: &str, n: usize) -> Result<String, JsValue> {
    let s = scenario(name)?;
    let n = n.clamp(2, 48);
    let pair = base_pair(&s, n).map_err(err)?;
    let amb = AmbientDiscretization::build(&s.pi, &s.conn, &pair, s.c0.as_ref(), s.c1.as_ref(), &s.tol)
        .map_err(err)?;
    let t = build_tangent(&amb).map_err(err)?;
    let v = coisotropy_verdict(&amb, &t, s.tol.inclusion).map_err(err)?;
    let characteristic_defect = characteristic_match(&amb, &t).ok().map(|c| c.defect);
    to_json(&VerdictOut {
        n,
        constraint_residual: constraint_residual(&pair, &s.pi).map_err(err)?,
        coisotropic: v.coisotropic,
        defect: v.defect,
        worst_residual: v.worst_residual,
        kernel_dim: v.kernel_dim,
        tangent_dim: v.tangent_dim,
        orthogonal_dim: v.orthogonal_dim,
        characteristic_defect,
    })
}
