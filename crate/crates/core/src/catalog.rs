//! Built-in scenarios, shipped as JSON files under `scenarios/`.

use crate::error::{LabError, Result};
use crate::scenario::Scenario;

pub const BUILTINS: [(&str, &str); 9] = [
    ("zero-pi-r2", include_str!("../scenarios/zero-pi-r2.json")),
    ("zero-pi-intersecting-lines", include_str!("../scenarios/zero-pi-intersecting-lines.json")),
    ("symplectic-r2", include_str!("../scenarios/symplectic-r2.json")),
    ("symplectic-r2-free", include_str!("../scenarios/symplectic-r2-free.json")),
    ("symplectic-r4", include_str!("../scenarios/symplectic-r4.json")),
    ("so3-lie-poisson", include_str!("../scenarios/so3-lie-poisson.json")),
    ("circle-so3", include_str!("../scenarios/circle-so3.json")),
    ("nonpoisson-r4", include_str!("../scenarios/nonpoisson-r4.json")),
    ("nonpoisson-r4-circle", include_str!("../scenarios/nonpoisson-r4-circle.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let (_, text) = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            LabError::Parse(format!(
                "unknown builtin {name:?}; available: {}",
                names().collect::<Vec<_>>().join(", ")
            ))
        })?;
    Scenario::from_json(text)
}

pub fn all() -> Vec<Scenario> {
    names()
        .map(|n| builtin(n).expect("built-in scenarios are valid"))
        .collect()
}
