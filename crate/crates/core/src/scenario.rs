//! Scenario files: the wire format (`ScenarioSpec`) and its validated,
//! ready-to-run form (`Scenario`).

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{LabError, Result};
use crate::poly::{PolyScalarField, Term, UPoly};
use crate::report::CHECK_IDS;
use crate::tensor::{BivectorField, ConnectionField, LevelSetSubmanifold};

/// Upper-triangle bivector component `pi^{ij}`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiEntry {
    pub i: usize,
    pub j: usize,
    pub terms: Vec<Term>,
}

/// Christoffel symbol `Gamma^upper_{lower[0] lower[1]}`; the symmetric
/// partner is filled in automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionEntry {
    pub upper: usize,
    pub lower: [usize; 2],
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaSpec {
    /// One polynomial in `u` per component, sampled at cell midpoints.
    Poly(Vec<UPoly>),
    /// Polynomial components with coefficients uniform in [-1, 1).
    Random { seed: u64, degree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMode {
    #[default]
    Interval,
    Circle,
}

fn default_refinement() -> Vec<usize> {
    vec![16, 32, 64]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dim: usize,
    #[serde(default)]
    pub pi: Vec<PiEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub connection: Vec<ConnectionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<Vec<Vec<Term>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<Vec<Term>>>,
    pub x0: Vec<f64>,
    pub eta: EtaSpec,
    pub grid: Vec<usize>,
    #[serde(default = "default_refinement")]
    pub refinement_grid: Vec<usize>,
    #[serde(default)]
    pub mode: PathMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect_fail: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_reduced_dim: Option<usize>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario specs always serialize")
    }
}

/// A validated scenario with its fields built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub pi: BivectorField,
    pub conn: ConnectionField,
    pub c0: Option<LevelSetSubmanifold>,
    pub c1: Option<LevelSetSubmanifold>,
    pub eta: Vec<UPoly>,
    pub tol: Tolerances,
    pub expect_fail: BTreeSet<String>,
}

fn parse_err(name: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Parse(format!("scenario {name:?}: {msg}"))
}

fn check_grid(name: &str, label: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(parse_err(name, format!("{label} is empty")));
    }
    if let Some(n) = grid.iter().find(|n| **n < 2) {
        return Err(parse_err(name, format!("{label} entry {n} is below 2")));
    }
    Ok(())
}

fn random_eta(dim: usize, seed: u64, degree: usize) -> Vec<UPoly> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| UPoly((0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect()
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        let name = spec.name.clone();
        let m = spec.dim;
        if name.trim().is_empty() {
            return Err(LabError::Parse("scenario name is empty".into()));
        }
        if m == 0 {
            return Err(parse_err(&name, "dim must be positive"));
        }
        if spec.x0.len() != m {
            return Err(parse_err(&name, format!("x0 has {} entries, dim is {m}", spec.x0.len())));
        }
        if spec.x0.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(&name, "x0 is not finite"));
        }
        check_grid(&name, "grid", &spec.grid)?;
        check_grid(&name, "refinement_grid", &spec.refinement_grid)?;

        let mut entries = Vec::new();
        for e in &spec.pi {
            if e.i >= e.j || e.j >= m {
                return Err(parse_err(&name, format!("pi entry ({}, {}) is not i < j < dim", e.i, e.j)));
            }
            entries.push((e.i, e.j, PolyScalarField::from_terms(m, &e.terms).map_err(|err| parse_err(&name, err))?));
        }
        let pi = BivectorField::from_upper(m, entries).map_err(|err| parse_err(&name, err))?;

        let conn = if spec.connection.is_empty() {
            ConnectionField::flat(m)
        } else {
            let mut symbols = vec![PolyScalarField::zero(m); m * m * m];
            for e in &spec.connection {
                let [j, k] = e.lower;
                if e.upper >= m || j >= m || k >= m {
                    return Err(parse_err(&name, "connection index out of range"));
                }
                let p = PolyScalarField::from_terms(m, &e.terms).map_err(|err| parse_err(&name, err))?;
                symbols[(e.upper * m + j) * m + k] = &symbols[(e.upper * m + j) * m + k] + &p;
                if j != k {
                    symbols[(e.upper * m + k) * m + j] = &symbols[(e.upper * m + k) * m + j] + &p;
                }
            }
            ConnectionField::new(m, symbols).map_err(|err| parse_err(&name, err))?
        };

        let level_set = |c: &Option<Vec<Vec<Term>>>| -> Result<Option<LevelSetSubmanifold>> {
            match c {
                None => Ok(None),
                Some(fs) => {
                    let polys = fs
                        .iter()
                        .map(|t| PolyScalarField::from_terms(m, t))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|err| parse_err(&name, err))?;
                    Ok(Some(LevelSetSubmanifold::new(m, polys).map_err(|err| parse_err(&name, err))?))
                }
            }
        };
        let c0 = level_set(&spec.c0)?;
        let c1 = level_set(&spec.c1)?;
        if spec.mode == PathMode::Circle && (c0.is_some() || c1.is_some()) {
            return Err(parse_err(&name, "circle scenarios take no boundary submanifolds"));
        }

        let eta = match &spec.eta {
            EtaSpec::Poly(p) => {
                if p.len() != m {
                    return Err(parse_err(&name, format!("eta has {} components, dim is {m}", p.len())));
                }
                if p.iter().any(|c| c.0.iter().any(|v| !v.is_finite())) {
                    return Err(parse_err(&name, "eta coefficients are not finite"));
                }
                p.clone()
            }
            EtaSpec::Random { seed, degree } => random_eta(m, *seed, *degree),
        };

        let tol = spec.tolerances.clone().unwrap_or_default();
        let mut expect_fail = BTreeSet::new();
        for id in &spec.expect_fail {
            if !CHECK_IDS.contains(&id.as_str()) {
                return Err(parse_err(&name, format!("unknown check id {id:?} in expect_fail")));
            }
            expect_fail.insert(id.clone());
        }
        Ok(Self {
            spec,
            pi,
            conn,
            c0,
            c1,
            eta,
            tol,
            expect_fail,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(ScenarioSpec::from_json(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.spec.x0
    }

    pub fn periodic(&self) -> bool {
        self.spec.mode == PathMode::Circle
    }

    pub fn grid(&self) -> &[usize] {
        &self.spec.grid
    }

    pub fn refinement_grid(&self) -> &[usize] {
        &self.spec.refinement_grid
    }

    /// `eta` sampled at the midpoints of `n` cells.
    pub fn eta_cells(&self, n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|c| {
                let u = (c as f64 + 0.5) / n as f64;
                DVector::from_iterator(self.eta.len(), self.eta.iter().map(|p| p.eval(u)))
            })
            .collect()
    }

    /// Re-draws a random `eta` from a new seed; polynomial `eta` is kept.
    pub fn reseed(&mut self, seed: u64) {
        if let EtaSpec::Random { seed: s, degree } = &mut self.spec.eta {
            *s = seed;
            self.eta = random_eta(self.spec.dim, seed, *degree);
        }
    }

    pub fn override_grid(&mut self, grid: &[usize]) -> Result<()> {
        check_grid(&self.spec.name, "grid", grid)?;
        self.spec.grid = grid.to_vec();
        Ok(())
    }
}
