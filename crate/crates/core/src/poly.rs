//! Exact multivariate polynomials on R^m.
//!
//! Every tensor field in the lab (bivectors, Christoffel symbols, constraint
//! functions, one-forms) is a polynomial in the coordinates, so partial
//! derivatives are computed on the coefficients and never by differencing.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// One monomial `coeff * x_1^{e_1} ... x_m^{e_m}` in its wire form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

/// Polynomial with real coefficients in `dim` variables.
///
/// Terms are kept merged (one entry per exponent tuple) and sorted, with
/// zero coefficients dropped, so two equal polynomials have equal term lists.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyScalarField {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl PolyScalarField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(dim, c, vec![0; dim])
    }

    /// The coordinate function `x_i` (0-based).
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[i] = 1;
        Self::monomial(dim, 1.0, exps)
    }

    pub fn monomial(dim: usize, coeff: f64, exps: Vec<u32>) -> Self {
        assert_eq!(exps.len(), dim, "exponent tuple has wrong length");
        let mut p = Self::zero(dim);
        p.push(coeff, exps);
        p
    }

    /// Builds a polynomial from wire terms, merging duplicate exponent tuples.
    pub fn from_terms(dim: usize, terms: &[Term]) -> Result<Self> {
        let mut p = Self::zero(dim);
        for t in terms {
            if t.exps.len() != dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim,
                    found: t.exps.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(LabError::InvalidInput(format!(
                    "non-finite coefficient {}",
                    t.coeff
                )));
            }
            p.push(t.coeff, t.exps.clone());
        }
        Ok(p)
    }

    fn push(&mut self, coeff: f64, exps: Vec<u32>) {
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(e, c)| Term {
                coeff: *c,
                exps: e.clone(),
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(exps, c)| {
                exps.iter()
                    .zip(x)
                    .fold(*c, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
            })
            .sum()
    }

    /// Exact partial derivative with respect to `x_k`.
    pub fn partial(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (exps, c) in &self.terms {
            let e = exps[k];
            if e == 0 {
                continue;
            }
            let mut d = exps.clone();
            d[k] = e - 1;
            out.push(c * e as f64, d);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.dim).map(|k| self.partial(k)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            out.push(c * s, e.clone());
        }
        out
    }

    /// Largest coefficient magnitude; zero for the zero polynomial.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

impl Add for &PolyScalarField {
    type Output = PolyScalarField;
    fn add(self, rhs: &PolyScalarField) -> PolyScalarField {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.push(*c, e.clone());
        }
        out
    }
}

impl Sub for &PolyScalarField {
    type Output = PolyScalarField;
    fn sub(self, rhs: &PolyScalarField) -> PolyScalarField {
        self + &(-rhs)
    }
}

impl Neg for &PolyScalarField {
    type Output = PolyScalarField;
    fn neg(self) -> PolyScalarField {
        self.scale(-1.0)
    }
}

impl Mul for &PolyScalarField {
    type Output = PolyScalarField;
    fn mul(self, rhs: &PolyScalarField) -> PolyScalarField {
        assert_eq!(self.dim, rhs.dim);
        let mut out = PolyScalarField::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.push(ca * cb, e);
            }
        }
        out
    }
}

impl fmt::Display for PolyScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (exps, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, e) in exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Polynomial in the path parameter `u`, stored as power-series coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UPoly(pub Vec<f64>);

impl UPoly {
    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}
