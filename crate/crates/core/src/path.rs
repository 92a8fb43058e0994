//! Discrete compatible pairs `(X, eta)`: solving, parallel transport, the
//! twisted frame `P = U S U^t`, gauge flows and the momentum pairing.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cellflow::{integrate_cell, CellData};
use crate::error::{LabError, Result};
use crate::poly::PolyScalarField;
use crate::symplin::LinSubspace;
use crate::tensor::{
    a_matrix, covariant_derivative_pi, gamma_contract, gamma_eta, sharp_matrix, t_tensor,
    BivectorField, ConnectionField, LevelSetSubmanifold,
};

/// How node values are tied to cell coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `X[c+1] = X[c] - h S((X[c] + X[c+1]) / 2) eta[c]`.
    ImplicitMidpoint,
    /// `X[c+1]` is the exact time-`h` flow of `x' = -S(x) eta[c]` from `X[c]`.
    CellFlow,
}

/// Discretized pair: `X` at `N + 1` nodes, `eta` as per-unit-length
/// coefficients on `N` cells of width `h = 1 / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePair {
    pub x: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub periodic: bool,
    pub scheme: Scheme,
}

impl DiscretePair {
    pub fn new(x: Vec<DVector<f64>>, eta: Vec<DVector<f64>>, periodic: bool, scheme: Scheme) -> Result<Self> {
        let n = eta.len();
        if n < 2 {
            return Err(LabError::InvalidInput(format!("need at least 2 cells, got {n}")));
        }
        if x.len() != n + 1 {
            return Err(LabError::DimensionMismatch {
                expected: n + 1,
                found: x.len(),
            });
        }
        let m = x[0].len();
        for v in x.iter().chain(eta.iter()) {
            if v.len() != m {
                return Err(LabError::DimensionMismatch {
                    expected: m,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            x,
            eta,
            periodic,
            scheme,
        })
    }

    pub fn m(&self) -> usize {
        self.x[0].len()
    }

    pub fn n_cells(&self) -> usize {
        self.eta.len()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn midpoint(&self, c: usize) -> DVector<f64> {
        (&self.x[c] + &self.x[c + 1]) * 0.5
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.x[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.x[self.n_cells()]
    }
}

/// Midpoint residual per unit length,
/// `max_c |(X[c+1] - X[c]) / h + S(X_mid) eta[c]|`.
pub fn midpoint_residual(pair: &DiscretePair, pi: &BivectorField) -> Result<f64> {
    let h = pair.h();
    let mut worst = 0.0_f64;
    for c in 0..pair.n_cells() {
        let y = pair.midpoint(c);
        let s = sharp_matrix(pi, y.as_slice())?;
        let r = (&pair.x[c + 1] - &pair.x[c]) / h + s * &pair.eta[c];
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Cell-flow residual per unit length, `max_c |X[c+1] - phi_h(X[c])| / h`.
pub fn cellflow_residual(pair: &DiscretePair, pi: &BivectorField) -> Result<f64> {
    let h = pair.h();
    let conn = ConnectionField::flat(pi.dim());
    let mut worst = 0.0_f64;
    for c in 0..pair.n_cells() {
        let d = integrate_cell(pi, &conn, pair.x[c].as_slice(), pair.eta[c].as_slice(), h, false)
            .map_err(|e| cell_error(e, c))?;
        worst = worst.max((&pair.x[c + 1] - d.end).norm() / h);
    }
    Ok(worst)
}

/// Residual of the discrete constraint the pair was built with.
pub fn constraint_residual(pair: &DiscretePair, pi: &BivectorField) -> Result<f64> {
    check_dims(pair, pi.dim())?;
    match pair.scheme {
        Scheme::ImplicitMidpoint => midpoint_residual(pair, pi),
        Scheme::CellFlow => cellflow_residual(pair, pi),
    }
}

fn check_dims(pair: &DiscretePair, m: usize) -> Result<()> {
    if pair.m() != m {
        return Err(LabError::DimensionMismatch {
            expected: m,
            found: pair.m(),
        });
    }
    Ok(())
}

fn cell_error(e: LabError, c: usize) -> LabError {
    match e {
        LabError::NonConvergence { .. } => LabError::NonConvergence { cell: c },
        other => other,
    }
}

fn close_loop(x: &mut [DVector<f64>], closure_tol: f64) -> Result<()> {
    let n = x.len() - 1;
    let gap = (&x[n] - &x[0]).norm();
    if gap > closure_tol {
        return Err(LabError::ClosureFailure { gap });
    }
    x[n] = x[0].clone();
    Ok(())
}

/// Integrates the implicit-midpoint constraint node by node, each step solved
/// by Newton iteration to a per-unit-length residual below `tol`.
pub fn solve_compatible(
    pi: &BivectorField,
    x0: &[f64],
    eta: &[DVector<f64>],
    periodic: bool,
    tol: f64,
    closure_tol: f64,
) -> Result<DiscretePair> {
    let m = pi.dim();
    if x0.len() != m {
        return Err(LabError::DimensionMismatch {
            expected: m,
            found: x0.len(),
        });
    }
    let n = eta.len();
    if n < 2 {
        return Err(LabError::InvalidInput(format!("need at least 2 cells, got {n}")));
    }
    let h = 1.0 / n as f64;
    let mut x = Vec::with_capacity(n + 1);
    x.push(DVector::from_column_slice(x0));
    let id = DMatrix::<f64>::identity(m, m);
    for (c, e) in eta.iter().enumerate() {
        let xc = x[c].clone();
        let mut z = xc.clone();
        let mut converged = false;
        for _ in 0..60 {
            let y = (&xc + &z) * 0.5;
            let s = sharp_matrix(pi, y.as_slice())?;
            let g = (&z - &xc) / h + s * e;
            if g.norm() <= tol * 0.1 {
                converged = true;
                break;
            }
            let jac = (&id / h) + pi.flow_jacobian(y.as_slice(), e.as_slice()) * 0.5;
            let step = jac
                .lu()
                .solve(&g)
                .ok_or(LabError::NonConvergence { cell: c })?;
            z -= step;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(LabError::NonConvergence { cell: c });
            }
        }
        if !converged {
            let y = (&xc + &z) * 0.5;
            let g = (&z - &xc) / h + sharp_matrix(pi, y.as_slice())? * e;
            if g.norm() > tol {
                return Err(LabError::NonConvergence { cell: c });
            }
        }
        x.push(z);
    }
    if periodic {
        close_loop(&mut x, closure_tol)?;
    }
    DiscretePair::new(x, eta.to_vec(), periodic, Scheme::ImplicitMidpoint)
}

/// Builds a pair whose nodes follow the exact cell flows.
pub fn solve_cell_flow(
    pi: &BivectorField,
    x0: &[f64],
    eta: &[DVector<f64>],
    periodic: bool,
    closure_tol: f64,
) -> Result<DiscretePair> {
    let m = pi.dim();
    if x0.len() != m {
        return Err(LabError::DimensionMismatch {
            expected: m,
            found: x0.len(),
        });
    }
    let n = eta.len();
    if n < 2 {
        return Err(LabError::InvalidInput(format!("need at least 2 cells, got {n}")));
    }
    let h = 1.0 / n as f64;
    let conn = ConnectionField::flat(m);
    let mut x = Vec::with_capacity(n + 1);
    x.push(DVector::from_column_slice(x0));
    for (c, e) in eta.iter().enumerate() {
        let d = integrate_cell(pi, &conn, x[c].as_slice(), e.as_slice(), h, false)
            .map_err(|err| cell_error(err, c))?;
        x.push(d.end);
    }
    if periodic {
        close_loop(&mut x, closure_tol)?;
    }
    DiscretePair::new(x, eta.to_vec(), periodic, Scheme::CellFlow)
}

/// Per-cell linear map producing the twisted covector
/// `phi[c] = xi_left * xi[c] + xi_right * xi[c+1] + zeta * zeta[c]`.
#[derive(Debug, Clone)]
pub struct TwistMap {
    pub xi_left: DMatrix<f64>,
    pub xi_right: DMatrix<f64>,
    pub zeta: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub u: Vec<DMatrix<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    /// Condition number of each `U[n]`.
    pub cond: Vec<f64>,
    pub twist_maps: Vec<TwistMap>,
}

fn condition_number(u: &DMatrix<f64>) -> f64 {
    let s = crate::symplin::singular_values(u);
    let smin = s.last().copied().unwrap_or(0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        s[0] / smin
    }
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| LabError::InvalidInput("singular transport frame".into()))
}

/// Parallel transport along a compatible pair. Midpoint pairs use the
/// Cayley step on each cell; cell-flow pairs integrate the frame ODE exactly.
pub fn transport(pair: &DiscretePair, pi: &BivectorField, conn: &ConnectionField) -> Result<TransportResult> {
    check_dims(pair, pi.dim())?;
    let residual = constraint_residual(pair, pi)?;
    if residual > 1e-8 {
        return Err(LabError::ConstraintViolated { residual });
    }
    let cells = match pair.scheme {
        Scheme::CellFlow => Some(cell_data(pair, pi, conn, true)?),
        Scheme::ImplicitMidpoint => None,
    };
    transport_with(pair, pi, conn, cells.as_deref())
}

pub(crate) fn cell_data(
    pair: &DiscretePair,
    pi: &BivectorField,
    conn: &ConnectionField,
    with_transport: bool,
) -> Result<Vec<CellData>> {
    let h = pair.h();
    (0..pair.n_cells())
        .map(|c| {
            integrate_cell(pi, conn, pair.x[c].as_slice(), pair.eta[c].as_slice(), h, with_transport)
                .map_err(|e| cell_error(e, c))
        })
        .collect()
}

pub(crate) fn transport_with(
    pair: &DiscretePair,
    pi: &BivectorField,
    conn: &ConnectionField,
    cells: Option<&[CellData]>,
) -> Result<TransportResult> {
    let m = pi.dim();
    let n = pair.n_cells();
    let h = pair.h();
    let id = DMatrix::<f64>::identity(m, m);
    let mut u = vec![id.clone()];
    let mut a = Vec::with_capacity(n);
    let mut twist_maps = Vec::with_capacity(n);
    for c in 0..n {
        let y = pair.midpoint(c);
        let nabla = covariant_derivative_pi(pi, conn, y.as_slice())?;
        let ac = a_matrix(&nabla, pair.eta[c].as_slice());
        match cells {
            Some(cells) => {
                let t = cells[c]
                    .transport
                    .as_ref()
                    .ok_or_else(|| LabError::InvalidInput("cell data lacks transport".into()))?;
                let uc_inv_t = inverse(&u[c])?.transpose();
                twist_maps.push(TwistMap {
                    xi_left: &uc_inv_t * &t.w_xi,
                    xi_right: DMatrix::zeros(m, m),
                    zeta: &uc_inv_t * &t.w_zeta,
                });
                u.push(&u[c] * &t.u);
            }
            None => {
                let g = conn.eval(y.as_slice());
                let dx = &pair.x[c + 1] - &pair.x[c];
                let b = &ac * h + gamma_contract(&g, dx.as_slice());
                let half = &b * 0.5;
                let left = inverse(&(&id - &half))?;
                let frame = &u[c] * &left;
                let frame_inv_t = inverse(&frame)?.transpose();
                let gm = gamma_eta(&g, pair.eta[c].as_slice());
                let side = -(&frame_inv_t * &gm) * 0.5;
                twist_maps.push(TwistMap {
                    xi_left: side.clone(),
                    xi_right: side,
                    zeta: frame_inv_t,
                });
                u.push(&frame * (&id + &half));
            }
        }
        a.push(ac);
    }
    let mut p = Vec::with_capacity(n + 1);
    for (k, uk) in u.iter().enumerate() {
        let s = sharp_matrix(pi, pair.x[k].as_slice())?;
        p.push(if k == 0 { s } else { uk * s * uk.transpose() });
    }
    let cond = u.iter().map(condition_number).collect();
    Ok(TransportResult {
        u,
        a,
        p,
        cond,
        twist_maps,
    })
}

/// Frobenius drift `max |P[n] - P[0]| + max |P[n] + P[n]^t|`.
pub fn p_drift_of(tr: &TransportResult) -> f64 {
    let p0 = &tr.p[0];
    let d = tr.p.iter().map(|p| (p - p0).norm()).fold(0.0, f64::max);
    let s = tr.p.iter().map(|p| (p + p.transpose()).norm()).fold(0.0, f64::max);
    d + s
}

pub fn p_drift(pair: &DiscretePair, pi: &BivectorField, conn: &ConnectionField) -> Result<f64> {
    Ok(p_drift_of(&transport(pair, pi, conn)?))
}

/// Largest entry of the diagnostic tensor `T(X_mid, eta)` over the cells.
pub fn t_tensor_max(pair: &DiscretePair, pi: &BivectorField, conn: &ConnectionField) -> Result<f64> {
    let mut worst = 0.0_f64;
    for c in 0..pair.n_cells() {
        let t = t_tensor(pi, conn, pair.midpoint(c).as_slice(), pair.eta[c].as_slice())?;
        worst = worst.max(t.amax());
    }
    Ok(worst)
}

/// Tangent vector to the space of pairs: `xi` at nodes, raw `zeta = d eta`
/// on cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub xi: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct Twisted {
    pub lambda: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
    /// `max_c |(lambda[c+1] - lambda[c]) / h + P_avg phi[c]|`.
    pub residual: f64,
}

/// `lambda = U xi` at nodes and `phi = U^{-t} e` on cells.
pub fn twist(v: &TangentVector, tr: &TransportResult) -> Result<Twisted> {
    let n = tr.twist_maps.len();
    if v.xi.len() != n + 1 || v.zeta.len() != n {
        return Err(LabError::DimensionMismatch {
            expected: n,
            found: v.zeta.len(),
        });
    }
    let h = 1.0 / n as f64;
    let lambda: Vec<DVector<f64>> = tr.u.iter().zip(&v.xi).map(|(u, x)| u * x).collect();
    let phi: Vec<DVector<f64>> = (0..n)
        .map(|c| {
            let t = &tr.twist_maps[c];
            &t.xi_left * &v.xi[c] + &t.xi_right * &v.xi[c + 1] + &t.zeta * &v.zeta[c]
        })
        .collect();
    let mut residual = 0.0_f64;
    for c in 0..n {
        let pbar = (&tr.p[c] + &tr.p[c + 1]) * 0.5;
        let r = (&lambda[c + 1] - &lambda[c]) / h + pbar * &phi[c];
        residual = residual.max(r.norm());
    }
    Ok(Twisted {
        lambda,
        phi,
        residual,
    })
}

/// Boundary behaviour of a gauge parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeBoundary {
    /// No endpoint conditions; used for purely local symmetry checks.
    Untagged,
    /// `beta(0)` and `beta(1)` projected onto the conormals of `C0`, `C1`.
    Tagged,
    Periodic,
}

/// Node values of a covector field `beta` along the path.
#[derive(Debug, Clone)]
pub struct GaugeParameter {
    pub beta: Vec<DVector<f64>>,
    pub boundary: GaugeBoundary,
    /// Size of the correction applied when enforcing the boundary conditions.
    pub projection_residual: f64,
}

impl GaugeParameter {
    pub fn untagged(beta: Vec<DVector<f64>>) -> Self {
        Self {
            beta,
            boundary: GaugeBoundary::Untagged,
            projection_residual: 0.0,
        }
    }

    /// Enforces `beta(0) in N*C0` and `beta(1) in N*C1` by orthogonal
    /// projection onto the row space of the constraint Jacobians.
    pub fn tagged(
        mut beta: Vec<DVector<f64>>,
        pair: &DiscretePair,
        c0: &LevelSetSubmanifold,
        c1: &LevelSetSubmanifold,
        rank_tol: f64,
    ) -> Result<Self> {
        if beta.len() != pair.n_cells() + 1 {
            return Err(LabError::DimensionMismatch {
                expected: pair.n_cells() + 1,
                found: beta.len(),
            });
        }
        let n = pair.n_cells();
        let mut worst = 0.0_f64;
        for (idx, c) in [(0usize, c0), (n, c1)] {
            let conormal = c.conormal_space(pair.x[idx].as_slice(), rank_tol)?;
            let b = &beta[idx];
            let proj = if conormal.dim() == 0 {
                DVector::zeros(b.len())
            } else {
                conormal.basis() * (conormal.basis().transpose() * b)
            };
            worst = worst.max((b - &proj).norm());
            beta[idx] = proj;
        }
        Ok(Self {
            beta,
            boundary: GaugeBoundary::Tagged,
            projection_residual: worst,
        })
    }

    /// Periodic parameter: the last node is overwritten by the first.
    pub fn periodic(mut beta: Vec<DVector<f64>>) -> Self {
        let n = beta.len() - 1;
        let gap = (&beta[n] - &beta[0]).norm();
        beta[n] = beta[0].clone();
        Self {
            beta,
            boundary: GaugeBoundary::Periodic,
            projection_residual: gap,
        }
    }

    pub fn constant(b: &[f64], n_cells: usize) -> Self {
        Self::untagged(vec![DVector::from_column_slice(b); n_cells + 1])
    }
}

/// Infinitesimal gauge generator `(xi~, zeta~)` at a pair.
pub fn gauge_vector(
    pair: &DiscretePair,
    pi: &BivectorField,
    conn: &ConnectionField,
    beta: &GaugeParameter,
) -> Result<TangentVector> {
    check_dims(pair, pi.dim())?;
    let n = pair.n_cells();
    if beta.beta.len() != n + 1 {
        return Err(LabError::DimensionMismatch {
            expected: n + 1,
            found: beta.beta.len(),
        });
    }
    let h = pair.h();
    let xi: Vec<DVector<f64>> = (0..=n)
        .map(|k| Ok(sharp_matrix(pi, pair.x[k].as_slice())? * &beta.beta[k]))
        .collect::<Result<_>>()?;
    let zeta = match pair.scheme {
        Scheme::ImplicitMidpoint => (0..n)
            .map(|c| {
                let y = pair.midpoint(c);
                let ys = y.as_slice();
                let g = conn.eval(ys);
                let nabla = covariant_derivative_pi(pi, conn, ys)?;
                let eta = &pair.eta[c];
                let bbar = (&beta.beta[c] + &beta.beta[c + 1]) * 0.5;
                let dx = (&pair.x[c + 1] - &pair.x[c]) / h;
                let m = pair.m();
                let mut e = -(&beta.beta[c + 1] - &beta.beta[c]) / h;
                for i in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        for r in 0..m {
                            acc += g.get(k, r, i) * dx[r] * bbar[k];
                        }
                        for j in 0..m {
                            acc += nabla.get(j, k, i) * eta[j] * bbar[k];
                        }
                    }
                    e[i] += acc;
                }
                let xi_mid = (&xi[c] + &xi[c + 1]) * 0.5;
                Ok(e + gamma_eta(&g, eta.as_slice()) * xi_mid)
            })
            .collect::<Result<Vec<_>>>()?,
        Scheme::CellFlow => {
            let cells = cell_data(pair, pi, &ConnectionField::flat(pi.dim()), false)?;
            cellflow_gauge_zeta(&cells, &beta.beta, h)?
        }
    };
    Ok(TangentVector { xi, zeta })
}

/// `zeta~[c] = -F_x^{-t} (Jx^t beta[c+1] - beta[c]) / h`: the exact
/// characteristic direction of the cell-flow model.
pub(crate) fn cellflow_gauge_zeta(cells: &[CellData], beta: &[DVector<f64>], h: f64) -> Result<Vec<DVector<f64>>> {
    cells
        .iter()
        .enumerate()
        .map(|(c, d)| {
            let rhs = d.jx.transpose() * &beta[c + 1] - &beta[c];
            let ft = d.fx.transpose();
            let sol = ft
                .lu()
                .solve(&rhs)
                .ok_or_else(|| LabError::InvalidInput(format!("singular cell average map on cell {c}")))?;
            Ok(-sol / h)
        })
        .collect()
}

/// One explicit Euler step of size `eps` along the gauge flow of `beta`.
pub fn gauge_step(
    pair: &DiscretePair,
    pi: &BivectorField,
    conn: &ConnectionField,
    beta: &GaugeParameter,
    eps: f64,
) -> Result<DiscretePair> {
    let v = gauge_vector(pair, pi, conn, beta)?;
    let x = pair.x.iter().zip(&v.xi).map(|(x, d)| x + d * eps).collect();
    let eta = pair.eta.iter().zip(&v.zeta).map(|(e, d)| e + d * eps).collect();
    DiscretePair::new(x, eta, pair.periodic, pair.scheme)
}

/// Covector field with polynomial components.
#[derive(Debug, Clone)]
pub struct OneFormField {
    pub components: Vec<PolyScalarField>,
}

impl OneFormField {
    pub fn new(components: Vec<PolyScalarField>) -> Result<Self> {
        let m = components.len();
        for c in &components {
            if c.dim() != m {
                return Err(LabError::DimensionMismatch {
                    expected: m,
                    found: c.dim(),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn constant(b: &[f64]) -> Self {
        let m = b.len();
        Self {
            components: b.iter().map(|v| PolyScalarField::constant(m, *v)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.eval(x)))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }

    /// Largest value of `|B(x)|` restricted to `T_x C`.
    pub fn pullback_residual(&self, c: &LevelSetSubmanifold, x: &[f64], rank_tol: f64) -> Result<f64> {
        let t: LinSubspace = c.tangent_space(x, rank_tol)?;
        if t.dim() == 0 {
            return Ok(0.0);
        }
        Ok((t.basis().transpose() * self.eval(x)).amax())
    }
}

/// One-form field per grid node.
#[derive(Debug, Clone)]
pub struct TimeDependentOneForm {
    pub nodes: Vec<OneFormField>,
}

impl TimeDependentOneForm {
    pub fn constant(field: OneFormField, n_cells: usize) -> Self {
        Self {
            nodes: vec![field; n_cells + 1],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|f| f.scale(s)).collect(),
        }
    }
}

/// `mu_B = sum_c <B_avg(X_mid), (X[c+1] - X[c]) + h S(X_mid) eta[c]>`.
pub fn momentum(pair: &DiscretePair, pi: &BivectorField, b: &TimeDependentOneForm) -> Result<f64> {
    let n = pair.n_cells();
    if b.nodes.len() != n + 1 {
        return Err(LabError::DimensionMismatch {
            expected: n + 1,
            found: b.nodes.len(),
        });
    }
    let h = pair.h();
    let mut total = 0.0;
    for c in 0..n {
        let y = pair.midpoint(c);
        let ys = y.as_slice();
        let bb = (b.nodes[c].eval(ys) + b.nodes[c + 1].eval(ys)) * 0.5;
        let s = sharp_matrix(pi, ys)?;
        let integrand = (&pair.x[c + 1] - &pair.x[c]) + s * &pair.eta[c] * h;
        total += bb.dot(&integrand);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::PolyScalarField as P;
    use crate::tensor::Tensor3;

    fn so3() -> BivectorField {
        let mut c = Tensor3::zeros(3);
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c.set(i, j, k, 1.0);
            c.set(j, i, k, -1.0);
        }
        BivectorField::lie_poisson(&c).unwrap()
    }

    fn symplectic_r2() -> BivectorField {
        BivectorField::from_upper(2, vec![(0, 1, P::constant(2, 1.0))]).unwrap()
    }

    fn consts(v: &[f64], n: usize) -> Vec<DVector<f64>> {
        vec![DVector::from_column_slice(v); n]
    }

    fn sampled(n: usize, f: impl Fn(f64) -> Vec<f64>) -> Vec<DVector<f64>> {
        (0..=n).map(|k| DVector::from_vec(f(k as f64 / n as f64))).collect()
    }

    #[test]
    fn residual_zero_field() {
        let x = consts(&[0.4, -1.0], 9);
        let pair = DiscretePair::new(x, consts(&[3.0, 1.0], 8), false, Scheme::ImplicitMidpoint).unwrap();
        assert_eq!(constraint_residual(&pair, &BivectorField::zero(2)).unwrap(), 0.0);
    }

    #[test]
    fn residual_linear_symplectic_path() {
        let (a, b) = (0.7, -0.3);
        let x = sampled(8, |u| vec![0.1 + u * b, 0.2 - u * a]);
        let pair = DiscretePair::new(x, consts(&[a, b], 8), false, Scheme::ImplicitMidpoint).unwrap();
        assert!(constraint_residual(&pair, &symplectic_r2()).unwrap() < 1e-14);
    }

    #[test]
    fn residual_sampled_rotation_is_second_order() {
        let r = |n: usize| {
            let x = sampled(n, |u| vec![u.cos(), u.sin(), 0.0]);
            let pair = DiscretePair::new(x, consts(&[0.0, 0.0, 1.0], n), false, Scheme::ImplicitMidpoint).unwrap();
            constraint_residual(&pair, &so3()).unwrap()
        };
        let ratio = r(16) / r(32);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn solve_examples() {
        let z = solve_compatible(&BivectorField::zero(2), &[0.3, 0.1], &consts(&[1.0, 2.0], 4), false, 1e-12, 1e-9)
            .unwrap();
        assert!(z.x.iter().all(|x| x.as_slice() == [0.3, 0.1]));

        let (a, b) = (0.7, -0.3);
        let p = solve_compatible(&symplectic_r2(), &[0.0, 0.0], &consts(&[a, b], 4), false, 1e-12, 1e-9).unwrap();
        assert!((p.end()[0] - b).abs() < 1e-14 && (p.end()[1] + a).abs() < 1e-14);

        let p = solve_compatible(&so3(), &[1.0, 0.0, 0.0], &consts(&[0.0, 0.0, 1.0], 64), false, 1e-12, 1e-9).unwrap();
        let target = DVector::from_vec(vec![1f64.cos(), 1f64.sin(), 0.0]);
        assert!((p.end() - target).norm() <= 1e-4);
        assert!(p.x.iter().all(|x| (x.norm() - 1.0).abs() <= 1e-10));
        assert!(constraint_residual(&p, &so3()).unwrap() <= 1e-12);
    }

    #[test]
    fn solve_rejects_open_loop() {
        let e = consts(&[0.0, 0.0, 1.0], 8);
        assert!(matches!(
            solve_compatible(&so3(), &[1.0, 0.0, 0.0], &e, true, 1e-12, 1e-9),
            Err(LabError::ClosureFailure { .. })
        ));
    }

    #[test]
    fn cell_flow_closes_full_turn() {
        let e = consts(&[0.0, 0.0, 2.0 * std::f64::consts::PI], 8);
        let p = solve_cell_flow(&so3(), &[1.0, 0.0, 0.0], &e, true, 1e-9).unwrap();
        assert!(cellflow_residual(&p, &so3()).unwrap() < 1e-10);
    }

    #[test]
    fn transport_trivial_cases() {
        let z = solve_compatible(&BivectorField::zero(2), &[0.3, 0.1], &consts(&[1.0, 2.0], 4), false, 1e-12, 1e-9)
            .unwrap();
        let t = transport(&z, &BivectorField::zero(2), &ConnectionField::flat(2)).unwrap();
        assert!(t.u.iter().all(|u| *u == DMatrix::identity(2, 2)));
        assert!(t.p.iter().all(|p| p.amax() == 0.0));

        let p = solve_compatible(&symplectic_r2(), &[0.0, 0.0], &consts(&[0.2, 0.4], 4), false, 1e-12, 1e-9).unwrap();
        let t = transport(&p, &symplectic_r2(), &ConnectionField::flat(2)).unwrap();
        assert!(t.a.iter().all(|a| a.amax() == 0.0));
        assert_eq!(p_drift_of(&t), 0.0);
    }

    #[test]
    fn transport_rejects_incompatible_pair() {
        let x = sampled(4, |u| vec![u, 0.0]);
        let pair = DiscretePair::new(x, consts(&[0.0, 0.0], 4), false, Scheme::ImplicitMidpoint).unwrap();
        assert!(matches!(
            transport(&pair, &symplectic_r2(), &ConnectionField::flat(2)),
            Err(LabError::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn so3_flat_drift_is_tiny() {
        let p = solve_compatible(&so3(), &[1.0, 0.0, 0.0], &consts(&[0.0, 0.0, 1.0], 16), false, 1e-12, 1e-9)
            .unwrap();
        let d = p_drift(&p, &so3(), &ConnectionField::flat(3)).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn gauge_step_examples() {
        let pi0 = BivectorField::zero(2);
        let flat = ConnectionField::flat(2);
        let p = solve_compatible(&pi0, &[0.3, 0.1], &consts(&[1.0, 2.0], 4), false, 1e-12, 1e-9).unwrap();
        let zero = GaugeParameter::constant(&[0.0, 0.0], 4);
        assert_eq!(gauge_step(&p, &pi0, &flat, &zero, 0.1).unwrap(), p);

        let beta = GaugeParameter::untagged(sampled(4, |u| vec![u * u, -u]));
        let q = gauge_step(&p, &pi0, &flat, &beta, 0.1).unwrap();
        assert_eq!(q.x, p.x);
        // eta' = eta - eps d beta / h on each cell
        let expect = 1.0 - 0.1 * ((0.25f64).powi(2) - 0.0) / 0.25;
        assert!((q.eta[0][0] - expect).abs() < 1e-14);
        assert_eq!(constraint_residual(&q, &pi0).unwrap(), 0.0);
    }

    #[test]
    fn periodic_gauge_step_keeps_closure() {
        let e = consts(&[0.0, 0.0, 2.0 * std::f64::consts::PI], 8);
        let p = solve_cell_flow(&so3(), &[1.0, 0.0, 0.0], &e, true, 1e-9).unwrap();
        let beta = GaugeParameter::periodic(sampled(8, |u| vec![(6.0 * u).sin(), 1.0, u * (1.0 - u)]));
        let q = gauge_step(&p, &so3(), &ConnectionField::flat(3), &beta, 1e-3).unwrap();
        assert_eq!(q.x[0], q.x[8]);
    }

    #[test]
    fn momentum_examples() {
        let pi0 = BivectorField::zero(2);
        let x = sampled(8, |u| vec![u, 0.0]);
        let pair = DiscretePair::new(x, consts(&[0.0, 0.0], 8), false, Scheme::ImplicitMidpoint).unwrap();
        let b = TimeDependentOneForm::constant(OneFormField::constant(&[1.0, 0.0]), 8);
        assert!((momentum(&pair, &pi0, &b).unwrap() - 1.0).abs() < 1e-15);
        let b2 = b.scale(2.0);
        assert!((momentum(&pair, &pi0, &b2).unwrap() - 2.0).abs() < 1e-15);

        let p = solve_compatible(&so3(), &[1.0, 0.0, 0.0], &consts(&[0.2, 0.3, 1.0], 16), false, 1e-12, 1e-9)
            .unwrap();
        let b = TimeDependentOneForm::constant(
            OneFormField::new(vec![P::coordinate(3, 1), P::constant(3, 1.0), P::zero(3)]).unwrap(),
            16,
        );
        assert!(momentum(&p, &so3(), &b).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn twist_constant_pi_is_identity() {
        let p = solve_compatible(&symplectic_r2(), &[0.0, 0.0], &consts(&[0.2, 0.4], 4), false, 1e-12, 1e-9).unwrap();
        let t = transport(&p, &symplectic_r2(), &ConnectionField::flat(2)).unwrap();
        let v = TangentVector {
            xi: sampled(4, |u| vec![u, 1.0]),
            zeta: consts(&[0.5, -0.5], 4),
        };
        let tw = twist(&v, &t).unwrap();
        assert_eq!(tw.lambda, v.xi);
        assert_eq!(tw.phi, v.zeta);
    }
}
