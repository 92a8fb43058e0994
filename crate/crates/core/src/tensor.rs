//! Polynomial bivector fields, torsion-free connections and level-set
//! submanifolds on R^m, with the pointwise Poisson and coisotropy calculus.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::poly::PolyScalarField;
use crate::symplin::{column_space, nullspace, LinSubspace};

/// Dense m x m x m array indexed `[i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let d = self.dim;
        self.data[(i * d + j) * d + k] = v;
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let d = self.dim;
        self.data[(i * d + j) * d + k] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

fn check_point(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(LabError::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    Ok(())
}

/// Bivector field with polynomial components; entry `(i, j)` is `pi^{ij}`.
#[derive(Debug, Clone)]
pub struct BivectorField {
    dim: usize,
    comps: Vec<PolyScalarField>,
    // d[(i*m + j)*m + s] = d_s pi^{ij}
    dcomps: Vec<PolyScalarField>,
}

impl BivectorField {
    /// Builds a field from its full component matrix, rejecting anything that
    /// is not skew as polynomials.
    pub fn from_components(dim: usize, comps: Vec<PolyScalarField>) -> Result<Self> {
        if comps.len() != dim * dim {
            return Err(LabError::DimensionMismatch {
                expected: dim * dim,
                found: comps.len(),
            });
        }
        for c in &comps {
            if c.dim() != dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let sum = &comps[i * dim + j] + &comps[j * dim + i];
                if !sum.is_zero() {
                    return Err(LabError::NotSkew { i, j });
                }
            }
        }
        let mut dcomps = Vec::with_capacity(dim * dim * dim);
        for c in &comps {
            for s in 0..dim {
                dcomps.push(c.partial(s));
            }
        }
        Ok(Self { dim, comps, dcomps })
    }

    /// Builds a field from entries above the diagonal; the lower triangle is
    /// filled by antisymmetry. Repeated entries add up.
    pub fn from_upper(dim: usize, entries: Vec<(usize, usize, PolyScalarField)>) -> Result<Self> {
        let mut comps = vec![PolyScalarField::zero(dim); dim * dim];
        for (i, j, p) in entries {
            if i >= dim || j >= dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim,
                    found: i.max(j) + 1,
                });
            }
            if i == j {
                if p.is_zero() {
                    continue;
                }
                return Err(LabError::NotSkew { i, j });
            }
            comps[i * dim + j] = &comps[i * dim + j] + &p;
            comps[j * dim + i] = &comps[j * dim + i] - &p;
        }
        Self::from_components(dim, comps)
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_components(dim, vec![PolyScalarField::zero(dim); dim * dim])
            .expect("zero field is skew")
    }

    /// Constant field from a skew matrix.
    pub fn constant(matrix: &DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        let mut comps = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = matrix[(i, j)];
                comps.push(if v == 0.0 {
                    PolyScalarField::zero(dim)
                } else {
                    PolyScalarField::constant(dim, v)
                });
            }
        }
        Self::from_components(dim, comps)
    }

    /// Linear Lie-Poisson structure `pi^{ij} = c^{ij}_k x_k` of a Lie algebra
    /// given by its structure constants `c[i][j][k]`.
    pub fn lie_poisson(structure: &Tensor3) -> Result<Self> {
        let dim = structure.dim();
        let mut comps = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut p = PolyScalarField::zero(dim);
                for k in 0..dim {
                    let c = structure.get(i, j, k);
                    if c != 0.0 {
                        p = &p + &PolyScalarField::coordinate(dim, k).scale(c);
                    }
                }
                comps.push(p);
            }
        }
        Self::from_components(dim, comps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, i: usize, j: usize) -> &PolyScalarField {
        &self.comps[i * self.dim + j]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    /// True when every component has degree zero.
    pub fn is_constant(&self) -> bool {
        self.dcomps.iter().all(|c| c.is_zero())
    }

    /// Matrix `Pi` with `Pi[(i, j)] = pi^{ij}(x)`.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim;
        DMatrix::from_fn(m, m, |i, j| self.comps[i * m + j].eval(x))
    }

    /// `d[s][(i, j)] = d_s pi^{ij}(x)`.
    pub fn eval_derivatives(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let m = self.dim;
        (0..m)
            .map(|s| DMatrix::from_fn(m, m, |i, j| self.dcomps[(i * m + j) * m + s].eval(x)))
            .collect()
    }

    /// `M^k_l = eta_j d_l pi^{jk}(x)`: derivative of `x -> S(x) eta`.
    pub fn flow_jacobian(&self, x: &[f64], eta: &[f64]) -> DMatrix<f64> {
        let m = self.dim;
        let mut out = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in 0..m {
                let mut acc = 0.0;
                for (j, e) in eta.iter().enumerate() {
                    if *e != 0.0 {
                        acc += e * self.dcomps[(j * m + k) * m + l].eval(x);
                    }
                }
                out[(k, l)] = acc;
            }
        }
        out
    }
}

/// Matrix `S` of the sharp map at `x`, with `(S sigma)^k = pi^{jk}(x) sigma_j`.
pub fn sharp_matrix(pi: &BivectorField, x: &[f64]) -> Result<DMatrix<f64>> {
    check_point(pi.dim(), x)?;
    Ok(pi.eval(x).transpose())
}

/// `J^{ijk} = pi^{is} d_s pi^{jk} + pi^{js} d_s pi^{ki} + pi^{ks} d_s pi^{ij}`.
pub fn jacobiator(pi: &BivectorField, x: &[f64]) -> Result<Tensor3> {
    check_point(pi.dim(), x)?;
    let m = pi.dim();
    let p = pi.eval(x);
    let d = pi.eval_derivatives(x);
    let mut out = Tensor3::zeros(m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let mut acc = 0.0;
                for (s, ds) in d.iter().enumerate() {
                    acc += p[(i, s)] * ds[(j, k)] + p[(j, s)] * ds[(k, i)] + p[(k, s)] * ds[(i, j)];
                }
                out.set(i, j, k, acc);
            }
        }
    }
    Ok(out)
}

/// Torsion-free connection with polynomial Christoffel symbols `Gamma^i_{jk}`.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    dim: usize,
    christoffel: Vec<PolyScalarField>,
    flat: bool,
}

impl ConnectionField {
    pub fn flat(dim: usize) -> Self {
        Self {
            dim,
            christoffel: vec![PolyScalarField::zero(dim); dim * dim * dim],
            flat: true,
        }
    }

    /// `christoffel[(i*m + j)*m + k] = Gamma^i_{jk}`.
    pub fn new(dim: usize, christoffel: Vec<PolyScalarField>) -> Result<Self> {
        if christoffel.len() != dim * dim * dim {
            return Err(LabError::DimensionMismatch {
                expected: dim * dim * dim,
                found: christoffel.len(),
            });
        }
        for c in &christoffel {
            if c.dim() != dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                for k in j + 1..dim {
                    let a = &christoffel[(i * dim + j) * dim + k];
                    let b = &christoffel[(i * dim + k) * dim + j];
                    if !(a - b).is_zero() {
                        return Err(LabError::Torsion { i, j, k });
                    }
                }
            }
        }
        let flat = christoffel.iter().all(|c| c.is_zero());
        Ok(Self {
            dim,
            christoffel,
            flat,
        })
    }

    /// Constant connection `Gamma^i_{jk} = delta^i_j a_k + delta^i_k a_j`,
    /// torsion-free and not flat for `a != 0`.
    pub fn projective(a: &[f64]) -> Self {
        let dim = a.len();
        let mut t = Tensor3::zeros(dim);
        for i in 0..dim {
            for k in 0..dim {
                t.add(i, i, k, a[k]);
                t.add(i, k, i, a[k]);
            }
        }
        Self::constant(&t).expect("symmetric by construction")
    }

    pub fn constant(t: &Tensor3) -> Result<Self> {
        let dim = t.dim();
        let mut c = Vec::with_capacity(dim * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let v = t.get(i, j, k);
                    c.push(if v == 0.0 {
                        PolyScalarField::zero(dim)
                    } else {
                        PolyScalarField::constant(dim, v)
                    });
                }
            }
        }
        Self::new(dim, c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn symbol(&self, i: usize, j: usize, k: usize) -> &PolyScalarField {
        &self.christoffel[(i * self.dim + j) * self.dim + k]
    }

    pub fn eval(&self, x: &[f64]) -> Tensor3 {
        let m = self.dim;
        let mut t = Tensor3::zeros(m);
        if self.flat {
            return t;
        }
        for (idx, c) in self.christoffel.iter().enumerate() {
            if !c.is_zero() {
                t.data[idx] = c.eval(x);
            }
        }
        t
    }
}

/// `(nabla pi)^{ij}_k = d_k pi^{ij} + Gamma^i_{kr} pi^{rj} + Gamma^j_{kr} pi^{ir}`,
/// stored at `[i][j][k]`.
pub fn covariant_derivative_pi(
    pi: &BivectorField,
    conn: &ConnectionField,
    x: &[f64],
) -> Result<Tensor3> {
    check_point(pi.dim(), x)?;
    if conn.dim() != pi.dim() {
        return Err(LabError::DimensionMismatch {
            expected: pi.dim(),
            found: conn.dim(),
        });
    }
    let m = pi.dim();
    let p = pi.eval(x);
    let d = pi.eval_derivatives(x);
    let g = conn.eval(x);
    let mut out = Tensor3::zeros(m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let mut acc = d[k][(i, j)];
                if !conn.is_flat() {
                    for r in 0..m {
                        acc += g.get(i, k, r) * p[(r, j)] + g.get(j, k, r) * p[(i, r)];
                    }
                }
                out.set(i, j, k, acc);
            }
        }
    }
    Ok(out)
}

/// Cyclic sum `pi^{sr} (nabla pi)_r^{lk} + pi^{kr} (nabla pi)_r^{sl} + pi^{lr} (nabla pi)_r^{ks}`
/// as a full tensor indexed `[s][l][k]`.
pub fn covariant_jacobi_tensor(
    pi: &BivectorField,
    conn: &ConnectionField,
    x: &[f64],
) -> Result<Tensor3> {
    let nabla = covariant_derivative_pi(pi, conn, x)?;
    let p = pi.eval(x);
    let m = pi.dim();
    let mut out = Tensor3::zeros(m);
    for s in 0..m {
        for l in 0..m {
            for k in 0..m {
                let mut acc = 0.0;
                for r in 0..m {
                    acc += p[(s, r)] * nabla.get(l, k, r)
                        + p[(k, r)] * nabla.get(s, l, r)
                        + p[(l, r)] * nabla.get(k, s, r);
                }
                out.set(s, l, k, acc);
            }
        }
    }
    Ok(out)
}

/// Max-norm of [`covariant_jacobi_tensor`].
pub fn covariant_jacobi_residual(
    pi: &BivectorField,
    conn: &ConnectionField,
    x: &[f64],
) -> Result<f64> {
    Ok(covariant_jacobi_tensor(pi, conn, x)?.max_abs())
}

/// `A^i_k = eta_j (nabla pi)^{ji}_k`.
pub fn a_matrix(nabla: &Tensor3, eta: &[f64]) -> DMatrix<f64> {
    let m = nabla.dim();
    DMatrix::from_fn(m, m, |i, k| {
        eta.iter()
            .enumerate()
            .map(|(j, e)| e * nabla.get(j, i, k))
            .sum()
    })
}

/// Matrix of `v -> Gamma(x) v` acting on frames: `(Gamma v)^l_j = Gamma^l_{sj} v^s`.
pub fn gamma_contract(g: &Tensor3, v: &[f64]) -> DMatrix<f64> {
    let m = g.dim();
    DMatrix::from_fn(m, m, |l, j| {
        v.iter()
            .enumerate()
            .map(|(s, vs)| g.get(l, s, j) * vs)
            .sum()
    })
}

/// `G_{is} = Gamma^r_{si} eta_r`, so that `e_i = zeta_i - G_{is} xi^s`.
pub fn gamma_eta(g: &Tensor3, eta: &[f64]) -> DMatrix<f64> {
    let m = g.dim();
    DMatrix::from_fn(m, m, |i, s| {
        eta.iter()
            .enumerate()
            .map(|(r, e)| g.get(r, s, i) * e)
            .sum()
    })
}

/// Diagnostic tensor
/// `T^{ls} = eta_k (pi^{rs} (nabla pi)_r^{kl} - pi^{kr} (nabla pi)_r^{ls} + pi^{lr} (nabla pi)_r^{ks})`,
/// which vanishes identically in `eta` exactly when `pi` is Poisson.
pub fn t_tensor(
    pi: &BivectorField,
    conn: &ConnectionField,
    x: &[f64],
    eta: &[f64],
) -> Result<DMatrix<f64>> {
    let nabla = covariant_derivative_pi(pi, conn, x)?;
    let p = pi.eval(x);
    let m = pi.dim();
    let mut out = DMatrix::zeros(m, m);
    for l in 0..m {
        for s in 0..m {
            let mut acc = 0.0;
            for (k, e) in eta.iter().enumerate() {
                if *e == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for r in 0..m {
                    inner += p[(r, s)] * nabla.get(k, l, r) - p[(k, r)] * nabla.get(l, s, r)
                        + p[(l, r)] * nabla.get(k, s, r);
                }
                acc += e * inner;
            }
            out[(l, s)] = acc;
        }
    }
    Ok(out)
}

/// Submanifold `{F_1 = ... = F_k = 0}` of R^m. An empty constraint list is
/// the whole space.
#[derive(Debug, Clone)]
pub struct LevelSetSubmanifold {
    ambient_dim: usize,
    constraints: Vec<PolyScalarField>,
    grads: Vec<Vec<PolyScalarField>>,
}

/// Outcome of a pointwise coisotropy test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoisotropyAt {
    pub coisotropic: bool,
    pub residual: f64,
}

impl LevelSetSubmanifold {
    pub fn new(ambient_dim: usize, constraints: Vec<PolyScalarField>) -> Result<Self> {
        for c in &constraints {
            if c.dim() != ambient_dim {
                return Err(LabError::DimensionMismatch {
                    expected: ambient_dim,
                    found: c.dim(),
                });
            }
        }
        if constraints.len() > ambient_dim {
            return Err(LabError::RankDeficientJacobian {
                rank: ambient_dim,
                expected: constraints.len(),
            });
        }
        let grads = constraints.iter().map(|c| c.gradient()).collect();
        Ok(Self {
            ambient_dim,
            constraints,
            grads,
        })
    }

    pub fn whole(ambient_dim: usize) -> Self {
        Self::new(ambient_dim, Vec::new()).expect("no constraints")
    }

    /// The affine coordinate subspace `{x_i = c_i for i in fixed}`.
    pub fn coordinate_planes(ambient_dim: usize, fixed: &[(usize, f64)]) -> Result<Self> {
        let cs = fixed
            .iter()
            .map(|&(i, c)| {
                &PolyScalarField::coordinate(ambient_dim, i) - &PolyScalarField::constant(ambient_dim, c)
            })
            .collect();
        Self::new(ambient_dim, cs)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn codim(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_whole(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[PolyScalarField] {
        &self.constraints
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.eval(x)).collect()
    }

    pub fn membership_residual(&self, x: &[f64]) -> f64 {
        self.values(x).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// k x m Jacobian of the constraints.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_point(self.ambient_dim, x)?;
        let k = self.constraints.len();
        Ok(DMatrix::from_fn(k, self.ambient_dim, |a, i| self.grads[a][i].eval(x)))
    }

    /// Jacobian with full-rank check at relative tolerance `rank_tol`.
    pub fn checked_jacobian(&self, x: &[f64], rank_tol: f64) -> Result<DMatrix<f64>> {
        let j = self.jacobian(x)?;
        let k = j.nrows();
        if k == 0 {
            return Ok(j);
        }
        let rank = column_space(&j.transpose(), rank_tol).ncols();
        if rank < k {
            return Err(LabError::RankDeficientJacobian { rank, expected: k });
        }
        Ok(j)
    }

    pub fn tangent_space(&self, x: &[f64], rank_tol: f64) -> Result<LinSubspace> {
        let j = self.checked_jacobian(x, rank_tol)?;
        if j.nrows() == 0 {
            return Ok(LinSubspace::full(self.ambient_dim));
        }
        Ok(LinSubspace::from_orthonormal(nullspace(&j, rank_tol)))
    }

    /// Conormal space `N*_x C` as a subspace of covectors (row span of dF).
    pub fn conormal_space(&self, x: &[f64], rank_tol: f64) -> Result<LinSubspace> {
        let j = self.checked_jacobian(x, rank_tol)?;
        Ok(LinSubspace::span(&j.transpose(), rank_tol))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.membership_residual(x) <= tol
    }
}

/// Pointwise test of `pi^sharp(N*_x C) in T_x C`.
///
/// Each Jacobian row is unit-normalized, so the residual does not change when a
/// constraint is rescaled.
pub fn is_coisotropic_at(
    pi: &BivectorField,
    c: &LevelSetSubmanifold,
    x: &[f64],
    tol: f64,
    membership_tol: f64,
    rank_tol: f64,
) -> Result<CoisotropyAt> {
    check_point(pi.dim(), x)?;
    if c.ambient_dim() != pi.dim() {
        return Err(LabError::DimensionMismatch {
            expected: pi.dim(),
            found: c.ambient_dim(),
        });
    }
    let r = c.membership_residual(x);
    if r > membership_tol {
        return Err(LabError::PointNotOnSubmanifold { residual: r });
    }
    let mut j = c.checked_jacobian(x, rank_tol)?;
    for mut row in j.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let s = sharp_matrix(pi, x)?;
    // entry (b, a) = <dF_b, S dF_a>
    let m = &j * &s * j.transpose();
    let residual = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(CoisotropyAt {
        coisotropic: residual <= tol,
        residual,
    })
}

/// Column vector helper.
pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
