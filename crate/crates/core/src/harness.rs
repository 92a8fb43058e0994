//! Finite model of the cotangent path space near a compatible pair: the
//! ambient pairing, the tangent space of the compatible pairs, its
//! symplectic orthogonal and the gauge (characteristic) directions.
//!
//! Ambient coordinates are `xi` on node blocks followed by raw `zeta = d eta`
//! on cell blocks. Each cell carries the exact flow of its constant `eta`,
//! so the pairing `sum_c h <zeta_c, dF_c> - <zeta'_c, dF_c>` is the restriction
//! of the continuum form, `F_c` being the cell average of the trajectory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cellflow::CellData;
use crate::config::Tolerances;
use crate::error::{LabError, Result};
use crate::path::{
    cell_data, cellflow_gauge_zeta, constraint_residual, solve_cell_flow, transport_with, twist,
    DiscretePair, Scheme, TangentVector, TransportResult,
};
use crate::symplin::{
    is_coisotropic, nullspace, orthogonal, singular_values, FormSpace, LinSubspace,
};
use crate::tensor::{sharp_matrix, BivectorField, ConnectionField, LevelSetSubmanifold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    FreeFree,
    Constrained,
    Periodic,
}

#[derive(Debug, Clone)]
pub struct AmbientDiscretization {
    pub pair: DiscretePair,
    pub boundary: BoundaryMode,
    pub omega: FormSpace,
    pub transport: TransportResult,
    pub c0: LevelSetSubmanifold,
    pub c1: LevelSetSubmanifold,
    pi: BivectorField,
    cells: Vec<CellData>,
    rank_tol: f64,
}

impl AmbientDiscretization {
    /// Builds the model at a base pair. A midpoint pair is replaced by the
    /// cell-flow pair with the same `X(0)` and `eta`.
    pub fn build(
        pi: &BivectorField,
        conn: &ConnectionField,
        pair: &DiscretePair,
        c0: Option<&LevelSetSubmanifold>,
        c1: Option<&LevelSetSubmanifold>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let m = pi.dim();
        let pair = match pair.scheme {
            Scheme::CellFlow => pair.clone(),
            Scheme::ImplicitMidpoint => {
                solve_cell_flow(pi, pair.start().as_slice(), &pair.eta, pair.periodic, tol.closure)?
            }
        };
        let residual = constraint_residual(&pair, pi)?;
        if residual > 1e-9 {
            return Err(LabError::ConstraintViolated { residual });
        }
        let whole = LevelSetSubmanifold::whole(m);
        let c0 = c0.cloned().unwrap_or_else(|| whole.clone());
        let c1 = c1.cloned().unwrap_or(whole);
        let boundary = if pair.periodic {
            BoundaryMode::Periodic
        } else if c0.is_whole() && c1.is_whole() {
            BoundaryMode::FreeFree
        } else {
            BoundaryMode::Constrained
        };
        if boundary == BoundaryMode::Constrained {
            for (c, x) in [(&c0, pair.start()), (&c1, pair.end())] {
                let r = c.membership_residual(x.as_slice());
                if r > tol.membership {
                    return Err(LabError::PointNotOnSubmanifold { residual: r });
                }
                c.checked_jacobian(x.as_slice(), tol.rank)?;
            }
        }
        let cells = cell_data(&pair, pi, conn, true)?;
        let transport = transport_with(&pair, pi, conn, Some(&cells))?;
        let mut amb = Self {
            pair,
            boundary,
            omega: FormSpace::new(DMatrix::zeros(0, 0), tol.rank)?,
            transport,
            c0,
            c1,
            pi: pi.clone(),
            cells,
            rank_tol: tol.rank,
        };
        amb.omega = FormSpace::new(amb.form_matrix(), tol.rank)?;
        Ok(amb)
    }

    pub fn m(&self) -> usize {
        self.pair.m()
    }

    pub fn n_cells(&self) -> usize {
        self.pair.n_cells()
    }

    pub fn node_blocks(&self) -> usize {
        if self.pair.periodic {
            self.n_cells()
        } else {
            self.n_cells() + 1
        }
    }

    pub fn dim_ambient(&self) -> usize {
        self.m() * (self.node_blocks() + self.n_cells())
    }

    pub fn kernel_dim(&self) -> usize {
        self.omega.kernel_dim()
    }

    pub fn xi_index(&self, n: usize, i: usize) -> usize {
        let n = if self.pair.periodic && n == self.n_cells() { 0 } else { n };
        n * self.m() + i
    }

    pub fn zeta_index(&self, c: usize, i: usize) -> usize {
        (self.node_blocks() + c) * self.m() + i
    }

    fn form_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let h = self.pair.h();
        let dim = self.dim_ambient();
        let mut w = DMatrix::zeros(dim, dim);
        for (c, d) in self.cells.iter().enumerate() {
            let zr = self.zeta_index(c, 0);
            let xr = self.xi_index(c, 0);
            for a in 0..m {
                for b in 0..m {
                    let fx = h * d.fx[(a, b)];
                    w[(zr + a, xr + b)] += fx;
                    w[(xr + b, zr + a)] -= fx;
                    w[(zr + a, zr + b)] += h * (d.feta[(a, b)] - d.feta[(b, a)]);
                }
            }
        }
        w
    }

    /// Splits an ambient vector into node and cell parts (`xi` has `N + 1`
    /// entries, repeating `xi[0]` at the end for periodic models).
    pub fn split(&self, v: &DVector<f64>) -> TangentVector {
        let m = self.m();
        let n = self.n_cells();
        let xi = (0..=n)
            .map(|k| DVector::from_fn(m, |i, _| v[self.xi_index(k, i)]))
            .collect();
        let zeta = (0..n)
            .map(|c| DVector::from_fn(m, |i, _| v[self.zeta_index(c, i)]))
            .collect();
        TangentVector { xi, zeta }
    }

    pub fn join(&self, t: &TangentVector) -> DVector<f64> {
        let m = self.m();
        let mut v = DVector::zeros(self.dim_ambient());
        for k in 0..self.node_blocks() {
            for i in 0..m {
                v[self.xi_index(k, i)] = t.xi[k][i];
            }
        }
        for (c, z) in t.zeta.iter().enumerate() {
            for i in 0..m {
                v[self.zeta_index(c, i)] = z[i];
            }
        }
        v
    }

    /// Matrix of the linearized constraints, one block of rows per cell
    /// (scaled per unit length) followed by the endpoint conditions.
    pub fn linearized_constraints(&self) -> Result<DMatrix<f64>> {
        let m = self.m();
        let n = self.n_cells();
        let h = self.pair.h();
        let (e0, e1) = self.endpoint_rows()?;
        let rows = m * n + e0.nrows() + e1.nrows();
        let mut l = DMatrix::zeros(rows, self.dim_ambient());
        for (c, d) in self.cells.iter().enumerate() {
            for a in 0..m {
                let r = c * m + a;
                l[(r, self.xi_index(c + 1, a))] += 1.0 / h;
                for b in 0..m {
                    l[(r, self.xi_index(c, b))] -= d.jx[(a, b)] / h;
                    l[(r, self.zeta_index(c, b))] -= d.jeta[(a, b)] / h;
                }
            }
        }
        let mut r = m * n;
        for (rows_mat, node) in [(&e0, 0), (&e1, n)] {
            for a in 0..rows_mat.nrows() {
                for b in 0..m {
                    l[(r, self.xi_index(node, b))] = rows_mat[(a, b)];
                }
                r += 1;
            }
        }
        Ok(l)
    }

    /// Unit-normalized constraint Jacobian rows at both ends.
    fn endpoint_rows(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.m();
        if self.boundary != BoundaryMode::Constrained {
            return Ok((DMatrix::zeros(0, m), DMatrix::zeros(0, m)));
        }
        let norm = |mut j: DMatrix<f64>| {
            for mut row in j.row_iter_mut() {
                let n = row.norm();
                row /= n;
            }
            j
        };
        Ok((
            norm(self.c0.checked_jacobian(self.pair.start().as_slice(), self.rank_tol)?),
            norm(self.c1.checked_jacobian(self.pair.end().as_slice(), self.rank_tol)?),
        ))
    }

    pub fn cells(&self) -> &[CellData] {
        &self.cells
    }

    pub fn pi(&self) -> &BivectorField {
        &self.pi
    }
}

#[derive(Debug, Clone)]
pub struct TangentModel {
    pub basis: LinSubspace,
    /// Largest linearized-constraint residual over the basis vectors.
    pub max_linear_residual: f64,
    /// Smallest nonzero relative singular value of the endpoint system.
    pub endpoint_gap: f64,
}

impl TangentModel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// Upper edge of the band of relative singular values that are neither
/// clearly zero nor clearly nonzero.
const GRAY_ZONE: f64 = 1e-7;

/// Parametrizes solutions of the linearized equation by `xi(0) in T0` and
/// free `zeta`, propagates `xi` cell by cell and removes the directions that
/// violate the far-end condition.
pub fn build_tangent(amb: &AmbientDiscretization) -> Result<TangentModel> {
    let m = amb.m();
    let n = amb.n_cells();
    let x0 = amb.pair.start().as_slice().to_vec();
    let t0 = match amb.boundary {
        BoundaryMode::Constrained => amb.c0.tangent_space(&x0, amb.rank_tol)?.basis().clone(),
        _ => DMatrix::identity(m, m),
    };
    let d0 = t0.ncols();
    let p = d0 + m * n;
    let dim = amb.dim_ambient();
    let mut z = DMatrix::zeros(dim, p);
    let mut xi_end = DMatrix::zeros(m, p);
    let mut xi_start = DMatrix::zeros(m, p);
    for col in 0..p {
        let mut xi = if col < d0 {
            t0.column(col).into_owned()
        } else {
            DVector::zeros(m)
        };
        xi_start.set_column(col, &xi);
        for c in 0..n {
            for i in 0..m {
                z[(amb.xi_index(c, i), col)] = xi[i];
            }
            let mut zeta = DVector::zeros(m);
            if col >= d0 && (col - d0) / m == c {
                zeta[(col - d0) % m] = 1.0;
                z[(amb.zeta_index(c, (col - d0) % m), col)] = 1.0;
            }
            let d = &amb.cells[c];
            xi = &d.jx * xi + &d.jeta * zeta;
        }
        if !amb.pair.periodic {
            for i in 0..m {
                z[(amb.xi_index(n, i), col)] = xi[i];
            }
        }
        xi_end.set_column(col, &xi);
    }
    let endpoint = match amb.boundary {
        BoundaryMode::FreeFree => None,
        BoundaryMode::Periodic => Some(&xi_end - &xi_start),
        BoundaryMode::Constrained => {
            let (_, e1) = amb.endpoint_rows()?;
            (e1.nrows() > 0).then(|| e1 * &xi_end)
        }
    };
    let (params, endpoint_gap) = match endpoint {
        None => (DMatrix::identity(p, p), 1.0),
        Some(e) => {
            let s = singular_values(&e);
            let smax = s.first().copied().unwrap_or(0.0);
            let mut gap = 1.0_f64;
            if smax > 0.0 {
                for v in &s {
                    let rel = v / smax;
                    if rel > amb.rank_tol && rel <= GRAY_ZONE {
                        return Err(LabError::DegenerateEndpointSystem { sigma: rel });
                    }
                    if rel > amb.rank_tol {
                        gap = gap.min(rel);
                    }
                }
            }
            (nullspace(&e, amb.rank_tol), gap)
        }
    };
    let basis = LinSubspace::span(&(z * params), amb.rank_tol);
    let l = amb.linearized_constraints()?;
    let max_linear_residual = if basis.dim() == 0 {
        0.0
    } else {
        (&l * basis.basis()).amax() * amb.pair.h()
    };
    Ok(TangentModel {
        basis,
        max_linear_residual,
        endpoint_gap,
    })
}

pub fn orthogonal_space(amb: &AmbientDiscretization, tangent: &TangentModel) -> LinSubspace {
    orthogonal(&amb.omega, &tangent.basis)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub coisotropic: bool,
    pub defect: usize,
    pub worst_residual: f64,
    pub kernel_dim: usize,
    pub tangent_dim: usize,
    pub orthogonal_dim: usize,
    /// Largest linearized-constraint violation (per unit length) along the
    /// directions of the orthogonal that leave `W + ker`.
    pub worst_linear_residual: f64,
}

pub fn coisotropy_verdict(amb: &AmbientDiscretization, tangent: &TangentModel, tol: f64) -> Result<Verdict> {
    let rep = is_coisotropic(&amb.omega, &tangent.basis, tol);
    let perp = orthogonal_space(amb, tangent);
    let target = tangent.basis.sum(amb.omega.kernel(), amb.rank_tol);
    let mut worst_linear_residual = 0.0_f64;
    if rep.defect > 0 {
        let l = amb.linearized_constraints()?;
        let rej = target.reject(perp.basis());
        let dirs = LinSubspace::span(&rej, 1e-6);
        for k in 0..dirs.dim() {
            let d = dirs.basis().column(k).into_owned();
            worst_linear_residual = worst_linear_residual.max((&l * d).amax());
        }
    }
    Ok(Verdict {
        coisotropic: rep.coisotropic,
        defect: rep.defect,
        worst_residual: rep.worst_residual,
        kernel_dim: rep.kernel_dim,
        tangent_dim: tangent.dim(),
        orthogonal_dim: rep.orthogonal_dim,
        worst_linear_residual,
    })
}

/// Ambient vectors of the gauge directions generated by a nodal basis of
/// covectors `beta` obeying the boundary (or periodicity) conditions.
pub fn gauge_span(amb: &AmbientDiscretization) -> Result<LinSubspace> {
    let m = amb.m();
    let n = amb.n_cells();
    let h = amb.pair.h();
    let mut betas: Vec<Vec<DVector<f64>>> = Vec::new();
    let zero = vec![DVector::zeros(m); n + 1];
    let conormal = |c: &LevelSetSubmanifold, x: &DVector<f64>| -> Result<DMatrix<f64>> {
        if amb.boundary == BoundaryMode::Constrained {
            Ok(c.conormal_space(x.as_slice(), amb.rank_tol)?.basis().clone())
        } else {
            Ok(DMatrix::zeros(m, 0))
        }
    };
    if amb.pair.periodic {
        for k in 0..n {
            for i in 0..m {
                let mut b = zero.clone();
                b[k][i] = 1.0;
                if k == 0 {
                    b[n][i] = 1.0;
                }
                betas.push(b);
            }
        }
    } else {
        let n0 = conormal(&amb.c0, amb.pair.start())?;
        let n1 = conormal(&amb.c1, amb.pair.end())?;
        for col in n0.column_iter() {
            let mut b = zero.clone();
            b[0] = col.into_owned();
            betas.push(b);
        }
        for k in 1..n {
            for i in 0..m {
                let mut b = zero.clone();
                b[k][i] = 1.0;
                betas.push(b);
            }
        }
        for col in n1.column_iter() {
            let mut b = zero.clone();
            b[n] = col.into_owned();
            betas.push(b);
        }
    }
    let mut g = DMatrix::zeros(amb.dim_ambient(), betas.len());
    for (col, beta) in betas.iter().enumerate() {
        let xi = (0..=n)
            .map(|k| Ok(sharp_matrix(&amb.pi, amb.pair.x[k].as_slice())? * &beta[k]))
            .collect::<Result<Vec<_>>>()?;
        let zeta = cellflow_gauge_zeta(&amb.cells, beta, h)?;
        g.set_column(col, &amb.join(&TangentVector { xi, zeta }));
    }
    Ok(LinSubspace::span(&g, amb.rank_tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicReport {
    /// Two-sided subspace distance between gauge span and orthogonal, modulo ker.
    pub defect: f64,
    pub gauge_dim: usize,
    pub orthogonal_dim: usize,
}

pub fn characteristic_match(amb: &AmbientDiscretization, tangent: &TangentModel) -> Result<CharacteristicReport> {
    let k = amb.omega.kernel();
    let g = gauge_span(amb)?.sum(k, amb.rank_tol);
    let perp = orthogonal_space(amb, tangent).sum(k, amb.rank_tol);
    let dim_gap = if g.dim() == perp.dim() { 0.0 } else { 1.0 };
    Ok(CharacteristicReport {
        defect: g.distance_to(&perp).max(dim_gap),
        gauge_dim: g.dim(),
        orthogonal_dim: perp.dim(),
    })
}

/// Largest twisted-equation residual over the tangent basis.
pub fn twisted_residual(amb: &AmbientDiscretization, tangent: &TangentModel) -> Result<f64> {
    let mut worst = 0.0_f64;
    for k in 0..tangent.dim() {
        let v = amb.split(&tangent.basis.basis().column(k).into_owned());
        worst = worst.max(twist(&v, &amb.transport)?.residual);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::solve_cell_flow;
    use crate::poly::PolyScalarField as P;

    fn symplectic_r2() -> BivectorField {
        BivectorField::from_upper(2, vec![(0, 1, P::constant(2, 1.0))]).unwrap()
    }

    fn consts(v: &[f64], n: usize) -> Vec<DVector<f64>> {
        vec![DVector::from_column_slice(v); n]
    }

    fn line(i: usize) -> LevelSetSubmanifold {
        LevelSetSubmanifold::coordinate_planes(2, &[(i, 0.0)]).unwrap()
    }

    #[test]
    fn free_free_dimension() {
        let pi = symplectic_r2();
        let pair = solve_cell_flow(&pi, &[0.1, 0.2], &consts(&[0.3, -0.5], 4), false, 1e-9).unwrap();
        let amb = AmbientDiscretization::build(&pi, &ConnectionField::flat(2), &pair, None, None, &Tolerances::default())
            .unwrap();
        let t = build_tangent(&amb).unwrap();
        assert_eq!(t.dim(), 2 * 4 + 2);
        assert_eq!(amb.kernel_dim(), 2);
        assert!(t.max_linear_residual <= 1e-10);
    }

    #[test]
    fn intersecting_lines_dimension() {
        let pi = BivectorField::zero(2);
        let pair = solve_cell_flow(&pi, &[0.0, 0.0], &consts(&[0.3, -0.5], 4), false, 1e-9).unwrap();
        let amb = AmbientDiscretization::build(
            &pi,
            &ConnectionField::flat(2),
            &pair,
            Some(&line(1)),
            Some(&line(0)),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(build_tangent(&amb).unwrap().dim(), 2 * 4);
    }

    #[test]
    fn endpoint_off_submanifold_rejected() {
        let pi = BivectorField::zero(2);
        let pair = solve_cell_flow(&pi, &[0.0, 1.0], &consts(&[0.3, -0.5], 4), false, 1e-9).unwrap();
        assert!(matches!(
            AmbientDiscretization::build(&pi, &ConnectionField::flat(2), &pair, Some(&line(1)), None, &Tolerances::default()),
            Err(LabError::PointNotOnSubmanifold { .. })
        ));
    }

    #[test]
    fn constant_symplectic_characteristic_match() {
        let pi = symplectic_r2();
        let pair = solve_cell_flow(&pi, &[0.1, 0.2], &consts(&[0.3, -0.5], 4), false, 1e-9).unwrap();
        let amb = AmbientDiscretization::build(&pi, &ConnectionField::flat(2), &pair, None, None, &Tolerances::default())
            .unwrap();
        let t = build_tangent(&amb).unwrap();
        let v = coisotropy_verdict(&amb, &t, 1e-8).unwrap();
        assert!(v.coisotropic, "{v:?}");
        let c = characteristic_match(&amb, &t).unwrap();
        assert!(c.defect <= 1e-10, "{c:?}");
    }

    #[test]
    fn split_join_round_trip() {
        let pi = symplectic_r2();
        let pair = solve_cell_flow(&pi, &[0.1, 0.2], &consts(&[0.3, -0.5], 3), false, 1e-9).unwrap();
        let amb = AmbientDiscretization::build(&pi, &ConnectionField::flat(2), &pair, None, None, &Tolerances::default())
            .unwrap();
        let v = DVector::from_fn(amb.dim_ambient(), |i, _| i as f64);
        assert_eq!(amb.join(&amb.split(&v)), v);
    }
}
