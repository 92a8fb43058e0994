//! Endpoint maps of the reduced path space and the orthogonality of their
//! kernels.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{LabError, Result};
use crate::harness::{orthogonal_space, AmbientDiscretization, TangentModel};
use crate::symplin::{nullspace, orthogonal, quotient_form, LinSubspace, Quotient};
use crate::tensor::{is_coisotropic_at, jacobiator, sharp_matrix, LevelSetSubmanifold};

/// Differentials of `X -> X(0)` and `X -> X(1)` on the tangent model, in the
/// coordinates of its orthonormal basis.
#[derive(Debug, Clone)]
pub struct EndpointDifferentials {
    pub varpi0: DMatrix<f64>,
    pub varpi1: DMatrix<f64>,
    /// `pi^sharp(N*C_i)` at the two endpoints.
    pub z0_perp: LinSubspace,
    pub z1_perp: LinSubspace,
    /// Distance of the endpoint images of `W cap W^perp` from `Z_i^perp`.
    pub gauge_residual: f64,
}

fn z_perp(amb: &AmbientDiscretization, c: &LevelSetSubmanifold, node: usize, rank_tol: f64) -> Result<LinSubspace> {
    let x = amb.pair.x[node].as_slice();
    let conormal = c.conormal_space(x, rank_tol)?;
    if conormal.dim() == 0 {
        return Ok(LinSubspace::zero(amb.m()));
    }
    let s = sharp_matrix(amb.pi(), x)?;
    Ok(LinSubspace::span(&(s * conormal.basis()), rank_tol))
}

fn endpoint_rows(amb: &AmbientDiscretization, node: usize, cols: &DMatrix<f64>) -> DMatrix<f64> {
    let m = amb.m();
    DMatrix::from_fn(m, cols.ncols(), |i, c| cols[(amb.xi_index(node, i), c)])
}

pub fn endpoint_differentials(
    amb: &AmbientDiscretization,
    tangent: &TangentModel,
    rank_tol: f64,
) -> Result<EndpointDifferentials> {
    if amb.pair.periodic {
        return Err(LabError::PreconditionFailed("endpoint maps need an interval pair".into()));
    }
    let n = amb.n_cells();
    let w = tangent.basis.basis();
    let z0_perp = z_perp(amb, &amb.c0, 0, rank_tol)?;
    let z1_perp = z_perp(amb, &amb.c1, n, rank_tol)?;
    let radical = tangent.basis.intersection(&orthogonal_space(amb, tangent), rank_tol);
    let mut gauge_residual = 0.0_f64;
    if radical.dim() > 0 {
        for (node, z) in [(0, &z0_perp), (n, &z1_perp)] {
            let img = endpoint_rows(amb, node, radical.basis());
            gauge_residual = gauge_residual.max(z.reject(&img).amax());
        }
    }
    Ok(EndpointDifferentials {
        varpi0: endpoint_rows(amb, 0, w),
        varpi1: endpoint_rows(amb, n, w),
        z0_perp,
        z1_perp,
        gauge_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPairReport {
    pub k0_dim: usize,
    pub k1_dim: usize,
    /// `max |Omega(k0, k1)|` over orthonormal bases.
    pub orthogonality_residual: f64,
    /// Directions by which `K0^perp cap W` and `K1 + W^perp` differ, modulo ker.
    pub two_sided_defect: usize,
    pub two_sided_distance: f64,
    pub gauge_residual: f64,
    pub rank_varpi0: usize,
    pub rank_varpi1: usize,
}

impl DualPairReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.orthogonality_residual <= tol && self.two_sided_defect == 0 && self.gauge_residual <= tol
    }
}

/// `K_i = varpi_i^{-1}(Z_i^perp)` inside the tangent model.
fn preimage(
    w: &DMatrix<f64>,
    varpi: &DMatrix<f64>,
    z: &LinSubspace,
    rank_tol: f64,
) -> LinSubspace {
    let comp = z.complement();
    let coeffs = if comp.dim() == 0 {
        DMatrix::identity(w.ncols(), w.ncols())
    } else {
        nullspace(&(comp.basis().transpose() * varpi), rank_tol)
    };
    LinSubspace::span(&(w * coeffs), rank_tol)
}

pub fn dual_pair_check(amb: &AmbientDiscretization, tangent: &TangentModel, tol: &Tolerances) -> Result<DualPairReport> {
    let n = amb.n_cells();
    for x in &amb.pair.x {
        let j = jacobiator(amb.pi(), x.as_slice())?.max_abs();
        if j > 1e-9 {
            return Err(LabError::PreconditionFailed(format!(
                "bivector is not Poisson along the path (jacobiator {j:.2e})"
            )));
        }
    }
    for (c, node) in [(&amb.c0, 0), (&amb.c1, n)] {
        let r = is_coisotropic_at(amb.pi(), c, amb.pair.x[node].as_slice(), tol.coisotropy, tol.membership, tol.rank)?;
        if !r.coisotropic {
            return Err(LabError::PreconditionFailed(format!(
                "boundary submanifold is not coisotropic (residual {:.2e})",
                r.residual
            )));
        }
    }
    let ed = endpoint_differentials(amb, tangent, tol.rank)?;
    let w = tangent.basis.basis();
    let k0 = preimage(w, &ed.varpi0, &ed.z0_perp, tol.rank);
    let k1 = preimage(w, &ed.varpi1, &ed.z1_perp, tol.rank);
    let orthogonality_residual = if k0.dim() == 0 || k1.dim() == 0 {
        0.0
    } else {
        amb.omega.pair(k0.basis(), k1.basis()).amax()
    };
    let ker = amb.omega.kernel();
    let rt = tol.rank;
    let lhs = orthogonal(&amb.omega, &k0)
        .intersection(&tangent.basis.sum(ker, rt), rt)
        .sum(ker, rt);
    let rhs = k1.sum(&orthogonal_space(amb, tangent), rt).sum(ker, rt);
    let two_sided_defect = lhs.excess_count(&rhs, tol.inclusion) + rhs.excess_count(&lhs, tol.inclusion);
    let rank = |v: &DMatrix<f64>| LinSubspace::span(v, rt).dim();
    Ok(DualPairReport {
        k0_dim: k0.dim(),
        k1_dim: k1.dim(),
        orthogonality_residual,
        two_sided_defect,
        two_sided_distance: lhs.distance_to(&rhs),
        gauge_residual: ed.gauge_residual,
        rank_varpi0: rank(&ed.varpi0),
        rank_varpi1: rank(&ed.varpi1),
    })
}

/// Reduced space `W / (W cap W^perp)` of the tangent model.
pub fn reduce(amb: &AmbientDiscretization, tangent: &TangentModel, tol: f64) -> Result<Quotient> {
    quotient_form(&amb.omega, &tangent.basis, tol)
}
