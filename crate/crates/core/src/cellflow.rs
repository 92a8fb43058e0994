//! Exact flow of `x' = -S(x) eta` over one cell with constant `eta`, together
//! with its variational maps, cell averages and transport frames.
//!
//! Integration is classical RK4 with substep doubling and a final Richardson
//! correction, run until successive refinements agree to round-off.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::tensor::{
    a_matrix, covariant_derivative_pi, gamma_contract, gamma_eta, sharp_matrix, BivectorField,
    ConnectionField,
};

/// Everything the discrete model needs about one cell of length `h`.
#[derive(Debug, Clone)]
pub struct CellData {
    /// Flow endpoint `phi_h(x0)`.
    pub end: DVector<f64>,
    /// `d end / d x0`.
    pub jx: DMatrix<f64>,
    /// `d end / d eta`.
    pub jeta: DMatrix<f64>,
    /// Cell average of the trajectory.
    pub mean: DVector<f64>,
    /// `d mean / d x0`.
    pub fx: DMatrix<f64>,
    /// `d mean / d eta`.
    pub feta: DMatrix<f64>,
    pub transport: Option<CellTransport>,
}

/// Transport frame over one cell, relative to the frame at the left node.
#[derive(Debug, Clone)]
pub struct CellTransport {
    /// `U(h)` with `U(0) = I`.
    pub u: DMatrix<f64>,
    /// Maps giving the twisted covector average of a tangent vector:
    /// `phi = w_xi * xi_left + w_zeta * zeta`, in the left frame.
    pub w_xi: DMatrix<f64>,
    pub w_zeta: DMatrix<f64>,
}

const MAX_SUBSTEPS: usize = 1 << 14;
const AGREE: f64 = 1e-11;

struct Layout {
    m: usize,
    transport: bool,
}

impl Layout {
    fn len(&self) -> usize {
        let m = self.m;
        let base = 2 * m + 4 * m * m;
        if self.transport {
            base + 4 * m * m
        } else {
            base
        }
    }
    fn jx(&self) -> usize {
        self.m
    }
    fn je(&self) -> usize {
        self.m + self.m * self.m
    }
    fn ix(&self) -> usize {
        self.m + 2 * self.m * self.m
    }
    fn ijx(&self) -> usize {
        2 * self.m + 2 * self.m * self.m
    }
    fn ije(&self) -> usize {
        2 * self.m + 3 * self.m * self.m
    }
    fn u(&self) -> usize {
        2 * self.m + 4 * self.m * self.m
    }
    fn v(&self) -> usize {
        self.u() + self.m * self.m
    }
    fn wx(&self) -> usize {
        self.v() + self.m * self.m
    }
    fn wz(&self) -> usize {
        self.wx() + self.m * self.m
    }
}

fn mat(state: &[f64], off: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(m, m, &state[off..off + m * m])
}

fn put(out: &mut [f64], off: usize, v: &DMatrix<f64>) {
    out[off..off + v.len()].copy_from_slice(v.as_slice());
}

struct System<'a> {
    pi: &'a BivectorField,
    conn: &'a ConnectionField,
    eta: &'a [f64],
    lay: Layout,
}

impl System<'_> {
    fn deriv(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.lay.m;
        let l = &self.lay;
        let x = &y[..m];
        let s = sharp_matrix(self.pi, x)?;
        let eta = DVector::from_column_slice(self.eta);
        let f = -(&s * &eta);
        let mjac = self.pi.flow_jacobian(x, self.eta);
        let jx = mat(y, l.jx(), m);
        let je = mat(y, l.je(), m);
        out[..m].copy_from_slice(f.as_slice());
        put(out, l.jx(), &(-(&mjac * &jx)));
        put(out, l.je(), &(-(&mjac * &je) - &s));
        out[l.ix()..l.ix() + m].copy_from_slice(x);
        put(out, l.ijx(), &jx);
        put(out, l.ije(), &je);
        if l.transport {
            let nabla = covariant_derivative_pi(self.pi, self.conn, x)?;
            let mut b = a_matrix(&nabla, self.eta);
            let mut gmat = DMatrix::zeros(m, m);
            if !self.conn.is_flat() {
                let g = self.conn.eval(x);
                b += gamma_contract(&g, f.as_slice());
                gmat = gamma_eta(&g, self.eta);
            }
            let u = mat(y, l.u(), m);
            let v = mat(y, l.v(), m);
            put(out, l.u(), &(&u * &b));
            put(out, l.v(), &(-(&v * b.transpose())));
            put(out, l.wx(), &(-(&v * &gmat * &jx)));
            let id = DMatrix::<f64>::identity(m, m);
            put(out, l.wz(), &(&v * (id - &gmat * &je)));
        }
        Ok(())
    }

    fn integrate(&self, y0: &[f64], h: f64, n: usize) -> Result<Vec<f64>> {
        let len = y0.len();
        let dt = h / n as f64;
        let mut y = y0.to_vec();
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        for _ in 0..n {
            self.deriv(&y, &mut k1)?;
            for i in 0..len {
                tmp[i] = y[i] + 0.5 * dt * k1[i];
            }
            self.deriv(&tmp, &mut k2)?;
            for i in 0..len {
                tmp[i] = y[i] + 0.5 * dt * k2[i];
            }
            self.deriv(&tmp, &mut k3)?;
            for i in 0..len {
                tmp[i] = y[i] + dt * k3[i];
            }
            self.deriv(&tmp, &mut k4)?;
            for i in 0..len {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonConvergence { cell: usize::MAX });
        }
        Ok(y)
    }
}

/// Integrates one cell. With `transport`, the frame ODE
/// `U' = U (A + Gamma x')` and the twisted averages are carried along.
pub fn integrate_cell(
    pi: &BivectorField,
    conn: &ConnectionField,
    x0: &[f64],
    eta: &[f64],
    h: f64,
    transport: bool,
) -> Result<CellData> {
    let m = pi.dim();
    if x0.len() != m || eta.len() != m {
        return Err(LabError::DimensionMismatch {
            expected: m,
            found: if x0.len() != m { x0.len() } else { eta.len() },
        });
    }
    let lay = Layout { m, transport };
    let mut y0 = vec![0.0; lay.len()];
    y0[..m].copy_from_slice(x0);
    let id = DMatrix::<f64>::identity(m, m);
    put(&mut y0, lay.jx(), &id);
    if transport {
        put(&mut y0, lay.u(), &id);
        put(&mut y0, lay.v(), &id);
    }
    let sys = System { pi, conn, eta, lay };

    let mut n = 2;
    let mut coarse = sys.integrate(&y0, h, n)?;
    let y = loop {
        n *= 2;
        let fine = sys.integrate(&y0, h, n)?;
        let diff = coarse
            .iter()
            .zip(&fine)
            .fold(0.0_f64, |a, (c, f)| a.max((c - f).abs() / (1.0 + f.abs())));
        if diff <= AGREE {
            break fine
                .iter()
                .zip(&coarse)
                .map(|(f, c)| f + (f - c) / 15.0)
                .collect::<Vec<_>>();
        }
        if n >= MAX_SUBSTEPS {
            return Err(LabError::NonConvergence { cell: usize::MAX });
        }
        coarse = fine;
    };
    let l = &sys.lay;
    let inv_h = 1.0 / h;
    Ok(CellData {
        end: DVector::from_column_slice(&y[..m]),
        jx: mat(&y, l.jx(), m),
        jeta: mat(&y, l.je(), m),
        mean: DVector::from_column_slice(&y[l.ix()..l.ix() + m]) * inv_h,
        fx: mat(&y, l.ijx(), m) * inv_h,
        feta: mat(&y, l.ije(), m) * inv_h,
        transport: transport.then(|| CellTransport {
            u: mat(&y, l.u(), m),
            w_xi: mat(&y, l.wx(), m) * inv_h,
            w_zeta: mat(&y, l.wz(), m) * inv_h,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    fn so3() -> BivectorField {
        let mut c = Tensor3::zeros(3);
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c.set(i, j, k, 1.0);
            c.set(j, i, k, -1.0);
        }
        BivectorField::lie_poisson(&c).unwrap()
    }

    #[test]
    fn rotation_is_exact() {
        let pi = so3();
        let conn = ConnectionField::flat(3);
        let h = 0.25;
        let d = integrate_cell(&pi, &conn, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], h, true).unwrap();
        assert!((d.end[0] - h.cos()).abs() < 1e-14);
        assert!((d.end[1] - h.sin()).abs() < 1e-14);
        // cell average of (cos u, sin u)
        assert!((d.mean[0] - h.sin() / h).abs() < 1e-14);
        assert!((d.mean[1] - (1.0 - h.cos()) / h).abs() < 1e-14);
    }

    #[test]
    fn variational_maps_match_differences() {
        let pi = so3();
        let conn = ConnectionField::flat(3);
        let x = [0.3, -0.8, 0.5];
        let eta = [0.7, 0.2, -1.1];
        let h = 0.2;
        let base = integrate_cell(&pi, &conn, &x, &eta, h, false).unwrap();
        let eps = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += eps;
            xm[k] -= eps;
            let p = integrate_cell(&pi, &conn, &xp, &eta, h, false).unwrap();
            let q = integrate_cell(&pi, &conn, &xm, &eta, h, false).unwrap();
            let fd = (&p.end - &q.end) / (2.0 * eps);
            assert!((fd - base.jx.column(k)).amax() < 1e-8);
            let fd = (&p.mean - &q.mean) / (2.0 * eps);
            assert!((fd - base.fx.column(k)).amax() < 1e-8);

            let mut ep = eta;
            let mut em = eta;
            ep[k] += eps;
            em[k] -= eps;
            let p = integrate_cell(&pi, &conn, &x, &ep, h, false).unwrap();
            let q = integrate_cell(&pi, &conn, &x, &em, h, false).unwrap();
            let fd = (&p.end - &q.end) / (2.0 * eps);
            assert!((fd - base.jeta.column(k)).amax() < 1e-8);
            let fd = (&p.mean - &q.mean) / (2.0 * eps);
            assert!((fd - base.feta.column(k)).amax() < 1e-8);
        }
    }

    #[test]
    fn flat_frame_inverts_flow_jacobian() {
        let pi = so3();
        let conn = ConnectionField::flat(3);
        let d = integrate_cell(&pi, &conn, &[0.3, -0.8, 0.5], &[0.7, 0.2, -1.1], 0.3, true).unwrap();
        let t = d.transport.unwrap();
        let prod = &t.u * &d.jx;
        assert!((prod - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn zero_field_stays_put() {
        let pi = BivectorField::zero(2);
        let conn = ConnectionField::flat(2);
        let d = integrate_cell(&pi, &conn, &[0.3, 0.4], &[5.0, -2.0], 0.5, true).unwrap();
        assert_eq!(d.end.as_slice(), &[0.3, 0.4]);
        assert_eq!(d.jeta, DMatrix::zeros(2, 2));
    }
}
