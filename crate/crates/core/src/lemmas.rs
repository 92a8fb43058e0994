//! Seeded random instances for the finite-dimensional lemmas: the annihilator
//! identity and reduction in stages.

use nalgebra::DMatrix;
use rand::Rng;

use crate::symplin::{FormSpace, LinSubspace};

/// Integer instance `(F, T)` with `F` of size `p x q` and `T` spanned by the
/// integer columns `t` of `R^p`.
#[derive(Debug, Clone)]
pub struct AnnihilatorInstance {
    pub f: Vec<Vec<i64>>,
    pub t: Vec<Vec<i64>>,
}

impl AnnihilatorInstance {
    pub fn p(&self) -> usize {
        self.f.len()
    }

    pub fn q(&self) -> usize {
        self.f.first().map_or(0, |r| r.len())
    }

    pub fn f_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.q(), |i, j| self.f[i][j] as f64)
    }

    pub fn t_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.t.len(), |i, j| self.t[j][i] as f64)
    }

    pub fn t_subspace(&self, rank_tol: f64) -> LinSubspace {
        LinSubspace::span(&self.t_matrix(), rank_tol)
    }
}

fn int_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<i64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-3..=3)).collect())
        .collect()
}

fn int_product(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Random instance with `p, q <= 6`, a random rank for `F` (including 0) and
/// a random number of possibly dependent spanning vectors for `T`.
pub fn annihilator_instance<R: Rng>(rng: &mut R) -> AnnihilatorInstance {
    let p = rng.random_range(1..=6);
    let q = rng.random_range(1..=6);
    let r = rng.random_range(0..=p.min(q));
    let f = if r == 0 {
        vec![vec![0; q]; p]
    } else {
        int_product(&int_matrix(p, r, rng), &int_matrix(r, q, rng))
    };
    let kt = rng.random_range(0..=p);
    let t = if kt == 0 {
        Vec::new()
    } else {
        // columns of a p x kt integer matrix with a random inner rank
        let inner = rng.random_range(1..=kt);
        let cols = int_product(&int_matrix(p, inner, rng), &int_matrix(inner, kt, rng));
        (0..kt).map(|j| (0..p).map(|i| cols[i][j]).collect()).collect()
    };
    AnnihilatorInstance { f, t }
}

/// Random linear symplectic map of R^{2k} in the interleaved basis
/// `(e_1, f_1, ..., e_k, f_k)`, built from shears and a block-diagonal factor.
pub fn random_symplectic<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = 2 * k;
    let sym = |rng: &mut R| {
        let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    };
    let mut upper = DMatrix::identity(n, n);
    upper.view_mut((0, k), (k, k)).copy_from(&sym(rng));
    let mut lower = DMatrix::identity(n, n);
    lower.view_mut((k, 0), (k, k)).copy_from(&sym(rng));
    let g = DMatrix::identity(k, k) + DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.4..0.4));
    let g_inv_t = g.clone().try_inverse().expect("near-identity block").transpose();
    let mut diag = DMatrix::zeros(n, n);
    diag.view_mut((0, 0), (k, k)).copy_from(&g);
    diag.view_mut((k, k), (k, k)).copy_from(&g_inv_t);
    let block = upper * diag * lower;
    // (q_1..q_k, p_1..p_k) -> (q_1, p_1, ..., q_k, p_k)
    let perm = DMatrix::from_fn(n, n, |r, c| {
        let target = if c < k { 2 * c } else { 2 * (c - k) + 1 };
        if r == target {
            1.0
        } else {
            0.0
        }
    });
    &perm * block * perm.transpose()
}

/// Coisotropic chain `W < V` in standard symplectic R^{2k}: both contain the
/// Lagrangian span of the `e_i`, V keeps `f_j` for `j >= a` and W for `j >= b`
/// with `a <= b`, and both are moved by a random symplectic map.
pub struct CoisotropicChain {
    pub space: FormSpace,
    pub v: LinSubspace,
    pub w: LinSubspace,
    pub kept_v: usize,
    pub kept_w: usize,
}

pub fn coisotropic_chain<R: Rng>(k: usize, rng: &mut R) -> CoisotropicChain {
    let a = rng.random_range(0..=k);
    let b = rng.random_range(a..=k);
    let psi = random_symplectic(k, rng);
    let basis = |drop: usize| {
        let mut idx: Vec<usize> = (0..k).map(|i| 2 * i).collect();
        idx.extend((drop..k).map(|i| 2 * i + 1));
        let cols = LinSubspace::coordinate(2 * k, &idx);
        LinSubspace::span(&(&psi * cols.basis()), 1e-12)
    };
    CoisotropicChain {
        space: FormSpace::standard(k),
        v: basis(a),
        w: basis(b),
        kept_v: k - a,
        kept_w: k - b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symplectic_map_preserves_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = FormSpace::standard(4);
        for _ in 0..10 {
            let psi = random_symplectic(4, &mut rng);
            let pulled = psi.transpose() * s.form() * &psi;
            assert!((pulled - s.form()).amax() < 1e-12);
        }
    }

    #[test]
    fn instance_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let inst = annihilator_instance(&mut rng);
            assert!(inst.p() <= 6 && inst.q() <= 6);
            assert!(inst.t.iter().all(|c| c.len() == inst.p()));
        }
    }
}
