//! Linear algebra of (possibly degenerate) skew forms on R^n: subspaces,
//! orthogonals, annihilators and coisotropic reduction.
//!
//! Inclusions and equalities involving orthogonals are tested modulo the
//! kernel of the form.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

/// Thin singular value decomposition `a = u diag(s) v_t` with `s` sorted
/// descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

/// Thin SVD computed by faer; nalgebra's own SVD loses accuracy on tall or
/// rank-deficient inputs, which is exactly where rank decisions happen.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v_t: DMatrix::zeros(0, cols),
        };
    }
    let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let d = m.thin_svd().expect("svd of a finite matrix");
    let (u, sv, v) = (d.U(), d.S().column_vector(), d.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    Svd {
        u: DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]),
        s: order.iter().map(|&i| sv[i]).collect(),
        v_t: DMatrix::from_fn(k, cols, |r, c| v[(c, order[r])]),
    }
}

/// Orthonormal basis of the column space of `a`, using a relative singular
/// value cutoff.
pub fn column_space(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let d = svd(a);
    let smax = d.s[0];
    if smax == 0.0 || !smax.is_finite() {
        return DMatrix::zeros(n, 0);
    }
    let r = d.s.iter().filter(|v| **v > rank_tol * smax).count();
    d.u.columns(0, r).into_owned()
}

/// Orthonormal basis of `{v : a v = 0}`.
pub fn nullspace(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    nullspace_scaled(a, rank_tol, 0.0)
}

/// Like [`nullspace`], with the cutoff `rank_tol * max(scale, sigma_max)`.
pub fn nullspace_scaled(a: &DMatrix<f64>, rank_tol: f64, scale: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad wide inputs to square so that the full set of right vectors exists
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let d = svd(&padded);
    let smax = d.s[0].max(scale);
    let keep: Vec<usize> = (0..d.s.len())
        .filter(|&i| smax == 0.0 || d.s[i] <= rank_tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| d.v_t[(keep[c], r)])
}

/// Singular values of `a`, sorted descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut s = m.singular_values().expect("svd of a finite matrix");
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Subspace of R^n held by an orthonormal basis.
#[derive(Debug, Clone)]
pub struct LinSubspace {
    basis: DMatrix<f64>,
}

impl LinSubspace {
    /// Span of the columns of `cols`.
    pub fn span(cols: &DMatrix<f64>, rank_tol: f64) -> Self {
        Self {
            basis: column_space(cols, rank_tol),
        }
    }

    /// Wraps columns that are already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            basis: DMatrix::identity(n, n),
        }
    }

    /// Span of the standard basis vectors with the given indices.
    pub fn coordinate(n: usize, idx: &[usize]) -> Self {
        let mut b = DMatrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            b[(i, c)] = 1.0;
        }
        Self { basis: b }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Component of each column of `m` orthogonal to this subspace.
    pub fn reject(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim() == 0 {
            return m.clone();
        }
        m - &self.basis * (self.basis.transpose() * m)
    }

    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.reject(&m).norm()
    }

    /// Largest sine of a principal angle from `other` into `self`; zero iff
    /// `other` is contained in `self`.
    pub fn excess(&self, other: &LinSubspace) -> f64 {
        if other.dim() == 0 {
            return 0.0;
        }
        singular_values(&self.reject(&other.basis))
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    /// Number of directions of `other` sticking out of `self` by more than `tol`.
    pub fn excess_count(&self, other: &LinSubspace, tol: f64) -> usize {
        if other.dim() == 0 {
            return 0;
        }
        singular_values(&self.reject(&other.basis))
            .iter()
            .filter(|s| **s > tol)
            .count()
    }

    pub fn contains(&self, other: &LinSubspace, tol: f64) -> bool {
        self.excess(other) <= tol
    }

    pub fn sum(&self, other: &LinSubspace, rank_tol: f64) -> LinSubspace {
        let mut cat = DMatrix::zeros(self.ambient_dim(), self.dim() + other.dim());
        cat.view_mut((0, 0), (self.ambient_dim(), self.dim()))
            .copy_from(&self.basis);
        cat.view_mut((0, self.dim()), (self.ambient_dim(), other.dim()))
            .copy_from(&other.basis);
        LinSubspace::span(&cat, rank_tol)
    }

    /// Euclidean orthogonal complement.
    pub fn complement(&self) -> LinSubspace {
        let n = self.ambient_dim();
        if self.dim() == 0 {
            return LinSubspace::full(n);
        }
        LinSubspace::from_orthonormal(nullspace(&self.basis.transpose(), 1e-12))
    }

    pub fn intersection(&self, other: &LinSubspace, rank_tol: f64) -> LinSubspace {
        let n = self.ambient_dim();
        if self.dim() == 0 || other.dim() == 0 {
            return LinSubspace::zero(n);
        }
        // a = U x = V y
        let mut cat = DMatrix::zeros(n, self.dim() + other.dim());
        cat.view_mut((0, 0), (n, self.dim())).copy_from(&self.basis);
        cat.view_mut((0, self.dim()), (n, other.dim()))
            .copy_from(&(-&other.basis));
        let ker = nullspace(&cat, rank_tol);
        let xs = ker.rows(0, self.dim()).into_owned();
        LinSubspace::span(&(&self.basis * xs), rank_tol)
    }

    /// Two-sided distance: the larger of the two one-sided excesses.
    pub fn distance_to(&self, other: &LinSubspace) -> f64 {
        self.excess(other).max(other.excess(self))
    }

    pub fn equals(&self, other: &LinSubspace, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance_to(other) <= tol
    }

    /// Image under a linear map.
    pub fn image(&self, f: &DMatrix<f64>, rank_tol: f64) -> LinSubspace {
        LinSubspace::span(&(f * &self.basis), rank_tol)
    }
}

/// Skew bilinear form on R^n, possibly degenerate.
#[derive(Debug, Clone)]
pub struct FormSpace {
    form: DMatrix<f64>,
    kernel: LinSubspace,
    rank_tol: f64,
    norm: f64,
}

impl FormSpace {
    pub fn new(form: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if form.nrows() != form.ncols() {
            return Err(LabError::DimensionMismatch {
                expected: form.nrows(),
                found: form.ncols(),
            });
        }
        let scale = form.amax().max(1.0);
        let skew = (&form + form.transpose()).amax();
        if skew > 1e-12 * scale {
            return Err(LabError::InvalidInput(format!(
                "form is not skew (|Omega + Omega^t| = {skew:.3e})"
            )));
        }
        let kernel = LinSubspace::from_orthonormal(nullspace(&form, rank_tol));
        let norm = singular_values(&form).first().copied().unwrap_or(0.0);
        Ok(Self {
            form,
            kernel,
            rank_tol,
            norm,
        })
    }

    /// Standard symplectic form on R^{2k} in the basis (e_1, f_1, ..., e_k, f_k).
    pub fn standard(k: usize) -> Self {
        let mut w = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            w[(2 * i, 2 * i + 1)] = 1.0;
            w[(2 * i + 1, 2 * i)] = -1.0;
        }
        Self::new(w, 1e-10).expect("standard form is skew")
    }

    pub fn dim(&self) -> usize {
        self.form.nrows()
    }

    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    pub fn kernel(&self) -> &LinSubspace {
        &self.kernel
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Spectral norm of the form; rank cutoffs on derived matrices scale with it.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn pair(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.transpose() * &self.form * b
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.kernel.dim() == 0
    }
}

/// `{v : Omega(v, w) = 0 for all w in W}`.
pub fn orthogonal(space: &FormSpace, w: &LinSubspace) -> LinSubspace {
    if w.dim() == 0 {
        return LinSubspace::full(space.dim());
    }
    let g = w.basis().transpose() * space.form();
    LinSubspace::from_orthonormal(nullspace_scaled(&g, space.rank_tol(), space.norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoisotropyReport {
    pub coisotropic: bool,
    /// Number of directions of the orthogonal outside `W + ker`.
    pub defect: usize,
    /// Largest distance of a unit orthogonal vector from `W + ker`.
    pub worst_residual: f64,
    pub orthogonal_dim: usize,
    pub kernel_dim: usize,
}

/// Tests `W^perp subset W + ker Omega`.
pub fn is_coisotropic(space: &FormSpace, w: &LinSubspace, tol: f64) -> CoisotropyReport {
    let perp = orthogonal(space, w);
    let target = w.sum(space.kernel(), space.rank_tol());
    let s = if perp.dim() == 0 {
        Vec::new()
    } else {
        singular_values(&target.reject(perp.basis()))
    };
    let worst_residual = s.first().copied().unwrap_or(0.0);
    let defect = s.iter().filter(|v| **v > tol).count();
    CoisotropyReport {
        coisotropic: defect == 0,
        defect,
        worst_residual,
        orthogonal_dim: perp.dim(),
        kernel_dim: space.kernel_dim(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilatorReport {
    pub holds: bool,
    pub lhs_dim: usize,
    pub rhs_dim: usize,
    pub distance: f64,
}

/// Compares `Ann(F^{-1}(T))` with `F^t(Ann(T))` inside R^q, where annihilators
/// are identified with Euclidean complements.
pub fn annihilator_lemma_check(f: &DMatrix<f64>, t: &LinSubspace, rank_tol: f64) -> Result<AnnihilatorReport> {
    if t.ambient_dim() != f.nrows() {
        return Err(LabError::DimensionMismatch {
            expected: f.nrows(),
            found: t.ambient_dim(),
        });
    }
    let q = f.ncols();
    let ann_t = t.complement();
    let preimage = if ann_t.dim() == 0 {
        LinSubspace::full(q)
    } else {
        LinSubspace::from_orthonormal(nullspace(&(ann_t.basis().transpose() * f), rank_tol))
    };
    let lhs = preimage.complement();
    let rhs = ann_t.image(&f.transpose(), rank_tol);
    let distance = lhs.distance_to(&rhs);
    Ok(AnnihilatorReport {
        holds: lhs.dim() == rhs.dim() && distance <= 1e-8,
        lhs_dim: lhs.dim(),
        rhs_dim: rhs.dim(),
        distance,
    })
}

/// Reduced space `C / (C cap C^perp)` with its induced form.
#[derive(Debug, Clone)]
pub struct Quotient {
    pub form: FormSpace,
    /// n x k: representatives in the ambient space of a basis of the quotient.
    pub section: DMatrix<f64>,
    /// k x n: coordinates of the class of a vector of C.
    pub projection: DMatrix<f64>,
}

impl Quotient {
    pub fn dim(&self) -> usize {
        self.section.ncols()
    }
}

pub fn quotient_form(space: &FormSpace, c: &LinSubspace, tol: f64) -> Result<Quotient> {
    let rep = is_coisotropic(space, c, tol);
    if !rep.coisotropic {
        return Err(LabError::NotCoisotropic { defect: rep.defect });
    }
    let q = c.basis();
    let r = q.transpose() * space.form() * q;
    let r = (&r - r.transpose()) * 0.5;
    let rad = LinSubspace::from_orthonormal(nullspace_scaled(&r, space.rank_tol(), space.norm()));
    let b = rad.complement();
    let reduced = b.basis().transpose() * &r * b.basis();
    let reduced = (&reduced - reduced.transpose()) * 0.5;
    let section = q * b.basis();
    let projection = b.basis().transpose() * q.transpose();
    Ok(Quotient {
        form: FormSpace::new(reduced, space.rank_tol())?,
        section,
        projection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagesReport {
    /// Worst excess in the chain `V^perp < W^perp < W + ker < V + ker`.
    pub chain_residual: f64,
    pub chain_ok: bool,
    /// Coisotropy of the image of W in `V / V^perp`.
    pub stage_two: CoisotropyReport,
    pub direct_dim: usize,
    pub staged_dim: usize,
    /// `|M^t Omega_staged M - Omega_direct|` for the canonical map M.
    pub form_mismatch: f64,
    /// Smallest singular value of the canonical map.
    pub map_min_sv: f64,
    pub forms_agree: bool,
}

impl StagesReport {
    pub fn all_pass(&self) -> bool {
        self.chain_ok && self.stage_two.coisotropic && self.forms_agree
    }
}

/// Checks that reducing by W directly agrees with reducing by V and then by
/// the image of W.
pub fn reduction_in_stages_check(
    space: &FormSpace,
    v: &LinSubspace,
    w: &LinSubspace,
    tol: f64,
) -> Result<StagesReport> {
    if v.excess(w) > tol {
        return Err(LabError::PreconditionFailed("W is not contained in V".into()));
    }
    let wrep = is_coisotropic(space, w, tol);
    if !wrep.coisotropic {
        return Err(LabError::PreconditionFailed("W is not coisotropic".into()));
    }
    let rt = space.rank_tol();
    let k = space.kernel();
    let vp = orthogonal(space, v);
    let wp = orthogonal(space, w);
    let chain_residual = wp
        .excess(&vp)
        .max(w.sum(k, rt).excess(&wp))
        .max(v.sum(k, rt).excess(w));
    let chain_ok = chain_residual <= tol;

    let qv = quotient_form(space, v, tol)?;
    let w_bar = LinSubspace::span(&(&qv.projection * w.basis()), rt);
    let stage_two = is_coisotropic(&qv.form, &w_bar, tol);

    let direct = quotient_form(space, w, tol)?;
    let (staged_dim, form_mismatch, map_min_sv) = if stage_two.coisotropic {
        let staged = quotient_form(&qv.form, &w_bar, tol)?;
        let map = &staged.projection * (&qv.projection * &direct.section);
        let pulled = map.transpose() * staged.form.form() * &map;
        let mismatch = if direct.dim() == 0 && staged.dim() == 0 {
            0.0
        } else {
            (pulled - direct.form.form()).amax()
        };
        let min_sv = if map.nrows() == 0 && map.ncols() == 0 {
            f64::INFINITY
        } else if map.nrows() != map.ncols() {
            0.0
        } else {
            singular_values(&map).last().copied().unwrap_or(0.0)
        };
        (staged.dim(), mismatch, min_sv)
    } else {
        (0, f64::INFINITY, 0.0)
    };
    let forms_agree = staged_dim == direct.dim() && form_mismatch <= tol.max(1e-9) && map_min_sv > rt;
    Ok(StagesReport {
        chain_residual,
        chain_ok,
        stage_two,
        direct_dim: direct.dim(),
        staged_dim,
        form_mismatch,
        map_min_sv,
        forms_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, idx: &[usize]) -> LinSubspace {
        LinSubspace::coordinate(n, idx)
    }

    #[test]
    fn svd_reconstructs_tall_rank_deficient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for (rows, cols) in [(100, 20), (387, 51), (30, 30), (20, 100), (7, 3)] {
            let mut a = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let c0 = a.column(0).into_owned();
            a.column_mut(cols - 1).copy_from(&(c0 * 2.0));
            let d = svd(&a);
            let sig = DMatrix::from_diagonal(&DVector::from_vec(d.s.clone()));
            assert!((&d.u * sig * &d.v_t - &a).amax() < 1e-12, "{rows}x{cols}");
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let cs = LinSubspace::span(&a, 1e-10);
            assert_eq!(cs.dim(), rows.min(cols - 1));
            assert!(cs.reject(&a).amax() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_examples() {
        let s = FormSpace::standard(1);
        assert_eq!(orthogonal(&s, &LinSubspace::full(2)).dim(), 0);
        let l = e(2, &[0]);
        assert!(orthogonal(&s, &l).equals(&l, 1e-12));
    }

    #[test]
    fn coisotropic_examples() {
        let s = FormSpace::standard(2);
        assert!(is_coisotropic(&s, &LinSubspace::full(4), 1e-8).coisotropic);
        // basis order (e1, f1, e2, f2): span{e1, f1, e2} is a hyperplane
        let hyper = e(4, &[0, 1, 2]);
        let rep = is_coisotropic(&s, &hyper, 1e-8);
        assert!(rep.coisotropic);
        assert_eq!(rep.orthogonal_dim, 1);
        let line = e(4, &[0]);
        let rep = is_coisotropic(&s, &line, 1e-8);
        assert!(!rep.coisotropic);
        assert_eq!(rep.orthogonal_dim, 3);
        assert_eq!(rep.defect, 2);
    }

    #[test]
    fn annihilator_trivial_cases() {
        let r = annihilator_lemma_check(&DMatrix::zeros(3, 3), &e(3, &[0]), 1e-10).unwrap();
        assert!(r.holds);
        assert_eq!(r.lhs_dim, 0);
        let r = annihilator_lemma_check(&DMatrix::identity(3, 3), &e(3, &[0]), 1e-10).unwrap();
        assert!(r.holds);
        assert_eq!(r.lhs_dim, 2);
    }

    #[test]
    fn quotient_examples() {
        let s = FormSpace::standard(2);
        let q = quotient_form(&s, &LinSubspace::full(4), 1e-8).unwrap();
        assert_eq!(q.dim(), 4);
        let q = quotient_form(&s, &e(4, &[0, 1, 2]), 1e-8).unwrap();
        assert_eq!(q.dim(), 2);
        assert!(q.form.is_nondegenerate());

        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = -1.0;
        let deg = FormSpace::new(w, 1e-10).unwrap();
        assert_eq!(deg.kernel_dim(), 2);
        assert_eq!(quotient_form(&deg, &LinSubspace::full(4), 1e-8).unwrap().dim(), 2);

        assert!(matches!(
            quotient_form(&s, &e(4, &[0]), 1e-8),
            Err(LabError::NotCoisotropic { defect: 2 })
        ));
    }

    #[test]
    fn stages_trivial_and_lagrangian() {
        let s = FormSpace::standard(2);
        let full = LinSubspace::full(4);
        let r = reduction_in_stages_check(&s, &full, &full, 1e-8).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.direct_dim, 4);

        // V = span{e1, f1, e2}, V^perp = span{e2}; W = span{e1, e2} is V^perp plus a
        // Lagrangian line of V / V^perp, so both reductions are zero-dimensional
        let v = e(4, &[0, 1, 2]);
        let w = e(4, &[0, 2]);
        let r = reduction_in_stages_check(&s, &v, &w, 1e-8).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.direct_dim, 0);
        assert_eq!(r.staged_dim, 0);
    }

    #[test]
    fn stages_preconditions() {
        let s = FormSpace::standard(2);
        let v = e(4, &[0, 1]);
        let w = e(4, &[2]);
        assert!(matches!(
            reduction_in_stages_check(&s, &v, &w, 1e-8),
            Err(LabError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn intersection_and_sum() {
        let a = e(4, &[0, 1]);
        let b = e(4, &[1, 2]);
        assert_eq!(a.intersection(&b, 1e-10).dim(), 1);
        assert_eq!(a.sum(&b, 1e-10).dim(), 3);
        assert_eq!(a.complement().dim(), 2);
    }

    #[test]
    fn non_skew_form_rejected() {
        assert!(FormSpace::new(DMatrix::identity(2, 2), 1e-10).is_err());
    }
}
