//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, Dyn};
use thiserror::Error;

use crate::{CMat, CVec, C64};

/// Relative diagonal loading added before every Hermitian inversion.
pub const DIAGONAL_LOADING: f64 = 1e-10;
/// Condition-number ceiling for the loaded Hermitian systems.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("ill-conditioned system (estimated condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Unitary DFT matrix, `[F]_{ij} = exp(-j 2 pi i j / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |i, j| {
        let k = (i * j) % n;
        C64::from_polar(scale, -2.0 * std::f64::consts::PI * k as f64 / n as f64)
    })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Kronecker product of two vectors, first factor major.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    CVec::from_fn(a.len() * b.len(), |i, _| a[i / b.len()] * b[i % b.len()])
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// `‖a - b‖_F / ‖b‖_F`, or the absolute error when `b` vanishes.
pub fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    let den = b.norm();
    let num = (a - b).norm();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Cholesky factor of a Hermitian matrix after relative diagonal loading.
#[derive(Debug, Clone)]
pub struct LoadedCholesky {
    pub chol: Cholesky<C64, Dyn>,
    /// `(max L_ii / min L_ii)²`, a cheap lower estimate of the condition number.
    pub cond_estimate: f64,
}

impl LoadedCholesky {
    pub fn is_ill_conditioned(&self) -> bool {
        self.cond_estimate > MAX_CONDITION
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }
}

/// Factors `a + DIAGONAL_LOADING * tr(a) / dim * I`. Ill-conditioning is reported
/// through [`LoadedCholesky::cond_estimate`] and logged, not treated as an error.
pub fn loaded_cholesky(a: &CMat) -> Result<LoadedCholesky, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::Dimension(format!("{}x{} not square", n, a.ncols())));
    }
    let mut m = hermitian_part(a);
    let load = DIAGONAL_LOADING * trace_re(&m).abs() / n.max(1) as f64;
    for i in 0..n {
        m[(i, i)] += C64::new(load, 0.0);
    }
    factor_hermitian(m)
}

/// Cholesky factor of `a` as given (the Hermitian part is taken, no loading).
pub fn factor_hermitian(a: CMat) -> Result<LoadedCholesky, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!("{}x{} not square", a.nrows(), a.ncols())));
    }
    let m = hermitian_part(&a);
    let chol = Cholesky::new(m).ok_or(LinalgError::NotPositiveDefinite)?;
    let diag = chol.l_dirty().diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in diag.iter() {
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-8 * d.re {
            return Err(LinalgError::NotPositiveDefinite);
        }
        lo = lo.min(d.re);
        hi = hi.max(d.re);
    }
    let cond_estimate = (hi / lo).powi(2);
    if cond_estimate > MAX_CONDITION {
        log::debug!("ill-conditioned Hermitian system, cond ~ {cond_estimate:.3e}");
    }
    Ok(LoadedCholesky { chol, cond_estimate })
}

/// Solves `a x = b` for Hermitian PSD `a` with diagonal loading.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat, LinalgError> {
    Ok(loaded_cholesky(a)?.solve(b))
}

/// Like [`hermitian_solve`] but rejects systems whose estimated condition
/// number exceeds [`MAX_CONDITION`].
pub fn hermitian_solve_checked(a: &CMat, b: &CMat) -> Result<CMat, LinalgError> {
    let f = loaded_cholesky(a)?;
    if f.is_ill_conditioned() {
        return Err(LinalgError::IllConditioned(f.cond_estimate));
    }
    Ok(f.solve(b))
}

/// Pseudo-inverse through the SVD with relative cutoff [`PINV_RCOND`].
///
/// Returns the pseudo-inverse together with the 2-norm condition number of `a`
/// (infinite when `a` is rank deficient).
pub fn pinv(a: &CMat) -> (CMat, f64) {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return (CMat::zeros(c, r), f64::INFINITY);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cut = PINV_RCOND * smax;
    let mut out = CMat::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let vk = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk) * C64::new(1.0 / s, 0.0);
        }
    }
    let cond = if smin > 0.0 && r.min(c) == svd.singular_values.len() {
        smax / smin
    } else {
        f64::INFINITY
    };
    (out, cond)
}

/// Eigen-decomposition of a general complex square matrix.
///
/// Eigenvalues come from the complex Schur form `A = Q T Qᴴ`; eigenvectors are
/// recovered by back-substitution on `T` and normalised to unit 2-norm. Column `k`
/// of the returned matrix pairs with eigenvalue `k`.
pub fn eig_general(a: &CMat) -> (Vec<C64>, CMat) {
    let n = a.nrows();
    let (q, t) = a.clone().schur().unpack();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let mut vals = Vec::with_capacity(n);
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        vals.push(lambda);
        y[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for m in (j + 1)..=k {
                acc += t[(j, m)] * y[(m, k)];
            }
            let mut den = t[(j, j)] - lambda;
            if den.norm() < tiny {
                den = C64::new(tiny, 0.0);
            }
            y[(j, k)] = -acc / den;
        }
    }
    let mut vecs = q * y;
    for mut col in vecs.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= C64::new(nrm, 0.0);
        }
    }
    (vals, vecs)
}

/// Leading `rank` eigenvectors of a Hermitian positive semi-definite matrix.
///
/// Subspace iteration on `rank + 8` vectors seeded with the largest columns of
/// `g`, followed by Rayleigh–Ritz. Stops when the Ritz residual falls below
/// `1e-14` of the top eigenvalue or after 500 sweeps.
pub fn leading_eigvecs(g: &CMat, rank: usize) -> CMat {
    let n = g.nrows();
    let rank = rank.min(n);
    let p = (rank + 8).min(n);
    if p == n {
        let eig = hermitian_part(g).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        return CMat::from_fn(n, rank, |i, j| eig.eigenvectors[(i, order[j])]);
    }
    let mut by_norm: Vec<(f64, usize)> = g.column_iter().enumerate().map(|(j, c)| (c.norm(), j)).collect();
    by_norm.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut v = CMat::from_fn(n, p, |i, j| g[(i, by_norm[j].1)]);
    for j in 0..p {
        // Break exact ties between seeded columns.
        v[(j * 7 % n, j)] += C64::new(1e-3 * (1.0 + by_norm[0].0), 0.0);
    }
    let mut q = v.qr().q();
    let mut best = CMat::zeros(n, rank);
    for _ in 0..500 {
        let z = g * &q;
        let t = hermitian_part(&(q.adjoint() * &z));
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let w = CMat::from_fn(p, rank, |i, j| eig.eigenvectors[(i, order[j])]);
        best = &q * &w;
        let top = eig.eigenvalues[order[0]].abs().max(f64::MIN_POSITIVE);
        let gz = &z * &w;
        let mut resid = 0.0f64;
        for (j, &k) in order.iter().take(rank).enumerate() {
            let r = gz.column(j) - best.column(j) * C64::new(eig.eigenvalues[k], 0.0);
            resid = resid.max(r.norm());
        }
        if resid <= 1e-14 * top {
            break;
        }
        q = z.qr().q();
    }
    best
}

mod lapacke {
    use crate::C64;

    pub const COL_MAJOR: i32 = 102;

    #[link(name = "lapacke")]
    extern "C" {
        pub fn LAPACKE_zheevd(layout: i32, jobz: u8, uplo: u8, n: i32, a: *mut C64, lda: i32, w: *mut f64) -> i32;
    }
}

/// All eigenvalues of a Hermitian matrix, ascending, from the lower triangle
/// (LAPACK `zheevd`).
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigenvalues needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let mut work = a.clone();
    let mut w = vec![0.0; n];
    let ni = i32::try_from(n).expect("matrix too large for LAPACK");
    // SAFETY: `work` is a contiguous column-major n×n buffer with lda = n and
    // `w` holds n doubles; zheevd with jobz = 'N' touches nothing else.
    let info = unsafe {
        lapacke::LAPACKE_zheevd(lapacke::COL_MAJOR, b'N', b'L', ni, work.as_mut_ptr(), ni, w.as_mut_ptr())
    };
    if info != 0 {
        log::warn!("zheevd info {info}; using nalgebra eigenvalues");
        let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        return ev;
    }
    w
}

/// `xᴴ x`, upper triangle by column dot products and mirrored.
pub fn adjoint_gram(x: &CMat) -> CMat {
    let n = x.ncols();
    let mut g = CMat::zeros(n, n);
    for j in 0..n {
        let cj = x.column(j);
        let cj = cj.as_slice();
        for i in 0..=j {
            let ci = x.column(i);
            let (mut re, mut im) = (0.0, 0.0);
            for (a, b) in ci.as_slice().iter().zip(cj) {
                re += a.re * b.re + a.im * b.im;
                im += a.re * b.im - a.im * b.re;
            }
            g[(i, j)] = C64::new(re, im);
            g[(j, i)] = C64::new(re, -im);
        }
    }
    g
}

/// Singular values of a (possibly wide or tall) matrix, computed from the
/// eigenvalues of the smaller Gram matrix. Leading singular vectors are
/// produced on demand.
#[derive(Debug, Clone)]
pub struct GramSvd {
    /// All `min(rows, cols)` singular values, descending.
    pub singular_values: Vec<f64>,
    gram: CMat,
    left_side: bool,
}

impl GramSvd {
    pub fn new(x: &CMat) -> Self {
        let (r, c) = x.shape();
        let left_side = r <= c;
        let gram = if left_side { adjoint_gram(&x.adjoint()) } else { adjoint_gram(x) };
        Self::from_gram(gram, left_side)
    }

    /// From a precomputed Gram matrix: `x xᴴ` when `left_side`, else `xᴴ x`.
    pub fn from_gram(gram: CMat, left_side: bool) -> Self {
        let gram = hermitian_part(&gram);
        let mut ev = hermitian_eigenvalues(&gram);
        ev.reverse();
        Self {
            singular_values: ev.into_iter().map(|e| e.max(0.0).sqrt()).collect(),
            gram,
            left_side,
        }
    }

    /// Leading `rank` singular triplets `(U, σ, V)` of `x` with `x ≈ U diag(σ) Vᴴ`.
    pub fn leading(&self, x: &CMat, rank: usize) -> (CMat, Vec<f64>, CMat) {
        let rank = rank.min(self.singular_values.len());
        let sig: Vec<f64> = self.singular_values[..rank].to_vec();
        let basis = leading_eigvecs(&self.gram, rank);
        let mut other = if self.left_side {
            x.adjoint() * &basis
        } else {
            x * &basis
        };
        for (k, mut col) in other.column_iter_mut().enumerate() {
            let s = sig[k];
            if s > 0.0 {
                col /= C64::new(s, 0.0);
            }
        }
        if self.left_side {
            (basis, sig, other)
        } else {
            (other, sig, basis)
        }
    }
}
