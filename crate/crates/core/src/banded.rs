//! Banded factorisations: Hermitian positive-definite Cholesky and a
//! partially pivoted LU for band matrices that are not definite.
//!
//! Cholesky storage is the lower band only, row-major with `bw + 1` slots per
//! row: slot `k` of row `i` holds entry `(i, i - k)`.

use thiserror::Error;

use crate::{CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandedError {
    #[error("banded factorisation lost positive definiteness at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("banded LU hit a zero pivot at column {0}")]
    Singular(usize),
}

/// Zeroes every entry with `|i - j| > bw`.
pub fn band_truncate(a: &CMat, bw: usize) -> CMat {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i.abs_diff(j) > bw {
                out[(i, j)] = C64::new(0.0, 0.0);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<C64>,
}

impl BandedCholesky {
    /// Factors the band of `a` (entries beyond `bw` are ignored). `a` is assumed
    /// Hermitian; only its lower band is read.
    pub fn factor(a: &CMat, bw: usize) -> Result<Self, BandedError> {
        let n = a.nrows();
        let bw = bw.min(n.saturating_sub(1));
        let w = bw + 1;
        let mut l = vec![C64::new(0.0, 0.0); n * w];
        for i in 0..n {
            for k in 0..=bw.min(i) {
                l[i * w + k] = a[(i, i - k)];
            }
        }
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[j * w].re;
            for k in lo..j {
                d -= l[j * w + (j - k)].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(BandedError::NotPositiveDefinite(j));
            }
            let djj = d.sqrt();
            l[j * w] = C64::new(djj, 0.0);
            for i in (j + 1)..n.min(j + bw + 1) {
                let lo_i = i.saturating_sub(bw);
                let mut s = l[i * w + (i - j)];
                for k in lo_i.max(lo)..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)].conj();
                }
                l[i * w + (i - j)] = s / djj;
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `A x = b` in place for one right-hand side.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w].re;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.l[k * w + (k - i)].conj() * b[k];
            }
            b[i] = s / self.l[i * w].re;
        }
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        out
    }
}

/// LU with partial pivoting for a matrix with `kl` sub- and `ku`
/// super-diagonals. Row swaps widen the upper factor to `kl + ku`.
///
/// Row `i` of the working array covers columns `i - kl ..= i + kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    u: Vec<C64>,
    mult: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    #[inline]
    fn at(&self, i: usize, c: usize) -> usize {
        i * Self::width(self.kl, self.ku) + c + self.kl - i
    }

    /// Factors the band of `a`; entries outside it are ignored.
    pub fn factor(a: &CMat, kl: usize, ku: usize) -> Result<Self, BandedError> {
        let n = a.nrows();
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let wd = Self::width(kl, ku);
        let mut f = Self {
            n,
            kl,
            ku,
            u: vec![C64::new(0.0, 0.0); n * wd],
            mult: vec![C64::new(0.0, 0.0); n * kl],
            piv: vec![0; n],
        };
        for i in 0..n {
            for c in i.saturating_sub(kl)..n.min(i + ku + 1) {
                let k = f.at(i, c);
                f.u[k] = a[(i, c)];
            }
        }
        for k in 0..n {
            let last = n.min(k + kl + 1);
            let right = n.min(k + kl + ku + 1);
            let mut p = k;
            let mut best = f.u[f.at(k, k)].norm();
            for i in (k + 1)..last {
                let v = f.u[f.at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(BandedError::Singular(k));
            }
            f.piv[k] = p;
            if p != k {
                for c in k..right {
                    let (x, y) = (f.at(k, c), f.at(p, c));
                    f.u.swap(x, y);
                }
            }
            let pivot = f.u[f.at(k, k)];
            for i in (k + 1)..last {
                let m = f.u[f.at(i, k)] / pivot;
                f.mult[k * kl + (i - k - 1)] = m;
                for c in (k + 1)..right {
                    let ukc = f.u[f.at(k, c)];
                    let ic = f.at(i, c);
                    f.u[ic] -= m * ukc;
                }
            }
        }
        Ok(f)
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for i in (k + 1)..n.min(k + kl + 1) {
                b[i] -= self.mult[k * kl + (i - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in (i + 1)..n.min(i + kl + self.ku + 1) {
                s -= self.u[self.at(i, c)] * b[c];
            }
            b[i] = s / self.u[self.at(i, i)];
        }
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn banded_spd(n: usize, bw: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if i - j <= bw {
                    let z = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                    a[(i, j)] = z;
                    a[(j, i)] = z.conj();
                }
            }
            a[(i, i)] = C64::new(2.0 * bw as f64 + 1.0, 0.0);
        }
        a
    }

    #[test]
    fn truncate_extremes() {
        let a = banded_spd(6, 5, 1);
        assert_eq!(band_truncate(&a, 5), a);
        let d = band_truncate(&a, 0);
        assert_eq!(d, CMat::from_diagonal(&a.diagonal()));
    }

    #[test]
    fn indefinite_reports_pivot() {
        let mut a = CMat::identity(4, 4);
        a[(2, 2)] = C64::new(-1.0, 0.0);
        assert_eq!(
            BandedCholesky::factor(&a, 1).unwrap_err(),
            BandedError::NotPositiveDefinite(2)
        );
    }

    #[test]
    fn lu_needs_pivoting() {
        let a = CMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 1.0].map(|x| C64::new(x, 0.0)));
        let b = CMat::from_fn(3, 1, |i, _| C64::new(i as f64 + 1.0, 0.0));
        let x = BandedLu::factor(&a, 1, 1).unwrap().solve(&b);
        assert!((&a * x - b).norm() < 1e-14);
        assert_eq!(BandedLu::factor(&CMat::zeros(2, 2), 1, 1).unwrap_err(), BandedError::Singular(0));
    }

    proptest! {
        #[test]
        fn lu_matches_dense_on_indefinite_bands(n in 1usize..40, kl in 0usize..6, ku in 0usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CMat::from_fn(n, n, |i, j| {
                if i > j + kl || j > i + ku { C64::new(0.0, 0.0) } else { C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) }
            });
            let b = CMat::from_fn(n, 2, |_, _| C64::new(rng.random(), rng.random()));
            if let Some(reference) = a.clone().lu().solve(&b) {
                let x = BandedLu::factor(&a, kl, ku).unwrap().solve(&b);
                let resid = (&a * &x - &b).norm();
                prop_assert!(resid <= 1e-8 * (a.norm() * x.norm()).max(1.0), "resid {resid} ref {}", reference.norm());
            }
        }

        #[test]
        fn matches_dense_solve(n in 1usize..40, bw in 0usize..8, seed in any::<u64>()) {
            let a = banded_spd(n, bw, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let b = CMat::from_fn(n, 2, |_, _| C64::new(rng.random(), rng.random()));
            let x = BandedCholesky::factor(&a, bw).unwrap().solve(&b);
            let reference = a.clone().lu().solve(&b).unwrap();
            prop_assert!((x - &reference).norm() <= 1e-10 * reference.norm().max(1.0));
        }
    }
}
