//! Fourth-order snapshot tensor, its mode-3 matricization and spatial smoothing.

use crate::linalg::adjoint_gram;
use crate::{CMat, C64};

use super::VstdError;

/// Dense `N_d × M_v × M_h × W` tensor, first index fastest in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    data: Vec<C64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![C64::new(0.0, 0.0); dims.iter().product()] }
    }

    fn offset(&self, i: [usize; 4]) -> usize {
        let d = self.dims;
        i[0] + d[0] * (i[1] + d[1] * (i[2] + d[2] * i[3]))
    }

    pub fn get(&self, i: [usize; 4]) -> C64 {
        self.data[self.offset(i)]
    }

    pub fn set(&mut self, i: [usize; 4], v: C64) {
        let o = self.offset(i);
        self.data[o] = v;
    }

    pub fn conj(&self) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|z| z.conj()).collect() }
    }
}

/// Reads entry `(n, m_v, m_h, w)` from row `n·M + m_v·M_h + m_h`, column `w`.
pub fn tensorize(block: &CMat, n_d: usize, m_v: usize, m_h: usize) -> Result<Tensor4, VstdError> {
    let m = m_v * m_h;
    if block.nrows() != n_d * m || block.ncols() == 0 {
        return Err(VstdError::Dimension(format!(
            "block is {}x{}, expected {}xW",
            block.nrows(),
            block.ncols(),
            n_d * m
        )));
    }
    let w = block.ncols();
    let mut t = Tensor4::zeros([n_d, m_v, m_h, w]);
    for c in 0..w {
        for n in 0..n_d {
            for v in 0..m_v {
                for h in 0..m_h {
                    t.set([n, v, h, c], block[(n * m + v * m_h + h, c)]);
                }
            }
        }
    }
    Ok(t)
}

/// `X^[3]`: rows nest the first three modes with the third fastest, the last
/// mode indexes columns.
pub fn matricize_x3(t: &Tensor4) -> CMat {
    let [n_d, m_v, m_h, w] = t.dims;
    CMat::from_fn(n_d * m_v * m_h, w, |r, c| {
        let h = r % m_h;
        let v = (r / m_h) % m_v;
        let n = r / (m_h * m_v);
        t.get([n, v, h, c])
    })
}

/// Window sizes for the three smoothed modes, `K_s + L_s = dim_s + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingParams {
    pub k: [usize; 3],
    pub l: [usize; 3],
}

impl SmoothingParams {
    pub fn new(k: [usize; 3], dims: [usize; 3]) -> Result<Self, VstdError> {
        let mut l = [0; 3];
        for s in 0..3 {
            if k[s] == 0 || k[s] > dims[s] {
                return Err(VstdError::Smoothing(format!(
                    "K{} = {} outside [1, {}]",
                    s + 1,
                    k[s],
                    dims[s]
                )));
            }
            l[s] = dims[s] + 1 - k[s];
        }
        Ok(Self { k, l })
    }

    pub fn rows(&self) -> usize {
        self.k.iter().product()
    }

    pub fn blocks(&self) -> usize {
        self.l.iter().product()
    }
}

/// Spatially smoothed matrix `X_S`, `(K1 K2 K3) × (L1 L2 L3 W)`.
///
/// Row `(k1 K2 + k2) K3 + k3`, column `((l1 L2 + l2) L3 + l3) W + w` holds
/// `X^[3]` at mode offsets `(l1 + k1, l2 + k2, l3 + k3)` and column `w`.
pub fn spatial_smooth(x3: &CMat, dims: [usize; 3], p: &SmoothingParams) -> CMat {
    let w = x3.ncols();
    let [k1, k2, k3] = p.k;
    let [_, l2, l3] = p.l;
    let (mv, mh) = (dims[1], dims[2]);
    CMat::from_fn(p.rows(), p.blocks() * w, |r, c| {
        let (a3, a2, a1) = (r % k3, (r / k3) % k2, r / (k3 * k2));
        let ww = c % w;
        let blk = c / w;
        let (b3, b2, b1) = (blk % l3, (blk / l3) % l2, blk / (l3 * l2));
        let row = ((a1 + b1) * mv + (a2 + b2)) * mh + (a3 + b3);
        debug_assert!(a1 < k1);
        x3[(row, ww)]
    })
}

/// `X_S X_Sᴴ` accumulated from `X^[3] X^[3]ᴴ` block by block, without forming `X_S`.
pub fn smoothed_gram(x3: &CMat, dims: [usize; 3], p: &SmoothingParams) -> CMat {
    let r3 = adjoint_gram(&x3.adjoint());
    let [k1, k2, k3] = p.k;
    let [l1, l2, l3] = p.l;
    let (mv, mh) = (dims[1], dims[2]);
    let rows: Vec<usize> = (0..k1)
        .flat_map(|a1| (0..k2).flat_map(move |a2| (0..k3).map(move |a3| (a1 * mv + a2) * mh + a3)))
        .collect();
    let kk = rows.len();
    let mut g = CMat::zeros(kk, kk);
    for b1 in 0..l1 {
        for b2 in 0..l2 {
            for b3 in 0..l3 {
                let off = (b1 * mv + b2) * mh + b3;
                for (j, &cj) in rows.iter().enumerate() {
                    let src = r3.column(cj + off);
                    let mut dst = g.column_mut(j);
                    for (i, &ri) in rows.iter().enumerate() {
                        dst[i] += src[ri + off];
                    }
                }
            }
        }
    }
    g
}
