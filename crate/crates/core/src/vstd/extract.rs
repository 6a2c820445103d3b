//! Shift-invariance eigen-decomposition, factor recovery and parameter mapping.

use std::f64::consts::PI;

use crate::linalg::{eig_general, pinv};
use crate::scene::PathParams;
use crate::{CMat, CVec, C64};

use super::tensor::SmoothingParams;
use super::VstdError;

/// `pinv(U1)` is refused above this condition number.
pub const MAX_SHIFT_CONDITION: f64 = 1e10;

/// Eigenvalues and eigenvectors of `U1⁺ U2`, where `U1` drops the last `K2 K3`
/// rows of `U_s` and `U2` drops the first `K2 K3`.
pub fn shift_invariance_evd(u_s: &CMat, p: &SmoothingParams) -> Result<(Vec<C64>, CMat), VstdError> {
    let stride = p.k[1] * p.k[2];
    let rows = (p.k[0] - 1) * stride;
    let u1 = u_s.rows(0, rows).into_owned();
    let u2 = u_s.rows(stride, rows).into_owned();
    let (u1_pinv, cond) = pinv(&u1);
    if !(cond <= MAX_SHIFT_CONDITION) {
        return Err(VstdError::RankDeficient(cond));
    }
    Ok(eig_general(&(u1_pinv * u2)))
}

fn vander(z: C64, n: usize) -> CVec {
    CVec::from_fn(n, |i, _| z.powu(i as u32))
}

fn unit(z: C64) -> Option<C64> {
    let r = z.norm();
    (r > 1e-300 && r.is_finite()).then(|| z / r)
}

/// Least-squares ratio between consecutive rows of `v` (`rows × cols`,
/// row-major in a flat slice), normalised to the unit circle.
fn shift_quotient(v: &[C64], rows: usize, cols: usize) -> Option<C64> {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for r in 0..rows - 1 {
        for c in 0..cols {
            let a = v[r * cols + c];
            num += a.conj() * v[(r + 1) * cols + c];
            den += a.norm_sqr();
        }
    }
    if den <= 0.0 {
        return None;
    }
    unit(num / den)
}

/// `(1/‖b‖²) bᴴ G` with `G` stored row-major as `b.len() × cols`.
fn contract(g: &[C64], b: &CVec, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); cols];
    let scale = 1.0 / b.norm_squared();
    for (r, br) in b.iter().enumerate() {
        let w = br.conj() * scale;
        for c in 0..cols {
            out[c] += w * g[r * cols + c];
        }
    }
    out
}

/// Generators of one path: the per-mode Vandermonde roots and the snapshot gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGenerators {
    pub z: [C64; 3],
    /// `b4`, one entry per snapshot.
    pub gains: Vec<C64>,
    /// `‖U m − c a‖ / ‖U m‖` for the recovered steering vector `a`.
    pub fit_residual: f64,
}

impl PathGenerators {
    pub fn power(&self) -> f64 {
        self.gains.iter().map(|g| g.norm_sqr()).sum::<f64>() / self.gains.len() as f64
    }
}

/// Factor recovery from the signal subspace `u_s` of `x_s` and the eigenvectors
/// `m` of the shift-invariance problem.
pub fn extract_generators(
    x_s: &CMat,
    u_s: &CMat,
    z1: &[C64],
    m: &CMat,
    p: &SmoothingParams,
    w: usize,
) -> Result<Vec<PathGenerators>, VstdError> {
    let [k1, k2, k3] = p.k;
    let [l1, l2, l3] = p.l;
    let rank = z1.len();
    let mut m_scaled = m.clone();
    let mut zs = Vec::with_capacity(rank);
    let mut residuals = Vec::with_capacity(rank);
    for l in 0..rank {
        let z1u = unit(z1[l]).ok_or(VstdError::PathFailure(l))?;
        let g = u_s * m.column(l);
        let b1 = vander(z1u, k1);
        let v23 = contract(g.as_slice(), &b1, k2 * k3);
        let z2 = shift_quotient(&v23, k2, k3).ok_or(VstdError::PathFailure(l))?;
        let b2 = vander(z2, k2);
        let v3 = contract(&v23, &b2, k3);
        let z3 = shift_quotient(&v3, k3, 1).ok_or(VstdError::PathFailure(l))?;
        let a = crate::linalg::kron_vec(&crate::linalg::kron_vec(&b1, &b2), &vander(z3, k3));
        let c = a.dotc(&g) / a.norm_squared();
        if !(c.norm() > 0.0) || !c.is_finite() {
            return Err(VstdError::PathFailure(l));
        }
        let resid = (&g - &a * c).norm() / g.norm().max(f64::MIN_POSITIVE);
        let mut col = m_scaled.column_mut(l);
        col /= c;
        zs.push([z1u, z2, z3]);
        residuals.push(resid);
    }
    let n = m_scaled
        .clone()
        .try_inverse()
        .ok_or(VstdError::RankDeficient(f64::INFINITY))?
        .transpose();
    let b = x_s.transpose() * u_s.map(|z| z.conj()) * n;
    let nl = l1 * l2 * l3;
    let mut out = Vec::with_capacity(rank);
    for l in 0..rank {
        let [z1, z2, z3] = zs[l];
        let bl = crate::linalg::kron_vec(
            &crate::linalg::kron_vec(&vander(z1, l1), &vander(z2, l2)),
            &vander(z3, l3),
        );
        let col = b.column(l);
        let mut gains = vec![C64::new(0.0, 0.0); w];
        for (lidx, blv) in bl.iter().enumerate() {
            let wgt = blv.conj() / nl as f64;
            for (ww, gw) in gains.iter_mut().enumerate() {
                *gw += wgt * col[lidx * w + ww];
            }
        }
        out.push(PathGenerators { z: zs[l], gains, fit_residual: residuals[l] });
    }
    Ok(out)
}

/// Counts of out-of-range conversions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClipCounts {
    pub theta: usize,
    pub phi: usize,
    /// Negative delays wrapped by one period `1/Δf`.
    pub tau_wrapped: usize,
}

/// Maps generators to `(τ, θ, φ, ρ)`, sorted by descending power.
pub fn params_from_generators(gens: &[PathGenerators], delta_f: f64) -> (Vec<PathParams>, ClipCounts) {
    let mut clips = ClipCounts::default();
    let mut paths: Vec<PathParams> = gens
        .iter()
        .map(|g| {
            let mut tau = -g.z[0].arg() / (2.0 * PI * delta_f);
            if tau < 0.0 {
                tau += 1.0 / delta_f;
                clips.tau_wrapped += 1;
            }
            let ct = -g.z[1].arg() / PI;
            if ct.abs() > 1.0 {
                clips.theta += 1;
            }
            let theta = ct.clamp(-1.0, 1.0).acos();
            let s = theta.sin();
            let cp = if s > 0.0 { -g.z[2].arg() / (PI * s) } else { 0.0 };
            if cp.abs() > 1.0 {
                clips.phi += 1;
            }
            PathParams::new(tau, theta, cp.clamp(-1.0, 1.0).acos(), g.power())
        })
        .collect();
    paths.sort_by(|a, b| b.rho.total_cmp(&a.rho));
    (paths, clips)
}
