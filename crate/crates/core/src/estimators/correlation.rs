//! Frequency and antenna correlations implied by a path set.

use crate::scene::{steering_antenna, steering_delay, PathSet};
use crate::{CMat, SystemConfig, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ScsiCorrelations {
    /// `Σ ρ_l b bᴴ` over all `n_c` subcarriers.
    pub r_f: CMat,
    /// `Σ ρ_l a aᴴ`.
    pub r_s: CMat,
    pub paths: PathSet,
}

impl ScsiCorrelations {
    /// `P R_f Pᵀ` for the given subcarrier subset.
    pub fn restricted_freq(&self, idx: &[usize]) -> CMat {
        CMat::from_fn(idx.len(), idx.len(), |r, c| self.r_f[(idx[r], idx[c])])
    }
}

pub fn build_correlations(paths: &PathSet, cfg: &SystemConfig) -> ScsiCorrelations {
    let (n, m) = (cfg.n_c, cfg.n_antennas());
    let mut r_f = CMat::zeros(n, n);
    let mut r_s = CMat::zeros(m, m);
    for p in &paths.paths {
        let w = C64::new(p.rho, 0.0);
        let b = steering_delay(p.tau, n, cfg.delta_f);
        let a = steering_antenna(p.theta, p.phi, cfg.m_v, cfg.m_h);
        r_f += (&b * b.adjoint()) * w;
        r_s += (&a * a.adjoint()) * w;
    }
    ScsiCorrelations { r_f, r_s, paths: paths.clone() }
}
