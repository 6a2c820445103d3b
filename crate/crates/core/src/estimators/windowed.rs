//! Beam-delay estimator and its windowed, band-truncated variant.

use crate::banded::{band_truncate, BandedCholesky, BandedLu};
use crate::dmrs::{DmrsAllocation, PilotGrid};
use crate::linalg::{dft_matrix, factor_hermitian, kron, trace_re, DIAGONAL_LOADING};
use crate::window::{make_window, WindowKind, WindowPair};
use crate::{CMat, CVec, SystemConfig, C64};

use super::{
    antenna_var, congruence_diag, interpolate_to_full, set_inputs, EstimatorError, EstimatorOptions,
    ScsiCorrelations,
};

/// Half-bandwidths kept in the delay- and beam-domain matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandSpec {
    pub b_tau: usize,
    pub b_a: usize,
}

impl BandSpec {
    pub fn full(n: usize, m: usize) -> Self {
        Self { b_tau: n.saturating_sub(1), b_a: m.saturating_sub(1) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WbceStats {
    pub banded_solves: usize,
    /// Truncated systems that were not positive definite and were solved by
    /// banded LU instead of banded Cholesky.
    pub fallbacks: usize,
    /// Truncated systems that were singular and were solved by dense LU.
    pub dense_fallbacks: usize,
}

fn diag_real(v: &[f64]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&x| C64::new(x, 0.0)))
}

/// `Fᴴ Λ C R Cᴴ Λ F` with `C Λ` folded into one diagonal.
fn delay_domain(r: &CMat, c: &CVec, eta: &[f64], f: &CMat) -> CMat {
    let d = c.component_mul(&diag_real(eta));
    let inner = congruence_diag(r, &d);
    f.adjoint() * inner * f
}

/// Delay- and beam-domain correlations of one user.
///
/// `r_f` is the user's frequency correlation restricted to its pilot comb and
/// `c` its cover diagonal. Without a window this is the plain beam-delay form.
pub fn beam_delay_correlations(
    r_f: &CMat,
    r_s: &CMat,
    c: &CVec,
    window: Option<&WindowPair>,
    cfg: &SystemConfig,
) -> (CMat, CMat) {
    let (n, m) = (cfg.n_pilot(), cfg.n_antennas());
    let ones_f = vec![1.0; n];
    let ones_s = vec![1.0; m];
    let (ef, es) = match window {
        Some(w) => (&w.eta_f[..], &w.eta_s[..]),
        None => (&ones_f[..], &ones_s[..]),
    };
    let fa = kron(&dft_matrix(cfg.m_v), &dft_matrix(cfg.m_h));
    let r_tau = delay_domain(r_f, c, ef, &dft_matrix(n));
    let ls = diag_real(es);
    let r_a = fa.adjoint() * congruence_diag(r_s, &ls) * &fa;
    (r_tau, r_a)
}

enum Solver {
    Dense(crate::linalg::LoadedCholesky),
    Banded(BandedCholesky),
    BandedLu(BandedLu),
    Lu(nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Solver {
    fn solve(&self, b: &CMat) -> CMat {
        match self {
            Self::Dense(c) => c.solve(b),
            Self::Banded(c) => c.solve(b),
            Self::BandedLu(c) => c.solve(b),
            Self::Lu(lu) => lu.solve(b).unwrap_or_else(|| CMat::zeros(b.nrows(), b.ncols())),
        }
    }
}

/// Factors `a + ε Ξ` with `ε = DIAGONAL_LOADING · tr(a) / tr(Ξ)`, where `Ξ` is
/// the window's noise shape (the identity for a rectangular window). With a band
/// both are truncated and a banded Cholesky is attempted; failure falls back to a
/// pivoted banded LU of the same matrix, then to dense LU.
fn factor(a: &CMat, xi: &CMat, band: Option<usize>, stats: &mut WbceStats) -> Result<Solver, EstimatorError> {
    let xi = maybe_band(xi.clone(), band);
    let a = maybe_band(a.clone(), band);
    let eps = DIAGONAL_LOADING * trace_re(&a).abs() / trace_re(&xi).abs().max(f64::MIN_POSITIVE);
    let t = a + xi * C64::new(eps, 0.0);
    match band {
        None => Ok(Solver::Dense(factor_hermitian(t)?)),
        Some(bw) => {
            stats.banded_solves += 1;
            match BandedCholesky::factor(&t, bw) {
                Ok(c) => Ok(Solver::Banded(c)),
                Err(e) => {
                    log::debug!("{e}; using banded LU");
                    stats.fallbacks += 1;
                    match BandedLu::factor(&t, bw, bw) {
                        Ok(f) => Ok(Solver::BandedLu(f)),
                        Err(e) => {
                            log::debug!("{e}; using dense LU");
                            stats.dense_fallbacks += 1;
                            Ok(Solver::Lu(t.lu()))
                        }
                    }
                }
            }
        }
    }
}

fn maybe_band(m: CMat, bw: Option<usize>) -> CMat {
    match bw {
        Some(b) => band_truncate(&m, b),
        None => m,
    }
}

/// Beam-delay estimator on the pilot comb.
///
/// `window = None` gives the unwindowed form; `band = None` keeps every matrix
/// dense and solves with a loaded Cholesky.
#[allow(clippy::too_many_arguments)]
pub fn beam_delay_pilot(
    grid: &PilotGrid,
    allocs: &[DmrsAllocation],
    scsi: &[ScsiCorrelations],
    noise_var: f64,
    cfg: &SystemConfig,
    opts: &EstimatorOptions,
    window: Option<&WindowPair>,
    band: Option<BandSpec>,
    stats: &mut WbceStats,
) -> Result<Vec<CMat>, EstimatorError> {
    let (n, m) = (cfg.n_pilot(), cfg.n_antennas());
    let rect;
    let w = match window {
        Some(w) => w,
        None => {
            rect = make_window(WindowKind::Rectangular, n, cfg.m_v, cfg.m_h);
            &rect
        }
    };
    let f = dft_matrix(n);
    let fa = kron(&dft_matrix(cfg.m_v), &dft_matrix(cfg.m_h));
    let (bt, ba) = (band.map(|b| b.b_tau), band.map(|b| b.b_a));
    let eta_f = diag_real(&w.eta_f);
    let eta_s = diag_real(&w.eta_s);
    let fv = opts.freq_var(noise_var, cfg.t_p);
    let mut out = vec![CMat::zeros(0, 0); allocs.len()];
    for set in set_inputs(grid, allocs, scsi, cfg)? {
        let r_tau: Vec<CMat> = set
            .r
            .iter()
            .zip(&set.c)
            .map(|(r, c)| maybe_band(delay_domain(r, c, &w.eta_f, &f), bt))
            .collect();
        let mut a = maybe_band(w.xi_f.clone(), bt) * C64::new(fv, 0.0);
        for rt in &r_tau {
            a += rt;
        }
        let solver = factor(&a, &w.xi_f, bt, stats)?;
        let mut wy = set.y.clone();
        for (r, mut row) in wy.row_iter_mut().enumerate() {
            row *= eta_f[r];
        }
        let x = solver.solve(&(f.adjoint() * wy));
        for (pos, &j) in set.members.iter().enumerate() {
            let mut h = &f * (&r_tau[pos] * &x);
            for (r, mut row) in h.row_iter_mut().enumerate() {
                row *= set.c[pos][r].conj() / eta_f[r];
            }
            let av = antenna_var(opts, noise_var, pos, &set.r, &set.c, fv)?;
            let r_a = maybe_band(
                fa.adjoint() * congruence_diag(&scsi[j].r_s, &eta_s) * &fa,
                ba,
            );
            let a_s = &r_a + maybe_band(w.xi_s.clone(), ba) * C64::new(av, 0.0);
            let solver_s = factor(&a_s, &w.xi_s, ba, stats)?;
            let mut ht = h.transpose();
            for (r, mut row) in ht.row_iter_mut().enumerate() {
                row *= eta_s[r];
            }
            let xs = solver_s.solve(&(fa.adjoint() * ht));
            let mut gt = &fa * (&r_a * xs);
            for (r, mut row) in gt.row_iter_mut().enumerate() {
                row /= eta_s[r];
            }
            out[j] = gt.transpose();
        }
        debug_assert_eq!(x.nrows(), n);
        debug_assert_eq!(eta_s.len(), m);
    }
    Ok(out)
}

/// SA-WBCE: windowed, band-truncated beam-delay estimation followed by
/// interpolation onto all `n_c` subcarriers.
#[allow(clippy::too_many_arguments)]
pub fn sa_wbce(
    grid: &PilotGrid,
    allocs: &[DmrsAllocation],
    scsi: &[ScsiCorrelations],
    noise_var: f64,
    window: &WindowPair,
    band: BandSpec,
    cfg: &SystemConfig,
    opts: &EstimatorOptions,
) -> Result<(Vec<CMat>, WbceStats), EstimatorError> {
    let mut stats = WbceStats::default();
    let pilot = beam_delay_pilot(grid, allocs, scsi, noise_var, cfg, opts, Some(window), Some(band), &mut stats)?;
    let full = pilot
        .iter()
        .zip(allocs)
        .map(|(h, a)| interpolate_to_full(h, &grid.groups[a.group].pilot_idx, cfg.n_c))
        .collect();
    Ok((full, stats))
}
