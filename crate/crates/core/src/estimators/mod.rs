//! SCSI-assisted Bayesian channel estimation.
//!
//! [`sa_bce`] runs in the antenna-frequency domain. [`windowed`] holds the
//! beam-delay form and its windowed, band-truncated variant.

pub mod correlation;
pub mod interp;
pub mod windowed;

use thiserror::Error;

use crate::dmrs::{decoupled_ls, freq_occ_diag, DmrsAllocation, DmrsError, OccSet, PilotGrid};
use crate::linalg::{loaded_cholesky, trace_re, LinalgError};
use crate::{CMat, CVec, SystemConfig, C64};

pub use correlation::{build_correlations, ScsiCorrelations};
pub use interp::interpolate_to_full;
pub use windowed::{sa_wbce, BandSpec, WbceStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dmrs(#[from] DmrsError),
    #[error("expected {want} SCSI entries, got {got}")]
    ScsiCount { want: usize, got: usize },
}

/// Noise variance used in the frequency-domain stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreqNoise {
    /// `σ² / T_p`, the variance left after time-OCC averaging.
    #[default]
    PostAveraging,
    /// Raw per-symbol `σ²`.
    Raw,
}

/// Noise variance used in the antenna-domain stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AntennaNoise {
    /// Raw per-symbol `σ²`.
    #[default]
    Plain,
    /// Per-entry residual of the frequency stage, `tr(R_e) / N`.
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EstimatorOptions {
    pub freq_noise: FreqNoise,
    pub antenna_noise: AntennaNoise,
}

impl EstimatorOptions {
    pub fn freq_var(&self, noise_var: f64, t_p: usize) -> f64 {
        match self.freq_noise {
            FreqNoise::PostAveraging => noise_var / t_p as f64,
            FreqNoise::Raw => noise_var,
        }
    }
}

/// Allocation indices grouped by (CDM group, OCC set), in allocation order.
pub fn occ_sets(allocs: &[DmrsAllocation]) -> Vec<(usize, OccSet, Vec<usize>)> {
    let mut out: Vec<(usize, OccSet, Vec<usize>)> = Vec::new();
    for (j, a) in allocs.iter().enumerate() {
        match out.iter_mut().find(|(g, s, _)| *g == a.group && *s == a.occ_set) {
            Some(e) => e.2.push(j),
            None => out.push((a.group, a.occ_set, vec![j])),
        }
    }
    out
}

fn scale_rows(m: &CMat, d: &CVec, conj: bool) -> CMat {
    let mut out = m.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row *= if conj { d[r].conj() } else { d[r] };
    }
    out
}

/// `C R Cᴴ` for diagonal `C = diag(c)`.
pub(crate) fn congruence_diag(r: &CMat, c: &CVec) -> CMat {
    CMat::from_fn(r.nrows(), r.ncols(), |i, j| c[i] * r[(i, j)] * c[j].conj())
}

/// `Σ_k C_k R_k C_kᴴ + σ² I`.
fn observation_covariance(r: &[CMat], c: &[CVec], sigma2: f64) -> CMat {
    let n = r[0].nrows();
    let mut g = CMat::identity(n, n) * C64::new(sigma2, 0.0);
    for (rk, ck) in r.iter().zip(c) {
        g += congruence_diag(rk, ck);
    }
    g
}

/// Frequency-domain MMSE separation of one user from the decoupled signal
/// `y = Σ_k C_k H_k + noise`:
/// `Ĥ_u = R_u C_uᴴ (Σ_k C_k R_k C_kᴴ + σ² I)⁻¹ y`.
pub fn freq_mmse_decompose(
    y: &CMat,
    target: usize,
    r: &[CMat],
    c: &[CVec],
    sigma2: f64,
) -> Result<CMat, EstimatorError> {
    let g = loaded_cholesky(&observation_covariance(r, c, sigma2))?;
    let x = g.solve(y);
    Ok(&r[target] * scale_rows(&x, &c[target], true))
}

/// `tr(R_u - R_u C_uᴴ G⁻¹ C_u R_u)` for the frequency stage.
pub fn freq_error_trace(target: usize, r: &[CMat], c: &[CVec], sigma2: f64) -> Result<f64, EstimatorError> {
    let g = loaded_cholesky(&observation_covariance(r, c, sigma2))?;
    let cr = scale_rows(&r[target], &c[target], false);
    let q = g.solve(&cr);
    Ok(trace_re(&r[target]) - trace_re(&(cr.adjoint() * q)))
}

/// Antenna-domain MMSE: `H̃ᵀ = R_s (R_s + σ² I)⁻¹ Ĥᵀ`.
pub fn antenna_mmse(h: &CMat, r_s: &CMat, sigma2: f64) -> Result<CMat, EstimatorError> {
    let m = r_s.nrows();
    let a = r_s + CMat::identity(m, m) * C64::new(sigma2, 0.0);
    // (R_s + σ²I)⁻¹ R_s equals R_s (R_s + σ²I)⁻¹ since both are functions of R_s.
    let w = loaded_cholesky(&a)?.solve(r_s);
    Ok(h * w.transpose())
}

pub(crate) fn antenna_var(
    opts: &EstimatorOptions,
    noise_var: f64,
    target: usize,
    r: &[CMat],
    c: &[CVec],
    freq_var: f64,
) -> Result<f64, EstimatorError> {
    Ok(match opts.antenna_noise {
        AntennaNoise::Plain => noise_var,
        AntennaNoise::Propagated => {
            (freq_error_trace(target, r, c, freq_var)? / r[target].nrows() as f64).max(0.0)
        }
    })
}

/// Per OCC set: the decoupled signal, the restricted frequency correlations and
/// the cover diagonals of its members.
pub(crate) struct SetInputs {
    pub members: Vec<usize>,
    pub y: CMat,
    pub r: Vec<CMat>,
    pub c: Vec<CVec>,
}

pub(crate) fn set_inputs(
    grid: &PilotGrid,
    allocs: &[DmrsAllocation],
    scsi: &[ScsiCorrelations],
    cfg: &SystemConfig,
) -> Result<Vec<SetInputs>, EstimatorError> {
    if scsi.len() != allocs.len() {
        return Err(EstimatorError::ScsiCount { want: allocs.len(), got: scsi.len() });
    }
    let n = cfg.n_pilot();
    occ_sets(allocs)
        .into_iter()
        .map(|(g, _, members)| {
            let block = &grid.groups[g];
            let y = decoupled_ls(block, &allocs[members[0]]);
            let r = members.iter().map(|&j| scsi[j].restricted_freq(&block.pilot_idx)).collect();
            let c = members
                .iter()
                .map(|&j| freq_occ_diag(allocs[j].shift, n))
                .collect::<Result<_, _>>()?;
            Ok(SetInputs { members, y, r, c })
        })
        .collect()
}

/// SA-BCE on the pilot subcarriers: one `N × M` estimate per allocation.
pub fn sa_bce_pilot(
    grid: &PilotGrid,
    allocs: &[DmrsAllocation],
    scsi: &[ScsiCorrelations],
    noise_var: f64,
    cfg: &SystemConfig,
    opts: &EstimatorOptions,
) -> Result<Vec<CMat>, EstimatorError> {
    let mut out = vec![CMat::zeros(0, 0); allocs.len()];
    let fv = opts.freq_var(noise_var, cfg.t_p);
    for set in set_inputs(grid, allocs, scsi, cfg)? {
        let g = loaded_cholesky(&observation_covariance(&set.r, &set.c, fv))?;
        let x = g.solve(&set.y);
        for (pos, &j) in set.members.iter().enumerate() {
            let h = &set.r[pos] * scale_rows(&x, &set.c[pos], true);
            let av = antenna_var(opts, noise_var, pos, &set.r, &set.c, fv)?;
            out[j] = antenna_mmse(&h, &scsi[j].r_s, av)?;
        }
    }
    Ok(out)
}

/// Full SA-BCE: pilot-domain estimation followed by interpolation to `n_c` rows.
pub fn sa_bce(
    grid: &PilotGrid,
    allocs: &[DmrsAllocation],
    scsi: &[ScsiCorrelations],
    noise_var: f64,
    cfg: &SystemConfig,
    opts: &EstimatorOptions,
) -> Result<Vec<CMat>, EstimatorError> {
    let pilot = sa_bce_pilot(grid, allocs, scsi, noise_var, cfg, opts)?;
    Ok(pilot
        .iter()
        .zip(allocs)
        .map(|(h, a)| interpolate_to_full(h, &grid.groups[a.group].pilot_idx, cfg.n_c))
        .collect())
}
