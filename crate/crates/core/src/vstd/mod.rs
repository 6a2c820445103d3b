//! Vandermonde-structured tensor decomposition: one SCSI record per grid from
//! `W` noisy LS snapshots.
//!
//! Pipeline: [`collect_snapshots`] → [`tensorize`] → [`matricize_x3`] →
//! [`spatial_smooth`] → SVD → [`estimate_rank_mdl`] → [`shift_invariance_evd`]
//! → [`extract_generators`] → [`params_from_generators`].

mod extract;
mod mdl;
mod split;
mod tensor;

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::database::ScsiRecord;
use crate::dmrs::complex_noise;
use crate::linalg::GramSvd;
use crate::scene::{draw_gains, synth_channel, GainModel, PathParams, PathSet};
use crate::{CMat, C64};

pub use extract::{
    extract_generators, params_from_generators, shift_invariance_evd, ClipCounts, PathGenerators,
    MAX_SHIFT_CONDITION,
};
pub use mdl::{estimate_rank_mdl, MdlResult, EIGEN_FLOOR};
pub use split::{balanced_split, best_split, check_uniqueness, SmoothingPolicy, Uniqueness};
pub use tensor::{matricize_x3, smoothed_gram, spatial_smooth, tensorize, SmoothingParams, Tensor4};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VstdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid smoothing: {0}")]
    Smoothing(String),
    #[error("{lbar} paths exceed the identifiability bound min({shifted_rows}, {columns}); enlarge K1 or W")]
    Uniqueness { lbar: usize, shifted_rows: usize, columns: usize },
    #[error("shifted subspace is rank deficient (condition {0:.3e}); enlarge K1")]
    RankDeficient(f64),
    #[error("generator extraction failed for path {0}")]
    PathFailure(usize),
}

/// `(N_d M) × W` LS channel snapshots, row `n M + m_v M_h + m_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    pub h: CMat,
    pub n_d: usize,
    pub m_v: usize,
    pub m_h: usize,
    /// True path gains per sampling point, kept for validation.
    pub gains: Vec<Vec<C64>>,
}

impl SnapshotBlock {
    pub fn w(&self) -> usize {
        self.h.ncols()
    }

    /// `(1/W) Σ_w |α_{l,w}|²` for every path.
    pub fn empirical_power(&self) -> Vec<f64> {
        let l = self.gains.first().map_or(0, Vec::len);
        (0..l)
            .map(|i| self.gains.iter().map(|g| g[i].norm_sqr()).sum::<f64>() / self.gains.len() as f64)
            .collect()
    }
}

/// Noise variance giving `snr_db` against the total path power.
pub fn noise_var_for_snr(paths: &PathSet, snr_db: f64) -> f64 {
    paths.total_power() / 10f64.powf(snr_db / 10.0)
}

/// LS snapshots at `points.len()` sampling points. Each point draws fresh gains,
/// sends unit-modulus QPSK pilots on all `n_d` subcarriers and depilots with
/// `S_vᴴ`, so the noise stays `CN(0, σ²)` per entry.
#[allow(clippy::too_many_arguments)]
pub fn collect_snapshots<R: Rng + ?Sized>(
    points: &[PathSet],
    n_d: usize,
    delta_f: f64,
    m_v: usize,
    m_h: usize,
    noise_var: f64,
    gain_model: GainModel,
    rng: &mut R,
) -> SnapshotBlock {
    let m = m_v * m_h;
    let mut h = CMat::zeros(n_d * m, points.len());
    let mut gains = Vec::with_capacity(points.len());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (w, ps) in points.iter().enumerate() {
        let g = draw_gains(&ps.paths, gain_model, rng);
        let chan = synth_channel(&ps.paths, &g, n_d, delta_f, m_v, m_h);
        let noise = if noise_var > 0.0 {
            complex_noise(n_d, m, noise_var, rng)
        } else {
            CMat::zeros(n_d, m)
        };
        for n in 0..n_d {
            let b: u8 = rng.random_range(0..4);
            let pilot = C64::new(if b & 1 == 0 { s } else { -s }, if b & 2 == 0 { s } else { -s });
            for a in 0..m {
                let y = pilot * chan[(n, a)] + noise[(n, a)];
                h[(n * m + a, w)] = pilot.conj() * y;
            }
        }
        gains.push(g);
    }
    SnapshotBlock { h, n_d, m_v, m_h, gains }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VstdConfig {
    pub delta_f: f64,
    pub smoothing: SmoothingPolicy,
    /// Forces the model order instead of running MDL.
    pub rank: Option<usize>,
}

impl VstdConfig {
    pub fn new(delta_f: f64) -> Self {
        Self { delta_f, smoothing: SmoothingPolicy::default(), rank: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub smoothing: SmoothingParams,
    pub singular_values: Vec<f64>,
    pub mdl: MdlResult,
    pub rank: usize,
    pub uniqueness: Uniqueness,
    pub clips: ClipCounts,
    /// Per recovered path, in output order.
    pub residuals: Vec<f64>,
    pub generators: Vec<PathGenerators>,
}

impl Diagnostics {
    /// Sidecar CSV: one `key,index,value` row per scalar.
    pub fn to_csv(&self, grid_id: usize) -> String {
        let mut s = String::from("#vstd-diag v1\ngrid_id,key,index,value\n");
        let mut row = |k: &str, i: usize, v: String| {
            let _ = writeln!(s, "{grid_id},{k},{i},{v}");
        };
        let sp = &self.smoothing;
        for i in 0..3 {
            row("K", i, sp.k[i].to_string());
            row("L", i, sp.l[i].to_string());
        }
        row("rank", 0, self.rank.to_string());
        row("mdl_degenerate", 0, (self.mdl.degenerate as u8).to_string());
        row("uniqueness_bound", 0, self.uniqueness.bound().to_string());
        row("uniqueness_margin", 0, (self.uniqueness.bound() as i64 - self.rank as i64).to_string());
        row("clip_theta", 0, self.clips.theta.to_string());
        row("clip_phi", 0, self.clips.phi.to_string());
        row("tau_wrapped", 0, self.clips.tau_wrapped.to_string());
        for (i, v) in self.singular_values.iter().enumerate() {
            row("singular_value", i, v.to_string());
        }
        for (i, v) in self.residuals.iter().enumerate() {
            row("residual", i, v.to_string());
        }
        s
    }
}

/// Runs the decomposition on measured snapshots.
pub fn decompose(block: &SnapshotBlock, cfg: &VstdConfig) -> Result<(Vec<PathParams>, Diagnostics), VstdError> {
    let dims = [block.n_d, block.m_v, block.m_h];
    let w = block.w();
    let t = tensorize(&block.h, block.n_d, block.m_v, block.m_h)?;
    let x3 = matricize_x3(&t);
    let sp = cfg.smoothing.resolve(dims, w)?;
    let x_s = spatial_smooth(&x3, dims, &sp);
    let svd = if x_s.nrows() <= x_s.ncols() {
        GramSvd::from_gram(smoothed_gram(&x3, dims, &sp), true)
    } else {
        GramSvd::new(&x_s)
    };
    let samples = x_s.nrows().max(x_s.ncols());
    let mdl = estimate_rank_mdl(&svd.singular_values, samples);
    let rank = cfg.rank.unwrap_or(mdl.rank);
    let uniqueness = check_uniqueness(&sp, w, rank);
    if !uniqueness.holds() || rank > svd.singular_values.len() {
        return Err(VstdError::Uniqueness {
            lbar: rank,
            shifted_rows: uniqueness.shifted_rows,
            columns: uniqueness.columns,
        });
    }
    let (u_s, _, _) = svd.leading(&x_s, rank);
    let (z1, m) = shift_invariance_evd(&u_s, &sp)?;
    let gens = extract_generators(&x_s, &u_s, &z1, &m, &sp, w)?;
    let (paths, clips) = params_from_generators(&gens, cfg.delta_f);
    if clips.theta + clips.phi + clips.tau_wrapped > 0 {
        log::warn!("vstd clipped parameters: {clips:?}");
    }
    let mut order: Vec<usize> = (0..gens.len()).collect();
    order.sort_by(|&a, &b| gens[b].power().total_cmp(&gens[a].power()));
    let generators: Vec<PathGenerators> = order.iter().map(|&i| gens[i].clone()).collect();
    let diag = Diagnostics {
        smoothing: sp,
        singular_values: svd.singular_values,
        mdl,
        rank,
        uniqueness,
        clips,
        residuals: generators.iter().map(|g| g.fit_residual).collect(),
        generators,
    };
    Ok((paths, diag))
}

/// Collects `points.len()` snapshots around one grid and decomposes them.
#[allow(clippy::too_many_arguments)]
pub fn build_grid_record<R: Rng + ?Sized>(
    grid_id: usize,
    points: &[PathSet],
    n_d: usize,
    m_v: usize,
    m_h: usize,
    noise_var: f64,
    gain_model: GainModel,
    cfg: &VstdConfig,
    rng: &mut R,
) -> Result<(ScsiRecord, Diagnostics), VstdError> {
    let block = collect_snapshots(points, n_d, cfg.delta_f, m_v, m_h, noise_var, gain_model, rng);
    let (paths, diag) = decompose(&block, cfg)?;
    Ok((ScsiRecord { grid_id, paths: PathSet::new(paths) }, diag))
}
