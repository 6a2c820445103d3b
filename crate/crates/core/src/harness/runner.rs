//! Trial loop and sweep orchestration.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{BandChoice, EstimatorKind, ExperimentConfig, Scenario};
use super::HarnessError;
use crate::database::{DbMeta, GridLayout, ScsiDatabase, ScsiRecord};
use crate::dmrs::{assign_allocations, pilot_sequences, synth_received, trivial_estimate, DmrsAllocation, PilotGrid};
use crate::estimators::windowed::beam_delay_pilot;
use crate::estimators::{
    build_correlations, interpolate_to_full, sa_bce, sa_wbce, EstimatorOptions, ScsiCorrelations, WbceStats,
};
use crate::linalg::rel_frobenius;
use crate::metrics::{nmse, scsi_accuracy};
use crate::scene::{draw_gains, generate_scene, synth_channel, GainModel, GridScene, PathSet, SceneParams};
use crate::vstd::{build_grid_record, Diagnostics, SmoothingPolicy, VstdConfig};
use crate::window::{make_window, WindowKind};
use crate::{CMat, SystemConfig};

/// Sweep coordinates of one metric row. Fields a row does not depend on are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointKey {
    pub estimator: String,
    pub snr_ce_db: Option<f64>,
    pub n_d: Option<usize>,
    pub snr_sc_db: Option<f64>,
    pub d: f64,
    pub delay_spread_ns: f64,
    pub band: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub key: PointKey,
    pub trial: usize,
    pub nmse_db: Option<f64>,
    pub l_scsi_db: Option<f64>,
    /// Relative Frobenius gap to exact-SCSI SA-BCE.
    pub rel_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub key: PointKey,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTiming {
    pub trial: usize,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// In trial order, then sweep order.
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<TrialFailure>,
    pub timings: Vec<TrialTiming>,
}

/// Parsed knobs shared by all trials.
struct Plan {
    cfg: ExperimentConfig,
    smoothing: SmoothingPolicy,
    gain_model: GainModel,
    window: WindowKind,
    bands: Vec<BandChoice>,
    opts: EstimatorOptions,
}

const TAG_SCENE: u64 = 1;
const TAG_USERS: u64 = 2;
const TAG_GAINS: u64 = 3;
const TAG_PILOTS: u64 = 4;
const TAG_DB: u64 = 5;
const TAG_NOISE: u64 = 6;

/// Independent generator for `(master, tag, trial)`.
pub fn trial_rng(master: u64, tag: u64, trial: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    r.set_stream(trial as u64);
    r
}

fn sweep_tag(base: u64, idx: &[usize]) -> u64 {
    idx.iter().fold(base, |acc, &i| acc.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1))
}

/// Runs every trial of `cfg`, spreading trials over `threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let plan = Plan {
        cfg: cfg.clone(),
        smoothing: cfg.smoothing()?,
        gain_model: cfg.gain_model()?,
        window: if cfg.scenario.is_database_only() { WindowKind::Rectangular } else { cfg.window()? },
        bands: if cfg.scenario.is_database_only() { vec![] } else { cfg.bands()? },
        opts: EstimatorOptions {
            freq_noise: if cfg.scenario.is_database_only() { Default::default() } else { cfg.freq_noise()? },
            antenna_noise: if cfg.scenario.is_database_only() { Default::default() } else { cfg.antenna_noise()? },
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(crate::ConfigError::Invalid(e.to_string())))?;
    let outputs: Vec<TrialOutput> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(&plan, t)).collect());
    let mut res = ExperimentResult { config: cfg.clone(), rows: vec![], failures: vec![], timings: vec![] };
    for (t, o) in outputs.into_iter().enumerate() {
        res.rows.extend(o.rows);
        res.failures.extend(o.failures);
        res.timings.push(TrialTiming { trial: t, wall_s: o.wall_s });
    }
    for f in &res.failures {
        log::warn!("trial {} {} failed: {}", f.trial, f.key.estimator, f.message);
    }
    if res.rows.is_empty() {
        return Err(HarnessError::Numerical(format!(
            "every trial failed ({} failures)",
            res.failures.len()
        )));
    }
    Ok(res)
}

#[derive(Default)]
struct TrialOutput {
    rows: Vec<MetricsRow>,
    failures: Vec<TrialFailure>,
    wall_s: f64,
}

impl TrialOutput {
    fn fail(&mut self, key: PointKey, trial: usize, message: String) {
        self.failures.push(TrialFailure { key, trial, message });
    }
}

/// Scene generator settings for one `(d, delay spread)` sweep point.
pub fn scene_params(cfg: &ExperimentConfig, d: f64, delay_spread_ns: f64) -> SceneParams {
    let s = &cfg.system;
    let mut p = SceneParams::for_dims(cfg.scene.separation_n_d, s.delta_f, s.m_v, s.m_h);
    p.layout = GridLayout::new([0.0, 0.0], d, cfg.scene.cols, cfg.scene.rows);
    p.lbar = cfg.scene.lbar;
    p.corr_length = cfg.scene.corr_length;
    p.delay_bound = cfg.scene.delay_bound_ns * 1e-9;
    p.rms_delay_spread = (delay_spread_ns > 0.0).then_some(delay_spread_ns * 1e-9);
    p
}

/// VSTD records for the listed grids, each from `w` fresh in-grid snapshots.
#[allow(clippy::too_many_arguments)]
pub fn build_database<R: Rng + ?Sized>(
    scene: &GridScene,
    grids: &[usize],
    n_d: usize,
    w: usize,
    snr_sc_db: Option<f64>,
    sys: &SystemConfig,
    smoothing: SmoothingPolicy,
    gain_model: GainModel,
    rng: &mut R,
) -> Result<(ScsiDatabase, Vec<Diagnostics>), HarnessError> {
    let noise_var = snr_sc_db.map_or(0.0, |s| 10f64.powf(-s / 10.0));
    let vcfg = VstdConfig { delta_f: sys.delta_f, smoothing, rank: None };
    let mut db = ScsiDatabase::new(scene.layout.clone(), DbMeta { n_d, snr_sc_db, timestamp: 0 });
    let mut diags = Vec::with_capacity(grids.len());
    for &g in grids {
        let points: Vec<PathSet> = match &scene.field {
            Some(f) => (0..w).map(|_| f.paths_at(scene.layout.sample_in(g, rng))).collect(),
            None => vec![scene.grids[g].clone(); w],
        };
        let (rec, diag) = build_grid_record(g, &points, n_d, sys.m_v, sys.m_h, noise_var, gain_model, &vcfg, rng)
            .map_err(|e| HarnessError::Numerical(format!("grid {g}: {e}")))?;
        db.insert(open_interval(rec)).map_err(|e| HarnessError::Numerical(e.to_string()))?;
        diags.push(diag);
    }
    Ok((db, diags))
}

/// Pulls clipped angles off the closed endpoints so the record is storable.
fn open_interval(mut rec: ScsiRecord) -> ScsiRecord {
    const EDGE: f64 = 1e-9;
    let hi = std::f64::consts::PI - EDGE;
    for p in &mut rec.paths.paths {
        p.theta = p.theta.clamp(EDGE, hi);
        p.phi = p.phi.clamp(EDGE, hi);
    }
    rec
}

/// Mean over pairs of `L_SCSI` in dB.
pub fn mean_l_scsi(est: &[ScsiCorrelations], ideal: &[ScsiCorrelations], sigma2: f64) -> Result<f64, HarnessError> {
    let mut acc = 0.0;
    for (e, i) in est.iter().zip(ideal) {
        acc += scsi_accuracy(&e.r_f, &e.r_s, &i.r_f, &i.r_s, sigma2)
            .map_err(|e| HarnessError::Numerical(e.to_string()))?
            .db;
    }
    Ok(acc / est.len() as f64)
}

fn run_trial(plan: &Plan, trial: usize) -> TrialOutput {
    let start = Instant::now();
    let mut out = TrialOutput::default();
    let cfg = &plan.cfg;
    let scene_seed: u64 = trial_rng(cfg.seed, TAG_SCENE, trial).random();
    for (di, &d) in cfg.scene.d.iter().enumerate() {
        for (si, &spread) in cfg.scene.delay_spread_ns.iter().enumerate() {
            let ctx = PointCtx { plan, trial, d, spread, idx: [di, si] };
            match generate_scene(&scene_params(cfg, d, spread), scene_seed) {
                Ok(scene) => {
                    if cfg.scenario.is_database_only() {
                        ctx.database_point(&scene, &mut out);
                    } else {
                        ctx.estimation_point(&scene, &mut out);
                    }
                }
                Err(e) => {
                    for key in ctx.all_keys() {
                        out.fail(key, trial, format!("scene: {e}"));
                    }
                }
            }
        }
    }
    out.wall_s = start.elapsed().as_secs_f64();
    out
}

struct PointCtx<'a> {
    plan: &'a Plan,
    trial: usize,
    d: f64,
    spread: f64,
    idx: [usize; 2],
}

impl PointCtx<'_> {
    fn key(&self, est: &str, snr_ce: Option<f64>, db: Option<(usize, f64)>, band: Option<String>) -> PointKey {
        PointKey {
            estimator: est.to_string(),
            snr_ce_db: snr_ce,
            n_d: db.map(|x| x.0),
            snr_sc_db: db.map(|x| x.1),
            d: self.d,
            delay_spread_ns: self.spread,
            band,
        }
    }

    fn db_points(&self) -> Vec<(usize, usize, usize, f64)> {
        let c = &self.plan.cfg.construction;
        let mut v = vec![];
        for (ni, &n) in c.n_d.iter().enumerate() {
            for (qi, &q) in c.snr_sc_db.iter().enumerate() {
                v.push((ni, qi, n, q));
            }
        }
        v
    }

    /// Every key this sweep point would emit, for bulk failure reporting.
    fn all_keys(&self) -> Vec<PointKey> {
        let cfg = &self.plan.cfg;
        if cfg.scenario.is_database_only() {
            return self.db_points().iter().map(|&(_, _, n, q)| self.key("vstd-db", None, Some((n, q)), None)).collect();
        }
        let mut keys = vec![];
        for &snr in &cfg.estimation.snr_ce_db {
            for est in &cfg.estimation.estimators {
                let dbs: Vec<Option<(usize, f64)>> = if est.needs_database() {
                    self.db_points().iter().map(|&(_, _, n, q)| Some((n, q))).collect()
                } else {
                    vec![None]
                };
                for db in dbs {
                    if est.is_banded() {
                        for b in &self.plan.bands {
                            keys.push(self.key(est.name(), Some(snr), db, Some(b.to_string())));
                        }
                    } else {
                        keys.push(self.key(est.name(), Some(snr), db, None));
                    }
                }
            }
        }
        keys
    }

    fn database_point(&self, scene: &GridScene, out: &mut TrialOutput) {
        let cfg = &self.plan.cfg;
        let sys = &cfg.system;
        let grids: Vec<usize> = (0..scene.u()).collect();
        let ideal: Vec<ScsiCorrelations> = scene.grids.iter().map(|p| build_correlations(p, sys)).collect();
        for (ni, qi, n_d, snr_sc) in self.db_points() {
            let key = self.key("vstd-db", None, Some((n_d, snr_sc)), None);
            let mut rng =
                trial_rng(cfg.seed, sweep_tag(TAG_DB, &[self.idx[0], self.idx[1], ni, qi]), self.trial);
            let res = build_database(
                scene,
                &grids,
                n_d,
                cfg.construction.w,
                Some(snr_sc),
                sys,
                self.plan.smoothing,
                self.plan.gain_model,
                &mut rng,
            )
            .and_then(|(db, _)| {
                let est: Vec<ScsiCorrelations> =
                    grids.iter().map(|&g| build_correlations(&db.lookup(g).expect("built").paths, sys)).collect();
                mean_l_scsi(&est, &ideal, cfg.estimation.l_scsi_noise_var)
            });
            match res {
                Ok(l) => out.rows.push(MetricsRow {
                    key,
                    trial: self.trial,
                    nmse_db: None,
                    l_scsi_db: Some(l),
                    rel_gap: None,
                }),
                Err(e) => out.fail(key, self.trial, e.to_string()),
            }
        }
    }

    fn estimation_point(&self, scene: &GridScene, out: &mut TrialOutput) {
        let cfg = &self.plan.cfg;
        let sys = &cfg.system;
        let trial = self.trial;
        let allocs = match assign_allocations(sys) {
            Ok(a) => a,
            Err(e) => {
                for key in self.all_keys() {
                    out.fail(key, trial, e.to_string());
                }
                return;
            }
        };
        let layout = &scene.layout;
        let mut urng = trial_rng(cfg.seed, TAG_USERS, trial);
        let positions: Vec<[f64; 2]> = (0..sys.k_users)
            .map(|_| {
                let (u, v): (f64, f64) = (urng.random(), urng.random());
                [
                    layout.origin[0] + u * layout.cols as f64 * layout.d,
                    layout.origin[1] + v * layout.rows as f64 * layout.d,
                ]
            })
            .collect();
        let user_paths: Vec<PathSet> = positions
            .iter()
            .map(|&q| scene.paths_at(q).expect("position drawn inside the layout"))
            .collect();
        let mut grng = trial_rng(cfg.seed, TAG_GAINS, trial);
        let truths: Vec<CMat> = user_paths
            .iter()
            .map(|p| {
                let g = draw_gains(&p.paths, GainModel::Rayleigh, &mut grng);
                synth_channel(&p.paths, &g, sys.n_c, sys.delta_f, sys.m_v, sys.m_h)
            })
            .collect();
        let channels: Vec<Vec<CMat>> = truths.iter().map(|h| vec![h.clone(); sys.t_p]).collect();
        let exact: Vec<ScsiCorrelations> = user_paths.iter().map(|p| build_correlations(p, sys)).collect();
        let pilots = pilot_sequences(sys, &mut trial_rng(cfg.seed, TAG_PILOTS, trial));
        let estimators = &cfg.estimation.estimators;
        let window = make_window(self.plan.window, sys.n_pilot(), sys.m_v, sys.m_h);

        let mut received = Vec::new();
        for (ci, &snr) in cfg.estimation.snr_ce_db.iter().enumerate() {
            let nv = 10f64.powf(-snr / 10.0);
            let mut rng = trial_rng(cfg.seed, sweep_tag(TAG_NOISE, &[self.idx[0], self.idx[1], ci]), trial);
            received.push((snr, nv, synth_received(&channels, &allocs, &pilots, nv, sys, &mut rng)));
        }

        let run = EstCtx { plan: self.plan, allocs: &allocs, truths: &truths, window: &window };
        for (snr, nv, grid) in &received {
            let grid = match grid {
                Ok(g) => g,
                Err(e) => {
                    for est in estimators.iter().filter(|e| !e.needs_database()) {
                        out.fail(self.key(est.name(), Some(*snr), None, None), trial, e.to_string());
                    }
                    continue;
                }
            };
            let needs_ref = estimators.iter().any(|e| matches!(e, EstimatorKind::BeamDelay | EstimatorKind::SaWbceExact));
            let reference = if needs_ref { sa_bce(grid, &allocs, &exact, *nv, sys, &self.plan.opts).ok() } else { None };
            for est in estimators.iter().filter(|e| !e.needs_database()) {
                run.emit(self, out, *est, grid, &exact, *snr, *nv, None, None, reference.as_deref());
            }
        }

        if !estimators.iter().any(EstimatorKind::needs_database) {
            return;
        }
        let grids: Vec<usize> = positions
            .iter()
            .map(|&q| layout.grid_of_location(q).expect("inside"))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (ni, qi, n_d, snr_sc) in self.db_points() {
            let mut rng = trial_rng(cfg.seed, sweep_tag(TAG_DB, &[self.idx[0], self.idx[1], ni, qi]), trial);
            let built = build_database(
                scene,
                &grids,
                n_d,
                cfg.construction.w,
                Some(snr_sc),
                sys,
                self.plan.smoothing,
                self.plan.gain_model,
                &mut rng,
            );
            let db = match built {
                Ok((db, _)) => db,
                Err(e) => {
                    for key in self.all_keys().into_iter().filter(|k| k.n_d == Some(n_d) && k.snr_sc_db == Some(snr_sc)) {
                        out.fail(key, trial, e.to_string());
                    }
                    continue;
                }
            };
            let from_db: Vec<ScsiCorrelations> = positions
                .iter()
                .map(|&q| db.correlations_for_user(q, sys).expect("grid built"))
                .collect();
            let l_scsi = mean_l_scsi(&from_db, &exact, cfg.estimation.l_scsi_noise_var).ok();
            for (snr, nv, grid) in &received {
                let Ok(grid) = grid else { continue };
                for est in estimators.iter().filter(|e| e.needs_database()) {
                    run.emit(self, out, *est, grid, &from_db, *snr, *nv, Some((n_d, snr_sc)), l_scsi, None);
                }
            }
        }
    }
}

struct EstCtx<'a> {
    plan: &'a Plan,
    allocs: &'a [DmrsAllocation],
    truths: &'a [CMat],
    window: &'a crate::window::WindowPair,
}

impl EstCtx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        pt: &PointCtx,
        out: &mut TrialOutput,
        est: EstimatorKind,
        grid: &PilotGrid,
        scsi: &[ScsiCorrelations],
        snr: f64,
        nv: f64,
        db: Option<(usize, f64)>,
        l_scsi: Option<f64>,
        reference: Option<&[CMat]>,
    ) {
        let sys = &self.plan.cfg.system;
        let opts = &self.plan.opts;
        let bands: Vec<Option<BandChoice>> =
            if est.is_banded() { self.plan.bands.iter().copied().map(Some).collect() } else { vec![None] };
        for band in bands {
            let key = pt.key(est.name(), Some(snr), db, band.map(|b| b.to_string()));
            let res: Result<Vec<CMat>, String> = match est {
                EstimatorKind::Trivial => Ok(trivial_estimate(grid, self.allocs, sys)),
                EstimatorKind::SaBce | EstimatorKind::SaBceExact => {
                    sa_bce(grid, self.allocs, scsi, nv, sys, opts).map_err(|e| e.to_string())
                }
                EstimatorKind::SaWbce | EstimatorKind::SaWbceExact => {
                    let b = band.expect("banded").resolve(sys.n_pilot(), sys.n_antennas());
                    sa_wbce(grid, self.allocs, scsi, nv, self.window, b, sys, opts)
                        .map(|(h, stats)| {
                            if stats.dense_fallbacks > 0 {
                                log::warn!("{} dense fallbacks in banded solve", stats.dense_fallbacks);
                            }
                            h
                        })
                        .map_err(|e| e.to_string())
                }
                EstimatorKind::BeamDelay => {
                    let mut stats = WbceStats::default();
                    beam_delay_pilot(grid, self.allocs, scsi, nv, sys, opts, None, None, &mut stats)
                        .map(|p| {
                            p.iter()
                                .zip(self.allocs)
                                .map(|(h, a)| interpolate_to_full(h, &grid.groups[a.group].pilot_idx, sys.n_c))
                                .collect()
                        })
                        .map_err(|e| e.to_string())
                }
            };
            let est_h = match res {
                Ok(h) => h,
                Err(e) => {
                    out.fail(key, pt.trial, e);
                    continue;
                }
            };
            let Some(n) = nmse(&est_h, self.truths) else {
                out.fail(key, pt.trial, "every truth has zero norm".into());
                continue;
            };
            if n.skipped > 0 {
                log::warn!("{} zero-norm truths skipped", n.skipped);
            }
            let rel_gap = match (est, reference) {
                (EstimatorKind::BeamDelay | EstimatorKind::SaWbceExact, Some(r)) => {
                    Some(est_h.iter().zip(r).map(|(a, b)| rel_frobenius(a, b)).fold(0.0, f64::max))
                }
                _ => None,
            };
            out.rows.push(MetricsRow {
                key,
                trial: pt.trial,
                nmse_db: Some(n.db),
                l_scsi_db: if est == EstimatorKind::SaBce { l_scsi } else { None },
                rel_gap,
            });
        }
    }
}

/// Largest relative gap in the result, for the equivalence scenarios.
pub fn max_rel_gap(res: &ExperimentResult) -> Option<f64> {
    res.rows.iter().filter_map(|r| r.rel_gap).reduce(f64::max)
}

/// Number of rows per scenario trial, used by `experiment list`.
pub fn describe_scenarios() -> Vec<(Scenario, &'static str)> {
    Scenario::ALL.iter().map(|s| (*s, s.describe())).collect()
}
