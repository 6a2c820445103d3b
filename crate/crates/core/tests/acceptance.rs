//! Acceptance criteria, one test per criterion.
//!
//! Each test prints a single `criterion N: PASS|FAIL` line. Tests hold a shared
//! lock so wall-clock budgets are measured without contention.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scsilab::banded::{band_truncate, BandedCholesky, BandedLu};
use scsilab::database::GridLayout;
use scsilab::dmrs::{assign_allocations, freq_occ_diag, pilot_sequences, pilot_subcarrier_set, synth_received};
use scsilab::estimators::windowed::{beam_delay_correlations, beam_delay_pilot};
use scsilab::estimators::{
    antenna_mmse, build_correlations, freq_mmse_decompose, sa_bce_pilot, BandSpec, EstimatorOptions, WbceStats,
};
use scsilab::harness::{compare_paths, run_experiment, summarize, ExperimentConfig, Scenario, SummaryRow};
use scsilab::linalg::{loaded_cholesky, rel_frobenius};
use scsilab::scene::{draw_gains, generate_scene, synth_channel, GainModel, PathParams, PathSet, SceneParams};
use scsilab::vstd::{collect_snapshots, decompose, matricize_x3, noise_var_for_snr, tensorize, SmoothingPolicy, VstdConfig};
use scsilab::window::{make_window, WindowKind};
use scsilab::{CMat, CVec, SystemConfig, C64};

static LOCK: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, pass: bool, budget: Duration, elapsed: Duration, detail: &str) {
    let within = elapsed <= budget;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {n}: {verdict}; {detail}; runtime {:.2}s (budget {:.0}s)\n",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n}: {detail}");
    assert!(within, "criterion {n}: runtime {:.2}s over budget", elapsed.as_secs_f64());
}

struct Instance {
    cfg: SystemConfig,
    allocs: Vec<scsilab::dmrs::DmrsAllocation>,
    grid: scsilab::dmrs::PilotGrid,
    scsi: Vec<scsilab::estimators::ScsiCorrelations>,
    noise_var: f64,
}

/// Desk system (N = 32, M = 16, two users per OCC set) with random multipath users.
fn random_instance(seed: u64) -> Instance {
    let cfg = SystemConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allocs = assign_allocations(&cfg).unwrap();
    let pilots = pilot_sequences(&cfg, &mut rng);
    let mut scsi = Vec::new();
    let mut channels = Vec::new();
    for _ in &allocs {
        let l = rng.random_range(2..=6);
        let paths = PathSet::new(
            (0..l)
                .map(|_| {
                    PathParams::new(
                        rng.random_range(0.0..2e-6),
                        rng.random_range(0.3..2.8),
                        rng.random_range(0.3..2.8),
                        rng.random_range(0.05..1.0),
                    )
                })
                .collect(),
        );
        let g = draw_gains(&paths.paths, GainModel::Rayleigh, &mut rng);
        let h = synth_channel(&paths.paths, &g, cfg.n_c, cfg.delta_f, cfg.m_v, cfg.m_h);
        channels.push(vec![h; cfg.t_p]);
        scsi.push(build_correlations(&paths, &cfg));
    }
    let noise_var = 10f64.powf(-rng.random_range(0.0..20.0) / 10.0);
    let grid = synth_received(&channels, &allocs, &pilots, noise_var, &cfg, &mut rng).unwrap();
    Instance { cfg, allocs, grid, scsi, noise_var }
}

fn max_gap(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_frobenius(x, y)).fold(0.0, f64::max)
}

#[test]
fn criterion_01_beam_delay_equivalence() {
    let _g = lock();
    let t = Instant::now();
    let opts = EstimatorOptions::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let c = random_instance(seed);
        assert_eq!(c.cfg.n_pilot(), 32);
        assert_eq!(c.cfg.n_antennas(), 16);
        assert_eq!(c.cfg.users_per_set(), 2);
        let af = sa_bce_pilot(&c.grid, &c.allocs, &c.scsi, c.noise_var, &c.cfg, &opts).unwrap();
        let mut st = WbceStats::default();
        let bd = beam_delay_pilot(&c.grid, &c.allocs, &c.scsi, c.noise_var, &c.cfg, &opts, None, None, &mut st).unwrap();
        worst = worst.max(max_gap(&bd, &af));
    }
    report(1, worst <= 1e-9, Duration::from_secs(10), t.elapsed(), &format!("max relative gap {worst:.3e} over 20 instances (limit 1e-9)"));
}

#[test]
fn criterion_02_full_band_window_identity() {
    let _g = lock();
    let t = Instant::now();
    let opts = EstimatorOptions::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let c = random_instance(seed);
        let (n, m) = (c.cfg.n_pilot(), c.cfg.n_antennas());
        let w = make_window(WindowKind::Kaiser(3.95), n, c.cfg.m_v, c.cfg.m_h);
        let af = sa_bce_pilot(&c.grid, &c.allocs, &c.scsi, c.noise_var, &c.cfg, &opts).unwrap();
        let mut st = WbceStats::default();
        let band = BandSpec { b_tau: n - 1, b_a: m - 1 };
        let wb = beam_delay_pilot(&c.grid, &c.allocs, &c.scsi, c.noise_var, &c.cfg, &opts, Some(&w), Some(band), &mut st)
            .unwrap();
        worst = worst.max(max_gap(&wb, &af));
    }
    report(2, worst <= 1e-9, Duration::from_secs(10), t.elapsed(), &format!("max relative gap {worst:.3e} over 20 instances (limit 1e-9)"));
}

const VSTD_DIMS: (usize, usize, usize) = (32, 4, 8);
const DELTA_F: f64 = 30e3;

/// One grid, four separated paths, matched to the 32 x 4 x 8 snapshot dimensions.
fn vstd_scene(seed: u64) -> PathSet {
    let (n_d, m_v, m_h) = VSTD_DIMS;
    let mut p = SceneParams::for_dims(n_d, DELTA_F, m_v, m_h);
    p.layout = GridLayout::new([0.0, 0.0], 2.0, 1, 1);
    p.lbar = 4;
    generate_scene(&p, seed).unwrap().grids[0].clone()
}

#[test]
fn criterion_03_vstd_noiseless_recovery() {
    let _g = lock();
    let t = Instant::now();
    let (n_d, m_v, m_h) = VSTD_DIMS;
    let cfg = VstdConfig { delta_f: DELTA_F, smoothing: SmoothingPolicy::Balanced, rank: None };
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let truth = vstd_scene(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let block = collect_snapshots(&vec![truth.clone(); 10], n_d, DELTA_F, m_v, m_h, 0.0, GainModel::PhaseOnly, &mut rng);
        let (paths, _) = decompose(&block, &cfg).unwrap();
        let e = compare_paths(&PathSet::new(paths), &truth, DELTA_F);
        worst = worst.max(e.max());
        if e.unmatched == 0 && e.max() <= 1e-6 {
            ok += 1;
        }
    }
    report(3, ok == 100, Duration::from_secs(30), t.elapsed(), &format!("{ok}/100 exact recoveries, worst relative error {worst:.3e} (limit 1e-6)"));
}

#[test]
fn criterion_04_mdl_rank_at_20db() {
    let _g = lock();
    let t = Instant::now();
    let (n_d, m_v, m_h) = VSTD_DIMS;
    let cfg = VstdConfig { delta_f: DELTA_F, smoothing: SmoothingPolicy::Balanced, rank: None };
    let mut hits = 0;
    for seed in 0..100 {
        let truth = vstd_scene(seed);
        let nv = noise_var_for_snr(&truth, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let block = collect_snapshots(&vec![truth.clone(); 10], n_d, DELTA_F, m_v, m_h, nv, GainModel::Rayleigh, &mut rng);
        if let Ok((_, d)) = decompose(&block, &cfg) {
            if d.rank == 4 {
                hits += 1;
            }
        }
    }
    report(4, hits >= 95, Duration::from_secs(60), t.elapsed(), &format!("rank 4 chosen in {hits}/100 trials (need 95)"));
}

fn means(summary: &[SummaryRow], metric: &str, pick: impl Fn(&SummaryRow) -> bool) -> Vec<(f64, f64)> {
    summary.iter().filter(|r| r.metric == metric && pick(r)).map(|r| (r.mean, r.stderr)).collect()
}

/// `next <= prev` up to the larger of the two standard errors.
fn non_increasing(v: &[(f64, f64)]) -> bool {
    v.windows(2).all(|w| w[1].0 <= w[0].0 + w[0].1.max(w[1].1))
}

fn fmt_curve(v: &[(f64, f64)]) -> String {
    v.iter().map(|(m, s)| format!("{m:.2}±{s:.2}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn criterion_05_l_scsi_trend_in_n_d() {
    let _g = lock();
    let t = Instant::now();
    let mut cfg = ExperimentConfig::preset(Scenario::Fig3Desk);
    cfg.trials = 50;
    cfg.construction.n_d = vec![16, 32, 64, 128];
    cfg.construction.snr_sc_db = vec![0.0, 10.0];
    let res = run_experiment(&cfg, None).unwrap();
    let s = summarize(&res);
    let mut pass = res.failures.is_empty();
    let mut detail = vec![format!("{} failed points", res.failures.len())];
    for snr in [0.0, 10.0] {
        let curve = means(&s, "l_scsi_db", |r| r.key.snr_sc_db == Some(snr));
        pass &= curve.len() == 4 && non_increasing(&curve);
        detail.push(format!("SNR_SC {snr} dB: {}", fmt_curve(&curve)));
    }
    report(5, pass, Duration::from_secs(300), t.elapsed(), &detail.join("; "));
}

fn nmse_by(s: &[SummaryRow], est: &str) -> Vec<(f64, f64)> {
    means(s, "nmse_db", |r| r.key.estimator == est)
}

#[test]
fn criterion_06_sa_bce_beats_trivial() {
    let _g = lock();
    let t = Instant::now();
    let mut cfg = ExperimentConfig::preset(Scenario::Fig5Desk);
    cfg.trials = 100;
    cfg.scene.delay_spread_ns = vec![300.0];
    cfg.estimation.snr_ce_db = vec![0.0, 5.0, 10.0, 15.0, 20.0];
    let res = run_experiment(&cfg, None).unwrap();
    let s = summarize(&res);
    let triv = nmse_by(&s, "trivial");
    let sa = nmse_by(&s, "sa-bce");
    let gains: Vec<f64> = triv.iter().zip(&sa).map(|(a, b)| a.0 - b.0).collect();
    let pass = gains.len() == 5 && gains.iter().all(|&g| g >= 3.0);
    let detail = format!(
        "advantage per SNR_CE point {:?} dB (need >= 3); trivial {}; sa-bce {}",
        gains.iter().map(|g| (g * 100.0).round() / 100.0).collect::<Vec<_>>(),
        fmt_curve(&triv),
        fmt_curve(&sa)
    );
    report(6, pass, Duration::from_secs(300), t.elapsed(), &detail);
}

#[test]
fn criterion_07_delay_spread_robustness() {
    let _g = lock();
    let t = Instant::now();
    let mut cfg = ExperimentConfig::preset(Scenario::Fig8Desk);
    cfg.trials = 100;
    cfg.scene.delay_spread_ns = vec![100.0, 200.0, 300.0, 500.0];
    cfg.estimation.snr_ce_db = vec![20.0];
    let res = run_experiment(&cfg, None).unwrap();
    let s = summarize(&res);
    let triv = nmse_by(&s, "trivial");
    let sa = nmse_by(&s, "sa-bce");
    let loss = |v: &[(f64, f64)]| v.last().map_or(f64::NAN, |l| l.0) - v.first().map_or(f64::NAN, |f| f.0);
    let (sa_loss, triv_loss) = (loss(&sa), loss(&triv));
    let pass = sa.len() == 4 && triv.len() == 4 && sa_loss <= 1.5 && triv_loss >= 3.0;
    let detail = format!(
        "sa-bce loss {sa_loss:.2} dB (limit 1.5), trivial loss {triv_loss:.2} dB (need >= 3); sa-bce {}; trivial {}",
        fmt_curve(&sa),
        fmt_curve(&triv)
    );
    report(7, pass, Duration::from_secs(300), t.elapsed(), &detail);
}

/// Seconds for `reps` factor-and-solve rounds of `a` against `rhs`, dense or
/// banded. A banded Cholesky that fails falls back to banded LU, as in the
/// estimator; the second value counts those fallbacks.
fn time_solves(a: &CMat, rhs: &CMat, band: Option<usize>, reps: usize) -> (f64, usize) {
    let mut fallbacks = 0;
    let t = Instant::now();
    for _ in 0..reps {
        let x = match band {
            None => loaded_cholesky(a).unwrap().solve(rhs),
            Some(b) => {
                let tr = band_truncate(a, b);
                match BandedCholesky::factor(&tr, b) {
                    Ok(f) => f.solve(rhs),
                    Err(_) => {
                        fallbacks += 1;
                        BandedLu::factor(&tr, b, b).unwrap().solve(rhs)
                    }
                }
            }
        };
        std::hint::black_box(x);
    }
    (t.elapsed().as_secs_f64(), fallbacks)
}

#[test]
fn criterion_08_band_size_monotonicity_and_speed() {
    let _g = lock();
    let t = Instant::now();
    let mut cfg = ExperimentConfig::preset(Scenario::Fig7Desk);
    cfg.trials = 100;
    cfg.estimation.window = "kaiser:3.95".into();
    cfg.estimation.bands = ["4x4", "8x8", "15x20", "full"].map(String::from).to_vec();
    let res = run_experiment(&cfg, None).unwrap();
    let s = summarize(&res);
    let curve = nmse_by(&s, "sa-wbce");
    let monotone = curve.len() == 4 && non_increasing(&curve);

    let sys = SystemConfig::paper_scale();
    let (n, m) = (sys.n_pilot(), sys.n_antennas());
    assert_eq!((n, m), (272, 64));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let paths = PathSet::new(
        (0..6)
            .map(|_| PathParams::new(rng.random_range(0.0..1e-6), rng.random_range(0.5..2.6), rng.random_range(0.5..2.6), 1.0 / 6.0))
            .collect(),
    );
    let corr = build_correlations(&paths, &sys);
    let idx = pilot_subcarrier_set(0, sys.n_c).unwrap();
    let w = make_window(WindowKind::Kaiser(3.95), n, sys.m_v, sys.m_h);
    let c = freq_occ_diag(0, n).unwrap();
    let (r_tau, r_a) = beam_delay_correlations(&corr.restricted_freq(&idx), &corr.r_s, &c, Some(&w), &sys);
    let sigma2 = 0.01;
    let a_f = &r_tau + &w.xi_f * C64::new(sigma2, 0.0);
    let a_s = &r_a + &w.xi_s * C64::new(sigma2, 0.0);
    let rhs_f = CMat::from_fn(n, m, |_, _| C64::new(rng.random(), rng.random()));
    let rhs_s = CMat::from_fn(m, n, |_, _| C64::new(rng.random(), rng.random()));
    let reps = 20;
    let (df, _) = time_solves(&a_f, &rhs_f, None, reps);
    let (ds, _) = time_solves(&a_s, &rhs_s, None, reps);
    let (bf, fb_f) = time_solves(&a_f, &rhs_f, Some(15), reps);
    let (bs, fb_s) = time_solves(&a_s, &rhs_s, Some(20), reps);
    let speedup = (df + ds) / (bf + bs);
    let detail = format!(
        "sa-wbce NMSE over (4,4),(8,8),(15,20),full: {}; banded speedup {speedup:.1}x at N=272, M=64 (need >= 3), banded LU fallbacks {}/{}",
        fmt_curve(&curve),
        fb_f + fb_s,
        2 * reps
    );
    report(8, monotone && speedup >= 3.0 && res.failures.is_empty(), Duration::from_secs(600), t.elapsed(), &detail);
}

/// `‖R - diag(R)‖²_F / ‖R‖²_F`.
fn off_diagonal_fraction(r: &CMat) -> f64 {
    let total = r.norm_squared();
    let diag: f64 = (0..r.nrows()).map(|i| r[(i, i)].norm_sqr()).sum();
    (total - diag) / total
}

#[test]
fn criterion_09_delay_correlation_diagonalises() {
    let _g = lock();
    let t = Instant::now();
    let path = PathSet::new(vec![PathParams::new(300e-9, 1.2, 1.0, 1.0)]);
    let mut fractions = Vec::new();
    for n in [32usize, 64, 128, 256] {
        let mut sys = SystemConfig::desk();
        sys.n_c = 3 * n;
        sys.n_fft = sys.n_c.next_power_of_two();
        sys.validate().unwrap();
        let corr = build_correlations(&path, &sys);
        let idx = pilot_subcarrier_set(0, sys.n_c).unwrap();
        let c = freq_occ_diag(0, n).unwrap();
        let (r_tau, _) = beam_delay_correlations(&corr.restricted_freq(&idx), &corr.r_s, &c, None, &sys);
        fractions.push(off_diagonal_fraction(&r_tau));
    }
    let drops: Vec<f64> = fractions.windows(2).map(|w| 1.0 - w[1] / w[0]).collect();
    let pass = drops.iter().all(|&d| d >= 0.25);
    let detail = format!(
        "off-diagonal energy fraction at N=32,64,128,256: {:?}; decrease per doubling {:?} (need >= 0.25 each)",
        fractions.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>(),
        drops.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
    );
    report(9, pass, Duration::from_secs(5), t.elapsed(), &detail);
}

fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, rank, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    &a * a.adjoint()
}

fn loaded(a: &CMat) -> CMat {
    let n = a.nrows();
    let eps = 1e-10 * a.trace().re / n as f64;
    a + CMat::identity(n, n) * C64::new(eps, 0.0)
}

#[test]
fn criterion_10_oracle_equivalence() {
    let _g = lock();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut freq_gap, mut ant_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let n = 4 * rng.random_range(1..=4);
        let k = rng.random_range(1..=4);
        let r: Vec<CMat> = (0..k).map(|_| random_psd(n, rng.random_range(1..=n), &mut rng)).collect();
        let c: Vec<CVec> = (0..k).map(|j| freq_occ_diag(j * n / 4, n).unwrap()).collect();
        let s2 = rng.random_range(0.01..1.0);
        let y = CMat::from_fn(n, 3, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let target = rng.random_range(0..k);
        let mut cyy = CMat::identity(n, n) * C64::new(s2, 0.0);
        for (rk, ck) in r.iter().zip(&c) {
            let cm = CMat::from_diagonal(ck);
            cyy += &cm * rk * cm.adjoint();
        }
        let direct = &r[target] * CMat::from_diagonal(&c[target]).adjoint() * loaded(&cyy).try_inverse().unwrap() * &y;
        let got = freq_mmse_decompose(&y, target, &r, &c, s2).unwrap();
        freq_gap = freq_gap.max(rel_frobenius(&got, &direct));

        let m = rng.random_range(2..=12);
        let rs = random_psd(m, rng.random_range(1..=m), &mut rng);
        let h = CMat::from_fn(5, m, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = &rs + CMat::identity(m, m) * C64::new(s2, 0.0);
        let direct_s = (&rs * loaded(&a).try_inverse().unwrap() * h.transpose()).transpose();
        ant_gap = ant_gap.max(rel_frobenius(&antenna_mmse(&h, &rs, s2).unwrap(), &direct_s));
    }
    let mut round_trip = true;
    for (n_d, m_v, m_h, w) in [(4, 2, 3, 5), (8, 1, 4, 2), (3, 3, 3, 1)] {
        let hb = CMat::from_fn(n_d * m_v * m_h, w, |_, _| C64::new(rng.random(), rng.random()));
        round_trip &= matricize_x3(&tensorize(&hb, n_d, m_v, m_h).unwrap()) == hb;
    }
    let pass = freq_gap <= 1e-10 && ant_gap <= 1e-10 && round_trip;
    let detail = format!(
        "frequency stage gap {freq_gap:.3e}, antenna stage gap {ant_gap:.3e} (limit 1e-10); tensor round trip exact: {round_trip}"
    );
    report(10, pass, Duration::from_secs(10), t.elapsed(), &detail);
}
