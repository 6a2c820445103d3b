use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scsilab::dmrs::{assign_allocations, pilot_sequences, synth_received, trivial_estimate};
use scsilab::estimators::{build_correlations, sa_bce, EstimatorOptions};
use scsilab::harness::{
    build_database, compare_paths, describe_scenarios, parse_gain_model, resolve_threads, run_experiment,
    scene_params, write_outputs, ExperimentConfig, HarnessError, ParamErrors, Scenario,
};
use scsilab::metrics::nmse;
use scsilab::scene::{draw_gains, generate_scene, synth_channel, GainModel, GridScene};
use scsilab::vstd::SmoothingPolicy;
use scsilab::{CMat, ConfigError, ScsiDatabase, SystemConfig};

/// SCSI-assisted DMRS channel estimation laboratory.
#[derive(Parser)]
#[command(name = "scsilab", version)]
struct Cli {
    /// Use the full-size system parameters instead of the desk preset.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthetic grid scenes.
    #[command(subcommand)]
    Scene(SceneCmd),
    /// SCSI database construction and inspection.
    #[command(subcommand)]
    Db(DbCmd),
    /// One-shot channel estimation on a scene with a database.
    Estimate(EstimateArgs),
    /// Monte-Carlo experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Generate a scene and write it as CSV.
    Gen(SceneGenArgs),
}

#[derive(Args)]
struct SceneGenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size in metres.
    #[arg(long, default_value_t = 2.0)]
    d: f64,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    lbar: usize,
    /// Target mean RMS delay spread in ns; 0 leaves powers unweighted.
    #[arg(long, default_value_t = 0.0)]
    delay_spread_ns: f64,
}

#[derive(Subcommand)]
enum DbCmd {
    /// Build a database from a scene file with VSTD.
    Build(DbBuildArgs),
    /// Print the record of one grid.
    Inspect { db: PathBuf, grid: usize },
    /// Per-parameter maximum relative error of a database against a scene.
    Diff { db: PathBuf, scene: PathBuf },
}

#[derive(Args)]
struct DbBuildArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Construction SNR in dB; noiseless when absent.
    #[arg(long)]
    snr_sc: Option<f64>,
    #[arg(long, default_value_t = 32)]
    n_d: usize,
    #[arg(long, default_value_t = 10)]
    w: usize,
    /// `rayleigh` or `phase-only`.
    #[arg(long, default_value = "rayleigh")]
    gain_model: String,
    /// `balanced`, `best`, `light:<L1>` or `fixed:<K1>,<K2>,<K3>`.
    #[arg(long, default_value = "light:4")]
    smoothing: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Diagnostics sidecar CSV.
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    snr_ce: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run the experiment described by a TOML config file.
    Run(RunArgs),
    /// List the built-in scenarios.
    List,
    /// Print the preset config of a scenario.
    Preset { scenario: String },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (default: `out_dir` from the config, else `out/<scenario>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SCSILAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, body: &str) -> Result<(), HarnessError> {
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(ConfigError::Invalid(msg.into()))
}

fn system(paper_scale: bool) -> SystemConfig {
    if paper_scale {
        SystemConfig::paper_scale()
    } else {
        SystemConfig::desk()
    }
}

fn load_scene(path: &Path) -> Result<GridScene, HarnessError> {
    GridScene::from_csv(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_db(path: &Path) -> Result<ScsiDatabase, HarnessError> {
    ScsiDatabase::from_csv(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn scene_gen(a: &SceneGenArgs, paper_scale: bool) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::preset(Scenario::Fig5Desk);
    if paper_scale {
        cfg.apply_paper_scale();
    }
    cfg.scene.cols = a.cols;
    cfg.scene.rows = a.rows;
    cfg.scene.lbar = a.lbar;
    if !(a.d > 0.0) || a.cols == 0 || a.rows == 0 || a.lbar == 0 {
        return Err(invalid("scene needs d > 0 and cols, rows, lbar at least 1"));
    }
    let scene = generate_scene(&scene_params(&cfg, a.d, a.delay_spread_ns), a.seed)
        .map_err(|e| invalid(e.to_string()))?;
    let csv = scene.to_csv();
    match &a.out {
        Some(p) => write(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn db_build(a: &DbBuildArgs, paper_scale: bool) -> Result<(), HarnessError> {
    let sys = system(paper_scale);
    let scene = load_scene(&a.scene)?;
    let smoothing: SmoothingPolicy = a.smoothing.parse().map_err(invalid)?;
    let gain_model = parse_gain_model(&a.gain_model)?;
    if a.w == 0 || a.n_d < 2 {
        return Err(invalid("need w >= 1 and n_d >= 2"));
    }
    let grids: Vec<usize> = (0..scene.u()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut db, diags) = build_database(&scene, &grids, a.n_d, a.w, a.snr_sc, &sys, smoothing, gain_model, &mut rng)?;
    db.meta.timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    write(&a.out, &db.to_csv())?;
    if let Some(p) = &a.diag {
        let mut body = String::new();
        for (i, (g, d)) in grids.iter().zip(&diags).enumerate() {
            let csv = d.to_csv(*g);
            let skip = if i == 0 { 0 } else { 2 };
            for line in csv.lines().skip(skip) {
                body.push_str(line);
                body.push('\n');
            }
        }
        write(p, &body)?;
    }
    eprintln!("built {} grids into {}", db.len(), a.out.display());
    Ok(())
}

fn db_inspect(db: &Path, grid: usize) -> Result<(), HarnessError> {
    let db = load_db(db)?;
    let rec = db.lookup(grid).map_err(|e| invalid(e.to_string()))?;
    let c = db.layout.centre(grid);
    println!("grid {grid} centre ({}, {}) paths {}", c[0], c[1], rec.paths.len());
    println!("l,tau_s,theta_rad,phi_rad,rho");
    for (l, p) in rec.paths.paths.iter().enumerate() {
        println!("{l},{:e},{},{},{}", p.tau, p.theta, p.phi, p.rho);
    }
    Ok(())
}

fn db_diff(db: &Path, scene: &Path, paper_scale: bool) -> Result<(), HarnessError> {
    let db = load_db(db)?;
    let scene = load_scene(scene)?;
    if db.layout.len() != scene.u() {
        return Err(invalid(format!("database has {} grids, scene {}", db.layout.len(), scene.u())));
    }
    let delta_f = system(paper_scale).delta_f;
    let mut total = ParamErrors::default();
    for g in 0..scene.u() {
        let rec = db.lookup(g).map_err(|e| invalid(e.to_string()))?;
        total.merge(&compare_paths(&rec.paths, &scene.grids[g], delta_f));
    }
    println!("parameter,max_rel_error");
    println!("tau,{:e}", total.tau);
    println!("theta,{:e}", total.theta);
    println!("phi,{:e}", total.phi);
    println!("rho,{:e}", total.rho);
    println!("unmatched,{}", total.unmatched);
    Ok(())
}

fn estimate(a: &EstimateArgs, paper_scale: bool) -> Result<(), HarnessError> {
    let sys = system(paper_scale);
    let scene = load_scene(&a.scene)?;
    let db = load_db(&a.db)?;
    let allocs = assign_allocations(&sys).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let l = &scene.layout;
    let positions: Vec<[f64; 2]> = (0..sys.k_users)
        .map(|_| {
            [
                l.origin[0] + rng.random::<f64>() * l.cols as f64 * l.d,
                l.origin[1] + rng.random::<f64>() * l.rows as f64 * l.d,
            ]
        })
        .collect();
    let mut truths = Vec::new();
    let mut exact = Vec::new();
    let mut from_db = Vec::new();
    for &q in &positions {
        let paths = scene.paths_at(q).map_err(|e| invalid(e.to_string()))?;
        let g = draw_gains(&paths.paths, GainModel::Rayleigh, &mut rng);
        truths.push(synth_channel(&paths.paths, &g, sys.n_c, sys.delta_f, sys.m_v, sys.m_h));
        exact.push(build_correlations(&paths, &sys));
        from_db.push(db.correlations_for_user(q, &sys).map_err(|e| invalid(e.to_string()))?);
    }
    let channels: Vec<Vec<CMat>> = truths.iter().map(|h| vec![h.clone(); sys.t_p]).collect();
    let pilots = pilot_sequences(&sys, &mut rng);
    let nv = 10f64.powf(-a.snr_ce / 10.0);
    let grid = synth_received(&channels, &allocs, &pilots, nv, &sys, &mut rng)
        .map_err(|e| HarnessError::Numerical(e.to_string()))?;
    let opts = EstimatorOptions::default();
    let num = |e: scsilab::estimators::EstimatorError| HarnessError::Numerical(e.to_string());
    let runs: [(&str, Vec<CMat>); 3] = [
        ("trivial", trivial_estimate(&grid, &allocs, &sys)),
        ("sa-bce", sa_bce(&grid, &allocs, &from_db, nv, &sys, &opts).map_err(num)?),
        ("sa-bce-exact", sa_bce(&grid, &allocs, &exact, nv, &sys, &opts).map_err(num)?),
    ];
    println!("estimator,nmse_db");
    for (name, h) in runs {
        let n = nmse(&h, &truths).ok_or_else(|| HarnessError::Numerical("all truths zero".into()))?;
        println!("{name},{}", n.db);
    }
    Ok(())
}

fn experiment_run(a: &RunArgs, paper_scale: bool) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::from_toml_str(&read(&a.config)?)?;
    if paper_scale && !cfg.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
    let res = run_experiment(&cfg, resolve_threads(a.threads))?;
    let files = write_outputs(&res, &out)?;
    eprintln!(
        "{}: {} rows, {} failures",
        cfg.scenario,
        res.rows.len(),
        res.failures.len()
    );
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let ps = cli.paper_scale;
    match cli.cmd {
        Cmd::Scene(SceneCmd::Gen(a)) => scene_gen(&a, ps),
        Cmd::Db(DbCmd::Build(a)) => db_build(&a, ps),
        Cmd::Db(DbCmd::Inspect { db, grid }) => db_inspect(&db, grid),
        Cmd::Db(DbCmd::Diff { db, scene }) => db_diff(&db, &scene, ps),
        Cmd::Estimate(a) => estimate(&a, ps),
        Cmd::Experiment(ExperimentCmd::Run(a)) => experiment_run(&a, ps),
        Cmd::Experiment(ExperimentCmd::List) => {
            for (s, d) in describe_scenarios() {
                println!("{:<16} {d}", s.name());
            }
            Ok(())
        }
        Cmd::Experiment(ExperimentCmd::Preset { scenario }) => {
            let mut cfg = ExperimentConfig::preset(scenario.parse()?);
            if ps {
                cfg.apply_paper_scale();
            }
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
