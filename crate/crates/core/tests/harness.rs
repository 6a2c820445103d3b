use scsilab::harness::{
    max_rel_gap, metrics_csv, plot_csv, run_experiment, summarize, summary_csv, ExperimentConfig, Scenario,
};

fn outputs(cfg: &ExperimentConfig, threads: usize) -> (String, String, String) {
    let res = run_experiment(cfg, Some(threads)).unwrap();
    let s = summarize(&res);
    (metrics_csv(&res), summary_csv(&s), plot_csv(cfg.scenario, &s))
}

#[test]
fn repeated_runs_are_bit_identical() {
    for scenario in [Scenario::Fig5Desk, Scenario::Fig3Desk] {
        let mut cfg = ExperimentConfig::preset(scenario);
        cfg.trials = 1;
        if scenario == Scenario::Fig3Desk {
            cfg.construction.n_d = vec![16];
        }
        assert_eq!(outputs(&cfg, 1), outputs(&cfg, 1), "{scenario}");
    }
}

#[test]
fn thread_count_does_not_change_rows() {
    let mut cfg = ExperimentConfig::preset(Scenario::Fig8Desk);
    cfg.trials = 3;
    assert_eq!(outputs(&cfg, 1).0, outputs(&cfg, 3).0);
}

#[test]
fn seed_changes_rows() {
    let mut cfg = ExperimentConfig::preset(Scenario::Lemma1);
    cfg.trials = 1;
    let a = outputs(&cfg, 1).0;
    cfg.seed = 2;
    assert_ne!(a, outputs(&cfg, 1).0);
}

#[test]
fn lemma1_and_window_identity_gaps() {
    for scenario in [Scenario::Lemma1, Scenario::WindowIdentity] {
        let mut cfg = ExperimentConfig::preset(scenario);
        cfg.trials = 3;
        let res = run_experiment(&cfg, None).unwrap();
        assert!(res.failures.is_empty());
        let gap = max_rel_gap(&res).unwrap();
        assert!(gap < 1e-9, "{scenario}: {gap}");
    }
}

#[test]
fn every_trial_has_timing() {
    let mut cfg = ExperimentConfig::preset(Scenario::Fig7Desk);
    cfg.trials = 2;
    let res = run_experiment(&cfg, None).unwrap();
    let mut t: Vec<_> = res.timings.iter().map(|t| t.trial).collect();
    t.sort();
    assert_eq!(t, vec![0, 1]);
    assert!(res.timings.iter().all(|t| t.wall_s >= 0.0));
}
