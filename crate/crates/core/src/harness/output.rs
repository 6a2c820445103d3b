//! CSV emission: per-trial metrics, per-point summary and plot data.

use std::fmt::Write as _;
use std::path::Path;

use super::config::Scenario;
use super::runner::{ExperimentResult, PointKey};
use super::HarnessError;

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

/// Shortest round-trip form with exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

fn key_cells(k: &PointKey) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        k.estimator,
        opt_num(k.snr_ce_db),
        opt(&k.n_d),
        opt_num(k.snr_sc_db),
        num(k.d),
        num(k.delay_spread_ns),
        opt(&k.band)
    )
}

const KEY_HEADER: &str = "estimator,snr_ce_db,n_d,snr_sc_db,d,delay_spread_ns,band";

pub fn metrics_csv(res: &ExperimentResult) -> String {
    let mut s = format!("#metrics v1\nscenario,{KEY_HEADER},trial,nmse_db,l_scsi_db,rel_gap\n");
    for r in &res.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            res.config.scenario,
            key_cells(&r.key),
            r.trial,
            opt_num(r.nmse_db),
            opt_num(r.l_scsi_db),
            opt_num(r.rel_gap)
        );
    }
    s
}

pub fn timing_csv(res: &ExperimentResult) -> String {
    let mut s = String::from("#timing v1\nscenario,trial,wall_s\n");
    for t in &res.timings {
        let _ = writeln!(s, "{},{},{:.6}", res.config.scenario, t.trial, t.wall_s);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: PointKey,
    /// `nmse_db`, `l_scsi_db` or `rel_gap`.
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub n: usize,
    pub failures: usize,
    pub max: f64,
}

fn stats(v: &mut [f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let stderr = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    (mean, stderr, median, v[k - 1])
}

/// One row per sweep point and metric, in order of first appearance.
pub fn summarize(res: &ExperimentResult) -> Vec<SummaryRow> {
    let mut keys: Vec<PointKey> = Vec::new();
    let all = res.rows.iter().map(|r| &r.key).chain(res.failures.iter().map(|f| &f.key));
    for k in all {
        if !keys.contains(k) {
            keys.push(k.clone());
        }
    }
    let mut out = Vec::new();
    for k in keys {
        let rows: Vec<_> = res.rows.iter().filter(|r| r.key == k).collect();
        let failures = res.failures.iter().filter(|f| f.key == k).count();
        let metrics: [(&'static str, Vec<f64>); 3] = [
            ("nmse_db", rows.iter().filter_map(|r| r.nmse_db).collect()),
            ("l_scsi_db", rows.iter().filter_map(|r| r.l_scsi_db).collect()),
            ("rel_gap", rows.iter().filter_map(|r| r.rel_gap).collect()),
        ];
        let mut any = false;
        for (name, mut v) in metrics {
            if v.is_empty() {
                continue;
            }
            any = true;
            let (mean, stderr, median, max) = stats(&mut v);
            out.push(SummaryRow { key: k.clone(), metric: name, mean, stderr, median, n: v.len(), failures, max });
        }
        if !any {
            out.push(SummaryRow {
                key: k,
                metric: "none",
                mean: f64::NAN,
                stderr: f64::NAN,
                median: f64::NAN,
                n: 0,
                failures,
                max: f64::NAN,
            });
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("#summary v1\n{KEY_HEADER},metric,mean,stderr,median,n,failures,max\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            key_cells(&r.key),
            r.metric,
            num(r.mean),
            num(r.stderr),
            num(r.median),
            r.n,
            r.failures,
            num(r.max)
        );
    }
    s
}

fn primary_metric(s: Scenario) -> &'static str {
    match s {
        Scenario::Lemma1 | Scenario::WindowIdentity => "rel_gap",
        Scenario::Fig3Desk | Scenario::Fig4Desk => "l_scsi_db",
        _ => "nmse_db",
    }
}

fn x_field(s: Scenario) -> &'static str {
    match s {
        Scenario::Lemma1 | Scenario::WindowIdentity | Scenario::Fig5Desk => "snr_ce_db",
        Scenario::Fig3Desk | Scenario::Fig4Desk => "n_d",
        Scenario::Fig7Desk => "band",
        Scenario::Fig8Desk => "delay_spread_ns",
    }
}

fn field(k: &PointKey, name: &str) -> String {
    match name {
        "snr_ce_db" => opt_num(k.snr_ce_db),
        "n_d" => opt(&k.n_d),
        "snr_sc_db" => opt_num(k.snr_sc_db),
        "d" => num(k.d),
        "delay_spread_ns" => num(k.delay_spread_ns),
        "band" => opt(&k.band),
        _ => k.estimator.clone(),
    }
}

/// `(x, series, y)` triples. The series label is the estimator plus every other
/// coordinate that varies; `y` is the mean, or the maximum for relative gaps.
pub fn plot_csv(scenario: Scenario, summary: &[SummaryRow]) -> String {
    let metric = primary_metric(scenario);
    let xf = x_field(scenario);
    let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.metric == metric).collect();
    let others = ["snr_ce_db", "n_d", "snr_sc_db", "d", "delay_spread_ns", "band"];
    let varying: Vec<&str> = others
        .into_iter()
        .filter(|&f| f != xf)
        .filter(|&f| rows.iter().any(|r| field(&r.key, f) != field(&rows[0].key, f)))
        .collect();
    let mut s = format!("#plotdata v1 metric={metric}\nx,series,y\n");
    for r in rows {
        let mut series = r.key.estimator.clone();
        for f in &varying {
            let v = field(&r.key, f);
            if !v.is_empty() {
                let _ = write!(series, " {f}={v}");
            }
        }
        let y = if metric == "rel_gap" { r.max } else { r.mean };
        let _ = writeln!(s, "{},{},{}", field(&r.key, xf), series, num(y));
    }
    s
}

/// Writes `metrics.csv`, `summary.csv`, `plotdata_<fig>.csv` and `timing.csv`.
pub fn write_outputs(res: &ExperimentResult, dir: &Path) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let summary = summarize(res);
    let files = [
        ("metrics.csv".to_string(), metrics_csv(res)),
        ("summary.csv".to_string(), summary_csv(&summary)),
        (format!("plotdata_{}.csv", res.config.scenario.plot_name()), plot_csv(res.config.scenario, &summary)),
        ("timing.csv".to_string(), timing_csv(res)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
        written.push(p);
    }
    Ok(written)
}
