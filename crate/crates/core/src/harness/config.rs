//! Experiment configuration: named presets overlaid with a TOML file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, SystemConfig};
use crate::estimators::{AntennaNoise, BandSpec, FreqNoise};
use crate::scene::GainModel;
use crate::vstd::SmoothingPolicy;
use crate::window::WindowKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Lemma1,
    WindowIdentity,
    Fig3Desk,
    Fig4Desk,
    Fig5Desk,
    Fig7Desk,
    Fig8Desk,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Self::Lemma1,
        Self::WindowIdentity,
        Self::Fig3Desk,
        Self::Fig4Desk,
        Self::Fig5Desk,
        Self::Fig7Desk,
        Self::Fig8Desk,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Lemma1 => "lemma1",
            Self::WindowIdentity => "window-identity",
            Self::Fig3Desk => "fig3-desk",
            Self::Fig4Desk => "fig4-desk",
            Self::Fig5Desk => "fig5-desk",
            Self::Fig7Desk => "fig7-desk",
            Self::Fig8Desk => "fig8-desk",
        }
    }

    /// Suffix of the `plotdata_<fig>.csv` file.
    pub fn plot_name(&self) -> &'static str {
        match self {
            Self::Lemma1 => "lemma1",
            Self::WindowIdentity => "window_identity",
            Self::Fig3Desk => "fig3",
            Self::Fig4Desk => "fig4",
            Self::Fig5Desk => "fig5",
            Self::Fig7Desk => "fig7",
            Self::Fig8Desk => "fig8",
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Self::Lemma1 => "SA-BCE vs unwindowed beam-delay estimator, relative gap",
            Self::WindowIdentity => "full-band Kaiser SA-WBCE vs SA-BCE, relative gap",
            Self::Fig3Desk => "L_SCSI of the VSTD database vs N_d and SNR_SC",
            Self::Fig4Desk => "L_SCSI of the VSTD database vs N_d and grid size d",
            Self::Fig5Desk => "NMSE vs SNR_CE: trivial, SA-BCE (VSTD DB), SA-BCE (exact), SA-WBCE",
            Self::Fig7Desk => "SA-WBCE NMSE vs band size",
            Self::Fig8Desk => "NMSE vs RMS delay spread",
        }
    }

    /// Database-accuracy scenarios never synthesise DMRS.
    pub fn is_database_only(&self) -> bool {
        matches!(self, Self::Fig3Desk | Self::Fig4Desk)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s.trim())
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Trivial,
    /// SA-BCE with correlations from the VSTD-built database.
    SaBce,
    /// SA-BCE with the true correlations at the user position.
    SaBceExact,
    SaWbce,
    /// SA-WBCE with the true correlations.
    SaWbceExact,
    BeamDelay,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Trivial => "trivial",
            Self::SaBce => "sa-bce",
            Self::SaBceExact => "sa-bce-exact",
            Self::SaWbce => "sa-wbce",
            Self::SaWbceExact => "sa-wbce-exact",
            Self::BeamDelay => "beam-delay",
        }
    }

    pub fn needs_database(&self) -> bool {
        matches!(self, Self::SaBce | Self::SaWbce)
    }

    /// Whether the band sweep applies.
    pub fn is_banded(&self) -> bool {
        matches!(self, Self::SaWbce | Self::SaWbceExact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    /// Grid size sweep in metres.
    pub d: Vec<f64>,
    pub cols: usize,
    pub rows: usize,
    pub lbar: usize,
    /// Target mean RMS delay spread sweep in ns; 0 leaves the powers unweighted.
    pub delay_spread_ns: Vec<f64>,
    pub corr_length: f64,
    pub delay_bound_ns: f64,
    /// Subcarrier count used to set the minimum delay separation.
    pub separation_n_d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSection {
    pub n_d: Vec<usize>,
    pub w: usize,
    pub snr_sc_db: Vec<f64>,
    /// `balanced`, `best`, `light:<L1>` or `fixed:<K1>,<K2>,<K3>`.
    pub smoothing: String,
    /// `rayleigh` or `phase-only`.
    pub gain_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub snr_ce_db: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    /// `rectangular`, `hann` or `kaiser:<shape>`.
    pub window: String,
    /// `full` or `<B_tau>x<B_a>`.
    pub bands: Vec<String>,
    /// `post-averaging` or `raw`.
    pub freq_noise: String,
    /// `plain` or `propagated`.
    pub antenna_noise: String,
    /// Noise variance inside the L_SCSI metric.
    pub l_scsi_noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub trials: usize,
    pub seed: u64,
    pub paper_scale: bool,
    pub out_dir: Option<String>,
    pub system: SystemConfig,
    pub scene: SceneSection,
    pub construction: ConstructionSection,
    pub estimation: EstimationSection,
}

/// Parsed half-bandwidths, `None` meaning full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandChoice(pub Option<(usize, usize)>);

impl BandChoice {
    pub fn resolve(&self, n: usize, m: usize) -> BandSpec {
        let full = BandSpec::full(n, m);
        match self.0 {
            None => full,
            Some((bt, ba)) => BandSpec { b_tau: bt.min(full.b_tau), b_a: ba.min(full.b_a) },
        }
    }
}

impl FromStr for BandChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "full" {
            return Ok(Self(None));
        }
        let bad = || ConfigError::Invalid(format!("band {s:?} is neither `full` nor `<B_tau>x<B_a>`"));
        let (a, b) = s.split_once('x').ok_or_else(bad)?;
        Ok(Self(Some((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))))
    }
}

impl fmt::Display for BandChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => write!(f, "full"),
            Some((a, b)) => write!(f, "{a}x{b}"),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for a scenario.
    pub fn preset(scenario: Scenario) -> Self {
        use EstimatorKind::*;
        let mut c = Self {
            scenario,
            trials: 100,
            seed: 1,
            paper_scale: false,
            out_dir: None,
            system: SystemConfig::desk(),
            scene: SceneSection {
                d: vec![2.0],
                cols: 4,
                rows: 4,
                lbar: 4,
                delay_spread_ns: vec![300.0],
                corr_length: 20.0,
                delay_bound_ns: 3000.0,
                separation_n_d: 32,
            },
            construction: ConstructionSection {
                n_d: vec![32],
                w: 10,
                snr_sc_db: vec![10.0],
                smoothing: "light:4".into(),
                gain_model: "rayleigh".into(),
            },
            estimation: EstimationSection {
                snr_ce_db: vec![20.0],
                estimators: vec![Trivial, SaBce],
                window: "kaiser:3.95".into(),
                bands: vec!["full".into()],
                freq_noise: "post-averaging".into(),
                antenna_noise: "plain".into(),
                l_scsi_noise_var: 1e-3,
            },
        };
        match scenario {
            Scenario::Lemma1 => {
                c.trials = 20;
                c.estimation.snr_ce_db = vec![10.0];
                c.estimation.estimators = vec![SaBceExact, BeamDelay];
            }
            Scenario::WindowIdentity => {
                c.trials = 20;
                c.estimation.snr_ce_db = vec![10.0];
                c.estimation.estimators = vec![SaBceExact, SaWbceExact];
            }
            Scenario::Fig3Desk => {
                c.trials = 50;
                c.scene.delay_spread_ns = vec![0.0];
                c.construction.n_d = vec![16, 32, 64, 128];
                c.construction.snr_sc_db = vec![0.0, 10.0];
                c.estimation.estimators = vec![];
                c.estimation.snr_ce_db = vec![];
            }
            Scenario::Fig4Desk => {
                c.trials = 50;
                c.scene.d = vec![2.0, 5.0, 10.0];
                c.scene.delay_spread_ns = vec![0.0];
                c.construction.n_d = vec![16, 32, 64, 128];
                c.estimation.estimators = vec![];
                c.estimation.snr_ce_db = vec![];
            }
            Scenario::Fig5Desk => {
                c.estimation.snr_ce_db = vec![0.0, 5.0, 10.0, 15.0, 20.0];
                c.estimation.estimators = vec![Trivial, SaBce, SaBceExact, SaWbce];
                c.estimation.bands = vec!["15x20".into()];
            }
            Scenario::Fig7Desk => {
                c.estimation.estimators = vec![SaBce, SaWbce];
                c.estimation.bands = vec!["4x4".into(), "8x8".into(), "15x20".into(), "full".into()];
            }
            Scenario::Fig8Desk => {
                c.scene.delay_spread_ns = vec![100.0, 200.0, 300.0, 500.0];
                c.estimation.estimators = vec![Trivial, SaBce];
            }
        }
        c
    }

    /// Preset for the file's `scenario`, overlaid with every key the file sets.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let scenario: Scenario = file
            .get("scenario")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ConfigError::Invalid("missing `scenario`".into()))?
            .parse()?;
        let mut base = Self::preset(scenario);
        if file.get("paper_scale").and_then(|v| v.as_bool()) == Some(true) {
            base.apply_paper_scale();
        }
        let mut merged = toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut merged, file);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Switches the system to the full-size preset.
    pub fn apply_paper_scale(&mut self) {
        self.paper_scale = true;
        self.system = SystemConfig::paper_scale();
    }

    pub fn smoothing(&self) -> Result<SmoothingPolicy, ConfigError> {
        self.construction.smoothing.parse().map_err(ConfigError::Invalid)
    }

    pub fn gain_model(&self) -> Result<GainModel, ConfigError> {
        parse_gain_model(&self.construction.gain_model)
    }

    pub fn window(&self) -> Result<WindowKind, ConfigError> {
        self.estimation.window.parse().map_err(ConfigError::Invalid)
    }

    pub fn bands(&self) -> Result<Vec<BandChoice>, ConfigError> {
        self.estimation.bands.iter().map(|b| b.parse()).collect()
    }

    pub fn freq_noise(&self) -> Result<FreqNoise, ConfigError> {
        match self.estimation.freq_noise.as_str() {
            "post-averaging" => Ok(FreqNoise::PostAveraging),
            "raw" => Ok(FreqNoise::Raw),
            s => Err(ConfigError::Invalid(format!("unknown freq_noise {s:?}"))),
        }
    }

    pub fn antenna_noise(&self) -> Result<AntennaNoise, ConfigError> {
        match self.estimation.antenna_noise.as_str() {
            "plain" => Ok(AntennaNoise::Plain),
            "propagated" => Ok(AntennaNoise::Propagated),
            s => Err(ConfigError::Invalid(format!("unknown antenna_noise {s:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.system.validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        let s = &self.scene;
        if s.d.is_empty() || s.delay_spread_ns.is_empty() {
            return bad("scene sweeps d and delay_spread_ns must be non-empty");
        }
        if s.d.iter().any(|&d| !(d > 0.0)) || s.cols == 0 || s.rows == 0 || s.lbar == 0 {
            return bad("scene needs d > 0, cols, rows and lbar at least 1");
        }
        if s.delay_spread_ns.iter().any(|&x| !(x >= 0.0)) {
            return bad("delay_spread_ns entries must be non-negative");
        }
        let c = &self.construction;
        if c.n_d.is_empty() || c.snr_sc_db.is_empty() {
            return bad("construction sweeps n_d and snr_sc_db must be non-empty");
        }
        if c.w == 0 || c.n_d.iter().any(|&n| n < 2) {
            return bad("construction needs w >= 1 and n_d >= 2");
        }
        self.smoothing()?;
        self.gain_model()?;
        let e = &self.estimation;
        if !self.scenario.is_database_only() {
            if e.snr_ce_db.is_empty() || e.estimators.is_empty() || e.bands.is_empty() {
                return bad("estimation sweeps snr_ce_db, estimators and bands must be non-empty");
            }
            self.window()?;
            self.bands()?;
            self.freq_noise()?;
            self.antenna_noise()?;
        }
        if !(e.l_scsi_noise_var > 0.0) {
            return bad("l_scsi_noise_var must be positive");
        }
        Ok(())
    }
}

pub fn parse_gain_model(s: &str) -> Result<GainModel, ConfigError> {
    match s.trim() {
        "rayleigh" => Ok(GainModel::Rayleigh),
        "phase-only" => Ok(GainModel::PhaseOnly),
        other => Err(ConfigError::Invalid(format!("unknown gain model {other:?}"))),
    }
}

/// Recursive table overlay; non-table values in `over` replace those in `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
