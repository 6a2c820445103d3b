//! Geometric multipath channels and spatially consistent grid scenes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::database::GridLayout;
use crate::{CMat, CVec, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("infeasible scene: {0}")]
    Infeasible(String),
    #[error("malformed scene file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Delay in seconds.
    pub tau: f64,
    /// Elevation in (0, π).
    pub theta: f64,
    /// Azimuth in (0, π).
    pub phi: f64,
    /// Linear power.
    pub rho: f64,
}

impl PathParams {
    pub fn new(tau: f64, theta: f64, phi: f64, rho: f64) -> Self {
        Self { tau, theta, phi, rho }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<PathParams>,
    /// One complex gain per path for a single realisation.
    pub gains: Option<Vec<C64>>,
}

impl PathSet {
    pub fn new(paths: Vec<PathParams>) -> Self {
        Self { paths, gains: None }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.rho).sum()
    }

    /// Root-mean-square delay spread of the power-delay profile.
    pub fn rms_delay_spread(&self) -> f64 {
        rms_spread(self.paths.iter().map(|p| (p.tau, p.rho)))
    }

    pub fn with_gains(mut self, gains: Vec<C64>) -> Self {
        self.gains = Some(gains);
        self
    }
}

fn rms_spread(it: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (t, r) in it {
        s0 += r;
        s1 += r * t;
        s2 += r * t * t;
    }
    if s0 <= 0.0 {
        return 0.0;
    }
    let m = s1 / s0;
    (s2 / s0 - m * m).max(0.0).sqrt()
}

/// Delay steering vector, entry `n` equal to `exp(-j 2π n Δf τ)`.
pub fn steering_delay(tau: f64, n: usize, delta_f: f64) -> CVec {
    CVec::from_fn(n, |i, _| C64::from_polar(1.0, -2.0 * PI * i as f64 * delta_f * tau))
}

/// Planar-array steering vector `a_v(θ) ⊗ a_h(φ; θ)`, vertical index major.
pub fn steering_antenna(theta: f64, phi: f64, m_v: usize, m_h: usize) -> CVec {
    let cv = theta.cos();
    let ch = theta.sin() * phi.cos();
    CVec::from_fn(m_v * m_h, |i, _| {
        let (iv, ih) = ((i / m_h) as f64, (i % m_h) as f64);
        C64::from_polar(1.0, -PI * (iv * cv + ih * ch))
    })
}

/// `H = Σ α_l b(τ_l) a(φ_l, θ_l)ᵀ` over `n_sc` subcarriers.
pub fn synth_channel(
    paths: &[PathParams],
    gains: &[C64],
    n_sc: usize,
    delta_f: f64,
    m_v: usize,
    m_h: usize,
) -> CMat {
    assert_eq!(paths.len(), gains.len(), "one gain per path");
    let mut h = CMat::zeros(n_sc, m_v * m_h);
    for (p, &g) in paths.iter().zip(gains) {
        let b = steering_delay(p.tau, n_sc, delta_f) * g;
        let a = steering_antenna(p.theta, p.phi, m_v, m_h);
        h += b * a.transpose();
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainModel {
    /// Circularly symmetric Gaussian with variance ρ.
    #[default]
    Rayleigh,
    /// Modulus exactly `sqrt(ρ)`, uniform phase.
    PhaseOnly,
}

pub fn draw_gains<R: Rng + ?Sized>(paths: &[PathParams], model: GainModel, rng: &mut R) -> Vec<C64> {
    paths
        .iter()
        .map(|p| match model {
            GainModel::Rayleigh => {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                C64::new(x, y) * (p.rho / 2.0).sqrt()
            }
            GainModel::PhaseOnly => {
                C64::from_polar(p.rho.sqrt(), 2.0 * PI * rng.random::<f64>())
            }
        })
        .collect()
}

/// Knobs of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub layout: GridLayout,
    pub lbar: usize,
    /// Correlation length of the spatial fields in metres.
    pub corr_length: f64,
    /// Upper bound on path delays in seconds.
    pub delay_bound: f64,
    /// Minimum separation between paths in delay (s), `cos θ` and `sin θ cos φ`.
    pub sep_tau: f64,
    pub sep_u: f64,
    pub sep_v: f64,
    /// Peak spatial drift of each parameter around its base value.
    pub drift_tau: f64,
    pub drift_u: f64,
    pub drift_v: f64,
    /// Spread of the per-path base powers (dB).
    pub power_spread_db: f64,
    /// Peak spatial shadowing drift (dB).
    pub shadow_db: f64,
    /// Target mean RMS delay spread over grid centres; `None` keeps flat weighting.
    pub rms_delay_spread: Option<f64>,
}

impl SceneParams {
    /// Default geometry with separations matched to the given dimensions.
    pub fn for_dims(n_d: usize, delta_f: f64, m_v: usize, m_h: usize) -> Self {
        Self {
            layout: GridLayout::new([0.0, 0.0], 2.0, 4, 4),
            lbar: 4,
            corr_length: 20.0,
            delay_bound: 3e-6,
            sep_tau: 1.0 / (2.0 * n_d as f64 * delta_f),
            sep_u: 1.0 / (2.0 * m_v as f64),
            sep_v: 1.0 / (2.0 * m_h as f64),
            drift_tau: 30e-9,
            drift_u: 0.02,
            drift_v: 0.02,
            power_spread_db: 6.0,
            shadow_db: 2.0,
            rms_delay_spread: None,
        }
    }
}

impl Default for SceneParams {
    fn default() -> Self {
        Self::for_dims(32, 30e3, 2, 8)
    }
}

const U_RANGE: (f64, f64) = (-0.6, 0.6);
const V_RANGE: (f64, f64) = (-0.7, 0.7);

/// Smooth random scalar field in `[-1, 1]` (value noise on a square lattice).
#[derive(Debug, Clone, PartialEq)]
struct ValueNoise {
    nx: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new<R: Rng>(nx: usize, rng: &mut R) -> Self {
        let values = (0..nx * nx).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self { nx, values }
    }

    /// `x`, `y` in lattice units.
    fn at(&self, x: f64, y: f64) -> f64 {
        let lim = (self.nx - 1) as f64;
        let (x, y) = (x.clamp(0.0, lim), y.clamp(0.0, lim));
        let (i, j) = ((x.floor() as usize).min(self.nx - 2), (y.floor() as usize).min(self.nx - 2));
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (s(x - i as f64), s(y - j as f64));
        let v = |a: usize, b: usize| self.values[b * self.nx + a];
        let top = v(i, j) * (1.0 - fx) + v(i + 1, j) * fx;
        let bot = v(i, j + 1) * (1.0 - fx) + v(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

/// Generator state that evaluates the ground-truth paths at any position.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneField {
    origin: [f64; 2],
    corr_length: f64,
    /// Per path: base (τ, u, v, power dB).
    bases: Vec<[f64; 4]>,
    drift: [f64; 4],
    fields: Vec<[ValueNoise; 4]>,
    beta: Option<f64>,
    delay_bound: f64,
}

impl SceneField {
    pub fn paths_at(&self, q: [f64; 2]) -> PathSet {
        self.paths_with_beta(q, self.beta)
    }

    fn paths_with_beta(&self, q: [f64; 2], beta: Option<f64>) -> PathSet {
        let x = (q[0] - self.origin[0]) / self.corr_length;
        let y = (q[1] - self.origin[1]) / self.corr_length;
        let mut paths: Vec<PathParams> = self
            .bases
            .iter()
            .zip(&self.fields)
            .map(|(b, f)| {
                let val = |k: usize| b[k] + self.drift[k] * f[k].at(x, y);
                let tau = val(0).clamp(0.0, self.delay_bound);
                let u = val(1);
                let theta = u.acos();
                let phi = (val(2) / theta.sin()).clamp(-1.0, 1.0).acos();
                let mut rho = 10f64.powf(val(3) / 10.0);
                if let Some(beta) = beta {
                    rho *= (-tau / beta).exp();
                }
                PathParams { tau, theta, phi, rho }
            })
            .collect();
        let total: f64 = paths.iter().map(|p| p.rho).sum();
        for p in &mut paths {
            p.rho /= total;
        }
        PathSet::new(paths)
    }

    pub fn decay_constant(&self) -> Option<f64> {
        self.beta
    }
}

/// Grid-partitioned scene with one ground-truth path set per grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScene {
    pub layout: GridLayout,
    pub grids: Vec<PathSet>,
    /// Present for generated scenes; loaded scenes are piecewise constant.
    pub field: Option<SceneField>,
}

impl GridScene {
    pub fn u(&self) -> usize {
        self.grids.len()
    }

    pub fn lbar(&self) -> usize {
        self.grids.iter().map(PathSet::len).max().unwrap_or(0)
    }

    /// Ground-truth paths at an arbitrary in-coverage position.
    pub fn paths_at(&self, q: [f64; 2]) -> Result<PathSet, crate::database::DbError> {
        match &self.field {
            Some(f) => {
                self.layout.grid_of_location(q)?;
                Ok(f.paths_at(q))
            }
            None => Ok(self.grids[self.layout.grid_of_location(q)?].clone()),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "#scene v1, d={}, U={}, Lbar={}, cols={}, origin_x={}, origin_y={}\n",
            self.layout.d,
            self.u(),
            self.lbar(),
            self.layout.cols,
            self.layout.origin[0],
            self.layout.origin[1]
        );
        write_path_rows(&mut s, &self.grids);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, SceneError> {
        let (meta, grids) = parse_path_table(text, "#scene v1")?;
        let layout = layout_from_meta(&meta, grids.len())?;
        Ok(Self { layout, grids, field: None })
    }
}

pub(crate) const PATH_COLUMNS: &str = "grid_id,l,tau_s,theta_rad,phi_rad,rho";

pub(crate) fn write_path_rows(s: &mut String, grids: &[PathSet]) {
    s.push_str(PATH_COLUMNS);
    s.push('\n');
    for (g, set) in grids.iter().enumerate() {
        for (l, p) in set.paths.iter().enumerate() {
            let _ = writeln!(s, "{g},{l},{},{},{},{}", p.tau, p.theta, p.phi, p.rho);
        }
    }
}

pub(crate) fn layout_from_meta(
    meta: &BTreeMap<String, String>,
    u: usize,
) -> Result<GridLayout, SceneError> {
    let num = |k: &str| -> Result<Option<f64>, SceneError> {
        meta.get(k)
            .map(|v| v.parse::<f64>().map_err(|_| SceneError::Parse(format!("bad value for {k}: {v}"))))
            .transpose()
    };
    let d = num("d")?.ok_or_else(|| SceneError::Parse("missing d".into()))?;
    let declared = num("U")?.ok_or_else(|| SceneError::Parse("missing U".into()))? as usize;
    if declared != u {
        return Err(SceneError::Parse(format!("header U={declared} but {u} grids present")));
    }
    let cols = num("cols")?.map(|c| c as usize).unwrap_or(u).max(1);
    if !u.is_multiple_of(cols) {
        return Err(SceneError::Parse(format!("U={u} not divisible by cols={cols}")));
    }
    let origin = [num("origin_x")?.unwrap_or(0.0), num("origin_y")?.unwrap_or(0.0)];
    if !(d > 0.0) {
        return Err(SceneError::Parse("d must be positive".into()));
    }
    Ok(GridLayout::new(origin, d, cols, u / cols))
}

/// Parses the shared header + path-row format. Grids appear in id order; every
/// id below the header's `U` must have at least one row.
pub(crate) fn parse_path_table(
    text: &str,
    magic: &str,
) -> Result<(BTreeMap<String, String>, Vec<PathSet>), SceneError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| SceneError::Parse("empty file".into()))?;
    let rest = header
        .strip_prefix(magic)
        .ok_or_else(|| SceneError::Parse(format!("expected header starting with {magic:?}")))?;
    let mut meta = BTreeMap::new();
    for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| SceneError::Parse(format!("bad header field {kv:?}")))?;
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }
    let u: usize = meta
        .get("U")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SceneError::Parse("missing or bad U".into()))?;
    let mut grids = vec![PathSet::default(); u];
    for line in lines {
        if line.starts_with("grid_id") || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(SceneError::Parse(format!("expected 6 fields: {line:?}")));
        }
        let bad = || SceneError::Parse(format!("bad row {line:?}"));
        let g: usize = f[0].parse().map_err(|_| bad())?;
        let l: usize = f[1].parse().map_err(|_| bad())?;
        let v: Vec<f64> = f[2..]
            .iter()
            .map(|x| x.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let set = grids.get_mut(g).ok_or_else(|| SceneError::Parse(format!("grid {g} >= U")))?;
        if l != set.paths.len() {
            return Err(SceneError::Parse(format!("grid {g}: path index {l} out of order")));
        }
        set.paths.push(PathParams::new(v[0], v[1], v[2], v[3]));
    }
    if let Some(g) = grids.iter().position(PathSet::is_empty) {
        return Err(SceneError::Parse(format!("grid {g} has no paths")));
    }
    Ok((meta, grids))
}

/// Sorted-uniform placement of `n` values in `[lo, hi]` with pairwise gap ≥ `gap`.
fn spaced_values<R: Rng>(n: usize, lo: f64, hi: f64, gap: f64, rng: &mut R) -> Option<Vec<f64>> {
    let slack = hi - lo - gap * (n.saturating_sub(1)) as f64;
    if slack < 0.0 {
        return None;
    }
    let mut draws: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    draws.sort_by(f64::total_cmp);
    Some(draws.iter().enumerate().map(|(k, x)| lo + x + gap * k as f64).collect())
}

pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<GridScene, SceneError> {
    let p = params;
    if p.lbar == 0 {
        return Err(SceneError::Infeasible("Lbar must be at least 1".into()));
    }
    if !(p.corr_length > 0.0) {
        return Err(SceneError::Infeasible("correlation length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.lbar;
    let infeasible = |what: &str| {
        SceneError::Infeasible(format!(
            "{n} paths do not fit the {what} range with the configured separation"
        ))
    };
    let taus = spaced_values(
        n,
        p.drift_tau,
        p.delay_bound - p.drift_tau,
        p.sep_tau + 2.0 * p.drift_tau,
        &mut rng,
    )
    .ok_or_else(|| infeasible("delay"))?;
    let mut us = spaced_values(
        n,
        U_RANGE.0 + p.drift_u,
        U_RANGE.1 - p.drift_u,
        p.sep_u + 2.0 * p.drift_u,
        &mut rng,
    )
    .ok_or_else(|| infeasible("elevation"))?;
    let mut vs = spaced_values(
        n,
        V_RANGE.0 + p.drift_v,
        V_RANGE.1 - p.drift_v,
        p.sep_v + 2.0 * p.drift_v,
        &mut rng,
    )
    .ok_or_else(|| infeasible("azimuth"))?;
    us.shuffle(&mut rng);
    vs.shuffle(&mut rng);
    let bases: Vec<[f64; 4]> = (0..n)
        .map(|l| {
            let pw = if n == 1 {
                0.0
            } else {
                rng.random_range(-0.5..=0.5) * p.power_spread_db
            };
            [taus[l], us[l], vs[l], pw]
        })
        .collect();
    let span = p.layout.cols.max(p.layout.rows) as f64 * p.layout.d;
    let nx = (span / p.corr_length).ceil() as usize + 2;
    let fields = (0..n)
        .map(|_| std::array::from_fn(|_| ValueNoise::new(nx, &mut rng)))
        .collect();
    let mut field = SceneField {
        origin: p.layout.origin,
        corr_length: p.corr_length,
        bases,
        drift: [p.drift_tau, p.drift_u, p.drift_v, p.shadow_db],
        fields,
        beta: None,
        delay_bound: p.delay_bound,
    };
    let centres: Vec<[f64; 2]> = (0..p.layout.len()).map(|g| p.layout.centre(g)).collect();
    if let Some(target) = p.rms_delay_spread {
        field.beta = Some(fit_decay(&field, &centres, target)?);
    }
    let grids = centres.iter().map(|&c| field.paths_at(c)).collect();
    Ok(GridScene { layout: p.layout.clone(), grids, field: Some(field) })
}

fn mean_spread(field: &SceneField, centres: &[[f64; 2]], beta: Option<f64>) -> f64 {
    centres
        .iter()
        .map(|&c| field.paths_with_beta(c, beta).rms_delay_spread())
        .sum::<f64>()
        / centres.len() as f64
}

/// Exponential decay constant giving the requested mean RMS delay spread.
fn fit_decay(field: &SceneField, centres: &[[f64; 2]], target: f64) -> Result<f64, SceneError> {
    let (mut lo, mut hi) = (1e-12f64.ln(), 1e-2f64.ln());
    let top = mean_spread(field, centres, Some(hi.exp()));
    if target > top || !(target > 0.0) {
        return Err(SceneError::Infeasible(format!(
            "RMS delay spread {target:.3e} s unattainable (max {top:.3e} s)"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_spread(field, centres, Some(mid.exp())) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
