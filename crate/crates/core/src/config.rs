//! System parameters shared by every stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Number of CDM groups in the Type II pattern.
pub const CDM_GROUPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_fft: usize,
    /// Data subcarriers.
    pub n_c: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    pub g_groups: usize,
    /// Pilot symbols per slot.
    pub t_p: usize,
    pub m_v: usize,
    pub m_h: usize,
    pub k_users: usize,
    /// Linear noise power per complex entry.
    pub noise_var: f64,
    pub kaiser_shape: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Scaled-down defaults for fast runs.
    pub fn desk() -> Self {
        Self {
            n_fft: 128,
            n_c: 96,
            delta_f: 30e3,
            g_groups: CDM_GROUPS,
            t_p: 2,
            m_v: 2,
            m_h: 8,
            k_users: 12,
            noise_var: 1e-2,
            kaiser_shape: 3.95,
        }
    }

    /// Full-size parameter set.
    pub fn paper_scale() -> Self {
        Self {
            n_fft: 4096,
            n_c: 816,
            delta_f: 30e3,
            g_groups: CDM_GROUPS,
            t_p: 2,
            m_v: 4,
            m_h: 16,
            k_users: 24,
            noise_var: 1e-2,
            kaiser_shape: 3.95,
        }
    }

    /// Pilot subcarriers per CDM group, `N = n_c / G`.
    pub fn n_pilot(&self) -> usize {
        self.n_c / self.g_groups
    }

    pub fn n_antennas(&self) -> usize {
        self.m_v * self.m_h
    }

    pub fn users_per_group(&self) -> usize {
        self.k_users / self.g_groups
    }

    pub fn users_per_set(&self) -> usize {
        self.users_per_group() / 2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.g_groups != CDM_GROUPS {
            return bad(format!("g_groups must be {CDM_GROUPS}, got {}", self.g_groups));
        }
        if self.n_c == 0 || !self.n_c.is_multiple_of(6) {
            return bad(format!("n_c = {} must be a positive multiple of 6", self.n_c));
        }
        if !self.n_pilot().is_multiple_of(4) {
            return bad(format!(
                "N = n_c/G = {} must be divisible by 4 for the cyclic shifts",
                self.n_pilot()
            ));
        }
        if self.n_fft < self.n_c {
            return bad(format!("n_fft = {} smaller than n_c = {}", self.n_fft, self.n_c));
        }
        if self.t_p == 0 || !self.t_p.is_multiple_of(2) {
            return bad(format!("t_p = {} must be even and positive", self.t_p));
        }
        if self.m_v == 0 || self.m_h == 0 {
            return bad("antenna counts must be at least 1".into());
        }
        if self.k_users == 0 || !self.k_users.is_multiple_of(2 * self.g_groups) {
            return bad(format!("k_users = {} must be a multiple of 2G", self.k_users));
        }
        if self.users_per_set() > 4 {
            return bad(format!(
                "{} users per OCC set exceeds the 4 available cyclic shifts",
                self.users_per_set()
            ));
        }
        if !(self.delta_f > 0.0) || !self.delta_f.is_finite() {
            return bad("delta_f must be positive".into());
        }
        if !(self.noise_var >= 0.0) {
            return bad("noise_var must be non-negative".into());
        }
        if !(self.kaiser_shape >= 0.0) {
            return bad("kaiser_shape must be non-negative".into());
        }
        Ok(())
    }
}
