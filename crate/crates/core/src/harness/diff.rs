//! Parameter-level comparison of estimated and ground-truth path sets.

use std::f64::consts::PI;

use crate::scene::{PathParams, PathSet};

/// Delay below which relative delay errors are measured against this floor.
pub const DELAY_FLOOR: f64 = 1e-9;

/// Largest relative error per parameter over matched pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamErrors {
    pub tau: f64,
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
    /// Paths left without a partner on either side.
    pub unmatched: usize,
}

impl ParamErrors {
    pub fn max(&self) -> f64 {
        self.tau.max(self.theta).max(self.phi).max(self.rho)
    }

    pub fn merge(&mut self, o: &ParamErrors) {
        self.tau = self.tau.max(o.tau);
        self.theta = self.theta.max(o.theta);
        self.phi = self.phi.max(o.phi);
        self.rho = self.rho.max(o.rho);
        self.unmatched += o.unmatched;
    }
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Generator phases `(2πΔf τ, π cos θ, π sin θ cos φ)`.
fn phases(p: &PathParams, delta_f: f64) -> [f64; 3] {
    [2.0 * PI * delta_f * p.tau, PI * p.theta.cos(), PI * p.theta.sin() * p.phi.cos()]
}

/// Greedy nearest-generator assignment; returns `(estimate, truth)` index pairs.
pub fn greedy_match(est: &[PathParams], truth: &[PathParams], delta_f: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(est.len() * truth.len());
    for (i, e) in est.iter().enumerate() {
        let pe = phases(e, delta_f);
        for (j, t) in truth.iter().enumerate() {
            let pt = phases(t, delta_f);
            let d: f64 = (0..3).map(|k| wrap(pe[k] - pt[k]).powi(2)).sum();
            cand.push((d, i, j));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut used_e, mut used_t) = (vec![false; est.len()], vec![false; truth.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in cand {
        if !used_e[i] && !used_t[j] {
            used_e[i] = true;
            used_t[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

pub fn compare_paths(est: &PathSet, truth: &PathSet, delta_f: f64) -> ParamErrors {
    let pairs = greedy_match(&est.paths, &truth.paths, delta_f);
    let mut e = ParamErrors {
        unmatched: est.len() + truth.len() - 2 * pairs.len(),
        ..Default::default()
    };
    for (i, j) in pairs {
        let (a, b) = (&est.paths[i], &truth.paths[j]);
        e.tau = e.tau.max(rel(a.tau, b.tau, DELAY_FLOOR));
        e.theta = e.theta.max(rel(a.theta, b.theta, 0.0));
        e.phi = e.phi.max(rel(a.phi, b.phi, 0.0));
        e.rho = e.rho.max(rel(a.rho, b.rho, f64::MIN_POSITIVE));
    }
    e
}
