//! Type II DMRS: comb mapping, cover codes, received-signal synthesis and the
//! LS / despreading baseline.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::CDM_GROUPS;
use crate::estimators::interp::interpolate_at;
use crate::{CMat, CVec, SystemConfig, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmrsError {
    #[error("CDM group {0} out of range (G = 3)")]
    BadGroup(usize),
    #[error("n_c = {0} is not a multiple of 6")]
    BadCarrierCount(usize),
    #[error("cyclic shift {shift} not in {{0, N/4, N/2, 3N/4}} for N = {n}")]
    BadShift { shift: usize, n: usize },
    #[error("{0}")]
    Config(String),
}

/// 0-based pilot subcarriers of CDM group `i`: pairs `{6m + 2i, 6m + 2i + 1}`.
pub fn pilot_subcarrier_set(i: usize, n_c: usize) -> Result<Vec<usize>, DmrsError> {
    if i >= CDM_GROUPS {
        return Err(DmrsError::BadGroup(i));
    }
    if !n_c.is_multiple_of(6) {
        return Err(DmrsError::BadCarrierCount(n_c));
    }
    Ok((0..n_c / 6).flat_map(|m| [6 * m + 2 * i, 6 * m + 2 * i + 1]).collect())
}

/// Diagonal of `C_k`, entry `n` equal to `exp(j 2π n Δ / N)`.
pub fn freq_occ_diag(shift: usize, n: usize) -> Result<CVec, DmrsError> {
    if !n.is_multiple_of(4) || !shift.is_multiple_of((n / 4).max(1)) || shift >= n {
        return Err(DmrsError::BadShift { shift, n });
    }
    Ok(CVec::from_fn(n, |i, _| {
        C64::from_polar(1.0, 2.0 * PI * ((i * shift) % n) as f64 / n as f64)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OccSet {
    U1,
    U2,
}

/// Time cover: all `+1` for `U1`, alternating `+1, -1` for `U2`.
pub fn time_occ_signs(set: OccSet, t_p: usize) -> Vec<f64> {
    (0..t_p)
        .map(|t| match set {
            OccSet::U1 => 1.0,
            OccSet::U2 => {
                if t % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrsAllocation {
    pub user: usize,
    pub group: usize,
    pub shift: usize,
    pub occ_set: OccSet,
    pub time_occ: Vec<f64>,
}

pub fn assign_allocations(cfg: &SystemConfig) -> Result<Vec<DmrsAllocation>, DmrsError> {
    cfg.validate().map_err(|e| DmrsError::Config(e.to_string()))?;
    let n = cfg.n_pilot();
    let per_group = cfg.users_per_group();
    let per_set = per_group / 2;
    Ok((0..cfg.k_users)
        .map(|k| {
            let group = k / per_group;
            let j = k % per_group;
            let occ_set = if j < per_set { OccSet::U1 } else { OccSet::U2 };
            DmrsAllocation {
                user: k,
                group,
                shift: (j % per_set) * n / 4,
                occ_set,
                time_occ: time_occ_signs(occ_set, cfg.t_p),
            }
        })
        .collect())
}

/// Unit-modulus QPSK pilot sequences, one per CDM group.
pub fn pilot_sequences<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<CVec> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..cfg.g_groups)
        .map(|_| {
            CVec::from_fn(cfg.n_pilot(), |_, _| {
                let b: u8 = rng.random_range(0..4);
                C64::new(
                    if b & 1 == 0 { s } else { -s },
                    if b & 2 == 0 { s } else { -s },
                )
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupBlock {
    pub pilot_idx: Vec<usize>,
    pub seq: CVec,
    /// `Y_i(t)`, one `N × M` block per pilot symbol.
    pub y: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotGrid {
    pub groups: Vec<GroupBlock>,
}

pub(crate) fn complex_noise<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> CMat {
    let s = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        C64::new(x * s, y * s)
    })
}

/// `Y_i(t) = Σ_k w_{t,k} S_i C_k P_i H_k(t) + N(t)`.
///
/// `channels[k][t]` is the `n_c × M` channel of user `k` during pilot symbol `t`.
pub fn synth_received<R: Rng + ?Sized>(
    channels: &[Vec<CMat>],
    allocs: &[DmrsAllocation],
    pilots: &[CVec],
    noise_var: f64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<PilotGrid, DmrsError> {
    let (n, m) = (cfg.n_pilot(), cfg.n_antennas());
    let mut groups = Vec::with_capacity(cfg.g_groups);
    for (i, seq) in pilots.iter().enumerate().take(cfg.g_groups) {
        let pilot_idx = pilot_subcarrier_set(i, cfg.n_c)?;
        let mut y = vec![CMat::zeros(n, m); cfg.t_p];
        for a in allocs.iter().filter(|a| a.group == i) {
            let c = freq_occ_diag(a.shift, n)?;
            for (t, yt) in y.iter_mut().enumerate() {
                let h = &channels[a.user][t];
                let w = a.time_occ[t];
                for col in 0..m {
                    for (r, &p) in pilot_idx.iter().enumerate() {
                        yt[(r, col)] += seq[r] * c[r] * h[(p, col)] * w;
                    }
                }
            }
        }
        if noise_var > 0.0 {
            for yt in &mut y {
                *yt += complex_noise(n, m, noise_var, rng);
            }
        }
        groups.push(GroupBlock { pilot_idx, seq: seq.clone(), y });
    }
    Ok(PilotGrid { groups })
}

/// `S_iᴴ Y`.
pub fn ls_depilot(y: &CMat, seq: &CVec) -> CMat {
    let mut out = y.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row *= seq[r].conj();
    }
    out
}

/// `(1/T_p) Σ_t w_t Ŷ(t)`.
pub fn time_occ_decouple(y_ls: &[CMat], signs: &[f64]) -> CMat {
    let mut acc = CMat::zeros(y_ls[0].nrows(), y_ls[0].ncols());
    for (y, &w) in y_ls.iter().zip(signs) {
        acc += y * C64::new(w, 0.0);
    }
    acc / C64::new(y_ls.len() as f64, 0.0)
}

/// Depilots every symbol of a group and decouples the OCC set of `alloc`.
pub fn decoupled_ls(block: &GroupBlock, alloc: &DmrsAllocation) -> CMat {
    let y_ls: Vec<CMat> = block.y.iter().map(|y| ls_depilot(y, &block.seq)).collect();
    time_occ_decouple(&y_ls, &alloc.time_occ)
}

/// Smallest block length in `{1, 2, 4}` over which every pair of shifts in
/// `shifts` is orthogonal.
pub fn despread_length(shifts: &[usize], n: usize) -> usize {
    let mut len = 1;
    for (a, &p) in shifts.iter().enumerate() {
        for &q in &shifts[a + 1..] {
            let d = (p + n - q) % n;
            if d == 0 {
                continue;
            }
            let need = if d == n / 2 { 2 } else { 4 };
            len = len.max(need);
        }
    }
    len
}

/// Trivial baseline: LS, time-OCC decoupling, block despreading under a
/// locally-flat assumption, then linear interpolation onto all `n_c` subcarriers.
///
/// Returns one `n_c × M` estimate per allocation, in allocation order.
pub fn trivial_estimate(grid: &PilotGrid, allocs: &[DmrsAllocation], cfg: &SystemConfig) -> Vec<CMat> {
    let n = cfg.n_pilot();
    allocs
        .iter()
        .map(|a| {
            let block = &grid.groups[a.group];
            let y = decoupled_ls(block, a);
            let shifts: Vec<usize> = allocs
                .iter()
                .filter(|b| b.group == a.group && b.occ_set == a.occ_set)
                .map(|b| b.shift)
                .collect();
            let len = despread_length(&shifts, n);
            let c = freq_occ_diag(a.shift, n).expect("validated allocation");
            let nb = n / len;
            let mut est = CMat::zeros(nb, y.ncols());
            let mut pos = Vec::with_capacity(nb);
            for b in 0..nb {
                let rows = b * len..(b + 1) * len;
                pos.push(rows.clone().map(|r| block.pilot_idx[r] as f64).sum::<f64>() / len as f64);
                for col in 0..y.ncols() {
                    let s: C64 = rows.clone().map(|r| c[r].conj() * y[(r, col)]).sum();
                    est[(b, col)] = s / len as f64;
                }
            }
            interpolate_at(&est, &pos, cfg.n_c)
        })
        .collect()
}

/// Debug dump of the received blocks: `group,t,subcarrier,antenna,re,im`.
pub fn dump_received_csv(grid: &PilotGrid) -> String {
    let mut s = String::from("group,t,subcarrier,antenna,re,im\n");
    for (g, block) in grid.groups.iter().enumerate() {
        for (t, y) in block.y.iter().enumerate() {
            for (r, &sc) in block.pilot_idx.iter().enumerate() {
                for a in 0..y.ncols() {
                    let z = y[(r, a)];
                    let _ = writeln!(s, "{g},{t},{sc},{a},{},{}", z.re, z.im);
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{draw_gains, synth_channel, GainModel, PathParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pilot_sets_examples_and_partition() {
        assert_eq!(pilot_subcarrier_set(0, 12).unwrap(), vec![0, 1, 6, 7]);
        assert_eq!(pilot_subcarrier_set(2, 12).unwrap(), vec![4, 5, 10, 11]);
        assert!(pilot_subcarrier_set(3, 12).is_err());
        let mut all: Vec<usize> = (0..3).flat_map(|i| pilot_subcarrier_set(i, 816).unwrap()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..816).collect::<Vec<_>>());
    }

    #[test]
    fn occ_diag_examples() {
        assert!(freq_occ_diag(0, 8).unwrap().iter().all(|z| *z == C64::new(1.0, 0.0)));
        let half = freq_occ_diag(4, 8).unwrap();
        for (i, z) in half.iter().enumerate() {
            assert!((z - if i % 2 == 0 { 1.0 } else { -1.0 }).norm() < 1e-15);
        }
        let q = freq_occ_diag(2, 8).unwrap();
        let want = [1.0, 0.0, -1.0, 0.0].map(|r| r);
        for i in 0..8 {
            let w = C64::new(want[i % 4], [0.0, 1.0, 0.0, -1.0][i % 4]);
            assert!((q[i] - w).norm() < 1e-15);
        }
        assert!(freq_occ_diag(3, 8).is_err());
    }

    #[test]
    fn comb_orthogonality() {
        let n = 32;
        for p in (0..4).map(|k| k * n / 4) {
            for q in (0..4).map(|k| k * n / 4) {
                let s: C64 = freq_occ_diag(p, n)
                    .unwrap()
                    .iter()
                    .zip(freq_occ_diag(q, n).unwrap().iter())
                    .map(|(a, b)| a * b.conj())
                    .sum();
                let want = if p == q { n as f64 } else { 0.0 };
                assert!((s - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn allocations_for_table_config() {
        let cfg = SystemConfig::paper_scale();
        let al = assign_allocations(&cfg).unwrap();
        assert_eq!(al.len(), 24);
        for g in 0..3 {
            for set in [OccSet::U1, OccSet::U2] {
                let mut s: Vec<usize> =
                    al.iter().filter(|a| a.group == g && a.occ_set == set).map(|a| a.shift).collect();
                s.sort_unstable();
                assert_eq!(s, vec![0, 68, 136, 204]);
            }
        }
        let mut small = SystemConfig::desk();
        small.k_users = 6;
        assert!(assign_allocations(&small).unwrap().iter().all(|a| a.shift == 0));
        for a in &al {
            for b in &al {
                let dot: f64 = a.time_occ.iter().zip(&b.time_occ).map(|(x, y)| x * y).sum::<f64>() / 2.0;
                assert_eq!(dot, if a.occ_set == b.occ_set { 1.0 } else { 0.0 });
            }
        }
    }

    fn random_channels(cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<CMat>> {
        (0..cfg.k_users)
            .map(|_| {
                let paths: Vec<PathParams> = (0..3)
                    .map(|_| {
                        PathParams::new(rng.random::<f64>() * 1e-6, rng.random_range(0.3..2.8), rng.random_range(0.3..2.8), 1.0)
                    })
                    .collect();
                let g = draw_gains(&paths, GainModel::Rayleigh, rng);
                let h = synth_channel(&paths, &g, cfg.n_c, cfg.delta_f, cfg.m_v, cfg.m_h);
                vec![h; cfg.t_p]
            })
            .collect()
    }

    #[test]
    fn synthesis_matches_loop_oracle() {
        let cfg = SystemConfig { k_users: 24, ..SystemConfig::desk() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let al = assign_allocations(&cfg).unwrap();
        let pilots = pilot_sequences(&cfg, &mut rng);
        let ch = random_channels(&cfg, &mut rng);
        let grid = synth_received(&ch, &al, &pilots, 0.0, &cfg, &mut rng).unwrap();
        let n = cfg.n_pilot();
        for i in 0..3 {
            let p = pilot_subcarrier_set(i, cfg.n_c).unwrap();
            for t in 0..cfg.t_p {
                for r in 0..n {
                    for m in 0..cfg.n_antennas() {
                        let mut acc = C64::new(0.0, 0.0);
                        for a in al.iter().filter(|a| a.group == i) {
                            let ph = 2.0 * PI * (r * a.shift) as f64 / n as f64;
                            acc += pilots[i][r] * C64::from_polar(a.time_occ[t], ph) * ch[a.user][t][(p[r], m)];
                        }
                        assert!((grid.groups[i].y[t][(r, m)] - acc).norm() < 1e-12 * acc.norm().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn decoupling_cancels_other_set_and_keeps_own() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let al = assign_allocations(&cfg).unwrap();
        let pilots = pilot_sequences(&cfg, &mut rng);
        let ch = random_channels(&cfg, &mut rng);
        let grid = synth_received(&ch, &al, &pilots, 0.0, &cfg, &mut rng).unwrap();
        let n = cfg.n_pilot();
        let target = &al[0];
        let p = &grid.groups[0].pilot_idx;
        let got = decoupled_ls(&grid.groups[0], target);
        let mut want = CMat::zeros(n, cfg.n_antennas());
        for a in al.iter().filter(|a| a.group == 0 && a.occ_set == OccSet::U1) {
            let c = freq_occ_diag(a.shift, n).unwrap();
            for r in 0..n {
                for m in 0..cfg.n_antennas() {
                    want[(r, m)] += c[r] * ch[a.user][0][(p[r], m)];
                }
            }
        }
        assert!((got - &want).norm() < 1e-12 * want.norm());

        let only_u2: Vec<DmrsAllocation> = al.iter().filter(|a| a.occ_set == OccSet::U2).cloned().collect();
        let g2 = synth_received(&ch, &only_u2, &pilots, 0.0, &cfg, &mut rng).unwrap();
        assert!(decoupled_ls(&g2.groups[0], target).norm() < 1e-12);
    }

    #[test]
    fn decoupled_noise_power() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = vec![vec![CMat::zeros(cfg.n_c, cfg.n_antennas()); cfg.t_p]; cfg.k_users];
        let al = assign_allocations(&cfg).unwrap();
        let pilots = pilot_sequences(&cfg, &mut rng);
        let var = 0.7;
        let (mut acc, mut cnt) = (0.0, 0usize);
        while cnt < 100_000 {
            let grid = synth_received(&zero, &al, &pilots, var, &cfg, &mut rng).unwrap();
            for a in al.iter().filter(|a| a.shift == 0) {
                let y = decoupled_ls(&grid.groups[a.group], a);
                acc += y.norm_squared();
                cnt += y.len();
            }
        }
        let measured = acc / cnt as f64;
        assert!((measured / (var / cfg.t_p as f64) - 1.0).abs() < 0.03, "{measured}");
    }

    #[test]
    fn trivial_recovers_flat_channels() {
        let cfg = SystemConfig { k_users: 24, ..SystemConfig::desk() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let al = assign_allocations(&cfg).unwrap();
        let pilots = pilot_sequences(&cfg, &mut rng);
        let ch: Vec<Vec<CMat>> = (0..cfg.k_users)
            .map(|_| {
                let row = CMat::from_fn(1, cfg.n_antennas(), |_, _| C64::new(rng.random(), rng.random()));
                vec![CMat::from_fn(cfg.n_c, cfg.n_antennas(), |_, m| row[(0, m)]); cfg.t_p]
            })
            .collect();
        let grid = synth_received(&ch, &al, &pilots, 0.0, &cfg, &mut rng).unwrap();
        let est = trivial_estimate(&grid, &al, &cfg);
        for (e, a) in est.iter().zip(&al) {
            assert!((e - &ch[a.user][0]).norm() < 1e-12 * e.norm());
        }
        assert_eq!(despread_length(&[0, 16], 32), 2);
        assert_eq!(despread_length(&[0, 8], 32), 4);
        assert_eq!(despread_length(&[0], 32), 1);
    }

    proptest! {
        #[test]
        fn depilot_inverts_pilots(seed in any::<u64>()) {
            let cfg = SystemConfig::desk();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = &pilot_sequences(&cfg, &mut rng)[0];
            let y = CMat::from_fn(cfg.n_pilot(), 3, |_, _| C64::new(rng.random(), rng.random()));
            let mut sy = y.clone();
            for (r, mut row) in sy.row_iter_mut().enumerate() {
                row *= s[r];
            }
            prop_assert!((ls_depilot(&sy, s) - y).norm() < 1e-13);
            prop_assert!(s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
    }
}
