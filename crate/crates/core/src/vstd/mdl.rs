//! Model-order selection by minimum description length.

/// Eigenvalues below this fraction of the largest are raised to it.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MdlResult {
    pub rank: usize,
    /// Score for each candidate order `0..p`.
    pub scores: Vec<f64>,
    /// Set when the minimum sits at order 0 (flat spectrum); `rank` is then 1.
    pub degenerate: bool,
}

/// Wax–Kailath MDL on the squared singular values `sv` (descending) with
/// `samples` observations:
/// `MDL(k) = -(p-k) N ln(g_k / a_k) + k (2p - k) ln(N) / 2`, where `g_k` and
/// `a_k` are the geometric and arithmetic means of the `p - k` smallest
/// eigenvalues.
pub fn estimate_rank_mdl(sv: &[f64], samples: usize) -> MdlResult {
    let p = sv.len();
    if p == 0 {
        return MdlResult { rank: 1, scores: Vec::new(), degenerate: true };
    }
    let top = sv[0] * sv[0];
    if !(top > 0.0) {
        return MdlResult { rank: 1, scores: vec![0.0; p], degenerate: true };
    }
    let lam: Vec<f64> = sv.iter().map(|s| (s * s).max(EIGEN_FLOOR * top)).collect();
    let n = samples.max(1) as f64;
    let mut scores = Vec::with_capacity(p);
    for k in 0..p {
        let tail = &lam[k..];
        let m = tail.len() as f64;
        let log_geo = tail.iter().map(|x| x.ln()).sum::<f64>() / m;
        let arith = tail.iter().sum::<f64>() / m;
        let fit = -(m * n) * (log_geo - arith.ln());
        let penalty = 0.5 * (k * (2 * p - k)) as f64 * n.ln();
        scores.push(fit + penalty);
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if best == 0 {
        log::warn!("MDL found no dominant component; using rank 1");
        MdlResult { rank: 1, scores, degenerate: true }
    } else {
        MdlResult { rank: best, scores, degenerate: false }
    }
}
