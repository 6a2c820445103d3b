//! Choice of smoothing window sizes and the identifiability check.

use std::str::FromStr;

use super::tensor::SmoothingParams;
use super::VstdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Uniqueness {
    /// `(K1 - 1) K2 K3`.
    pub shifted_rows: usize,
    /// `L1 L2 L3 W`.
    pub columns: usize,
    pub lbar: usize,
}

impl Uniqueness {
    pub fn bound(&self) -> usize {
        self.shifted_rows.min(self.columns)
    }

    pub fn holds(&self) -> bool {
        self.bound() >= self.lbar
    }
}

pub fn check_uniqueness(p: &SmoothingParams, w: usize, lbar: usize) -> Uniqueness {
    Uniqueness {
        shifted_rows: (p.k[0] - 1) * p.k[1] * p.k[2],
        columns: p.blocks() * w,
        lbar,
    }
}

fn bound_of(k: [usize; 3], dims: [usize; 3], w: usize) -> usize {
    let l: usize = (0..3).map(|s| dims[s] + 1 - k[s]).product();
    ((k[0] - 1) * k[1] * k[2]).min(l * w)
}

/// Smallest admissible `K` per mode: the delay mode needs a shift, the two
/// angular modes need two rows each for their shift quotients.
fn min_k(dims: [usize; 3]) -> Result<[usize; 3], VstdError> {
    if dims[0] < 2 || dims[1] < 2 || dims[2] < 2 {
        return Err(VstdError::Smoothing(format!(
            "every mode needs at least two samples, got {dims:?}"
        )));
    }
    Ok([2, 2, 2])
}

/// Exhaustive search for the split maximising `min((K1-1)K2K3, L1L2L3W)`.
/// Ties go to the smallest `K1 K2 K3`, which keeps the SVD cheap.
pub fn best_split(dims: [usize; 3], w: usize) -> Result<SmoothingParams, VstdError> {
    let lo = min_k(dims)?;
    let mut best: Option<([usize; 3], usize)> = None;
    for k1 in lo[0]..=dims[0] {
        for k2 in lo[1]..=dims[1] {
            for k3 in lo[2]..=dims[2] {
                let k = [k1, k2, k3];
                let b = bound_of(k, dims, w);
                let better = match best {
                    None => true,
                    Some((bk, bb)) => b > bb || (b == bb && k1 * k2 * k3 < bk.iter().product()),
                };
                if better {
                    best = Some((k, b));
                }
            }
        }
    }
    SmoothingParams::new(best.expect("non-empty search").0, dims)
}

/// Start at `K_s = ceil((dim_s + 1) / 2)` and hill-climb one step at a time.
pub fn balanced_split(dims: [usize; 3], w: usize) -> Result<SmoothingParams, VstdError> {
    let lo = min_k(dims)?;
    let mut k = [0; 3];
    for s in 0..3 {
        k[s] = (dims[s] + 1).div_ceil(2).clamp(lo[s], dims[s]);
    }
    let mut cur = bound_of(k, dims, w);
    loop {
        let mut step: Option<([usize; 3], usize)> = None;
        for s in 0..3 {
            for delta in [-1i64, 1] {
                let ks = k[s] as i64 + delta;
                if ks < lo[s] as i64 || ks > dims[s] as i64 {
                    continue;
                }
                let mut cand = k;
                cand[s] = ks as usize;
                let b = bound_of(cand, dims, w);
                if b > cur && step.is_none_or(|(_, sb)| b > sb) {
                    step = Some((cand, b));
                }
            }
        }
        match step {
            Some((cand, b)) => {
                k = cand;
                cur = b;
            }
            None => break,
        }
    }
    SmoothingParams::new(k, dims)
}

/// How the smoothing windows are chosen for each grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothingPolicy {
    /// Near-half splits on all three modes, then local search.
    #[default]
    Balanced,
    /// Only the delay mode is smoothed, with `L1 = l1`; angular modes keep the full aperture.
    Light { l1: usize },
    /// Exhaustive search over all splits.
    Best,
    /// Fixed `K` per mode.
    Fixed { k: [usize; 3] },
}

impl SmoothingPolicy {
    pub fn resolve(&self, dims: [usize; 3], w: usize) -> Result<SmoothingParams, VstdError> {
        match *self {
            Self::Balanced => balanced_split(dims, w),
            Self::Best => best_split(dims, w),
            Self::Light { l1 } => {
                min_k(dims)?;
                if l1 == 0 || l1 >= dims[0] {
                    return Err(VstdError::Smoothing(format!("L1 = {l1} must be in [1, {})", dims[0])));
                }
                SmoothingParams::new([dims[0] + 1 - l1, dims[1], dims[2]], dims)
            }
            Self::Fixed { k } => {
                let lo = min_k(dims)?;
                if (0..3).any(|s| k[s] < lo[s]) {
                    return Err(VstdError::Smoothing(format!("K = {k:?} below minimum {lo:?}")));
                }
                SmoothingParams::new(k, dims)
            }
        }
    }
}

impl FromStr for SmoothingPolicy {
    type Err = String;

    /// `balanced`, `best`, `light:<L1>` or `fixed:<K1>,<K2>,<K3>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "balanced" => return Ok(Self::Balanced),
            "best" => return Ok(Self::Best),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("light:") {
            let l1 = v.trim().parse().map_err(|e| format!("bad L1 {v:?}: {e}"))?;
            return Ok(Self::Light { l1 });
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let parts: Vec<usize> = v
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("bad K list {v:?}: {e}"))?;
            let k: [usize; 3] = parts.try_into().map_err(|_| format!("need three K values, got {v:?}"))?;
            return Ok(Self::Fixed { k });
        }
        Err(format!("unknown smoothing policy {s:?}"))
    }
}

impl std::fmt::Display for SmoothingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Balanced => write!(f, "balanced"),
            Self::Best => write!(f, "best"),
            Self::Light { l1 } => write!(f, "light:{l1}"),
            Self::Fixed { k } => write!(f, "fixed:{},{},{}", k[0], k[1], k[2]),
        }
    }
}
