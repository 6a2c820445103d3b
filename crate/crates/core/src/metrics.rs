//! NMSE and SCSI-accuracy metrics.

use crate::linalg::{hermitian_part, hermitian_solve, trace_re, LinalgError};
use crate::CMat;

/// Lower clamp for every dB value written out.
pub const DB_FLOOR: f64 = -200.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmse {
    pub db: f64,
    /// Pairs whose truth had zero norm.
    pub skipped: usize,
}

/// Mean over pairs of `10 log10(‖Ĥ − H‖² / ‖H‖²)`, each term floored at [`DB_FLOOR`].
///
/// Returns `None` when every truth is zero.
pub fn nmse(estimates: &[CMat], truths: &[CMat]) -> Option<Nmse> {
    assert_eq!(estimates.len(), truths.len(), "one estimate per truth");
    let mut sum = 0.0;
    let mut used = 0usize;
    for (e, h) in estimates.iter().zip(truths) {
        assert_eq!(e.shape(), h.shape(), "estimate and truth shapes differ");
        let den = h.norm_squared();
        if den == 0.0 {
            continue;
        }
        sum += to_db((e - h).norm_squared() / den);
        used += 1;
    }
    (used > 0).then(|| Nmse { db: sum / used as f64, skipped: truths.len() - used })
}

/// `Re tr(R − R R̃ (R̃ + σ² I)⁻¹) / dim`.
pub fn mismatched_mmse_error(r: &CMat, r_tilde: &CMat, sigma2: f64) -> Result<f64, LinalgError> {
    let n = r.nrows();
    if r.shape() != r_tilde.shape() || r.nrows() != r.ncols() {
        return Err(LinalgError::Dimension(format!("{:?} vs {:?}", r.shape(), r_tilde.shape())));
    }
    let rt = hermitian_part(r_tilde);
    let mut a = rt.clone();
    for i in 0..n {
        a[(i, i)] += sigma2;
    }
    // (R̃ + σ²I)⁻¹ R̃ is the adjoint of R̃ (R̃ + σ²I)⁻¹.
    let x = hermitian_solve(&a, &rt)?.adjoint();
    let err = hermitian_part(&(r - r * x));
    Ok(trace_re(&err) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScsiAccuracy {
    pub e_f: f64,
    pub e_s: f64,
    pub db: f64,
}

/// `L_SCSI = (E_f + E_s) / 2` in dB.
pub fn scsi_accuracy(
    r_f_tilde: &CMat,
    r_s_tilde: &CMat,
    r_f: &CMat,
    r_s: &CMat,
    sigma2: f64,
) -> Result<ScsiAccuracy, LinalgError> {
    let e_f = mismatched_mmse_error(r_f, r_f_tilde, sigma2)?;
    let e_s = mismatched_mmse_error(r_s, r_s_tilde, sigma2)?;
    Ok(ScsiAccuracy { e_f, e_s, db: to_db(0.5 * (e_f + e_s)) })
}
