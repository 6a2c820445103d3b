//! Linear interpolation along the subcarrier axis.

use crate::{CMat, C64};

/// Interpolates rows sampled at increasing `pos` onto subcarriers `0..n_c`.
/// Values outside `[pos[0], pos[last]]` are held constant.
pub fn interpolate_at(values: &CMat, pos: &[f64], n_c: usize) -> CMat {
    assert_eq!(values.nrows(), pos.len());
    assert!(!pos.is_empty());
    let mut out = CMat::zeros(n_c, values.ncols());
    let last = pos.len() - 1;
    let mut seg = 0;
    for k in 0..n_c {
        let x = k as f64;
        if x <= pos[0] {
            out.row_mut(k).copy_from(&values.row(0));
            continue;
        }
        if x >= pos[last] {
            out.row_mut(k).copy_from(&values.row(last));
            continue;
        }
        while pos[seg + 1] < x {
            seg += 1;
        }
        let t = (x - pos[seg]) / (pos[seg + 1] - pos[seg]);
        let row = values.row(seg) * C64::new(1.0 - t, 0.0) + values.row(seg + 1) * C64::new(t, 0.0);
        out.row_mut(k).copy_from(&row);
    }
    out
}

/// Interpolation from pilot subcarriers `idx` (sorted) to the full band.
pub fn interpolate_to_full(values: &CMat, idx: &[usize], n_c: usize) -> CMat {
    let pos: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
    interpolate_at(values, &pos, n_c)
}
