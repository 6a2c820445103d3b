//! Tapering windows for the windowed beam-delay estimator.

use std::str::FromStr;

use crate::linalg::{dft_matrix, kron};
use crate::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowKind {
    Rectangular,
    Hann,
    Kaiser(f64),
}

impl FromStr for WindowKind {
    type Err = String;

    /// `rectangular`, `hann` or `kaiser:<shape>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "rect" | "rectangular" | "none" => Ok(Self::Rectangular),
            "hann" | "hanning" => Ok(Self::Hann),
            _ => {
                let shape = s
                    .strip_prefix("kaiser:")
                    .ok_or_else(|| format!("unknown window {s:?}"))?
                    .parse::<f64>()
                    .map_err(|e| format!("bad Kaiser shape: {e}"))?;
                if shape < 0.0 {
                    return Err("Kaiser shape must be non-negative".into());
                }
                Ok(Self::Kaiser(shape))
            }
        }
    }
}

impl std::fmt::Display for WindowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Rectangular => write!(f, "rectangular"),
            Self::Hann => write!(f, "hann"),
            Self::Kaiser(b) => write!(f, "kaiser:{b}"),
        }
    }
}

/// Modified Bessel function of the first kind, order 0 (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// 1-D window of length `len`, scaled to unit maximum. All entries are positive.
pub fn window_1d(kind: WindowKind, len: usize) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let raw: Vec<f64> = (0..len)
        .map(|n| match kind {
            WindowKind::Rectangular => 1.0,
            WindowKind::Hann => {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * (n + 1) as f64 / (len + 1) as f64).cos())
            }
            WindowKind::Kaiser(beta) => {
                if len == 1 {
                    1.0
                } else {
                    let r = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
                    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta)
                }
            }
        })
        .collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    raw.into_iter().map(|w| w / peak).collect()
}

/// `Fᴴ diag(|w|²) F` for the given unitary DFT.
fn xi(f: &CMat, w: &[f64]) -> CMat {
    let mut scaled = f.clone();
    for (r, mut row) in scaled.row_iter_mut().enumerate() {
        row *= C64::new(w[r] * w[r], 0.0);
    }
    f.adjoint() * scaled
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub kind: WindowKind,
    pub eta_f: Vec<f64>,
    /// Vertical ⊗ horizontal.
    pub eta_s: Vec<f64>,
    pub xi_f: CMat,
    pub xi_s: CMat,
}

pub fn make_window(kind: WindowKind, n: usize, m_v: usize, m_h: usize) -> WindowPair {
    let eta_f = window_1d(kind, n);
    let wv = window_1d(kind, m_v);
    let wh = window_1d(kind, m_h);
    let eta_s: Vec<f64> = wv.iter().flat_map(|a| wh.iter().map(move |b| a * b)).collect();
    let fa = kron(&dft_matrix(m_v), &dft_matrix(m_h));
    WindowPair {
        kind,
        xi_f: xi(&dft_matrix(n), &eta_f),
        xi_s: xi(&fa, &eta_s),
        eta_f,
        eta_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangular_xi_is_identity() {
        let w = make_window(WindowKind::Rectangular, 16, 2, 4);
        assert!((&w.xi_f - CMat::identity(16, 16)).camax() < 1e-14);
        assert!((&w.xi_s - CMat::identity(8, 8)).camax() < 1e-14);
    }

    #[test]
    fn kaiser_zero_is_rectangular() {
        assert_eq!(window_1d(WindowKind::Kaiser(0.0), 9), vec![1.0; 9]);
    }

    #[test]
    fn kaiser_matches_series_oracle() {
        // Independent oracle: I0 via the recurrence on (x/2)^{2k}/(k!)^2 with factorials.
        fn i0(x: f64) -> f64 {
            let mut s = 0.0;
            let mut fact = 1.0;
            for k in 0..60 {
                if k > 0 {
                    fact *= k as f64;
                }
                s += (x / 2.0).powi(2 * k) / (fact * fact);
            }
            s
        }
        let (beta, n) = (3.95, 64);
        let w = window_1d(WindowKind::Kaiser(beta), n);
        let peak = (0..n)
            .map(|k| i0(beta * (1.0 - (2.0 * k as f64 / 63.0 - 1.0).powi(2)).sqrt()))
            .fold(0.0, f64::max);
        for (k, wk) in w.iter().enumerate() {
            let want = i0(beta * (1.0 - (2.0 * k as f64 / 63.0 - 1.0).powi(2)).sqrt()) / peak;
            assert!((wk - want).abs() < 1e-10);
        }
    }

    #[test]
    fn windows_positive_and_normalised() {
        for kind in [WindowKind::Hann, WindowKind::Kaiser(3.95), WindowKind::Kaiser(8.0)] {
            for len in [1, 2, 7, 32] {
                let w = window_1d(kind, len);
                assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
                assert!((w.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
            }
        }
        let p = make_window(WindowKind::Hann, 8, 2, 3);
        assert!((&p.xi_s - p.xi_s.adjoint()).camax() < 1e-14);
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("kaiser:3.95".parse::<WindowKind>().unwrap(), WindowKind::Kaiser(3.95));
        assert_eq!("Hann".parse::<WindowKind>().unwrap(), WindowKind::Hann);
        assert!("kaiser:-1".parse::<WindowKind>().is_err());
        assert!("triangle".parse::<WindowKind>().is_err());
    }
}
