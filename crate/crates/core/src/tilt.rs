//! Exponential tilting of a pmf restricted to a finite window.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Relative tolerance of the saddle solve on the tilted mean.
pub const TILT_REL_TOL: f64 = 1e-10;

/// Moments of `f_j e^{-λj}` over `j < pmf.len()`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TiltedMoments {
    /// `ln Σ f_j e^{-λj}`.
    pub log_norm: f64,
    pub mean: f64,
}

pub(crate) fn tilted_moments(pmf: &[f64], lambda: f64) -> TiltedMoments {
    let shift = pmf
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(j, f)| f.ln() - lambda * j as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = CompensatedSum::new();
    let mut s1 = CompensatedSum::new();
    for (j, f) in pmf.iter().enumerate() {
        if *f > 0.0 {
            let w = (f.ln() - lambda * j as f64 - shift).exp();
            let x = j as f64;
            s0.add(w);
            s1.add(x * w);
        }
    }
    let z = s0.value();
    TiltedMoments {
        log_norm: shift + z.ln(),
        mean: s1.value() / z,
    }
}

/// `λ >= 0` whose tilted mean on the window equals `target`.
///
/// Errors with `TargetOutOfRange` unless `min support < target < mean at λ = 0`.
pub(crate) fn solve_window_tilt(pmf: &[f64], target: f64) -> Result<f64> {
    let lo_support = pmf.iter().position(|f| *f > 0.0).unwrap_or(0) as f64;
    let m0 = tilted_moments(pmf, 0.0).mean;
    if !(target > lo_support && target < m0) {
        return Err(Error::TargetOutOfRange {
            target,
            lo: lo_support,
            hi: m0,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut m_lo, mut m_hi) = (m0, tilted_moments(pmf, hi).mean);
    while m_hi > target {
        lo = hi;
        m_lo = m_hi;
        hi *= 2.0;
        m_hi = tilted_moments(pmf, hi).mean;
        if hi > 1e6 {
            return Err(Error::TargetOutOfRange {
                target,
                lo: lo_support,
                hi: m0,
            });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let m = tilted_moments(pmf, mid).mean;
        if !(m <= m_lo && m >= m_hi) {
            return Err(Error::NonMonotoneBracket { lo, hi });
        }
        if (m - target).abs() <= TILT_REL_TOL * target * 1e-2 || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if m > target {
            lo = mid;
            m_lo = m;
        } else {
            hi = mid;
            m_hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}
