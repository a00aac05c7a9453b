//! Analytic continuation of inter-arrival tails past the finite horizon.
//!
//! For a regularly varying law `f_n = C φ(n) n^{-1-α}` the tail beyond the
//! stored array is `C Σ_{j>x} φ(j) j^{-1-α}`, computed as an integral in the
//! log coordinate `u = ln t` plus the two leading Euler-Maclaurin terms.
//! The integral is tabulated once on geometric knots so that tail queries and
//! tail inversion (used by the sampler) cost one short quadrature each.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::sv_func::SvFunc;

const GL_POINTS: usize = 16;

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut x = [0.0; GL_POINTS];
        let mut w = [0.0; GL_POINTS];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Gauss-Legendre integral of `f` over `[a, b]`.
pub(crate) fn gl_integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for i in 0..GL_POINTS {
        acc += w[i] * f(mid + half * x[i]);
    }
    acc * half
}

const KNOT_RATIO: f64 = 1.189_207_115_002_721; // 2^(1/4)
const MAX_KNOT: f64 = 1e290;
const STOP_REL: f64 = 1e-17;

/// `∫_u^∞ φ(e^v) e^{-κ v} dv` tabulated on geometric knots in `v`.
#[derive(Clone, Debug)]
pub(crate) struct LogTailIntegral {
    phi: SvFunc,
    kappa: f64,
    knots: Vec<f64>,
    /// `suffix[i] = ∫_{knots[i]}^∞`.
    suffix: Vec<f64>,
    /// Magnitude of the power-law extrapolated remainder past the last knot.
    remainder: f64,
}

impl LogTailIntegral {
    pub(crate) fn new(phi: SvFunc, kappa: f64, u0: f64) -> Result<Self> {
        let u0 = u0.max(1.0);
        let integrand = |v: f64| (phi.ln_eval_log(v) - kappa * v).exp();
        let mut knots = vec![u0];
        let mut blocks: Vec<f64> = Vec::new();
        let mut total = 0.0;
        let remainder;
        loop {
            let a = *knots.last().unwrap();
            let b = a * KNOT_RATIO;
            let blk = gl_integrate(a, b, integrand);
            blocks.push(blk);
            knots.push(b);
            total += blk;
            let nb = blocks.len();
            if nb >= 4 {
                let q = blk / blocks[nb - 2];
                // Exponential decay is cheap to follow far enough that the
                // table stays relatively accurate deep in the tail.
                let stop = if kappa > 0.0 { 1e-32 } else { STOP_REL };
                if q < 1.0 - 1e-9 {
                    let rem = blk * q / (1.0 - q);
                    if rem <= stop * total {
                        remainder = rem;
                        break;
                    }
                }
                if b > MAX_KNOT {
                    // Local power law of the block sums is ρ^{β+1}; β >= -1 diverges.
                    if q >= 1.0 - 1e-6 {
                        return Err(Error::NotNormalizable(format!(
                            "tail integral of {} with exponent {kappa} diverges",
                            phi.to_json()
                        )));
                    }
                    remainder = blk * q / (1.0 - q);
                    if remainder > 1e-3 * total {
                        return Err(Error::NotNormalizable(format!(
                            "tail integral of {} converges too slowly to certify",
                            phi.to_json()
                        )));
                    }
                    break;
                }
            }
            if !total.is_finite() {
                return Err(Error::NotNormalizable("tail integral overflow".into()));
            }
        }
        let mut suffix = vec![0.0; knots.len()];
        let last = knots.len() - 1;
        suffix[last] = remainder;
        for i in (0..last).rev() {
            suffix[i] = suffix[i + 1] + blocks[i];
        }
        Ok(Self {
            phi,
            kappa,
            knots,
            suffix,
            remainder,
        })
    }

    fn integrand(&self, v: f64) -> f64 {
        (self.phi.ln_eval_log(v) - self.kappa * v).exp()
    }

    /// `∫_u^∞`; for `u` below the first knot the gap is integrated directly.
    pub(crate) fn from(&self, u: f64) -> f64 {
        let u0 = self.knots[0];
        if u <= u0 {
            let n = (((u0 - u) / 0.5).ceil() as usize).max(1);
            let h = (u0 - u) / n as f64;
            let mut acc = self.suffix[0];
            for i in 0..n {
                let a = u + i as f64 * h;
                acc += gl_integrate(a, a + h, |v| self.integrand(v));
            }
            return acc;
        }
        let last = self.knots.len() - 1;
        if u >= self.knots[last] {
            // Power-law decay past the table.
            let ratio = self.remainder / self.integrand(self.knots[last]).max(f64::MIN_POSITIVE);
            return self.integrand(u) * ratio * (u / self.knots[last]);
        }
        let i = match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).expect("finite knot"))
        {
            Ok(i) => return self.suffix[i],
            Err(i) => i - 1,
        };
        self.suffix[i + 1] + gl_integrate(u, self.knots[i + 1], |v| self.integrand(v))
    }

    pub(crate) fn first_knot(&self) -> f64 {
        self.knots[0]
    }

    /// Knot index `i` with `suffix[i] >= t > suffix[i+1]`.
    fn block_for(&self, t: f64) -> usize {
        let mut lo = 0;
        let mut hi = self.suffix.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.suffix[mid] >= t {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }
}

/// Tail of `C φ(n) n^{-1-α}` beyond a horizon.
#[derive(Clone, Debug)]
pub(crate) struct RegVarTail {
    c: f64,
    alpha: f64,
    phi: SvFunc,
    integral: LogTailIntegral,
}

impl RegVarTail {
    /// Tail table for the unnormalized series; `c` is set later via [`Self::normalized`].
    pub(crate) fn new(phi: SvFunc, alpha: f64, horizon: usize) -> Result<Self> {
        let integral = LogTailIntegral::new(phi.clone(), alpha, (horizon as f64).ln())?;
        Ok(Self {
            c: 1.0,
            alpha,
            phi,
            integral,
        })
    }

    pub(crate) fn normalized(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// `ln g(e^s)` for `g(t) = φ(t) t^{-1-α}`.
    fn ln_g(&self, s: f64) -> f64 {
        self.phi.ln_eval_log(s) - (1.0 + self.alpha) * s
    }

    /// `d ln g / d ln t` at `t = e^s`.
    fn log_slope(&self, s: f64) -> f64 {
        let h = 1e-4;
        (self.phi.ln_eval_log(s + h) - self.phi.ln_eval_log(s - h)) / (2.0 * h) - (1.0 + self.alpha)
    }

    /// Unnormalized `Σ_{j>x} g(j)` at `x = e^s`, with two Euler-Maclaurin terms.
    fn sum_beyond(&self, s: f64) -> f64 {
        let g = self.ln_g(s).exp();
        let x = s.exp();
        let dg = self.log_slope(s) * g / x;
        self.integral.from(s) - 0.5 * g - dg / 12.0
    }

    /// Size of the neglected Euler-Maclaurin term at `x = e^s`.
    fn sum_error(&self, s: f64) -> f64 {
        let g = self.ln_g(s).exp();
        let x = s.exp();
        let a = 1.0 + self.alpha;
        g * a * (a + 1.0) * (a + 2.0) / (720.0 * x * x * x) + 1e-15 * self.integral.from(s)
    }

    pub(crate) fn unnormalized_tail(&self, horizon: usize) -> (f64, f64) {
        let s = (horizon as f64).ln();
        (self.sum_beyond(s), self.sum_error(s))
    }

    pub(crate) fn tail_log(&self, s: f64) -> f64 {
        self.c * self.sum_beyond(s)
    }

    /// `s` solving `tail_log(s) = t` for `t` at most the tail at the first knot.
    pub(crate) fn invert_log(&self, t: f64) -> f64 {
        let target = t / self.c;
        let i = self.integral.block_for(target);
        let knots = &self.integral.knots;
        let mut lo = knots[i].max(self.integral.first_knot());
        let mut hi = knots[(i + 1).min(knots.len() - 1)];
        if hi <= lo {
            hi = lo * KNOT_RATIO;
        }
        while self.sum_beyond(hi) > target {
            lo = hi;
            hi *= KNOT_RATIO;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        while self.sum_beyond(lo) < target && lo > self.integral.first_knot() {
            hi = lo;
            lo = (lo / KNOT_RATIO).max(self.integral.first_knot());
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let v = self.sum_beyond(s) - target;
            if v.abs() <= 1e-14 * target {
                break;
            }
            if v > 0.0 {
                lo = s
            } else {
                hi = s
            }
            // Newton step on d/ds Σ ≈ -e^s g(e^s), kept inside the bracket.
            let slope = -(self.ln_g(s) + s).exp();
            let newton = s - v / slope;
            s = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        s
    }

    /// `Σ_{n>N} n^j f_n`, or `None` when the series diverges.
    pub(crate) fn moment_tail(&self, horizon: usize, j: i32) -> Option<(f64, f64)> {
        let u0 = (horizon as f64).ln();
        let integral = LogTailIntegral::new(self.phi.clone(), self.alpha - j as f64, u0).ok()?;
        let x = horizon as f64;
        let h = (self.ln_g(u0) + j as f64 * u0).exp();
        let slope = self.log_slope(u0) + j as f64;
        let est = integral.from(u0) - 0.5 * h - slope * h / (12.0 * x);
        let err = h * slope.abs().powi(3) / (720.0 * x * x * x) + 1e-14 * est.abs();
        Some((self.c * est, self.c * err))
    }

    /// `Σ_{n>N} n^j f_n e^{-λ n}` with an error bound.
    pub(crate) fn laplace_tail(&self, horizon: usize, lambda: f64, j: i32) -> (f64, f64) {
        let u0 = (horizon as f64).ln();
        let kappa = self.alpha - j as f64;
        let h = |v: f64| (self.phi.ln_eval_log(v) - kappa * v - lambda * v.exp()).exp();
        let width = 0.5;
        let mut total = 0.0;
        let mut a = u0;
        for _ in 0..100_000 {
            let blk = gl_integrate(a, a + width, h);
            total += blk;
            a += width;
            if lambda * a.exp() > 1.0 && blk <= 1e-18 * total {
                break;
            }
        }
        let x = horizon as f64;
        let hn = h(u0) / x;
        let est = total - 0.5 * hn;
        let dh = hn * ((1.0 + kappa).abs() / x + lambda);
        let err = dh / 12.0 + 1e-14 * total;
        (self.c * est, self.c * err)
    }
}

/// Tail model beyond the array horizon for each distribution family.
#[derive(Clone, Debug)]
pub(crate) enum TailModel {
    RegVar(RegVarTail),
    /// `τ₁ = 2σ₁` with probability 1/2, otherwise 1.
    Interleaved(Box<TailModel>),
    /// Base recurrent law scaled by `keep = 1 - p_inf`.
    Scaled { base: Box<TailModel>, keep: f64 },
}

impl TailModel {
    /// Finite part of `P(τ₁ > e^s)`.
    pub(crate) fn tail_log(&self, s: f64) -> f64 {
        match self {
            TailModel::RegVar(t) => t.tail_log(s),
            // τ₁ > x ⇔ σ₁ > x/2 for x >= 1.
            TailModel::Interleaved(sigma) => 0.5 * sigma.tail_log(s - std::f64::consts::LN_2),
            TailModel::Scaled { base, keep } => keep * base.tail_log(s),
        }
    }

    /// Log-gap `s` with `tail_log(s) = t`.
    pub(crate) fn invert_log(&self, t: f64) -> f64 {
        match self {
            TailModel::RegVar(r) => r.invert_log(t),
            TailModel::Interleaved(sigma) => sigma.invert_log(2.0 * t) + std::f64::consts::LN_2,
            TailModel::Scaled { base, keep } => base.invert_log(t / keep),
        }
    }

    pub(crate) fn moment_tail(&self, horizon: usize, j: i32) -> Option<(f64, f64)> {
        match self {
            TailModel::RegVar(r) => r.moment_tail(horizon, j),
            TailModel::Interleaved(sigma) => {
                let (e, err) = sigma.moment_tail(horizon / 2, j)?;
                let f = 0.5 * 2f64.powi(j);
                Some((f * e, f * err))
            }
            TailModel::Scaled { base, keep } => {
                let (e, err) = base.moment_tail(horizon, j)?;
                Some((keep * e, keep * err))
            }
        }
    }

    pub(crate) fn laplace_tail(&self, horizon: usize, lambda: f64, j: i32) -> (f64, f64) {
        match self {
            TailModel::RegVar(r) => r.laplace_tail(horizon, lambda, j),
            TailModel::Interleaved(sigma) => {
                // Σ_{n>N} n^j f_n e^{-λn} over even n = 2m, f_{2m} = σ_m / 2.
                let (e, err) = sigma.laplace_tail(horizon / 2, 2.0 * lambda, j);
                let f = 0.5 * 2f64.powi(j);
                (f * e, f * err)
            }
            TailModel::Scaled { base, keep } => {
                let (e, err) = base.laplace_tail(horizon, lambda, j);
                (keep * e, keep * err)
            }
        }
    }
}
