//! Convolution kernels: direct, FFT, and the online divide-and-conquer solver
//! for causal recursions `x_n = b_n + s Σ_{j<n} x_j k_{n-j}`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Below this many output entries the direct kernel is used.
pub const FFT_CROSSOVER: usize = 4096;
/// Leaf size of the online solver.
const LEAF: usize = 64;

/// Which kernel evaluates convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Direct,
    Fft,
    #[default]
    Auto,
}

impl Backend {
    pub(crate) fn use_fft(self, len: usize) -> bool {
        match self {
            Backend::Direct => false,
            Backend::Fft => true,
            Backend::Auto => len >= FFT_CROSSOVER,
        }
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `out[n] = Σ_i a[i] b[n-i]` for `n < len`, with compensated accumulation.
pub fn convolve_direct(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (n, o) in out.iter_mut().enumerate() {
        let lo = n.saturating_sub(b.len().saturating_sub(1));
        let hi = n.min(a.len().saturating_sub(1));
        if a.is_empty() || b.is_empty() || lo > hi {
            continue;
        }
        let (mut s, mut c) = (0.0, 0.0);
        for i in lo..=hi {
            let (t, e) = two_sum(s, a[i] * b[n - i]);
            s = t;
            c += e;
        }
        *o = s + c;
    }
    out
}

/// FFT plans reused across calls of one solver.
pub struct FftConvolver {
    planner: FftPlanner<f64>,
}

impl Default for FftConvolver {
    fn default() -> Self {
        Self::new()
    }
}

impl FftConvolver {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    fn plans(&mut self, size: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        (
            self.planner.plan_fft_forward(size),
            self.planner.plan_fft_inverse(size),
        )
    }

    /// Real linear convolution truncated to `len` entries.
    ///
    /// Both inputs ride in one complex transform, `z = a + i b`, and
    /// `a * b = Im(IFFT(Z²)) / 2`. Inputs are scaled to equal 2-norms first so
    /// the cross term is not swamped by `a² - b²`.
    pub fn convolve(&mut self, a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
        if a.is_empty() || b.is_empty() || len == 0 {
            return vec![0.0; len];
        }
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return vec![0.0; len];
        }
        let full = (a.len() + b.len() - 1).min(len);
        let size = (a.len() + b.len() - 1).next_power_of_two();
        let (fwd, inv) = self.plans(size);
        let sa = 1.0 / na;
        let sb = 1.0 / nb;
        let mut z = vec![Complex64::new(0.0, 0.0); size];
        for (i, x) in a.iter().enumerate() {
            z[i].re = x * sa;
        }
        for (i, x) in b.iter().enumerate() {
            z[i].im = x * sb;
        }
        fwd.process(&mut z);
        for v in z.iter_mut() {
            *v = *v * *v;
        }
        inv.process(&mut z);
        let scale = na * nb / (2.0 * size as f64);
        let mut out = vec![0.0; len];
        for (o, v) in out.iter_mut().zip(z.iter()).take(full) {
            *o = v.im * scale;
        }
        out
    }
}

/// Linear convolution truncated to `len` entries with the chosen backend.
pub fn convolve(a: &[f64], b: &[f64], len: usize, backend: Backend) -> Vec<f64> {
    if backend.use_fft(len.min(a.len() + b.len())) && a.len().min(b.len()) > LEAF {
        FftConvolver::new().convolve(a, b, len)
    } else {
        convolve_direct(a, b, len)
    }
}

/// Online solver for `x_n = b_n + sign Σ_{j=0}^{n-1} x_j k_{n-j}`, `n < len`.
///
/// Contributions of a finished left block to the right block are added as
/// one convolution, so the full solve costs `O(len log² len)` with FFT blocks.
/// Accumulators keep a separate low-order word.
pub fn solve_causal(b: &[f64], kernel: &[f64], sign: f64, len: usize, backend: Backend) -> Vec<f64> {
    let mut x = vec![0.0; len];
    let mut hi: Vec<f64> = (0..len).map(|n| b.get(n).copied().unwrap_or(0.0)).collect();
    let mut lo = vec![0.0; len];
    let mut fft = FftConvolver::new();
    let mut k = kernel.to_vec();
    k.resize(len.max(1), 0.0);
    if !k.is_empty() {
        k[0] = 0.0;
    }
    cdq(&mut x, &mut hi, &mut lo, &k, sign, 0, len, backend, &mut fft);
    x
}

#[allow(clippy::too_many_arguments)]
fn cdq(
    x: &mut [f64],
    hi: &mut [f64],
    lo: &mut [f64],
    k: &[f64],
    sign: f64,
    l: usize,
    r: usize,
    backend: Backend,
    fft: &mut FftConvolver,
) {
    if r - l <= LEAF {
        for n in l..r {
            let (mut s, mut c) = (0.0, 0.0);
            for j in l..n {
                let (t, e) = two_sum(s, x[j] * k[n - j]);
                s = t;
                c += e;
            }
            let (t, e) = two_sum(hi[n], sign * s);
            x[n] = t + (lo[n] + e + sign * c);
        }
        return;
    }
    let mid = l + (r - l) / 2;
    cdq(x, hi, lo, k, sign, l, mid, backend, fft);
    // x[l..mid] against k[1..r-l] lands on [mid, r).
    let left = &x[l..mid];
    let kern = &k[..r - l];
    let span = r - l;
    let contrib = if backend.use_fft(span) {
        fft.convolve(left, kern, span)
    } else {
        let mut out = vec![0.0; span];
        for (t, o) in out.iter_mut().enumerate().skip(mid - l) {
            let (mut s, mut c) = (0.0, 0.0);
            for (i, xi) in left.iter().enumerate() {
                if i >= t {
                    break;
                }
                let (u, e) = two_sum(s, xi * kern[t - i]);
                s = u;
                c += e;
            }
            *o = s + c;
        }
        out
    };
    for n in mid..r {
        let (t, e) = two_sum(hi[n], sign * contrib[n - l]);
        hi[n] = t;
        lo[n] += e;
    }
    cdq(x, hi, lo, k, sign, mid, r, backend, fft);
}
