//! Exact finite-horizon laws by dynamic programming.
//!
//! Everything here is a brute-force oracle: renewal mass `u_n`, the k-step
//! laws `P(τ_k = n)` (optionally restricted to `M_k <= m`), renewal
//! inversion, intersections and the generating-function identity.
//!
//! Tables export as CSV (`n,value` with `#` comment lines) or as a binary
//! blob: the 8 ASCII bytes `RNWLTBL1`, a little-endian `u64` count, then that
//! many little-endian `f64` values.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::conv::{convolve, solve_causal, Backend, FftConvolver};
use crate::error::{Error, Result};
use crate::interarrival::InterArrival;
use crate::numeric::{log_sum_exp, CompensatedSum};
use crate::tilt::{solve_window_tilt, tilted_moments};

/// Magic header of the binary table layout.
pub const BINARY_MAGIC: &[u8; 8] = b"RNWLTBL1";
/// Threshold below which an inverted pmf entry counts as negative.
pub const NEGATIVE_PMF_TOL: f64 = -1e-9;

fn horizon_check(n: usize, horizon: usize) -> Result<()> {
    if n > horizon {
        Err(Error::HorizonExceeded { index: n, horizon })
    } else {
        Ok(())
    }
}

/// `u_n = P(n ∈ τ)` and `U_n = Σ_{k<=n} u_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenewalTable {
    u: Vec<f64>,
    big_u: Vec<f64>,
}

impl RenewalTable {
    pub fn from_u(u: Vec<f64>) -> Result<Self> {
        if u.first() != Some(&1.0) {
            return Err(Error::InvalidArgument("renewal mass must start with u_0 = 1".into()));
        }
        let mut acc = CompensatedSum::new();
        let big_u = u
            .iter()
            .map(|v| {
                acc.add(*v);
                acc.value()
            })
            .collect();
        Ok(Self { u, big_u })
    }

    pub fn horizon(&self) -> usize {
        self.u.len() - 1
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.big_u
    }

    pub fn u_at(&self, n: usize) -> Result<f64> {
        horizon_check(n, self.horizon())?;
        Ok(self.u[n])
    }

    pub fn big_u_at(&self, n: usize) -> Result<f64> {
        horizon_check(n, self.horizon())?;
        Ok(self.big_u[n])
    }

    /// `max_n |u_n - Σ_j f_j u_{n-j}|` recomputed directly.
    pub fn recursion_residual(&self, d: &InterArrival) -> f64 {
        let f = d.pmf();
        let n_max = self.horizon().min(d.horizon());
        (1..=n_max)
            .into_par_iter()
            .map(|n| {
                let s: CompensatedSum = (d.support_min()..=n).map(|j| f[j] * self.u[n - j]).collect();
                (self.u[n] - s.value()).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W, comments: &[String]) -> Result<()> {
        write_series_csv(w, comments, "u", &self.u)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(w, &self.u)
    }
}

/// `u_0..u_N` by the online convolution solver.
pub fn renewal_mass(d: &InterArrival, n: usize, backend: Backend) -> Result<RenewalTable> {
    horizon_check(n, d.horizon())?;
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    let u = solve_causal(&b, &d.pmf()[..=n], 1.0, n + 1, backend);
    RenewalTable::from_u(u)
}

/// Storage of k-step rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Domain {
    /// Plain probabilities.
    #[default]
    Linear,
    /// Each row carries its own log scale; rows are built with positive-only
    /// direct sums so entries keep full relative accuracy.
    Log,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KStepOptions {
    /// Restrict every gap to `<= m`.
    pub trunc_m: Option<usize>,
    /// Divide the truncated gap law by `1 - r(m)` (the conditioned law).
    pub normalized: bool,
    pub domain: Domain,
    pub backend: Backend,
}

/// Rows `P(τ_k = n)` (or `P(τ_k = n, M_k <= m)`), `k = 0..=K`, `n = 0..=N`.
#[derive(Clone, Debug)]
pub struct KStepTable {
    rows: Vec<Vec<f64>>,
    log_scale: Vec<f64>,
    horizon: usize,
    options: KStepOptions,
    /// `r(N)` and `r(⌊N/k⌋)` style bounds need the gap tail.
    tails: Vec<f64>,
    trunc_mass: f64,
}

fn gap_kernel(d: &InterArrival, len: usize, opts: &KStepOptions) -> Result<(Vec<f64>, f64)> {
    let mut g = d.pmf()[..len.min(d.pmf().len())].to_vec();
    let mut mass = 1.0;
    if let Some(m) = opts.trunc_m {
        if m < d.support_min() {
            return Err(Error::InvalidTruncation {
                m,
                support_min: d.support_min(),
            });
        }
        if m < g.len() {
            g.truncate(m + 1);
        }
        mass = d.cdf(m.min(d.horizon()))?;
        if opts.normalized {
            for v in g.iter_mut() {
                *v /= mass;
            }
            mass = 1.0;
        }
    }
    Ok((g, mass))
}

/// Positive-only direct convolution `(a * g)[n]`, `n < len`, in parallel over `n`.
fn convolve_positive(a: &[f64], g: &[f64], len: usize) -> Vec<f64> {
    let a_lo = a.iter().position(|v| *v > 0.0).unwrap_or(a.len());
    let g_lo = g.iter().position(|v| *v > 0.0).unwrap_or(g.len());
    (0..len)
        .into_par_iter()
        .map(|n| {
            if n < a_lo + g_lo {
                return 0.0;
            }
            let i_hi = (n - g_lo).min(a.len() - 1);
            let i_lo = a_lo.max(n.saturating_sub(g.len() - 1));
            let mut s = 0.0;
            for i in i_lo..=i_hi {
                s += a[i] * g[n - i];
            }
            s
        })
        .collect()
}

fn rescale(row: &mut [f64]) -> f64 {
    let m = row.iter().fold(0.0f64, |m, v| m.max(*v));
    if m > 0.0 {
        for v in row.iter_mut() {
            *v /= m;
        }
        m.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl KStepTable {
    pub fn build(d: &InterArrival, k_max: usize, n: usize, opts: KStepOptions) -> Result<Self> {
        horizon_check(n, d.horizon())?;
        if k_max > n {
            return Err(Error::InvalidArgument(format!("K = {k_max} exceeds N = {n}")));
        }
        let (g, trunc_mass) = gap_kernel(d, n + 1, &opts)?;
        let mut rows = Vec::with_capacity(k_max + 1);
        let mut log_scale = Vec::with_capacity(k_max + 1);
        let mut first = vec![0.0; n + 1];
        first[0] = 1.0;
        rows.push(first);
        log_scale.push(0.0);
        let mut fft = FftConvolver::new();
        for k in 1..=k_max {
            let prev = &rows[k - 1];
            let (row, ls) = match opts.domain {
                Domain::Linear => {
                    let row = if opts.backend.use_fft(n + 1) {
                        let mut r = fft.convolve(prev, &g, n + 1);
                        r.iter_mut().for_each(|v| *v = v.max(0.0));
                        r
                    } else {
                        convolve_positive(prev, &g, n + 1)
                    };
                    (row, 0.0)
                }
                Domain::Log => {
                    let mut row = convolve_positive(prev, &g, n + 1);
                    let s = rescale(&mut row);
                    (row, log_scale[k - 1] + s)
                }
            };
            rows.push(row);
            log_scale.push(ls);
        }
        Ok(Self {
            rows,
            log_scale,
            horizon: n,
            options: opts,
            tails: d.tails()[..=n].to_vec(),
            trunc_mass,
        })
    }

    pub fn max_k(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn options(&self) -> &KStepOptions {
        &self.options
    }

    fn check(&self, k: usize, n: usize) -> Result<()> {
        if k > self.max_k() {
            return Err(Error::InvalidArgument(format!(
                "row {k} not in table (K = {})",
                self.max_k()
            )));
        }
        horizon_check(n, self.horizon)
    }

    /// Row `k` as plain probabilities.
    pub fn row(&self, k: usize) -> Result<Vec<f64>> {
        self.check(k, 0)?;
        let s = self.log_scale[k];
        Ok(self.rows[k].iter().map(|v| v * s.exp()).collect())
    }

    pub fn entry(&self, k: usize, n: usize) -> Result<f64> {
        Ok(self.ln_entry(k, n)?.exp())
    }

    pub fn ln_entry(&self, k: usize, n: usize) -> Result<f64> {
        self.check(k, n)?;
        Ok(self.rows[k][n].ln() + self.log_scale[k])
    }

    /// `P(τ_k <= n)` for the table's law.
    pub fn cdf(&self, k: usize, n: usize) -> Result<f64> {
        Ok(self.ln_cdf(k, n)?.exp())
    }

    pub fn ln_cdf(&self, k: usize, n: usize) -> Result<f64> {
        self.check(k, n)?;
        let s: CompensatedSum = self.rows[k][..=n].iter().copied().collect();
        Ok(s.value().ln() + self.log_scale[k])
    }

    /// `Σ_n row_k(n)` over the horizon.
    pub fn row_mass(&self, k: usize) -> Result<f64> {
        self.cdf(k, self.horizon)
    }

    /// Interval for the mass of row `k` lying past the horizon.
    ///
    /// Untruncated rows: `τ_k > N` needs a gap `> N/k` and is implied by a gap
    /// `> N`, giving `[1 - (1-r_N)^k, 1 - (1-r_{⌊N/k⌋})^k]`.
    pub fn deficit_interval(&self, k: usize) -> Result<(f64, f64)> {
        self.check(k, 0)?;
        if k == 0 {
            return Ok((0.0, 0.0));
        }
        let n = self.horizon;
        match self.options.trunc_m {
            None => {
                let lo = -((k as f64) * (-self.tails[n]).ln_1p()).exp_m1();
                let hi = -((k as f64) * (-self.tails[n / k]).ln_1p()).exp_m1();
                Ok((lo, hi))
            }
            Some(m) => {
                if k * m <= n {
                    Ok((0.0, 0.0))
                } else {
                    Ok((0.0, self.trunc_mass.powi(k as i32)))
                }
            }
        }
    }

    /// Expected total mass of row `k` (1, or `(1 - r(m))^k` when truncated and unnormalized).
    pub fn expected_mass(&self, k: usize) -> f64 {
        self.trunc_mass.powi(k as i32)
    }

    pub fn write_row_csv<W: Write>(&self, k: usize, w: W, comments: &[String]) -> Result<()> {
        write_series_csv(w, comments, "p", &self.row(k)?)
    }

    pub fn write_row_binary<W: Write>(&self, k: usize, w: W) -> Result<()> {
        write_binary(w, &self.row(k)?)
    }
}

/// Build a [`KStepTable`].
pub fn k_step_table(d: &InterArrival, k_max: usize, n: usize, opts: KStepOptions) -> Result<KStepTable> {
    KStepTable::build(d, k_max, n, opts)
}

/// `P(τ_k <= n)` from a table.
pub fn k_step_cdf(table: &KStepTable, k: usize, n: usize) -> Result<f64> {
    table.cdf(k, n)
}

/// How the single k-step row is tilted.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Tilt {
    None,
    /// Tilt so the windowed gap mean is `n/k` (no tilt if already below).
    #[default]
    Auto,
    Fixed(f64),
}

/// One row `P(τ_k = j)`, `j <= n`, held as `ln P = ln values[j] + log_scale + λ j`.
#[derive(Clone, Debug)]
pub struct ScaledRow {
    pub values: Vec<f64>,
    pub log_scale: f64,
    pub lambda: f64,
}

impl ScaledRow {
    pub fn ln_at(&self, j: usize) -> f64 {
        self.values[j].ln() + self.log_scale + self.lambda * j as f64
    }

    pub fn at(&self, j: usize) -> f64 {
        self.ln_at(j).exp()
    }

    /// `ln P(τ_k <= n)`.
    pub fn ln_cdf(&self, n: usize) -> f64 {
        let terms: Vec<f64> = (0..=n.min(self.values.len() - 1))
            .filter(|j| self.values[*j] > 0.0)
            .map(|j| self.ln_at(j))
            .collect();
        log_sum_exp(&terms)
    }
}

/// `P(τ_k = j, M_k <= m)` for `j <= n` by binary powering of the (tilted) gap law.
///
/// With tilt `λ` the gap law is replaced by `f_j e^{-λj} / Z` on `j <= n`,
/// which moves the bulk of `τ_k` to the region of interest so FFT round-off
/// stays relative to the entries that matter; the factor `e^{λj} Z^k` is
/// restored in the log scale.
pub fn k_fold_row(
    d: &InterArrival,
    k: usize,
    n: usize,
    trunc_m: Option<usize>,
    tilt: Tilt,
    backend: Backend,
) -> Result<ScaledRow> {
    horizon_check(n, d.horizon())?;
    let opts = KStepOptions {
        trunc_m,
        ..Default::default()
    };
    let (g, _) = gap_kernel(d, n + 1, &opts)?;
    let lambda = match tilt {
        Tilt::None => 0.0,
        Tilt::Fixed(l) => l,
        Tilt::Auto => {
            let target = n as f64 / k.max(1) as f64;
            match solve_window_tilt(&g, target) {
                Ok(l) => l,
                Err(Error::TargetOutOfRange { .. }) => 0.0,
                Err(e) => return Err(e),
            }
        }
    };
    let mut base = g.clone();
    let mut log_base = 0.0;
    if lambda != 0.0 {
        let ln_z = tilted_moments(&g, lambda).log_norm;
        for (j, v) in base.iter_mut().enumerate() {
            if *v > 0.0 {
                *v = (v.ln() - lambda * j as f64 - ln_z).exp();
            }
        }
        log_base = ln_z;
    }
    log_base += rescale(&mut base);
    let mut acc = vec![0.0; n + 1];
    acc[0] = 1.0;
    let mut log_acc = 0.0;
    let mut kk = k;
    let mut fft = FftConvolver::new();
    let mut conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut r = if backend.use_fft(n + 1) {
            fft.convolve(a, b, n + 1)
        } else {
            convolve_positive(a, b, n + 1)
        };
        r.iter_mut().for_each(|v| *v = v.max(0.0));
        r
    };
    while kk > 0 {
        if kk & 1 == 1 {
            acc = conv(&acc, &base);
            log_acc += log_base;
            log_acc += rescale(&mut acc);
        }
        kk >>= 1;
        if kk > 0 {
            base = conv(&base, &base);
            log_base *= 2.0;
            log_base += rescale(&mut base);
        }
    }
    Ok(ScaledRow {
        values: acc,
        log_scale: log_acc,
        lambda,
    })
}

/// `ln P(τ_k <= n)` by a tilted single-row DP.
pub fn k_step_ln_cdf(d: &InterArrival, k: usize, n: usize) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    Ok(k_fold_row(d, k, n, None, Tilt::Auto, Backend::Auto)?.ln_cdf(n))
}

/// `P(M_k > (1-ε) n | τ_k = n)`.
pub fn big_jump_conditional(d: &InterArrival, k: usize, n: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} not in (0, 1)")));
    }
    let m = ((1.0 - eps) * n as f64).floor() as usize;
    let full = k_fold_row(d, k, n, None, Tilt::Auto, Backend::Auto)?;
    if full.values[n] <= 0.0 {
        return Err(Error::ZeroDenominator { k, n });
    }
    if m < d.support_min() {
        return Ok(1.0);
    }
    let cut = k_fold_row(d, k, n, Some(m), Tilt::Fixed(full.lambda), Backend::Auto)?;
    let ratio = (cut.ln_at(n) - full.ln_at(n)).exp();
    Ok((1.0 - ratio).clamp(0.0, 1.0))
}

/// `k Σ_{g>m} f_g P(τ_{k-1} = n - g)`: the mass of `{τ_k = n, M_k > m}` when
/// `m >= n/2` forces the big gap to be unique.
pub fn one_big_gap_mass(d: &InterArrival, k: usize, n: usize, m: usize) -> Result<f64> {
    if 2 * m < n {
        return Err(Error::InvalidArgument(format!("one-big-gap sum needs m >= n/2, got m = {m}, n = {n}")));
    }
    horizon_check(n, d.horizon())?;
    if k == 0 {
        return Ok(0.0);
    }
    let prev = k_fold_row(d, k - 1, n, None, Tilt::None, Backend::Direct)?;
    let f = d.pmf();
    let s: CompensatedSum = ((m + 1)..=n).map(|g| f[g] * prev.at(n - g)).collect();
    Ok(k as f64 * s.value())
}

/// Result of inverting a renewal mass sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    /// `f_0..f_N` with `f_0 = 0`.
    pub pmf: Vec<f64>,
    /// Some entry fell below [`NEGATIVE_PMF_TOL`]: the input was not a renewal mass.
    pub negative: bool,
    pub min_entry: f64,
    /// `1 - Σ f`, read as mass beyond the horizon or at infinity.
    pub defect: f64,
}

/// `f_n = u_n - Σ_{j<n} f_j u_{n-j}`.
pub fn invert_renewal(u: &RenewalTable, backend: Backend) -> Inversion {
    let len = u.u.len();
    let mut b = u.u.clone();
    b[0] = 0.0;
    let pmf = solve_causal(&b, &u.u, -1.0, len, backend);
    let min_entry = pmf[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let total: CompensatedSum = pmf.iter().copied().collect();
    Inversion {
        negative: min_entry < NEGATIVE_PMF_TOL,
        min_entry,
        defect: 1.0 - total.value(),
        pmf,
    }
}

/// `P(n ∈ τ ∩ σ) = u^τ_n u^σ_n`.
pub fn intersect_renewals(a: &RenewalTable, b: &RenewalTable) -> Result<RenewalTable> {
    if a.horizon() != b.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "horizons {} and {} differ",
            a.horizon(),
            b.horizon()
        )));
    }
    RenewalTable::from_u(a.u.iter().zip(b.u.iter()).map(|(x, y)| x * y).collect())
}

/// Largest series truncation error tolerated by [`gf_identity_check`].
pub const GF_TAIL_TOL: f64 = 1e-12;

/// `|u(s)(1 - f(s)) - 1|` with both series summed to the table horizon.
pub fn gf_identity_check(d: &InterArrival, u: &RenewalTable, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("s = {s} not in (0, 1)")));
    }
    let n = u.horizon().min(d.horizon());
    // u_n <= 1 and Σ_{j>N} f_j <= r_N bound the neglected terms.
    let sn = s.powf((n + 1) as f64);
    let tail = sn / (1.0 - s) + d.tail_at_horizon() * sn;
    if tail > GF_TAIL_TOL {
        return Err(Error::TailDominates {
            value: 1.0,
            correction: tail,
        });
    }
    let mut us = CompensatedSum::new();
    let mut fs = CompensatedSum::new();
    let mut p = 1.0;
    for j in 0..=n {
        us.add(u.u[j] * p);
        fs.add(d.pmf()[j] * p);
        p *= s;
    }
    Ok((us.value() * (1.0 - fs.value()) - 1.0).abs())
}

/// Exact `P(Σ_{i<=k} Ĝ_i >= x)` for i.i.d. gaps with law `f` conditioned on `<= m`.
pub fn truncated_sum_tail(d: &InterArrival, k: usize, m: usize, x: f64) -> Result<f64> {
    horizon_check(m, d.horizon())?;
    let opts = KStepOptions {
        trunc_m: Some(m),
        normalized: true,
        ..Default::default()
    };
    let (g, _) = gap_kernel(d, m + 1, &opts)?;
    let len = k * m + 1;
    let mut row = vec![0.0; len];
    row[0] = 1.0;
    for _ in 0..k {
        row = convolve_positive(&row, &g, len);
    }
    let start = x.ceil().max(0.0) as usize;
    if start >= len {
        return Ok(0.0);
    }
    let s: CompensatedSum = row[start..].iter().copied().collect();
    Ok(s.value())
}

/// Write `n,<name>` rows with `#` comment lines first.
pub fn write_series_csv<W: Write>(w: W, comments: &[String], name: &str, values: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["n", name]).map_err(csv_err)?;
    for (n, v) in values.iter().enumerate() {
        cw.write_record([n.to_string(), format!("{v:e}")]).map_err(csv_err)?;
    }
    cw.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Read a `n,value` CSV (comment lines and a header are allowed); values must be indexed `0, 1, ...`.
pub fn read_series_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() < 2 {
            return Err(Error::Config(format!("record {line} has fewer than two fields")));
        }
        let (Ok(n), Ok(v)) = (rec[0].parse::<usize>(), rec[1].parse::<f64>()) else {
            if line == 0 && out.is_empty() {
                continue;
            }
            return Err(Error::Config(format!("record {line} is not numeric")));
        };
        if n != out.len() {
            return Err(Error::Config(format!("expected index {}, found {n}", out.len())));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Io("bad table magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Direct convolution of two rows, for semigroup checks.
pub fn convolve_rows(a: &[f64], b: &[f64], backend: Backend) -> Vec<f64> {
    convolve(a, b, a.len().max(b.len()), backend)
}
