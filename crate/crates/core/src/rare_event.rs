//! Path sampling and exponentially tilted importance sampling for `{τ_k <= n}`.
//!
//! Randomness is split into fixed-size chunks; chunk `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `c`. Chunks run in parallel and
//! their statistics are merged in a fixed pairwise tree, so results are
//! bit-identical for a given `(seed, count)` regardless of the thread count.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interarrival::InterArrival;
use crate::numeric::{log_add, CompensatedSum};
use crate::tilt::{solve_window_tilt, tilted_moments};

/// Samples per RNG stream.
pub const CHUNK: usize = 1024;
/// Largest tolerated fraction of paths whose overflow gap could not be resolved.
pub const MAX_UNRESOLVED_FRACTION: f64 = 1e-3;
/// Default `ε` of the tilted estimator.
pub const DEFAULT_EPS: f64 = 0.1;

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunks(count: usize) -> Vec<(usize, usize)> {
    (0..count.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(count - c * CHUNK)))
        .collect()
}

/// Saddle point of the gap law tilted by `e^{-λ j}` on the window `j <= h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltSolution {
    pub lambda_star: f64,
    /// `ν(λ*)` on the full law (`NaN` if the horizon correction could not be certified).
    pub nu: f64,
    pub nu_prime: f64,
    /// `f_j e^{-λ* j} / Z`, `j = 0..=h`.
    pub tilted_pmf: Vec<f64>,
    /// `ln Z`, `Z = Σ_{j<=h} f_j e^{-λ* j}`.
    pub log_norm: f64,
    pub target_ratio: f64,
    /// Tilted mean actually attained.
    pub achieved_mean: f64,
    /// Tilted mass of the full law beyond the window, `1 - Z / (1 - ν)`.
    pub horizon_deficit: f64,
}

impl TiltSolution {
    pub fn window(&self) -> usize {
        self.tilted_pmf.len() - 1
    }

    /// `λ* τ + k ln Z`, the log of the likelihood ratio `dP/dP̃` of a `k`-gap path.
    pub fn log_weight(&self, tau: u64, k: usize) -> f64 {
        self.lambda_star * tau as f64 + k as f64 * self.log_norm
    }
}

/// Solve `Σ j f_j e^{-λj} / Σ f_j e^{-λj} = target` over the whole stored horizon.
pub fn solve_tilt(d: &InterArrival, target_mean: f64) -> Result<TiltSolution> {
    solve_tilt_within(d, target_mean, d.horizon())
}

/// As [`solve_tilt`] with the gap law restricted to `j <= window`.
pub fn solve_tilt_within(d: &InterArrival, target_mean: f64, window: usize) -> Result<TiltSolution> {
    let pmf = &d.pmf()[..=window.min(d.horizon())];
    let lambda = solve_window_tilt(pmf, target_mean)?;
    Ok(build_tilt(d, pmf, lambda, target_mean))
}

fn build_tilt(d: &InterArrival, pmf: &[f64], lambda: f64, target: f64) -> TiltSolution {
    let mom = tilted_moments(pmf, lambda);
    let tilted_pmf: Vec<f64> = pmf
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if *f > 0.0 {
                (f.ln() - lambda * j as f64 - mom.log_norm).exp()
            } else {
                0.0
            }
        })
        .collect();
    let (nu, nu_prime, deficit) = if lambda > 0.0 {
        match d.laplace(lambda) {
            Ok(p) => (p.nu, p.nu_prime, (1.0 - mom.log_norm.exp() / (1.0 - p.nu)).max(0.0)),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        }
    } else {
        let z = mom.log_norm.exp();
        (0.0, f64::NAN, (1.0 - z).max(0.0))
    };
    TiltSolution {
        lambda_star: lambda,
        nu,
        nu_prime,
        tilted_pmf,
        log_norm: mom.log_norm,
        target_ratio: target,
        achieved_mean: mom.mean,
        horizon_deficit: deficit,
    }
}

/// `Ẽ[G²]` under the tilted law.
pub fn tilted_variance_check(t: &TiltSolution) -> f64 {
    t.tilted_pmf
        .iter()
        .enumerate()
        .map(|(j, p)| (j * j) as f64 * p)
        .collect::<CompensatedSum>()
        .value()
}

/// Size of a sum of gaps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Extent {
    Finite(u64),
    /// Past the horizon, held as a natural log.
    Beyond(f64),
    /// Past the horizon with no tail model to resolve it.
    Unresolved,
    Infinite,
}

impl Extent {
    fn ln(self) -> f64 {
        match self {
            Extent::Finite(0) => f64::NEG_INFINITY,
            Extent::Finite(v) => (v as f64).ln(),
            Extent::Beyond(s) => s,
            Extent::Unresolved | Extent::Infinite => f64::INFINITY,
        }
    }

    pub fn at_most(self, n: u64) -> bool {
        matches!(self, Extent::Finite(v) if v <= n)
    }
}

/// One realization of `(τ_k, M_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub tau: Extent,
    pub max_gap: Extent,
    /// Some gap hit the overflow symbol.
    pub overflowed: bool,
}

/// Alias table over `{support_min..=N} ∪ {overflow, ∞}`.
struct GapSampler<'a> {
    d: &'a InterArrival,
    alias: WeightedAliasIndex<f64>,
    offset: usize,
    n_finite: usize,
}

impl<'a> GapSampler<'a> {
    fn new(d: &'a InterArrival) -> Result<Self> {
        let offset = d.support_min();
        let mut w: Vec<f64> = d.pmf()[offset..].to_vec();
        let n_finite = w.len();
        w.push(d.tail_at_horizon());
        w.push(d.p_inf());
        let alias = WeightedAliasIndex::new(w).map_err(|e| Error::InvalidPmf(e.to_string()))?;
        Ok(Self {
            d,
            alias,
            offset,
            n_finite,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Extent {
        let i = self.alias.sample(rng);
        if i < self.n_finite {
            Extent::Finite((i + self.offset) as u64)
        } else if i == self.n_finite {
            let u: f64 = rng.random();
            match self.d.overflow_log_gap(1.0 - u) {
                Some(s) => Extent::Beyond(s),
                None => Extent::Unresolved,
            }
        } else {
            Extent::Infinite
        }
    }
}

fn add_extent(a: Extent, b: Extent) -> Extent {
    use Extent::*;
    match (a, b) {
        (Infinite, _) | (_, Infinite) => Infinite,
        (Unresolved, _) | (_, Unresolved) => Unresolved,
        (Finite(x), Finite(y)) => Finite(x + y),
        (x, y) => Beyond(log_add(x.ln(), y.ln())),
    }
}

fn max_extent(a: Extent, b: Extent) -> Extent {
    use Extent::*;
    match (a, b) {
        (Infinite, _) | (_, Infinite) => Infinite,
        (Unresolved, _) | (_, Unresolved) => Unresolved,
        (Finite(x), Finite(y)) => Finite(x.max(y)),
        (x, y) => {
            if x.ln() >= y.ln() {
                x
            } else {
                y
            }
        }
    }
}

/// `count` i.i.d. realizations of `(τ_k, M_k)`.
pub fn sample_paths(d: &InterArrival, k: usize, count: usize, seed: u64) -> Result<Vec<PathSample>> {
    let sampler = GapSampler::new(d)?;
    let parts: Vec<Vec<PathSample>> = chunks(count)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            (0..len)
                .map(|_| {
                    let mut tau = Extent::Finite(0);
                    let mut max_gap = Extent::Finite(0);
                    let mut overflowed = false;
                    for _ in 0..k {
                        let g = sampler.draw(&mut rng);
                        overflowed |= matches!(g, Extent::Beyond(_) | Extent::Unresolved);
                        tau = add_extent(tau, g);
                        max_gap = max_extent(max_gap, g);
                    }
                    PathSample {
                        tau,
                        max_gap,
                        overflowed,
                    }
                })
                .collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

/// Running mean and squared deviation (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0.0 {
            return b;
        }
        if b.n == 0.0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + d * b.n / n,
            m2: a.m2 + b.m2 + d * d * a.n * b.n / n,
        }
    }
}

/// Merge chunk statistics in a fixed pairwise tree.
fn tree_merge(mut v: Vec<Moments>) -> Moments {
    if v.is_empty() {
        return Moments::default();
    }
    while v.len() > 1 {
        v = v
            .chunks(2)
            .map(|p| if p.len() == 2 { Moments::merge(p[0], p[1]) } else { p[0] })
            .collect();
    }
    v[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Plain,
    Tilted,
}

/// Monte Carlo estimate, serialized as `{value, std_error, n_samples, seed, method, config_hash}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub method: Method,
    pub config_hash: Option<String>,
}

impl McEstimate {
    pub fn with_config_hash(mut self, h: impl Into<String>) -> Self {
        self.config_hash = Some(h.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

fn estimate(m: Moments, count: usize, seed: u64, method: Method) -> McEstimate {
    let var = if m.n > 1.0 { m.m2 / (m.n - 1.0) } else { 0.0 };
    McEstimate {
        value: m.mean,
        std_error: (var / m.n).sqrt(),
        n_samples: count,
        seed,
        method,
        config_hash: None,
    }
}

fn run_chunks(count: usize, seed: u64, sample: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> Moments {
    let parts: Vec<Moments> = chunks(count)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(sample(&mut rng));
            }
            m
        })
        .collect();
    tree_merge(parts)
}

fn window_alias(p: &[f64]) -> Result<(WeightedAliasIndex<f64>, usize)> {
    let offset = p.iter().position(|v| *v > 0.0).unwrap_or(0);
    let alias =
        WeightedAliasIndex::new(p[offset..].to_vec()).map_err(|e| Error::InvalidPmf(e.to_string()))?;
    Ok((alias, offset))
}

/// Plain Monte Carlo estimate of `P(τ_k <= n)`.
pub fn plain_estimate_cdf(d: &InterArrival, n: usize, k: usize, count: usize, seed: u64) -> Result<McEstimate> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let sampler = GapSampler::new(d)?;
    let m = run_chunks(count, seed, |rng| {
        let mut tau = Extent::Finite(0);
        for _ in 0..k {
            tau = add_extent(tau, sampler.draw(rng));
            if !tau.at_most(n as u64) {
                return 0.0;
            }
        }
        1.0
    });
    Ok(estimate(m, count, seed, Method::Plain))
}

/// Tilt used by [`is_estimate_cdf`]: target `(1-ε) n / k` on the window `j <= n`,
/// or no tilt when that target is not below the untilted window mean.
pub fn estimator_tilt(d: &InterArrival, n: usize, k: usize, eps: f64) -> Result<TiltSolution> {
    if !(0.0..1.0).contains(&eps) || k == 0 {
        return Err(Error::InvalidArgument(format!("need k >= 1 and eps in [0, 1), got k = {k}, eps = {eps}")));
    }
    let window = n.min(d.horizon());
    let pmf = &d.pmf()[..=window];
    let target = (1.0 - eps) * n as f64 / k as f64;
    match solve_window_tilt(pmf, target) {
        Ok(l) => Ok(build_tilt(d, pmf, l, target)),
        Err(Error::TargetOutOfRange { hi, .. }) if target >= hi => Ok(build_tilt(d, pmf, 0.0, target)),
        Err(e) => Err(e),
    }
}

/// Unbiased tilted estimate of `P(τ_k <= n)`.
///
/// Gaps are drawn from `f_j e^{-λj}/Z` on `j <= n`; each path carries weight
/// `exp(λ τ_k + k ln Z) 1{τ_k <= n}`. Gaps past `n` cannot occur on the event,
/// so the window restriction costs nothing in bias.
pub fn is_estimate_cdf(d: &InterArrival, n: usize, k: usize, eps: f64, count: usize, seed: u64) -> Result<McEstimate> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let t = estimator_tilt(d, n, k, eps)?;
    let (alias, offset) = window_alias(&t.tilted_pmf)?;
    let m = run_chunks(count, seed, |rng| {
        let mut tau = 0u64;
        for _ in 0..k {
            tau += (alias.sample(rng) + offset) as u64;
        }
        if tau <= n as u64 {
            t.log_weight(tau, k).exp()
        } else {
            0.0
        }
    });
    Ok(estimate(m, count, seed, Method::Tilted))
}

/// `Σ_paths P̃(path) · weight · 1{τ_k <= n}` by exhaustive enumeration of gap tuples.
pub fn exhaustive_tilted_expectation(t: &TiltSolution, k: usize, n: usize) -> f64 {
    fn rec(t: &TiltSolution, left: usize, budget: usize, ln_p: f64, acc: &mut CompensatedSum, k: usize, tau: u64) {
        if left == 0 {
            acc.add((ln_p + t.log_weight(tau, k)).exp());
            return;
        }
        let top = budget.min(t.window());
        for g in 1..=top {
            let p = t.tilted_pmf[g];
            if p > 0.0 && budget - g >= left - 1 {
                rec(t, left - 1, budget - g, ln_p + p.ln(), acc, k, tau + g as u64);
            }
        }
    }
    let mut acc = CompensatedSum::new();
    rec(t, k, n, 0.0, &mut acc, k, 0);
    acc.value()
}

/// Empirical law of `k r(τ_k)` against `1 - e^{-y}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DarlingEmpirical {
    pub k: usize,
    pub grid: Vec<f64>,
    /// Fraction of samples with `k r(τ_k) < y` at each grid point.
    pub cdf: Vec<f64>,
    /// Kolmogorov distance to `1 - e^{-y}` over all samples.
    pub sup_distance: f64,
    /// Largest gap on `grid`.
    pub grid_distance: f64,
    pub overflow_fraction: f64,
    pub unresolved_fraction: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Default evaluation grid `y = 0, 0.05, ..., 5`.
pub fn default_darling_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.05).collect()
}

pub fn darling_empirical(d: &InterArrival, k: usize, count: usize, seed: u64, grid: &[f64]) -> Result<DarlingEmpirical> {
    let paths = sample_paths(d, k, count, seed)?;
    let overflow = paths.iter().filter(|p| p.overflowed).count();
    let unresolved = paths.iter().filter(|p| p.tau == Extent::Unresolved).count();
    let unresolved_fraction = unresolved as f64 / count as f64;
    if unresolved_fraction > MAX_UNRESOLVED_FRACTION {
        return Err(Error::ExcessOverflow {
            fraction: unresolved_fraction,
        });
    }
    let mut ys: Vec<f64> = paths
        .iter()
        .map(|p| -> Result<f64> {
            let r = match p.tau {
                Extent::Finite(t) => d.tail_extended(t as f64)?.value,
                Extent::Beyond(s) => d.tail_extended_log(s)?.value,
                Extent::Infinite => d.p_inf(),
                Extent::Unresolved => d.tail_at_horizon() + d.p_inf(),
            };
            Ok(k as f64 * r)
        })
        .collect::<Result<_>>()?;
    ys.sort_by(|a, b| a.partial_cmp(b).expect("finite statistic"));
    let n = ys.len() as f64;
    let target = crate::asymptotics::darling_cdf;
    let mut sup: f64 = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let f = target(*y);
        sup = sup.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let cdf: Vec<f64> = grid
        .iter()
        .map(|y| ys.partition_point(|v| v < y) as f64 / n)
        .collect();
    let grid_distance = grid
        .iter()
        .zip(cdf.iter())
        .map(|(y, c)| (c - target(*y)).abs())
        .fold(0.0, f64::max);
    Ok(DarlingEmpirical {
        k,
        grid: grid.to_vec(),
        cdf,
        sup_distance: sup,
        grid_distance,
        overflow_fraction: overflow as f64 / n,
        unresolved_fraction,
        n_samples: count,
        seed,
    })
}

/// Exact `P(r(τ₁) < y)`: with `n_y = min{n : r(n) < y}`, this is `r(n_y - 1)`.
pub fn darling_exact_k1(d: &InterArrival, y: f64) -> f64 {
    let r = d.tails();
    match r.iter().position(|v| *v < y) {
        Some(0) => 1.0,
        Some(ny) => r[ny - 1],
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_tilt_against_closed_form_bisection() {
        let d = InterArrival::uniform12(2).unwrap();
        let t = solve_tilt(&d, 1.25).unwrap();
        // Oracle: bisection on q = e^{-λ} in (1 + 2q)/(1 + q) = 1.25.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let q = 0.5 * (lo + hi);
            if (1.0 + 2.0 * q) / (1.0 + q) > 1.25 {
                hi = q
            } else {
                lo = q
            }
        }
        assert_relative_eq!((-t.lambda_star).exp(), 0.5 * (lo + hi), max_relative = 1e-9);
        assert_relative_eq!(t.achieved_mean, 1.25, max_relative = 1e-10);
        assert_relative_eq!(t.tilted_pmf.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        // Ẽ[G²] = (1 + 4q)/(1 + q).
        let q = (-t.lambda_star).exp();
        assert_relative_eq!(tilted_variance_check(&t), (1.0 + 4.0 * q) / (1.0 + q), max_relative = 1e-12);
        assert_eq!(solve_tilt(&d, 1.5).unwrap_err().name(), "TargetOutOfRange");
    }

    #[test]
    fn delta_paths_are_deterministic() {
        let d = InterArrival::delta1(10).unwrap();
        for p in sample_paths(&d, 7, 3000, 5).unwrap() {
            assert_eq!(p.tau, Extent::Finite(7));
            assert_eq!(p.max_gap, Extent::Finite(1));
        }
        let t = solve_tilt_within(&d, 1.0, 10);
        assert!(t.is_err());
        assert_eq!(tilted_variance_check(&estimator_tilt(&d, 20, 5, 0.1).unwrap()), 1.0);
    }

    #[test]
    fn untilted_weights_are_one() {
        let d = InterArrival::uniform12(50).unwrap();
        let t = estimator_tilt(&d, 40, 10, 0.1).unwrap();
        assert_eq!(t.lambda_star, 0.0);
        assert_eq!(t.log_weight(17, 10), 0.0);
        let e = is_estimate_cdf(&d, 40, 10, 0.1, 2000, 1).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn uniform_mean_of_tau5() {
        let d = InterArrival::uniform12(20).unwrap();
        let p = sample_paths(&d, 5, 20_000, 11).unwrap();
        let mean = p
            .iter()
            .map(|s| match s.tau {
                Extent::Finite(t) => t as f64,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / 20_000.0;
        // sd of τ₅ is sqrt(5)/2.
        let se = 5f64.sqrt() / 2.0 / 20_000f64.sqrt();
        assert!((mean - 7.5).abs() < 3.0 * se);
    }

    #[test]
    fn estimates_are_reproducible_across_thread_counts() {
        let d = InterArrival::d0(500).unwrap();
        let a = is_estimate_cdf(&d, 200, 20, 0.1, 5000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| is_estimate_cdf(&d, 200, 20, 0.1, 5000, 42).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let j = a.clone().with_config_hash("abc").to_json();
        assert!(j.contains("\"method\":\"Tilted\"") && j.contains("\"config_hash\":\"abc\""));
    }

    #[test]
    fn weight_identity_on_random_paths() {
        let d = InterArrival::d0(300).unwrap();
        let t = estimator_tilt(&d, 300, 30, 0.1).unwrap();
        let mut rng = chunk_rng(9, 0);
        for _ in 0..200 {
            let gaps: Vec<usize> = (0..30).map(|_| rng.random_range(1..=10)).collect();
            let tau: u64 = gaps.iter().map(|g| *g as u64).sum();
            let ln_p: f64 = gaps.iter().map(|g| d.pmf()[*g].ln()).sum();
            let ln_pt: f64 = gaps.iter().map(|g| t.tilted_pmf[*g].ln()).sum();
            assert!((ln_pt + t.log_weight(tau, 30) - ln_p).abs() < 1e-12 * ln_p.abs());
        }
    }

    #[test]
    fn darling_k1_image_law() {
        let d = InterArrival::d0(1000).unwrap();
        assert_eq!(darling_exact_k1(&d, 0.0), 0.0);
        let e = darling_empirical(&d, 1, 50_000, 3, &[0.0, 0.2, 0.5, 0.9]).unwrap();
        assert_eq!(e.cdf[0], 0.0);
        for (y, c) in e.grid.iter().zip(e.cdf.iter()).skip(1) {
            let p = darling_exact_k1(&d, *y);
            let se = (p * (1.0 - p) / 50_000.0).sqrt();
            assert!((c - p).abs() < 4.0 * se, "y={y}: {c} vs {p}");
        }
    }

    #[test]
    fn unresolved_overflow_is_gated() {
        let d = InterArrival::d0(50).unwrap();
        let mut crude = d.clone();
        crude.drop_tail_model();
        assert_eq!(
            darling_empirical(&crude, 10, 2000, 1, &[1.0]).unwrap_err().name(),
            "ExcessOverflow"
        );
        assert!(darling_empirical(&d, 10, 2000, 1, &[1.0]).is_ok());
    }
}
