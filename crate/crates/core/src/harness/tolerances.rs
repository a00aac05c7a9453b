//! Pinned acceptance tolerances and seeds.

/// Mass conservation of every builder.
pub const MASS: f64 = 1e-12;
/// Sup-norm of `invert(renewal_mass(f)) - f`.
pub const ROUND_TRIP: f64 = 1e-10;
/// Largest `|u_n - Σ f_j u_{n-j}|`.
pub const RECURSION: f64 = 1e-12;
/// `|u(s)(1 - f(s)) - 1|`.
pub const GF_IDENTITY: f64 = 1e-9;
/// Final `|u_n r(n)² / f_n - 1|` at `n = 10⁵`, D0.
pub const STRONG_RENEWAL_FINAL: f64 = 0.025;
/// Uniform local-limit constant at `n = 2000`, D0.
pub const LOCAL_UNIFORM_C: f64 = 1.25;
/// Band for `-ln P(τ_k <= n) / ld_rate`.
pub const LD_BAND: (f64, f64) = (0.5, 2.0);
/// Exhaustive tilted expectation against the DP, relative.
pub const EXHAUSTIVE_REL: f64 = 1e-10;
/// Sampled estimate against the DP, in standard errors.
pub const IS_SIGMAS: f64 = 3.0;
/// Even-`n` pointwise ratio floor for the interleaved law.
pub const INTERLEAVED_EVEN_FLOOR: f64 = 1.0;
/// Final `|averaged ratio - 1|` for the interleaved law at `n = 10⁵`.
pub const INTERLEAVED_AVG_FINAL: f64 = 0.05;
/// Final `|f_n / (p² u_n) - 1|` at `n = 10⁵`, defective D0 with `p = 0.3`.
pub const TRANSIENT_FINAL: f64 = 0.30;
/// `|g(h(y))/y - 1|` at `y = 10⁸`.
pub const CONJUGATE: f64 = 0.05;

/// Seed of every stochastic criterion.
pub const SEED: u64 = 0x5eed_2024;
/// Monte Carlo sample count.
pub const SAMPLES: usize = 100_000;
