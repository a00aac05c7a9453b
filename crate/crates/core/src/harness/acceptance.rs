//! The acceptance suite. Every check returns one [`Criterion`] line whose
//! text depends only on the computed numbers, never on timing or threads.

use std::fmt;

use super::tolerances as tol;
use crate::asymptotics::{
    extdarling_lower_const, fuk_nagaev_bound_with, fuk_nagaev_constant, ld_rate, ln_predict_local_pmf,
    local_limit_k, reverse_avg_pair,
};
use crate::conv::Backend;
use crate::error::Result;
use crate::interarrival::InterArrival;
use crate::rare_event::{
    darling_empirical, default_darling_grid, estimator_tilt, exhaustive_tilted_expectation, is_estimate_cdf,
    DEFAULT_EPS,
};
use crate::renewal_exact::{
    gf_identity_check, invert_renewal, k_fold_row, k_step_ln_cdf, renewal_mass, truncated_sum_tail, Domain,
    KStepOptions, KStepTable, Tilt,
};
use crate::sv_func::{ConjugateSv, SvFunc};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Criterion {
    pub id: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:>2} {:<22} {}", self.id, self.name, self.detail)
    }
}

fn settle(id: &'static str, name: &'static str, r: Result<(bool, String)>) -> Criterion {
    let (pass, detail) = match r {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.name())),
    };
    Criterion { id, name, pass, detail }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Every builder conserves mass; `corrupt` perturbs one D0 entry.
pub fn mass_conservation(corrupt: bool) -> Criterion {
    settle("M", "mass conservation", (|| {
        let d0 = InterArrival::d0(10_000)?;
        let d0 = if corrupt { d0.with_pmf_perturbation(5, 1e-6) } else { d0 };
        let laws = [
            InterArrival::defective(&InterArrival::d0(10_000)?, 0.3)?,
            d0,
            InterArrival::doney_half(10_000)?,
            InterArrival::ssrw_z2(10_000)?,
            InterArrival::uniform12(100)?,
            InterArrival::delta1(100)?,
            InterArrival::interleaved(&InterArrival::d0(5_000)?)?,
            InterArrival::explicit(&[0.0, 0.2, 0.3, 0.5], None, 0.0)?,
        ];
        let worst = laws.iter().map(|d| d.mass_defect()).fold(0.0, f64::max);
        Ok((worst <= tol::MASS, format!("max defect {worst:.3e} (tol {:.0e})", tol::MASS)))
    })())
}

pub fn c01_round_trip() -> Criterion {
    settle("1", "round-trip inversion", (|| {
        let n = 2000;
        let laws = [
            InterArrival::d0(n)?,
            InterArrival::uniform12(n)?,
            InterArrival::interleaved(&InterArrival::d0(n / 2)?)?,
        ];
        let mut worst: f64 = 0.0;
        for d in &laws {
            let u = renewal_mass(d, n, Backend::Auto)?;
            let inv = invert_renewal(&u, Backend::Auto);
            let e = inv
                .pmf
                .iter()
                .zip(d.pmf())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(e);
        }
        Ok((worst <= tol::ROUND_TRIP, format!("sup-norm {worst:.3e} (tol {:.0e})", tol::ROUND_TRIP)))
    })())
}

pub fn c02_recursion() -> Criterion {
    settle("2", "recursion identity", (|| {
        let n = 10_000;
        let laws = [
            InterArrival::d0(n)?,
            InterArrival::doney_half(n)?,
            InterArrival::ssrw_z2(n)?,
            InterArrival::uniform12(n)?,
            InterArrival::delta1(n)?,
            InterArrival::interleaved(&InterArrival::d0(n / 2)?)?,
            InterArrival::defective(&InterArrival::d0(n)?, 0.3)?,
        ];
        let mut worst: f64 = 0.0;
        for d in &laws {
            worst = worst.max(renewal_mass(d, n, Backend::Auto)?.recursion_residual(d));
        }
        Ok((worst <= tol::RECURSION, format!("max residual {worst:.3e} (tol {:.0e})", tol::RECURSION)))
    })())
}

pub fn c03_generating_function() -> Criterion {
    settle("3", "generating function", (|| {
        let mut worst: f64 = 0.0;
        for s in [0.9f64, 0.99, 0.999] {
            let n = (40.0 / (1.0 - s)).ceil() as usize;
            for d in [InterArrival::d0(n)?, InterArrival::uniform12(n)?, InterArrival::doney_half(n)?] {
                let u = renewal_mass(&d, n, Backend::Auto)?;
                worst = worst.max(gf_identity_check(&d, &u, s)?);
            }
        }
        Ok((worst <= tol::GF_IDENTITY, format!("max deviation {worst:.3e} (tol {:.0e})", tol::GF_IDENTITY)))
    })())
}

pub fn c04_strong_renewal() -> Criterion {
    settle("4", "strong renewal trend", (|| {
        let grid = [100, 1_000, 10_000, 100_000];
        let d = InterArrival::d0(100_000)?;
        let u = renewal_mass(&d, 100_000, Backend::Auto)?;
        let mut dev = Vec::new();
        for n in grid {
            let r = d.tail(n)?;
            dev.push((u.u_at(n)? * r * r / d.f(n)? - 1.0).abs());
        }
        let last = *dev.last().unwrap();
        let pass = strictly_decreasing(&dev) && last <= tol::STRONG_RENEWAL_FINAL;
        Ok((pass, format!("|ratio-1| {} (final tol {})", list(&dev), tol::STRONG_RENEWAL_FINAL)))
    })())
}

pub fn c05_local_limit() -> Criterion {
    settle("5", "local limit", (|| {
        let d = InterArrival::d0(100_000)?;
        let mut dev = Vec::new();
        for n in [1_000, 10_000, 100_000] {
            let k = local_limit_k(&d, n)?;
            let row = k_fold_row(&d, k, n, None, Tilt::Auto, Backend::Auto)?;
            dev.push(((row.ln_at(n) - ln_predict_local_pmf(&d, k, n)?).exp() - 1.0).abs());
        }
        let n = 2000;
        let small = InterArrival::d0(n)?;
        let opts = KStepOptions {
            domain: Domain::Log,
            ..Default::default()
        };
        let table = KStepTable::build(&small, n, n, opts)?;
        let mut c = f64::NEG_INFINITY;
        for k in 1..=n {
            c = c.max(table.ln_entry(k, n)? - ln_predict_local_pmf(&small, k, n)?);
        }
        let c = c.exp();
        let pass = strictly_decreasing(&dev) && c <= tol::LOCAL_UNIFORM_C;
        Ok((
            pass,
            format!("|ratio-1| {}; uniform C {c:.4} (tol {})", list(&dev), tol::LOCAL_UNIFORM_C),
        ))
    })())
}

pub fn c06_extdarling_bracket() -> Criterion {
    settle("6", "small-k bracket", (|| {
        let n = 10_000;
        let d = InterArrival::d0(n)?;
        let phi = d.phi_eff().expect("regvar law").eval(n as f64);
        let ln_keep = (-d.tail(n)?).ln_1p();
        let mut pass = true;
        let mut parts = Vec::new();
        for m in [0.1, 0.3] {
            let k = (m / phi).floor() as usize;
            let m_k = k as f64 * phi;
            let upper = k as f64 * ln_keep;
            let lower = extdarling_lower_const(m_k).ln() + upper;
            let ln_p = k_step_ln_cdf(&d, k, n)?;
            pass &= lower <= ln_p && ln_p <= upper;
            parts.push(format!(
                "k={k}: {:.4e} <= {:.4e} <= {:.4e}",
                lower.exp(),
                ln_p.exp(),
                upper.exp()
            ));
        }
        Ok((pass, parts.join("; ")))
    })())
}

pub fn c07_ld_rate() -> Criterion {
    settle("7", "large-deviation rate", (|| {
        let d = InterArrival::d0(30_000)?;
        let mut ratios = Vec::new();
        for (k, n) in [(1_000, 10_000), (3_000, 30_000)] {
            let ln_p = k_step_ln_cdf(&d, k, n)?;
            ratios.push(-ln_p / ld_rate(&d, n, k)?.value);
        }
        let (lo, hi) = tol::LD_BAND;
        let inside = ratios.iter().all(|r| (lo..=hi).contains(r));
        let closer = (ratios[1] - 1.0).abs() < (ratios[0] - 1.0).abs();
        Ok((inside && closer, format!("ratios {} (band [{lo}, {hi}])", list(&ratios))))
    })())
}

pub fn c08_fuk_nagaev() -> Criterion {
    settle("8", "Fuk-Nagaev domination", (|| {
        let mut violations = 0;
        let mut checked = 0;
        for d in [InterArrival::d0(1024)?, InterArrival::doney_half(1024)?] {
            for m in [16, 64] {
                let c5 = fuk_nagaev_constant(&d, m)?;
                for k in [2, 8, 32] {
                    for n in [256, 1024] {
                        let bound = fuk_nagaev_bound_with(&d, c5, k, m, n)?;
                        let exact = truncated_sum_tail(&d, k, m, n as f64 / 2.0)?;
                        checked += 1;
                        if bound < exact {
                            violations += 1;
                        }
                    }
                }
            }
        }
        Ok((violations == 0, format!("{violations} violations of {checked}")))
    })())
}

pub fn c09_darling() -> Criterion {
    settle("9", "Darling law", (|| {
        let d = InterArrival::d0(100_000)?;
        let grid = default_darling_grid();
        let a = darling_empirical(&d, 10, tol::SAMPLES, tol::SEED, &grid)?;
        let b = darling_empirical(&d, 100, tol::SAMPLES, tol::SEED, &grid)?;
        Ok((
            b.sup_distance < a.sup_distance,
            format!(
                "sup-distance k=10 {:.4e}, k=100 {:.4e} (seed {:#x})",
                a.sup_distance,
                b.sup_distance,
                tol::SEED
            ),
        ))
    })())
}

pub fn c10_importance_sampling() -> Criterion {
    settle("10", "importance sampling", (|| {
        let small = InterArrival::d0(64)?;
        let mut worst: f64 = 0.0;
        for (k, n) in [(8, 24), (6, 40), (4, 64)] {
            let t = estimator_tilt(&small, n, k, DEFAULT_EPS)?;
            let ex = exhaustive_tilted_expectation(&t, k, n);
            let dp = k_fold_row(&small, k, n, None, Tilt::None, Backend::Direct)?.ln_cdf(n).exp();
            worst = worst.max((ex / dp - 1.0).abs());
        }
        let (k, n) = (200, 2000);
        let d = InterArrival::d0(n)?;
        let est = is_estimate_cdf(&d, n, k, DEFAULT_EPS, tol::SAMPLES, tol::SEED)?;
        let exact = k_step_ln_cdf(&d, k, n)?.exp();
        let z = (est.value - exact) / est.std_error;
        let pass = worst <= tol::EXHAUSTIVE_REL && z.abs() <= tol::IS_SIGMAS;
        Ok((
            pass,
            format!(
                "exhaustive rel {worst:.3e}; IS {:.6e} ± {:.3e} vs DP {exact:.6e} (z {z:.3})",
                est.value, est.std_error
            ),
        ))
    })())
}

pub fn c11_interleaved() -> Criterion {
    settle("11", "interleaved law", (|| {
        let d = InterArrival::interleaved(&InterArrival::d0(50_000)?)?;
        let u = renewal_mass(&d, 100_000, Backend::Auto)?;
        let pointwise = |n: usize| -> Result<f64> {
            let r = d.tail(n)?;
            Ok(d.f(n)? / (r * r * u.u_at(n)?))
        };
        let odd: Vec<f64> = [1_001, 10_001, 99_999].iter().map(|n| pointwise(*n)).collect::<Result<_>>()?;
        let even: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|n| pointwise(*n)).collect::<Result<_>>()?;
        let mut dev = Vec::new();
        for n in [1_000, 10_000, 100_000] {
            let eps = 1.0 / (n as f64 + std::f64::consts::E).ln();
            let (lhs, rhs) = reverse_avg_pair(&d, &u, n, eps)?;
            dev.push((lhs / rhs - 1.0).abs());
        }
        let oscillates = odd.iter().all(|v| *v == 0.0) && even.iter().all(|v| *v >= tol::INTERLEAVED_EVEN_FLOOR);
        let last = *dev.last().unwrap();
        let trend = strictly_decreasing(&dev) && last <= tol::INTERLEAVED_AVG_FINAL;
        Ok((
            oscillates && trend,
            format!(
                "odd {}, even {}; averaged |ratio-1| {} (final tol {})",
                list(&odd),
                list(&even),
                list(&dev),
                tol::INTERLEAVED_AVG_FINAL
            ),
        ))
    })())
}

pub fn c12_transient() -> Criterion {
    settle("12", "transient reverse", (|| {
        let p = 0.3;
        let d = InterArrival::defective(&InterArrival::d0(100_000)?, p)?;
        let u = renewal_mass(&d, 100_000, Backend::Auto)?;
        let mut dev = Vec::new();
        for n in [100, 1_000, 10_000, 100_000] {
            dev.push((d.f(n)? / (p * p * u.u_at(n)?) - 1.0).abs());
        }
        let last = *dev.last().unwrap();
        let pass = strictly_decreasing(&dev) && last <= tol::TRANSIENT_FINAL;
        Ok((pass, format!("|ratio-1| {} (final tol {})", list(&dev), tol::TRANSIENT_FINAL)))
    })())
}

pub fn c13_conjugate() -> Criterion {
    settle("13", "conjugate inverse", (|| {
        let y = 1e8;
        let mut phis = Vec::new();
        for c in [0.5, 1.0, 3.0] {
            phis.push(SvFunc::constant(c)?);
        }
        for a in [-3.0, -2.5, -2.0, -1.5, -1.0] {
            phis.push(SvFunc::log_pow(a)?);
        }
        let mut worst: f64 = 0.0;
        for phi in phis {
            let h = y * phi.eval(y);
            let conj = ConjugateSv::new(phi)?;
            let g = h * conj.eval(h)?;
            worst = worst.max((g / y - 1.0).abs());
        }
        Ok((worst <= tol::CONJUGATE, format!("max |g(h(y))/y-1| {worst:.3e} (tol {})", tol::CONJUGATE)))
    })())
}

/// The stochastic criteria, which the determinism check repeats.
pub fn stochastic() -> Vec<Criterion> {
    vec![c09_darling(), c10_importance_sampling()]
}

/// Repeat the stochastic criteria on a single thread and compare the lines.
pub fn c14_determinism_against(first: &[Criterion]) -> Criterion {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build();
    let again = match pool {
        Ok(p) => p.install(stochastic),
        Err(e) => {
            return Criterion {
                id: "14",
                name: "determinism",
                pass: false,
                detail: format!("thread pool: {e}"),
            }
        }
    };
    let same = first.len() == again.len() && first.iter().zip(&again).all(|(a, b)| a.to_string() == b.to_string());
    Criterion {
        id: "14",
        name: "determinism",
        pass: same,
        detail: format!("{} stochastic lines identical across thread counts: {same}", first.len()),
    }
}

pub fn c14_determinism() -> Criterion {
    c14_determinism_against(&stochastic())
}

/// Options of [`selftest`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SelftestOptions {
    /// Perturb one pmf entry so mass conservation must fail.
    pub corrupt_pmf: bool,
}

/// The whole suite, in order.
pub fn selftest(opts: SelftestOptions) -> Vec<Criterion> {
    let mut out = vec![
        mass_conservation(opts.corrupt_pmf),
        c01_round_trip(),
        c02_recursion(),
        c03_generating_function(),
        c04_strong_renewal(),
        c05_local_limit(),
        c06_extdarling_bracket(),
        c07_ld_rate(),
        c08_fuk_nagaev(),
    ];
    let st = stochastic();
    out.extend(st.iter().cloned());
    out.push(c11_interleaved());
    out.push(c12_transient());
    out.push(c13_conjugate());
    out.push(c14_determinism_against(&st));
    out
}
