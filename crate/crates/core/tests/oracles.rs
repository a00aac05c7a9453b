//! Cross-checks of samplers, predictors and DP laws against independent oracles.

use renewal_zero::asymptotics::{
    conjugate_for, rate_function, slow_variation_check_u, extdarling_lower_const,
};
use renewal_zero::rare_event::{
    is_estimate_cdf, plain_estimate_cdf, sample_paths, solve_tilt, tilted_variance_check, Extent,
};
use renewal_zero::renewal_exact::{
    big_jump_conditional, gf_identity_check, intersect_renewals, invert_renewal, k_fold_row, k_step_ln_cdf,
    one_big_gap_mass, renewal_mass, Tilt,
};
use renewal_zero::{Backend, InterArrival, KStepOptions, KStepTable};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn sampled_k_step_law_passes_chi_square() {
    let (k, n, count) = (10, 200, 1_000_000);
    let d = InterArrival::d0(1000).unwrap();
    let row = k_fold_row(&d, k, n, None, Tilt::None, Backend::Direct).unwrap();
    let mut observed = vec![0u64; n + 1];
    let mut beyond = 0u64;
    for p in sample_paths(&d, k, count, 2024).unwrap() {
        match p.tau {
            Extent::Finite(t) if t <= n as u64 => observed[t as usize] += 1,
            _ => beyond += 1,
        }
    }
    // Pool consecutive cells until each expects at least 5 hits.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for j in k..=n {
        e += row.at(j) * count as f64;
        o += observed[j] as f64;
        if e >= 5.0 {
            cells.push((e, o));
            e = 0.0;
            o = 0.0;
        }
    }
    let listed: f64 = cells.iter().map(|c| c.0).sum::<f64>() + e;
    cells.push((count as f64 - listed + e, beyond as f64 + o));
    let stat: f64 = cells.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 {stat} on {dof} dof, p = {p}");
}

#[test]
fn k_step_cdf_matches_plain_monte_carlo() {
    let d = InterArrival::d0(500).unwrap();
    let table = KStepTable::build(&d, 50, 500, KStepOptions::default()).unwrap();
    let exact = table.cdf(50, 500).unwrap();
    let mc = plain_estimate_cdf(&d, 500, 50, 200_000, 99).unwrap();
    assert!((mc.value - exact).abs() <= 4.0 * mc.std_error, "{} vs {exact}", mc.value);
}

#[test]
fn tilting_reduces_variance_where_the_event_is_rare() {
    let (k, n, count) = (500, 2000, 20_000);
    let d = InterArrival::d0(n).unwrap();
    let phi = d.phi_eff().unwrap().eval(n as f64);
    assert!(k as f64 * phi >= 5.0);
    let exact = k_step_ln_cdf(&d, k, n).unwrap().exp();
    let est = is_estimate_cdf(&d, n, k, 0.1, count, 5).unwrap();
    // Plain sampling sees no hits at this count, so its standard error is taken analytically.
    let plain_se = (exact * (1.0 - exact) / count as f64).sqrt();
    assert!(est.std_error < plain_se, "{} vs {plain_se}", est.std_error);
    assert!((est.value - exact).abs() <= 3.0 * est.std_error);
}

#[test]
fn partition_identity_with_one_big_gap() {
    let d = InterArrival::d0(400).unwrap();
    for (k, n) in [(2, 64), (3, 200), (5, 200), (8, 400)] {
        let full = k_fold_row(&d, k, n, None, Tilt::None, Backend::Direct).unwrap().at(n);
        for m in [n / 2 + 1, 3 * n / 4] {
            let cut = k_fold_row(&d, k, n, Some(m), Tilt::None, Backend::Direct).unwrap().at(n);
            let big = one_big_gap_mass(&d, k, n, m).unwrap();
            assert!(((cut + big) / full - 1.0).abs() < 1e-12, "k={k} n={n} m={m}");
        }
    }
}

#[test]
fn big_jump_probability_grows_with_n() {
    let d = InterArrival::d0(8000).unwrap();
    let v: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|n| big_jump_conditional(&d, 3, *n, 0.1).unwrap())
        .collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
    assert!(v.iter().all(|x| *x > 0.0 && *x < 1.0));
}

#[test]
fn tilt_scale_follows_the_conjugate() {
    let d = InterArrival::d0(100_000).unwrap();
    let t = solve_tilt(&d, 100.0).unwrap();
    assert!((t.achieved_mean / 100.0 - 1.0).abs() < 1e-6);
    let conj = conjugate_for(&d).unwrap();
    let scale = 100.0 * conj.eval(100.0).unwrap();
    let ratio = (1.0 / t.lambda_star) / scale;
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
}

#[test]
fn tilted_second_moment_scale() {
    let d = InterArrival::d0(2_000_000).unwrap();
    let target = 1000.0;
    let t = solve_tilt(&d, target).unwrap();
    let ratio = tilted_variance_check(&t) * t.lambda_star / target;
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");

    let u = InterArrival::uniform12(50).unwrap();
    let t = solve_tilt(&u, 1.25).unwrap();
    let q = (-t.lambda_star).exp();
    let closed = (1.0 + 4.0 * q) / (1.0 + q);
    assert!((tilted_variance_check(&t) - closed).abs() < 1e-12);
}

#[test]
fn rate_function_matches_asymptote_and_dp_slope() {
    let d = InterArrival::d0(100_000).unwrap();
    let b = 1000.0;
    let rf = rate_function(&d, b).unwrap();
    let r = rf.value / rf.asymptote;
    assert!((0.5..=2.0).contains(&r), "I(b)/r(bφ*(b)) = {r}");
    let k = 50;
    let slope = -k_step_ln_cdf(&d, k, (b as usize) * k).unwrap() / k as f64;
    let s = slope / rf.value;
    assert!((0.5..=2.0).contains(&s), "slope/I(b) = {s}");
}

#[test]
fn laplace_derivative_tracks_phi() {
    let d = InterArrival::d0(100_000).unwrap();
    let phi = d.phi_eff().unwrap();
    let dev: Vec<f64> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|l| {
            let p = d.laplace(*l).unwrap();
            (p.nu_prime * l / phi.eval(1.0 / l) - 1.0).abs()
        })
        .collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
}

#[test]
fn d0_tail_times_log_settles() {
    let d = InterArrival::d0(100_000).unwrap();
    let c = d.f(1).unwrap() * (1.0f64 + std::f64::consts::E).ln().powi(2);
    let dev: Vec<f64> = [100, 1_000, 10_000, 100_000]
        .iter()
        .map(|n| (d.tail(*n).unwrap() * (*n as f64 + std::f64::consts::E).ln() / c - 1.0).abs())
        .collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
}

#[test]
fn interleaved_tail_is_half_the_sigma_tail() {
    let sigma = InterArrival::d0(50_000).unwrap();
    let d = InterArrival::interleaved(&sigma).unwrap();
    let dev: Vec<f64> = [100, 1_000, 10_000, 100_000]
        .iter()
        .map(|n| (d.tail(*n).unwrap() / sigma.tail_extended(*n as f64).unwrap().value - 0.5).abs())
        .collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    assert_eq!(d.f(3).unwrap(), 0.0);
    assert_eq!(d.f(1).unwrap(), 0.5);
}

#[test]
fn defective_renewal_count_approaches_inverse_defect() {
    let d = InterArrival::defective(&InterArrival::d0(100_000).unwrap(), 0.3).unwrap();
    let u = renewal_mass(&d, 100_000, Backend::Auto).unwrap();
    let total = u.big_u_at(100_000).unwrap();
    // Σ_{n>N} u_n is asymptotically Σ_{n>N} f_n / p² = (r(N) - p) / p².
    let gap = 1.0 / 0.3 - total;
    let lead = (d.tail(100_000).unwrap() - 0.3) / 0.09;
    assert!(gap > 0.0 && (gap / lead - 1.0).abs() < 0.5, "{gap} vs {lead}");
}

#[test]
fn gf_identity_at_large_horizon() {
    let d = InterArrival::d0(100_000).unwrap();
    let u = renewal_mass(&d, 100_000, Backend::Auto).unwrap();
    assert!(gf_identity_check(&d, &u, 0.999).unwrap() < 1e-9);
    let w = InterArrival::uniform12(400).unwrap();
    let u = renewal_mass(&w, 400, Backend::Auto).unwrap();
    assert!(gf_identity_check(&w, &u, 0.9).unwrap() < 1e-12);
}

#[test]
fn renewal_count_times_tail_tends_to_one() {
    let d = InterArrival::d0(100_000).unwrap();
    let u = renewal_mass(&d, 100_000, Backend::Auto).unwrap();
    let rep = slow_variation_check_u(&u, &d);
    assert!(rep.slowly_varying);
    let dev: Vec<f64> = rep.product.iter().map(|p| (p - 1.0).abs()).collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
}

#[test]
fn intersection_of_two_heavy_renewals_is_transient() {
    let a = InterArrival::d0(5000).unwrap();
    let b = InterArrival::doney_half(5000).unwrap();
    let ua = renewal_mass(&a, 5000, Backend::Auto).unwrap();
    let ub = renewal_mass(&b, 5000, Backend::Auto).unwrap();
    let rho = intersect_renewals(&ua, &ub).unwrap();
    let inv = invert_renewal(&rho, Backend::Auto);
    assert!(!inv.negative);
    assert!(inv.defect > 0.0);
    let ones = renewal_mass(&InterArrival::delta1(5000).unwrap(), 5000, Backend::Direct).unwrap();
    assert_eq!(intersect_renewals(&ua, &ones).unwrap().u(), ua.u());
}

#[test]
fn lower_bracket_constant_limits() {
    assert!(extdarling_lower_const(0.01) > 0.97);
    assert!((extdarling_lower_const(0.1) - 0.8).abs() < 1e-15);
    assert!((extdarling_lower_const(1.0) - 1.0 / 32.0).abs() < 1e-15);
}
