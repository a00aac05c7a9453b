use proptest::prelude::*;
use renewal_zero::asymptotics::{
    darling_cdf, extdarling_lower_const, fuk_nagaev_bound, predict_local_pmf,
};
use renewal_zero::harness::ExperimentConfig;
use renewal_zero::rare_event::{is_estimate_cdf, solve_tilt_within};
use renewal_zero::renewal_exact::{convolve_rows, invert_renewal, renewal_mass, Domain};
use renewal_zero::{Backend, ConjugateSv, InterArrival, KStepOptions, KStepTable, SvFunc};

fn heavy_law() -> impl Strategy<Value = InterArrival> {
    prop_oneof![
        (-3.0f64..-1.2, 1usize..5, 200usize..3000)
            .prop_map(|(a, s, n)| InterArrival::regvar(0.0, SvFunc::log_pow(a).unwrap(), s, n.max(10 * s)).unwrap()),
        (0.05f64..0.95, 0.2f64..5.0, 200usize..3000)
            .prop_map(|(al, c, n)| InterArrival::regvar(al, SvFunc::constant(c).unwrap(), 1, n).unwrap()),
        (0.05f64..0.9, 200usize..2000)
            .prop_map(|(p, n)| InterArrival::defective(&InterArrival::d0(n).unwrap(), p).unwrap()),
        (100usize..1500).prop_map(|n| InterArrival::interleaved(&InterArrival::d0(n).unwrap()).unwrap()),
    ]
}

/// Aperiodic explicit pmf on `{1..len}` with `f_1 > 0`.
fn explicit_law() -> impl Strategy<Value = InterArrival> {
    prop::collection::vec(0.0f64..1.0, 2..40).prop_map(|mut w| {
        w[0] += 0.1;
        let s: f64 = w.iter().sum();
        let pmf: Vec<f64> = w.iter().map(|x| x / s).collect();
        InterArrival::explicit(&pmf, Some(pmf.len() + 200), 0.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mass_is_conserved(d in heavy_law()) {
        prop_assert!(d.mass_defect() <= 1e-12, "{}", d.mass_defect());
    }

    #[test]
    fn tail_is_monotone_and_telescopes(d in heavy_law()) {
        let r = d.tails();
        for n in 0..d.horizon() {
            prop_assert!(r[n + 1] <= r[n]);
            let step = r[n] - r[n + 1];
            prop_assert!((step - d.pmf()[n + 1]).abs() <= 4.0 * f64::EPSILON * r[n]);
        }
        prop_assert!((r[d.horizon()] - d.p_inf() - d.tail_at_horizon()).abs() <= 1e-15);
    }

    #[test]
    fn laplace_is_monotone(d in heavy_law()) {
        let grid = [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0];
        let all: Vec<_> = grid.iter().map(|l| d.laplace(*l)).collect();
        // An unresolved tail may only refuse the smallest λ values.
        let first = all.iter().position(|p| p.is_ok()).unwrap_or(all.len());
        for e in &all[..first] {
            prop_assert_eq!(e.as_ref().unwrap_err().name(), "TailDominates");
        }
        prop_assert!(all[first..].iter().all(|p| p.is_ok()));
        prop_assert!(all.last().unwrap().is_ok());
        let pairs: Vec<_> = all.into_iter().filter_map(|p| p.ok()).collect();
        for w in pairs.windows(2) {
            prop_assert!(w[1].nu > w[0].nu);
            prop_assert!(w[1].nu_prime < w[0].nu_prime);
        }
    }

    #[test]
    fn interleaved_odd_entries_vanish(n in 50usize..2000) {
        let d = InterArrival::interleaved(&InterArrival::d0(n).unwrap()).unwrap();
        prop_assert_eq!(d.pmf()[1], 0.5);
        for j in (3..=d.horizon()).step_by(2) {
            prop_assert_eq!(d.pmf()[j], 0.0);
        }
    }

    #[test]
    fn recursion_identity_and_round_trip(d in explicit_law(), fft in any::<bool>()) {
        let backend = if fft { Backend::Fft } else { Backend::Direct };
        let n = d.horizon();
        let u = renewal_mass(&d, n, backend).unwrap();
        prop_assert!(u.recursion_residual(&d) <= 1e-12);
        prop_assert!(u.u().iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        prop_assert!(u.cumulative().windows(2).all(|w| w[1] >= w[0]));
        let inv = invert_renewal(&u, backend);
        let worst = inv.pmf.iter().zip(d.pmf()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn convolution_semigroup(d in explicit_law(), k1 in 1usize..8, k2 in 1usize..8, n in 64usize..512) {
        let d = InterArrival::explicit(&d.pmf()[1..], Some(n.max(d.pmf().len())), 0.0).unwrap();
        let n = d.horizon().min(512);
        let direct = KStepOptions { backend: Backend::Direct, ..Default::default() };
        let fft = KStepOptions { backend: Backend::Fft, ..Default::default() };
        let a = KStepTable::build(&d, k1 + k2, n, direct).unwrap();
        let b = KStepTable::build(&d, k1 + k2, n, fft).unwrap();
        for backend in [Backend::Direct, Backend::Fft] {
            let joined = convolve_rows(&a.row(k1).unwrap(), &a.row(k2).unwrap(), backend);
            let whole = b.row(k1 + k2).unwrap();
            let worst = joined.iter().zip(&whole).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(worst <= 1e-10, "{worst}");
        }
    }

    #[test]
    fn row_mass_plus_deficit_is_one(d in heavy_law(), k in 1usize..12) {
        let n = d.horizon().min(1500);
        if d.p_inf() > 0.0 {
            return Ok(());
        }
        let t = KStepTable::build(&d, k, n, KStepOptions::default()).unwrap();
        let (lo, hi) = t.deficit_interval(k).unwrap();
        let m = t.row_mass(k).unwrap();
        prop_assert!(m + lo <= 1.0 + 1e-10 && m + hi >= 1.0 - 1e-10, "{m} [{lo}, {hi}]");
    }

    #[test]
    fn log_domain_agrees_with_linear(k in 1usize..20, n in 50usize..400) {
        let d = InterArrival::d0(n).unwrap();
        let lin = KStepTable::build(&d, k, n, KStepOptions::default()).unwrap();
        let log = KStepTable::build(&d, k, n, KStepOptions { domain: Domain::Log, ..Default::default() }).unwrap();
        for j in k..=n {
            let (a, b) = (lin.entry(k, j).unwrap(), log.entry(k, j).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300, "{a} {b}");
        }
    }

    #[test]
    fn local_predictor_at_k1_is_the_survival_factor(n in 2usize..5000) {
        let d = InterArrival::d0(5000).unwrap();
        let ratio = predict_local_pmf(&d, 1, n).unwrap() / d.f(n).unwrap();
        let r = d.tail(n).unwrap();
        prop_assert!((ratio / (1.0 - r) - 1.0).abs() <= 1e-13, "{ratio} {r}");
    }

    #[test]
    fn fuk_nagaev_is_monotone_in_k(m in 4usize..128, n in 128usize..1024, k in 1usize..40) {
        let d = InterArrival::d0(1024).unwrap();
        let a = fuk_nagaev_bound(&d, k, m, n).unwrap();
        let b = fuk_nagaev_bound(&d, k + 1, m, n).unwrap();
        prop_assert!(b >= a && (0.0..=1.0).contains(&b));
    }

    #[test]
    fn tilted_mean_hits_target(frac in 0.05f64..0.95, n in 200usize..3000) {
        let d = InterArrival::d0(n).unwrap();
        let m0: f64 = d.pmf().iter().enumerate().map(|(j, f)| j as f64 * f).sum::<f64>()
            / d.pmf().iter().sum::<f64>();
        let target = 1.0 + frac * (m0 - 1.0);
        let t = solve_tilt_within(&d, target, n).unwrap();
        prop_assert!((t.achieved_mean / target - 1.0).abs() <= 1e-6);
        let s: f64 = t.tilted_pmf.iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn conjugate_composition(a in -3.0f64..=-1.0, c in 0.1f64..10.0) {
        let y = 1e8;
        for phi in [SvFunc::log_pow(a).unwrap(), SvFunc::constant(c).unwrap()] {
            let h = y * phi.eval(y);
            let g = h * ConjugateSv::new(phi).unwrap().eval(h).unwrap();
            prop_assert!((g / y - 1.0).abs() <= 0.05);
        }
    }

    #[test]
    fn config_hash_ignores_key_order(seed in any::<u64>(), rot in 0usize..5) {
        let mut fields = [
            r#""kind":"big-jump""#.to_string(),
            r#""distribution":{"family":"builtin","name":"d0","horizon":500}"#.to_string(),
            r#""n_grid":[100,200]"#.to_string(),
            format!(r#""seed":{seed}"#),
            r#""k_rule":{"k":3,"rule":"fixed"}"#.to_string(),
        ];
        let base = ExperimentConfig::from_json(&format!("{{{}}}", fields.join(","))).unwrap().hash();
        fields.rotate_left(rot);
        fields.swap(0, 4);
        let other = ExperimentConfig::from_json(&format!("{{{}}}", fields.join(","))).unwrap().hash();
        prop_assert_eq!(base, other);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimates_are_reproducible(seed in any::<u64>()) {
        let d = InterArrival::d0(400).unwrap();
        let a = is_estimate_cdf(&d, 400, 20, 0.1, 3000, seed).unwrap();
        let b = is_estimate_cdf(&d, 400, 20, 0.1, 3000, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }
}

proptest! {
    #[test]
    fn darling_cdf_is_a_cdf(x in 0.0f64..50.0, dx in 0.0f64..5.0) {
        prop_assert!(darling_cdf(x + dx) >= darling_cdf(x));
        prop_assert!((0.0..=1.0).contains(&darling_cdf(x)));
    }

    #[test]
    fn lower_constant_in_unit_interval(m in 1e-6f64..10.0) {
        let a = extdarling_lower_const(m);
        prop_assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn sv_eval_is_deterministic(a in -4.0f64..4.0, x in 1.0f64..1e12) {
        let f = SvFunc::log_pow(a).unwrap();
        prop_assert_eq!(f.eval(x).to_bits(), f.eval(x).to_bits());
        prop_assert!(f.eval(x) > 0.0);
    }
}

#[test]
fn karamata_ratio_decreases_for_each_combinator() {
    let funcs = [
        SvFunc::log_pow(-2.0).unwrap(),
        SvFunc::log_pow(1.5).unwrap(),
        SvFunc::log_log_pow(-1.0).unwrap(),
        SvFunc::log_log_pow(2.0).unwrap(),
        SvFunc::log_pow(-1.0).unwrap().scaled(3.0).unwrap(),
    ];
    for f in &funcs {
        let dev: Vec<f64> = (3..=8).map(|j| f.karamata_deviation(2.0, 10f64.powi(j))).collect();
        assert!(dev.windows(2).all(|w| w[1] < w[0]), "{:?}: {dev:?}", f.expr());
        let ten: Vec<f64> = (2..=8).map(|j| f.karamata_deviation(10.0, 10f64.powi(j))).collect();
        assert!(ten.windows(2).all(|w| w[1] < w[0]), "{:?}: {ten:?}", f.expr());
    }
}
