use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Kind};
use crate::asymptotics::{
    extdarling_lower_const, fuk_nagaev_bound_with, fuk_nagaev_constant, ld_rate_with, conjugate_for,
    ln_predict_local_pmf, predict_renewal_mass, reverse_avg_pair,
};
use crate::error::{Error, Result};
use crate::interarrival::InterArrival;
use crate::numeric::CompensatedSum;
use crate::rare_event::{darling_empirical, default_darling_grid, is_estimate_cdf};
use crate::renewal_exact::{
    big_jump_conditional, intersect_renewals, invert_renewal, k_fold_row, k_step_ln_cdf, renewal_mass,
    truncated_sum_tail, Tilt,
};

/// Largest tolerated recursion residual before a run is flagged.
pub const RUN_RESIDUAL_TOL: f64 = 1e-12;

/// A finished table: header and rows of already formatted cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Invariant violations found while filling the table.
    pub failures: Vec<String>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Write as CSV with `#` comment lines first.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            out.write_record(r).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Outcome of [`run`].
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub kind: &'static str,
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub invariant_failures: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    kind: &'a str,
    seed: u64,
    files: Vec<String>,
    versions: Versions,
    runtimes: Runtimes,
    invariant_failures: &'a [String],
}

#[derive(Serialize)]
struct Versions {
    #[serde(rename = "renewal-zero")]
    renewal_zero: &'static str,
    csv_format: u32,
}

#[derive(Serialize)]
struct Runtimes {
    build_seconds: f64,
    compute_seconds: f64,
    threads: usize,
}

/// Run one experiment and write `<kind>.csv` and `manifest.json` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let t0 = Instant::now();
    let d = cfg.distribution.build()?;
    let h = cfg.validate(&d)?;
    let build = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let table = compute(cfg, &d, h)?;
    let compute_s = t1.elapsed().as_secs_f64();

    let hash = cfg.hash();
    fs::create_dir_all(out)?;
    let csv_path = out.join(format!("{}.csv", cfg.kind.name()));
    let comments = vec![
        format!("config_hash {hash}"),
        format!("kind {}", cfg.kind.name()),
        format!("seed {}", cfg.seed),
    ];
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &comments)?;
    fs::write(&csv_path, buf)?;

    let manifest_path = out.join("manifest.json");
    let manifest = Manifest {
        config_hash: &hash,
        kind: cfg.kind.name(),
        seed: cfg.seed,
        files: vec![csv_path.file_name().unwrap().to_string_lossy().into_owned()],
        versions: Versions {
            renewal_zero: env!("CARGO_PKG_VERSION"),
            csv_format: 1,
        },
        runtimes: Runtimes {
            build_seconds: build,
            compute_seconds: compute_s,
            threads: rayon::current_num_threads(),
        },
        invariant_failures: &table.failures,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunReport {
        config_hash: hash,
        kind: cfg.kind.name(),
        csv: csv_path,
        manifest: manifest_path,
        invariant_failures: table.failures,
    })
}

/// The table an experiment produces, without touching the filesystem.
pub fn compute(cfg: &ExperimentConfig, d: &InterArrival, h: usize) -> Result<Table> {
    let n_max = cfg.n_grid.iter().copied().max().unwrap_or(0);
    match cfg.kind {
        Kind::RenewalMass => {
            let mut t = Table::new(&["n", "exact", "predicted", "ratio"]);
            let u = renewal_mass(d, n_max, cfg.backend)?;
            let resid = u.recursion_residual(d);
            if resid > RUN_RESIDUAL_TOL {
                t.failures.push(format!("recursion residual {resid:e} > {RUN_RESIDUAL_TOL:e}"));
            }
            for &n in &cfg.n_grid {
                let exact = u.u_at(n)?;
                let pred = predict_renewal_mass(d, n)?;
                t.rows.push(vec![n.to_string(), num(exact), num(pred), num(exact / pred)]);
            }
            Ok(t)
        }
        Kind::LocalLimit => {
            let mut t = Table::new(&["n", "k", "exact", "predicted", "ratio"]);
            for &n in &cfg.n_grid {
                let k = cfg.k_rule().k_at(d, n)?;
                let row = k_fold_row(d, k, n, None, Tilt::Auto, cfg.backend)?;
                let ln_exact = row.ln_at(n);
                let ln_pred = ln_predict_local_pmf(d, k, n)?;
                t.rows.push(vec![
                    n.to_string(),
                    k.to_string(),
                    num(ln_exact.exp()),
                    num(ln_pred.exp()),
                    num((ln_exact - ln_pred).exp()),
                ]);
            }
            Ok(t)
        }
        Kind::Darling => {
            let mut t = Table::new(&[
                "k",
                "sup_distance",
                "grid_distance",
                "overflow_fraction",
                "unresolved_fraction",
                "n_samples",
            ]);
            let grid = default_darling_grid();
            for &k in &cfg.k_grid {
                let e = darling_empirical(d, k, cfg.samples, cfg.seed, &grid)?;
                t.rows.push(vec![
                    k.to_string(),
                    num(e.sup_distance),
                    num(e.grid_distance),
                    num(e.overflow_fraction),
                    num(e.unresolved_fraction),
                    e.n_samples.to_string(),
                ]);
            }
            Ok(t)
        }
        Kind::LdRate => {
            let mut t = Table::new(&[
                "n",
                "k",
                "ln_cdf",
                "ld_rate",
                "ratio",
                "extrapolated",
                "m",
                "lower",
                "upper",
                "in_bracket",
            ]);
            let conj = conjugate_for(d)?;
            let phi = d.phi_eff().ok_or_else(|| Error::RegimeUnknown("law has no slowly varying tag".into()))?;
            for &n in &cfg.n_grid {
                let k = cfg.k_rule().k_at(d, n)?;
                let ln_p = k_step_ln_cdf(d, k, n)?;
                let rate = ld_rate_with(d, &conj, n, k)?;
                let m = k as f64 * phi.eval(n as f64);
                let upper = k as f64 * (-d.tail(n)?).ln_1p();
                let lower = extdarling_lower_const(m).ln() + upper;
                t.rows.push(vec![
                    n.to_string(),
                    k.to_string(),
                    num(ln_p),
                    num(rate.value),
                    num(-ln_p / rate.value),
                    rate.extrapolated.to_string(),
                    num(m),
                    num(lower.exp()),
                    num(upper.exp()),
                    (ln_p >= lower && ln_p <= upper).to_string(),
                ]);
            }
            Ok(t)
        }
        Kind::FukNagaev => {
            let mut t = Table::new(&["k", "m", "n", "bound", "exact", "dominates"]);
            for &m in &cfg.m_grid {
                let c5 = fuk_nagaev_constant(d, m)?;
                for &k in &cfg.k_grid {
                    for &n in &cfg.n_grid {
                        if m > n {
                            continue;
                        }
                        let bound = fuk_nagaev_bound_with(d, c5, k, m, n)?;
                        let exact = truncated_sum_tail(d, k, m, n as f64 / 2.0)?;
                        let ok = bound >= exact;
                        if !ok {
                            t.failures.push(format!("bound {bound:e} < exact {exact:e} at k={k} m={m} n={n}"));
                        }
                        t.rows.push(vec![
                            k.to_string(),
                            m.to_string(),
                            n.to_string(),
                            num(bound),
                            num(exact),
                            ok.to_string(),
                        ]);
                    }
                }
            }
            Ok(t)
        }
        Kind::ReverseAvg => {
            let mut t = Table::new(&["n", "eps", "lhs", "rhs", "ratio", "pointwise"]);
            let u = renewal_mass(d, n_max, cfg.backend)?;
            for &n in &cfg.n_grid {
                let eps = cfg.eps_rule().at(n);
                let (lhs, rhs) = reverse_avg_pair(d, &u, n, eps)?;
                let pointwise = d.f(n)? / rhs;
                t.rows.push(vec![
                    n.to_string(),
                    num(eps),
                    num(lhs),
                    num(rhs),
                    num(lhs / rhs),
                    num(pointwise),
                ]);
            }
            Ok(t)
        }
        Kind::Intersect => {
            let mut t = Table::new(&["n", "u_a", "u_b", "u_rho", "f_rho", "mass_rho"]);
            let partner = match &cfg.partner {
                Some(p) => p.build()?,
                None => d.clone(),
            };
            let n = n_max.max(h.min(partner.horizon()));
            let a = renewal_mass(d, n, cfg.backend)?;
            let b = renewal_mass(&partner, n, cfg.backend)?;
            let rho = intersect_renewals(&a, &b)?;
            let inv = invert_renewal(&rho, cfg.backend);
            if inv.negative {
                t.failures.push(format!("inverted intersection has entry {:e}", inv.min_entry));
            }
            let mut grid: Vec<usize> = cfg.n_grid.clone();
            grid.sort_unstable();
            let mut mass = CompensatedSum::new();
            let mut gi = 0;
            for (j, f) in inv.pmf.iter().enumerate() {
                mass.add(*f);
                while gi < grid.len() && grid[gi] == j {
                    t.rows.push(vec![
                        j.to_string(),
                        num(a.u()[j]),
                        num(b.u()[j]),
                        num(rho.u()[j]),
                        num(*f),
                        num(mass.value()),
                    ]);
                    gi += 1;
                }
            }
            Ok(t)
        }
        Kind::BigJump => {
            let mut t = Table::new(&["n", "k", "eps", "value"]);
            for &n in &cfg.n_grid {
                let k = cfg.k_rule().k_at(d, n)?;
                let eps = cfg.eps_rule().at(n);
                let v = big_jump_conditional(d, k, n, eps)?;
                t.rows.push(vec![n.to_string(), k.to_string(), num(eps), num(v)]);
            }
            Ok(t)
        }
        Kind::IsVsDp => {
            let mut t = Table::new(&["n", "k", "eps", "estimate", "std_error", "exact", "z", "within_3se"]);
            for &n in &cfg.n_grid {
                let k = cfg.k_rule().k_at(d, n)?;
                let eps = cfg.eps_rule().at(n);
                let est = is_estimate_cdf(d, n, k, eps, cfg.samples, cfg.seed)?;
                let exact = k_step_ln_cdf(d, k, n)?.exp();
                let z = (est.value - exact) / est.std_error;
                let ok = (est.value - exact).abs() <= 3.0 * est.std_error;
                if !ok {
                    t.failures.push(format!("IS {:e} vs DP {exact:e} at n={n} k={k}", est.value));
                }
                t.rows.push(vec![
                    n.to_string(),
                    k.to_string(),
                    num(eps),
                    num(est.value),
                    num(est.std_error),
                    num(exact),
                    num(z),
                    ok.to_string(),
                ]);
            }
            Ok(t)
        }
    }
}
