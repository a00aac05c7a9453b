use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use renewal_zero::harness::{self, ExperimentConfig, SelftestOptions};
use renewal_zero::renewal_exact::{
    invert_renewal, read_binary, read_series_csv, write_binary, write_series_csv, BINARY_MAGIC,
};
use renewal_zero::{Backend, Error, RenewalTable};

const THREADS_VAR: &str = "RENEWAL_ZERO_THREADS";

#[derive(Parser)]
#[command(name = "renewal-zero", version, about = "Heavy-tailed discrete renewal processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `<kind>.csv` plus `manifest.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance suite, one line per criterion.
    Selftest {
        /// Perturb one pmf entry; mass conservation must then fail.
        #[arg(long, hide = true)]
        corrupt_pmf: bool,
    },
    /// Recover the gap pmf from a renewal mass sequence.
    Invert {
        /// `n,u` CSV, or a binary table.
        #[arg(long)]
        u: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
        backend: BackendArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Direct,
    Fft,
    Auto,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Direct => Backend::Direct,
            BackendArg::Fft => Backend::Fft,
            BackendArg::Auto => Backend::Auto,
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_VAR}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(config: PathBuf, out: PathBuf) -> ExitCode {
    let text = match fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error Config: cannot read {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error {}: {e}", e.name());
            return ExitCode::from(1);
        }
    };
    match harness::run(&cfg, &out) {
        Ok(report) => {
            println!("config_hash {}", report.config_hash);
            println!("wrote {}", report.csv.display());
            println!("wrote {}", report.manifest.display());
            if report.invariant_failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &report.invariant_failures {
                    eprintln!("invariant failure: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error {}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}

fn selftest(corrupt_pmf: bool) -> ExitCode {
    let results = harness::selftest(SelftestOptions { corrupt_pmf });
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for c in &results {
        let _ = writeln!(w, "{c}");
    }
    let passed = results.iter().filter(|c| c.pass).count();
    let _ = writeln!(w, "{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn invert(u: PathBuf, out: Option<PathBuf>, format: Format, backend: Backend) -> Result<(), Error> {
    let bytes = fs::read(&u)?;
    let values = if bytes.starts_with(BINARY_MAGIC) {
        read_binary(bytes.as_slice())?
    } else {
        read_series_csv(bytes.as_slice())?
    };
    let table = RenewalTable::from_u(values)?;
    let inv = invert_renewal(&table, backend);
    if inv.negative {
        eprintln!("warning: entry {:e} below zero; input is not a renewal mass", inv.min_entry);
    }
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            let comments = vec![
                format!("source {}", u.display()),
                format!("defect {:e}", inv.defect),
                format!("negative {}", inv.negative),
            ];
            write_series_csv(&mut buf, &comments, "f", &inv.pmf)?;
        }
        Format::Binary => write_binary(&mut buf, &inv.pmf)?,
    }
    match out {
        Some(p) => fs::write(p, buf)?,
        None => io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error Config: {e:#}");
        return ExitCode::from(1);
    }
    match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Selftest { corrupt_pmf } => selftest(corrupt_pmf),
        Command::Invert {
            u,
            out,
            format,
            backend,
        } => match invert(u, out, format, backend.into()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error {}: {e}", e.name());
                ExitCode::from(1)
            }
        },
    }
}
