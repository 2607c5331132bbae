use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bregman_ocp::bench::{verify_case, BenchmarkCase, CaseId};
use bregman_ocp::config::ExperimentConfig;
use bregman_ocp::experiment::{resolve_output, run_experiment, sweep_tau, OUTPUT_ROOT_ENV};
use bregman_ocp::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "bregman-ocp", version, about = "Bregman iteration for box-constrained Poisson control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run noisy experiments and write per-run CSVs plus summary.json
    Run(ConfigArgs),
    /// Stopping index and error at stop for a list of tau values
    SweepTau {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated tau values (defaults to the config's `taus`)
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
    },
    /// Check the closed-form benchmark formulas
    Verify {
        /// Cases to check (default: all)
        cases: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Print the built-in presets
    ListPresets,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Preset name (ex1..ex4)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. --set k_max=100 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; defaults to $BREGMAN_OCP_OUT, then the working directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), _) => ExperimentConfig::preset_named(name)
                .map_err(|_| Error::Config {
                    line: None,
                    field: "preset".into(),
                    message: format!("unknown preset `{name}`"),
                })?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                    line: None,
                    field: "config".into(),
                    message: format!("{}: {e}", path.display()),
                })?;
                ExperimentConfig::parse(&text)?
            }
            (None, None) => {
                return Err(Error::Config {
                    line: None,
                    field: "preset".into(),
                    message: "give --preset or --config".into(),
                })
            }
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        let root = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from));
        resolve_output(cfg, root.as_deref())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::UnknownCase(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
    ExitCode::from(exit_code(e))
}

fn verify_cases(ids: &[CaseId], samples: usize) -> ExitCode {
    let mut all_pass = true;
    for &id in ids {
        match verify_case(&BenchmarkCase::new(id), samples) {
            Ok(report) => {
                print!("{report}");
                all_pass &= report.passed();
            }
            Err(e) => return fail(&e),
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4e}"))
}

fn run(args: &ConfigArgs) -> ExitCode {
    let cfg = match args.load() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if cfg.verify_only {
        return verify_cases(&[cfg.case], 1000);
    }
    let dir = args.output_dir(&cfg);
    let summary = match run_experiment(&cfg, &dir) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    println!("case {} dof {} -> {}", cfg.case, summary.dof, dir.display());
    println!("{:>10} {:>6} {:>7} {:>12} {:>12} {:>12}", "delta", "seed", "k(d)", "err@stop", "min err", "final err");
    for r in &summary.runs {
        if let Some(e) = &r.error {
            println!("{:>10e} {:>6} failed: {e}", r.delta, r.seed);
            continue;
        }
        let k = match (r.k_delta, r.k_max_reached) {
            (Some(k), Some(true)) => format!("{k}+"),
            (Some(k), _) => k.to_string(),
            (None, _) => "-".into(),
        };
        println!(
            "{:>10e} {:>6} {:>7} {:>12} {:>12} {:>12}",
            r.delta,
            r.seed,
            k,
            fmt_opt(r.error_at_stop),
            fmt_opt(r.min_error),
            fmt_opt(r.final_error)
        );
    }
    if summary.failed_runs() > 0 {
        eprintln!("{} run(s) failed", summary.failed_runs());
        return ExitCode::from(EXIT_SOLVER);
    }
    ExitCode::SUCCESS
}

fn sweep(args: &ConfigArgs, taus: &[f64]) -> ExitCode {
    let cfg = match args.load() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let taus = if taus.is_empty() { cfg.taus.clone() } else { taus.to_vec() };
    let dir = args.output_dir(&cfg);
    match sweep_tau(&cfg, &taus, &dir) {
        Ok(rows) => {
            println!("{:>10} {:>10} {:>6} {:>7} {:>12}", "tau", "delta", "seed", "k(d)", "err@stop");
            for r in rows {
                println!(
                    "{:>10e} {:>10e} {:>6} {:>7} {:>12.4e}",
                    r.tau, r.delta, r.seed, r.k_delta, r.err_at_stop
                );
            }
            println!("wrote {}", Path::new(&dir).join("sweep_tau.csv").display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn list_presets() -> ExitCode {
    let mut out = std::io::stdout().lock();
    for id in CaseId::ALL {
        // a closed pipe (e.g. `| head`) is not an error worth reporting
        if writeln!(out, "# preset {id}\n{}", ExperimentConfig::preset(id).to_text()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => run(&args),
        Command::SweepTau { config, taus } => sweep(&config, &taus),
        Command::Verify { cases, samples } => {
            let ids: Result<Vec<CaseId>, Error> = if cases.is_empty() || cases.iter().any(|c| c == "all") {
                Ok(CaseId::ALL.to_vec())
            } else {
                cases.iter().map(|c| c.parse()).collect()
            };
            match ids {
                Ok(ids) => verify_cases(&ids, samples),
                Err(e) => fail(&e),
            }
        }
        Command::ListPresets => list_presets(),
    }
}
