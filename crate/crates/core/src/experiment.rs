//! Experiment driver behind the command line tool: noisy runs with the
//! stopping rule, optional paired exact runs, CSV histories and a JSON
//! summary.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{build_case, verify_case, BenchmarkCase, RunMeta, RunRecord, RunRow, VerificationReport};
use crate::bregman::{bregman_step, recover_control_field, BregmanState, RegularizationSchedule};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fem::ControlField;
use crate::problem::ControlProblem;
use crate::ssn::NewtonOptions;
use crate::stopping::{decide_stop, perturb, BoundAccumulator, NoiseSpec, Regularity, StopDecision};

pub const CSV_HEADER: [&str; 7] = ["k", "alpha_k", "gamma_k", "err_exact", "e_n", "e_r", "stopped"];

/// Environment variable naming the directory relative outputs go under.
pub const OUTPUT_ROOT_ENV: &str = "BREGMAN_OCP_OUT";

/// Checks of the noise propagation bounds against a paired exact-data run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedCheck {
    /// `min_k (e_k^n − Σ_{i≤k} ‖u_i − u_i^δ‖²/α_i)`; nonnegative when the
    /// cumulative bound holds.
    pub min_slack: f64,
    /// Step attaining `min_slack`.
    pub min_slack_k: usize,
    /// `‖u_1^δ − u_1‖`.
    pub first_step_distance: f64,
    /// `δ/√α_1`.
    pub first_step_bound: f64,
    pub steps: usize,
}

impl PairedCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.min_slack >= -slack && self.first_step_distance <= self.first_step_bound + slack
    }
}

/// Everything a single `(δ, seed)` run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// `None` for exact data.
    pub decision: Option<StopDecision>,
    /// `‖P(0) − u†‖`, the error at step 0.
    pub initial_error: f64,
    pub paired: Option<PairedCheck>,
    pub control_at_stop: Option<ControlField>,
    pub final_control: ControlField,
}

impl RunOutcome {
    /// Error at `k(δ)`; step 0 uses the initial error.
    pub fn error_at_stop(&self) -> Option<f64> {
        let d = self.decision?;
        if d.k == 0 {
            Some(self.initial_error)
        } else {
            self.record.error_at(d.k)
        }
    }

    /// `min_{j ≤ k(δ)}` error, including step 0.
    pub fn min_error_until_stop(&self) -> Option<f64> {
        let d = self.decision?;
        Some(
            self.record
                .min_error_up_to(d.k)
                .map_or(self.initial_error, |e| e.min(self.initial_error)),
        )
    }
}

/// Parameters for one run, independent of the config file format.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub schedule: RegularizationSchedule,
    pub delta: f64,
    pub seed: u64,
    pub tau: f64,
    pub regularity: Regularity,
    pub k_max: usize,
    pub halt_at_stop: bool,
    pub keep_controls: bool,
    pub newton: NewtonOptions,
}

impl RunSpec {
    pub fn from_config(cfg: &ExperimentConfig, delta: f64, seed: u64) -> Self {
        RunSpec {
            schedule: cfg.schedule,
            delta,
            seed,
            tau: cfg.tau,
            regularity: cfg.regularity,
            k_max: cfg.k_max,
            halt_at_stop: cfg.halt_at_stop,
            keep_controls: cfg.store_controls,
            newton: NewtonOptions::default(),
        }
    }
}

/// Controls `u_1, …, u_n` of an exact-data run, for pairing.
pub fn exact_controls(
    problem: &ControlProblem,
    schedule: &RegularizationSchedule,
    steps: usize,
    newton: &NewtonOptions,
) -> Result<Vec<ControlField>> {
    let mut state = BregmanState::new(problem);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        bregman_step(&mut state, problem, schedule, newton)?;
        out.push(recover_control_field(&state, problem)?);
    }
    Ok(out)
}

/// Runs the iteration on `z^δ` for up to `k_max` steps, evaluating the
/// stopping rule online. Unless `halt_at_stop` is set the iteration continues
/// past `k(δ)` so the full error curve is recorded; the stop row is flagged.
pub fn run_single(
    problem: &ControlProblem,
    case: &BenchmarkCase,
    dof: usize,
    spec: &RunSpec,
    paired_with: Option<&[ControlField]>,
) -> Result<RunOutcome> {
    let target = perturb(problem.target(), NoiseSpec {
        delta: spec.delta,
        seed: spec.seed,
    })?;
    let noisy = problem.with_target(target)?;
    let reference = case.exact_control_field(problem.space())?;
    let mut state = BregmanState::new(&noisy).with_reference(reference.clone())?;
    let initial_error = recover_control_field(&state, &noisy)?.distance(&reference)?;

    let noisy_data = spec.delta > 0.0;
    let mut bounds = BoundAccumulator::new(spec.regularity);
    let mut stop: Option<usize> = None;
    let mut rows = Vec::with_capacity(spec.k_max);
    let mut control_at_stop = None;
    let mut paired_sum = 0.0;
    let mut paired: Option<PairedCheck> = None;

    for k in 1..=spec.k_max {
        let alpha = spec.schedule.alpha(k);
        bounds.push(alpha);
        let e_n = bounds.noise_bound(spec.delta);
        let e_r = bounds.reg_bound();
        if noisy_data && stop.is_none() && !(e_n <= spec.tau * e_r) {
            stop = Some(k - 1);
            if spec.keep_controls {
                control_at_stop = Some(recover_control_field(&state, &noisy)?);
            }
            if spec.halt_at_stop {
                break;
            }
        }
        bregman_step(&mut state, &noisy, &spec.schedule, &spec.newton)?;
        let rec = state.last().expect("step recorded");
        rows.push(RunRow {
            k,
            alpha_k: rec.alpha,
            gamma_k: rec.gamma,
            err_exact: rec.error.expect("reference attached"),
            e_n,
            e_r,
            stopped: false,
        });

        if let Some(exact) = paired_with.and_then(|ex| ex.get(k - 1)) {
            let u = recover_control_field(&state, &noisy)?;
            let d = u.distance(exact)?;
            paired_sum += d * d / alpha;
            let slack = e_n - paired_sum;
            let check = paired.get_or_insert(PairedCheck {
                min_slack: slack,
                min_slack_k: k,
                first_step_distance: d,
                first_step_bound: spec.delta / alpha.sqrt(),
                steps: 0,
            });
            if slack < check.min_slack {
                check.min_slack = slack;
                check.min_slack_k = k;
            }
            check.steps = k;
        }
    }

    let decision = noisy_data.then_some(match stop {
        Some(k) => StopDecision {
            k,
            k_max_reached: false,
        },
        None => StopDecision {
            k: spec.k_max,
            k_max_reached: true,
        },
    });
    if let Some(d) = decision {
        if d.k >= 1 {
            if let Some(row) = rows.iter_mut().find(|r| r.k == d.k) {
                row.stopped = true;
            }
        }
        if spec.keep_controls && control_at_stop.is_none() {
            control_at_stop = Some(recover_control_field(&state, &noisy)?);
        }
    }
    let final_control = recover_control_field(&state, &noisy)?;

    Ok(RunOutcome {
        record: RunRecord {
            meta: RunMeta {
                case: case.id,
                delta: spec.delta,
                tau: spec.tau,
                seed: spec.seed,
                dof,
                schedule: format!("{:?}", spec.schedule),
                regularity: format!("{:?}", spec.regularity),
            },
            rows,
        },
        decision,
        initial_error,
        paired,
        control_at_stop,
        final_control,
    })
}

/// Formats a float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_run_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in &record.rows {
        w.write_record([
            r.k.to_string(),
            fmt_float(r.alpha_k),
            fmt_float(r.gamma_k),
            fmt_float(r.err_exact),
            fmt_float(r.e_n),
            fmt_float(r.e_r),
            r.stopped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a file written by [`write_run_csv`].
pub fn read_run_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::config(None, "csv header", format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

fn write_controls_csv(path: &Path, problem: &ControlProblem, case: &BenchmarkCase, out: &RunOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "u_stop", "u_final", "u_exact"])?;
    let space = problem.space();
    for (q, x) in space.quad_points().iter().enumerate() {
        let at_stop = out
            .control_at_stop
            .as_ref()
            .map_or(String::new(), |u| fmt_float(u.values()[q]));
        w.write_record([
            fmt_float(x[0]),
            fmt_float(x[1]),
            at_stop,
            fmt_float(out.final_control.values()[q]),
            fmt_float(case.exact_control(*x)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// File stem for a run, e.g. `run_d1e-2_s3`.
pub fn run_stem(delta: f64, seed: u64) -> String {
    format!("run_d{delta:e}_s{seed}")
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub delta: f64,
    pub seed: u64,
    pub csv: Option<String>,
    pub k_delta: Option<usize>,
    pub k_max_reached: Option<bool>,
    pub min_error: Option<f64>,
    pub min_error_k: Option<usize>,
    pub error_at_stop: Option<f64>,
    pub min_error_until_stop: Option<f64>,
    pub final_error: Option<f64>,
    pub paired: Option<PairedCheck>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub dof: usize,
    pub wall_time_s: f64,
    pub verification: Option<VerificationReport>,
    pub runs: Vec<RunSummary>,
}

impl ExperimentSummary {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Resolves the configured output directory against `root`.
pub fn resolve_output(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if cfg.output.is_relative() => r.join(&cfg.output),
        _ => cfg.output.clone(),
    }
}

/// `(δ, seed)` pairs in config order; exact data is run once.
fn run_grid(cfg: &ExperimentConfig) -> Vec<(f64, u64)> {
    let mut grid = Vec::new();
    for &d in &cfg.deltas {
        if d == 0.0 {
            grid.push((d, cfg.seeds[0]));
        } else {
            grid.extend(cfg.seeds.iter().map(|&s| (d, s)));
        }
    }
    grid
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn summarize(delta: f64, seed: u64, csv: Option<String>, res: &Result<RunOutcome>) -> RunSummary {
    match res {
        Ok(out) => {
            let min = out.record.min_error();
            RunSummary {
                delta,
                seed,
                csv,
                k_delta: out.decision.map(|d| d.k),
                k_max_reached: out.decision.map(|d| d.k_max_reached),
                min_error: min.map(|m| m.1),
                min_error_k: min.map(|m| m.0),
                error_at_stop: out.error_at_stop(),
                min_error_until_stop: out.min_error_until_stop(),
                final_error: out.record.rows.last().map(|r| r.err_exact),
                paired: out.paired.clone(),
                error: None,
            }
        }
        Err(e) => RunSummary {
            delta,
            seed,
            csv: None,
            k_delta: None,
            k_max_reached: None,
            min_error: None,
            min_error_k: None,
            error_at_stop: None,
            min_error_until_stop: None,
            final_error: None,
            paired: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every `(δ, seed)` of the configuration, writing one CSV per run and
/// `summary.json` into `out_dir`. Solver failures are recorded per run.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let dof = cfg.effective_dof();
    let (problem, case) = build_case(cfg.case, dof)?;
    let verification = Some(verify_case(&case, 1000)?);
    fs::create_dir_all(out_dir)?;

    let newton = NewtonOptions::default();
    let exact = if cfg.paired_check {
        Some(exact_controls(&problem, &cfg.schedule, cfg.k_max, &newton)?)
    } else {
        None
    };

    let grid = run_grid(cfg);
    let results: Vec<(RunSummary, Option<Error>)> = with_pool(cfg.threads, || {
        grid.par_iter()
            .map(|&(delta, seed)| {
                let spec = RunSpec::from_config(cfg, delta, seed);
                let res = run_single(&problem, &case, dof, &spec, exact.as_deref());
                let stem = run_stem(delta, seed);
                let mut csv = None;
                let mut io_err = None;
                if let Ok(out) = &res {
                    let name = format!("{stem}.csv");
                    match write_run_csv(&out_dir.join(&name), &out.record) {
                        Ok(()) => csv = Some(name),
                        Err(e) => io_err = Some(e),
                    }
                    if cfg.store_controls && io_err.is_none() {
                        let path = out_dir.join(format!("{stem}_controls.csv"));
                        io_err = write_controls_csv(&path, &problem, &case, out).err();
                    }
                }
                (summarize(delta, seed, csv, &res), io_err)
            })
            .collect()
    })?;

    let mut runs = Vec::with_capacity(results.len());
    for (summary, io_err) in results {
        if let Some(e) = io_err {
            return Err(e);
        }
        runs.push(summary);
    }
    let summary = ExperimentSummary {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        dof,
        wall_time_s: start.elapsed().as_secs_f64(),
        verification,
        runs,
    };
    let mut f = fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    Ok(summary)
}

/// One row of the τ sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub delta: f64,
    pub seed: u64,
    pub k_delta: usize,
    pub err_at_stop: f64,
}

/// For each `(δ, seed)` runs once up to the largest `k(δ)` over `taus` and
/// reads off the error at every τ's stopping index. Writes `sweep_tau.csv`.
pub fn sweep_tau(cfg: &ExperimentConfig, taus: &[f64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if taus.is_empty() {
        return Err(Error::config(None, "taus", "list is empty"));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::config(None, "taus", format!("must be > 0, got {t}")));
    }
    if cfg.deltas.contains(&0.0) {
        return Err(Error::config(None, "deltas", "the stopping rule needs positive noise levels"));
    }
    let dof = cfg.effective_dof();
    let (problem, case) = build_case(cfg.case, dof)?;
    fs::create_dir_all(out_dir)?;

    let grid = run_grid(cfg);
    let per_run: Vec<Result<Vec<SweepRow>>> = with_pool(cfg.threads, || {
        grid.par_iter()
            .map(|&(delta, seed)| -> Result<Vec<SweepRow>> {
                let decisions: Vec<StopDecision> = taus
                    .iter()
                    .map(|&tau| decide_stop(&cfg.schedule, delta, tau, cfg.regularity, cfg.k_max))
                    .collect::<Result<_>>()?;
                let horizon = decisions.iter().map(|d| d.k).max().unwrap_or(0);
                let mut spec = RunSpec::from_config(cfg, delta, seed);
                spec.k_max = horizon.max(1);
                let out = run_single(&problem, &case, dof, &spec, None)?;
                Ok(taus
                    .iter()
                    .zip(&decisions)
                    .map(|(&tau, d)| SweepRow {
                        tau,
                        delta,
                        seed,
                        k_delta: d.k,
                        err_at_stop: if d.k == 0 {
                            out.initial_error
                        } else {
                            out.record.error_at(d.k).expect("run covers every stopping index")
                        },
                    })
                    .collect())
            })
            .collect()
    })?;

    let mut rows = Vec::new();
    for r in per_run {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.tau
            .total_cmp(&b.tau)
            .then(b.delta.total_cmp(&a.delta))
            .then(a.seed.cmp(&b.seed))
    });
    let mut w = csv::Writer::from_path(out_dir.join("sweep_tau.csv"))?;
    w.write_record(["tau", "delta", "seed", "k_delta", "err_at_stop"])?;
    for r in &rows {
        w.write_record([
            fmt_float(r.tau),
            fmt_float(r.delta),
            r.seed.to_string(),
            r.k_delta.to_string(),
            fmt_float(r.err_at_stop),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}
