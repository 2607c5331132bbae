//! Experiment configuration: flat `key = value` text with `#` comments.
//!
//! The `case` key selects a preset whose defaults every other key overrides,
//! so a one-line file `case = ex2` is a complete configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::bench::{BenchmarkCase, CaseId};
use crate::bregman::RegularizationSchedule;
use crate::error::{Error, Result};
use crate::stopping::Regularity;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub case: CaseId,
    pub dof: usize,
    pub schedule: RegularizationSchedule,
    pub deltas: Vec<f64>,
    pub tau: f64,
    pub regularity: Regularity,
    pub seeds: Vec<u64>,
    pub k_max: usize,
    /// Output directory, relative paths resolved against the output root.
    pub output: PathBuf,
    /// τ values for `sweep-tau`.
    pub taus: Vec<f64>,
    /// Run the exact-data companion and check the noise-propagation bounds.
    pub paired_check: bool,
    /// Stop iterating at `k(δ)` instead of continuing to `k_max`.
    pub halt_at_stop: bool,
    pub store_controls: bool,
    pub full_scale: bool,
    pub verify_only: bool,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

const KEYS: &[&str] = &[
    "case",
    "dof",
    "schedule",
    "alpha",
    "ratio",
    "deltas",
    "tau",
    "kappa",
    "seeds",
    "k_max",
    "output",
    "taus",
    "paired_check",
    "halt_at_stop",
    "store_controls",
    "full_scale",
    "verify_only",
    "threads",
];

impl ExperimentConfig {
    /// Defaults for a benchmark case.
    pub fn preset(case: CaseId) -> Self {
        let bench = BenchmarkCase::new(case);
        ExperimentConfig {
            case,
            dof: bench.desk_dof,
            schedule: bench.schedule(),
            deltas: vec![1e-1, 1e-2, 1e-3],
            tau: bench.tau,
            regularity: bench.regularity(),
            seeds: vec![1, 2, 3],
            k_max: 750,
            output: PathBuf::from(case.as_str()),
            taus: vec![1e3, 1e4, 1e5, 1e6, 1e7],
            paired_check: false,
            halt_at_stop: false,
            store_controls: false,
            full_scale: false,
            verify_only: false,
            threads: 0,
        }
    }

    pub fn preset_named(name: &str) -> Result<Self> {
        Ok(Self::preset(name.parse()?))
    }

    /// DOF actually used, honoring `full_scale`.
    pub fn effective_dof(&self) -> usize {
        if self.full_scale {
            BenchmarkCase::new(self.case).full_dof
        } else {
            self.dof
        }
    }

    /// Parses a configuration file. Unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut order = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(Some(line_no), line, "expected `key = value`"));
            };
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(Some(line_no), key, "unknown key"));
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::config(
                    Some(line_no),
                    key,
                    format!("duplicate key (first set on line {first})"),
                ));
            }
            order.push(key.clone());
            entries.insert(key, (line_no, value.trim().to_string()));
        }
        let Some((case_line, case_value)) = entries.get("case") else {
            return Err(Error::config(None, "case", "missing required key"));
        };
        let case: CaseId = case_value
            .parse()
            .map_err(|_| Error::config(Some(*case_line), "case", format!("unknown case `{case_value}`")))?;
        let mut cfg = Self::preset(case);
        for key in order {
            let (line, value) = &entries[&key];
            cfg.set(&key, value).map_err(|e| relocate(e, Some(*line)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: String| Error::config(None, key, msg);
        let value = value.trim();
        match key {
            "case" => {
                let case: CaseId = value.parse().map_err(|_| bad(format!("unknown case `{value}`")))?;
                if case != self.case {
                    // switching cases resets case-specific defaults
                    let keep = self.clone();
                    *self = Self::preset(case);
                    self.deltas = keep.deltas;
                    self.seeds = keep.seeds;
                    self.k_max = keep.k_max;
                    self.taus = keep.taus;
                }
            }
            "dof" => self.dof = parse_num(key, value)?,
            "schedule" => {
                let alpha = self.schedule.bound();
                self.schedule = match value {
                    "constant" => RegularizationSchedule::Constant { alpha },
                    "geometric" => RegularizationSchedule::Geometric {
                        alpha0: alpha,
                        ratio: match self.schedule {
                            RegularizationSchedule::Geometric { ratio, .. } => ratio,
                            RegularizationSchedule::Constant { .. } => 1.0,
                        },
                    },
                    _ => return Err(bad(format!("expected `constant` or `geometric`, got `{value}`"))),
                };
            }
            "alpha" => {
                let a: f64 = parse_num(key, value)?;
                self.schedule = match self.schedule {
                    RegularizationSchedule::Constant { .. } => RegularizationSchedule::Constant { alpha: a },
                    RegularizationSchedule::Geometric { ratio, .. } => {
                        RegularizationSchedule::Geometric { alpha0: a, ratio }
                    }
                };
            }
            "ratio" => {
                let r: f64 = parse_num(key, value)?;
                self.schedule = match self.schedule {
                    RegularizationSchedule::Geometric { alpha0, .. } => {
                        RegularizationSchedule::Geometric { alpha0, ratio: r }
                    }
                    RegularizationSchedule::Constant { alpha } => {
                        RegularizationSchedule::Geometric { alpha0: alpha, ratio: r }
                    }
                };
            }
            "deltas" => self.deltas = parse_list(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "kappa" => {
                self.regularity = if value.eq_ignore_ascii_case("sc") {
                    Regularity::SourceCondition
                } else {
                    Regularity::ActiveSet {
                        kappa: parse_num(key, value)?,
                    }
                }
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "k_max" => self.k_max = parse_num(key, value)?,
            "output" => {
                if value.is_empty() {
                    return Err(bad("empty path".into()));
                }
                self.output = PathBuf::from(value)
            }
            "taus" => self.taus = parse_list(key, value)?,
            "paired_check" => self.paired_check = parse_num(key, value)?,
            "halt_at_stop" => self.halt_at_stop = parse_num(key, value)?,
            "store_controls" => self.store_controls = parse_num(key, value)?,
            "full_scale" => self.full_scale = parse_num(key, value)?,
            "verify_only" => self.verify_only = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    /// Applies a `key=value` override string as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(Error::config(None, assignment, "expected `key=value`"));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(None, key, "unknown key"));
        }
        self.set(key, value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(None, field, msg));
        if self.dof < 3 {
            return bad("dof", format!("must be >= 3, got {}", self.dof));
        }
        if let Err(e) = self.schedule.validate() {
            return bad("alpha", e.to_string());
        }
        if self.deltas.is_empty() {
            return bad("deltas", "list is empty".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return bad("deltas", format!("noise levels must be finite and >= 0, got {d}"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", format!("must be > 0, got {}", self.tau));
        }
        if let Err(e) = self.regularity.validate() {
            return bad("kappa", e.to_string());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "list is empty".into());
        }
        if self.k_max < 1 {
            return bad("k_max", "must be >= 1".into());
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return bad("taus", format!("must be > 0, got {t}"));
        }
        Ok(())
    }

    /// Serializes to the text format; `parse` inverts this exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "case = {}", self.case);
        let _ = writeln!(s, "dof = {}", self.dof);
        match self.schedule {
            RegularizationSchedule::Constant { alpha } => {
                let _ = writeln!(s, "schedule = constant");
                let _ = writeln!(s, "alpha = {alpha:e}");
            }
            RegularizationSchedule::Geometric { alpha0, ratio } => {
                let _ = writeln!(s, "schedule = geometric");
                let _ = writeln!(s, "alpha = {alpha0:e}");
                let _ = writeln!(s, "ratio = {ratio:e}");
            }
        }
        let _ = writeln!(s, "deltas = {}", join(&self.deltas));
        let _ = writeln!(s, "tau = {:e}", self.tau);
        match self.regularity {
            Regularity::ActiveSet { kappa } => {
                let _ = writeln!(s, "kappa = {kappa:e}");
            }
            Regularity::SourceCondition => {
                let _ = writeln!(s, "kappa = sc");
            }
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(", "));
        let _ = writeln!(s, "k_max = {}", self.k_max);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "taus = {}", join(&self.taus));
        let _ = writeln!(s, "paired_check = {}", self.paired_check);
        let _ = writeln!(s, "halt_at_stop = {}", self.halt_at_stop);
        let _ = writeln!(s, "store_controls = {}", self.store_controls);
        let _ = writeln!(s, "full_scale = {}", self.full_scale);
        let _ = writeln!(s, "verify_only = {}", self.verify_only);
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }
}

fn relocate(e: Error, line: Option<usize>) -> Error {
    match e {
        Error::Config { field, message, .. } => Error::Config { line, field, message },
        other => other,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::config(None, key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v)).collect()
}
