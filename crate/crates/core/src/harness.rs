//! Monte-Carlo evaluation sweeps and file formats.
//!
//! An experiment file is flat TOML:
//!
//! ```toml
//! sweep = "mu2"               # or "users_per_group"
//! values = [0.05, 0.15, 0.25]
//! m = 4
//! g = 2
//! users_per_group = 2         # fixed value when sweeping mu2
//! # mu2 = 0.25                # fixed value when sweeping users_per_group
//! sigma2 = 1.0
//! gamma = 1.0                 # max-min fairness; or `tau = 1.0` for power minimization
//! mode = "per_antenna"
//! trials = 100
//! draws = 1000
//! schemes = ["robust_mm", "nonrobust_mm"]
//! seed = 1
//! parallel = 0                # worker threads, 0 = one per core
//! ```
//!
//! Every (sweep value, trial) pair gets its own seed, derived from the base seed,
//! so results do not depend on thread count or scheduling. Within a trial all
//! schemes share the channel draw, the starting point and the error draws used
//! for scoring.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{self, AlgorithmConfig, MMTrace};
use crate::error::{Error, Result};
use crate::robust_bounds::{margin, monte_carlo_worst, WorstCaseReport};
use crate::scenario::{generate_channels, Beamformer, Design, PowerMode, Scenario};
use crate::solver::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    UsersPerGroup,
    Mu2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "robust")]
    RobustMm,
    #[serde(alias = "nonrobust")]
    NonrobustMm,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::RobustMm => "robust_mm",
            Scheme::NonrobustMm => "nonrobust_mm",
        }
    }
}

fn default_trials() -> usize {
    100
}
fn default_draws() -> usize {
    1000
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::RobustMm, Scheme::NonrobustMm]
}
fn default_threshold() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub m: usize,
    pub g: usize,
    #[serde(default)]
    pub users_per_group: Option<usize>,
    #[serde(default)]
    pub mu2: Option<f64>,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    pub mode: PowerMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub parallel: usize,
    #[serde(default = "default_threshold")]
    pub xi: f64,
    #[serde(default = "default_threshold")]
    pub xi1: f64,
    #[serde(default = "default_threshold")]
    pub xi2: f64,
    /// When false, wall times are reported as 0 so reruns give identical files.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.values.is_empty() {
            return fail("sweep values must be nonempty");
        }
        if self.trials == 0 {
            return fail("trials must be >= 1");
        }
        if self.schemes.is_empty() {
            return fail("at least one scheme is required");
        }
        if self.m == 0 || self.g == 0 {
            return fail("m and g must be >= 1");
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return fail("sigma2 must be > 0");
        }
        if self.gamma.is_some() == self.tau.is_some() {
            return fail("give exactly one of gamma (max-min) or tau (power minimization)");
        }
        match self.sweep {
            SweepVariable::UsersPerGroup => {
                if self.mu2.is_none() {
                    return fail("mu2 is required when sweeping users_per_group");
                }
                if self
                    .values
                    .iter()
                    .any(|v| !(v.fract() == 0.0 && *v >= 1.0 && *v <= 1e6))
                {
                    return fail("users_per_group values must be positive integers");
                }
            }
            SweepVariable::Mu2 => {
                if self.users_per_group.is_none() {
                    return fail("users_per_group is required when sweeping mu2");
                }
                if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return fail("mu2 values must be >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn algorithm_config(&self, seed: u64) -> AlgorithmConfig {
        AlgorithmConfig {
            xi: self.xi,
            xi1: self.xi1,
            xi2: self.xi2,
            seed,
            ..AlgorithmConfig::default()
        }
    }

    /// The scenario of one trial at one sweep value.
    pub fn scenario(&self, value: f64, seed: u64) -> Result<Scenario> {
        let (n_per_group, mu2) = match self.sweep {
            SweepVariable::UsersPerGroup => (value as usize, self.mu2.unwrap_or(0.0)),
            SweepVariable::Mu2 => (self.users_per_group.unwrap_or(1), value),
        };
        let groups: Vec<Vec<usize>> = (0..self.g)
            .map(|g| (g * n_per_group..(g + 1) * n_per_group).collect())
            .collect();
        let membership: Vec<usize> = (0..self.g)
            .flat_map(|g| std::iter::repeat(g).take(n_per_group))
            .collect();
        let channels = generate_channels(self.m, &groups, seed);
        let design = match (self.gamma, self.tau) {
            (Some(gamma), _) => Design::MaxMinFair { power_limit: gamma },
            (None, Some(tau)) => Design::PowerMin {
                targets: vec![tau; self.g],
            },
            (None, None) => unreachable!("validated"),
        };
        Scenario::with_sphere(self.m, &membership, channels, mu2, self.sigma2, self.mode, design)
    }
}

/// Seed of one trial; independent of execution order.
pub fn trial_seed(base: u64, sweep_value: f64, trial: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for word in [sweep_value.to_bits(), trial as u64] {
        h = splitmix(h ^ word);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Converged,
    MaxOuter,
    IterationLimit,
    NumericalTrouble,
    Infeasible,
    BracketError,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Converged => "converged",
            TrialStatus::MaxOuter => "max_outer",
            TrialStatus::IterationLimit => "iteration_limit",
            TrialStatus::NumericalTrouble => "numerical_trouble",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::BracketError => "bracket_error",
            TrialStatus::Failed => "failed",
        }
    }

    pub fn is_failure(self) -> bool {
        self != TrialStatus::Converged
    }

    fn of_error(e: &Error) -> (Self, usize) {
        match e {
            Error::MaxOuterExceeded(n) => (TrialStatus::MaxOuter, *n),
            Error::Solver { status, iteration } => (
                match status {
                    SolveStatus::IterationLimit => TrialStatus::IterationLimit,
                    SolveStatus::Infeasible => TrialStatus::Infeasible,
                    _ => TrialStatus::NumericalTrouble,
                },
                *iteration,
            ),
            Error::BracketError { .. } => (TrialStatus::BracketError, 0),
            _ => (TrialStatus::Failed, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trial: usize,
    /// Worst-case rate of the weakest user, 0 on failure.
    pub rate_bps_hz: f64,
    pub iters: usize,
    pub seconds: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `√n`; 0 for a single trial.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub sweep: SweepVariable,
    pub rows: Vec<TrialRow>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status.is_failure()).count()
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        let mut start = 0;
        while start < self.rows.len() {
            let key = (self.rows[start].sweep_value, self.rows[start].scheme);
            let end = start
                + self.rows[start..]
                    .iter()
                    .take_while(|r| (r.sweep_value, r.scheme) == key)
                    .count();
            let rates: Vec<f64> = self.rows[start..end].iter().map(|r| r.rate_bps_hz).collect();
            let n = rates.len();
            let mean = rates.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            out.push(Aggregate {
                sweep_value: key.0,
                scheme: key.1,
                n,
                mean,
                stderr,
            });
            start = end;
        }
        out
    }

    /// Mean rate of `scheme` at `sweep_value`, if present.
    pub fn mean_rate(&self, sweep_value: f64, scheme: Scheme) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.sweep_value == sweep_value && a.scheme == scheme)
            .map(|a| a.mean)
    }
}

fn row_order(a: &TrialRow, b: &TrialRow) -> Ordering {
    a.sweep_value
        .total_cmp(&b.sweep_value)
        .then(a.scheme.cmp(&b.scheme))
        .then(a.trial.cmp(&b.trial))
}

/// Designs a beamformer that treats the estimated channels as exact; any
/// evaluation should still use the original scenario.
pub fn nonrobust_design(scenario: &Scenario, cfg: &AlgorithmConfig) -> Result<(Beamformer, MMTrace)> {
    algorithms::design(&scenario.nominal(), cfg)
}

fn run_scheme(
    spec: &ExperimentSpec,
    scenario: &Scenario,
    scheme: Scheme,
    seed: u64,
) -> (f64, usize, f64, TrialStatus) {
    let cfg = spec.algorithm_config(seed);
    let start = Instant::now();
    let designed = match scheme {
        Scheme::RobustMm => algorithms::design(scenario, &cfg),
        Scheme::NonrobustMm => nonrobust_design(scenario, &cfg),
    };
    let seconds = start.elapsed().as_secs_f64();
    match designed {
        Ok((w, trace)) => {
            let report = monte_carlo_worst(&w, scenario, spec.draws, seed);
            (report.rate, trace.iterations(), seconds, TrialStatus::Converged)
        }
        Err(e) => {
            let (status, iters) = TrialStatus::of_error(&e);
            (0.0, iters, seconds, status)
        }
    }
}

fn run_trial(spec: &ExperimentSpec, value: f64, trial: usize) -> Vec<TrialRow> {
    let seed = trial_seed(spec.seed, value, trial);
    let scenario = spec.scenario(value, seed);
    spec.schemes
        .iter()
        .map(|&scheme| {
            let (rate, iters, seconds, status) = match &scenario {
                Ok(s) => run_scheme(spec, s, scheme, seed),
                Err(_) => (0.0, 0, 0.0, TrialStatus::Failed),
            };
            TrialRow {
                sweep_value: value,
                scheme,
                trial,
                rate_bps_hz: rate,
                iters,
                seconds: if spec.record_timing { seconds } else { 0.0 },
                status,
            }
        })
        .collect()
}

/// Runs every (sweep value, trial, scheme) combination. Trial failures are
/// recorded in the rows; only an invalid spec is an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let spec = ExperimentSpec {
        schemes,
        ..spec.clone()
    };
    let jobs: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallel)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<TrialRow> = pool.install(|| {
        jobs.par_iter()
            .flat_map_iter(|&(v, t)| run_trial(&spec, v, t))
            .collect()
    });
    rows.sort_by(row_order);
    Ok(ExperimentResult {
        sweep: spec.sweep,
        rows,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// One line per row: `sweep_value,scheme,trial,rate_bps_hz,iters,seconds,status`.
pub fn emit_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["sweep_value", "scheme", "trial", "rate_bps_hz", "iters", "seconds", "status"])
        .map_err(csv_err(path))?;
    for r in &result.rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.scheme.as_str().to_string(),
            r.trial.to_string(),
            r.rate_bps_hz.to_string(),
            r.iters.to_string(),
            r.seconds.to_string(),
            r.status.as_str().to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Aggregated rates: `sweep_value,scheme,mean,stderr`.
pub fn emit_plotdata(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["sweep_value", "scheme", "mean", "stderr"])
        .map_err(csv_err(path))?;
    for a in result.aggregates() {
        w.write_record([
            a.sweep_value.to_string(),
            a.scheme.as_str().to_string(),
            a.mean.to_string(),
            a.stderr.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct BeamformerFile {
    antennas: usize,
    /// `groups[g][m] = [re, im]`.
    groups: Vec<Vec<[f64; 2]>>,
}

pub fn beamformer_to_json(w: &Beamformer) -> String {
    let file = BeamformerFile {
        antennas: w.antennas(),
        groups: w
            .groups
            .iter()
            .map(|g| g.iter().map(|z| [z.re, z.im]).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("plain data serializes")
}

pub fn beamformer_from_json(text: &str) -> std::result::Result<Beamformer, String> {
    let file: BeamformerFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.groups.iter().any(|g| g.len() != file.antennas) {
        return Err(format!("every group needs {} entries", file.antennas));
    }
    Ok(Beamformer::new(
        file.groups
            .iter()
            .map(|g| DVector::from_iterator(g.len(), g.iter().map(|[re, im]| Complex64::new(*re, *im))))
            .collect(),
    ))
}

pub fn write_beamformer(w: &Beamformer, path: &Path) -> Result<()> {
    std::fs::write(path, beamformer_to_json(w)).map_err(|e| Error::io(path, e))
}

pub fn read_beamformer(path: &Path) -> Result<Beamformer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    beamformer_from_json(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

/// Summary of one designed beamformer against its scenario.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub design: &'static str,
    pub power_mode: PowerMode,
    /// Power metric of the beamformer (sum or largest per-antenna, W).
    pub power: f64,
    /// Certified SINR level for max-min designs.
    pub level: Option<f64>,
    pub slack_sum: f64,
    pub outer_iterations: usize,
    /// Robust margin `ζ − |wᴴĥ|` per user at its target or at the certified level.
    pub margins: Vec<f64>,
    /// All margins ≤ 0 (to 1e-6) and the sampled worst case meets every requirement.
    pub certified: bool,
    pub worst_case: WorstCaseReport,
}

/// Evaluates `w` against the worst-case requirements of `scenario`: the
/// per-group targets, or `level` for a max-min design.
pub fn certify(
    w: &Beamformer,
    scenario: &Scenario,
    level: Option<f64>,
    draws: usize,
    seed: u64,
) -> (Vec<f64>, bool, WorstCaseReport) {
    let worst_case = monte_carlo_worst(w, scenario, draws, seed);
    let required: Vec<Option<f64>> = (0..scenario.n_users())
        .map(|u| scenario.target_of(u).or(level))
        .collect();
    let margins: Vec<f64> = required
        .iter()
        .enumerate()
        .map(|(u, t)| t.map_or(f64::NAN, |t| margin(w, t, scenario, u).value))
        .collect();
    let certified = required.iter().enumerate().all(|(u, t)| match t {
        Some(t) => margins[u] <= 1e-6 && worst_case.worst[u] >= t * (1.0 - 1e-4),
        None => true,
    });
    (margins, certified, worst_case)
}

pub fn solve_report(
    scenario: &Scenario,
    cfg: &AlgorithmConfig,
    draws: usize,
) -> Result<(Beamformer, MMTrace, SolveReport)> {
    let (w, trace, level, slack_sum, design) = match scenario.design {
        Design::PowerMin { .. } => {
            let out = algorithms::power_min(scenario, cfg)?;
            let slack = out.slack_sum();
            (out.beamformer, out.trace, None, slack, "power_min")
        }
        Design::MaxMinFair { .. } => {
            let out = algorithms::max_min_fair(scenario, cfg)?;
            (out.beamformer, out.trace, Some(out.level), 0.0, "max_min_fair")
        }
    };
    let (margins, certified, worst_case) = certify(&w, scenario, level, draws, cfg.seed);
    let report = SolveReport {
        design,
        power_mode: scenario.power_mode,
        power: w.power(scenario.power_mode),
        level,
        slack_sum,
        outer_iterations: trace.iterations(),
        margins,
        certified: certified && slack_sum <= algorithms::SLACK_ZERO,
        worst_case,
    };
    Ok((w, trace, report))
}

/// Writes `value` as pretty JSON to `path`.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec::from_toml_str(
            r#"
            sweep = "mu2"
            values = [0.0, 0.1]
            m = 3
            g = 2
            users_per_group = 1
            gamma = 1.0
            mode = "sum"
            trials = 3
            draws = 50
            seed = 5
            record_timing = false
            "#,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        s.values.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.trials = 0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.tau = Some(1.0);
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.sweep = SweepVariable::UsersPerGroup;
        assert!(s.validate().is_err());
        s.mu2 = Some(0.1);
        s.values = vec![1.5];
        assert!(s.validate().is_err());
        assert!(ExperimentSpec::from_toml_str("sweep = \"mu2\"\nbogus = 1").is_err());
    }

    #[test]
    fn trial_seeds_differ() {
        let a = trial_seed(1, 0.25, 0);
        assert_ne!(a, trial_seed(1, 0.25, 1));
        assert_ne!(a, trial_seed(1, 0.15, 0));
        assert_ne!(a, trial_seed(2, 0.25, 0));
        assert_eq!(a, trial_seed(1, 0.25, 0));
    }

    #[test]
    fn schemes_coincide_without_uncertainty() {
        let result = run_experiment(&small_spec()).unwrap();
        assert_eq!(result.rows.len(), 2 * 3 * 2);
        for t in 0..3 {
            let pick = |scheme| {
                result
                    .rows
                    .iter()
                    .find(|r| r.sweep_value == 0.0 && r.scheme == scheme && r.trial == t)
                    .unwrap()
                    .rate_bps_hz
            };
            assert_eq!(pick(Scheme::RobustMm), pick(Scheme::NonrobustMm));
        }
    }

    #[test]
    fn parallelism_does_not_change_rows() {
        let mut spec = small_spec();
        spec.parallel = 1;
        let a = run_experiment(&spec).unwrap();
        spec.parallel = 4;
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregates_match_rows() {
        let result = run_experiment(&small_spec()).unwrap();
        for a in result.aggregates() {
            let rates: Vec<f64> = result
                .rows
                .iter()
                .filter(|r| r.sweep_value == a.sweep_value && r.scheme == a.scheme)
                .map(|r| r.rate_bps_hz)
                .collect();
            assert_eq!(a.n, rates.len());
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            assert!((a.mean - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_result_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let empty = ExperimentResult {
            sweep: SweepVariable::Mu2,
            rows: vec![],
        };
        let rows = dir.path().join("rows.csv");
        let plot = dir.path().join("plot.csv");
        emit_csv(&empty, &rows).unwrap();
        emit_plotdata(&empty, &plot).unwrap();
        assert_eq!(
            std::fs::read_to_string(rows).unwrap(),
            "sweep_value,scheme,trial,rate_bps_hz,iters,seconds,status\n"
        );
        assert_eq!(std::fs::read_to_string(plot).unwrap(), "sweep_value,scheme,mean,stderr\n");
    }

    #[test]
    fn unwritable_path_is_reported() {
        let empty = ExperimentResult {
            sweep: SweepVariable::Mu2,
            rows: vec![],
        };
        let path = Path::new("/nonexistent-dir/rows.csv");
        let err = emit_csv(&empty, path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/rows.csv"));
    }

    #[test]
    fn beamformer_json_round_trip() {
        let w = Beamformer::new(vec![
            DVector::from_vec(vec![Complex64::new(0.5, -0.25), Complex64::new(1e-17, 3.0)]),
            DVector::from_vec(vec![Complex64::new(-1.0, 0.0), Complex64::new(0.1, 0.2)]),
        ]);
        assert_eq!(beamformer_from_json(&beamformer_to_json(&w)).unwrap(), w);
        assert!(beamformer_from_json(r#"{"antennas":2,"groups":[[[1,0]]]}"#).is_err());
    }

    #[test]
    fn nonrobust_trades_nominal_for_worst_case() {
        let spec = ExperimentSpec {
            m: 4,
            users_per_group: Some(2),
            ..small_spec()
        };
        let s = spec.scenario(0.25, 11).unwrap();
        let cfg = spec.algorithm_config(11);
        let (robust, _) = algorithms::design(&s, &cfg).unwrap();
        let (naive, _) = nonrobust_design(&s, &cfg).unwrap();
        assert!(naive.sum_power() <= 1.0 + 1e-6);
        let min_nominal = |w: &Beamformer| {
            (0..s.n_users())
                .map(|u| crate::robust_bounds::nominal_sinr(w, &s, u))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(min_nominal(&naive) >= min_nominal(&robust) - 1e-3);
    }
}
