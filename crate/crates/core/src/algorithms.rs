//! Majorization-minimization loops.
//!
//! [`power_min`] repeatedly solves the convex power-minimization subproblem
//! around the previous beamformer, first with penalized slacks and, once the
//! slacks vanish, with slacks pinned at zero. [`max_min_fair`] wraps a bisection
//! on the common SINR level around the same surrogate constraints.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::{complex_gaussian, complex_gaussian_vector, rng_stream, Beamformer, Design, PowerMode, Scenario};
use crate::socp::{
    build_feasibility_subproblem, build_pm_subproblem, ConeProgram, SlackMode, VariableMap,
    FEASIBILITY_TOL,
};
use crate::solver::{solve, SolveStatus, SolverOptions};

/// Slacks at or below this count as zero.
pub const SLACK_ZERO: f64 = 1e-9;
/// Retries with a perturbed pivot before a degenerate pivot is fatal.
pub const PIVOT_RETRIES: usize = 5;
/// Largest dual residual at which an unconverged solve may still reject a level.
pub const REJECT_DUAL_RESIDUAL: f64 = 1e-6;
/// Times the bisection upper bound may be doubled.
pub const MAX_DOUBLINGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    /// Stopping threshold on the power-minimization objective.
    pub xi: f64,
    /// Bisection width.
    pub xi1: f64,
    /// Stopping threshold on the max-min level.
    pub xi2: f64,
    pub t_lower: f64,
    /// Bisection upper bound; derived from the scenario when `None`.
    pub t_upper: Option<f64>,
    pub max_outer: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            xi: 1e-3,
            xi1: 1e-3,
            xi2: 1e-3,
            t_lower: 0.0,
            t_upper: None,
            max_outer: 50,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.xi) && positive(self.xi1) && positive(self.xi2)) {
            return Err(Error::Config("thresholds xi, xi1, xi2 must be > 0".into()));
        }
        if !(self.t_lower.is_finite() && self.t_lower >= 0.0) {
            return Err(Error::Config("t_lower must be >= 0".into()));
        }
        if let Some(u) = self.t_upper {
            if !(u.is_finite() && u > self.t_lower) {
                return Err(Error::Config("t_upper must exceed t_lower".into()));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `r + Σs` for power minimization, the SINR level `t` for max-min.
    pub objective: f64,
    pub slack_sum: f64,
    pub status: SolveStatus,
    pub bisection_steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MMTrace {
    pub rows: Vec<TraceRow>,
}

impl MMTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Config(format!("trace CSV: {e}"));
        w.write_record(["iteration", "objective", "slack_sum", "status", "seconds"])
            .map_err(to_err)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.objective.to_string(),
                r.slack_sum.to_string(),
                r.status.as_str().to_string(),
                r.seconds.to_string(),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("trace CSV: {e}")))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone)]
pub struct PowerMinOutcome {
    pub beamformer: Beamformer,
    /// Power metric of the returned beamformer (W).
    pub power: f64,
    pub slacks: Vec<f64>,
    pub trace: MMTrace,
}

impl PowerMinOutcome {
    pub fn slack_sum(&self) -> f64 {
        self.slacks.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct MaxMinOutcome {
    pub beamformer: Beamformer,
    /// Certified common SINR level (linear).
    pub level: f64,
    /// Upper bracket in use at termination.
    pub t_upper: f64,
    pub trace: MMTrace,
}

/// Starting point of the MM loops.
///
/// Max-min scenarios get `√(γ/G)·w̃_g/‖w̃_g‖₂` (sum power) or
/// `√(γ/G)·w̃_g/‖w̃_g‖_∞` (per-antenna power), which meets the power limit;
/// power-minimization scenarios get unit-norm random vectors.
pub fn initial_beamformer(scenario: &Scenario, seed: u64) -> Beamformer {
    let mut rng = rng_stream(seed, 1);
    let g = scenario.n_groups();
    let raw: Vec<DVector<Complex64>> = (0..g)
        .map(|_| complex_gaussian_vector(&mut rng, scenario.antennas))
        .collect();
    let groups = match scenario.design {
        Design::MaxMinFair { power_limit } => {
            let scale = (power_limit / g as f64).sqrt();
            raw.into_iter()
                .map(|w| {
                    let norm = match scenario.power_mode {
                        PowerMode::Sum => w.norm(),
                        PowerMode::PerAntenna => w.iter().map(|z| z.norm()).fold(0.0, f64::max),
                    };
                    w.scale(scale / norm)
                })
                .collect()
        }
        Design::PowerMin { .. } => raw.into_iter().map(|w| w.normalize()).collect(),
    };
    Beamformer::new(groups)
}

/// Upper bound on any achievable robust SINR:
/// `P_max · max_u (‖ĥ_u‖ + ε_u)² / σ²_u`, with `P_max = γ` under a sum-power
/// limit and `Mγ` under per-antenna limits.
pub fn default_upper_bound(scenario: &Scenario) -> f64 {
    let gamma = scenario.power_limit().unwrap_or(1.0);
    let total = match scenario.power_mode {
        PowerMode::Sum => gamma,
        PowerMode::PerAntenna => gamma * scenario.antennas as f64,
    };
    scenario
        .users
        .iter()
        .map(|u| {
            let a = u.channel.norm() + u.epsilon();
            total * a * a / u.noise
        })
        .fold(0.0, f64::max)
}

fn perturb(w: &Beamformer, rng: &mut ChaCha8Rng) -> Beamformer {
    let entries = (w.n_groups() * w.antennas()).max(1) as f64;
    let scale = 1e-6 * (w.sum_power() / entries).sqrt().max(1.0);
    Beamformer::new(
        w.groups
            .iter()
            .map(|g| g.map(|z| z + complex_gaussian(rng) * scale))
            .collect(),
    )
}

/// Builds a subproblem around `w_prev`, re-randomizing a degenerate pivot.
fn build_with_retries(
    w_prev: &Beamformer,
    rng: &mut ChaCha8Rng,
    build: impl Fn(&Beamformer) -> Result<(ConeProgram, VariableMap)>,
) -> Result<(ConeProgram, VariableMap)> {
    let mut pivot = w_prev.clone();
    let mut attempt = 0;
    loop {
        match build(&pivot) {
            Err(Error::DegeneratePivot { .. }) if attempt < PIVOT_RETRIES => {
                attempt += 1;
                pivot = perturb(&pivot, rng);
            }
            other => return other,
        }
    }
}

/// Robust power minimization under SINR targets.
pub fn power_min(scenario: &Scenario, cfg: &AlgorithmConfig) -> Result<PowerMinOutcome> {
    cfg.validate()?;
    if !matches!(scenario.design, Design::PowerMin { .. }) {
        return Err(Error::InvalidScenario(
            "power minimization needs SINR targets".into(),
        ));
    }
    let mut rng = rng_stream(cfg.seed, 3);
    let mut w = initial_beamformer(scenario, cfg.seed);
    let mut slacks = vec![1.0; scenario.n_users()];
    let mut pinned = false;
    let mut previous: Option<f64> = None;
    let mut trace = MMTrace::default();

    for k in 1..=cfg.max_outer {
        let start = Instant::now();
        let mode = if pinned {
            SlackMode::PinnedZero
        } else {
            SlackMode::Penalized
        };
        let (prog, map) =
            build_with_retries(&w, &mut rng, |p| build_pm_subproblem(scenario, p, mode))?;
        let out = solve(&prog, &cfg.solver)?;
        if out.status != SolveStatus::Optimal {
            return Err(Error::Solver {
                status: out.status,
                iteration: k,
            });
        }
        w = map.beamformer(&out.x);
        slacks = map
            .slack_values(&out.x)
            .map(|s| s.into_iter().map(|v| v.max(0.0)).collect())
            .unwrap_or_else(|| vec![0.0; scenario.n_users()]);
        let r = map.power_value(&out.x).expect("power epigraph");
        let slack_sum: f64 = slacks.iter().sum();
        let objective = r + slack_sum;
        trace.rows.push(TraceRow {
            iteration: k,
            objective,
            slack_sum,
            status: out.status,
            bisection_steps: 0,
            seconds: start.elapsed().as_secs_f64(),
        });
        // once zero, slacks stay pinned for every later iteration
        if !pinned && slacks.iter().all(|s| *s <= SLACK_ZERO) {
            pinned = true;
        }
        if previous.is_some_and(|p| (objective - p).abs() <= cfg.xi) {
            return Ok(PowerMinOutcome {
                power: w.power(scenario.power_mode),
                beamformer: w,
                slacks,
                trace,
            });
        }
        previous = Some(objective);
    }
    Err(Error::MaxOuterExceeded(cfg.max_outer))
}

/// Solves the feasibility program at level `t` around `w_prev`; `Some(w)` when
/// the optimal gauge certifies the level.
fn feasible_at(
    scenario: &Scenario,
    w_prev: &Beamformer,
    t: f64,
    cfg: &AlgorithmConfig,
    rng: &mut ChaCha8Rng,
    iteration: usize,
) -> Result<Option<Beamformer>> {
    let (prog, map) =
        build_with_retries(w_prev, rng, |p| build_feasibility_subproblem(scenario, p, t))?;
    let out = solve(&prog, &cfg.solver)?;
    let gauge = map.gauge_value(&out.x).expect("gauge variable");
    let feasible = match out.status {
        SolveStatus::Optimal => gauge <= FEASIBILITY_TOL,
        SolveStatus::Infeasible => false,
        // an unconverged iterate still settles the test when it is a primal
        // feasible point below the threshold, or its dual bound lies above it;
        // a wrong rejection only lowers the level, so that side is looser
        status => {
            if gauge <= FEASIBILITY_TOL && prog.max_violation(&out.x) <= cfg.solver.tol_accept {
                true
            } else if out.dual_residual <= REJECT_DUAL_RESIDUAL && out.dual_objective > FEASIBILITY_TOL {
                false
            } else {
                return Err(Error::Solver { status, iteration });
            }
        }
    };
    Ok(feasible.then(|| map.beamformer(&out.x)))
}

/// Robust max-min-fair design under a power limit.
///
/// Each outer iteration bisects `[t⁽ᵏ⁾, t_U]` with the surrogate built at the
/// current beamformer, so the level sequence never decreases.
pub fn max_min_fair(scenario: &Scenario, cfg: &AlgorithmConfig) -> Result<MaxMinOutcome> {
    cfg.validate()?;
    if scenario.power_limit().is_none() {
        return Err(Error::InvalidScenario(
            "max-min fairness needs a power limit".into(),
        ));
    }
    let mut t_upper = cfg.t_upper.unwrap_or_else(|| default_upper_bound(scenario));
    if t_upper <= cfg.t_lower {
        return Err(Error::Config(format!(
            "bisection upper bound {t_upper} does not exceed t_lower {}",
            cfg.t_lower
        )));
    }
    let mut rng = rng_stream(cfg.seed, 3);
    let mut w = initial_beamformer(scenario, cfg.seed);
    let mut level = cfg.t_lower;
    // whether `w` is known to satisfy the robust bound at `level`
    let mut certified = false;
    let mut doublings = 0;
    let mut trace = MMTrace::default();

    for k in 1..=cfg.max_outer {
        let start = Instant::now();
        let mut lower = level;
        let mut upper = t_upper;
        let mut best = certified.then(|| w.clone());
        let mut steps = 0;
        loop {
            while upper - lower > cfg.xi1 {
                let t = 0.5 * (lower + upper);
                steps += 1;
                match feasible_at(scenario, &w, t, cfg, &mut rng, k)? {
                    Some(found) => {
                        lower = t;
                        best = Some(found);
                    }
                    None => upper = t,
                }
            }
            // every midpoint accepted: t_U may not bound the optimum
            if lower >= t_upper - cfg.xi1 {
                if doublings == MAX_DOUBLINGS {
                    return Err(Error::BracketError {
                        doublings,
                        upper: t_upper,
                    });
                }
                doublings += 1;
                t_upper *= 2.0;
                upper = t_upper;
                continue;
            }
            break;
        }
        let next = match best {
            Some(found) => found,
            None => feasible_at(scenario, &w, lower, cfg, &mut rng, k)?.ok_or_else(|| {
                Error::Config(format!("initial level t_L = {lower} is not feasible"))
            })?,
        };
        trace.rows.push(TraceRow {
            iteration: k,
            objective: lower,
            slack_sum: 0.0,
            status: SolveStatus::Optimal,
            bisection_steps: steps,
            seconds: start.elapsed().as_secs_f64(),
        });
        let converged = (lower - level).abs() <= cfg.xi2;
        w = next;
        level = lower;
        certified = true;
        if converged {
            return Ok(MaxMinOutcome {
                beamformer: w,
                level,
                t_upper,
                trace,
            });
        }
    }
    Err(Error::MaxOuterExceeded(cfg.max_outer))
}

/// Dispatches on the scenario's design and returns the beamformer with its
/// outer-iteration count.
pub fn design(scenario: &Scenario, cfg: &AlgorithmConfig) -> Result<(Beamformer, MMTrace)> {
    match scenario.design {
        Design::PowerMin { .. } => power_min(scenario, cfg).map(|o| (o.beamformer, o.trace)),
        Design::MaxMinFair { .. } => max_min_fair(scenario, cfg).map(|o| (o.beamformer, o.trace)),
    }
}
