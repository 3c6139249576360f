//! Sequential linear programming with a box trust region, plus the multi-start
//! driver that runs it from every training point.
//!
//! Iterates are numbered `k = 1..=K`, with `k = 1` the starting point, so a
//! run with `K` iterations takes at most `K − 1` steps.

pub mod simplex;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{dot, LinearConstraint, ParameterVector, ProblemDefinition};
use crate::sampling::TrainingSet;
use crate::subspace::GradientProvider;
pub use simplex::{solve_lp, LpSolution, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptMode {
    /// Take every step, even when the objective drops.
    AlwaysMove,
    /// Reject steps that decrease the objective.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionConfig {
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub expand: f64,
    pub shrink: f64,
    pub eta_good: f64,
    pub eta_bad: f64,
    pub rho_floor: f64,
    pub stationary_tol: f64,
    pub accept_mode: AcceptMode,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta0: 0.1,
            delta_min: 1e-8,
            delta_max: 0.5,
            expand: 2.0,
            shrink: 0.5,
            eta_good: 0.75,
            eta_bad: 0.25,
            rho_floor: 1e-14,
            stationary_tol: 1e-12,
            accept_mode: AcceptMode::AlwaysMove,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.delta_min
            && self.delta_min <= self.delta0
            && self.delta0 <= self.delta_max
            && self.expand > 1.0
            && 0.0 < self.shrink
            && self.shrink < 1.0
            && 0.0 <= self.eta_bad
            && self.eta_bad < self.eta_good
            && self.eta_good <= 1.0
            && self.rho_floor >= 0.0
            && self.stationary_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trust-region settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    DeltaFloor,
    Stationary,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub u: ParameterVector,
    pub f: f64,
    /// Trust-region radius used for the step that produced this iterate.
    pub delta: f64,
    /// `‖s‖∞` of that step (also for a rejected one).
    pub step_norm: f64,
    pub predicted: f64,
    pub actual: f64,
    pub evals_cum: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub best_value: f64,
    pub best_point: ParameterVector,
    pub stop_reason: StopReason,
    pub error: Option<String>,
}

impl OptimizationTrace {
    pub fn evals(&self) -> usize {
        self.records.last().map_or(0, |r| r.evals_cum)
    }

    pub fn start_value(&self) -> f64 {
        self.records[0].f
    }
}

/// One linearized subproblem: maximize `g·s` over steps that keep `u + s`
/// inside the cube, the trust box `‖s‖∞ ≤ Δ`, and every linear constraint.
pub fn slp_step(problem: &ProblemDefinition, u: &[f64], gradient: &[f64], delta: f64) -> Result<LpSolution> {
    check_dim(problem.dimension(), u.len())?;
    check_dim(problem.dimension(), gradient.len())?;
    let lo: Vec<f64> = u.iter().map(|x| (-x).max(-delta).min(0.0)).collect();
    let hi: Vec<f64> = u.iter().map(|x| (1.0 - x).min(delta).max(0.0)).collect();
    // a·(u + s) ≤ b  ⇔  a·s ≤ b − a·u; clamped at 0 so tolerance-level violations keep s = 0 feasible.
    let rows = problem
        .constraints()
        .iter()
        .map(|c| LinearConstraint::new(c.coefficients().to_vec(), (-c.value(u)).max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    let solution = solve_lp(gradient, &rows, &lo, &hi)?;
    if solution.status == LpStatus::Infeasible {
        return Err(Error::InfeasibleStep);
    }
    Ok(solution)
}

/// Final record absorbs evaluations spent after it was written.
fn settle(trace: &mut OptimizationTrace, evals: usize) {
    if let Some(last) = trace.records.last_mut() {
        last.evals_cum = evals;
    }
}

fn failed(mut trace: OptimizationTrace, err: Error, evals: usize) -> OptimizationTrace {
    settle(&mut trace, evals);
    trace.stop_reason = StopReason::Failed;
    trace.error = Some(err.to_string());
    trace
}

/// Runs up to `max_iters` iterates from `u0`.
///
/// Errors from the gradient provider or the objective end the run early; the
/// returned trace keeps everything computed so far and carries the message.
pub fn slp_run(
    problem: &ProblemDefinition,
    provider: &dyn GradientProvider,
    u0: &[f64],
    max_iters: usize,
    tr: &TrustRegionConfig,
) -> Result<OptimizationTrace> {
    tr.validate()?;
    if max_iters == 0 {
        return Err(Error::Config("iteration limit must be at least 1".into()));
    }
    if !problem.is_admissible(u0)? {
        return Err(Error::InvalidInput("starting point is not admissible".into()));
    }
    let mut u: Vec<f64> = u0.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let mut f = problem.objective(&u)?;
    let mut evals = 1;
    let mut delta = tr.delta0;
    let mut trace = OptimizationTrace {
        records: vec![IterationRecord {
            k: 1,
            u: ParameterVector::new(u.clone())?,
            f,
            delta,
            step_norm: 0.0,
            predicted: 0.0,
            actual: 0.0,
            evals_cum: evals,
        }],
        best_value: f,
        best_point: ParameterVector::new(u.clone())?,
        stop_reason: StopReason::MaxIters,
        error: None,
    };
    let mut floor_hits = 0;

    for k in 2..=max_iters {
        let (g, gradient_evals) = match provider.gradient(&u) {
            Ok(v) => v,
            Err(e) => return Ok(failed(trace, e, evals)),
        };
        evals += gradient_evals;
        let step = match slp_step(problem, &u, &g, delta) {
            Ok(s) => s.step,
            Err(e) => return Ok(failed(trace, e, evals)),
        };
        let predicted = dot(&g, &step);
        if predicted <= tr.stationary_tol {
            settle(&mut trace, evals);
            trace.stop_reason = StopReason::Stationary;
            break;
        }
        let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| (x + s).clamp(0.0, 1.0)).collect();
        evals += 1;
        let f_trial = match problem.objective(&trial) {
            Ok(v) => v,
            Err(e) => return Ok(failed(trace, e, evals)),
        };
        let actual = f_trial - f;
        let rho = if predicted > tr.rho_floor { actual / predicted } else { f64::NEG_INFINITY };
        let accepted = tr.accept_mode == AcceptMode::AlwaysMove || actual >= 0.0;
        let step_norm = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let delta_used = delta;
        if rho >= tr.eta_good {
            delta = (tr.expand * delta).min(tr.delta_max);
        } else if rho < tr.eta_bad {
            delta = (tr.shrink * delta).max(tr.delta_min);
        }
        if accepted {
            u = trial;
            f = f_trial;
        }
        let point = ParameterVector::new(u.clone())?;
        if f > trace.best_value {
            trace.best_value = f;
            trace.best_point = point.clone();
        }
        trace.records.push(IterationRecord {
            k,
            u: point,
            f,
            delta: delta_used,
            step_norm,
            predicted,
            actual,
            evals_cum: evals,
        });

        let poor = !accepted || rho < tr.eta_bad || step_norm == 0.0;
        floor_hits = if delta <= tr.delta_min && poor { floor_hits + 1 } else { 0 };
        if floor_hits >= 2 {
            trace.stop_reason = StopReason::DeltaFloor;
            break;
        }
    }
    debug!(
        "slp run: {} iterates, best {:.6}, stop {:?}",
        trace.records.len(),
        trace.best_value,
        trace.stop_reason
    );
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best_value: f64,
    pub best_point: Option<ParameterVector>,
    /// Index of the run holding `best_value`.
    pub best_run: Option<usize>,
    /// One entry per start, in start order.
    pub traces: Vec<std::result::Result<OptimizationTrace, String>>,
}

impl MultiStartResult {
    pub fn total_evals(&self) -> usize {
        self.traces.iter().filter_map(|t| t.as_ref().ok()).map(OptimizationTrace::evals).sum()
    }
}

/// Runs SLP from every start and keeps the largest objective value seen at
/// any iterate of any run. Runs execute concurrently; results are ordered by
/// start index and ties go to the earlier run.
pub fn multi_start(
    problem: &ProblemDefinition,
    provider: &dyn GradientProvider,
    starts: &TrainingSet,
    max_iters: usize,
    tr: &TrustRegionConfig,
) -> Result<MultiStartResult> {
    if starts.is_empty() {
        return Err(Error::InvalidInput("multi-start needs at least one starting point".into()));
    }
    tr.validate()?;
    let traces: Vec<std::result::Result<OptimizationTrace, String>> = starts
        .points
        .par_iter()
        .map(|u0| slp_run(problem, provider, u0, max_iters, tr).map_err(|e| e.to_string()))
        .collect();

    let mut result = MultiStartResult { best_value: f64::NEG_INFINITY, best_point: None, best_run: None, traces };
    for (i, trace) in result.traces.iter().enumerate() {
        if let Ok(t) = trace {
            if t.best_value > result.best_value {
                result.best_value = t.best_value;
                result.best_point = Some(t.best_point.clone());
                result.best_run = Some(i);
            }
        }
    }
    Ok(result)
}
