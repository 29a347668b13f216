//! Iterating the engine to a stop rule and recording the trajectory.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Engine, EngineError, Layout, SystemState, TuningParams};
use crate::metrics::{metric_rel, metric_res};
use crate::model::GridCase;

/// When to stop iterating. Each enabled criterion stops the run on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    /// Requires [`RunConfig::oracle_objective`].
    pub rel_tol: Option<f64>,
    /// Per-unit.
    pub res_tol: Option<f64>,
    /// ℓ∞ distance between consecutive stacked iterates.
    pub delta_tol: Option<f64>,
    /// ℓ∞ bound on the stacked iterate beyond which the run is declared divergent.
    pub divergence_bound: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iters: 50_000,
            rel_tol: None,
            res_tol: None,
            delta_tol: Some(1e-9),
            divergence_bound: 1e8,
        }
    }
}

impl StopRule {
    pub fn max_iters_only(max_iters: usize) -> Self {
        StopRule {
            max_iters,
            delta_tol: None,
            ..StopRule::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stop: StopRule,
    /// Record every `record_stride`-th iterate; the first and last are always kept.
    pub record_stride: usize,
    /// Reference cost in $/h used for the relative gap. Never fed to the buses.
    pub oracle_objective: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stop: StopRule::default(),
            record_stride: 1,
            oracle_objective: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    Rel,
    Res,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "criterion")]
pub enum RunOutcome {
    Converged(StopCriterion),
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: usize,
    /// Stacked iterate in [`Layout`] order, per-unit.
    pub state: Vec<f64>,
    /// Per-unit.
    pub res: f64,
    pub rel: Option<f64>,
    /// ℓ∞ step from the previous iterate; absent at `k = 0`.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<RunRecord>,
    pub outcome: RunOutcome,
    /// Index of the last iterate.
    pub iterations: usize,
    pub final_state: SystemState,
    pub params: TuningParams,
    pub layout: Layout,
    pub record_stride: usize,
    pub wall_time_s: f64,
}

impl RunTrace {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("a trace holds the initial state")
    }

    pub fn converged(&self) -> bool {
        matches!(self.outcome, RunOutcome::Converged(_))
    }

    /// First recorded iteration whose relative gap is at most `tol`.
    pub fn first_rel_below(&self, tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rel.is_some_and(|v| v <= tol))
            .map(|r| r.k)
    }

    /// Smallest recorded `k` from which every later record has a relative gap
    /// of at most `tol`.
    pub fn settled_rel_below(&self, tol: f64) -> Option<usize> {
        let mut settled = None;
        for r in self.records.iter().rev() {
            if r.rel.is_some_and(|v| v <= tol) {
                settled = Some(r.k);
            } else {
                break;
            }
        }
        settled
    }
}

fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() {
            f64::NAN
        } else {
            m.max(d)
        }
    })
}

/// Iterates from `init` until a stop criterion fires.
///
/// Step sizes must be finite and non-negative; zero values are accepted and
/// freeze the corresponding blocks.
pub fn run(
    case: &GridCase,
    params: &TuningParams,
    init: SystemState,
    config: &RunConfig,
) -> Result<RunTrace, EngineError> {
    for (name, value) in [
        ("alpha", params.alpha),
        ("beta", params.beta),
        ("gamma", params.gamma),
        ("delta", params.delta),
    ] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(EngineError::InvalidParam { name, value });
        }
    }
    if config.record_stride == 0 {
        return Err(EngineError::Config("record stride must be at least 1".into()));
    }
    if config.stop.rel_tol.is_some() && config.oracle_objective.is_none() {
        return Err(EngineError::Config(
            "relative-gap stop rule needs a reference objective".into(),
        ));
    }
    if let Some(f) = config.oracle_objective {
        if !(f > 0.0) {
            return Err(EngineError::Config(format!(
                "reference objective must be positive, got {f}"
            )));
        }
    }

    let started = Instant::now();
    let engine = Engine::new(case);
    let measure = |state: &SystemState, x: Vec<f64>, delta: Option<f64>| RunRecord {
        k: state.k,
        res: metric_res(&engine.residuals(state)),
        rel: config
            .oracle_objective
            .map(|f| metric_rel(engine.objective(state), f).expect("checked positive")),
        delta,
        state: x,
    };

    let mut state = init;
    let mut x = engine.to_stacked(&state);
    let mut records = vec![measure(&state, x.clone(), None)];
    let mut outcome = RunOutcome::MaxIters;
    let stop = config.stop;

    while state.k < stop.max_iters {
        let next = engine.step(&state, params)?;
        let y = engine.to_stacked(&next);
        let delta = linf_diff(&x, &y);
        let size = y.iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
        state = next;
        x = y;
        let record = measure(&state, x.clone(), Some(delta));

        let fired = if !(size <= stop.divergence_bound) {
            Some(RunOutcome::Diverged)
        } else if stop.rel_tol.is_some_and(|t| record.rel.is_some_and(|r| r <= t)) {
            Some(RunOutcome::Converged(StopCriterion::Rel))
        } else if stop.res_tol.is_some_and(|t| record.res <= t) {
            Some(RunOutcome::Converged(StopCriterion::Res))
        } else if stop.delta_tol.is_some_and(|t| delta <= t) {
            Some(RunOutcome::Converged(StopCriterion::Delta))
        } else {
            None
        };
        let last = fired.is_some() || state.k == stop.max_iters;
        if last || state.k % config.record_stride == 0 {
            records.push(record);
        }
        if let Some(o) = fired {
            outcome = o;
            break;
        }
    }

    Ok(RunTrace {
        records,
        outcome,
        iterations: state.k,
        final_state: state,
        params: *params,
        layout: engine.layout(),
        record_stride: config.record_stride,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
