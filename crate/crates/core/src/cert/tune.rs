//! Exhaustive grid search over step sizes.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_update_system, evaluate_certificate, Certificate};
use crate::engine::{run, Engine, RunConfig, RunOutcome, StopRule, TuningParams, UpdateMode};
use crate::model::GridCase;
use crate::oracle::solve_centralized;

/// Candidate values per step size; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    #[serde(default)]
    pub mode: UpdateMode,
}

impl ParamGrid {
    pub fn singleton(p: &TuningParams) -> Self {
        ParamGrid {
            alpha: vec![p.alpha],
            beta: vec![p.beta],
            gamma: vec![p.gamma],
            delta: vec![p.delta],
            mode: p.mode,
        }
    }

    /// `n` log-spaced values per parameter between `lo` and `hi`.
    pub fn log_uniform(lo: f64, hi: f64, n: usize) -> Self {
        let values: Vec<f64> = if n == 1 {
            vec![lo]
        } else {
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        };
        ParamGrid {
            alpha: values.clone(),
            beta: values.clone(),
            gamma: values.clone(),
            delta: values,
            mode: UpdateMode::Synchronous,
        }
    }

    /// All points, sorted lexicographically on `(α, β, γ, δ)`.
    pub fn points(&self) -> Vec<TuningParams> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (a, b, g, d) = (sorted(&self.alpha), sorted(&self.beta), sorted(&self.gamma), sorted(&self.delta));
        let mut out = Vec::with_capacity(a.len() * b.len() * g.len() * d.len());
        for &alpha in &a {
            for &beta in &b {
                for &gamma in &g {
                    for &delta in &d {
                        out.push(TuningParams::new(alpha, beta, gamma, delta).with_mode(self.mode));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TuneObjective {
    /// Smallest `ρ(I − A)`.
    MinSpectralRadius,
    /// First point in lexicographic order with some norm below one.
    FirstCertified,
    /// Fewest cold-start iterations after which the relative objective gap
    /// stays within `rel_tol` up to `max_iters`.
    Empirical { max_iters: usize, rel_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub params: TuningParams,
    pub certificate: Certificate,
    /// Iteration at which the relative gap first met the target, if it did.
    pub empirical_iters: Option<usize>,
    pub empirical_outcome: Option<RunOutcome>,
    pub final_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub objective: TuneObjective,
    pub best: Option<TuneRow>,
    pub table: Vec<TuneRow>,
}

/// Evaluates every grid point and picks the best under `objective`.
///
/// Ties go to the lexicographically smallest `(α, β, γ, δ)`. The empirical
/// objective uses the centralized optimum only to measure the gap; it returns
/// no best point when the reference cannot be computed.
pub fn tune_parameters(case: &GridCase, grid: &ParamGrid, objective: TuneObjective) -> TuneResult {
    let points = grid.points();
    let reference = match objective {
        TuneObjective::Empirical { .. } => solve_centralized(case).ok().map(|s| s.objective),
        _ => None,
    };
    let engine = Engine::new(case);
    let table: Vec<TuneRow> = points
        .par_iter()
        .map(|params| {
            let certificate = evaluate_certificate(&build_update_system(case, params));
            let mut row = TuneRow {
                params: *params,
                certificate,
                empirical_iters: None,
                empirical_outcome: None,
                final_rel: None,
            };
            if let (TuneObjective::Empirical { max_iters, rel_tol }, Some(f_star)) = (objective, reference) {
                let config = RunConfig {
                    stop: StopRule::max_iters_only(max_iters),
                    record_stride: 1,
                    oracle_objective: Some(f_star),
                };
                if let Ok(trace) = run(case, params, engine.init_cold(), &config) {
                    row.final_rel = trace.last().rel;
                    if trace.outcome != RunOutcome::Diverged {
                        row.empirical_iters = trace.settled_rel_below(rel_tol);
                    }
                    row.empirical_outcome = Some(trace.outcome);
                }
            }
            row
        })
        .collect();

    let best = match objective {
        TuneObjective::MinSpectralRadius => table
            .iter()
            .filter(|r| r.certificate.spectral_radius.is_some())
            .min_by(|a, b| {
                a.certificate
                    .spectral_radius
                    .partial_cmp(&b.certificate.spectral_radius)
                    .unwrap_or(Ordering::Equal)
            }),
        TuneObjective::FirstCertified => table.iter().find(|r| r.certificate.certified),
        TuneObjective::Empirical { .. } => table
            .iter()
            .filter(|r| r.empirical_iters.is_some())
            .min_by_key(|r| r.empirical_iters),
    }
    .cloned();
    TuneResult {
        objective,
        best,
        table,
    }
}
