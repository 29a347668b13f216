//! Distributed-versus-centralized comparison.

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, SystemState};
use crate::metrics::{metric_rel, metric_res};
use crate::model::GridCase;
use crate::oracle::{check_kkt, recover_gen_multipliers, KktPoint, KktReport, OracleSolution};

/// Multipliers above this value ($/MWh) mark a line as binding.
pub const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    /// Flow from `from` to `to` at its limit.
    Forward,
    /// Flow from `to` to `from` at its limit.
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingLine {
    /// One-based bus ids.
    pub from: usize,
    pub to: usize,
    pub direction: FlowDirection,
    /// $/MWh.
    pub mu: f64,
}

/// Lines whose multiplier exceeds `tol`, in line order, forward before reverse.
pub fn binding_lines(case: &GridCase, mu_fwd: &[f64], mu_rev: &[f64], tol: f64) -> Vec<BindingLine> {
    let mut out = Vec::new();
    for (l, line) in case.lines.iter().enumerate() {
        for (mu, direction) in [(mu_fwd[l], FlowDirection::Forward), (mu_rev[l], FlowDirection::Reverse)] {
            if mu > tol {
                out.push(BindingLine {
                    from: line.from + 1,
                    to: line.to + 1,
                    direction,
                    mu,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Relative objective gap to the centralized optimum.
    pub rel_final: Option<f64>,
    /// Sum of absolute bus balance residuals, MW.
    pub res_final_mw: f64,
    /// Generation cost, $/h.
    pub objective: f64,
    pub oracle_objective: Option<f64>,
    /// First-order residuals of the final iterate, with generator multipliers
    /// recovered from the price–cost gap.
    pub kkt: KktReport,
    pub binding_lines: Vec<BindingLine>,
    pub oracle_binding_lines: Option<Vec<BindingLine>>,
    /// `max λ − min λ`, $/MWh.
    pub lmp_spread: f64,
    pub lmp_mean: f64,
    /// Largest `|λ_i − λ*_i|`, $/MWh.
    pub lmp_max_error: Option<f64>,
}

/// Engine iterate with generator multipliers recovered for reporting.
pub fn recovered_point(engine: &Engine, state: &SystemState, bound_tol: f64) -> KktPoint {
    let mut point = engine.to_point(state);
    let (hi, lo) = recover_gen_multipliers(engine.case(), &point.pg, &point.lambda, bound_tol);
    point.mu_gen_hi = hi;
    point.mu_gen_lo = lo;
    point
}

/// Compares a final engine state with an optional centralized solution.
pub fn compare(
    case: &GridCase,
    state: &SystemState,
    oracle: Option<&OracleSolution>,
    kkt_tol: f64,
) -> ComparisonReport {
    let engine = Engine::new(case);
    let point = recovered_point(&engine, state, 1e-9);
    let kkt = check_kkt(case, &point, kkt_tol).expect("engine state matches the case");
    let pu = engine.case();
    let objective = engine.objective(state);
    let lmax = point.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = point.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let lmp_mean = point.lambda.iter().sum::<f64>() / point.lambda.len().max(1) as f64;
    ComparisonReport {
        rel_final: oracle.and_then(|o| metric_rel(objective, o.objective).ok()),
        res_final_mw: pu.power_to_mw(metric_res(&engine.residuals(state))),
        objective,
        oracle_objective: oracle.map(|o| o.objective),
        kkt,
        binding_lines: binding_lines(pu, &point.mu_fwd, &point.mu_rev, BINDING_TOL),
        oracle_binding_lines: oracle
            .map(|o| binding_lines(pu, &o.point.mu_fwd, &o.point.mu_rev, BINDING_TOL)),
        lmp_spread: lmax - lmin,
        lmp_mean,
        lmp_max_error: oracle.map(|o| {
            point
                .lambda
                .iter()
                .zip(&o.point.lambda)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        }),
    }
}
