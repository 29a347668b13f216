use serde::{Deserialize, Serialize};

use super::{KktPoint, OracleError};
use crate::matrices::build_matrices;
use crate::model::GridCase;

/// Residuals of the DC-OPF first-order conditions at a candidate point.
///
/// Power residuals are per-unit, stationarity residuals $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// max |mc_n(P_Gn) − λ_bus(n) + μ⁺_n − μ⁻_n|
    pub stationarity_pg: f64,
    /// max over non-slack buses of |(Bλ)_i + Σ (μ_ij − μ_ji)/X_ij|
    pub stationarity_theta: f64,
    /// max |g_i|
    pub balance: f64,
    pub slack_angle: f64,
    /// largest violation of generator and line limits
    pub primal_feas: f64,
    /// largest |μ · constraint value|
    pub comp_slack: f64,
    /// most negative multiplier, 0 when all are non-negative
    pub dual_feas: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCheck {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

impl KktReport {
    pub fn checks(&self) -> Vec<KktCheck> {
        let tol = self.tolerance;
        [
            ("stationarity_pg", self.stationarity_pg),
            ("stationarity_theta", self.stationarity_theta),
            ("balance", self.balance),
            ("slack_angle", self.slack_angle),
            ("primal_feas", self.primal_feas),
            ("comp_slack", self.comp_slack),
        ]
        .into_iter()
        .map(|(name, value)| KktCheck {
            name,
            value,
            pass: value <= tol,
        })
        .chain(std::iter::once(KktCheck {
            name: "dual_feas",
            value: self.dual_feas,
            pass: self.dual_feas >= -tol,
        }))
        .collect()
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }

    /// Largest residual across all conditions (dual feasibility as magnitude).
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity_pg,
            self.stationarity_theta,
            self.balance,
            self.slack_angle,
            self.primal_feas,
            self.comp_slack,
            -self.dual_feas,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn expect_len(field: &'static str, expected: usize, got: usize) -> Result<(), OracleError> {
    if expected == got {
        Ok(())
    } else {
        Err(OracleError::DimensionMismatch {
            field,
            expected,
            got,
        })
    }
}

/// Directed flows `(θ_from − θ_to)/X` per line.
pub fn line_flows(case: &GridCase, theta: &[f64]) -> Vec<f64> {
    case.lines
        .iter()
        .map(|l| (theta[l.from] - theta[l.to]) / l.reactance)
        .collect()
}

/// Evaluates every first-order condition of the DC-OPF at `point`.
///
/// `point` must use per-unit powers (see [`KktPoint`]); a MW case is
/// converted before evaluation.
pub fn check_kkt(case: &GridCase, point: &KktPoint, tol: f64) -> Result<KktReport, OracleError> {
    let case = case.per_unit();
    let (nb, nl, ng) = (case.n_buses(), case.n_lines(), case.n_generators());
    expect_len("pg", ng, point.pg.len())?;
    expect_len("theta", nb, point.theta.len())?;
    expect_len("lambda", nb, point.lambda.len())?;
    expect_len("mu_fwd", nl, point.mu_fwd.len())?;
    expect_len("mu_rev", nl, point.mu_rev.len())?;
    expect_len("mu_gen_hi", ng, point.mu_gen_hi.len())?;
    expect_len("mu_gen_lo", ng, point.mu_gen_lo.len())?;

    let slack = case.slack();
    let m = build_matrices(&case);
    let flows = line_flows(&case, &point.theta);

    let mut stationarity_pg: f64 = 0.0;
    for (n, g) in case.generators.iter().enumerate() {
        let r = case.marginal_cost(n, point.pg[n]) - point.lambda[g.bus] + point.mu_gen_hi[n]
            - point.mu_gen_lo[n];
        stationarity_pg = stationarity_pg.max(r.abs());
    }

    let mut coupling = vec![0.0; nb];
    for i in 0..nb {
        coupling[i] = (0..nb).map(|j| m.b[(i, j)] * point.lambda[j]).sum::<f64>();
    }
    for (l, line) in case.lines.iter().enumerate() {
        let w = (point.mu_fwd[l] - point.mu_rev[l]) / line.reactance;
        coupling[line.from] += w;
        coupling[line.to] -= w;
    }
    let stationarity_theta = coupling
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != slack)
        .fold(0.0_f64, |acc, (_, r)| acc.max(r.abs()));

    let mut injection = vec![0.0; nb];
    for (n, g) in case.generators.iter().enumerate() {
        injection[g.bus] += point.pg[n];
    }
    let mut balance: f64 = 0.0;
    for i in 0..nb {
        let outflow: f64 = (0..nb).map(|j| m.b[(i, j)] * point.theta[j]).sum();
        let g = -injection[i] + case.buses[i].load + outflow;
        balance = balance.max(g.abs());
    }

    let mut primal_feas: f64 = 0.0;
    let mut comp_slack: f64 = 0.0;
    let mut dual_feas: f64 = 0.0;
    for (n, g) in case.generators.iter().enumerate() {
        let hi = point.pg[n] - g.pmax;
        let lo = g.pmin - point.pg[n];
        primal_feas = primal_feas.max(hi).max(lo);
        comp_slack = comp_slack
            .max((point.mu_gen_hi[n] * hi).abs())
            .max((point.mu_gen_lo[n] * lo).abs());
        dual_feas = dual_feas.min(point.mu_gen_hi[n]).min(point.mu_gen_lo[n]);
    }
    for (l, line) in case.lines.iter().enumerate() {
        let fwd = flows[l] - line.limit;
        let rev = -flows[l] - line.limit;
        primal_feas = primal_feas.max(fwd).max(rev);
        comp_slack = comp_slack
            .max((point.mu_fwd[l] * fwd).abs())
            .max((point.mu_rev[l] * rev).abs());
        dual_feas = dual_feas.min(point.mu_fwd[l]).min(point.mu_rev[l]);
    }

    Ok(KktReport {
        stationarity_pg,
        stationarity_theta,
        balance,
        slack_angle: point.theta[slack].abs(),
        primal_feas: primal_feas.max(0.0),
        comp_slack,
        dual_feas,
        tolerance: tol,
    })
}

/// Recovers generator-limit multipliers from the stationarity identity
/// `μ⁺ − μ⁻ = λ_bus − mc(P)`, assigning the difference to the active bound.
///
/// Interior generators get zero multipliers; `tol` (per-unit) decides
/// whether a bound is active. Powers are per-unit.
pub fn recover_gen_multipliers(
    case: &GridCase,
    pg: &[f64],
    lambda: &[f64],
    tol: f64,
) -> (Vec<f64>, Vec<f64>) {
    let case = case.per_unit();
    let ng = case.n_generators();
    let mut hi = vec![0.0; ng];
    let mut lo = vec![0.0; ng];
    for (n, g) in case.generators.iter().enumerate() {
        let r = lambda[g.bus] - case.marginal_cost(n, pg[n]);
        let at_hi = pg[n] >= g.pmax - tol;
        let at_lo = pg[n] <= g.pmin + tol;
        match (at_hi, at_lo) {
            (true, true) => {
                if r >= 0.0 {
                    hi[n] = r;
                } else {
                    lo[n] = -r;
                }
            }
            (true, false) => hi[n] = r,
            (false, true) => lo[n] = -r,
            (false, false) => {}
        }
    }
    (hi, lo)
}
