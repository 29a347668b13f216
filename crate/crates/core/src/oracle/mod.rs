//! Centralized DC-OPF reference solver.
//!
//! Two independent routes produce the same optimum:
//!
//! * [`solve_centralized`] runs a dual active-set method (Goldfarb–Idnani)
//!   on the dispatch-only problem obtained by expressing angles and flows
//!   through distribution factors. It scales to the full RTS case.
//! * [`solve_enumeration`] solves the full first-order system over
//!   dispatch, angles and bus prices for every admissible working set and
//!   keeps the cheapest KKT-consistent one. Only practical for tiny cases.
//!
//! All results carry powers in per-unit on the case base and multipliers in
//! $/MWh. The objective is in $/h.

mod active_set;
mod enumerate;
mod kkt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GridCase;

pub use active_set::solve_centralized;
pub use enumerate::{solve_enumeration, MAX_ENUMERATION_BUSES};
pub use kkt::{check_kkt, line_flows, recover_gen_multipliers, KktCheck, KktReport};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("enumeration supports at most {max} buses, case has {buses}")]
    TooLarge { buses: usize, max: usize },
    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

/// An inequality constraint of the DC-OPF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Constraint {
    GenUpper(usize),
    GenLower(usize),
    /// Flow from `from` to `to` at its limit.
    LineForward(usize),
    /// Flow from `to` to `from` at its limit.
    LineReverse(usize),
}

impl Constraint {
    /// Position in the canonical ordering used for tie-breaking.
    pub fn ordinal(self, n_gens: usize, n_lines: usize) -> usize {
        match self {
            Constraint::GenUpper(n) => n,
            Constraint::GenLower(n) => n_gens + n,
            Constraint::LineForward(l) => 2 * n_gens + l,
            Constraint::LineReverse(l) => 2 * n_gens + n_lines + l,
        }
    }

    pub fn from_ordinal(k: usize, n_gens: usize, n_lines: usize) -> Self {
        if k < n_gens {
            Constraint::GenUpper(k)
        } else if k < 2 * n_gens {
            Constraint::GenLower(k - n_gens)
        } else if k < 2 * n_gens + n_lines {
            Constraint::LineForward(k - 2 * n_gens)
        } else {
            Constraint::LineReverse(k - 2 * n_gens - n_lines)
        }
    }
}

/// Primal and dual values of a DC-OPF candidate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktPoint {
    /// Per generator, per-unit.
    pub pg: Vec<f64>,
    /// Per bus, radians.
    pub theta: Vec<f64>,
    /// Per bus, $/MWh.
    pub lambda: Vec<f64>,
    /// Per line, multiplier of the `from → to` flow limit (`μ_ij`).
    pub mu_fwd: Vec<f64>,
    /// Per line, multiplier of the `to → from` flow limit (`μ_ji`).
    pub mu_rev: Vec<f64>,
    pub mu_gen_hi: Vec<f64>,
    pub mu_gen_lo: Vec<f64>,
}

impl KktPoint {
    pub fn zeros(case: &GridCase) -> Self {
        let (nb, nl, ng) = (case.n_buses(), case.n_lines(), case.n_generators());
        KktPoint {
            pg: vec![0.0; ng],
            theta: vec![0.0; nb],
            lambda: vec![0.0; nb],
            mu_fwd: vec![0.0; nl],
            mu_rev: vec![0.0; nl],
            mu_gen_hi: vec![0.0; ng],
            mu_gen_lo: vec![0.0; ng],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub point: KktPoint,
    /// Generation cost, $/h.
    pub objective: f64,
    /// Constraints treated as equalities at the optimum, ascending.
    pub working_set: Vec<Constraint>,
}

impl OracleSolution {
    /// Lines whose flow multiplier exceeds `tol`, with direction.
    pub fn binding_lines(&self, tol: f64) -> Vec<Constraint> {
        let p = &self.point;
        let mut out = Vec::new();
        for l in 0..p.mu_fwd.len() {
            if p.mu_fwd[l] > tol {
                out.push(Constraint::LineForward(l));
            }
            if p.mu_rev[l] > tol {
                out.push(Constraint::LineReverse(l));
            }
        }
        out
    }
}

/// Generation cost in $/h of dispatch `pg`, given in `case`'s units.
pub fn objective(case: &GridCase, pg: &[f64]) -> f64 {
    case.objective(pg)
}
