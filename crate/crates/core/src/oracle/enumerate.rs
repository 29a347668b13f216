//! Exhaustive working-set enumeration over the full first-order system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Constraint, KktPoint, OracleError, OracleSolution};
use crate::matrices::build_matrices;
use crate::model::GridCase;

/// Largest bus count accepted by [`solve_enumeration`].
pub const MAX_ENUMERATION_BUSES: usize = 5;

const FEAS_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

/// Each generator and each line is free, at its upper/forward bound, or at
/// its lower/reverse bound.
#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Free,
    Upper,
    Lower,
}

fn decode(mut code: u64, len: usize) -> Vec<State> {
    (0..len)
        .map(|_| {
            let s = match code % 3 {
                0 => State::Free,
                1 => State::Upper,
                _ => State::Lower,
            };
            code /= 3;
            s
        })
        .collect()
}

fn working_set(states: &[State], ng: usize) -> Vec<Constraint> {
    let mut ws: Vec<Constraint> = states
        .iter()
        .enumerate()
        .filter_map(|(k, s)| match (*s, k < ng) {
            (State::Free, _) => None,
            (State::Upper, true) => Some(Constraint::GenUpper(k)),
            (State::Lower, true) => Some(Constraint::GenLower(k)),
            (State::Upper, false) => Some(Constraint::LineForward(k - ng)),
            (State::Lower, false) => Some(Constraint::LineReverse(k - ng)),
        })
        .collect();
    ws.sort();
    ws
}

/// Solves the first-order system for one working set. Returns `None` when
/// the system is singular or the candidate violates feasibility or
/// multiplier signs.
fn candidate(case: &GridCase, b: &DMatrix<f64>, ws: &[Constraint]) -> Option<KktPoint> {
    let (nb, ng) = (case.n_buses(), case.n_generators());
    let slack = case.slack();
    let ns: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let nw = ws.len();
    // unknowns: P (ng) | θ_ns (nb−1) | λ (nb) | μ_W (nw)
    let (op, ot, ol, om) = (0, ng, ng + nb - 1, ng + 2 * nb - 1);
    let dim = om + nw;
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut row = 0;

    for (n, g) in case.generators.iter().enumerate() {
        k[(row, op + n)] = case.cost_slope(n);
        k[(row, ol + g.bus)] = -1.0;
        for (w, c) in ws.iter().enumerate() {
            match c {
                Constraint::GenUpper(m) if *m == n => k[(row, om + w)] = 1.0,
                Constraint::GenLower(m) if *m == n => k[(row, om + w)] = -1.0,
                _ => {}
            }
        }
        rhs[row] = -case.cost_intercept(n);
        row += 1;
    }
    for &i in &ns {
        for j in 0..nb {
            k[(row, ol + j)] = b[(i, j)];
        }
        for (w, c) in ws.iter().enumerate() {
            let (l, sign) = match c {
                Constraint::LineForward(l) => (*l, 1.0),
                Constraint::LineReverse(l) => (*l, -1.0),
                _ => continue,
            };
            let line = &case.lines[l];
            let inc = if line.from == i {
                1.0
            } else if line.to == i {
                -1.0
            } else {
                0.0
            };
            k[(row, om + w)] = sign * inc / line.reactance;
        }
        row += 1;
    }
    for i in 0..nb {
        for n in case.generators_at(i) {
            k[(row, op + n)] = -1.0;
        }
        for (c, &j) in ns.iter().enumerate() {
            k[(row, ot + c)] = b[(i, j)];
        }
        rhs[row] = -case.buses[i].load;
        row += 1;
    }
    let theta_col = |bus: usize| ns.iter().position(|&j| j == bus).map(|c| ot + c);
    for c in ws {
        match *c {
            Constraint::GenUpper(n) => {
                k[(row, op + n)] = 1.0;
                rhs[row] = case.generators[n].pmax;
            }
            Constraint::GenLower(n) => {
                k[(row, op + n)] = 1.0;
                rhs[row] = case.generators[n].pmin;
            }
            Constraint::LineForward(l) | Constraint::LineReverse(l) => {
                let line = &case.lines[l];
                if let Some(col) = theta_col(line.from) {
                    k[(row, col)] = 1.0 / line.reactance;
                }
                if let Some(col) = theta_col(line.to) {
                    k[(row, col)] = -1.0 / line.reactance;
                }
                rhs[row] = if matches!(c, Constraint::LineForward(_)) {
                    line.limit
                } else {
                    -line.limit
                };
            }
        }
        row += 1;
    }
    debug_assert_eq!(row, dim);

    let lu = k.full_piv_lu();
    let scale = lu.u().diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let smallest = lu.u().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(smallest > 1e-12 * scale.max(1.0)) {
        return None;
    }
    let x = lu.solve(&rhs)?;

    let mut point = KktPoint::zeros(case);
    point.pg = (0..ng).map(|n| x[op + n]).collect();
    for (c, &j) in ns.iter().enumerate() {
        point.theta[j] = x[ot + c];
    }
    point.lambda = (0..nb).map(|i| x[ol + i]).collect();
    for (w, c) in ws.iter().enumerate() {
        let u = x[om + w];
        if u < -FEAS_TOL {
            return None;
        }
        match *c {
            Constraint::GenUpper(n) => point.mu_gen_hi[n] = u.max(0.0),
            Constraint::GenLower(n) => point.mu_gen_lo[n] = u.max(0.0),
            Constraint::LineForward(l) => point.mu_fwd[l] = u.max(0.0),
            Constraint::LineReverse(l) => point.mu_rev[l] = u.max(0.0),
        }
    }
    for (n, g) in case.generators.iter().enumerate() {
        if point.pg[n] > g.pmax + FEAS_TOL || point.pg[n] < g.pmin - FEAS_TOL {
            return None;
        }
    }
    for line in &case.lines {
        let flow = (point.theta[line.from] - point.theta[line.to]) / line.reactance;
        if flow.abs() > line.limit + FEAS_TOL {
            return None;
        }
    }
    Some(point)
}

/// Centralized DC-OPF optimum by solving the first-order system for every
/// working set and keeping the cheapest consistent candidate.
///
/// Ties within a relative `1e-12` of the best objective go to the
/// lexicographically smallest working set. Restricted to cases with at most
/// [`MAX_ENUMERATION_BUSES`] buses.
pub fn solve_enumeration(case: &GridCase) -> Result<OracleSolution, OracleError> {
    if case.n_buses() > MAX_ENUMERATION_BUSES {
        return Err(OracleError::TooLarge {
            buses: case.n_buses(),
            max: MAX_ENUMERATION_BUSES,
        });
    }
    let pu = case.per_unit();
    let ng = pu.n_generators();
    let len = ng + pu.n_lines();
    let b = build_matrices(&pu).b;
    let total = 3u64.pow(len as u32);

    let found: Vec<(f64, Vec<Constraint>, KktPoint)> = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let ws = working_set(&decode(code, len), ng);
            let point = candidate(&pu, &b, &ws)?;
            Some((pu.objective(&point.pg), ws, point))
        })
        .collect();

    let best = found
        .iter()
        .map(|(f, _, _)| *f)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(OracleError::Infeasible(
            "no working set yields a feasible first-order point".into(),
        ));
    }
    let cutoff = best + TIE_TOL * best.abs().max(1.0);
    let (objective, working_set, point) = found
        .into_iter()
        .filter(|(f, _, _)| *f <= cutoff)
        .min_by(|a, b| a.1.cmp(&b.1))
        .expect("at least one candidate attains the minimum");
    Ok(OracleSolution {
        point,
        objective,
        working_set,
    })
}
