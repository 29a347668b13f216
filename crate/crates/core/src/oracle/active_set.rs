//! Dual active-set (Goldfarb–Idnani) solver on the dispatch-only problem.
//!
//! With `θ_slack = 0` the angles and flows are affine in the dispatch:
//! `flow = F·P − f0` where `F = PTDF·A_g` and `f0 = PTDF·P_L`. The remaining
//! problem has one equality (total generation equals total load) and the
//! generator and directed line limits as inequalities, written `nᵀP ≥ b`.

use nalgebra::{DMatrix, DVector};

use super::{Constraint, KktPoint, OracleError, OracleSolution};
use crate::matrices::{angle_sensitivity, build_matrices, generator_incidence, load_vector, ptdf};
use crate::model::GridCase;

const VIOLATION_TOL: f64 = 1e-11;
const DEPENDENCE_TOL: f64 = 1e-12;

struct Reduced {
    /// Diagonal of the Hessian.
    h: DVector<f64>,
    q: DVector<f64>,
    /// Inequality normals as columns, indexed by constraint ordinal.
    normals: DMatrix<f64>,
    rhs: DVector<f64>,
    total_load: f64,
}

fn build_reduced(case: &GridCase, flow_gain: &DMatrix<f64>, flow_offset: &DVector<f64>) -> Reduced {
    let (ng, nl) = (case.n_generators(), case.n_lines());
    let m = 2 * ng + 2 * nl;
    let mut normals = DMatrix::zeros(ng, m);
    let mut rhs = DVector::zeros(m);
    for (n, g) in case.generators.iter().enumerate() {
        let up = Constraint::GenUpper(n).ordinal(ng, nl);
        normals[(n, up)] = -1.0;
        rhs[up] = -g.pmax;
        let lo = Constraint::GenLower(n).ordinal(ng, nl);
        normals[(n, lo)] = 1.0;
        rhs[lo] = g.pmin;
    }
    for (l, line) in case.lines.iter().enumerate() {
        let fwd = Constraint::LineForward(l).ordinal(ng, nl);
        let rev = Constraint::LineReverse(l).ordinal(ng, nl);
        for n in 0..ng {
            normals[(n, fwd)] = -flow_gain[(l, n)];
            normals[(n, rev)] = flow_gain[(l, n)];
        }
        rhs[fwd] = -line.limit - flow_offset[l];
        rhs[rev] = -line.limit + flow_offset[l];
    }
    Reduced {
        h: DVector::from_iterator(ng, (0..ng).map(|n| case.cost_slope(n))),
        q: DVector::from_iterator(ng, (0..ng).map(|n| case.cost_intercept(n))),
        normals,
        rhs,
        total_load: case.total_load(),
    }
}

impl Reduced {
    fn dim(&self) -> usize {
        self.h.len()
    }

    /// Normal of the equality (index `None`) or of an inequality.
    fn normal(&self, c: Option<usize>) -> DVector<f64> {
        match c {
            None => DVector::from_element(self.dim(), 1.0),
            Some(p) => self.normals.column(p).into_owned(),
        }
    }

    /// Solves `[H N; Nᵀ 0] [z; r] = [top; bottom]` for the active normals `N`.
    fn solve_kkt(
        &self,
        active: &[Option<usize>],
        top: &DVector<f64>,
        bottom: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let k = active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        for i in 0..n {
            kkt[(i, i)] = self.h[i];
        }
        for (j, &c) in active.iter().enumerate() {
            let col = self.normal(c);
            for i in 0..n {
                kkt[(i, n + j)] = col[i];
                kkt[(n + j, i)] = col[i];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(top);
        rhs.rows_mut(n, k).copy_from(bottom);
        let sol = kkt.lu().solve(&rhs)?;
        Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
    }
}

/// Centralized DC-OPF optimum via a dual active-set method.
///
/// Ties between equally violated constraints are broken by lowest
/// [`Constraint::ordinal`]. Returns [`OracleError::Infeasible`] when no
/// dispatch satisfies all limits.
pub fn solve_centralized(case: &GridCase) -> Result<OracleSolution, OracleError> {
    let pu = case.per_unit();
    let (nb, nl, ng) = (pu.n_buses(), pu.n_lines(), pu.n_generators());
    if ng == 0 {
        return Err(OracleError::Infeasible("case has no generators".into()));
    }
    let mats = build_matrices(&pu);
    let shift = ptdf(&pu, &mats);
    let gen_inc = generator_incidence(&pu);
    let loads = load_vector(&pu);
    let flow_gain = &shift * &gen_inc;
    let flow_offset = &shift * &loads;
    let red = build_reduced(&pu, &flow_gain, &flow_offset);
    let m = red.rhs.len();

    // Start from the minimizer under the balance equality only.
    let mut active: Vec<Option<usize>> = vec![None];
    let (mut x, u0) = red
        .solve_kkt(&active, &(-&red.q), &DVector::from_element(1, red.total_load))
        .ok_or_else(|| OracleError::Infeasible("balance system is singular".into()))?;
    // KKT solve returns r with H x + N r = −q, so multipliers are −r.
    let mut mult: Vec<f64> = vec![-u0[0]];

    let max_iter = 50 * (m + 1) + 100;
    let mut iter = 0;
    loop {
        let slack = red.normals.tr_mul(&x) - &red.rhs;
        let mut chosen: Option<usize> = None;
        let mut worst = -VIOLATION_TOL;
        for p in 0..m {
            if active.contains(&Some(p)) {
                continue;
            }
            if slack[p] < worst {
                worst = slack[p];
                chosen = Some(p);
            }
        }
        let Some(p) = chosen else { break };
        let np = red.normal(Some(p));
        let hinv_norm: f64 = np.iter().zip(red.h.iter()).map(|(v, h)| v * v / h).sum();
        let mut up = 0.0;
        loop {
            iter += 1;
            if iter > max_iter {
                return Err(OracleError::Infeasible(
                    "active-set iteration limit reached".into(),
                ));
            }
            let (z, r) = red
                .solve_kkt(&active, &np, &DVector::zeros(active.len()))
                .ok_or_else(|| OracleError::Infeasible("working-set system is singular".into()))?;
            // Partial step bound from inequality multipliers that shrink.
            let mut t1 = f64::INFINITY;
            let mut block: Option<usize> = None;
            for (j, c) in active.iter().enumerate() {
                if c.is_some() && r[j] > 0.0 {
                    let t = mult[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        block = Some(j);
                    }
                }
            }
            let curvature = z.dot(&np);
            let dependent = curvature.abs() <= DEPENDENCE_TOL * hinv_norm;
            let s_p = np.dot(&x) - red.rhs[p];
            if dependent {
                let Some(j) = block else {
                    return Err(OracleError::Infeasible(format!(
                        "constraint {:?} cannot be satisfied",
                        Constraint::from_ordinal(p, ng, nl)
                    )));
                };
                for (mj, rj) in mult.iter_mut().zip(r.iter()) {
                    *mj -= t1 * rj;
                }
                up += t1;
                active.remove(j);
                mult.remove(j);
                continue;
            }
            let t2 = -s_p / curvature;
            if t2 <= t1 {
                x += &z * t2;
                for (mj, rj) in mult.iter_mut().zip(r.iter()) {
                    *mj -= t2 * rj;
                }
                active.push(Some(p));
                mult.push(up + t2);
                break;
            }
            let j = block.expect("finite partial step has a blocking constraint");
            x += &z * t1;
            for (mj, rj) in mult.iter_mut().zip(r.iter()) {
                *mj -= t1 * rj;
            }
            up += t1;
            active.remove(j);
            mult.remove(j);
        }
    }

    // Polish: recompute primal and duals exactly on the final working set.
    let mut bottom = DVector::zeros(active.len());
    for (j, c) in active.iter().enumerate() {
        bottom[j] = match c {
            None => red.total_load,
            Some(p) => red.rhs[*p],
        };
    }
    if let Some((xs, r)) = red.solve_kkt(&active, &(-&red.q), &bottom) {
        x = xs;
        mult = r.iter().map(|v| -v).collect();
    }

    let mut point = KktPoint::zeros(&pu);
    let mut working_set = Vec::new();
    let mut nu = 0.0;
    for (c, &u) in active.iter().zip(&mult) {
        match c {
            None => nu = u,
            Some(p) => {
                let con = Constraint::from_ordinal(*p, ng, nl);
                let u = u.max(0.0);
                match con {
                    Constraint::GenUpper(n) => point.mu_gen_hi[n] = u,
                    Constraint::GenLower(n) => point.mu_gen_lo[n] = u,
                    Constraint::LineForward(l) => point.mu_fwd[l] = u,
                    Constraint::LineReverse(l) => point.mu_rev[l] = u,
                }
                working_set.push(con);
            }
        }
    }
    working_set.sort();

    let pg: Vec<f64> = (0..ng)
        .map(|n| {
            let g = &pu.generators[n];
            x[n].clamp(g.pmin, g.pmax)
        })
        .collect();
    let net_mu = DVector::from_iterator(nl, (0..nl).map(|l| point.mu_fwd[l] - point.mu_rev[l]));
    let lambda = DVector::from_element(nb, nu) - shift.tr_mul(&net_mu);
    let injection = &gen_inc * DVector::from_column_slice(&pg) - &loads;
    let theta = angle_sensitivity(&pu, &mats) * injection;

    point.pg = pg;
    point.theta = theta.iter().copied().collect();
    point.lambda = lambda.iter().copied().collect();
    let objective = pu.objective(&point.pg);
    Ok(OracleSolution {
        point,
        objective,
        working_set,
    })
}
