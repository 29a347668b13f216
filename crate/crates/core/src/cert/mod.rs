//! Dense form of the synchronous iteration and contraction diagnostics.
//!
//! The synchronous engine round is `X̃(k+1) = P((I − A)·X̃(k) + C)` with `P`
//! clamping dispatch to its limits and flow multipliers to be non-negative.
//! A norm `‖I − A‖_p < 1` for some `p` certifies convergence.

mod tune;

use nalgebra::DMatrix;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Layout, RunTrace, TuningParams, UpdateMode};
use crate::matrices::{build_matrices, generator_incidence, load_vector};
use crate::model::GridCase;

pub use tune::{tune_parameters, ParamGrid, TuneObjective, TuneResult, TuneRow};

/// Relative slack allowed when comparing norms of floating-point results.
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CertError {
    #[error("trace does not match the update system: {0}")]
    Mismatch(String),
}

/// `A` and `C` of the dense iteration for a specific case and step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSystem {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub layout: Option<Layout>,
    pub params: Option<TuningParams>,
    /// Per generator `(pmin, pmax)`, per-unit.
    pub pg_bounds: Vec<(f64, f64)>,
}

/// Assembles the dense update system mirroring the synchronous engine.
///
/// Block rows, in [`Layout`] order:
/// `λ: [βB, −αB, βB_yᵀ, αA_g]`, `θ: [0, γB, 0, −γA_g]`,
/// `μ: [0, −δB_y, 0, 0]`, `P_G: [−A_gᵀ/slope, 0, 0, I]`, with
/// `C = [αP_L; −γP_L; −δ[P̄; P̄]; −intercept/slope]`. With a pinned slack the
/// slack angle row of `A` is the unit row and its offset zero.
pub fn build_update_system(case: &GridCase, params: &TuningParams) -> UpdateSystem {
    let pu = case.per_unit();
    let layout = Layout::of(&pu);
    let (nb, nl, ng) = (layout.n_buses, layout.n_lines, layout.n_generators);
    let m = build_matrices(&pu);
    let ag = generator_incidence(&pu);
    let loads = load_vector(&pu);
    let (alpha, beta, gamma, delta) = (params.alpha, params.beta, params.gamma, params.delta);
    let dim = layout.dim();
    let (ol, ot, om, op) = (0, nb, 2 * nb, 2 * nb + 2 * nl);

    let mut a = DMatrix::zeros(dim, dim);
    let mut c = DVector::zeros(dim);
    a.view_mut((ol, ol), (nb, nb)).copy_from(&(&m.b * beta));
    a.view_mut((ol, ot), (nb, nb)).copy_from(&(&m.b * -alpha));
    a.view_mut((ol, om), (nb, 2 * nl)).copy_from(&(m.by.transpose() * beta));
    a.view_mut((ol, op), (nb, ng)).copy_from(&(&ag * alpha));
    a.view_mut((ot, ot), (nb, nb)).copy_from(&(&m.b * gamma));
    a.view_mut((ot, op), (nb, ng)).copy_from(&(&ag * -gamma));
    a.view_mut((om, ot), (2 * nl, nb)).copy_from(&(&m.by * -delta));
    for n in 0..ng {
        let slope = pu.cost_slope(n);
        a[(op + n, ol + pu.generators[n].bus)] = -1.0 / slope;
        a[(op + n, op + n)] = 1.0;
        c[op + n] = -pu.cost_intercept(n) / slope;
    }
    for i in 0..nb {
        c[ol + i] = alpha * loads[i];
        c[ot + i] = -gamma * loads[i];
    }
    for (l, line) in pu.lines.iter().enumerate() {
        c[om + l] = -delta * line.limit;
        c[om + nl + l] = -delta * line.limit;
    }
    if params.pin_slack {
        let s = ot + pu.slack();
        a.row_mut(s).fill(0.0);
        a[(s, s)] = 1.0;
        c[s] = 0.0;
    }
    UpdateSystem {
        a,
        c,
        layout: Some(layout),
        params: Some(*params),
        pg_bounds: pu.generators.iter().map(|g| (g.pmin, g.pmax)).collect(),
    }
}

impl UpdateSystem {
    /// A system built from an arbitrary square matrix, for diagnostics only.
    pub fn from_matrix(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "update matrix must be square");
        let n = a.nrows();
        UpdateSystem {
            a,
            c: DVector::zeros(n),
            layout: None,
            params: None,
            pg_bounds: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `I − A`.
    pub fn iteration_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.a
    }

    /// Projection onto dispatch limits and non-negative flow multipliers.
    pub fn project(&self, x: &mut [f64]) {
        let Some(l) = self.layout else { return };
        for j in 0..l.n_lines {
            x[l.mu_fwd(j)] = x[l.mu_fwd(j)].max(0.0);
            x[l.mu_rev(j)] = x[l.mu_rev(j)].max(0.0);
        }
        for (n, &(lo, hi)) in self.pg_bounds.iter().enumerate() {
            x[l.pg(n)] = x[l.pg(n)].clamp(lo, hi);
        }
    }

    /// `P((I − A)·x + C)`.
    pub fn dense_step(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let y = &xv - &self.a * &xv + &self.c;
        let mut out: Vec<f64> = y.iter().copied().collect();
        self.project(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L2,
    LInf,
}

impl NormKind {
    pub fn label(self) -> &'static str {
        match self {
            NormKind::L1 => "1",
            NormKind::L2 => "2",
            NormKind::LInf => "inf",
        }
    }

    /// Vector norm of the same kind.
    pub fn vector_norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    /// Largest absolute column sum.
    pub l1: f64,
    /// Largest singular value; absent when the SVD fails.
    pub l2: Option<f64>,
    /// Largest absolute row sum.
    pub linf: f64,
}

impl Norms {
    pub fn get(&self, p: NormKind) -> Option<f64> {
        match p {
            NormKind::L1 => Some(self.l1),
            NormKind::L2 => self.l2,
            NormKind::LInf => Some(self.linf),
        }
    }

    pub fn min(&self) -> f64 {
        [Some(self.l1), self.l2, Some(self.linf)]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub params: Option<TuningParams>,
    pub dims: Option<Layout>,
    /// Norms of `I − A`.
    pub norms: Norms,
    /// `ρ(I − A)`; absent when the eigenvalue iteration did not converge.
    pub spectral_radius: Option<f64>,
    /// Some norm is below one.
    pub certified: bool,
}

impl Certificate {
    /// True unless the eigenvalue computation failed.
    pub fn known(&self) -> bool {
        self.spectral_radius.is_some() && self.norms.l2.is_some()
    }
}

/// Matrix norms of `m` for `p ∈ {1, 2, ∞}`.
pub fn matrix_norms(m: &DMatrix<f64>) -> Norms {
    let l1 = (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let linf = (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let l2 = [1e-15, 1e-13, 1e-11].into_iter().find_map(|eps| {
        m.clone()
            .try_svd(false, false, eps, 10_000)
            .map(|svd| svd.singular_values.iter().fold(0.0, |a: f64, &s| a.max(s)))
    });
    Norms { l1, l2, linf }
}

/// Largest eigenvalue modulus, or `None` if the Schur iteration fails at
/// every convergence threshold tried.
pub fn spectral_radius(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    [1e-14, 1e-12, 1e-10].into_iter().find_map(|eps| {
        let schur = nalgebra::linalg::Schur::try_new(m.clone(), eps, 10_000)?;
        Some(
            schur
                .complex_eigenvalues()
                .iter()
                .fold(0.0, |a: f64, z| a.max(z.norm())),
        )
    })
}

/// Norms and spectral radius of `I − A`.
pub fn evaluate_certificate(sys: &UpdateSystem) -> Certificate {
    let m = sys.iteration_matrix();
    let norms = matrix_norms(&m);
    Certificate {
        params: sys.params,
        dims: sys.layout,
        certified: norms.min() < 1.0,
        norms,
        spectral_radius: spectral_radius(&m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub p: NormKind,
    /// `‖I − A‖_p`.
    pub norm: f64,
    /// Consecutive step pairs compared.
    pub steps_checked: usize,
    /// Largest `‖ΔX̃(k+1)‖ / ‖ΔX̃(k)‖` over pairs with a nonzero denominator.
    pub max_ratio: Option<f64>,
    /// Pairs where `‖ΔX̃(k+1)‖ > ‖I − A‖·‖ΔX̃(k)‖` beyond tolerance.
    pub violations: usize,
    /// No step moved the iterate.
    pub stationary: bool,
    /// Whether the geometric bound `‖ΔX̃(k+1)‖ ≤ ‖I − A‖^k·‖ΔX̃(1)‖` held;
    /// only evaluated when the norm is below one.
    pub cauchy_bound_holds: Option<bool>,
}

impl ContractionReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.cauchy_bound_holds != Some(false)
    }
}

/// Checks the per-step inequality `‖ΔX̃(k+1)‖_p ≤ ‖I − A‖_p·‖ΔX̃(k)‖_p`
/// along a synchronous trace recorded at every iteration.
///
/// Comparisons allow a relative slack of [`REL_TOL`] plus a rounding floor
/// proportional to machine precision and the iterate's magnitude.
pub fn verify_contraction_trace(
    trace: &RunTrace,
    sys: &UpdateSystem,
    p: NormKind,
) -> Result<ContractionReport, CertError> {
    if sys.layout != Some(trace.layout) {
        return Err(CertError::Mismatch("dimensions differ".into()));
    }
    if let Some(params) = sys.params {
        if params.as_array() != trace.params.as_array() || params.pin_slack != trace.params.pin_slack {
            return Err(CertError::Mismatch("tuning parameters differ".into()));
        }
    }
    if trace.params.mode != UpdateMode::Synchronous {
        return Err(CertError::Mismatch("only synchronous traces follow the dense form".into()));
    }
    if trace.record_stride != 1 {
        return Err(CertError::Mismatch("trace must record every iteration".into()));
    }
    let norm = matrix_norms(&sys.iteration_matrix())
        .get(p)
        .ok_or_else(|| CertError::Mismatch("norm unavailable".into()))?;

    let steps: Vec<(f64, f64)> = trace
        .records
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].state.iter().zip(&w[0].state).map(|(a, b)| a - b).collect();
            (p.vector_norm(&d), p.vector_norm(&w[1].state))
        })
        .collect();
    let floor = |scale: f64| 16.0 * f64::EPSILON * (1.0 + norm) * scale.max(1.0);

    let mut max_ratio: Option<f64> = None;
    let mut violations = 0;
    for w in steps.windows(2) {
        let (prev, scale) = w[0];
        let (next, scale2) = w[1];
        if prev > 0.0 {
            let r = next / prev;
            max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
        }
        if next > norm * prev * (1.0 + REL_TOL) + floor(scale.max(scale2)) {
            violations += 1;
        }
    }
    let cauchy_bound_holds = (norm < 1.0 && !steps.is_empty()).then(|| {
        let first = steps[0].0;
        steps.iter().enumerate().all(|(k, &(d, scale))| {
            d <= norm.powi(k as i32) * first * (1.0 + REL_TOL) + floor(scale) * (k as f64 + 1.0)
        })
    });
    Ok(ContractionReport {
        p,
        norm,
        steps_checked: steps.len().saturating_sub(1),
        max_ratio,
        violations,
        stationary: steps.iter().all(|&(d, _)| d == 0.0),
        cauchy_bound_holds,
    })
}
