//! Network matrices: bus susceptance `B`, line incidence and the stacked
//! directed-flow operator `By`.

use nalgebra::{DMatrix, DVector};

use crate::model::GridCase;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrices {
    /// `N_B × N_B`, `B_ii = Σ 1/X_ij`, `B_ij = −1/X_ij`.
    pub b: DMatrix<f64>,
    /// `N_B × N_L`, +1 at the from-bus and −1 at the to-bus of each line.
    pub incidence: DMatrix<f64>,
    /// `2N_L × N_B`: rows `0..N_L` map angles to forward flows, rows
    /// `N_L..2N_L` to reverse flows.
    pub by: DMatrix<f64>,
}

pub fn build_matrices(case: &GridCase) -> NetworkMatrices {
    let nb = case.n_buses();
    let nl = case.n_lines();
    let mut b = DMatrix::zeros(nb, nb);
    let mut incidence = DMatrix::zeros(nb, nl);
    let mut by = DMatrix::zeros(2 * nl, nb);
    for (l, line) in case.lines.iter().enumerate() {
        let y = line.susceptance();
        b[(line.from, line.from)] += y;
        b[(line.to, line.to)] += y;
        b[(line.from, line.to)] -= y;
        b[(line.to, line.from)] -= y;
        incidence[(line.from, l)] = 1.0;
        incidence[(line.to, l)] = -1.0;
        by[(l, line.from)] = y;
        by[(l, line.to)] = -y;
        by[(nl + l, line.from)] = -y;
        by[(nl + l, line.to)] = y;
    }
    NetworkMatrices { b, incidence, by }
}

/// `N_B × N_G` map from generator outputs to bus injections.
pub fn generator_incidence(case: &GridCase) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(case.n_buses(), case.n_generators());
    for (n, g) in case.generators.iter().enumerate() {
        m[(g.bus, n)] = 1.0;
    }
    m
}

/// Bus loads as a vector, in the case's units.
pub fn load_vector(case: &GridCase) -> DVector<f64> {
    DVector::from_iterator(case.n_buses(), case.buses.iter().map(|b| b.load))
}

/// Power transfer distribution factors with the slack bus absorbing the
/// balance: `flow = ptdf · injection`. The slack column is zero.
pub fn ptdf(case: &GridCase, matrices: &NetworkMatrices) -> DMatrix<f64> {
    let angles = angle_sensitivity(case, matrices);
    let nl = case.n_lines();
    matrices.by.rows(0, nl) * angles
}

/// `N_B × N_B` map from injections to angles with `θ_slack = 0`.
pub fn angle_sensitivity(case: &GridCase, matrices: &NetworkMatrices) -> DMatrix<f64> {
    let nb = case.n_buses();
    let slack = case.slack();
    let keep: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let reduced = matrices.b.select_rows(&keep).select_columns(&keep);
    let inverse = reduced
        .cholesky()
        .expect("reduced susceptance matrix of a connected network is positive definite")
        .inverse();
    let mut full = DMatrix::zeros(nb, nb);
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            full[(i, j)] = inverse[(r, c)];
        }
    }
    full
}
