//! File formats: trace CSV with a JSON column manifest, solution JSON,
//! certificate JSON and sweep CSV. All powers are in MW, prices and
//! multipliers in $/MWh, angles in radians.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cert::{Certificate, TuneRow};
use crate::engine::{Layout, RunTrace, TuningParams};
use crate::model::GridCase;
use crate::oracle::{Constraint, OracleSolution};
use crate::report::{binding_lines, BindingLine, BINDING_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub quantity: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub columns: Vec<ColumnInfo>,
    pub params: TuningParams,
    pub dims: Layout,
    pub base_mva: f64,
    pub record_stride: usize,
}

fn column(name: String, quantity: &str, unit: &str) -> ColumnInfo {
    ColumnInfo {
        name,
        quantity: quantity.into(),
        unit: unit.into(),
    }
}

/// Column manifest of [`write_trace_csv`].
pub fn trace_manifest(case: &GridCase, trace: &RunTrace) -> TraceManifest {
    let pu = case.per_unit();
    let mut columns = vec![
        column("k".into(), "iteration", "-"),
        column("res".into(), "sum of absolute bus balance residuals", "MW"),
        column("rel".into(), "relative objective gap (blank without a reference)", "-"),
    ];
    for b in &pu.buses {
        columns.push(column(format!("lambda_{}", b.id), "bus price", "$/MWh"));
    }
    for b in &pu.buses {
        columns.push(column(format!("theta_{}", b.id), "bus angle", "rad"));
    }
    for g in &pu.generators {
        columns.push(column(format!("pg_{}", g.id), "generator output", "MW"));
    }
    for line in &pu.lines {
        columns.push(column(
            format!("mu_{}_{}", line.from + 1, line.to + 1),
            "flow limit multiplier",
            "$/MWh",
        ));
    }
    for line in &pu.lines {
        columns.push(column(
            format!("mu_{}_{}", line.to + 1, line.from + 1),
            "flow limit multiplier",
            "$/MWh",
        ));
    }
    TraceManifest {
        columns,
        params: trace.params,
        dims: trace.layout,
        base_mva: pu.base_mva,
        record_stride: trace.record_stride,
    }
}

/// One row per recorded iterate.
pub fn write_trace_csv<W: Write>(case: &GridCase, trace: &RunTrace, out: W) -> csv::Result<()> {
    let manifest = trace_manifest(case, trace);
    let s = case.per_unit().base_mva;
    let l = trace.layout;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(manifest.columns.iter().map(|c| c.name.as_str()))?;
    for r in &trace.records {
        let mut row: Vec<String> = Vec::with_capacity(manifest.columns.len());
        row.push(r.k.to_string());
        row.push((r.res * s).to_string());
        row.push(r.rel.map(|v| v.to_string()).unwrap_or_default());
        let x = &r.state;
        let values = x[..2 * l.n_buses]
            .iter()
            .copied()
            .chain(x[l.pg(0)..l.pg(0) + l.n_generators].iter().map(|v| v * s))
            .chain(x[l.mu_fwd(0)..l.mu_fwd(0) + 2 * l.n_lines].iter().copied());
        row.extend(values.map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Centralized solution in MW and $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub objective: f64,
    pub pg: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu_fwd: Vec<f64>,
    pub mu_rev: Vec<f64>,
    pub mu_gen_hi: Vec<f64>,
    pub mu_gen_lo: Vec<f64>,
    pub flows: Vec<f64>,
    pub binding_lines: Vec<BindingLine>,
    pub working_set: Vec<Constraint>,
}

pub fn solution_document(case: &GridCase, sol: &OracleSolution) -> SolutionDocument {
    let pu = case.per_unit();
    let s = pu.base_mva;
    let p = &sol.point;
    SolutionDocument {
        objective: sol.objective,
        pg: p.pg.iter().map(|v| v * s).collect(),
        theta: p.theta.clone(),
        lambda: p.lambda.clone(),
        mu_fwd: p.mu_fwd.clone(),
        mu_rev: p.mu_rev.clone(),
        mu_gen_hi: p.mu_gen_hi.clone(),
        mu_gen_lo: p.mu_gen_lo.clone(),
        flows: crate::oracle::line_flows(&pu, &p.theta)
            .into_iter()
            .map(|f| f * s)
            .collect(),
        binding_lines: binding_lines(&pu, &p.mu_fwd, &p.mu_rev, BINDING_TOL),
        working_set: sol.working_set.clone(),
    }
}

/// One row per grid point.
pub fn write_sweep_csv<W: Write>(rows: &[TuneRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha",
        "beta",
        "gamma",
        "delta",
        "norm_1",
        "norm_2",
        "norm_inf",
        "spectral_radius",
        "certified",
        "empirical_iters",
        "final_rel",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let c: &Certificate = &r.certificate;
        w.write_record([
            r.params.alpha.to_string(),
            r.params.beta.to_string(),
            r.params.gamma.to_string(),
            r.params.delta.to_string(),
            c.norms.l1.to_string(),
            opt(c.norms.l2),
            c.norms.linf.to_string(),
            opt(c.spectral_radius),
            c.certified.to_string(),
            r.empirical_iters.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.final_rel),
        ])?;
    }
    w.flush()?;
    Ok(())
}
