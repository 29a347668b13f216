//! Grid data model: buses, lines, generators and the case document format.
//!
//! A [`GridCase`] is immutable once built. Bus, line and generator references
//! are zero-based positions into the case's vectors; the one-based ids used in
//! case documents and exports are `index + 1`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default system base in MVA.
pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed case document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid case at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl CaseError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        CaseError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of a validation error, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            CaseError::Validation { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Unit system a case is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Powers in MW, costs in $/MWh and $/MW²h.
    Mw,
    /// Powers in per-unit on `base_mva`, `a` in $/pu²h, `b` in $/pu·h.
    PerUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Normalized one-based id; always `index + 1`.
    pub id: usize,
    pub load: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    /// Bus index of the sending end.
    pub from: usize,
    /// Bus index of the receiving end.
    pub to: usize,
    /// Series reactance, per-unit.
    pub reactance: f64,
    pub limit: f64,
}

impl Line {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }

    /// Index of the bus at the other end, given one endpoint.
    pub fn other_end(&self, bus: usize) -> usize {
        if bus == self.from {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// One-based id in document order.
    pub id: usize,
    /// Bus index.
    pub bus: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub pmin: f64,
    pub pmax: f64,
}

impl Generator {
    pub fn cost(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: Option<String>,
    pub base_mva: f64,
    pub units: Units,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
}

// ---------------------------------------------------------------------------
// Case document (wire format)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(alias = "gens")]
    pub generators: Vec<GeneratorRecord>,
}

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: i64,
    #[serde(default)]
    pub load: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: i64,
    pub to: i64,
    pub x: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub bus: i64,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub pmin: f64,
    pub pmax: f64,
}

/// Parses and validates a case document from a reader.
pub fn load_case<R: Read>(reader: R) -> Result<GridCase, CaseError> {
    let doc: CaseDocument = serde_json::from_reader(reader)?;
    GridCase::from_document(doc)
}

pub fn load_case_str(text: &str) -> Result<GridCase, CaseError> {
    let doc: CaseDocument = serde_json::from_str(text)?;
    GridCase::from_document(doc)
}

pub fn load_case_path(path: impl AsRef<Path>) -> Result<GridCase, CaseError> {
    let file = std::fs::File::open(path)?;
    load_case(std::io::BufReader::new(file))
}

fn check_finite(path: String, value: f64) -> Result<(), CaseError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CaseError::invalid(path, "value must be finite"))
    }
}

impl GridCase {
    /// Validates a document and builds the case (in MW units).
    ///
    /// Bus ids are normalized to `1..=N` in ascending order of the document
    /// ids. Parallel lines are merged into one equivalent line whose
    /// susceptance and limit are the sums of the originals.
    pub fn from_document(doc: CaseDocument) -> Result<Self, CaseError> {
        if !(doc.base_mva.is_finite() && doc.base_mva > 0.0) {
            return Err(CaseError::invalid("base_mva", "must be positive"));
        }
        if doc.buses.is_empty() {
            return Err(CaseError::invalid("buses", "case has no buses"));
        }

        let mut order: Vec<usize> = (0..doc.buses.len()).collect();
        order.sort_by_key(|&k| doc.buses[k].id);
        let mut index_of: HashMap<i64, usize> = HashMap::with_capacity(doc.buses.len());
        for (new_index, &k) in order.iter().enumerate() {
            if index_of.insert(doc.buses[k].id, new_index).is_some() {
                return Err(CaseError::invalid(
                    format!("buses[{k}].id"),
                    format!("duplicate bus id {}", doc.buses[k].id),
                ));
            }
        }

        let mut buses = Vec::with_capacity(doc.buses.len());
        let mut slack_flags = Vec::new();
        for (new_index, &k) in order.iter().enumerate() {
            let rec = &doc.buses[k];
            check_finite(format!("buses[{k}].load"), rec.load)?;
            if rec.load < 0.0 {
                return Err(CaseError::invalid(
                    format!("buses[{k}].load"),
                    "load must be non-negative",
                ));
            }
            if rec.slack == Some(true) {
                slack_flags.push(k);
            }
            buses.push(Bus {
                id: new_index + 1,
                load: rec.load,
                is_slack: rec.slack == Some(true),
            });
        }
        match slack_flags.len() {
            0 => buses[0].is_slack = true,
            1 => {}
            _ => {
                return Err(CaseError::invalid(
                    format!("buses[{}].slack", slack_flags[1]),
                    "more than one slack bus",
                ))
            }
        }

        let resolve = |id: i64, path: String| {
            index_of
                .get(&id)
                .copied()
                .ok_or_else(|| CaseError::invalid(path, format!("unknown bus id {id}")))
        };

        // Merge parallel lines, keeping the orientation of the first occurrence.
        let mut lines: Vec<Line> = Vec::with_capacity(doc.lines.len());
        let mut pair_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (k, rec) in doc.lines.iter().enumerate() {
            let from = resolve(rec.from, format!("lines[{k}].from"))?;
            let to = resolve(rec.to, format!("lines[{k}].to"))?;
            if from == to {
                return Err(CaseError::invalid(
                    format!("lines[{k}].to"),
                    "line endpoints must differ",
                ));
            }
            check_finite(format!("lines[{k}].x"), rec.x)?;
            if rec.x <= 0.0 {
                return Err(CaseError::invalid(
                    format!("lines[{k}].x"),
                    "reactance must be positive",
                ));
            }
            check_finite(format!("lines[{k}].limit"), rec.limit)?;
            if rec.limit <= 0.0 {
                return Err(CaseError::invalid(
                    format!("lines[{k}].limit"),
                    "limit must be positive",
                ));
            }
            let key = (from.min(to), from.max(to));
            match pair_index.get(&key) {
                Some(&existing) => {
                    let line = &mut lines[existing];
                    line.reactance = 1.0 / (1.0 / line.reactance + 1.0 / rec.x);
                    line.limit += rec.limit;
                }
                None => {
                    pair_index.insert(key, lines.len());
                    lines.push(Line {
                        from,
                        to,
                        reactance: rec.x,
                        limit: rec.limit,
                    });
                }
            }
        }

        let mut generators = Vec::with_capacity(doc.generators.len());
        for (k, rec) in doc.generators.iter().enumerate() {
            let bus = resolve(rec.bus, format!("generators[{k}].bus"))?;
            for (field, value) in [
                ("a", rec.a),
                ("b", rec.b),
                ("c", rec.c),
                ("pmin", rec.pmin),
                ("pmax", rec.pmax),
            ] {
                check_finite(format!("generators[{k}].{field}"), value)?;
            }
            if rec.a <= 0.0 {
                return Err(CaseError::invalid(
                    format!("generators[{k}].a"),
                    "quadratic cost coefficient must be positive",
                ));
            }
            if rec.pmin > rec.pmax {
                return Err(CaseError::invalid(
                    format!("generators[{k}].pmin"),
                    "pmin exceeds pmax",
                ));
            }
            generators.push(Generator {
                id: k + 1,
                bus,
                a: rec.a,
                b: rec.b,
                c: rec.c,
                pmin: rec.pmin,
                pmax: rec.pmax,
            });
        }

        let case = GridCase {
            name: doc.name,
            base_mva: doc.base_mva,
            units: Units::Mw,
            buses,
            lines,
            generators,
        };
        if !case.is_connected() {
            return Err(CaseError::invalid("lines", "network graph is not connected"));
        }
        Ok(case)
    }

    /// Converts back to the document format (MW units, one-based ids).
    pub fn to_document(&self) -> CaseDocument {
        let mw = self.to_mw();
        CaseDocument {
            name: mw.name.clone(),
            base_mva: mw.base_mva,
            buses: mw
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id as i64,
                    load: b.load,
                    slack: b.is_slack.then_some(true),
                })
                .collect(),
            lines: mw
                .lines
                .iter()
                .map(|l| LineRecord {
                    from: l.from as i64 + 1,
                    to: l.to as i64 + 1,
                    x: l.reactance,
                    limit: l.limit,
                })
                .collect(),
            generators: mw
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    bus: g.bus as i64 + 1,
                    a: g.a,
                    b: g.b,
                    c: g.c,
                    pmin: g.pmin,
                    pmax: g.pmax,
                })
                .collect(),
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Index of the slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_slack)
            .expect("validated case has a slack bus")
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    /// Generator indices located at `bus`.
    pub fn generators_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.generators
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.bus == bus)
            .map(|(n, _)| n)
    }

    /// Line indices incident to `bus`, in line order.
    pub fn lines_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.from == bus || l.to == bus)
            .map(|(l, _)| l)
    }

    /// Buses adjacent to `bus`.
    pub fn neighbors(&self, bus: usize) -> Vec<usize> {
        self.lines_at(bus)
            .map(|l| self.lines[l].other_end(bus))
            .collect()
    }

    /// Finds the line joining two buses, in either orientation.
    pub fn line_between(&self, a: usize, b: usize) -> Option<usize> {
        self.lines
            .iter()
            .position(|l| (l.from == a && l.to == b) || (l.from == b && l.to == a))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_buses();
        if n == 0 {
            return false;
        }
        let mut adjacency = vec![Vec::new(); n];
        for line in &self.lines {
            adjacency[line.from].push(line.to);
            adjacency[line.to].push(line.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(bus) = queue.pop_front() {
            for &next in &adjacency[bus] {
                if !seen[next] {
                    seen[next] = true;
                    count += 1;
                    queue.push_back(next);
                }
            }
        }
        count == n
    }

    /// Multiplier converting this case's powers to per-unit.
    fn power_scale(&self) -> f64 {
        match self.units {
            Units::Mw => 1.0,
            Units::PerUnit => self.base_mva,
        }
    }

    /// Slope of generator `n`'s marginal cost, $/MWh per unit of this case's power.
    pub fn cost_slope(&self, n: usize) -> f64 {
        2.0 * self.generators[n].a / self.power_scale()
    }

    /// Marginal cost of generator `n` at zero output, $/MWh.
    pub fn cost_intercept(&self, n: usize) -> f64 {
        self.generators[n].b / self.power_scale()
    }

    /// Marginal cost of generator `n` at output `p`, $/MWh.
    pub fn marginal_cost(&self, n: usize, p: f64) -> f64 {
        self.cost_slope(n) * p + self.cost_intercept(n)
    }

    /// Generation cost in $/h for a dispatch expressed in this case's units.
    pub fn objective(&self, pg: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(pg)
            .map(|(g, &p)| g.cost(p))
            .sum()
    }

    /// Returns a copy with every line limit multiplied by `factor`.
    pub fn scale_line_limits(&self, factor: f64) -> Result<GridCase, CaseError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(CaseError::Argument(format!(
                "line limit scale must be positive, got {factor}"
            )));
        }
        let mut scaled = self.clone();
        for line in &mut scaled.lines {
            line.limit *= factor;
        }
        Ok(scaled)
    }

    /// Converts a MW case to per-unit on `base_mva`. Per-unit cases are returned unchanged.
    pub fn to_internal_units(&self) -> Result<GridCase, CaseError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(CaseError::Argument(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if self.units == Units::PerUnit {
            return Ok(self.clone());
        }
        let s = self.base_mva;
        let mut pu = self.clone();
        pu.units = Units::PerUnit;
        for bus in &mut pu.buses {
            bus.load /= s;
        }
        for line in &mut pu.lines {
            line.limit /= s;
        }
        for g in &mut pu.generators {
            g.a *= s * s;
            g.b *= s;
            g.pmin /= s;
            g.pmax /= s;
        }
        Ok(pu)
    }

    /// Inverse of [`GridCase::to_internal_units`].
    pub fn from_internal_units(&self) -> Result<GridCase, CaseError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(CaseError::Argument(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if self.units == Units::Mw {
            return Ok(self.clone());
        }
        let s = self.base_mva;
        let mut mw = self.clone();
        mw.units = Units::Mw;
        for bus in &mut mw.buses {
            bus.load *= s;
        }
        for line in &mut mw.lines {
            line.limit *= s;
        }
        for g in &mut mw.generators {
            g.a /= s * s;
            g.b /= s;
            g.pmin *= s;
            g.pmax *= s;
        }
        Ok(mw)
    }

    /// Per-unit view of the case; infallible for validated cases.
    pub fn per_unit(&self) -> GridCase {
        self.to_internal_units()
            .expect("validated case has a positive base")
    }

    pub fn to_mw(&self) -> GridCase {
        self.from_internal_units()
            .expect("validated case has a positive base")
    }

    /// Converts a power in this case's units to MW.
    pub fn power_to_mw(&self, p: f64) -> f64 {
        p * self.power_scale()
    }

    /// Relabels buses: old bus `i` becomes bus `perm[i]`.
    ///
    /// Lines and generators keep their order; only bus references change.
    pub fn relabel(&self, perm: &[usize]) -> Result<GridCase, CaseError> {
        let n = self.n_buses();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(CaseError::Argument("relabel needs a permutation of the bus indices".into()));
        }
        let mut out = self.clone();
        for (old, bus) in self.buses.iter().enumerate() {
            out.buses[perm[old]] = Bus {
                id: perm[old] + 1,
                ..bus.clone()
            };
        }
        for line in &mut out.lines {
            line.from = perm[line.from];
            line.to = perm[line.to];
        }
        for g in &mut out.generators {
            g.bus = perm[g.bus];
        }
        Ok(out)
    }
}
