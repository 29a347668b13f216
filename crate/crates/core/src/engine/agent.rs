//! Bus-local state, messages and update rules.
//!
//! Functions here see only a bus's [`LocalView`], its own [`AgentState`] and
//! the [`Inbox`] of messages from adjacent buses.

use serde::{Deserialize, Serialize};

use super::{EngineError, TuningParams};
use crate::model::GridCase;

/// One incident line as seen from a bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    /// Line index in the case.
    pub line: usize,
    /// Bus index at the other end.
    pub neighbor: usize,
    /// `1/X_ij`.
    pub susceptance: f64,
    /// Flow limit, per-unit.
    pub limit: f64,
    /// True when this bus is the line's sending end, so the owned multiplier
    /// is the line's forward one.
    pub outgoing_is_forward: bool,
}

/// A generator's private data, known only to its bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGenerator {
    /// Generator index in the case.
    pub index: usize,
    /// `2a`, $/MWh per per-unit.
    pub slope: f64,
    /// `b`, $/MWh.
    pub intercept: f64,
    pub pmin: f64,
    pub pmax: f64,
}

/// What bus `bus` knows about the network: its load, its generators and its
/// incident lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalView {
    pub bus: usize,
    /// Per-unit.
    pub load: f64,
    pub is_slack: bool,
    pub ports: Vec<Port>,
    pub generators: Vec<LocalGenerator>,
}

impl LocalView {
    /// Builds the view of bus `bus` from a per-unit case.
    pub fn from_case(case: &GridCase, bus: usize) -> Self {
        let case = case.per_unit();
        let ports = case
            .lines_at(bus)
            .map(|l| {
                let line = &case.lines[l];
                Port {
                    line: l,
                    neighbor: line.other_end(bus),
                    susceptance: line.susceptance(),
                    limit: line.limit,
                    outgoing_is_forward: line.from == bus,
                }
            })
            .collect();
        let generators = case
            .generators_at(bus)
            .map(|n| {
                let g = &case.generators[n];
                LocalGenerator {
                    index: n,
                    slope: case.cost_slope(n),
                    intercept: case.cost_intercept(n),
                    pmin: g.pmin,
                    pmax: g.pmax,
                }
            })
            .collect();
        LocalView {
            bus,
            load: case.buses[bus].load,
            is_slack: case.buses[bus].is_slack,
            ports,
            generators,
        }
    }
}

/// Iterate of one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// $/MWh.
    pub lambda: f64,
    /// Radians.
    pub theta: f64,
    /// Owned multiplier `μ_ij` per port, in port order.
    pub mu_out: Vec<f64>,
    /// Per local generator, per-unit.
    pub pg: Vec<f64>,
}

/// The only data that crosses a bus boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborMessage {
    /// One-based id of the sending bus.
    pub sender: usize,
    pub lambda: f64,
    pub theta: f64,
    /// The sender's multiplier on the shared line, in the direction from the
    /// sender toward the receiver.
    pub mu_toward_receiver: f64,
}

/// Messages received by a bus in one round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inbox {
    messages: Vec<NeighborMessage>,
}

impl Inbox {
    pub fn new(messages: Vec<NeighborMessage>) -> Self {
        Inbox { messages }
    }

    pub fn messages(&self) -> &[NeighborMessage] {
        &self.messages
    }

    /// The message from the neighbor behind `port`.
    pub fn from_port(&self, view: &LocalView, port: &Port) -> Result<&NeighborMessage, EngineError> {
        self.messages
            .iter()
            .find(|m| m.sender == port.neighbor + 1)
            .ok_or(EngineError::MissingMessage {
                bus: view.bus + 1,
                neighbor: port.neighbor + 1,
            })
    }
}

/// Local balance residual
/// `g_i = −Σ P_Gn + P_L_i + Σ (θ_i − θ_j)/X_ij`, per-unit.
pub fn balance_residual(
    view: &LocalView,
    own: &AgentState,
    inbox: &Inbox,
) -> Result<f64, EngineError> {
    let mut g = view.load - own.pg.iter().sum::<f64>();
    for port in &view.ports {
        let msg = inbox.from_port(view, port)?;
        g += port.susceptance * (own.theta - msg.theta);
    }
    Ok(g)
}

/// Price update: `λ_i − β·[Σ (λ_i − λ_j)/X_ij + Σ (μ_ij − μ_ji)/X_ij] + α·g_i`.
pub fn update_lambda(
    view: &LocalView,
    own: &AgentState,
    inbox: &Inbox,
    params: &TuningParams,
) -> Result<f64, EngineError> {
    let mut coupling = 0.0;
    for (p, port) in view.ports.iter().enumerate() {
        let msg = inbox.from_port(view, port)?;
        coupling += port.susceptance
            * ((own.lambda - msg.lambda) + (own.mu_out[p] - msg.mu_toward_receiver));
    }
    let g = balance_residual(view, own, inbox)?;
    Ok(own.lambda - params.beta * coupling + params.alpha * g)
}

/// Dispatch at price `lambda`: `clamp((λ − b)/(2a), pmin, pmax)`.
pub fn update_pg(lambda: f64, gen: &LocalGenerator) -> f64 {
    ((lambda - gen.intercept) / gen.slope).clamp(gen.pmin, gen.pmax)
}

/// Angle update `θ_i − γ·g_i`; a pinned slack bus stays at 0.
pub fn update_theta(
    view: &LocalView,
    own: &AgentState,
    inbox: &Inbox,
    params: &TuningParams,
) -> Result<f64, EngineError> {
    if view.is_slack && params.pin_slack {
        return Ok(0.0);
    }
    let g = balance_residual(view, own, inbox)?;
    Ok(own.theta - params.gamma * g)
}

/// Owned multiplier update `max(0, μ_ij − δ·(P̄_ij − (θ_i − θ_j)/X_ij))`.
pub fn update_mu_owned(mu_ij: f64, theta_i: f64, theta_j: f64, port: &Port, delta: f64) -> f64 {
    let flow = port.susceptance * (theta_i - theta_j);
    (mu_ij - delta * (port.limit - flow)).max(0.0)
}

/// Both directions of a line's multipliers; bus `i` computes the first and
/// bus `j` the second.
pub fn update_mu(
    mu_ij: f64,
    mu_ji: f64,
    theta_i: f64,
    theta_j: f64,
    port: &Port,
    delta: f64,
) -> (f64, f64) {
    let flow = port.susceptance * (theta_i - theta_j);
    (
        (mu_ij - delta * (port.limit - flow)).max(0.0),
        (mu_ji - delta * (port.limit + flow)).max(0.0),
    )
}

/// One synchronous update: every right-hand side uses round-`k` values.
pub(crate) fn step_synchronous(
    view: &LocalView,
    own: &AgentState,
    inbox: &Inbox,
    params: &TuningParams,
) -> Result<AgentState, EngineError> {
    let lambda = update_lambda(view, own, inbox, params)?;
    let theta = update_theta(view, own, inbox, params)?;
    let pg = view
        .generators
        .iter()
        .map(|g| update_pg(own.lambda, g))
        .collect();
    let mut mu_out = Vec::with_capacity(view.ports.len());
    for (p, port) in view.ports.iter().enumerate() {
        let msg = inbox.from_port(view, port)?;
        mu_out.push(update_mu_owned(own.mu_out[p], own.theta, msg.theta, port, params.delta));
    }
    Ok(AgentState {
        lambda,
        theta,
        mu_out,
        pg,
    })
}

/// One serial update: price first, then dispatch at the new price, then the
/// angle with the new dispatch, then multipliers with the new angle.
pub(crate) fn step_serial(
    view: &LocalView,
    own: &AgentState,
    inbox: &Inbox,
    params: &TuningParams,
) -> Result<AgentState, EngineError> {
    let mut next = own.clone();
    next.lambda = update_lambda(view, own, inbox, params)?;
    next.pg = view
        .generators
        .iter()
        .map(|g| update_pg(next.lambda, g))
        .collect();
    next.theta = update_theta(view, &next, inbox, params)?;
    for (p, port) in view.ports.iter().enumerate() {
        let msg = inbox.from_port(view, port)?;
        next.mu_out[p] = update_mu_owned(own.mu_out[p], next.theta, msg.theta, port, params.delta);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn port() -> Port {
        Port {
            line: 0,
            neighbor: 1,
            susceptance: 10.0,
            limit: 1.0,
            outgoing_is_forward: true,
        }
    }

    fn view(load: f64) -> LocalView {
        LocalView {
            bus: 0,
            load,
            is_slack: false,
            ports: vec![port()],
            generators: vec![],
        }
    }

    fn msg(lambda: f64, theta: f64, mu: f64) -> Inbox {
        Inbox::new(vec![NeighborMessage {
            sender: 2,
            lambda,
            theta,
            mu_toward_receiver: mu,
        }])
    }

    fn state(lambda: f64, theta: f64) -> AgentState {
        AgentState {
            lambda,
            theta,
            mu_out: vec![0.0],
            pg: vec![],
        }
    }

    fn gen() -> LocalGenerator {
        // a = 0.5 $/MW²h, b = 10 $/MWh, [0, 100] MW on a 1 MVA base
        LocalGenerator {
            index: 0,
            slope: 1.0,
            intercept: 10.0,
            pmin: 0.0,
            pmax: 100.0,
        }
    }

    #[test]
    fn lambda_unchanged_at_consensus() {
        let p = TuningParams::new(0.3, 0.2, 0.1, 0.1);
        let l = update_lambda(&view(0.0), &state(7.0, 0.0), &msg(7.0, 0.0, 0.0), &p).unwrap();
        assert_eq!(l, 7.0);
    }

    #[test]
    fn lambda_single_coupling_term() {
        let p = TuningParams::new(0.3, 0.01, 0.1, 0.1);
        let l = update_lambda(&view(0.0), &state(10.0, 0.0), &msg(12.0, 0.0, 0.0), &p).unwrap();
        assert!((l - 10.2).abs() < 1e-12);
    }

    #[test]
    fn lambda_falls_on_surplus() {
        let p = TuningParams::new(0.3, 0.01, 0.1, 0.1);
        let mut own = state(10.0, 0.0);
        own.pg = vec![0.4];
        let mut v = view(0.1);
        v.generators.push(gen());
        let l = update_lambda(&v, &own, &msg(10.0, 0.0, 0.0), &p).unwrap();
        assert!(l < 10.0);
    }

    #[test]
    fn pg_examples() {
        assert_eq!(update_pg(10.0, &gen()), 0.0);
        assert_eq!(update_pg(12.0, &gen()), 2.0);
        assert_eq!(update_pg(1000.0, &gen()), 100.0);
    }

    #[test]
    fn theta_rules() {
        let p = TuningParams::new(0.3, 0.01, 0.1, 0.1);
        // balanced: outflow 10·(0.05 − 0) = 0.5 equals generation 0.5
        let mut v = view(0.0);
        v.generators.push(gen());
        let mut own = state(10.0, 0.05);
        own.pg = vec![0.5];
        assert_eq!(update_theta(&v, &own, &msg(0.0, 0.0, 0.0), &p).unwrap(), 0.05);
        // deficit lowers the angle
        let t = update_theta(&view(0.5), &state(10.0, 0.0), &msg(0.0, 0.0, 0.0), &p).unwrap();
        assert!(t < 0.0);
        let mut slack = view(0.5);
        slack.is_slack = true;
        assert_eq!(update_theta(&slack, &state(3.0, 0.2), &msg(9.0, -1.0, 4.0), &p).unwrap(), 0.0);
    }

    #[test]
    fn mu_rules() {
        let p = port();
        // flow 0.5 below limit 1
        assert_eq!(update_mu_owned(0.0, 0.05, 0.0, &p, 0.3), 0.0);
        // flow exactly at limit
        assert_eq!(update_mu_owned(0.5, 0.1, 0.0, &p, 0.3), 0.5);
        // flow 2 above limit
        assert!(update_mu_owned(0.5, 0.2, 0.0, &p, 0.3) > 0.5);
        let (f, r) = update_mu(0.5, 0.5, 0.2, 0.0, &p, 0.1);
        assert!((f - 0.6).abs() < 1e-12);
        assert!((r - 0.2).abs() < 1e-12);
    }

    #[test]
    fn missing_message() {
        let p = TuningParams::new(0.3, 0.01, 0.1, 0.1);
        assert_eq!(
            update_lambda(&view(0.0), &state(1.0, 0.0), &Inbox::default(), &p),
            Err(EngineError::MissingMessage { bus: 1, neighbor: 2 })
        );
    }
}
