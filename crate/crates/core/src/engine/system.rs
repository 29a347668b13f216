//! Whole-network state, message routing and round execution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{step_serial, step_synchronous, AgentState, Inbox, LocalView, NeighborMessage};
use super::{EngineError, TuningParams, UpdateMode};
use crate::model::GridCase;
use crate::oracle::KktPoint;

/// Bus count from which synchronous rounds run on the thread pool.
const PARALLEL_BUSES: usize = 64;

/// Index map of the stacked iterate
/// `[λ (N_B) | θ (N_B) | μ_fwd (N_L) | μ_rev (N_L) | P_G (N_G)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_buses: usize,
    pub n_lines: usize,
    pub n_generators: usize,
}

impl Layout {
    pub fn of(case: &GridCase) -> Self {
        Layout {
            n_buses: case.n_buses(),
            n_lines: case.n_lines(),
            n_generators: case.n_generators(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_buses + 2 * self.n_lines + self.n_generators
    }

    pub fn lambda(&self, i: usize) -> usize {
        i
    }

    pub fn theta(&self, i: usize) -> usize {
        self.n_buses + i
    }

    pub fn mu_fwd(&self, l: usize) -> usize {
        2 * self.n_buses + l
    }

    pub fn mu_rev(&self, l: usize) -> usize {
        2 * self.n_buses + self.n_lines + l
    }

    pub fn pg(&self, n: usize) -> usize {
        2 * self.n_buses + 2 * self.n_lines + n
    }

    /// Block sizes `(λ, θ, μ, P_G)`.
    pub fn blocks(&self) -> (usize, usize, usize, usize) {
        (
            self.n_buses,
            self.n_buses,
            2 * self.n_lines,
            self.n_generators,
        )
    }
}

/// Iteration counter plus every bus's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub k: usize,
    pub agents: Vec<AgentState>,
}

/// A case prepared for distributed iteration: per-bus views and routing.
#[derive(Debug, Clone)]
pub struct Engine {
    case: GridCase,
    views: Vec<LocalView>,
    /// `mirror[i][p]` is the port index, at the neighbor behind port `p` of
    /// bus `i`, of the same line.
    mirror: Vec<Vec<usize>>,
    layout: Layout,
}

impl Engine {
    pub fn new(case: &GridCase) -> Self {
        let case = case.per_unit();
        let views: Vec<LocalView> = (0..case.n_buses())
            .map(|i| LocalView::from_case(&case, i))
            .collect();
        let mirror = views
            .iter()
            .map(|v| {
                v.ports
                    .iter()
                    .map(|port| {
                        views[port.neighbor]
                            .ports
                            .iter()
                            .position(|q| q.line == port.line)
                            .expect("each line appears at both endpoints")
                    })
                    .collect()
            })
            .collect();
        let layout = Layout::of(&case);
        Engine {
            case,
            views,
            mirror,
            layout,
        }
    }

    /// Per-unit copy of the case.
    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn views(&self) -> &[LocalView] {
        &self.views
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Cold start: every λ at 10 $/MWh, everything else zero.
    pub fn init_cold(&self) -> SystemState {
        self.init_uniform(10.0)
    }

    pub fn init_uniform(&self, lambda: f64) -> SystemState {
        SystemState {
            k: 0,
            agents: self
                .views
                .iter()
                .map(|v| AgentState {
                    lambda,
                    theta: 0.0,
                    mu_out: vec![0.0; v.ports.len()],
                    pg: vec![0.0; v.generators.len()],
                })
                .collect(),
        }
    }

    /// State holding exactly the values of a per-unit candidate point.
    pub fn init_from(&self, point: &KktPoint) -> SystemState {
        let mut x = vec![0.0; self.layout.dim()];
        let l = self.layout;
        for i in 0..l.n_buses {
            x[l.lambda(i)] = point.lambda[i];
            x[l.theta(i)] = point.theta[i];
        }
        for j in 0..l.n_lines {
            x[l.mu_fwd(j)] = point.mu_fwd[j];
            x[l.mu_rev(j)] = point.mu_rev[j];
        }
        for n in 0..l.n_generators {
            x[l.pg(n)] = point.pg[n];
        }
        self.from_stacked(&x, 0)
    }

    fn check_shape(&self, state: &SystemState) -> Result<(), EngineError> {
        if state.agents.len() != self.views.len() {
            return Err(EngineError::Shape(format!(
                "{} agents for {} buses",
                state.agents.len(),
                self.views.len()
            )));
        }
        for (v, a) in self.views.iter().zip(&state.agents) {
            if a.mu_out.len() != v.ports.len() || a.pg.len() != v.generators.len() {
                return Err(EngineError::Shape(format!("bus {} state size", v.bus + 1)));
            }
        }
        Ok(())
    }

    /// Message bus `from` sends over its port `port`.
    fn message(&self, agents: &[AgentState], from: usize, port: usize) -> NeighborMessage {
        let a = &agents[from];
        NeighborMessage {
            sender: from + 1,
            lambda: a.lambda,
            theta: a.theta,
            mu_toward_receiver: a.mu_out[port],
        }
    }

    /// Messages addressed to bus `bus`, built from the given bus states.
    pub fn inbox(&self, agents: &[AgentState], bus: usize) -> Inbox {
        Inbox::new(
            self.views[bus]
                .ports
                .iter()
                .zip(&self.mirror[bus])
                .map(|(port, &back)| self.message(agents, port.neighbor, back))
                .collect(),
        )
    }

    /// Every message of one round as `(receiver index, message)`.
    pub fn round_messages(&self, state: &SystemState) -> Vec<(usize, NeighborMessage)> {
        (0..self.views.len())
            .flat_map(|i| {
                self.inbox(&state.agents, i)
                    .messages()
                    .iter()
                    .cloned()
                    .map(move |m| (i, m))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Advances one round.
    pub fn step(&self, state: &SystemState, params: &TuningParams) -> Result<SystemState, EngineError> {
        self.check_shape(state)?;
        let agents = match params.mode {
            UpdateMode::Synchronous => {
                let update = |i: usize| {
                    let inbox = self.inbox(&state.agents, i);
                    step_synchronous(&self.views[i], &state.agents[i], &inbox, params)
                };
                if self.views.len() >= PARALLEL_BUSES {
                    (0..self.views.len())
                        .into_par_iter()
                        .map(update)
                        .collect::<Result<Vec<_>, _>>()?
                } else {
                    (0..self.views.len())
                        .map(update)
                        .collect::<Result<Vec<_>, _>>()?
                }
            }
            UpdateMode::Serial => {
                let mut agents = state.agents.clone();
                for i in 0..self.views.len() {
                    let inbox = self.inbox(&agents, i);
                    agents[i] = step_serial(&self.views[i], &agents[i], &inbox, params)?;
                }
                agents
            }
        };
        Ok(SystemState {
            k: state.k + 1,
            agents,
        })
    }

    /// Stacked vector in [`Layout`] order.
    pub fn to_stacked(&self, state: &SystemState) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.dim()];
        for (v, a) in self.views.iter().zip(&state.agents) {
            x[l.lambda(v.bus)] = a.lambda;
            x[l.theta(v.bus)] = a.theta;
            for (port, &mu) in v.ports.iter().zip(&a.mu_out) {
                let idx = if port.outgoing_is_forward {
                    l.mu_fwd(port.line)
                } else {
                    l.mu_rev(port.line)
                };
                x[idx] = mu;
            }
            for (g, &p) in v.generators.iter().zip(&a.pg) {
                x[l.pg(g.index)] = p;
            }
        }
        x
    }

    /// Inverse of [`Engine::to_stacked`].
    pub fn from_stacked(&self, x: &[f64], k: usize) -> SystemState {
        let l = self.layout;
        assert_eq!(x.len(), l.dim(), "stacked vector length");
        let agents = self
            .views
            .iter()
            .map(|v| AgentState {
                lambda: x[l.lambda(v.bus)],
                theta: x[l.theta(v.bus)],
                mu_out: v
                    .ports
                    .iter()
                    .map(|port| {
                        if port.outgoing_is_forward {
                            x[l.mu_fwd(port.line)]
                        } else {
                            x[l.mu_rev(port.line)]
                        }
                    })
                    .collect(),
                pg: v.generators.iter().map(|g| x[l.pg(g.index)]).collect(),
            })
            .collect();
        SystemState { k, agents }
    }

    /// Per-unit candidate point with generator multipliers left at zero.
    pub fn to_point(&self, state: &SystemState) -> KktPoint {
        let l = self.layout;
        let x = self.to_stacked(state);
        KktPoint {
            lambda: x[..l.n_buses].to_vec(),
            theta: x[l.n_buses..2 * l.n_buses].to_vec(),
            mu_fwd: (0..l.n_lines).map(|j| x[l.mu_fwd(j)]).collect(),
            mu_rev: (0..l.n_lines).map(|j| x[l.mu_rev(j)]).collect(),
            pg: (0..l.n_generators).map(|n| x[l.pg(n)]).collect(),
            mu_gen_hi: vec![0.0; l.n_generators],
            mu_gen_lo: vec![0.0; l.n_generators],
        }
    }

    /// Balance residual of every bus, per-unit.
    pub fn residuals(&self, state: &SystemState) -> Vec<f64> {
        (0..self.views.len())
            .map(|i| {
                let inbox = self.inbox(&state.agents, i);
                super::agent::balance_residual(&self.views[i], &state.agents[i], &inbox)
                    .expect("routing delivers every neighbor message")
            })
            .collect()
    }

    /// Generation cost of the state's dispatch, $/h.
    pub fn objective(&self, state: &SystemState) -> f64 {
        let l = self.layout;
        let x = self.to_stacked(state);
        self.case.objective(&x[l.pg(0)..l.pg(0) + l.n_generators])
    }
}

/// One round on `case`, building the routing on the fly.
pub fn step(state: &SystemState, case: &GridCase, params: &TuningParams) -> Result<SystemState, EngineError> {
    Engine::new(case).step(state, params)
}
