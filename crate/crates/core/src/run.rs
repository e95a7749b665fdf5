//! Round execution: one query sweep, one response sweep, one optimizer step
//! per player, with expectations realized as minibatch means.
//!
//! All players update simultaneously from a shared trace: every δ is computed
//! before any step is applied.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{CompiledProtocol, NodeId, PlayerId};
use crate::players::{sgd_step, PlayerState, StopRule};
use crate::rng::Rng;
use crate::sweep::{query_sweep, response_sweep, Samples, SweepError};
use crate::tensor::{Tensor, TensorError};

/// Source of Nature/Noise samples for each sweep.
///
/// The current round and player parameters are provided so environments with
/// a feedback loop (rewards of executed actions, bootstrap clones) can be
/// realized; ordinary data sources ignore them.
pub trait EnvSource {
    fn sample(
        &mut self,
        round: usize,
        params: &BTreeMap<PlayerId, Tensor>,
        rng: &mut Rng,
    ) -> Result<Samples, SweepError>;
}

/// Environment for protocols without sampled inputs.
pub struct EmptyEnv;

impl EnvSource for EmptyEnv {
    fn sample(
        &mut self,
        _round: usize,
        _params: &BTreeMap<PlayerId, Tensor>,
        _rng: &mut Rng,
    ) -> Result<Samples, SweepError> {
        Ok(Samples::new())
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("optimizer step for {player}: {source}")]
    Step {
        player: PlayerId,
        #[source]
        source: TensorError,
    },
    #[error("objective {node} became non-finite at round {round}")]
    NonFiniteObjective { round: usize, node: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// Mean traced value of each designated objective node over the batch.
    pub objectives: BTreeMap<NodeId, f64>,
    /// L2 norm of each player's mean response.
    pub delta_norms: BTreeMap<PlayerId, f64>,
}

/// Initialize one state per player from its binding, drawing sequentially
/// from `rng` in binding order.
pub fn init_states(cp: &CompiledProtocol, rng: &mut Rng) -> BTreeMap<PlayerId, PlayerState> {
    cp.players()
        .iter()
        .map(|b| {
            let params = b.init.sample(&b.shape, rng);
            (b.id.clone(), PlayerState::new(params, b.optimizer))
        })
        .collect()
}

pub fn params_of(states: &BTreeMap<PlayerId, PlayerState>) -> BTreeMap<PlayerId, Tensor> {
    states
        .iter()
        .map(|(id, s)| (id.clone(), s.params.clone()))
        .collect()
}

/// One round: `batch` query/response sweep pairs on fresh samples, then one
/// simultaneous optimizer step per player on the mean responses.
pub fn run_round(
    cp: &CompiledProtocol,
    states: &mut BTreeMap<PlayerId, PlayerState>,
    env: &mut dyn EnvSource,
    rng: &mut Rng,
    round: usize,
    batch: usize,
) -> Result<RoundMetrics, RunError> {
    assert!(batch >= 1, "batch must be at least 1");
    let params = params_of(states);
    let mut mean_deltas: BTreeMap<PlayerId, Tensor> = cp
        .players()
        .iter()
        .map(|b| (b.id.clone(), Tensor::zeros(&b.shape)))
        .collect();
    let mut objectives: BTreeMap<NodeId, f64> = cp
        .query()
        .objectives
        .iter()
        .map(|o| (o.clone(), 0.0))
        .collect();

    for _ in 0..batch {
        let samples = env.sample(round, &params, rng)?;
        let trace = query_sweep(cp, &params, &samples)?;
        let adjoints = response_sweep(cp, &trace)?;
        for (id, acc) in mean_deltas.iter_mut() {
            *acc = acc
                .add(&adjoints.deltas[id])
                .map_err(|source| RunError::Step {
                    player: id.clone(),
                    source,
                })?;
        }
        for (node, acc) in objectives.iter_mut() {
            *acc += trace.scalar(node)?;
        }
    }
    let inv = 1.0 / batch as f64;
    let mut delta_norms = BTreeMap::new();
    for (id, acc) in mean_deltas.iter_mut() {
        *acc = acc.scale(inv).map_err(|source| RunError::Step {
            player: id.clone(),
            source,
        })?;
        delta_norms.insert(id.clone(), acc.norm_l2());
    }
    for v in objectives.values_mut() {
        *v *= inv;
    }

    for (id, delta) in &mean_deltas {
        sgd_step(states.get_mut(id).expect("state per player"), delta).map_err(|source| {
            RunError::Step {
                player: id.clone(),
                source,
            }
        })?;
    }
    Ok(RoundMetrics {
        round,
        objectives,
        delta_norms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxRounds,
    /// Every player's gradient norm, smoothed over the trailing window, fell
    /// below the tolerance at this round.
    Converged { round: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub metrics: Vec<RoundMetrics>,
    pub stop: StopReason,
}

/// The representation primitive: iterate rounds until the budget runs out or
/// every player's smoothed response norm is within tolerance. The final
/// states are the representation; the history carries the metrics.
pub fn arglocopt(
    cp: &CompiledProtocol,
    states: &mut BTreeMap<PlayerId, PlayerState>,
    env: &mut dyn EnvSource,
    rng: &mut Rng,
    stop: StopRule,
    batch: usize,
) -> Result<RunHistory, RunError> {
    let window = StopRule::SMOOTHING_WINDOW.min(stop.max_rounds);
    let mut metrics = Vec::with_capacity(stop.max_rounds.min(1 << 16));
    for round in 0..stop.max_rounds {
        let m = run_round(cp, states, env, rng, round, batch)?;
        for (node, v) in &m.objectives {
            if !v.is_finite() {
                return Err(RunError::NonFiniteObjective {
                    round,
                    node: node.clone(),
                });
            }
        }
        metrics.push(m);
        if stop.grad_tolerance > 0.0 && metrics.len() >= window {
            let tail = &metrics[metrics.len() - window..];
            let converged = cp.players().iter().all(|b| {
                let mean: f64 =
                    tail.iter().map(|m| m.delta_norms[&b.id]).sum::<f64>() / window as f64;
                mean < stop.grad_tolerance
            });
            if converged {
                return Ok(RunHistory {
                    metrics,
                    stop: StopReason::Converged { round },
                });
            }
        }
    }
    Ok(RunHistory {
        metrics,
        stop: StopReason::MaxRounds,
    })
}
