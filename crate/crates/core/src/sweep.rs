//! Query and response sweeps over a compiled protocol.
//!
//! A query sweep evaluates every node once in topological order and records
//! all outputs in a [`Trace`]. A response sweep evaluates the response graph
//! at the traced point, with oracle nodes reading kernel partials lazily, and
//! returns each player's response tensor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{CompiledProtocol, NodeId, PlayerId, Port, QueryNode, ResponseNode};
use crate::kernels::{chain_combine, kick_compute, Kernel};
use crate::tensor::{Tensor, TensorError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SweepError {
    #[error("missing parameters for player {0}")]
    MissingParam(PlayerId),
    #[error("player {player} expects shape {expected:?}, got {got:?}")]
    ParamShape {
        player: PlayerId,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("missing sample for input node {0}")]
    MissingSample(NodeId),
    #[error("sample for {node} has shape {got:?}, expected {expected:?}")]
    SampleShape {
        node: NodeId,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("node {node}: {source}")]
    Kernel {
        node: NodeId,
        #[source]
        source: TensorError,
    },
    #[error("node {0} produced a non-finite value")]
    NonFinite(NodeId),
    #[error("trace has no value for node {0}")]
    MissingTrace(NodeId),
}

pub type SweepResult<T> = Result<T, SweepError>;

/// Externally set inputs for one sweep, keyed by Nature/Noise node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub values: BTreeMap<NodeId, Tensor>,
}

impl Samples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, node: impl Into<NodeId>, value: Tensor) -> Self {
        self.values.insert(node.into(), value);
        self
    }
}

/// Recorded node outputs of one query sweep, plus the samples that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: BTreeMap<NodeId, Vec<Tensor>>,
    pub samples: Samples,
}

impl Trace {
    pub fn value(&self, node: &str, port: usize) -> SweepResult<&Tensor> {
        self.values
            .get(node)
            .and_then(|v| v.get(port))
            .ok_or_else(|| SweepError::MissingTrace(node.to_string()))
    }

    pub fn scalar(&self, node: &str) -> SweepResult<f64> {
        self.value(node, 0)?.item().map_err(|source| SweepError::Kernel {
            node: node.to_string(),
            source,
        })
    }
}

/// Per-player first-order responses (or estimates) of one response sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointMap {
    pub deltas: BTreeMap<PlayerId, Tensor>,
}

impl AdjointMap {
    pub fn get(&self, player: &str) -> SweepResult<&Tensor> {
        self.deltas
            .get(player)
            .ok_or_else(|| SweepError::MissingTrace(player.to_string()))
    }
}

/// Evaluate the query graph once. Every node reachable from the inputs gets a
/// traced value; any non-finite output reports the offending node.
pub fn query_sweep(
    cp: &CompiledProtocol,
    params: &BTreeMap<PlayerId, Tensor>,
    samples: &Samples,
) -> SweepResult<Trace> {
    let mut values: BTreeMap<NodeId, Vec<Tensor>> = BTreeMap::new();
    for id in &cp.query_order {
        let outs = match &cp.query().nodes[id] {
            QueryNode::Player { player } => {
                let p = params
                    .get(player)
                    .ok_or_else(|| SweepError::MissingParam(player.clone()))?;
                let binding = cp.protocol().binding(player).expect("validated binding");
                if p.shape() != binding.shape {
                    return Err(SweepError::ParamShape {
                        player: player.clone(),
                        expected: binding.shape.clone(),
                        got: p.shape().to_vec(),
                    });
                }
                vec![p.clone()]
            }
            QueryNode::Nature { shape } | QueryNode::Noise { shape } => {
                let s = samples
                    .values
                    .get(id)
                    .ok_or_else(|| SweepError::MissingSample(id.clone()))?;
                if s.shape() != &shape[..] {
                    return Err(SweepError::SampleShape {
                        node: id.clone(),
                        expected: shape.clone(),
                        got: s.shape().to_vec(),
                    });
                }
                vec![s.clone()]
            }
            QueryNode::Constant(t) => vec![t.clone()],
            QueryNode::Op { kernel, inputs } => {
                let ins: Vec<&Tensor> = inputs
                    .iter()
                    .map(|p| {
                        // Topological order never reads an unwritten value.
                        &values
                            .get(&p.node)
                            .unwrap_or_else(|| panic!("evaluation order read unwritten node {}", p.node))
                            [p.port]
                    })
                    .collect();
                kernel.forward(&ins).map_err(|source| SweepError::Kernel {
                    node: id.clone(),
                    source,
                })?
            }
        };
        if outs.iter().any(|t| !t.all_finite()) {
            return Err(SweepError::NonFinite(id.clone()));
        }
        values.insert(id.clone(), outs);
    }
    Ok(Trace {
        values,
        samples: samples.clone(),
    })
}

enum RVal {
    Tensors(Vec<Tensor>),
    Partials(NodeId),
}

/// Evaluate the response graph at a traced point and deliver each player's δ.
pub fn response_sweep(cp: &CompiledProtocol, trace: &Trace) -> SweepResult<AdjointMap> {
    let mut values: BTreeMap<NodeId, RVal> = BTreeMap::new();
    {
        let tensor_at = |values: &BTreeMap<NodeId, RVal>, p: &Port| -> Tensor {
            match values
                .get(&p.node)
                .unwrap_or_else(|| panic!("evaluation order read unwritten node {}", p.node))
            {
                RVal::Tensors(v) => v[p.port].clone(),
                RVal::Partials(_) => panic!("oracle value used as tensor at {}", p.node),
            }
        };
        for id in &cp.response_order {
            let kernel_err = |source: TensorError| SweepError::Kernel {
                node: id.clone(),
                source,
            };
            let out = match &cp.response().nodes[id] {
                ResponseNode::Oracle { target } => RVal::Partials(target.clone()),
                ResponseNode::Constant(t) => RVal::Tensors(vec![t.clone()]),
                ResponseNode::TraceValue { target, port } => {
                    RVal::Tensors(vec![trace.value(target, *port)?.clone()])
                }
                ResponseNode::ChainMul { oracle, douts } => {
                    let RVal::Partials(target) = &values[&oracle.node] else {
                        panic!("chain node {id} not wired to an oracle");
                    };
                    let QueryNode::Op { kernel, inputs } = &cp.query().nodes[target] else {
                        unreachable!("validated oracle target")
                    };
                    let ins: Vec<&Tensor> = inputs
                        .iter()
                        .map(|p| trace.value(&p.node, p.port))
                        .collect::<SweepResult<_>>()?;
                    let outs = trace
                        .values
                        .get(target)
                        .ok_or_else(|| SweepError::MissingTrace(target.clone()))?;
                    let dtensors: Vec<Tensor> =
                        douts.iter().map(|p| tensor_at(&values, p)).collect();
                    let drefs: Vec<&Tensor> = dtensors.iter().collect();
                    RVal::Tensors(chain_combine(kernel, &ins, outs, &drefs).map_err(kernel_err)?)
                }
                ResponseNode::Sum { inputs } => {
                    let mut acc = tensor_at(&values, &inputs[0]);
                    for p in &inputs[1..] {
                        acc = acc.add(&tensor_at(&values, p)).map_err(kernel_err)?;
                    }
                    RVal::Tensors(vec![acc])
                }
                ResponseNode::Negate { input } => {
                    RVal::Tensors(vec![tensor_at(&values, input).negate()])
                }
                ResponseNode::Map { op, input } => {
                    let t = tensor_at(&values, input);
                    let out = Kernel::Map(*op).forward(&[&t]).map_err(kernel_err)?;
                    RVal::Tensors(out)
                }
                ResponseNode::MulScalar { scalar, value } => {
                    let c = tensor_at(&values, scalar).item().map_err(kernel_err)?;
                    RVal::Tensors(vec![tensor_at(&values, value).scale(c).map_err(kernel_err)?])
                }
                ResponseNode::Kick {
                    s_prev,
                    indicator,
                    tau,
                } => {
                    let kick = kick_compute(
                        &tensor_at(&values, s_prev),
                        &tensor_at(&values, indicator),
                        &tensor_at(&values, tau),
                    )
                    .map_err(kernel_err)?;
                    // Parameter orientation: θ is (out × in).
                    RVal::Tensors(vec![kick.transpose().map_err(kernel_err)?])
                }
            };
            if let RVal::Tensors(ts) = &out {
                if ts.iter().any(|t| !t.all_finite()) {
                    return Err(SweepError::NonFinite(id.clone()));
                }
            }
            values.insert(id.clone(), out);
        }
    }

    let mut deltas = BTreeMap::new();
    for binding in cp.players() {
        let port = &cp.response().outputs[&binding.id];
        let RVal::Tensors(v) = &values[&port.node] else {
            panic!("player output wired to an oracle")
        };
        let delta = v[port.port].clone();
        debug_assert_eq!(delta.shape(), &binding.shape[..], "validated response shape");
        deltas.insert(binding.id.clone(), delta);
    }
    Ok(AdjointMap { deltas })
}
