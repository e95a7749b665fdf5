//! Automatic chain-rule responses.
//!
//! [`derive_chain_rule_response`] turns a query graph with a scalar objective
//! into the response graph of error backpropagation: one oracle plus one "*"
//! node per operator on a differentiable path to the objective, wired in
//! reverse topological order, with fan-out in the query graph becoming fan-in
//! "+" summation of adjoints.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{
    infer_query_shapes, NodeId, PlayerId, Port, QueryGraph, QueryNode, ResponseGraph, ResponseNode,
};
use crate::tensor::Tensor;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DeriveError {
    #[error("query graph declares no objective node")]
    NoObjective,
    #[error("objective node {node} has shape {shape:?}, must be a scalar")]
    NonScalarObjective { node: NodeId, shape: Vec<usize> },
    #[error("query graph does not validate: {0:?}")]
    InvalidQuery(Vec<crate::graph::Diagnostic>),
}

/// The adjoint seed node id (constant 1 at the objective).
pub const SEED: &str = "seed";

pub fn oracle_id(op: &str) -> NodeId {
    format!("oracle.{op}")
}

pub fn chain_id(op: &str) -> NodeId {
    format!("vjp.{op}")
}

fn sum_id(node: &str, port: usize) -> NodeId {
    format!("sum.{node}.{port}")
}

fn zero_id(node: &str, port: usize) -> NodeId {
    format!("zero.{node}.{port}")
}

/// Derive the exact reverse-mode response graph for `query`.
pub fn derive_chain_rule_response(
    query: &QueryGraph,
    player_shapes: &BTreeMap<PlayerId, Vec<usize>>,
) -> Result<ResponseGraph, DeriveError> {
    let (_, shapes) =
        infer_query_shapes(query, player_shapes).map_err(DeriveError::InvalidQuery)?;
    let objective = query.objectives.first().ok_or(DeriveError::NoObjective)?;
    let obj_shape = &shapes[objective][0];
    if obj_shape != &vec![1] {
        return Err(DeriveError::NonScalarObjective {
            node: objective.clone(),
            shape: obj_shape.clone(),
        });
    }

    // Nodes from which the objective is reachable, walking query edges back.
    let mut reach: BTreeSet<NodeId> = BTreeSet::new();
    let mut frontier = vec![objective.clone()];
    while let Some(id) = frontier.pop() {
        if !reach.insert(id.clone()) {
            continue;
        }
        if let QueryNode::Op { inputs, .. } = &query.nodes[&id] {
            for p in inputs {
                frontier.push(p.node.clone());
            }
        }
    }

    // consumers[(node, port)] = (op, slot) pairs on differentiable paths.
    let mut consumers: BTreeMap<(NodeId, usize), Vec<(NodeId, usize)>> = BTreeMap::new();
    for (id, node) in &query.nodes {
        if !reach.contains(id) {
            continue;
        }
        if let QueryNode::Op { kernel, inputs } = node {
            let mask = kernel.diff_mask();
            for (slot, p) in inputs.iter().enumerate() {
                if mask[slot] {
                    consumers
                        .entry((p.node.clone(), p.port))
                        .or_default()
                        .push((id.clone(), slot));
                }
            }
        }
    }

    let mut response = ResponseGraph::new();
    response.insert(SEED, ResponseNode::Constant(Tensor::scalar(1.0)));

    // The adjoint arriving at (node, port): contributions from each consumer's
    // "*" node, plus the seed at the objective; fan-in greater than one gets a
    // "+" node, zero contributions a zero constant.
    let mut adjoint_of = |response: &mut ResponseGraph, node: &NodeId, port: usize| -> Port {
        let mut parts: Vec<Port> = consumers
            .get(&(node.clone(), port))
            .into_iter()
            .flatten()
            .map(|(op, slot)| Port::new(chain_id(op), *slot))
            .collect();
        if node == objective && port == 0 {
            parts.push(Port::new(SEED, 0));
        }
        match parts.len() {
            0 => {
                let id = zero_id(node, port);
                if !response.nodes.contains_key(&id) {
                    response.insert(
                        id.clone(),
                        ResponseNode::Constant(Tensor::zeros(&shapes[node][port])),
                    );
                }
                Port::new(id, 0)
            }
            1 => parts.pop().unwrap(),
            _ => {
                let id = sum_id(node, port);
                response.insert(id.clone(), ResponseNode::Sum { inputs: parts });
                Port::new(id, 0)
            }
        }
    };

    for id in reach.iter() {
        if let QueryNode::Op { kernel, .. } = &query.nodes[id] {
            let douts: Vec<Port> = (0..kernel.out_ports())
                .map(|p| adjoint_of(&mut response, id, p))
                .collect();
            response.insert(oracle_id(id), ResponseNode::Oracle { target: id.clone() });
            response.insert(
                chain_id(id),
                ResponseNode::ChainMul {
                    oracle: Port::new(oracle_id(id), 0),
                    douts,
                },
            );
        }
    }

    for (id, node) in &query.nodes {
        if let QueryNode::Player { player } = node {
            let port = if reach.contains(id) {
                adjoint_of(&mut response, id, 0)
            } else {
                // No path to the objective: the chain rule gives zero.
                let zid = zero_id(id, 0);
                if !response.nodes.contains_key(&zid) {
                    response.insert(
                        zid.clone(),
                        ResponseNode::Constant(Tensor::zeros(&player_shapes[player])),
                    );
                }
                Port::new(zid, 0)
            };
            response.outputs.insert(player.clone(), port);
        }
    }
    Ok(response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{out, PlayerBinding, Protocol};
    use crate::kernels::{Activation, Kernel};
    use crate::sweep::{query_sweep, response_sweep, Samples};
    use std::collections::BTreeMap;

    // Single affine node: the derived response reproduces ∇_θ(θ·x)·δ = δ ⊗ x.
    #[test]
    fn single_affine_chain_rule() {
        let mut q = QueryGraph::new();
        q.player("theta");
        q.nature("x", &[2]);
        q.op(
            "pred",
            Kernel::Layer {
                activation: Activation::Identity,
                bias: false,
            },
            vec![out("theta"), out("x")],
        );
        q.nature("y", &[1]);
        q.op("loss", Kernel::MseLoss, vec![out("pred"), out("y")]);
        q.objectives = vec!["loss".into()];

        let shapes: BTreeMap<PlayerId, Vec<usize>> =
            [("theta".to_string(), vec![1, 2])].into_iter().collect();
        let response = derive_chain_rule_response(&q, &shapes).unwrap();
        let protocol = Protocol {
            query: q,
            response,
            players: vec![PlayerBinding::new("theta", &[1, 2])],
        };
        let cp = protocol.compile().unwrap();

        let params: BTreeMap<PlayerId, Tensor> =
            [("theta".to_string(), Tensor::matrix(&[vec![1.0, 2.0]]).unwrap())]
                .into_iter()
                .collect();
        let samples = Samples::new()
            .set("x", Tensor::vector(vec![3.0, 4.0]))
            .set("y", Tensor::vector(vec![5.0]));
        let trace = query_sweep(&cp, &params, &samples).unwrap();
        // pred = 11, loss = (11-5)² = 36.
        assert_eq!(trace.scalar("loss").unwrap(), 36.0);
        let adj = response_sweep(&cp, &trace).unwrap();
        // δ_pred = 2(11-5) = 12; δ_θ = 12 ⊗ [3,4].
        assert_eq!(
            adj.get("theta").unwrap(),
            &Tensor::matrix(&[vec![36.0, 48.0]]).unwrap()
        );
    }

    // Composition of two kernels: the player adjoint is the product of both
    // Jacobians applied to the seed, per the "*" contract. Hand derivation:
    // f(g) with g = θ·x (1×1), f = (g)² via mse against 0.
    #[test]
    fn two_kernel_composition_matches_hand_derivation() {
        let mut q = QueryGraph::new();
        q.player("w");
        q.nature("x", &[1]);
        q.op(
            "g",
            Kernel::Layer {
                activation: Activation::Identity,
                bias: false,
            },
            vec![out("w"), out("x")],
        );
        q.constant("zero", Tensor::vector(vec![0.0]));
        q.op("f", Kernel::MseLoss, vec![out("g"), out("zero")]);
        q.objectives = vec!["f".into()];
        let shapes: BTreeMap<PlayerId, Vec<usize>> =
            [("w".to_string(), vec![1, 1])].into_iter().collect();
        let response = derive_chain_rule_response(&q, &shapes).unwrap();
        let protocol = Protocol {
            query: q,
            response,
            players: vec![PlayerBinding::new("w", &[1, 1])],
        };
        let cp = protocol.compile().unwrap();
        let params: BTreeMap<PlayerId, Tensor> =
            [("w".to_string(), Tensor::matrix(&[vec![1.5]]).unwrap())]
                .into_iter()
                .collect();
        let samples = Samples::new().set("x", Tensor::vector(vec![2.0]));
        let trace = query_sweep(&cp, &params, &samples).unwrap();
        let adj = response_sweep(&cp, &trace).unwrap();
        // d/dw (w·x)² = 2·w·x·x = 2·1.5·2·2 = 12.
        assert!((adj.get("w").unwrap().data()[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_objective_rejected() {
        let mut q = QueryGraph::new();
        q.player("p");
        q.objectives = vec!["p".into()];
        let shapes: BTreeMap<PlayerId, Vec<usize>> =
            [("p".to_string(), vec![2])].into_iter().collect();
        assert!(matches!(
            derive_chain_rule_response(&q, &shapes),
            Err(DeriveError::NonScalarObjective { .. })
        ));
    }
}
