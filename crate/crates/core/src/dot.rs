//! Deterministic DOT rendering of the two graphs.
//!
//! Follows the figure conventions of the couplings: players are red boxes,
//! Nature/Noise are yellow, operators are white, response-phase nodes are
//! green. All Nature inputs are merged into a single rendered node (one box,
//! one edge per role), likewise Noise. Output is byte-identical across runs.

use std::fmt::Write as _;

use crate::graph::{Protocol, QueryNode, ResponseNode};
use crate::kernels::ElemOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Query,
    Response,
}

const PLAYER_ATTRS: &str = "shape=box, style=filled, fillcolor=\"#c0392b\", fontcolor=white";
const ENV_ATTRS: &str = "shape=box, style=filled, fillcolor=\"#f1c40f\"";
const OP_ATTRS: &str = "shape=box, style=filled, fillcolor=white";
const GREEN_ATTRS: &str = "shape=box, style=filled, fillcolor=\"#27ae60\", fontcolor=white";

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

pub fn export_dot(protocol: &Protocol, which: Which) -> String {
    match which {
        Which::Query => query_dot(protocol),
        Which::Response => response_dot(protocol),
    }
}

fn query_dot(protocol: &Protocol) -> String {
    let q = &protocol.query;
    let mut s = String::from("digraph query {\n  rankdir=LR;\n");
    let mut has_nature = false;
    let mut has_noise = false;
    for (id, node) in &q.nodes {
        match node {
            QueryNode::Player { .. } => {
                let _ = writeln!(s, "  {} [{}];", quoted(id), PLAYER_ATTRS);
            }
            QueryNode::Nature { .. } => has_nature = true,
            QueryNode::Noise { .. } => has_noise = true,
            QueryNode::Constant(_) => {
                let _ = writeln!(s, "  {} [label=\"const\", {}];", quoted(id), OP_ATTRS);
            }
            QueryNode::Op { kernel, .. } => {
                let _ = writeln!(
                    s,
                    "  {} [label={}, {}];",
                    quoted(id),
                    quoted(&format!("{id}: {}", kernel.tag())),
                    OP_ATTRS
                );
            }
        }
    }
    if has_nature {
        let _ = writeln!(s, "  Nature [{ENV_ATTRS}];");
    }
    if has_noise {
        let _ = writeln!(s, "  Noise [{ENV_ATTRS}];");
    }
    for (id, node) in &q.nodes {
        if let QueryNode::Op { inputs, .. } = node {
            for p in inputs {
                let (src, label) = match &q.nodes[&p.node] {
                    QueryNode::Nature { .. } => ("Nature".to_string(), p.node.clone()),
                    QueryNode::Noise { .. } => ("Noise".to_string(), p.node.clone()),
                    _ if p.port > 0 => (quoted(&p.node), format!("{}.{}", p.node, p.port)),
                    _ => (quoted(&p.node), p.node.clone()),
                };
                let _ = writeln!(s, "  {} -> {} [label={}];", src, quoted(id), quoted(&label));
            }
        }
    }
    s.push_str("}\n");
    s
}

fn response_dot(protocol: &Protocol) -> String {
    let r = &protocol.response;
    let mut s = String::from("digraph response {\n  rankdir=RL;\n");
    for (id, node) in &r.nodes {
        let label = match node {
            ResponseNode::Oracle { target } => format!("Oracle({target})"),
            ResponseNode::ChainMul { .. } => "*".to_string(),
            ResponseNode::Sum { .. } => "+".to_string(),
            ResponseNode::Negate { .. } => "-1".to_string(),
            ResponseNode::TraceValue { target, port } => format!("trace({target}.{port})"),
            ResponseNode::Constant(t) => {
                if t.len() == 1 {
                    format!("{}", t.data()[0])
                } else {
                    "const".to_string()
                }
            }
            ResponseNode::MulScalar { .. } => "*".to_string(),
            ResponseNode::Kick { .. } => "Kick".to_string(),
            ResponseNode::Map { op, .. } => match op {
                ElemOp::Relu => "relu",
                ElemOp::Heaviside => "heaviside",
                ElemOp::Ln => "ln",
                ElemOp::Exp => "exp",
                ElemOp::Sigmoid => "sigmoid",
            }
            .to_string(),
        };
        let _ = writeln!(s, "  {} [label={}, {}];", quoted(id), quoted(&label), GREEN_ATTRS);
    }
    for binding in &protocol.players {
        let _ = writeln!(s, "  {} [{}];", quoted(&binding.id), PLAYER_ATTRS);
    }
    for (id, node) in &r.nodes {
        for p in node.input_ports() {
            let _ = writeln!(
                s,
                "  {} -> {} [label={}];",
                quoted(&p.node),
                quoted(id),
                quoted(&format!("{}.{}", p.node, p.port))
            );
        }
    }
    for (player, p) in &r.outputs {
        let _ = writeln!(
            s,
            "  {} -> {} [label={}];",
            quoted(&p.node),
            quoted(player),
            quoted(&format!("delta.{player}"))
        );
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{out, PlayerBinding, Port, QueryGraph, ResponseGraph, ResponseNode};
    use crate::tensor::Tensor;

    // Minimal graph: one player, no edges.
    #[test]
    fn single_player_query_has_one_node_no_edges() {
        let mut q = QueryGraph::new();
        q.player("p");
        let mut r = ResponseGraph::new();
        r.insert("zero", ResponseNode::Constant(Tensor::zeros(&[1])));
        r.outputs.insert("p".into(), Port::new("zero", 0));
        let protocol = Protocol {
            query: q,
            response: r,
            players: vec![PlayerBinding::new("p", &[1])],
        };
        assert!(protocol.validate().pass());
        let dot = export_dot(&protocol, Which::Query);
        let node_lines = dot.lines().filter(|l| l.contains(" [")).count();
        assert_eq!(node_lines, 1);
        assert!(!dot.contains("->"));
    }

    #[test]
    fn export_is_deterministic() {
        let mut q = QueryGraph::new();
        q.player("p");
        q.nature("x", &[1]);
        q.op("loss", crate::kernels::Kernel::MseLoss, vec![out("p"), out("x")]);
        q.objectives = vec!["loss".into()];
        let shapes = [("p".to_string(), vec![1])].into_iter().collect();
        let r = crate::derive::derive_chain_rule_response(&q, &shapes).unwrap();
        let protocol = Protocol {
            query: q,
            response: r,
            players: vec![PlayerBinding::new("p", &[1])],
        };
        let a = export_dot(&protocol, Which::Query);
        let b = export_dot(&protocol, Which::Query);
        assert_eq!(a, b);
        let a = export_dot(&protocol, Which::Response);
        let b = export_dot(&protocol, Which::Response);
        assert_eq!(a, b);
    }
}
