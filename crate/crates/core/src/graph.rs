//! The two-graph machinery: typed DAGs for the query (feedforward) phase and
//! the response (first-order feedback) phase, plus protocol validation.
//!
//! A [`Protocol`] pairs a [`QueryGraph`] with a [`ResponseGraph`] and the
//! player bindings. Both graphs are plain data with public fields; they must
//! pass [`Protocol::validate`] — via [`Protocol::compile`] — before any sweep
//! runs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::kernels::{ElemOp, Kernel};
use crate::players::{InitSpec, OptimizerSpec};
use crate::tensor::{Tensor, TensorError};

pub type NodeId = String;
pub type PlayerId = String;

/// A named output slot of a node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Port {
    pub node: NodeId,
    pub port: usize,
}

impl Port {
    pub fn new(node: impl Into<NodeId>, port: usize) -> Self {
        Self {
            node: node.into(),
            port,
        }
    }
}

/// First output of a node, the common case.
pub fn out(node: impl Into<NodeId>) -> Port {
    Port::new(node, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryNode {
    /// A parameter input owned by `player`; set externally each round.
    Player { player: PlayerId },
    /// Data sample set externally each round.
    Nature { shape: Vec<usize> },
    /// Noise sample set externally each round.
    Noise { shape: Vec<usize> },
    Constant(Tensor),
    /// A fixed function of its parents' outputs.
    Op { kernel: Kernel, inputs: Vec<Port> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryGraph {
    pub nodes: BTreeMap<NodeId, QueryNode>,
    /// Designated objective node(s); the first is the protocol's scalar
    /// objective for derivation and gradient checks.
    pub objectives: Vec<NodeId>,
}

impl QueryGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, id: impl Into<NodeId>, node: QueryNode) -> NodeId {
        let id = id.into();
        let prev = self.nodes.insert(id.clone(), node);
        assert!(prev.is_none(), "duplicate query node id {id}");
        id
    }

    pub fn player(&mut self, id: impl Into<NodeId>) -> NodeId {
        let id = id.into();
        self.insert(
            id.clone(),
            QueryNode::Player {
                player: id.clone(),
            },
        )
    }

    pub fn nature(&mut self, id: impl Into<NodeId>, shape: &[usize]) -> NodeId {
        self.insert(
            id,
            QueryNode::Nature {
                shape: shape.to_vec(),
            },
        )
    }

    pub fn noise(&mut self, id: impl Into<NodeId>, shape: &[usize]) -> NodeId {
        self.insert(
            id,
            QueryNode::Noise {
                shape: shape.to_vec(),
            },
        )
    }

    pub fn constant(&mut self, id: impl Into<NodeId>, value: Tensor) -> NodeId {
        self.insert(id, QueryNode::Constant(value))
    }

    pub fn op(&mut self, id: impl Into<NodeId>, kernel: Kernel, inputs: Vec<Port>) -> NodeId {
        self.insert(id, QueryNode::Op { kernel, inputs })
    }

    pub fn input_nodes(&self) -> impl Iterator<Item = (&NodeId, &QueryNode)> {
        self.nodes
            .iter()
            .filter(|(_, n)| matches!(n, QueryNode::Nature { .. } | QueryNode::Noise { .. }))
    }

    fn inputs_of(&self, id: &NodeId) -> &[Port] {
        match &self.nodes[id] {
            QueryNode::Op { inputs, .. } => inputs,
            _ => &[],
        }
    }

    pub fn out_ports_of(&self, id: &NodeId) -> usize {
        match &self.nodes[id] {
            QueryNode::Op { kernel, .. } => kernel.out_ports(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseNode {
    /// Reveals the partial derivatives of a query operator at the traced
    /// point. Consumed only by `ChainMul`.
    Oracle { target: NodeId },
    /// The "*" block: combines an oracle's partials with the adjoint of each
    /// output port of the target operator; emits one adjoint per input slot.
    ChainMul { oracle: Port, douts: Vec<Port> },
    /// The "+" block: fan-in summation of equal-shaped adjoints.
    Sum { inputs: Vec<Port> },
    Negate { input: Port },
    /// Zeroth-order read of a traced query value.
    TraceValue { target: NodeId, port: usize },
    Constant(Tensor),
    /// Scalar (shape `[1]`) times tensor.
    MulScalar { scalar: Port, value: Port },
    /// `kick_compute(s_prev, ind, τ)` transposed into parameter orientation.
    Kick {
        s_prev: Port,
        indicator: Port,
        tau: Port,
    },
    /// Coordinatewise map of a response value.
    Map { op: ElemOp, input: Port },
}

impl ResponseNode {
    pub fn input_ports(&self) -> Vec<&Port> {
        match self {
            ResponseNode::Oracle { .. } | ResponseNode::Constant(_) | ResponseNode::TraceValue { .. } => vec![],
            ResponseNode::ChainMul { oracle, douts } => {
                let mut v = vec![oracle];
                v.extend(douts.iter());
                v
            }
            ResponseNode::Sum { inputs } => inputs.iter().collect(),
            ResponseNode::Negate { input } | ResponseNode::Map { input, .. } => vec![input],
            ResponseNode::MulScalar { scalar, value } => vec![scalar, value],
            ResponseNode::Kick {
                s_prev,
                indicator,
                tau,
            } => vec![s_prev, indicator, tau],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseGraph {
    pub nodes: BTreeMap<NodeId, ResponseNode>,
    /// Per-player output: the port delivering that player's response tensor.
    pub outputs: BTreeMap<PlayerId, Port>,
}

impl ResponseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<NodeId>, node: ResponseNode) -> NodeId {
        let id = id.into();
        let prev = self.nodes.insert(id.clone(), node);
        assert!(prev.is_none(), "duplicate response node id {id}");
        id
    }

    /// Number of `Oracle` nodes, the response graph's first-order taps.
    pub fn oracle_count(&self) -> usize {
        self.nodes
            .values()
            .filter(|n| matches!(n, ResponseNode::Oracle { .. }))
            .count()
    }
}

/// One player's slot in the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerBinding {
    pub id: PlayerId,
    pub shape: Vec<usize>,
    pub init: InitSpec,
    pub optimizer: OptimizerSpec,
    /// Expected sign of this player's response relative to the gradient of
    /// the traced objective: +1 for descent paths, −1 where the protocol
    /// deliberately negates (the adversarial tweak).
    pub check_sign: f64,
}

impl PlayerBinding {
    pub fn new(id: impl Into<PlayerId>, shape: &[usize]) -> Self {
        Self {
            id: id.into(),
            shape: shape.to_vec(),
            init: InitSpec::GaussianFanIn { scale: 0.1 },
            optimizer: OptimizerSpec::sgd(0.05),
            check_sign: 1.0,
        }
    }

    pub fn with_init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }

    pub fn with_sign(mut self, sign: f64) -> Self {
        self.check_sign = sign;
        self
    }
}

/// A validated pair of graphs plus player bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub query: QueryGraph,
    pub response: ResponseGraph,
    pub players: Vec<PlayerBinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diagnostic {
    Cycle { graph: String, involving: NodeId },
    UnknownNode { graph: String, node: NodeId, referenced_by: NodeId },
    BadPort { graph: String, node: NodeId, port: usize, referenced_by: NodeId },
    ShapeError { graph: String, node: NodeId, error: String },
    NoPlayerInput,
    UnknownPlayer { node: NodeId, player: PlayerId },
    MissingPlayerNode { player: PlayerId },
    UnboundPlayer { player: PlayerId },
    ResponseShape { player: PlayerId, expected: Vec<usize>, got: Vec<usize> },
    DanglingOracle { node: NodeId, target: NodeId },
    OracleMisuse { node: NodeId, detail: String },
    MissingObjective { node: NodeId },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.pass() {
            write!(f, "pass")
        } else {
            writeln!(f, "fail ({} diagnostics)", self.diagnostics.len())?;
            for d in &self.diagnostics {
                writeln!(f, "  - {d:?}")?;
            }
            Ok(())
        }
    }
}

/// Shapes of every output port of every query node.
pub type ShapeTable = BTreeMap<NodeId, Vec<Vec<usize>>>;

/// Kahn's algorithm over `(node, inputs)` pairs; ready nodes are taken in
/// sorted order so the result is deterministic. Returns `Err(node)` with some
/// node on a cycle when the graph is cyclic.
fn topo_sort(
    ids: impl Iterator<Item = NodeId>,
    inputs_of: impl Fn(&NodeId) -> Vec<NodeId>,
) -> Result<Vec<NodeId>, NodeId> {
    let ids: Vec<NodeId> = ids.collect();
    let known: std::collections::BTreeSet<&NodeId> = ids.iter().collect();
    let mut indegree: BTreeMap<&NodeId, usize> = ids.iter().map(|id| (id, 0)).collect();
    let mut consumers: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    let mut edges: BTreeMap<&NodeId, Vec<NodeId>> = BTreeMap::new();
    for id in &ids {
        edges.insert(id, inputs_of(id));
    }
    for id in &ids {
        for src in &edges[id] {
            if let Some(src) = known.get(src) {
                *indegree.get_mut(id).unwrap() += 1;
                consumers.entry(src).or_default().push(id);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<&NodeId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.clone());
        for c in consumers.get(next).into_iter().flatten() {
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == ids.len() {
        Ok(order)
    } else {
        let stuck = indegree
            .iter()
            .find(|(_, d)| **d > 0)
            .map(|(id, _)| (*id).clone())
            .unwrap();
        Err(stuck)
    }
}

/// Infer every query node's output shapes in topological order.
pub fn infer_query_shapes(
    query: &QueryGraph,
    player_shapes: &BTreeMap<PlayerId, Vec<usize>>,
) -> Result<(Vec<NodeId>, ShapeTable), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    for (id, node) in &query.nodes {
        if let QueryNode::Op { kernel, inputs } = node {
            if inputs.len() != kernel.arity() {
                diags.push(Diagnostic::ShapeError {
                    graph: "query".into(),
                    node: id.clone(),
                    error: format!(
                        "{} takes {} inputs, got {}",
                        kernel.tag(),
                        kernel.arity(),
                        inputs.len()
                    ),
                });
            }
            for p in inputs {
                match query.nodes.get(&p.node) {
                    None => diags.push(Diagnostic::UnknownNode {
                        graph: "query".into(),
                        node: p.node.clone(),
                        referenced_by: id.clone(),
                    }),
                    Some(_) if p.port >= query.out_ports_of(&p.node) => {
                        diags.push(Diagnostic::BadPort {
                            graph: "query".into(),
                            node: p.node.clone(),
                            port: p.port,
                            referenced_by: id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let order = topo_sort(query.nodes.keys().cloned(), |id| {
        query.inputs_of(id).iter().map(|p| p.node.clone()).collect()
    })
    .map_err(|involving| {
        vec![Diagnostic::Cycle {
            graph: "query".into(),
            involving,
        }]
    })?;

    let mut shapes = ShapeTable::new();
    for id in &order {
        let node_shapes = match &query.nodes[id] {
            QueryNode::Player { player } => match player_shapes.get(player) {
                Some(s) => vec![s.clone()],
                None => {
                    diags.push(Diagnostic::UnknownPlayer {
                        node: id.clone(),
                        player: player.clone(),
                    });
                    continue;
                }
            },
            QueryNode::Nature { shape } | QueryNode::Noise { shape } => vec![shape.clone()],
            QueryNode::Constant(t) => vec![t.shape().to_vec()],
            QueryNode::Op { kernel, inputs } => {
                let in_shapes: Option<Vec<Vec<usize>>> = inputs
                    .iter()
                    .map(|p| shapes.get(&p.node).map(|s| s[p.port].clone()))
                    .collect();
                let Some(in_shapes) = in_shapes else {
                    // An upstream diagnostic already fired.
                    continue;
                };
                match kernel.infer(&in_shapes) {
                    Ok(s) => s,
                    Err(e) => {
                        diags.push(Diagnostic::ShapeError {
                            graph: "query".into(),
                            node: id.clone(),
                            error: e.to_string(),
                        });
                        continue;
                    }
                }
            }
        };
        shapes.insert(id.clone(), node_shapes);
    }
    if diags.is_empty() {
        Ok((order, shapes))
    } else {
        Err(diags)
    }
}

/// A response value is either a tensor adjoint or an oracle's partials.
#[derive(Debug, Clone, PartialEq)]
enum RShape {
    Tensor(Vec<usize>),
    Partials(NodeId),
}

fn check_response(
    protocol: &Protocol,
    query_shapes: &ShapeTable,
    diags: &mut Vec<Diagnostic>,
) -> Option<Vec<NodeId>> {
    let response = &protocol.response;
    let query = &protocol.query;

    for (id, node) in &response.nodes {
        for p in node.input_ports() {
            if !response.nodes.contains_key(&p.node) {
                diags.push(Diagnostic::UnknownNode {
                    graph: "response".into(),
                    node: p.node.clone(),
                    referenced_by: id.clone(),
                });
            }
        }
        match node {
            ResponseNode::Oracle { target } => match query.nodes.get(target) {
                Some(QueryNode::Op { .. }) => {}
                _ => diags.push(Diagnostic::DanglingOracle {
                    node: id.clone(),
                    target: target.clone(),
                }),
            },
            ResponseNode::TraceValue { target, port } => {
                if !query.nodes.contains_key(target) || *port >= query.out_ports_of(target) {
                    diags.push(Diagnostic::UnknownNode {
                        graph: "query".into(),
                        node: target.clone(),
                        referenced_by: id.clone(),
                    });
                }
            }
            _ => {}
        }
    }
    if !diags.is_empty() {
        return None;
    }

    let order = match topo_sort(response.nodes.keys().cloned(), |id| {
        response.nodes[id]
            .input_ports()
            .iter()
            .map(|p| p.node.clone())
            .collect()
    }) {
        Ok(o) => o,
        Err(involving) => {
            diags.push(Diagnostic::Cycle {
                graph: "response".into(),
                involving,
            });
            return None;
        }
    };

    // Shape/kind propagation.
    let mut rshapes: BTreeMap<NodeId, Vec<RShape>> = BTreeMap::new();
    let before = diags.len();
    for id in &order {
        let get = |p: &Port| -> Option<RShape> {
            rshapes.get(&p.node).and_then(|v| v.get(p.port)).cloned()
        };
        let tensor_in = |p: &Port, diags: &mut Vec<Diagnostic>| -> Option<Vec<usize>> {
            match get(p) {
                Some(RShape::Tensor(s)) => Some(s),
                Some(RShape::Partials(_)) => {
                    diags.push(Diagnostic::OracleMisuse {
                        node: p.node.clone(),
                        detail: "oracle output used as a tensor".into(),
                    });
                    None
                }
                None => {
                    diags.push(Diagnostic::BadPort {
                        graph: "response".into(),
                        node: p.node.clone(),
                        port: p.port,
                        referenced_by: id.clone(),
                    });
                    None
                }
            }
        };
        let shape_err = |node: &NodeId, msg: String| Diagnostic::ShapeError {
            graph: "response".into(),
            node: node.clone(),
            error: msg,
        };
        let out_shapes: Option<Vec<RShape>> = match &response.nodes[id] {
            ResponseNode::Oracle { target } => Some(vec![RShape::Partials(target.clone())]),
            ResponseNode::Constant(t) => Some(vec![RShape::Tensor(t.shape().to_vec())]),
            ResponseNode::TraceValue { target, port } => {
                Some(vec![RShape::Tensor(query_shapes[target][*port].clone())])
            }
            ResponseNode::ChainMul { oracle, douts } => match get(oracle) {
                Some(RShape::Partials(target)) => {
                    let QueryNode::Op { kernel, inputs } = &query.nodes[&target] else {
                        unreachable!("oracle target checked above");
                    };
                    let mut ok = true;
                    if douts.len() != kernel.out_ports() {
                        diags.push(shape_err(
                            id,
                            format!(
                                "{} has {} output ports, got {} adjoints",
                                kernel.tag(),
                                kernel.out_ports(),
                                douts.len()
                            ),
                        ));
                        ok = false;
                    } else {
                        for (k, d) in douts.iter().enumerate() {
                            if let Some(s) = tensor_in(d, diags) {
                                if s != query_shapes[&target][k] {
                                    diags.push(shape_err(
                                        id,
                                        format!(
                                            "adjoint {k} has shape {s:?}, operator output is {:?}",
                                            query_shapes[&target][k]
                                        ),
                                    ));
                                    ok = false;
                                }
                            } else {
                                ok = false;
                            }
                        }
                    }
                    ok.then(|| {
                        inputs
                            .iter()
                            .map(|p| RShape::Tensor(query_shapes[&p.node][p.port].clone()))
                            .collect()
                    })
                }
                _ => {
                    diags.push(Diagnostic::OracleMisuse {
                        node: id.clone(),
                        detail: "chain node's first input must be an oracle".into(),
                    });
                    None
                }
            },
            ResponseNode::Sum { inputs } => {
                let shapes: Option<Vec<Vec<usize>>> =
                    inputs.iter().map(|p| tensor_in(p, diags)).collect();
                shapes.and_then(|shapes| match shapes.first() {
                    Some(first) if shapes.iter().all(|s| s == first) => {
                        Some(vec![RShape::Tensor(first.clone())])
                    }
                    Some(_) => {
                        diags.push(shape_err(id, "sum inputs have unequal shapes".into()));
                        None
                    }
                    None => {
                        diags.push(shape_err(id, "sum has no inputs".into()));
                        None
                    }
                })
            }
            ResponseNode::Negate { input } | ResponseNode::Map { input, .. } => {
                tensor_in(input, diags).map(|s| vec![RShape::Tensor(s)])
            }
            ResponseNode::MulScalar { scalar, value } => {
                let s = tensor_in(scalar, diags);
                let v = tensor_in(value, diags);
                match (s, v) {
                    (Some(s), Some(v)) if s == vec![1] => Some(vec![RShape::Tensor(v)]),
                    (Some(s), Some(_)) => {
                        diags.push(shape_err(id, format!("scalar input has shape {s:?}")));
                        None
                    }
                    _ => None,
                }
            }
            ResponseNode::Kick {
                s_prev,
                indicator,
                tau,
            } => {
                let sp = tensor_in(s_prev, diags);
                let ind = tensor_in(indicator, diags);
                let tv = tensor_in(tau, diags);
                match (sp, ind, tv) {
                    (Some(sp), Some(ind), Some(tv)) if sp.len() == 1 && ind == tv && ind.len() == 1 => {
                        Some(vec![RShape::Tensor(vec![ind[0], sp[0]])])
                    }
                    (Some(_), Some(ind), Some(tv)) => {
                        diags.push(shape_err(
                            id,
                            format!("kick inputs must be vectors with ind {ind:?} == τ {tv:?}"),
                        ));
                        None
                    }
                    _ => None,
                }
            }
        };
        if let Some(s) = out_shapes {
            rshapes.insert(id.clone(), s);
        }
    }
    if diags.len() > before {
        return None;
    }

    // Every player of the query graph must have a response output of its shape.
    for binding in &protocol.players {
        match response.outputs.get(&binding.id) {
            None => diags.push(Diagnostic::UnboundPlayer {
                player: binding.id.clone(),
            }),
            Some(p) => match rshapes.get(&p.node).and_then(|v| v.get(p.port)) {
                Some(RShape::Tensor(s)) if *s == binding.shape => {}
                Some(RShape::Tensor(s)) => diags.push(Diagnostic::ResponseShape {
                    player: binding.id.clone(),
                    expected: binding.shape.clone(),
                    got: s.clone(),
                }),
                _ => diags.push(Diagnostic::UnboundPlayer {
                    player: binding.id.clone(),
                }),
            },
        }
    }
    Some(order)
}

impl Protocol {
    pub fn player_shapes(&self) -> BTreeMap<PlayerId, Vec<usize>> {
        self.players
            .iter()
            .map(|b| (b.id.clone(), b.shape.clone()))
            .collect()
    }

    pub fn binding(&self, player: &str) -> Option<&PlayerBinding> {
        self.players.iter().find(|b| b.id == player)
    }

    /// The designated scalar objective node, when one is declared.
    pub fn objective(&self) -> Option<&NodeId> {
        self.query.objectives.first()
    }

    /// Well-formedness check: both graphs acyclic, shapes infer, every player
    /// bound to a response output, every oracle resolves. Diagnostics are
    /// collected rather than raised.
    pub fn validate(&self) -> ValidationReport {
        let mut diags = Vec::new();

        let has_player = self
            .query
            .nodes
            .values()
            .any(|n| matches!(n, QueryNode::Player { .. }));
        if !has_player {
            diags.push(Diagnostic::NoPlayerInput);
        }
        for binding in &self.players {
            let bound = self.query.nodes.values().any(
                |n| matches!(n, QueryNode::Player { player } if *player == binding.id),
            );
            if !bound {
                diags.push(Diagnostic::MissingPlayerNode {
                    player: binding.id.clone(),
                });
            }
        }
        for obj in &self.query.objectives {
            if !self.query.nodes.contains_key(obj) {
                diags.push(Diagnostic::MissingObjective { node: obj.clone() });
            }
        }

        match infer_query_shapes(&self.query, &self.player_shapes()) {
            Ok((_, shapes)) => {
                check_response(self, &shapes, &mut diags);
            }
            Err(more) => diags.extend(more),
        }

        ValidationReport { diagnostics: diags }
    }

    /// Validate and cache evaluation order and shapes. Sweeps only run on
    /// compiled protocols.
    pub fn compile(self) -> Result<CompiledProtocol, ValidationReport> {
        let report = self.validate();
        if !report.pass() {
            return Err(report);
        }
        let (query_order, query_shapes) =
            infer_query_shapes(&self.query, &self.player_shapes()).expect("validated");
        let response_order = topo_sort(self.response.nodes.keys().cloned(), |id| {
            self.response.nodes[id]
                .input_ports()
                .iter()
                .map(|p| p.node.clone())
                .collect()
        })
        .expect("validated");
        Ok(CompiledProtocol {
            protocol: self,
            query_order,
            response_order,
            query_shapes,
        })
    }
}

/// A protocol that passed validation, with cached evaluation order and the
/// inferred shape table. Immutable and safe to share across sweeps.
#[derive(Debug, Clone)]
pub struct CompiledProtocol {
    protocol: Protocol,
    pub(crate) query_order: Vec<NodeId>,
    pub(crate) response_order: Vec<NodeId>,
    pub query_shapes: ShapeTable,
}

impl CompiledProtocol {
    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn query(&self) -> &QueryGraph {
        &self.protocol.query
    }

    pub fn response(&self) -> &ResponseGraph {
        &self.protocol.response
    }

    pub fn players(&self) -> &[PlayerBinding] {
        &self.protocol.players
    }

    pub fn objective(&self) -> Option<&NodeId> {
        self.protocol.objective()
    }

    pub fn shape_of(&self, port: &Port) -> &[usize] {
        &self.query_shapes[&port.node][port.port]
    }

    /// Sampled-input node ids and shapes (Nature and Noise).
    pub fn sample_slots(&self) -> BTreeMap<NodeId, Vec<usize>> {
        self.protocol
            .query
            .input_nodes()
            .map(|(id, n)| {
                let shape = match n {
                    QueryNode::Nature { shape } | QueryNode::Noise { shape } => shape.clone(),
                    _ => unreachable!(),
                };
                (id.clone(), shape)
            })
            .collect()
    }
}

impl From<TensorError> for Diagnostic {
    fn from(e: TensorError) -> Self {
        Diagnostic::ShapeError {
            graph: "query".into(),
            node: String::new(),
            error: e.to_string(),
        }
    }
}
