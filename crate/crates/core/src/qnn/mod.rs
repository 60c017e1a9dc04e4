//! Quantized network graphs.
//!
//! A network is a DAG of activation nodes over `d` inputs. Every edge
//! weight and every nonzero bias must be a level of the network's
//! alphabet; this is the whole point of the format, so the builder
//! rejects anything else at construction time and [`QuantNet::audit_alphabet`]
//! re-checks it on demand. Nodes live on integer layers starting at 1
//! (inputs occupy layer 0) and edges may skip layers but must strictly
//! increase them, which gives a topological order for free.
//!
//! Sizes are reported as `(L, N, P)`: depth in layers, node count, and
//! parameter count. Parameters count edges only; biases ride along
//! with their node.

mod serial;

pub use serial::{decode_qnn, encode_qnn, read_qnn, write_qnn};

use std::collections::HashMap;
use std::fmt;
use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigma_delta::Alphabet;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `t^2 / 2`.
    Quad,
    /// `max(t, 0)`.
    Relu,
    /// Passes the pre-activation through unchanged.
    Identity,
}

impl Activation {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Quad => 0.5 * t * t,
            Activation::Relu => t.max(0.0),
            Activation::Identity => t,
        }
    }
}

/// Source end of an edge: a network input or an earlier node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Src {
    Input(u32),
    Node(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub layer: u32,
    pub activation: Activation,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: Src,
    pub to: NodeId,
    pub weight: f64,
}

/// Depth, node count, and parameter (edge) count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeTriple {
    pub layers: u32,
    pub nodes: usize,
    pub params: usize,
}

impl SizeTriple {
    pub fn new(layers: u32, nodes: usize, params: usize) -> Self {
        SizeTriple {
            layers,
            nodes,
            params,
        }
    }
}

impl Add for SizeTriple {
    type Output = SizeTriple;

    /// Composition of disjoint blocks evaluated in sequence: depth is
    /// the larger of the two, material adds up.
    fn add(self, rhs: SizeTriple) -> SizeTriple {
        SizeTriple {
            layers: self.layers.max(rhs.layers),
            nodes: self.nodes + rhs.nodes,
            params: self.params + rhs.params,
        }
    }
}

impl fmt::Display for SizeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(L={}, N={}, P={})", self.layers, self.nodes, self.params)
    }
}

/// Immutable, validated network. Construct through [`NetBuilder`].
#[derive(Clone, Debug)]
pub struct QuantNet {
    alphabet: Alphabet,
    input_arity: u32,
    nodes: Vec<Node>,
    outputs: Vec<NodeId>,
    // Incoming edges in CSR layout: for the node at position i in
    // `nodes`, its edges are `in_edges[in_offsets[i]..in_offsets[i+1]]`,
    // sorted by source (inputs first, then nodes by id) so summation
    // order is deterministic.
    in_offsets: Vec<usize>,
    in_edges: Vec<(Src, f64)>,
}

impl QuantNet {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn input_arity(&self) -> u32 {
        self.input_arity
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.nodes.iter().enumerate().flat_map(move |(i, node)| {
            self.in_edges[self.in_offsets[i]..self.in_offsets[i + 1]]
                .iter()
                .map(move |&(from, weight)| Edge {
                    from,
                    to: node.id,
                    weight,
                })
        })
    }

    pub fn incoming(&self, position: usize) -> &[(Src, f64)] {
        &self.in_edges[self.in_offsets[position]..self.in_offsets[position + 1]]
    }

    pub fn size(&self) -> SizeTriple {
        let layers = self.nodes.iter().map(|n| n.layer).max().unwrap_or(0);
        SizeTriple {
            layers,
            nodes: self.nodes.len(),
            params: self.in_edges.len(),
        }
    }

    /// True when every edge weight and every nonzero bias is an
    /// alphabet level.
    pub fn audit_alphabet(&self) -> bool {
        let weights_ok = self.in_edges.iter().all(|&(_, w)| self.alphabet.contains(w));
        let biases_ok = self
            .nodes
            .iter()
            .all(|n| n.bias == 0.0 || self.alphabet.contains(n.bias));
        weights_ok && biases_ok
    }

    /// Evaluates the outputs at one input point. Nodes are stored in
    /// id order, which the builder guarantees is topological.
    pub fn evaluate(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut values = vec![0.0f64; self.nodes.len()];
        self.evaluate_into(input, &mut values)
    }

    fn evaluate_into(&self, input: &[f64], values: &mut Vec<f64>) -> Result<Vec<f64>> {
        if input.len() != self.input_arity as usize {
            return Err(Error::shape(format!(
                "network takes {} inputs, got {}",
                self.input_arity,
                input.len()
            )));
        }
        values.clear();
        values.resize(self.nodes.len(), 0.0);
        for (i, node) in self.nodes.iter().enumerate() {
            let mut acc = node.bias;
            for &(src, w) in self.incoming(i) {
                let v = match src {
                    Src::Input(k) => input[k as usize],
                    Src::Node(id) => values[id as usize],
                };
                acc += w * v;
            }
            values[i] = node.activation.apply(acc);
        }
        Ok(self
            .outputs
            .iter()
            .map(|&id| values[id as usize])
            .collect())
    }

    /// Evaluates many points, in parallel, preserving input order.
    pub fn evaluate_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        inputs
            .par_iter()
            .map_init(Vec::new, |buf, input| self.evaluate_into(input, buf))
            .collect()
    }

    /// Reopens the network for extension (attaching a readout layer to
    /// a finished basis network, for instance).
    pub fn into_builder(self) -> NetBuilder {
        let mut incoming = Vec::with_capacity(self.nodes.len());
        for i in 0..self.nodes.len() {
            incoming.push(self.incoming(i).to_vec());
        }
        NetBuilder {
            alphabet: self.alphabet,
            input_arity: self.input_arity,
            nodes: self.nodes,
            incoming,
            outputs: self.outputs,
        }
    }
}

/// Replaces a basis network's outputs with a single readout node that
/// sums them under the given signs. Adds one layer, one node, and one
/// parameter per basis function.
///
/// Works for any net whose alphabet contains `+1` and `-1`; the sign
/// tensor must hold exactly `+1` or `-1` per output, in output order.
pub fn attach_sign_readout(
    net: QuantNet,
    signs: &crate::sigma_delta::SignTensor,
) -> Result<QuantNet> {
    let n_out = net.outputs().len();
    if signs.values().len() != n_out {
        return Err(Error::shape(format!(
            "sign tensor has {} entries for {} outputs",
            signs.values().len(),
            n_out
        )));
    }
    if signs.values().data().iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::precondition(
            "sign readout requires every sign to be +1 or -1",
        ));
    }
    let outputs = net.outputs().to_vec();
    let mut b = net.into_builder();
    b.clear_outputs();
    let edges: Vec<(Src, f64)> = outputs
        .iter()
        .zip(signs.values().data())
        .map(|(&id, &s)| (Src::Node(id), s))
        .collect();
    let readout = b.add_node(Activation::Identity, 0.0, &edges)?;
    b.mark_output(readout)?;
    b.finish()
}

/// Incremental construction with per-edge validation.
pub struct NetBuilder {
    alphabet: Alphabet,
    input_arity: u32,
    nodes: Vec<Node>,
    incoming: Vec<Vec<(Src, f64)>>,
    outputs: Vec<NodeId>,
}

impl NetBuilder {
    pub fn new(alphabet: Alphabet, input_arity: u32) -> Self {
        NetBuilder {
            alphabet,
            input_arity,
            nodes: Vec::new(),
            incoming: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn input_arity(&self) -> u32 {
        self.input_arity
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_layer(&self, id: NodeId) -> u32 {
        self.nodes[id as usize].layer
    }

    /// Adds a node one layer past its deepest source.
    pub fn add_node(
        &mut self,
        activation: Activation,
        bias: f64,
        edges: &[(Src, f64)],
    ) -> Result<NodeId> {
        let layer = 1 + self.max_src_layer(edges)?;
        self.add_node_at(layer, activation, bias, edges)
    }

    /// Adds a node on an explicit layer, which must lie strictly above
    /// every source. Used to keep parallel blocks aligned.
    pub fn add_node_at(
        &mut self,
        layer: u32,
        activation: Activation,
        bias: f64,
        edges: &[(Src, f64)],
    ) -> Result<NodeId> {
        if edges.is_empty() {
            return Err(Error::graph("a node needs at least one incoming edge"));
        }
        if layer < 1 {
            return Err(Error::graph("nodes live on layers 1 and above"));
        }
        for &(src, w) in edges {
            if !self.alphabet.contains(w) {
                return Err(Error::graph(format!(
                    "edge weight {w} is not an alphabet level"
                )));
            }
            let src_layer = self.src_layer(src)?;
            if src_layer >= layer {
                return Err(Error::graph(format!(
                    "edge from layer {src_layer} into layer {layer} does not increase depth"
                )));
            }
        }
        if bias != 0.0 && !self.alphabet.contains(bias) {
            return Err(Error::graph(format!(
                "bias {bias} is neither zero nor an alphabet level"
            )));
        }
        let id = self.nodes.len() as NodeId;
        let mut sorted: Vec<(Src, f64)> = edges.to_vec();
        sorted.sort_by_key(|&(src, _)| src);
        // Merge duplicate sources only if they would collide; the
        // builders never emit duplicates, so just reject them.
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::graph("duplicate edges into one node"));
        }
        self.nodes.push(Node {
            id,
            layer,
            activation,
            bias,
        });
        self.incoming.push(sorted);
        Ok(id)
    }

    pub fn mark_output(&mut self, id: NodeId) -> Result<()> {
        if id as usize >= self.nodes.len() {
            return Err(Error::graph(format!("output id {id} does not exist")));
        }
        self.outputs.push(id);
        Ok(())
    }

    pub fn clear_outputs(&mut self) {
        self.outputs.clear();
    }

    fn src_layer(&self, src: Src) -> Result<u32> {
        match src {
            Src::Input(k) => {
                if k >= self.input_arity {
                    return Err(Error::graph(format!(
                        "input {k} out of range (arity {})",
                        self.input_arity
                    )));
                }
                Ok(0)
            }
            Src::Node(id) => {
                let idx = id as usize;
                if idx >= self.nodes.len() {
                    return Err(Error::graph(format!("edge from unknown node {id}")));
                }
                Ok(self.nodes[idx].layer)
            }
        }
    }

    fn max_src_layer(&self, edges: &[(Src, f64)]) -> Result<u32> {
        let mut m = 0;
        for &(src, _) in edges {
            m = m.max(self.src_layer(src)?);
        }
        Ok(m)
    }

    /// Current size of the partial graph, usable for before/after
    /// accounting of a block under construction.
    pub fn size_snapshot(&self) -> SizeTriple {
        SizeTriple {
            layers: self.nodes.iter().map(|n| n.layer).max().unwrap_or(0),
            nodes: self.nodes.len(),
            params: self.incoming.iter().map(Vec::len).sum(),
        }
    }

    /// Validates global invariants and freezes the graph.
    pub fn finish(self) -> Result<QuantNet> {
        if self.outputs.is_empty() {
            return Err(Error::graph("network has no outputs"));
        }
        let mut seen = HashMap::new();
        for &id in &self.outputs {
            if id as usize >= self.nodes.len() {
                return Err(Error::graph(format!("output id {id} does not exist")));
            }
            if let Some(_prev) = seen.insert(id, ()) {
                return Err(Error::graph(format!("output id {id} listed twice")));
            }
        }
        let mut in_offsets = Vec::with_capacity(self.nodes.len() + 1);
        let mut in_edges = Vec::new();
        in_offsets.push(0);
        for edges in &self.incoming {
            in_edges.extend_from_slice(edges);
            in_offsets.push(in_edges.len());
        }
        Ok(QuantNet {
            alphabet: self.alphabet,
            input_arity: self.input_arity,
            nodes: self.nodes,
            outputs: self.outputs,
            in_offsets,
            in_edges,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net() -> QuantNet {
        // Computes x*y via the quadratic polarization identity.
        let mut b = NetBuilder::new(Alphabet::one_bit(), 2);
        let hs = b
            .add_node(
                Activation::Quad,
                0.0,
                &[(Src::Input(0), 1.0), (Src::Input(1), 1.0)],
            )
            .unwrap();
        let hx = b
            .add_node(Activation::Quad, 0.0, &[(Src::Input(0), 1.0)])
            .unwrap();
        let hy = b
            .add_node(Activation::Quad, 0.0, &[(Src::Input(1), 1.0)])
            .unwrap();
        let out = b
            .add_node(
                Activation::Identity,
                0.0,
                &[
                    (Src::Node(hs), 1.0),
                    (Src::Node(hx), -1.0),
                    (Src::Node(hy), -1.0),
                ],
            )
            .unwrap();
        b.mark_output(out).unwrap();
        b.finish().unwrap()
    }

    #[test]
    fn polarization_product_evaluates() {
        let net = tiny_net();
        for &(x, y) in &[(0.0, 0.0), (0.5, 0.25), (-1.5, -2.0), (1.0, -1.0)] {
            let got = net.evaluate(&[x, y]).unwrap()[0];
            assert!((got - x * y).abs() < 1e-15, "({x},{y}): {got}");
        }
        assert_eq!(net.size(), SizeTriple::new(2, 4, 7));
        assert!(net.audit_alphabet());
    }

    #[test]
    fn product_oracle_negative_inputs() {
        // Worked instance: (-1.5) * (-2) from 6.125 - 1.125 - 2.
        let net = tiny_net();
        let got = net.evaluate(&[-1.5, -2.0]).unwrap()[0];
        assert!((got - 3.0).abs() < 1e-15);
    }

    #[test]
    fn batch_matches_single() {
        let net = tiny_net();
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 / 40.0, 1.0 - i as f64 / 80.0])
            .collect();
        let batch = net.evaluate_batch(&pts).unwrap();
        for (p, out) in pts.iter().zip(&batch) {
            assert_eq!(*out, net.evaluate(p).unwrap());
        }
    }

    #[test]
    fn builder_rejects_bad_graphs() {
        let mut b = NetBuilder::new(Alphabet::one_bit(), 1);
        // Weight outside the alphabet.
        assert!(b
            .add_node(Activation::Relu, 0.0, &[(Src::Input(0), 0.3)])
            .is_err());
        // Bias outside the alphabet.
        assert!(b
            .add_node(Activation::Relu, 0.5, &[(Src::Input(0), 1.0)])
            .is_err());
        // Unknown input.
        assert!(b
            .add_node(Activation::Relu, 0.0, &[(Src::Input(3), 1.0)])
            .is_err());
        // No edges.
        assert!(b.add_node(Activation::Relu, 0.0, &[]).is_err());
        let id = b
            .add_node(Activation::Relu, 0.0, &[(Src::Input(0), 1.0)])
            .unwrap();
        // Same-layer edge through explicit placement.
        assert!(b
            .add_node_at(1, Activation::Relu, 0.0, &[(Src::Node(id), 1.0)])
            .is_err());
        // Duplicate edge.
        assert!(b
            .add_node(
                Activation::Relu,
                0.0,
                &[(Src::Node(id), 1.0), (Src::Node(id), -1.0)]
            )
            .is_err());
        // Finishing without outputs.
        assert!(b.finish().is_err());
    }

    #[test]
    fn skip_edges_and_explicit_layers() {
        let mut b = NetBuilder::new(Alphabet::one_bit(), 1);
        let a = b
            .add_node(Activation::Identity, 0.0, &[(Src::Input(0), 1.0)])
            .unwrap();
        let deep = b
            .add_node_at(4, Activation::Identity, 0.0, &[(Src::Node(a), 1.0)])
            .unwrap();
        // Skip from layer 1 and from the input straight into layer 5.
        let mix = b
            .add_node(
                Activation::Identity,
                0.0,
                &[
                    (Src::Node(a), 1.0),
                    (Src::Node(deep), 1.0),
                    (Src::Input(0), -1.0),
                ],
            )
            .unwrap();
        assert_eq!(b.node_layer(mix), 5);
        b.mark_output(mix).unwrap();
        let net = b.finish().unwrap();
        let v = net.evaluate(&[0.7]).unwrap()[0];
        assert!((v - 0.7).abs() < 1e-15);
        assert_eq!(net.size().layers, 5);
    }

    #[test]
    fn size_addition_combines_blocks() {
        let a = SizeTriple::new(2, 4, 7);
        let b = SizeTriple::new(3, 1, 2);
        assert_eq!(a + b, SizeTriple::new(3, 5, 9));
        assert_eq!(format!("{}", a), "(L=2, N=4, P=7)");
    }

    #[test]
    fn into_builder_roundtrip_extends() {
        let net = tiny_net();
        let mut b = net.into_builder();
        b.clear_outputs();
        let top = b
            .add_node(Activation::Identity, 1.0, &[(Src::Node(3), -1.0)])
            .unwrap();
        b.mark_output(top).unwrap();
        let net = b.finish().unwrap();
        // Now computes 1 - x*y.
        let got = net.evaluate(&[0.5, 0.5]).unwrap()[0];
        assert!((got - 0.75).abs() < 1e-15);
    }

    #[test]
    fn summation_order_is_deterministic() {
        // Sources sort inputs before nodes; repeated evaluation is
        // bitwise stable.
        let net = tiny_net();
        let a = net.evaluate(&[0.123, 0.456]).unwrap();
        for _ in 0..10 {
            assert_eq!(net.evaluate(&[0.123, 0.456]).unwrap(), a);
        }
    }
}
