//! Hierarchical event/rating graphs and gated graph convolution over them.

mod gcn;

pub use gcn::{pool_nodes, GatedGcn};

use crate::taxonomy::{group_fine_to_coarse, N_COARSE, N_FINE};
use crate::tensor::{Tape, TensorError, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("edge endpoint {0} out of range for {1} nodes")]
    Endpoint(usize, usize),
    #[error("node index out of range: {0:?}")]
    NodeIndex(NodeKind),
    #[error("fcAR graph needs cAE node features")]
    MissingCoarse,
    #[error("{what} features have shape {shape:?}, expected (B, {count}, D)")]
    FeatureShape {
        what: &'static str,
        shape: Vec<usize>,
        count: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Param(#[from] crate::params::ParamError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index")]
pub enum NodeKind {
    #[serde(rename = "fAE")]
    Fae(usize),
    #[serde(rename = "cAE")]
    Cae(usize),
    #[serde(rename = "AR")]
    Ar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    FaeCae,
    CaeAr,
    FaeAr,
    FaeFae,
    CaeCae,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] = [
        Self::FaeCae,
        Self::CaeAr,
        Self::FaeAr,
        Self::FaeFae,
        Self::CaeCae,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphVariant {
    /// Fine events linked straight to the rating node.
    #[serde(rename = "fAR")]
    Far,
    /// Fine events, coarse events, rating.
    #[serde(rename = "fcAR")]
    Fcar,
}

/// Node list plus undirected typed edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalGraph {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
}

impl HierarchicalGraph {
    pub fn new(nodes: Vec<NodeKind>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        for &n in &nodes {
            let ok = match n {
                NodeKind::Fae(i) => i < N_FINE,
                NodeKind::Cae(i) => i < N_COARSE,
                NodeKind::Ar => true,
            };
            if !ok {
                return Err(GraphError::NodeIndex(n));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            for end in [e.a, e.b] {
                if end >= nodes.len() {
                    return Err(GraphError::Endpoint(end, nodes.len()));
                }
            }
            if e.a == e.b {
                return Err(GraphError::SelfLoop(e.a));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(GraphError::DuplicateEdge(e.a, e.b));
            }
        }
        Ok(Self { nodes, edges })
    }

    /// Standard topology: fine nodes, then coarse nodes (fcAR), then the rating node.
    pub fn build(variant: GraphVariant, intra_level: bool) -> Self {
        let mut nodes: Vec<NodeKind> = (0..N_FINE).map(NodeKind::Fae).collect();
        let mut edges = Vec::new();
        let ar;
        match variant {
            GraphVariant::Far => {
                ar = N_FINE;
                edges.extend((0..N_FINE).map(|f| Edge {
                    a: f,
                    b: ar,
                    kind: EdgeKind::FaeAr,
                }));
            }
            GraphVariant::Fcar => {
                nodes.extend((0..N_COARSE).map(NodeKind::Cae));
                ar = N_FINE + N_COARSE;
                edges.extend((0..N_FINE).map(|f| Edge {
                    a: f,
                    b: N_FINE + group_fine_to_coarse(f).expect("fine index in range"),
                    kind: EdgeKind::FaeCae,
                }));
                edges.extend((0..N_COARSE).map(|c| Edge {
                    a: N_FINE + c,
                    b: ar,
                    kind: EdgeKind::CaeAr,
                }));
                if intra_level {
                    for i in 0..N_COARSE {
                        for j in i + 1..N_COARSE {
                            edges.push(Edge {
                                a: N_FINE + i,
                                b: N_FINE + j,
                                kind: EdgeKind::CaeCae,
                            });
                        }
                    }
                }
            }
        }
        if intra_level {
            for i in 0..N_FINE {
                for j in i + 1..N_FINE {
                    edges.push(Edge {
                        a: i,
                        b: j,
                        kind: EdgeKind::FaeFae,
                    });
                }
            }
        }
        nodes.push(NodeKind::Ar);
        debug_assert_eq!(nodes.len(), ar + 1);
        Self::new(nodes, edges).expect("standard topology is well formed")
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Edge kinds present, sorted.
    pub fn edge_kinds(&self) -> Vec<EdgeKind> {
        let mut k: Vec<EdgeKind> = self.edges.iter().map(|e| e.kind).collect();
        k.sort();
        k.dedup();
        k
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.a == node || e.b == node)
            .count()
    }

    /// Both directions of every edge as `(src, dst, kind)`.
    pub fn incidences(&self) -> Vec<(usize, usize, EdgeKind)> {
        self.edges
            .iter()
            .flat_map(|e| [(e.b, e.a, e.kind), (e.a, e.b, e.kind)])
            .collect()
    }

    /// Reorders nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let mut inv = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Self::new(
            perm.iter().map(|&o| self.nodes[o]).collect(),
            self.edges
                .iter()
                .map(|e| Edge {
                    a: inv[e.a],
                    b: inv[e.b],
                    kind: e.kind,
                })
                .collect(),
        )
    }

    /// Stacks head outputs into `(B, N, D)` in this graph's standard node order.
    pub fn node_features(
        &self,
        tape: &Tape<impl crate::tensor::Scalar>,
        fae: Var,
        cae: Option<Var>,
        ar: Var,
    ) -> Result<Var, GraphError> {
        let check = |v: Var, what: &'static str, count: usize| {
            let shape = tape.shape(v);
            if shape.len() != 3 || shape[1] != count {
                return Err(GraphError::FeatureShape { what, shape, count });
            }
            Ok(())
        };
        check(fae, "fAE", N_FINE)?;
        check(ar, "AR", 1)?;
        let has_coarse = self.nodes.iter().any(|n| matches!(n, NodeKind::Cae(_)));
        let parts = match (has_coarse, cae) {
            (true, Some(c)) => {
                check(c, "cAE", N_COARSE)?;
                vec![fae, c, ar]
            }
            (true, None) => return Err(GraphError::MissingCoarse),
            (false, _) => vec![fae, ar],
        };
        Ok(tape.concat(&parts, 1)?)
    }
}
