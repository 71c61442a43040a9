use super::{EdgeKind, GraphError, HierarchicalGraph};
use crate::params::{Initializer, ParamError, Session};
use crate::tensor::{Scalar, Tape, Var};

/// Added to the gate sum before dividing.
pub const GATE_EPS: f64 = 1e-6;

/// One residual gated graph convolution layer.
///
/// Parameters live under `prefix`: `w1`..`w5` (`D x D`, applied as `h W`), a
/// `K x D` edge embedding with one row per edge kind present in the graph it
/// was built for, and batch norm `bn`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedGcn {
    prefix: String,
    kinds: Vec<EdgeKind>,
    dim: usize,
}

impl GatedGcn {
    pub fn init<T: Scalar>(
        init: &mut Initializer<'_, T>,
        prefix: &str,
        graph: &HierarchicalGraph,
        dim: usize,
    ) -> Result<Self, ParamError> {
        for w in ["w1", "w2", "w3", "w4", "w5"] {
            init.kaiming(&format!("{prefix}.{w}"), &[dim, dim], dim)?;
        }
        let kinds = graph.edge_kinds();
        if !kinds.is_empty() {
            init.kaiming(
                &format!("{prefix}.edge_embedding"),
                &[kinds.len(), dim],
                dim,
            )?;
        }
        init.batch_norm(&format!("{prefix}.bn"), dim)?;
        Ok(Self {
            prefix: prefix.to_string(),
            kinds,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `h: (B, N, D)` to `(B, N, D)`.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, '_, T>,
        graph: &HierarchicalGraph,
        h: Var,
    ) -> Result<Var, GraphError> {
        let p = |s: &str| format!("{}.{s}", self.prefix);
        let tape: &Tape<T> = sess.tape;
        let shape = tape.shape(h);
        if shape.len() != 3 || shape[1] != graph.n_nodes() || shape[2] != self.dim {
            return Err(GraphError::FeatureShape {
                what: "node",
                shape,
                count: graph.n_nodes(),
            });
        }
        let (b, n, d) = (shape[0], shape[1], shape[2]);
        let w1 = sess.param(&p("w1"))?;
        let mut pre = tape.matmul(h, w1)?;

        let inc = graph.incidences();
        if !inc.is_empty() {
            let src: Vec<usize> = inc.iter().map(|i| i.0).collect();
            let dst: Vec<usize> = inc.iter().map(|i| i.1).collect();
            let rows: Vec<usize> = inc
                .iter()
                .map(|i| {
                    self.kinds.iter().position(|&k| k == i.2).ok_or_else(|| {
                        GraphError::Tensor(crate::tensor::TensorError::Invalid {
                            op: "gated_gcn",
                            msg: format!("edge kind {:?} has no embedding in this layer", i.2),
                        })
                    })
                })
                .collect::<Result<_, _>>()?;
            let (w2, w3, w4, w5) = (
                sess.param(&p("w2"))?,
                sess.param(&p("w3"))?,
                sess.param(&p("w4"))?,
                sess.param(&p("w5"))?,
            );
            let emb = sess.param(&p("edge_embedding"))?;

            let to_dst = tape.index_select(tape.matmul(h, w4)?, 1, &dst)?;
            let from_src = tape.index_select(tape.matmul(h, w5)?, 1, &src)?;
            let kind_term = tape.index_select(tape.matmul(emb, w3)?, 0, &rows)?;
            let e_hat = tape.add(tape.add(to_dst, from_src)?, kind_term)?;
            let gate = tape.sigmoid(e_hat);
            let msg = tape.mul(gate, tape.index_select(tape.matmul(h, w2)?, 1, &src)?)?;
            let num = tape.index_add(msg, 1, &dst, n)?;
            let den = tape.add_scalar(tape.index_add(gate, 1, &dst, n)?, GATE_EPS);
            pre = tape.add(pre, tape.div(num, den)?)?;
        }

        let flat = tape.reshape(pre, &[b * n, d])?;
        let normed = sess.batch_norm(flat, &p("bn"), 1)?;
        let update = tape.reshape(tape.relu(normed), &[b, n, d])?;
        Ok(tape.add(h, update)?)
    }
}

/// Mean over the feature axis: `(B, N, D)` to `(B, N)`.
pub fn pool_nodes<T: Scalar>(tape: &Tape<T>, h: Var) -> Result<Var, GraphError> {
    Ok(tape.mean_axis(h, 2)?)
}
