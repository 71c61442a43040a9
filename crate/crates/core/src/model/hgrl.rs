use super::{EncoderConfig, InputShape, ModelConfig, ModelError, Predictions};
use crate::graph::{pool_nodes, GatedGcn, HierarchicalGraph};
use crate::params::{Initializer, Session};
use crate::taxonomy::{N_COARSE, N_FINE};
use crate::tensor::{Scalar, Var};

pub(super) fn check_input(enc: &EncoderConfig, input: InputShape) -> Result<(), ModelError> {
    let need = 1usize << enc.channels.len();
    if input.frames < need || input.n_mels < need {
        return Err(ModelError::InputTooSmall {
            frames: input.frames,
            n_mels: input.n_mels,
            blocks: enc.channels.len(),
            need,
        });
    }
    Ok(())
}

pub(super) fn init<T: Scalar>(
    init: &mut Initializer<'_, T>,
    enc: &EncoderConfig,
    coarse: bool,
) -> Result<(), ModelError> {
    let mut c_in = 1;
    for (i, &c) in enc.channels.iter().enumerate() {
        for j in 0..2 {
            let cin = if j == 0 { c_in } else { c };
            init.kaiming(
                &format!("encoder.block{i}.conv{j}.weight"),
                &[c, cin, 3, 3],
                cin * 9,
            )?;
            init.batch_norm(&format!("encoder.block{i}.bn{j}"), c)?;
        }
        c_in = c;
    }
    let heads: &[(&str, usize)] = if coarse {
        &[("ar", 1), ("cae", N_COARSE), ("fae", N_FINE)]
    } else {
        &[("ar", 1), ("fae", N_FINE)]
    };
    for &(head, nodes) in heads {
        linear(init, &format!("head.{head}.embed"), c_in, enc.embed_dim)?;
        for k in 0..nodes {
            linear(
                init,
                &node_name(head, k, nodes),
                enc.embed_dim,
                enc.node_dim,
            )?;
        }
    }
    Ok(())
}

fn node_name(head: &str, k: usize, nodes: usize) -> String {
    if nodes == 1 {
        format!("head.{head}.node")
    } else {
        format!("head.{head}.node{k}")
    }
}

fn linear<T: Scalar>(
    init: &mut Initializer<'_, T>,
    prefix: &str,
    fan_in: usize,
    out: usize,
) -> Result<(), ModelError> {
    init.kaiming(&format!("{prefix}.weight"), &[fan_in, out], fan_in)?;
    init.constant(&format!("{prefix}.bias"), &[out], 0.0)?;
    Ok(())
}

fn apply_linear<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    prefix: &str,
    x: Var,
) -> Result<Var, ModelError> {
    let w = sess.param(&format!("{prefix}.weight"))?;
    let b = sess.param(&format!("{prefix}.bias"))?;
    Ok(sess.tape.linear(x, w, b)?)
}

/// `(B, 1, T, F)` to `(B, C_last)`.
pub(super) fn encode<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    enc: &EncoderConfig,
    x: Var,
) -> Result<Var, ModelError> {
    let tape = sess.tape;
    let mut h = x;
    for i in 0..enc.channels.len() {
        for j in 0..2 {
            let k = sess.param(&format!("encoder.block{i}.conv{j}.weight"))?;
            let conv = tape.conv2d(h, k, None)?;
            h = tape.relu(sess.batch_norm(conv, &format!("encoder.block{i}.bn{j}"), 1)?);
        }
        h = sess.dropout(tape.avg_pool2d(h)?, enc.dropout)?;
    }
    let shape = tape.shape(h);
    let flat = tape.reshape(h, &[shape[0], shape[1], shape[2] * shape[3]])?;
    Ok(tape.add(tape.mean_axis(flat, 2)?, tape.max_axis(flat, 2)?)?)
}

/// Encoder output to `(ar, cae, fae)` node features.
pub(super) fn node_heads<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    enc: &EncoderConfig,
    coarse: bool,
    z: Var,
) -> Result<(Var, Option<Var>, Var), ModelError> {
    let tape = sess.tape;
    let batch = tape.shape(z)[0];
    let head =
        |sess: &mut Session<'_, '_, T>, name: &str, nodes: usize| -> Result<Var, ModelError> {
            let e = apply_linear(sess, &format!("head.{name}.embed"), z)?;
            let e = sess.dropout(tape.relu(e), enc.dropout)?;
            let parts = (0..nodes)
                .map(|k| {
                    let v = apply_linear(sess, &node_name(name, k, nodes), e)?;
                    Ok(tape.reshape(v, &[batch, 1, enc.node_dim])?)
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok(tape.concat(&parts, 1)?)
        };
    let ar = head(sess, "ar", 1)?;
    let cae = if coarse {
        Some(head(sess, "cae", N_COARSE)?)
    } else {
        None
    };
    let fae = head(sess, "fae", N_FINE)?;
    Ok((ar, cae, fae))
}

pub(super) fn forward<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    cfg: &ModelConfig,
    graph: &HierarchicalGraph,
    layers: &[GatedGcn],
    x: Var,
) -> Result<Predictions, ModelError> {
    let coarse = cfg.variant.has_coarse();
    let z = encode(sess, &cfg.encoder, x)?;
    let (ar, cae, fae) = node_heads(sess, &cfg.encoder, coarse, z)?;
    let tape = sess.tape;
    let mut h = graph.node_features(tape, fae, cae, ar)?;
    for layer in layers {
        h = layer.forward(sess, graph, h)?;
    }
    let pooled = pool_nodes(tape, h)?;
    let n = graph.n_nodes();
    let p_fae = tape.sigmoid(tape.narrow(pooled, 1, 0, N_FINE)?);
    let p_cae = if coarse {
        Some(tape.sigmoid(tape.narrow(pooled, 1, N_FINE, N_COARSE)?))
    } else {
        None
    };
    let p_ar = tape.narrow(pooled, 1, n - 1, 1)?;
    Ok(Predictions {
        fae: p_fae,
        cae: p_cae,
        ar: p_ar,
    })
}
