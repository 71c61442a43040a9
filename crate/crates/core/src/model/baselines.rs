use super::{BaselineConfig, InputShape, ModelError, Predictions};
use crate::params::{Initializer, Session};
use crate::taxonomy::N_FINE;
use crate::tensor::{Scalar, Var};

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

fn apply<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    prefix: &str,
    x: Var,
) -> Result<Var, ModelError> {
    let w = sess.param(&format!("{prefix}.weight"))?;
    let b = sess.param(&format!("{prefix}.bias"))?;
    Ok(sess.tape.linear(x, w, b)?)
}

fn init_outputs<T: Scalar>(init: &mut Initializer<'_, T>, fan_in: usize) -> Result<(), ModelError> {
    linear(init, "aec", fan_in, N_FINE)?;
    linear(init, "arp", fan_in, 1)
}

fn outputs<T: Scalar>(sess: &mut Session<'_, '_, T>, h: Var) -> Result<Predictions, ModelError> {
    let fae = apply(sess, "aec", h)?;
    let ar = apply(sess, "arp", h)?;
    Ok(Predictions {
        fae: sess.tape.sigmoid(fae),
        cae: None,
        ar,
    })
}

pub(super) fn init_dnn<T: Scalar>(
    init: &mut Initializer<'_, T>,
    cfg: &BaselineConfig,
    input: InputShape,
) -> Result<(), ModelError> {
    let mut fan_in = input.frames * input.n_mels;
    for (i, &w) in cfg.dnn_widths.iter().enumerate() {
        linear(init, &format!("fc{i}"), fan_in, w)?;
        fan_in = w;
    }
    init_outputs(init, fan_in)
}

pub(super) fn forward_dnn<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    cfg: &BaselineConfig,
    x: Var,
) -> Result<Predictions, ModelError> {
    let tape = sess.tape;
    let s = tape.shape(x);
    let mut h = tape.reshape(x, &[s[0], s[1] * s[2] * s[3]])?;
    for i in 0..cfg.dnn_widths.len() {
        h = tape.relu(apply(sess, &format!("fc{i}"), h)?);
    }
    outputs(sess, h)
}

/// Spatial extent after `blocks` 2x2 poolings.
fn pooled_extent(input: InputShape, blocks: usize) -> Result<(usize, usize), ModelError> {
    let need = 1usize << blocks;
    if input.frames < need || input.n_mels < need {
        return Err(ModelError::InputTooSmall {
            frames: input.frames,
            n_mels: input.n_mels,
            blocks,
            need,
        });
    }
    let (mut h, mut w) = (input.frames, input.n_mels);
    for _ in 0..blocks {
        h /= 2;
        w /= 2;
    }
    Ok((h, w))
}

pub(super) fn init_cnn<T: Scalar>(
    init: &mut Initializer<'_, T>,
    cfg: &BaselineConfig,
    input: InputShape,
) -> Result<(), ModelError> {
    let (h, w) = pooled_extent(input, cfg.cnn_channels.len())?;
    let mut c_in = 1;
    for (i, &c) in cfg.cnn_channels.iter().enumerate() {
        init.kaiming(&format!("conv{i}.weight"), &[c, c_in, 3, 3], c_in * 9)?;
        init.constant(&format!("conv{i}.bias"), &[c], 0.0)?;
        c_in = c;
    }
    init_outputs(init, c_in * h * w)
}

pub(super) fn forward_cnn<T: Scalar>(
    sess: &mut Session<'_, '_, T>,
    cfg: &BaselineConfig,
    x: Var,
) -> Result<Predictions, ModelError> {
    let tape = sess.tape;
    let mut h = x;
    for i in 0..cfg.cnn_channels.len() {
        let k = sess.param(&format!("conv{i}.weight"))?;
        let b = sess.param(&format!("conv{i}.bias"))?;
        h = tape.avg_pool2d(tape.relu(tape.conv2d(h, k, Some(b))?))?;
    }
    let s = tape.shape(h);
    let flat = tape.reshape(h, &[s[0], s[1..].iter().product()])?;
    outputs(sess, flat)
}
