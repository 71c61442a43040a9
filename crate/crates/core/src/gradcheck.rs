//! Finite-difference checks of every differentiable op and the full model.

use crate::graph::{GatedGcn, GraphVariant, HierarchicalGraph};
use crate::model::{EncoderConfig, InputShape, Model, ModelConfig, Variant};
use crate::params::{Initializer, ParamStore, Session};
use crate::tensor::{finite_diff_check, RunningStats, Tape, Tensor, TensorError, Var};
use crate::train::{bce, mse, total_loss, Objective, Targets};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

pub const TOLERANCE: f64 = 1e-4;
pub const QUADRATIC_TOLERANCE: f64 = 1e-9;
const EPS: f64 = 1e-5;

/// Names reported by [`run`], in order (the faulty fixture is extra).
pub const OPS: &[&str] = &[
    "quadratic",
    "add",
    "add_broadcast",
    "sub",
    "mul",
    "div",
    "scale",
    "add_scalar",
    "relu",
    "sigmoid",
    "log",
    "clamp",
    "dropout",
    "matmul",
    "linear",
    "conv2d",
    "batch_norm_train",
    "batch_norm_eval",
    "sum_axis",
    "mean_axis",
    "max_axis",
    "sum_all",
    "mean_all",
    "avg_pool2d",
    "concat",
    "narrow",
    "reshape",
    "index_select",
    "index_add",
    "bce",
    "mse",
    "gated_gcn",
    "model_fcar_sl",
];

pub const FAULTY: &str = "faulty_fixture";

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Deterministic values in roughly `[-1, 1]`.
fn wave(shape: &[usize], phase: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| ((i as f64 + 1.0) * 0.731 + phase).sin())
}

/// `sum(y * r)` for a fixed `r`, so every output coordinate matters differently.
fn project(tape: &Tape<f64>, y: Var) -> Result<Var, TensorError> {
    let r = tape.constant(wave(&tape.shape(y), 0.4).map(|v| v + 1.5));
    Ok(tape.sum_all(tape.mul(y, r)?))
}

type Check = Box<dyn Fn(&Tape<f64>, &[Var]) -> Result<Var, TensorError>>;

fn op(
    inputs: Vec<Tensor<f64>>,
    f: impl Fn(&Tape<f64>, &[Var]) -> Result<Var, TensorError> + 'static,
) -> (Vec<Tensor<f64>>, Check) {
    (inputs, Box::new(move |t, v| project(t, f(t, v)?)))
}

fn invalid(e: impl std::fmt::Display) -> TensorError {
    TensorError::Invalid {
        op: "gradcheck",
        msg: e.to_string(),
    }
}

/// Values bounded away from zero, for ops with a kink or pole there.
fn away_from_zero(shape: &[usize], phase: f64) -> Tensor<f64> {
    wave(shape, phase).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
}

fn case(name: &'static str) -> (Vec<Tensor<f64>>, Check) {
    let a = || wave(&[3, 4], 0.0);
    let b = || wave(&[3, 4], 1.3);
    match name {
        "quadratic" => (
            vec![a()],
            Box::new(|t, v| Ok(t.sum_all(t.mul(v[0], v[0])?))),
        ),
        "add" => op(vec![a(), b()], |t, v| t.add(v[0], v[1])),
        "add_broadcast" => op(vec![a(), wave(&[4], 2.0)], |t, v| t.add(v[0], v[1])),
        "sub" => op(vec![a(), b()], |t, v| t.sub(v[0], v[1])),
        "mul" => op(vec![a(), b()], |t, v| t.mul(v[0], v[1])),
        "div" => op(vec![a(), away_from_zero(&[3, 4], 1.3)], |t, v| {
            t.div(v[0], v[1])
        }),
        "scale" => op(vec![a()], |t, v| Ok(t.scale(v[0], -2.5))),
        "add_scalar" => op(vec![a()], |t, v| Ok(t.add_scalar(v[0], 0.7))),
        "relu" => op(vec![away_from_zero(&[3, 4], 0.0)], |t, v| Ok(t.relu(v[0]))),
        "sigmoid" => op(vec![a().map(|x| 3.0 * x)], |t, v| Ok(t.sigmoid(v[0]))),
        "log" => op(vec![a().map(|x| x + 1.5)], |t, v| Ok(t.log(v[0]))),
        // inputs stay clear of the bounds at +-0.5 +- 0.03
        "clamp" => op(
            vec![a().map(|x| {
                if (x.abs() - 0.5).abs() < 0.03 {
                    x * 1.2
                } else {
                    x
                }
            })],
            |t, v| Ok(t.clamp(v[0], -0.5, 0.5)),
        ),
        "dropout" => op(vec![a()], |t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            t.dropout(v[0], 0.4, true, &mut rng)
        }),
        "matmul" => op(vec![wave(&[2, 3, 4], 0.0), wave(&[4, 5], 0.9)], |t, v| {
            t.matmul(v[0], v[1])
        }),
        "linear" => op(vec![a(), wave(&[4, 2], 0.5), wave(&[2], 1.0)], |t, v| {
            t.linear(v[0], v[1], v[2])
        }),
        "conv2d" => op(
            vec![
                wave(&[2, 2, 5, 4], 0.0),
                wave(&[3, 2, 3, 3], 0.6),
                wave(&[3], 0.2),
            ],
            |t, v| t.conv2d(v[0], v[1], Some(v[2])),
        ),
        "batch_norm_train" | "batch_norm_eval" => {
            let train = name == "batch_norm_train";
            op(
                vec![
                    wave(&[3, 2, 4], 0.0),
                    wave(&[2], 0.3).map(|x| x + 1.5),
                    wave(&[2], 0.8),
                ],
                move |t, v| {
                    let (mut mean, mut var) = (vec![0.1, -0.2], vec![0.9, 1.3]);
                    let stats = RunningStats {
                        mean: &mut mean,
                        var: &mut var,
                    };
                    t.batch_norm(v[0], v[1], v[2], stats, 1, train)
                },
            )
        }
        "sum_axis" => op(vec![wave(&[2, 3, 4], 0.0)], |t, v| t.sum_axis(v[0], 1)),
        "mean_axis" => op(vec![wave(&[2, 3, 4], 0.0)], |t, v| t.mean_axis(v[0], 2)),
        // distinct values so the arg-max is stable under the probe step
        "max_axis" => op(
            vec![Tensor::from_fn(&[2, 3, 4], |i| ((i * 7) % 24) as f64 * 0.1)],
            |t, v| t.max_axis(v[0], 1),
        ),
        "sum_all" => op(vec![a()], |t, v| Ok(t.sum_all(v[0]))),
        "mean_all" => op(vec![a()], |t, v| Ok(t.mean_all(v[0]))),
        "avg_pool2d" => op(vec![wave(&[1, 2, 5, 4], 0.0)], |t, v| t.avg_pool2d(v[0])),
        "concat" => op(vec![a(), wave(&[3, 2], 0.5)], |t, v| {
            t.concat(&[v[0], v[1]], 1)
        }),
        "narrow" => op(vec![a()], |t, v| t.narrow(v[0], 1, 1, 2)),
        "reshape" => op(vec![a()], |t, v| t.reshape(v[0], &[2, 6])),
        "index_select" => op(vec![a()], |t, v| t.index_select(v[0], 1, &[3, 0, 3, 1])),
        "index_add" => op(vec![wave(&[2, 5], 0.0)], |t, v| {
            t.index_add(v[0], 1, &[0, 2, 0, 1, 2], 3)
        }),
        "bce" => (
            vec![a().map(|x| 0.5 + 0.4 * x)],
            Box::new(|t, v| {
                let y = t.constant(Tensor::from_fn(&[3, 4], |i| (i % 3 == 0) as u8 as f64));
                bce(t, v[0], y)
            }),
        ),
        "mse" => (
            vec![a()],
            Box::new(|t, v| {
                let y = t.constant(wave(&[3, 4], 2.2));
                mse(t, v[0], y)
            }),
        ),
        "gated_gcn" => gcn_case(),
        "model_fcar_sl" => model_case(),
        FAULTY => (
            vec![a().map(|x| x + 2.0)],
            Box::new(|t, v| {
                // forward x^2 with a backward rule of 3x
                let value = t.value(v[0]).map(|x| x * x);
                let y = t.custom(
                    &[v[0]],
                    value,
                    Rc::new(|g, xs, _| {
                        vec![Tensor::from_fn(xs[0].shape(), |i| {
                            g.data()[i] * 3.0 * xs[0].data()[i]
                        })]
                    }),
                );
                Ok(t.sum_all(y))
            }),
        ),
        other => unreachable!("unregistered op {other}"),
    }
}

fn gcn_case() -> (Vec<Tensor<f64>>, Check) {
    let graph = HierarchicalGraph::build(GraphVariant::Fcar, false);
    let dim = 3;
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layer = GatedGcn::init(
        &mut Initializer {
            store: &mut store,
            rng: &mut rng,
        },
        "gcn",
        &graph,
        dim,
    )
    .expect("fresh store");
    let mut inputs = vec![wave(&[2, graph.n_nodes(), dim], 0.0)];
    inputs.extend(
        store
            .param_ids()
            .map(|id| store.entries()[id].value.clone()),
    );
    (
        inputs,
        Box::new(move |t, v| {
            let mut s = store.clone();
            let mut sess =
                Session::new(&mut s, t, true, ChaCha8Rng::seed_from_u64(0)).with_bound(&v[1..]);
            let h = layer.forward(&mut sess, &graph, v[0]).map_err(invalid)?;
            project(t, h)
        }),
    )
}

/// Small-plan fcAR-SL on a 2-clip batch, train mode with a fixed dropout mask.
pub fn tiny_model() -> Model<f64> {
    let mut c = ModelConfig::new(Variant::FcarSl);
    c.encoder = EncoderConfig {
        channels: vec![2, 2, 2, 2],
        embed_dim: 4,
        node_dim: 3,
        dropout: 0.2,
    };
    Model::<f32>::new(
        c,
        InputShape {
            frames: 16,
            n_mels: 16,
        },
        5,
    )
    .expect("valid config")
    .cast()
}

fn model_case() -> (Vec<Tensor<f64>>, Check) {
    let model = tiny_model();
    let in_shape = [2, 1, 16, 16];
    let mut inputs = vec![wave(&in_shape, 0.0).map(|x| 3.0 * x)];
    inputs.extend(
        model
            .store
            .param_ids()
            .map(|id| model.store.entries()[id].value.clone()),
    );
    (
        inputs,
        Box::new(move |t, v| {
            let mut m = model.clone();
            let (preds, _) = m
                .forward(t, v[0], true, 9, Some(&v[1..]))
                .map_err(invalid)?;
            let y = Targets {
                fae: t.constant(Tensor::from_fn(&[2, 24], |i| (i % 5 == 0) as u8 as f64)),
                cae: t.constant(Tensor::from_fn(&[2, 7], |i| (i % 2 == 0) as u8 as f64)),
                ar: t.constant(Tensor::new(&[2, 1], vec![3.0, 7.5]).expect("shape")),
            };
            let (total, _) =
                total_loss(t, Variant::FcarSl, Objective::Joint, &preds, &y).map_err(invalid)?;
            Ok(total)
        }),
    )
}

pub fn check(name: &'static str) -> Result<OpCheck, TensorError> {
    let (inputs, f) = case(name);
    let r = finite_diff_check(&inputs, EPS, f)?;
    Ok(OpCheck {
        name,
        max_rel_error: r.max_rel_error,
        tolerance: if name == "quadratic" {
            QUADRATIC_TOLERANCE
        } else {
            TOLERANCE
        },
        coordinates: r.coordinates,
    })
}

/// Every registered op, plus the deliberately wrong fixture when asked.
pub fn run(with_faulty_fixture: bool) -> Result<Vec<OpCheck>, TensorError> {
    let mut names: Vec<&'static str> = OPS.to_vec();
    if with_faulty_fixture {
        names.push(FAULTY);
    }
    names.into_iter().map(check).collect()
}
