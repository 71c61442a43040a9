use super::shape_ops::AxisGeom;
use super::tape::Op;
use super::{split_axis, Result, Scalar, Tape, Tensor, TensorError, Var};

pub const BN_EPS: f64 = 1e-5;
/// Fraction of the previous running statistic kept on each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Mutable view of a batch-norm layer's running mean and variance.
pub struct RunningStats<'a, T> {
    pub mean: &'a mut [T],
    pub var: &'a mut [T],
}

pub(crate) struct BnSaved<T> {
    geom: AxisGeom,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

fn per_channel(geom: &AxisGeom, mut f: impl FnMut(usize, usize)) {
    for o in 0..geom.outer {
        for c in 0..geom.len {
            let base = (o * geom.len + c) * geom.inner;
            for i in 0..geom.inner {
                f(c, base + i);
            }
        }
    }
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    saved: &BnSaved<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let gamma = inputs[1].data();
    let c = saved.geom.len;
    let gd = g.data();
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    per_channel(&saved.geom, |ch, idx| {
        sum_dy[ch] += gd[idx];
        sum_dy_xhat[ch] += gd[idx] * saved.xhat[idx];
    });

    let gx = needs[0].then(|| {
        let mut out = vec![T::zero(); gd.len()];
        if saved.train {
            let m = T::of((saved.geom.outer * saved.geom.inner) as f64);
            per_channel(&saved.geom, |ch, idx| {
                let k = gamma[ch] * saved.inv_std[ch] / m;
                out[idx] = k * (m * gd[idx] - sum_dy[ch] - saved.xhat[idx] * sum_dy_xhat[ch]);
            });
        } else {
            per_channel(&saved.geom, |ch, idx| {
                out[idx] = gd[idx] * gamma[ch] * saved.inv_std[ch];
            });
        }
        Tensor::new(g.shape(), out).expect("input shape")
    });
    let ggamma = needs[1].then(|| Tensor::new(&[c], sum_dy_xhat).expect("gamma shape"));
    let gbeta = needs[2].then(|| Tensor::new(&[c], sum_dy).expect("beta shape"));
    vec![gx, ggamma, gbeta]
}

impl<T: Scalar> Tape<T> {
    /// Per-channel batch normalization along `channel_axis`.
    ///
    /// Training mode normalizes with the biased batch variance and folds the
    /// batch statistics into `stats` (unbiased variance, momentum
    /// [`BN_MOMENTUM`]). Evaluation mode normalizes with `stats` as is.
    pub fn batch_norm(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: RunningStats<'_, T>,
        channel_axis: usize,
        train: bool,
    ) -> Result<Var> {
        let (value, saved) = self.with_values(&[x, gamma, beta], |v| {
            let (outer, c, inner) = split_axis(v[0].shape(), channel_axis, "batch_norm")?;
            let geom = AxisGeom { outer, len: c, inner };
            for p in [v[1], v[2]] {
                if p.shape() != [c] {
                    return Err(TensorError::ShapeMismatch {
                        op: "batch_norm",
                        lhs: v[0].shape().to_vec(),
                        rhs: p.shape().to_vec(),
                    });
                }
            }
            if stats.mean.len() != c || stats.var.len() != c {
                return Err(TensorError::Invalid {
                    op: "batch_norm",
                    msg: format!("running stats sized {} for {c} channels", stats.mean.len()),
                });
            }
            let xd = v[0].data();
            let eps = T::of(BN_EPS);
            let count = outer * inner;
            let (mean, inv_std): (Vec<T>, Vec<T>) = if train {
                if count < 2 {
                    return Err(TensorError::Invalid {
                        op: "batch_norm",
                        msg: format!("training needs at least 2 values per channel, got {count}"),
                    });
                }
                if outer == 1 {
                    log::warn!("batch_norm in training mode with batch size 1; statistics come from one sample");
                }
                let n = T::of(count as f64);
                let mut mean = vec![T::zero(); c];
                per_channel(&geom, |ch, idx| mean[ch] += xd[idx]);
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![T::zero(); c];
                per_channel(&geom, |ch, idx| {
                    let d = xd[idx] - mean[ch];
                    var[ch] += d * d;
                });
                var.iter_mut().for_each(|s| *s /= n);

                let keep = T::of(BN_MOMENTUM);
                let mix = T::one() - keep;
                let unbias = n / (n - T::one());
                for ch in 0..c {
                    stats.mean[ch] = keep * stats.mean[ch] + mix * mean[ch];
                    stats.var[ch] = keep * stats.var[ch] + mix * var[ch] * unbias;
                }
                let inv_std = var.iter().map(|&s| T::one() / (s + eps).sqrt()).collect();
                (mean, inv_std)
            } else {
                let inv_std = stats.var.iter().map(|&s| T::one() / (s + eps).sqrt()).collect();
                (stats.mean.to_vec(), inv_std)
            };

            let (gd, bd) = (v[1].data(), v[2].data());
            let mut xhat = vec![T::zero(); xd.len()];
            let mut out = vec![T::zero(); xd.len()];
            per_channel(&geom, |ch, idx| {
                let xh = (xd[idx] - mean[ch]) * inv_std[ch];
                xhat[idx] = xh;
                out[idx] = gd[ch] * xh + bd[ch];
            });
            let value = Tensor::new(v[0].shape(), out).expect("same shape");
            Ok((value, BnSaved { geom, xhat, inv_std, train }))
        })?;
        Ok(self.push(value, &[x, gamma, beta], Op::BatchNorm(saved)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, train: bool, mean: &mut [f64], var: &mut [f64]) -> Tensor<f64> {
        let tape = Tape::new();
        let c = x.shape()[1];
        let xv = tape.constant(x);
        let g = tape.constant(Tensor::ones(&[c]));
        let b = tape.constant(Tensor::zeros(&[c]));
        let y = tape
            .batch_norm(xv, g, b, RunningStats { mean, var }, 1, train)
            .unwrap();
        let out = tape.value(y).clone();
        out
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let x = Tensor::from_fn(&[3, 2, 2, 2], |i| {
            ((i * 37) % 11) as f64 * 4.0 + (i % 2) as f64
        });
        let (mut m, mut v) = (vec![0.0; 2], vec![1.0; 2]);
        let y = run(x, true, &mut m, &mut v);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..4).map(move |p| (b, p)))
                .map(|(b, p)| y.data()[(b * 2 + ch) * 4 + p])
                .collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-6);
            // variance is large enough that epsilon's shrinkage stays below 1e-6
            assert!((var - 1.0).abs() < 1e-6, "{var}");
        }
        assert!(m.iter().all(|a| *a != 0.0), "running mean updated");
    }

    #[test]
    fn eval_with_unit_stats_is_near_identity() {
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5);
        let (mut m, mut v) = (vec![0.0; 3], vec![1.0; 3]);
        let y = run(x.clone(), false, &mut m, &mut v);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / (1.0 + BN_EPS).sqrt()).abs() < 1e-15);
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(m, vec![0.0; 3]);
    }

    #[test]
    fn single_value_per_channel_rejected_in_training() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let (mut m, mut v) = (vec![0.0; 2], vec![1.0; 2]);
        let r = tape.batch_norm(
            x,
            g,
            b,
            RunningStats {
                mean: &mut m,
                var: &mut v,
            },
            1,
            true,
        );
        assert!(r.is_err());
    }
}
