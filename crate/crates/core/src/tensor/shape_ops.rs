use super::tape::Op;
use super::{split_axis, Result, Scalar, Tape, Tensor, TensorError, Var};

/// `(outer, len, inner)` view of a shape around one axis.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AxisGeom {
    pub outer: usize,
    pub len: usize,
    pub inner: usize,
}

impl AxisGeom {
    fn of(shape: &[usize], axis: usize, op: &'static str) -> Result<Self> {
        let (outer, len, inner) = split_axis(shape, axis, op)?;
        Ok(Self { outer, len, inner })
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PoolGeom {
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct ConcatGeom {
    outer: usize,
    inner: usize,
    sizes: Vec<usize>,
}

fn removed(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

fn replaced(shape: &[usize], axis: usize, len: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s[axis] = len;
    s
}

pub(crate) fn sum_axis_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    geom: &AxisGeom,
    scale: T,
) -> Tensor<T> {
    let mut out = vec![T::zero(); x.len()];
    let gd = g.data();
    for o in 0..geom.outer {
        for l in 0..geom.len {
            let dst = (o * geom.len + l) * geom.inner;
            for i in 0..geom.inner {
                out[dst + i] = gd[o * geom.inner + i] * scale;
            }
        }
    }
    Tensor::new(x.shape(), out).expect("input shape")
}

pub(crate) fn max_axis_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    geom: &AxisGeom,
    argmax: &[usize],
) -> Tensor<T> {
    let mut out = vec![T::zero(); x.len()];
    for (k, (&gv, &l)) in g.data().iter().zip(argmax).enumerate() {
        let (o, i) = (k / geom.inner, k % geom.inner);
        out[(o * geom.len + l) * geom.inner + i] += gv;
    }
    Tensor::new(x.shape(), out).expect("input shape")
}

pub(crate) fn avg_pool_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    geom: &PoolGeom,
) -> Tensor<T> {
    let mut out = vec![T::zero(); x.len()];
    let quarter = T::of(0.25);
    let gd = g.data();
    for p in 0..geom.planes {
        for oy in 0..geom.oh {
            for ox in 0..geom.ow {
                let gv = gd[(p * geom.oh + oy) * geom.ow + ox] * quarter;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out[(p * geom.h + 2 * oy + dy) * geom.w + 2 * ox + dx] = gv;
                }
            }
        }
    }
    Tensor::new(x.shape(), out).expect("input shape")
}

pub(crate) fn concat_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    geom: &ConcatGeom,
) -> Vec<Option<Tensor<T>>> {
    let total: usize = geom.sizes.iter().sum();
    let gd = g.data();
    let mut offset = 0;
    let mut out = Vec::with_capacity(inputs.len());
    for (x, &size) in inputs.iter().zip(&geom.sizes) {
        let mut buf = Vec::with_capacity(x.len());
        for o in 0..geom.outer {
            let start = (o * total + offset) * geom.inner;
            buf.extend_from_slice(&gd[start..start + size * geom.inner]);
        }
        out.push(Some(Tensor::new(x.shape(), buf).expect("piece shape")));
        offset += size;
    }
    out
}

pub(crate) fn narrow_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    geom: &AxisGeom,
    start: usize,
    take: usize,
) -> Tensor<T> {
    let mut out = vec![T::zero(); x.len()];
    let gd = g.data();
    let chunk = take * geom.inner;
    for o in 0..geom.outer {
        let dst = (o * geom.len + start) * geom.inner;
        out[dst..dst + chunk].copy_from_slice(&gd[o * chunk..(o + 1) * chunk]);
    }
    Tensor::new(x.shape(), out).expect("input shape")
}

fn gather<T: Scalar>(data: &[T], geom: &AxisGeom, indices: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(geom.outer * indices.len() * geom.inner);
    for o in 0..geom.outer {
        for &idx in indices {
            let start = (o * geom.len + idx) * geom.inner;
            out.extend_from_slice(&data[start..start + geom.inner]);
        }
    }
    out
}

/// `out[o, idx[e], i] += src[o, e, i]` with `out` having `n` rows on the axis.
fn scatter_add<T: Scalar>(
    src: &[T],
    outer: usize,
    inner: usize,
    indices: &[usize],
    n: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); outer * n * inner];
    for o in 0..outer {
        for (e, &idx) in indices.iter().enumerate() {
            let s = (o * indices.len() + e) * inner;
            let d = (o * n + idx) * inner;
            for i in 0..inner {
                out[d + i] += src[s + i];
            }
        }
    }
    out
}

pub(crate) fn index_select_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    geom: &AxisGeom,
    indices: &[usize],
) -> Tensor<T> {
    let out = scatter_add(g.data(), geom.outer, geom.inner, indices, geom.len);
    Tensor::new(x.shape(), out).expect("input shape")
}

pub(crate) fn index_add_backward<T: Scalar>(
    g: &Tensor<T>,
    src: &Tensor<T>,
    geom: &AxisGeom,
    indices: &[usize],
) -> Tensor<T> {
    let n = g.len() / (geom.outer * geom.inner).max(1);
    let gather_geom = AxisGeom {
        outer: geom.outer,
        len: n,
        inner: geom.inner,
    };
    Tensor::new(src.shape(), gather(g.data(), &gather_geom, indices)).expect("source shape")
}

impl<T: Scalar> Tape<T> {
    fn reduce_axis(&self, x: Var, axis: usize, op: &'static str) -> Result<(AxisGeom, Vec<usize>)> {
        let shape = self.shape(x);
        let geom = AxisGeom::of(&shape, axis, op)?;
        if geom.len == 0 {
            return Err(TensorError::EmptyAxis { op });
        }
        Ok((geom, removed(&shape, axis)))
    }

    fn axis_fold(&self, x: Var, geom: &AxisGeom, shape: &[usize], scale: T) -> Tensor<T> {
        self.with_values(&[x], |v| {
            let xd = v[0].data();
            let mut out = vec![T::zero(); geom.outer * geom.inner];
            for o in 0..geom.outer {
                for l in 0..geom.len {
                    let src = (o * geom.len + l) * geom.inner;
                    for i in 0..geom.inner {
                        out[o * geom.inner + i] += xd[src + i];
                    }
                }
            }
            out.iter_mut().for_each(|a| *a *= scale);
            Tensor::new(shape, out).expect("reduced shape")
        })
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let (geom, shape) = self.reduce_axis(x, axis, "sum")?;
        let value = self.axis_fold(x, &geom, &shape, T::one());
        Ok(self.push(value, &[x], Op::SumAxis(geom)))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let (geom, shape) = self.reduce_axis(x, axis, "mean")?;
        let value = self.axis_fold(x, &geom, &shape, T::one() / T::of(geom.len as f64));
        Ok(self.push(value, &[x], Op::MeanAxis(geom)))
    }

    /// Max over `axis`, removing it. Ties resolve to the first index.
    pub fn max_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let (geom, shape) = self.reduce_axis(x, axis, "max")?;
        let (value, argmax) = self.with_values(&[x], |v| {
            let xd = v[0].data();
            let mut out = Vec::with_capacity(geom.outer * geom.inner);
            let mut arg = Vec::with_capacity(geom.outer * geom.inner);
            for o in 0..geom.outer {
                for i in 0..geom.inner {
                    let mut best = 0;
                    let mut best_v = xd[o * geom.len * geom.inner + i];
                    for l in 1..geom.len {
                        let val = xd[(o * geom.len + l) * geom.inner + i];
                        if val > best_v {
                            best = l;
                            best_v = val;
                        }
                    }
                    out.push(best_v);
                    arg.push(best);
                }
            }
            (Tensor::new(&shape, out).expect("reduced shape"), arg)
        });
        Ok(self.push(value, &[x], Op::MaxAxis(geom, argmax)))
    }

    pub fn sum_all(&self, x: Var) -> Var {
        let value = self.with_values(&[x], |v| Tensor::scalar(v[0].sum()));
        self.push(value, &[x], Op::SumAll)
    }

    pub fn mean_all(&self, x: Var) -> Var {
        let value = self.with_values(&[x], |v| {
            Tensor::scalar(v[0].sum() / T::of(v[0].len().max(1) as f64))
        });
        self.push(value, &[x], Op::MeanAll)
    }

    /// 2x2 average pooling with stride 2 over the last two axes; odd trailing
    /// rows and columns are dropped.
    pub fn avg_pool2d(&self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() < 2 || shape[shape.len() - 2] < 2 || shape[shape.len() - 1] < 2 {
            return Err(TensorError::Invalid {
                op: "avg_pool2d",
                msg: format!("input {shape:?} is smaller than the 2x2 window"),
            });
        }
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let geom = PoolGeom {
            planes: shape[..shape.len() - 2].iter().product(),
            h,
            w,
            oh: h / 2,
            ow: w / 2,
        };
        let mut out_shape = shape.clone();
        let r = out_shape.len();
        out_shape[r - 2] = geom.oh;
        out_shape[r - 1] = geom.ow;
        let value = self.with_values(&[x], |v| {
            let xd = v[0].data();
            let quarter = T::of(0.25);
            let mut out = Vec::with_capacity(geom.planes * geom.oh * geom.ow);
            for p in 0..geom.planes {
                for oy in 0..geom.oh {
                    for ox in 0..geom.ow {
                        let at = |dy: usize, dx: usize| xd[(p * h + 2 * oy + dy) * w + 2 * ox + dx];
                        out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * quarter);
                    }
                }
            }
            Tensor::new(&out_shape, out).expect("pooled shape")
        });
        Ok(self.push(value, &[x], Op::AvgPool2d(geom)))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .map(|&p| self.shape(p))
            .ok_or(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            })?;
        let geom0 = AxisGeom::of(&first, axis, "concat")?;
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s,
                });
            }
            sizes.push(s[axis]);
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let total: usize = sizes.iter().sum();
        let geom = ConcatGeom {
            outer: geom0.outer,
            inner: geom0.inner,
            sizes,
        };
        let value = self.with_values(parts, |v| {
            let mut out = Vec::with_capacity(geom.outer * total * geom.inner);
            for o in 0..geom.outer {
                for (t, &size) in v.iter().zip(&geom.sizes) {
                    let chunk = size * geom.inner;
                    out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            Tensor::new(&replaced(&first, axis, total), out).expect("concat shape")
        });
        Ok(self.push(value, parts, Op::Concat(geom)))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x);
        let geom = AxisGeom::of(&shape, axis, "narrow")?;
        if start + len > geom.len {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!("range {start}..{} exceeds extent {}", start + len, geom.len),
            });
        }
        let value = self.with_values(&[x], |v| {
            let xd = v[0].data();
            let mut out = Vec::with_capacity(geom.outer * len * geom.inner);
            for o in 0..geom.outer {
                let s = (o * geom.len + start) * geom.inner;
                out.extend_from_slice(&xd[s..s + len * geom.inner]);
            }
            Tensor::new(&replaced(&shape, axis, len), out).expect("narrow shape")
        });
        Ok(self.push(value, &[x], Op::Narrow(geom, start, len)))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.with_values(&[x], |v| v[0].clone().reshaped(shape))?;
        Ok(self.push(value, &[x], Op::Reshape))
    }

    /// Picks entries `indices` along `axis` (repeats allowed).
    pub fn index_select(&self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x);
        let geom = AxisGeom::of(&shape, axis, "index_select")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= geom.len) {
            return Err(TensorError::Invalid {
                op: "index_select",
                msg: format!("index {bad} out of range for extent {}", geom.len),
            });
        }
        let value = self.with_values(&[x], |v| {
            Tensor::new(
                &replaced(&shape, axis, indices.len()),
                gather(v[0].data(), &geom, indices),
            )
            .expect("gather shape")
        });
        Ok(self.push(value, &[x], Op::IndexSelect(geom, indices.to_vec())))
    }

    /// Sums slices of `src` along `axis` into `n` buckets: bucket `indices[e]`
    /// receives slice `e`.
    pub fn index_add(&self, src: Var, axis: usize, indices: &[usize], n: usize) -> Result<Var> {
        let shape = self.shape(src);
        let geom = AxisGeom::of(&shape, axis, "index_add")?;
        if geom.len != indices.len() {
            return Err(TensorError::Invalid {
                op: "index_add",
                msg: format!("{} indices for extent {}", indices.len(), geom.len),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::Invalid {
                op: "index_add",
                msg: format!("index {bad} out of range for {n} buckets"),
            });
        }
        let value = self.with_values(&[src], |v| {
            Tensor::new(
                &replaced(&shape, axis, n),
                scatter_add(v[0].data(), geom.outer, geom.inner, indices, n),
            )
            .expect("scatter shape")
        });
        Ok(self.push(value, &[src], Op::IndexAdd(geom, indices.to_vec())))
    }
}
