use super::tape::Op;
use super::{Result, Scalar, Tape, Tensor, TensorError, Var};
use rand::Rng;

/// Checks that `rhs` equals `lhs` or is a trailing suffix of it.
fn broadcast_shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<bool> {
    if lhs == rhs {
        return Ok(false);
    }
    if rhs.len() < lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs {
        return Ok(true);
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

fn binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let m = b.len().max(1);
    let bd = b.data();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, bd[i % m]))
        .collect();
    Tensor::new(a.shape(), data).expect("same shape as lhs")
}

/// Sums a lhs-shaped buffer down to the rhs shape (reverse of trailing broadcast).
fn reduce_to<T: Scalar>(values: impl Iterator<Item = T>, rhs: &Tensor<T>) -> Tensor<T> {
    let m = rhs.len();
    let mut out = vec![T::zero(); m];
    for (i, v) in values.enumerate() {
        out[i % m] += v;
    }
    Tensor::new(rhs.shape(), out).expect("rhs shape")
}

pub(crate) fn add_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    broadcast: bool,
) -> Vec<Option<Tensor<T>>> {
    let gb = if broadcast {
        reduce_to(g.data().iter().copied(), inputs[1])
    } else {
        g.clone()
    };
    vec![Some(g.clone()), Some(gb)]
}

pub(crate) fn sub_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    broadcast: bool,
) -> Vec<Option<Tensor<T>>> {
    let gb = if broadcast {
        reduce_to(g.data().iter().map(|&v| -v), inputs[1])
    } else {
        g.map(|v| -v)
    };
    vec![Some(g.clone()), Some(gb)]
}

pub(crate) fn mul_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    broadcast: bool,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let (a, b) = (inputs[0], inputs[1]);
    let ga = needs[0].then(|| binary(g, b, |gv, bv| gv * bv));
    let gb = needs[1].then(|| {
        let prod = g.data().iter().zip(a.data()).map(|(&gv, &av)| gv * av);
        if broadcast {
            reduce_to(prod, b)
        } else {
            Tensor::new(b.shape(), prod.collect()).expect("same shape")
        }
    });
    vec![ga, gb]
}

pub(crate) fn div_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    broadcast: bool,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let (a, b) = (inputs[0], inputs[1]);
    let m = b.len();
    let ga = needs[0].then(|| binary(g, b, |gv, bv| gv / bv));
    let gb = needs[1].then(|| {
        let bd = b.data();
        let vals = g
            .data()
            .iter()
            .zip(a.data())
            .enumerate()
            .map(|(i, (&gv, &av))| -gv * av / (bd[i % m] * bd[i % m]));
        if broadcast {
            reduce_to(vals, b)
        } else {
            Tensor::new(b.shape(), vals.collect()).expect("same shape")
        }
    });
    vec![ga, gb]
}

pub(crate) fn relu_backward<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    zip_map(g, x, |gv, xv| if xv > T::zero() { gv } else { T::zero() })
}

pub(crate) fn sigmoid_backward<T: Scalar>(g: &Tensor<T>, out: &Tensor<T>) -> Tensor<T> {
    zip_map(g, out, |gv, s| gv * s * (T::one() - s))
}

pub(crate) fn log_backward<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    zip_map(g, x, |gv, xv| gv / xv)
}

pub(crate) fn clamp_backward<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>, lo: T, hi: T) -> Tensor<T> {
    zip_map(
        g,
        x,
        |gv, xv| if xv >= lo && xv <= hi { gv } else { T::zero() },
    )
}

pub(crate) fn mask_backward<T: Scalar>(g: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let data = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
    Tensor::new(g.shape(), data).expect("mask matches")
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    fn binary_op(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(bool) -> Op<T>,
    ) -> Result<Var> {
        let (value, broadcast) = self.with_values(&[a, b], |v| {
            let broadcast = broadcast_shape(name, v[0].shape(), v[1].shape())?;
            Ok::<_, TensorError>((binary(v[0], v[1], f), broadcast))
        })?;
        Ok(self.push(value, &[a, b], op(broadcast)))
    }

    /// `a + b`; `b` may broadcast over the leading dimensions of `a`.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("add", a, b, |x, y| x + y, |broadcast| Op::Add { broadcast })
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("sub", a, b, |x, y| x - y, |broadcast| Op::Sub { broadcast })
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("mul", a, b, |x, y| x * y, |broadcast| Op::Mul { broadcast })
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_op("div", a, b, |x, y| x / y, |broadcast| Op::Div { broadcast })
    }

    fn unary_op(&self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.with_values(&[x], |v| v[0].map(f));
        self.push(value, &[x], op)
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary_op(x, |v| v * c, Op::Scale(c))
    }

    pub fn add_scalar(&self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary_op(x, |v| v + c, Op::Offset)
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary_op(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary_op(x, sigmoid, Op::Sigmoid)
    }

    /// Natural logarithm.
    pub fn log(&self, x: Var) -> Var {
        self.unary_op(x, |v| v.ln(), Op::Log)
    }

    pub fn clamp(&self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::of(lo), T::of(hi));
        self.unary_op(x, |v| v.max(lo).min(hi), Op::Clamp { lo, hi })
    }

    /// Inverted dropout. Returns `x` itself when not training or when `p == 0`.
    pub fn dropout(&self, x: Var, p: f64, train: bool, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Invalid {
                op: "dropout",
                msg: format!("probability {p} outside [0, 1)"),
            });
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let n = self.with_values(&[x], |v| v[0].len());
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let value = self.with_values(&[x], |v| {
            let data = v[0]
                .data()
                .iter()
                .zip(&mask)
                .map(|(&a, &m)| a * m)
                .collect();
            Tensor::new(v[0].shape(), data).expect("same shape")
        });
        Ok(self.push(value, &[x], Op::Mask(mask)))
    }
}
