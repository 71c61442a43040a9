use super::tape::Op;
use super::{Result, Scalar, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    has_bias: bool,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one `[c_in, h, w]` image into `[c_in * kh * kw, h * w]` patches
/// with zero padding of `kh / 2`, `kw / 2`.
fn im2col<T: Scalar>(img: &[T], geom: &ConvGeom, cols: &mut [T]) {
    let (h, w) = (geom.h, geom.w);
    let (ph, pw) = (geom.kh / 2, geom.kw / 2);
    let hw = h * w;
    for c in 0..geom.c_in {
        let plane = &img[c * hw..(c + 1) * hw];
        for dy in 0..geom.kh {
            for dx in 0..geom.kw {
                let row = (c * geom.kh + dy) * geom.kw + dx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, out) in line.iter_mut().enumerate() {
                        let sx = x as isize + dx as isize - pw as isize;
                        *out = if sx < 0 || sx >= w as isize {
                            T::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Scalar>(cols: &[T], geom: &ConvGeom, img: &mut [T]) {
    let (h, w) = (geom.h, geom.w);
    let (ph, pw) = (geom.kh / 2, geom.kw / 2);
    let hw = h * w;
    for c in 0..geom.c_in {
        let plane = &mut img[c * hw..(c + 1) * hw];
        for dy in 0..geom.kh {
            for dx in 0..geom.kw {
                let row = (c * geom.kh + dy) * geom.kw + dx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + dx as isize - pw as isize;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn matmul_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    m: usize,
    k: usize,
    n: usize,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let (a, b) = (inputs[0], inputs[1]);
    let ga = needs[0].then(|| {
        let mut out = vec![T::zero(); m * k];
        T::gemm(m, n, k, g.data(), false, b.data(), true, &mut out, false);
        Tensor::new(a.shape(), out).expect("lhs shape")
    });
    let gb = needs[1].then(|| {
        let mut out = vec![T::zero(); k * n];
        T::gemm(k, m, n, a.data(), true, g.data(), false, &mut out, false);
        Tensor::new(b.shape(), out).expect("rhs shape")
    });
    vec![ga, gb]
}

pub(crate) fn conv2d_backward<T: Scalar>(
    g: &Tensor<T>,
    inputs: &[&Tensor<T>],
    geom: &ConvGeom,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let (x, kernel) = (inputs[0], inputs[1]);
    let rows = geom.col_rows();
    let hw = geom.pixels();
    let in_stride = geom.c_in * hw;
    let out_stride = geom.c_out * hw;

    let mut gx = needs[0].then(|| vec![T::zero(); x.len()]);
    let mut gk = needs[1].then(|| vec![T::zero(); kernel.len()]);
    let mut cols = vec![T::zero(); rows * hw];
    let mut dcols = vec![T::zero(); rows * hw];
    for b in 0..geom.batch {
        let gb = &g.data()[b * out_stride..(b + 1) * out_stride];
        if let Some(gk) = gk.as_mut() {
            im2col(
                &x.data()[b * in_stride..(b + 1) * in_stride],
                geom,
                &mut cols,
            );
            T::gemm(geom.c_out, hw, rows, gb, false, &cols, true, gk, true);
        }
        if let Some(gx) = gx.as_mut() {
            T::gemm(
                rows,
                geom.c_out,
                hw,
                kernel.data(),
                true,
                gb,
                false,
                &mut dcols,
                false,
            );
            col2im(&dcols, geom, &mut gx[b * in_stride..(b + 1) * in_stride]);
        }
    }

    let mut out = vec![
        gx.map(|d| Tensor::new(x.shape(), d).expect("input shape")),
        gk.map(|d| Tensor::new(kernel.shape(), d).expect("kernel shape")),
    ];
    if geom.has_bias {
        let gbias = needs[2].then(|| {
            let mut acc = vec![T::zero(); geom.c_out];
            for b in 0..geom.batch {
                for (c, a) in acc.iter_mut().enumerate() {
                    let start = b * out_stride + c * hw;
                    *a += g.data()[start..start + hw].iter().copied().sum::<T>();
                }
            }
            Tensor::new(&[geom.c_out], acc).expect("bias shape")
        });
        out.push(gbias);
    }
    out
}

impl<T: Scalar> Tape<T> {
    /// Matrix product of `a: [.., k]` (leading dims flattened) with `b: [k, n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (value, m, k, n) = self.with_values(&[a, b], |v| {
            let (sa, sb) = (v[0].shape(), v[1].shape());
            if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                });
            }
            let k = sb[0];
            let n = sb[1];
            let m = v[0].len() / k.max(1);
            let mut out = vec![T::zero(); m * n];
            T::gemm(
                m,
                k,
                n,
                v[0].data(),
                false,
                v[1].data(),
                false,
                &mut out,
                false,
            );
            let mut shape = sa.to_vec();
            *shape.last_mut().expect("nonempty") = n;
            Ok((Tensor::new(&shape, out).expect("matmul shape"), m, k, n))
        })?;
        Ok(self.push(value, &[a, b], Op::MatMul { m, k, n }))
    }

    /// `x @ w + b` for `x: [.., in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Stride-1 "same" cross-correlation of `x: [B, C_in, H, W]` with an odd
    /// `kernel: [C_out, C_in, kh, kw]`, plus an optional per-channel bias.
    pub fn conv2d(&self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let mut vars = vec![x, kernel];
        vars.extend(bias);
        let (value, geom) = self.with_values(&vars, |v| {
            let (sx, sk) = (v[0].shape(), v[1].shape());
            let mismatch = || TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sk.to_vec(),
            };
            if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
                return Err(mismatch());
            }
            if sk[2] % 2 == 0 || sk[3] % 2 == 0 {
                return Err(TensorError::Invalid {
                    op: "conv2d",
                    msg: format!("kernel {}x{} must have odd extents", sk[2], sk[3]),
                });
            }
            let geom = ConvGeom {
                batch: sx[0],
                c_in: sx[1],
                c_out: sk[0],
                h: sx[2],
                w: sx[3],
                kh: sk[2],
                kw: sk[3],
                has_bias: v.len() == 3,
            };
            if let Some(b) = v.get(2) {
                if b.shape() != [geom.c_out] {
                    return Err(TensorError::ShapeMismatch {
                        op: "conv2d bias",
                        lhs: sk.to_vec(),
                        rhs: b.shape().to_vec(),
                    });
                }
            }
            let rows = geom.col_rows();
            let hw = geom.pixels();
            let mut out = vec![T::zero(); geom.batch * geom.c_out * hw];
            let mut cols = vec![T::zero(); rows * hw];
            for b in 0..geom.batch {
                let img = &v[0].data()[b * geom.c_in * hw..(b + 1) * geom.c_in * hw];
                im2col(img, &geom, &mut cols);
                let dst = &mut out[b * geom.c_out * hw..(b + 1) * geom.c_out * hw];
                T::gemm(
                    geom.c_out,
                    rows,
                    hw,
                    v[1].data(),
                    false,
                    &cols,
                    false,
                    dst,
                    false,
                );
                if let Some(bias) = v.get(2) {
                    for (c, &bv) in bias.data().iter().enumerate() {
                        dst[c * hw..(c + 1) * hw].iter_mut().for_each(|o| *o += bv);
                    }
                }
            }
            let shape = [geom.batch, geom.c_out, geom.h, geom.w];
            Ok((Tensor::new(&shape, out).expect("conv shape"), geom))
        })?;
        Ok(self.push(value, &vars, Op::Conv2d(geom)))
    }
}
