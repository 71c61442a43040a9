//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

/// Zero-padded stride-1 cross-correlation, loop by loop.
pub fn conv2d(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let [b, c, h, w] = xs;
    let [o, kc, kh, kw] = ks;
    assert_eq!(c, kc);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let mut out = vec![0.0; b * o * h * w];
    for n in 0..b {
        for oc in 0..o {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = bias.map_or(0.0, |bv| bv[oc]);
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let (y, z) =
                                    (i as isize + u as isize - ph, j as isize + v as isize - pw);
                                if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                    continue;
                                }
                                acc += x[((n * c + ic) * h + y as usize) * w + z as usize]
                                    * k[((oc * c + ic) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[((n * o + oc) * h + i) * w + j] = acc;
                }
            }
        }
    }
    out
}

/// `x: [m, k]`, `w: [k, n]`, `b: [n]`.
pub fn linear(x: &[f64], m: usize, k: usize, w: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        for c in 0..n {
            out[r * n + c] = b[c] + (0..k).map(|i| x[r * k + i] * w[i * n + c]).sum::<f64>();
        }
    }
    out
}

pub fn bce(p: &[f64], y: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    -s / p.len() as f64
}

pub fn mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

/// Fraction of positive-negative pairs ordered correctly, ties counting half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

fn f_of(tp: f64, fp: f64, fn_: f64) -> f64 {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// `(f_micro, f_macro)` in percent for row-major `m x k` inputs.
pub fn f_scores(p: &[f64], y: &[bool], k: usize, threshold: f64) -> (f64, f64) {
    let m = p.len() / k;
    let mut totals = [0.0; 3];
    let mut macro_sum = 0.0;
    for c in 0..k {
        let mut t = [0.0; 3];
        for r in 0..m {
            let hit = p[r * k + c] >= threshold;
            let lab = y[r * k + c];
            if hit && lab {
                t[0] += 1.0;
            } else if hit {
                t[1] += 1.0;
            } else if lab {
                t[2] += 1.0;
            }
        }
        macro_sum += f_of(t[0], t[1], t[2]);
        for i in 0..3 {
            totals[i] += t[i];
        }
    }
    (
        100.0 * f_of(totals[0], totals[1], totals[2]),
        100.0 * macro_sum / k as f64,
    )
}

pub fn r2(p: &[f64], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let res: f64 = p.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
    let tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    1.0 - res / tot
}

/// Pearson correlation from `E[xy] - E[x]E[y]` over column pairs.
pub fn pcc(data: &[f64], k: usize) -> Vec<f64> {
    let m = data.len() / k;
    let mean = |c: usize| (0..m).map(|r| data[r * k + c]).sum::<f64>() / m as f64;
    let cov = |a: usize, b: usize| {
        let (ma, mb) = (mean(a), mean(b));
        (0..m)
            .map(|r| (data[r * k + a] - ma) * (data[r * k + b] - mb))
            .sum::<f64>()
            / m as f64
    };
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let d = (cov(i, i) * cov(j, j)).sqrt();
            out[i * k + j] = if d == 0.0 { 0.0 } else { cov(i, j) / d };
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
