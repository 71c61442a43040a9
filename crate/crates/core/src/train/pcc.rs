/// Pearson correlation between the columns of a row-major `m x k` matrix.
///
/// Returns the `k x k` matrix and the indices of constant columns, whose
/// correlations are reported as 0.
pub fn pcc_matrix(data: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
    assert!(
        k > 0 && data.len().is_multiple_of(k),
        "data is not a whole number of rows"
    );
    let m = data.len() / k;
    let col = |c: usize| (0..m).map(move |r| data[r * k + c]);
    let centered: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mean = col(c).sum::<f64>() / m as f64;
            col(c).map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<usize> = (0..k).filter(|&c| norms[c] == 0.0).collect();
    if !constant.is_empty() {
        log::warn!(
            "{} constant columns; their correlations are set to 0",
            constant.len()
        );
    }
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        if norms[i] == 0.0 {
            continue;
        }
        out[i * k + i] = 1.0;
        for j in i + 1..k {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            out[i * k + j] = r;
            out[j * k + i] = r;
        }
    }
    (out, constant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_identities() {
        // columns: x, -x, constant
        let data = [1.0, -1.0, 5.0, 2.0, -2.0, 5.0, 4.0, -4.0, 5.0];
        let (r, constant) = pcc_matrix(&data, 3);
        assert_eq!(constant, vec![2]);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[4], 1.0);
        assert!((r[1] + 1.0).abs() < 1e-15);
        assert_eq!(r[8], 0.0);
        assert_eq!(r[2], 0.0);
    }
}
