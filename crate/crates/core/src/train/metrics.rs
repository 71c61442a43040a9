use serde::{Deserialize, Serialize};

/// Multi-label classification scores; percentages except AUC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub f_micro: f64,
    pub f_macro: f64,
    /// Mean over classes with both label values present.
    pub auc_macro: Option<f64>,
    pub per_class_f: Vec<f64>,
    pub per_class_auc: Vec<Option<f64>>,
    /// Classes left out of the AUC mean.
    pub auc_excluded: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
}

fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p_den = tp + fp;
    let r_den = tp + fn_;
    let precision = if p_den == 0 {
        0.0
    } else {
        tp as f64 / p_den as f64
    };
    let recall = if r_den == 0 {
        0.0
    } else {
        tp as f64 / r_den as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// ROC AUC from the rank-sum statistic with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

/// `p` and `y` are row-major `m x k`.
pub fn classification_metrics(
    p: &[f64],
    y: &[bool],
    k: usize,
    threshold: f64,
) -> ClassificationMetrics {
    assert_eq!(p.len(), y.len());
    assert!(
        k > 0 && p.len().is_multiple_of(k) && !p.is_empty(),
        "need at least one row of {k} classes"
    );
    let m = p.len() / k;
    let mut correct = 0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    let mut per_class_f = Vec::with_capacity(k);
    let mut per_class_auc = Vec::with_capacity(k);
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut scores = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for r in 0..m {
            let (s, l) = (p[r * k + c], y[r * k + c]);
            let hit = s >= threshold;
            if hit == l {
                correct += 1;
            }
            match (hit, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
            scores.push(s);
            labels.push(l);
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        per_class_f.push(100.0 * f_score(tp, fp, fn_));
        per_class_auc.push(auc(&scores, &labels));
    }
    let auc_excluded: Vec<usize> = (0..k).filter(|&c| per_class_auc[c].is_none()).collect();
    let present: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    ClassificationMetrics {
        acc: 100.0 * correct as f64 / p.len() as f64,
        f_micro: 100.0 * f_score(tp_all, fp_all, fn_all),
        f_macro: per_class_f.iter().sum::<f64>() / k as f64,
        auc_macro: (!present.is_empty())
            .then(|| present.iter().sum::<f64>() / present.len() as f64),
        per_class_f,
        per_class_auc,
        auc_excluded,
    }
}

pub fn regression_metrics(p: &[f64], y: &[f64]) -> RegressionMetrics {
    assert_eq!(p.len(), y.len());
    assert!(!p.is_empty(), "regression metrics need at least one sample");
    let n = p.len() as f64;
    let mse = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let mae = p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if p.len() < 2 || ss_tot == 0.0 {
        log::warn!("r2 undefined: targets have zero variance");
        None
    } else {
        Some(1.0 - p.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / ss_tot)
    };
    RegressionMetrics { mse, mae, r2 }
}
