//! AUC by the midrank statistic (ties get half credit) and EER by linear
//! interpolation on the ROC polyline.

use crate::MetricsError;

/// `scores` pairs a fake-probability with the gold label (true = fake).
pub fn auc_eer(scores: &[(f64, bool)]) -> Result<(f64, f64), MetricsError> {
    let n_pos = scores.iter().filter(|(_, label)| *label).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    // Midranks over ascending scores.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.partial_cmp(&scores[b].0).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].0 == scores[order[i]].0 {
            j += 1;
        }
        // Tied block spans ranks i+1 ..= j (1-based); everyone gets the mean.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scores[idx].1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let auc =
        (rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64);

    // ROC polyline from (0,0) to (1,1) sweeping thresholds high to low.
    let mut desc: Vec<&(f64, bool)> = scores.iter().collect();
    desc.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = vec![(0.0f64, 0.0f64)]; // (fpr, tpr)
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < desc.len() {
        let threshold = desc[k].0;
        while k < desc.len() && desc[k].0 == threshold {
            if desc[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }

    // EER: fpr == fnr == 1 - tpr somewhere on the polyline.
    let mut eer = f64::NAN;
    for w in points.windows(2) {
        let (f0, t0) = w[0];
        let (f1, t1) = w[1];
        let d0 = f0 - (1.0 - t0);
        let d1 = f1 - (1.0 - t1);
        if d0 == 0.0 {
            eer = f0;
            break;
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let denom = d1 - d0;
            let t = if denom == 0.0 { 0.0 } else { -d0 / denom };
            eer = f0 + t * (f1 - f0);
            break;
        }
    }
    if eer.is_nan() {
        // Entire curve on one side; the closest endpoint is (1,1).
        eer = points.last().map(|&(f, t)| f.min(1.0 - t)).unwrap_or(0.5);
    }
    Ok((auc, eer))
}
