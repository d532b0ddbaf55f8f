use crate::error::{Error, Result};

fn check_pair(preds: usize, labels: usize) -> Result<()> {
    if preds == 0 {
        return Err(Error::Usage("metrics need at least one sample".into()));
    }
    if preds != labels {
        return Err(Error::Usage(format!("{preds} predictions for {labels} labels")));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `C×C` counts, rows indexed by the true label.
pub fn confusion(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    check_pair(preds.len(), labels.len())?;
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Label {
                label: p.max(l),
                classes,
            });
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Diagonal over row sums; `NaN` for classes with no samples.
pub fn per_class_recall(confusion: &[Vec<u64>]) -> Vec<f64> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let n: u64 = row.iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                row[i] as f64 / n as f64
            }
        })
        .collect()
}

/// Rank-based (Mann–Whitney) area under the ROC curve; tied scores count one
/// half per positive/negative pair. Computed on doubled integer ranks so the
/// result is the exact ratio `(2·wins + ties) / (2·P·N)`.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Usage(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let p = positive.iter().filter(|&&b| b).count() as u64;
    let n = scores.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes, got {p} positive and {n} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled 1-based ranks: a tie block over positions i..j gets i + j + 1 + 1
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j + 1) as u64;
        let pos_in_block = order[i..=j].iter().filter(|&&k| positive[k]).count() as u64;
        rank_sum2 += doubled * pos_in_block;
        i = j + 1;
    }
    // 2U = 2·Σranks − P(P+1)
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_and_confusion_basics() {
        let labels = [0, 1, 2, 3, 0, 1, 2, 3];
        assert_eq!(accuracy(&labels, &labels).unwrap(), 1.0);
        let c = confusion(&labels, &labels, 4).unwrap();
        for (i, row) in c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 2 } else { 0 });
            }
        }
        assert_eq!(accuracy(&[0; 8], &labels).unwrap(), 0.25);
        assert!(matches!(accuracy(&[], &[]), Err(Error::Usage(_))));
        assert!(matches!(confusion(&[4], &[0], 4), Err(Error::Label { .. })));
        let r = per_class_recall(&confusion(&[0, 0], &[0, 1], 3).unwrap());
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 0.0);
        assert!(r[2].is_nan());
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::Metric(_))));
        // one tie between the lone positive and one of two negatives
        assert_eq!(auc(&[0.3, 0.3, 0.1], &[true, false, false]).unwrap(), 0.75);
    }
}
