//! Dice overlap per foreground class.

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

#[derive(Debug, Clone, PartialEq)]
pub struct DiceScores {
    /// Per foreground class 1..=C; None when the class is absent from
    /// both volumes (excluded from the mean).
    pub per_class: Vec<Option<f64>>,
    /// Mean over the present classes.
    pub mean: f64,
}

/// `2 |A n B| / (|A| + |B|)` per foreground class. A class present in
/// exactly one volume scores 0; a class absent from both is excluded
/// from the mean.
pub fn dice(pred: &LabelVolume, gt: &LabelVolume, num_classes: u8) -> Result<DiceScores> {
    if pred.dims != gt.dims {
        return Err(Error::InvalidVolume(format!(
            "dims mismatch: {:?} vs {:?}",
            pred.dims.as_array(),
            gt.dims.as_array()
        )));
    }
    let c_total = num_classes as usize + 1;
    let mut pred_count = vec![0u64; c_total];
    let mut gt_count = vec![0u64; c_total];
    let mut inter = vec![0u64; c_total];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        pred_count[p as usize] += 1;
        gt_count[g as usize] += 1;
        if p == g {
            inter[p as usize] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(num_classes as usize);
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 1..c_total {
        let denom = pred_count[c] + gt_count[c];
        if denom == 0 {
            per_class.push(None);
        } else {
            let score = 2.0 * inter[c] as f64 / denom as f64;
            per_class.push(Some(score));
            sum += score;
            present += 1;
        }
    }
    let mean = if present > 0 { sum / present as f64 } else { 0.0 };
    Ok(DiceScores { per_class, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Dims3;

    fn vol(dims: Dims3, labels: Vec<u8>, c: u8) -> LabelVolume {
        LabelVolume::new(dims, labels, c).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let dims = Dims3::new(2, 2, 2);
        let gt = vol(dims, vec![0, 1, 1, 2, 0, 0, 2, 1], 2);
        let d = dice(&gt, &gt, 2).unwrap();
        assert_eq!(d.per_class, vec![Some(1.0), Some(1.0)]);
        assert_eq!(d.mean, 1.0);
    }

    #[test]
    fn half_overlap_scores_half() {
        // |A| = |B| = 8, |A n B| = 4 -> 0.5
        let dims = Dims3::new(1, 4, 4);
        let mut a = vec![0u8; 16];
        let mut b = vec![0u8; 16];
        a[0..8].fill(1);
        b[4..12].fill(1);
        let d = dice(&vol(dims, a, 1), &vol(dims, b, 1), 1).unwrap();
        assert_eq!(d.per_class, vec![Some(0.5)]);
    }

    #[test]
    fn one_sided_class_scores_zero_absent_excluded() {
        let dims = Dims3::new(1, 2, 2);
        // class 1 only in gt; class 2 absent from both
        let pred = vol(dims, vec![0, 0, 0, 0], 2);
        let gt = vol(dims, vec![1, 1, 0, 0], 2);
        let d = dice(&pred, &gt, 2).unwrap();
        assert_eq!(d.per_class, vec![Some(0.0), None]);
        assert_eq!(d.mean, 0.0);
    }
}
