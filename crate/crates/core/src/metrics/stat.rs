//! Paired t-test and the Holm-Bonferroni step-down procedure.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Outcome of a paired two-sided t-test between matched samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairedOutcome {
    /// Two-sided p-value and the mean difference a - b.
    Test { p_value: f64, mean_diff: f64 },
    /// Zero variance of the differences: no test statistic is defined
    /// and the comparison counts as a tie.
    Tie,
}

/// Paired two-sided Student t-test on matched per-seed values.
pub fn paired_t_pvalue(a: &[f64], b: &[f64]) -> PairedOutcome {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let n = a.len();
    assert!(n >= 2, "need at least two pairs");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return PairedOutcome::Tie;
    }
    let se = (var / n as f64).sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    PairedOutcome::Test { p_value: p.clamp(0.0, 1.0), mean_diff: mean }
}

/// Holm-Bonferroni step-down over `m` planned comparisons: given
/// (index, p) pairs, return the indices rejected at family level
/// `alpha`. `m` may exceed the number of observed p-values when some
/// planned comparisons produced no test statistic.
pub fn holm_reject(p_values: &[(usize, f64)], alpha: f64, m: usize) -> Vec<usize> {
    let mut sorted: Vec<(usize, f64)> = p_values.to_vec();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite p-values"));
    let mut rejected = Vec::new();
    for (rank, &(idx, p)) in sorted.iter().enumerate() {
        let threshold = alpha / (m - rank) as f64;
        if p <= threshold {
            rejected.push(idx);
        } else {
            break;
        }
    }
    rejected
}
