//! Aggregate mean with Gaussian error propagation across settings.

/// Mean of per-setting means with the propagated 95% half-width:
/// `mean = (1/S) sum mu_s`, `err = (1/S) sqrt(sum (sigma_s / sqrt N)^2)`,
/// half-width `1.96 * err`. `seeds` is the per-setting seed count N.
pub fn aggregate_mean_ci(per_setting: &[(f64, f64)], seeds: usize) -> (f64, f64) {
    assert!(!per_setting.is_empty(), "need at least one setting");
    assert!(seeds >= 1, "need at least one seed");
    let s = per_setting.len() as f64;
    let mean = per_setting.iter().map(|&(mu, _)| mu).sum::<f64>() / s;
    let sq_sum: f64 = per_setting
        .iter()
        .map(|&(_, sigma)| {
            let d = sigma / (seeds as f64).sqrt();
            d * d
        })
        .sum();
    let err = sq_sum.sqrt() / s;
    (mean, 1.96 * err)
}
