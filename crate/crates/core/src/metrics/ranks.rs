//! Friedman rank test with Nemenyi post-hoc analysis.
//!
//! The Nemenyi pairwise p-value comes from the studentized range
//! distribution at infinite degrees of freedom, which has no closed
//! form; it is evaluated by fixed-seed Monte Carlo (10^6 samples,
//! documented tolerance 1e-3), so results are reproducible bitwise.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::derive_stream;

pub const NEMENYI_MC_SAMPLES: usize = 1_000_000;

/// Monte Carlo tabulation of the range of k iid standard normals.
pub struct RangeDistribution {
    k: usize,
    samples: Vec<f64>,
}

impl RangeDistribution {
    /// Fixed-seed tabulation; identical across runs and platforms.
    pub fn monte_carlo(k: usize) -> Self {
        let mut stream = derive_stream(0x4E45_4D45, "studentized-range", k as u64);
        let mut samples = Vec::with_capacity(NEMENYI_MC_SAMPLES);
        for _ in 0..NEMENYI_MC_SAMPLES {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for _ in 0..k {
                let z = stream.standard_normal();
                lo = lo.min(z);
                hi = hi.max(z);
            }
            samples.push(hi - lo);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite ranges"));
        RangeDistribution { k, samples }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// P(range > q).
    pub fn tail_prob(&self, q: f64) -> f64 {
        let idx = self.samples.partition_point(|&s| s <= q);
        (self.samples.len() - idx) as f64 / self.samples.len() as f64
    }
}

/// Average ranks within one block, rank 1 = largest value, ties get the
/// average of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let k = values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite metrics"));
    let mut ranks = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Standardized Nemenyi z-score for an average-rank difference.
pub fn nemenyi_z(delta: f64, k: usize, n: usize) -> f64 {
    delta / (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt()
}

/// Average-rank difference corresponding to effect size `r = z / sqrt(N)`.
pub fn delta_for_effect_size(k: usize, n: usize, r: f64) -> f64 {
    let z = r * (n as f64).sqrt();
    z * (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct FriedmanNemenyi {
    pub methods: Vec<String>,
    /// Mean rank per method over the N settings (rank 1 = best).
    pub avg_ranks: Vec<f64>,
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    /// Nemenyi pairwise p-values (symmetric, unit diagonal).
    pub pairwise_p: Vec<Vec<f64>>,
    /// Maximal groups of methods, by index into `methods`, that are not
    /// pairwise separated at the requested level. Sorted by rank.
    pub groups: Vec<Vec<usize>>,
    pub level: f64,
}

/// Friedman test over an N-settings x k-methods metric matrix (larger
/// metric = better), followed by Nemenyi pairwise comparisons and
/// significance grouping at `level`.
pub fn friedman_nemenyi(
    methods: &[String],
    metric: &[Vec<f64>],
    level: f64,
) -> Result<FriedmanNemenyi> {
    let n = metric.len();
    let k = methods.len();
    if n < 2 || k < 2 {
        return Err(Error::InconsistentRuns(format!(
            "rank analysis needs >=2 settings and >=2 methods, got N={n}, k={k}"
        )));
    }
    if metric.iter().any(|row| row.len() != k) {
        return Err(Error::InconsistentRuns("ragged metric matrix".into()));
    }

    let mut rank_sums = vec![0.0; k];
    for row in metric {
        for (j, r) in average_ranks(row).into_iter().enumerate() {
            rank_sums[j] += r;
        }
    }
    let avg_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();

    let kf = k as f64;
    let nf = n as f64;
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let chi2 = ChiSquared::new((k - 1) as f64).expect("valid dof");
    let friedman_p = (1.0 - chi2.cdf(statistic.max(0.0))).clamp(0.0, 1.0);

    let range = RangeDistribution::monte_carlo(k);
    let mut pairwise_p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let delta = (avg_ranks[i] - avg_ranks[j]).abs();
            let q = nemenyi_z(delta, k, n) * std::f64::consts::SQRT_2;
            let p = range.tail_prob(q);
            pairwise_p[i][j] = p;
            pairwise_p[j][i] = p;
        }
    }

    // Maximal intervals along the rank ordering whose endpoints are not
    // separated at the level.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| avg_ranks[a].partial_cmp(&avg_ranks[b]).expect("finite ranks"));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && pairwise_p[order[start]][order[end + 1]] > level {
            end += 1;
        }
        let group: Vec<usize> = order[start..=end].to_vec();
        if groups
            .last()
            .is_none_or(|prev: &Vec<usize>| !group.iter().all(|g| prev.contains(g)))
        {
            groups.push(group);
        }
    }

    Ok(FriedmanNemenyi {
        methods: methods.to_vec(),
        avg_ranks,
        friedman_statistic: statistic,
        friedman_p,
        pairwise_p,
        groups,
        level,
    })
}
