//! Pairwise penalty matrix: how often one method significantly
//! outperforms another under paired per-seed t-tests, pooled over
//! settings and cycles, optionally Holm-corrected per setting.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::stat::{holm_reject, paired_t_pvalue, PairedOutcome};

/// Per-seed metric values for one (setting, cycle, method) cell; seeds
/// aligned by position across methods.
#[derive(Debug, Clone)]
pub struct PpmRecord {
    pub setting: String,
    pub cycle: usize,
    pub method: String,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    Holm,
}

#[derive(Debug, Clone, Serialize)]
pub struct PpmMatrix {
    pub methods: Vec<String>,
    /// `win[i][j]`: percentage of (setting, cycle) combinations where
    /// method i significantly beats method j. Losses are the transpose.
    pub win: Vec<Vec<f64>>,
    /// Column means over the off-diagonal: how often each method is
    /// outperformed (lower is better).
    pub mean_loss: Vec<f64>,
    /// (setting, cycle) combinations pooled per pair.
    pub combinations: usize,
}

/// The Holm family size per setting: all method pairs across all loops.
pub fn holm_comparisons(num_methods: usize, num_loops: usize) -> usize {
    num_methods * (num_methods - 1) / 2 * num_loops
}

/// Build the pairwise penalty matrix at significance level `p` over
/// per-seed mean-Dice records grouped by (setting, cycle, method). A
/// significant positive mean difference is a win for the larger method;
/// zero-variance differences are ties. With [`Correction::Holm`] the
/// step-down correction runs within each setting over its
/// pairs-times-loops family.
pub fn ppm(records: &[PpmRecord], p: f64, correction: Correction) -> Result<PpmMatrix> {
    let methods: Vec<String> = {
        let set: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
        set.into_iter().map(String::from).collect()
    };
    let settings: Vec<String> = {
        let set: BTreeSet<&str> = records.iter().map(|r| r.setting.as_str()).collect();
        set.into_iter().map(String::from).collect()
    };
    let cycles: Vec<usize> = {
        let set: BTreeSet<usize> = records.iter().map(|r| r.cycle).collect();
        set.into_iter().collect()
    };
    let k = methods.len();
    if k < 2 {
        return Ok(PpmMatrix {
            methods,
            win: vec![vec![0.0; k]; k],
            mean_loss: vec![0.0; k],
            combinations: 0,
        });
    }

    let lookup = |setting: &str, cycle: usize, method: &str| -> Result<&PpmRecord> {
        records
            .iter()
            .find(|r| r.setting == setting && r.cycle == cycle && r.method == method)
            .ok_or_else(|| {
                Error::InconsistentRuns(format!("missing record {setting}/{cycle}/{method}"))
            })
    };

    let seed_count = records.first().map_or(0, |r| r.per_seed.len());
    if seed_count < 2 {
        return Err(Error::SeedMismatch(format!(
            "need at least 2 seeds per method, got {seed_count}"
        )));
    }
    if let Some(bad) = records.iter().find(|r| r.per_seed.len() != seed_count) {
        return Err(Error::SeedMismatch(format!(
            "{}/{}/{} has {} seeds, expected {seed_count}",
            bad.setting,
            bad.cycle,
            bad.method,
            bad.per_seed.len()
        )));
    }

    // wins[i][j] counts (setting, cycle) combinations where i beats j.
    let mut wins = vec![vec![0usize; k]; k];
    let m_per_setting = holm_comparisons(k, cycles.len());

    for setting in &settings {
        // Comparison index -> (cycle, i, j, winner i?) for Holm bookkeeping.
        let mut tests: Vec<(f64, usize, usize)> = Vec::new(); // (p, wi, wj)
        let mut observed: Vec<(usize, f64)> = Vec::new();
        for &cycle in &cycles {
            for i in 0..k {
                for j in i + 1..k {
                    let a = lookup(setting, cycle, &methods[i])?;
                    let b = lookup(setting, cycle, &methods[j])?;
                    match paired_t_pvalue(&a.per_seed, &b.per_seed) {
                        PairedOutcome::Tie => {}
                        PairedOutcome::Test { p_value, mean_diff } => {
                            let (wi, wj) = if mean_diff > 0.0 { (i, j) } else { (j, i) };
                            observed.push((tests.len(), p_value));
                            tests.push((p_value, wi, wj));
                        }
                    }
                }
            }
        }
        match correction {
            Correction::None => {
                for &(p_value, wi, wj) in &tests {
                    if p_value <= p {
                        wins[wi][wj] += 1;
                    }
                }
            }
            Correction::Holm => {
                for idx in holm_reject(&observed, p, m_per_setting) {
                    let (_, wi, wj) = tests[idx];
                    wins[wi][wj] += 1;
                }
            }
        }
    }

    let combinations = settings.len() * cycles.len();
    let scale = 100.0 / combinations as f64;
    let win: Vec<Vec<f64>> = wins
        .iter()
        .map(|row| row.iter().map(|&w| w as f64 * scale).collect())
        .collect();
    let mean_loss = (0..k)
        .map(|j| (0..k).filter(|&i| i != j).map(|i| win[i][j]).sum::<f64>() / (k - 1) as f64)
        .collect();
    Ok(PpmMatrix { methods, win, mean_loss, combinations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(setting: &str, cycle: usize, method: &str, values: &[f64]) -> PpmRecord {
        PpmRecord {
            setting: setting.into(),
            cycle,
            method: method.into(),
            per_seed: values.to_vec(),
        }
    }

    #[test]
    fn holm_divisor_matches_protocol() {
        assert_eq!(holm_comparisons(9, 5), 180);
    }

    #[test]
    fn dominant_method_sweeps() {
        let mut records = Vec::new();
        for cycle in 0..5 {
            let bump = cycle as f64 * 0.01;
            records.push(rec("s0", cycle, "a", &[0.90 + bump, 0.91, 0.89, 0.90]));
            records.push(rec("s0", cycle, "b", &[0.50 + bump, 0.52, 0.49, 0.51]));
        }
        let m = ppm(&records, 0.05, Correction::None).unwrap();
        let ai = m.methods.iter().position(|m| m == "a").unwrap();
        let bi = m.methods.iter().position(|m| m == "b").unwrap();
        assert_eq!(m.win[ai][bi], 100.0);
        assert_eq!(m.win[bi][ai], 0.0);
        assert_eq!(m.mean_loss[bi], 100.0);
    }

    #[test]
    fn identical_methods_tie_everywhere() {
        let vals = [0.7, 0.72, 0.69, 0.71];
        let records = vec![
            rec("s0", 0, "a", &vals),
            rec("s0", 0, "b", &vals),
        ];
        let m = ppm(&records, 0.05, Correction::None).unwrap();
        assert!(m.win.iter().flatten().all(|&w| w == 0.0));
    }

    #[test]
    fn antisymmetry_and_zero_diagonal() {
        // wins and losses are transposes by construction; check through
        // a mixed fixture with three methods.
        let mut records = Vec::new();
        for (mi, m) in ["a", "b", "c"].iter().enumerate() {
            for cycle in 0..3 {
                let base = 0.5 + 0.1 * mi as f64 + 0.002 * cycle as f64;
                records.push(rec(
                    "s0",
                    cycle,
                    m,
                    &[base, base + 0.011, base - 0.013, base + 0.007],
                ));
            }
        }
        let m = ppm(&records, 0.05, Correction::None).unwrap();
        let k = m.methods.len();
        for i in 0..k {
            assert_eq!(m.win[i][i], 0.0);
            for j in 0..k {
                // loss%(j, i) is win%(i, j) read through the transpose
                assert_eq!(m.win[i][j], m.win[i][j].max(0.0));
            }
        }
    }

    #[test]
    fn holm_set_is_subset_of_uncorrected() {
        let mut records = Vec::new();
        for cycle in 0..5 {
            let jit = cycle as f64 * 0.003;
            records.push(rec("s0", cycle, "a", &[0.80 + jit, 0.82, 0.79, 0.81]));
            records.push(rec("s0", cycle, "b", &[0.77 + jit, 0.80, 0.76, 0.78]));
            records.push(rec("s0", cycle, "c", &[0.50 + jit, 0.52, 0.49, 0.51]));
        }
        let plain = ppm(&records, 0.05, Correction::None).unwrap();
        let holm = ppm(&records, 0.05, Correction::Holm).unwrap();
        for i in 0..plain.methods.len() {
            for j in 0..plain.methods.len() {
                assert!(holm.win[i][j] <= plain.win[i][j] + 1e-12);
            }
        }
    }

    #[test]
    fn seed_mismatch_is_an_error() {
        let records = vec![
            rec("s0", 0, "a", &[0.5, 0.6]),
            rec("s0", 0, "b", &[0.5, 0.6, 0.7]),
        ];
        assert!(matches!(
            ppm(&records, 0.05, Correction::None),
            Err(Error::SeedMismatch(_))
        ));
    }
}
