//! Run evaluation: ingest completed runs and emit the metric tables,
//! pairwise penalty matrices, rank analysis, and propagated aggregate
//! means, as CSV and JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{read_results, RunMeta, META_NAME, RESULTS_NAME};
use crate::metrics::{
    aggregate_mean_ci, aubc, fg_eff, friedman_nemenyi, holm_comparisons, ppm, Correction,
    FriedmanNemenyi, PpmMatrix, PpmRecord, TrajectoryRecord,
};

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub setting: String,
    pub method: String,
    pub seeds: usize,
    pub aubc_mean: f64,
    pub aubc_std: f64,
    pub final_dice_mean: f64,
    pub final_dice_std: f64,
    /// FG-Eff decay rate; missing when every seed's fit was degenerate.
    pub fg_eff_mean: Option<f64>,
    pub fg_eff_std: Option<f64>,
    /// Seeds whose efficiency fit was degenerate or undefined.
    pub fg_eff_missing: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// 1.96 x propagated standard error.
    pub ci95_half_width: f64,
    pub settings: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub settings: Vec<String>,
    pub methods: Vec<String>,
    pub seeds_per_method: usize,
    pub summaries: Vec<MethodSummary>,
    pub aggregates: Vec<AggregateRow>,
    pub ppm_p005: Option<PpmMatrix>,
    pub ppm_p002: Option<PpmMatrix>,
    pub ppm_holm: Option<PpmMatrix>,
    pub holm_family_size: usize,
    pub rank_analysis: BTreeMap<String, FriedmanNemenyi>,
    pub notes: Vec<String>,
}

struct Run {
    record: TrajectoryRecord,
    meta: RunMeta,
}

fn discover_runs(runs_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    if runs_dir.join(RESULTS_NAME).exists() {
        dirs.push(runs_dir.to_path_buf());
    }
    let entries = fs::read_dir(runs_dir)
        .map_err(|e| Error::io(format!("listing {}", runs_dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io("reading dir entry", e))?;
        let path = entry.path();
        if path.is_dir() && path.join(RESULTS_NAME).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InconsistentRuns(format!(
            "no completed runs under {}",
            runs_dir.display()
        )));
    }
    Ok(dirs)
}

fn load_runs(runs_dir: &Path) -> Result<Vec<Run>> {
    let mut runs = Vec::new();
    for dir in discover_runs(runs_dir)? {
        let record = read_results(&dir.join(RESULTS_NAME))?;
        let meta_text = fs::read_to_string(dir.join(META_NAME))
            .map_err(|e| Error::io(format!("reading {}", dir.join(META_NAME).display()), e))?;
        let meta: RunMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::json("parsing run meta", e))?;
        runs.push(Run { record, meta });
    }

    let cycles = runs[0].record.cycles.len();
    let mut seen: BTreeSet<(String, String, u64)> = BTreeSet::new();
    let mut y_full: BTreeMap<String, f64> = BTreeMap::new();
    for run in &runs {
        if run.record.cycles.len() != cycles {
            return Err(Error::InconsistentRuns(format!(
                "{}/{} has {} cycles, expected {cycles}",
                run.record.method,
                run.record.setting,
                run.record.cycles.len()
            )));
        }
        let key =
            (run.record.setting.clone(), run.record.method.clone(), run.record.seed);
        if !seen.insert(key) {
            return Err(Error::InconsistentRuns(format!(
                "duplicate run {}/{}/seed {}",
                run.record.setting, run.record.method, run.record.seed
            )));
        }
        match y_full.get(&run.record.setting) {
            Some(&v) if v != run.meta.y_full => {
                return Err(Error::InconsistentRuns(format!(
                    "y_full differs across runs of {}",
                    run.record.setting
                )));
            }
            None => {
                y_full.insert(run.record.setting.clone(), run.meta.y_full);
            }
            _ => {}
        }
    }
    Ok(runs)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(format!("creating {}", path.display()), e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| Error::csv("writing row", e))?;
    }
    writer.flush().map_err(|e| Error::io("flushing csv", e))
}

fn write_ppm_csv(path: &Path, matrix: &PpmMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(format!("creating {}", path.display()), e))?;
    let mut header = vec!["method".to_string()];
    header.extend(matrix.methods.iter().cloned());
    writer.write_record(&header).map_err(|e| Error::csv("writing header", e))?;
    for (i, m) in matrix.methods.iter().enumerate() {
        let mut row = vec![m.clone()];
        row.extend(matrix.win[i].iter().map(|w| w.to_string()));
        writer.write_record(&row).map_err(|e| Error::csv("writing row", e))?;
    }
    let mut mean_row = vec!["mean_loss".to_string()];
    mean_row.extend(matrix.mean_loss.iter().map(|w| w.to_string()));
    writer.write_record(&mean_row).map_err(|e| Error::csv("writing row", e))?;
    writer.flush().map_err(|e| Error::io("flushing ppm csv", e))
}

/// Evaluate all completed runs under `runs_dir` and write the report
/// artifacts into `report_dir`.
///
/// PPM and rank analysis require aligned multi-seed, multi-method runs;
/// when the inputs cannot support them the report carries an
/// explanatory note instead.
pub fn evaluate_runs(runs_dir: &Path, report_dir: &Path) -> Result<Report> {
    let runs = load_runs(runs_dir)?;
    fs::create_dir_all(report_dir)
        .map_err(|e| Error::io(format!("creating {}", report_dir.display()), e))?;
    let mut notes = Vec::new();

    let settings: Vec<String> = {
        let s: BTreeSet<&str> = runs.iter().map(|r| r.record.setting.as_str()).collect();
        s.into_iter().map(String::from).collect()
    };
    let methods: Vec<String> = {
        let s: BTreeSet<&str> = runs.iter().map(|r| r.record.method.as_str()).collect();
        s.into_iter().map(String::from).collect()
    };
    let cycles = runs[0].record.cycles.len();

    // Per (setting, method) summaries over seeds.
    let mut summaries = Vec::new();
    // (setting, method) -> per-metric per-seed values, seed-sorted.
    let mut aubc_by: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut final_by: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut fgeff_means: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    for setting in &settings {
        for method in &methods {
            let mut group: Vec<&Run> = runs
                .iter()
                .filter(|r| &r.record.setting == setting && &r.record.method == method)
                .collect();
            if group.is_empty() {
                continue;
            }
            group.sort_by_key(|r| r.record.seed);
            let aubc_vals: Vec<f64> = group
                .iter()
                .map(|r| aubc(&r.record.mean_dice_curve()))
                .collect::<Result<_>>()?;
            let final_vals: Vec<f64> = group
                .iter()
                .map(|r| r.record.final_dice().expect("validated cycles"))
                .collect();
            let mut gammas = Vec::new();
            let mut missing = 0usize;
            for run in &group {
                let total_fg = run.meta.pool_fg_voxels.max(1) as f64;
                let points: Vec<(f64, f64)> = run
                    .record
                    .cycles
                    .iter()
                    .map(|c| (c.fg_voxels as f64 / total_fg, c.mean_dice))
                    .collect();
                match fg_eff(&points, run.meta.y_full) {
                    Ok(fit) => gammas.push(fit.gamma),
                    Err(_) => missing += 1,
                }
            }
            let (aubc_mean, aubc_std) = mean_std(&aubc_vals);
            let (final_mean, final_std) = mean_std(&final_vals);
            let (fg_mean, fg_std) = if gammas.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&gammas);
                (Some(m), Some(s))
            };
            summaries.push(MethodSummary {
                setting: setting.clone(),
                method: method.clone(),
                seeds: group.len(),
                aubc_mean,
                aubc_std,
                final_dice_mean: final_mean,
                final_dice_std: final_std,
                fg_eff_mean: fg_mean,
                fg_eff_std: fg_std,
                fg_eff_missing: missing,
            });
            aubc_by.insert((setting.clone(), method.clone()), aubc_vals);
            final_by.insert((setting.clone(), method.clone()), final_vals);
            fgeff_means.insert((setting.clone(), method.clone()), fg_mean);
        }
    }

    // Common seed count; PPM and rank analysis need aligned seeds.
    let seed_sets: BTreeSet<Vec<u64>> = {
        let mut sets = BTreeSet::new();
        for setting in &settings {
            for method in &methods {
                let mut seeds: Vec<u64> = runs
                    .iter()
                    .filter(|r| &r.record.setting == setting && &r.record.method == method)
                    .map(|r| r.record.seed)
                    .collect();
                seeds.sort_unstable();
                if !seeds.is_empty() {
                    sets.insert(seeds);
                }
            }
        }
        sets
    };
    if seed_sets.len() > 1 {
        return Err(Error::InconsistentRuns(
            "methods were run with differing seed sets".into(),
        ));
    }
    let seeds_per_method = seed_sets.iter().next().map_or(0, |s| s.len());

    // Pairwise penalty matrices over per-seed mean Dice per cycle.
    let holm_family_size = holm_comparisons(methods.len(), cycles);
    let (ppm_p005, ppm_p002, ppm_holm) = if methods.len() >= 2 && seeds_per_method >= 2 {
        let mut records = Vec::new();
        for setting in &settings {
            for method in &methods {
                let mut group: Vec<&Run> = runs
                    .iter()
                    .filter(|r| &r.record.setting == setting && &r.record.method == method)
                    .collect();
                group.sort_by_key(|r| r.record.seed);
                for cycle in 0..cycles {
                    records.push(PpmRecord {
                        setting: setting.clone(),
                        cycle,
                        method: method.clone(),
                        per_seed: group
                            .iter()
                            .map(|r| r.record.cycles[cycle].mean_dice)
                            .collect(),
                    });
                }
            }
        }
        (
            Some(ppm(&records, 0.05, Correction::None)?),
            Some(ppm(&records, 0.02, Correction::None)?),
            Some(ppm(&records, 0.05, Correction::Holm)?),
        )
    } else {
        notes.push(format!(
            "PPM skipped: needs >=2 methods and >=2 seeds, got {} method(s) x {} seed(s)",
            methods.len(),
            seeds_per_method
        ));
        (None, None, None)
    };

    // Friedman / Nemenyi rank analysis per metric across settings.
    let mut rank_analysis = BTreeMap::new();
    if settings.len() >= 2 && methods.len() >= 2 {
        for (name, table) in [("aubc", &aubc_by), ("final_dice", &final_by)] {
            let matrix: Vec<Vec<f64>> = settings
                .iter()
                .map(|s| {
                    methods
                        .iter()
                        .map(|m| {
                            let vals = &table[&(s.clone(), m.clone())];
                            vals.iter().sum::<f64>() / vals.len() as f64
                        })
                        .collect()
                })
                .collect();
            rank_analysis.insert(name.to_string(), friedman_nemenyi(&methods, &matrix, 0.05)?);
        }
        // FG-Eff ranks only when every (setting, method) cell has a
        // defined fit; degenerate fits have no rate to rank.
        let fgeff_matrix: Option<Vec<Vec<f64>>> = settings
            .iter()
            .map(|s| {
                methods
                    .iter()
                    .map(|m| fgeff_means.get(&(s.clone(), m.clone())).copied().flatten())
                    .collect::<Option<Vec<f64>>>()
            })
            .collect();
        match fgeff_matrix {
            Some(matrix) => {
                rank_analysis
                    .insert("fg_eff".to_string(), friedman_nemenyi(&methods, &matrix, 0.05)?);
            }
            None => notes.push(
                "FG-Eff rank analysis skipped: some runs had degenerate efficiency fits".into(),
            ),
        }
    } else {
        notes.push(format!(
            "rank analysis skipped: needs >=2 settings and >=2 methods, got {} x {}",
            settings.len(),
            methods.len()
        ));
    }

    // Error-propagated aggregate means across settings.
    let mut aggregates = Vec::new();
    if seeds_per_method >= 2 {
        for method in &methods {
            for (name, table) in [("aubc", &aubc_by), ("final_dice", &final_by)] {
                let per_setting: Vec<(f64, f64)> = settings
                    .iter()
                    .filter_map(|s| table.get(&(s.clone(), method.clone())).map(|v| mean_std(v)))
                    .collect();
                if per_setting.is_empty() {
                    continue;
                }
                let (mean, half) = aggregate_mean_ci(&per_setting, seeds_per_method);
                aggregates.push(AggregateRow {
                    method: method.clone(),
                    metric: name.to_string(),
                    mean,
                    ci95_half_width: half,
                    settings: per_setting.len(),
                });
            }
        }
    } else {
        notes.push("aggregate CI skipped: needs >=2 seeds".into());
    }

    let report = Report {
        settings,
        methods,
        seeds_per_method,
        summaries,
        aggregates,
        ppm_p005,
        ppm_p002,
        ppm_holm,
        holm_family_size,
        rank_analysis,
        notes,
    };

    write_csv(&report_dir.join("summary.csv"), &report.summaries)?;
    write_csv(&report_dir.join("aggregate.csv"), &report.aggregates)?;
    if let Some(m) = &report.ppm_p005 {
        write_ppm_csv(&report_dir.join("ppm_p005.csv"), m)?;
    }
    if let Some(m) = &report.ppm_p002 {
        write_ppm_csv(&report_dir.join("ppm_p002.csv"), m)?;
    }
    if let Some(m) = &report.ppm_holm {
        write_ppm_csv(&report_dir.join("ppm_holm.csv"), m)?;
    }
    let ranks_json = serde_json::to_string_pretty(&report.rank_analysis)
        .map_err(|e| Error::json("serializing rank analysis", e))?;
    fs::write(report_dir.join("friedman_nemenyi.json"), ranks_json)
        .map_err(|e| Error::io("writing rank analysis", e))?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::json("serializing report", e))?;
    fs::write(report_dir.join("report.json"), report_json)
        .map_err(|e| Error::io("writing report", e))?;

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::harness::write_results;
    use crate::metrics::CycleRecord;
    use crate::strategies::{QueryMethodSpec, RandomParams};

    fn synth_run(
        root: &Path,
        setting: &str,
        method: &str,
        seed: u64,
        dice_base: f64,
        y_full: f64,
    ) {
        let dir = root.join(format!("{setting}_{method}_s{seed}"));
        fs::create_dir_all(&dir).unwrap();
        let cycles: Vec<CycleRecord> = (0..5)
            .map(|i| {
                // rising curve; seed jitter scaled by the method name so
                // paired differences are never constant
                let jitter = seed as f64 * 0.003 * (1.0 + method.len() as f64 * 0.17);
                let d = dice_base + 0.05 * i as f64 + jitter;
                CycleRecord {
                    budget_patches: 10 * (i + 1),
                    fg_voxels: 500 * (i as u64 + 1) + seed * 7 + (method.len() as u64),
                    per_class_dice: vec![Some(d)],
                    mean_dice: d,
                }
            })
            .collect();
        let record = TrajectoryRecord {
            method: method.into(),
            setting: setting.into(),
            seed,
            cycles,
        };
        write_results(&dir.join(RESULTS_NAME), &record).unwrap();
        let meta = RunMeta {
            schema_version: 1,
            method_id: method.into(),
            dataset_id: setting.into(),
            seed,
            cycles: 5,
            query_size: 10,
            patch_size: [4, 4, 4],
            y_full,
            pool_fg_voxels: 50_000,
            config: ExperimentConfig {
                dataset: setting.into(),
                dataset_dir: "unused".into(),
                method: QueryMethodSpec::Random(RandomParams { overlap: 0.0 }),
                cycles: 5,
                query_size: 10,
                total_budget: None,
                patch_size: [4, 4, 4],
                seed,
                ensemble_size: 5,
                candidate_stride: None,
            },
        };
        fs::write(dir.join(META_NAME), serde_json::to_string_pretty(&meta).unwrap()).unwrap();
    }

    #[test]
    fn full_report_from_nine_methods() {
        let runs = tempfile::tempdir().unwrap();
        let methods: Vec<String> = (0..9).map(|i| format!("m{i}")).collect();
        for setting in ["set_a", "set_b"] {
            for (mi, m) in methods.iter().enumerate() {
                for seed in 0..4 {
                    synth_run(runs.path(), setting, m, seed, 0.3 + 0.03 * mi as f64, 0.9);
                }
            }
        }
        let report_dir = tempfile::tempdir().unwrap();
        let report = evaluate_runs(runs.path(), report_dir.path()).unwrap();
        assert_eq!(report.methods.len(), 9);
        assert_eq!(report.seeds_per_method, 4);
        let ppm = report.ppm_p005.as_ref().expect("ppm present");
        assert_eq!(ppm.win.len(), 9);
        for i in 0..9 {
            assert_eq!(ppm.win[i].len(), 9);
            assert_eq!(ppm.win[i][i], 0.0);
        }
        assert_eq!(report.holm_family_size, 180);
        assert!(report.rank_analysis.contains_key("aubc"));
        assert!(!report.aggregates.is_empty());
        for name in [
            "summary.csv",
            "aggregate.csv",
            "ppm_p005.csv",
            "ppm_p002.csv",
            "ppm_holm.csv",
            "friedman_nemenyi.json",
            "report.json",
        ] {
            assert!(report_dir.path().join(name).exists(), "{name} missing");
        }
    }

    #[test]
    fn single_run_emits_tables_with_notes() {
        let runs = tempfile::tempdir().unwrap();
        synth_run(runs.path(), "set_a", "solo", 0, 0.4, 0.9);
        let report_dir = tempfile::tempdir().unwrap();
        let report = evaluate_runs(runs.path(), report_dir.path()).unwrap();
        assert_eq!(report.summaries.len(), 1);
        assert!(report.ppm_p005.is_none());
        assert!(report.rank_analysis.is_empty());
        assert!(report.notes.iter().any(|n| n.contains("PPM skipped")));
    }

    #[test]
    fn dominant_method_sweeps_the_report_ppm() {
        let runs = tempfile::tempdir().unwrap();
        for seed in 0..4 {
            synth_run(runs.path(), "set_a", "strong", seed, 0.7, 0.95);
            synth_run(runs.path(), "set_a", "weak", seed, 0.2, 0.95);
        }
        let report_dir = tempfile::tempdir().unwrap();
        let report = evaluate_runs(runs.path(), report_dir.path()).unwrap();
        let ppm = report.ppm_p005.unwrap();
        let si = ppm.methods.iter().position(|m| m == "strong").unwrap();
        let wi = ppm.methods.iter().position(|m| m == "weak").unwrap();
        assert_eq!(ppm.win[si][wi], 100.0);
        assert_eq!(ppm.win[wi][si], 0.0);
    }

    #[test]
    fn inconsistent_runs_are_rejected() {
        // mismatched y_full across runs of one setting
        let runs = tempfile::tempdir().unwrap();
        synth_run(runs.path(), "set_a", "a", 0, 0.4, 0.9);
        synth_run(runs.path(), "set_a", "b", 0, 0.4, 0.8);
        let report_dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            evaluate_runs(runs.path(), report_dir.path()),
            Err(Error::InconsistentRuns(_))
        ));
    }
}
