//! End-to-end experiment orchestration: the AL loop
//! (fit -> predict -> score -> query -> annotate -> evaluate),
//! persistence, and run evaluation.

mod loopfile;
pub mod report;
mod results;

pub use loopfile::{LoopFile, LoopPatch};
pub use report::evaluate_runs;
pub use results::{read_results, write_results};

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationState;
use crate::config::ExperimentConfig;
use crate::dataset::{read_dataset, Dataset};
use crate::error::{Error, Result};
use crate::geom::PatchBox;
use crate::metrics::{dice, CycleRecord, TrajectoryRecord};
use crate::oracle;
use crate::patchscore::{aggregate_patch_scores, default_stride, CandidateSet};
use crate::rng::derive_stream;
use crate::segmenter::{self, Ensemble};
use crate::strategies::{
    self, apply_power_noise, apply_softrank_noise, beta_schedule, select_topk, QueryMethodSpec,
    QueryResult, UncertaintyKind, SCORE_FLOOR,
};
use crate::uncertainty::{bald, predictive_entropy, stratify, StratifiedScoreStack};
use crate::volume::{LabelVolume, UncertaintyField, VoxelGrid};

pub const META_NAME: &str = "run_meta.json";
pub const RESULTS_NAME: &str = "results.csv";

/// Run-level metadata needed to evaluate results later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub method_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub cycles: usize,
    pub query_size: usize,
    pub patch_size: [usize; 3],
    /// Mean test Dice of the reference model trained on every pool voxel.
    pub y_full: f64,
    /// Total foreground voxels over the pool, the denominator of the
    /// annotated-foreground fraction.
    pub pool_fg_voxels: u64,
    pub config: ExperimentConfig,
}

/// In-memory outcome of one run, for tests and downstream tooling.
pub struct RunOutcome {
    pub record: TrajectoryRecord,
    pub annotations: AnnotationState,
    pub y_full: f64,
    pub pool_fg_voxels: u64,
}

/// Mean test-set Dice plus the per-class means (None when a class is
/// absent from prediction and truth in every test image).
fn evaluate_test_dice(
    ensemble: &Ensemble,
    test: &[(VoxelGrid, LabelVolume)],
    num_classes: u8,
) -> Result<(Vec<Option<f64>>, f64)> {
    let per_image: Vec<Vec<Option<f64>>> = test
        .par_iter()
        .map(|(grid, gt)| {
            let pred = segmenter::predict(ensemble, grid);
            let labels = pred.mean.argmax_labels(num_classes)?;
            Ok(dice(&labels, gt, num_classes)?.per_class)
        })
        .collect::<Result<_>>()?;
    let c = num_classes as usize;
    let mut per_class = vec![None; c];
    for (k, slot) in per_class.iter_mut().enumerate() {
        let values: Vec<f64> = per_image.iter().filter_map(|row| row[k]).collect();
        if !values.is_empty() {
            *slot = Some(values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok((per_class, mean))
}

/// Reference performance with every pool voxel annotated. Deterministic
/// per dataset and independent of the experiment seed.
fn full_data_reference(dataset: &Dataset) -> Result<f64> {
    let dims = dataset.dims;
    let mut full = AnnotationState::new(dataset.train.len(), dims, dataset.num_classes);
    let whole = PatchBox::new([0, 0, 0], dims.as_array());
    for (i, (_, labels)) in dataset.train.iter().enumerate() {
        full.add_patch(i, whole, labels);
    }
    let ensemble = segmenter::fit_without_bootstrap(&full, &dataset.train, 1)?;
    let (_, mean) = evaluate_test_dice(&ensemble, &dataset.test, dataset.num_classes)?;
    Ok(mean)
}

/// Per-image uncertainty map (and stratified stack for the clasp family)
/// computed from a fresh prediction.
struct ImageScores {
    uncertainty: UncertaintyField,
    stack: Option<StratifiedScoreStack>,
}

fn score_pool(
    ensemble: &Ensemble,
    pool: &[(VoxelGrid, LabelVolume)],
    base: UncertaintyKind,
    want_stack: bool,
) -> Result<Vec<ImageScores>> {
    pool.par_iter()
        .map(|(grid, _)| {
            let pred = segmenter::predict(ensemble, grid);
            let u = match base {
                UncertaintyKind::Pe => predictive_entropy(&pred.mean),
                UncertaintyKind::Bald => bald(&pred.members, &pred.mean)?,
            };
            let stack = want_stack.then(|| stratify(&u, &pred.mean));
            Ok(ImageScores { uncertainty: u, stack })
        })
        .collect()
}

struct QueryStep {
    result: QueryResult,
    beta: Option<f64>,
}

/// Dispatch one query step. `t` is the query-step index (0-based over
/// cycles with a query) and `t_max = cycles - 1` the schedule horizon.
#[allow(clippy::too_many_arguments)]
fn run_query(
    method: &QueryMethodSpec,
    ensemble: &Ensemble,
    dataset: &Dataset,
    labels: &[LabelVolume],
    annotations: &AnnotationState,
    config: &ExperimentConfig,
    stride: usize,
    t: usize,
    t_max: usize,
    stream: &mut crate::rng::RngStream,
    cycle: usize,
) -> Result<QueryStep> {
    let n = config.query_size;
    let patch = config.patch_size;
    let o = method.overlap();

    let aggregate_global = |scores: &[ImageScores]| -> Result<Vec<CandidateSet>> {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| aggregate_patch_scores(&s.uncertainty, i, patch, stride))
            .collect()
    };

    match method {
        QueryMethodSpec::Random(_) => Ok(QueryStep {
            result: strategies::query_random(annotations, patch, n, o, stream, cycle),
            beta: None,
        }),
        QueryMethodSpec::RandomFg(p) => Ok(QueryStep {
            result: strategies::query_random_fg(
                annotations,
                labels,
                patch,
                n,
                p.fg_fraction,
                o,
                stream,
                cycle,
            ),
            beta: None,
        }),
        QueryMethodSpec::Topk(p) => {
            let scores = score_pool(ensemble, &dataset.train, p.base, false)?;
            let sets = aggregate_global(&scores)?;
            Ok(QueryStep { result: select_topk(&sets, n, o, annotations, cycle), beta: None })
        }
        QueryMethodSpec::Power(p) => {
            let scores = score_pool(ensemble, &dataset.train, p.base, false)?;
            let mut sets = aggregate_global(&scores)?;
            for set in sets.iter_mut() {
                apply_power_noise(set, p.beta, stream, SCORE_FLOOR);
            }
            Ok(QueryStep {
                result: select_topk(&sets, n, o, annotations, cycle),
                beta: Some(p.beta),
            })
        }
        QueryMethodSpec::Softrank(p) => {
            let scores = score_pool(ensemble, &dataset.train, p.base, false)?;
            let mut sets = aggregate_global(&scores)?;
            apply_softrank_noise(&mut sets, p.beta, stream);
            Ok(QueryStep {
                result: select_topk(&sets, n, o, annotations, cycle),
                beta: Some(p.beta),
            })
        }
        QueryMethodSpec::Clasp(p) => {
            let beta = beta_schedule(t, t_max, p.beta0, p.beta_max);
            let scores = score_pool(ensemble, &dataset.train, p.base, true)?;
            let stacks: Vec<StratifiedScoreStack> =
                scores.into_iter().map(|s| s.stack.expect("stack requested")).collect();
            let result = strategies::query_clasp(
                &stacks,
                patch,
                stride,
                n,
                p.alpha,
                Some(beta),
                o,
                annotations,
                stream,
                cycle,
            )?;
            Ok(QueryStep { result, beta: Some(beta) })
        }
        QueryMethodSpec::Cla(p) => {
            let scores = score_pool(ensemble, &dataset.train, p.base, true)?;
            let stacks: Vec<StratifiedScoreStack> =
                scores.into_iter().map(|s| s.stack.expect("stack requested")).collect();
            let result = strategies::query_clasp(
                &stacks,
                patch,
                stride,
                n,
                p.alpha,
                None,
                o,
                annotations,
                stream,
                cycle,
            )?;
            Ok(QueryStep { result, beta: None })
        }
        QueryMethodSpec::Clap(p) => {
            let scores = score_pool(ensemble, &dataset.train, p.base, true)?;
            let stacks: Vec<StratifiedScoreStack> =
                scores.into_iter().map(|s| s.stack.expect("stack requested")).collect();
            let result = strategies::query_clasp(
                &stacks,
                patch,
                stride,
                n,
                p.alpha,
                Some(p.beta),
                o,
                annotations,
                stream,
                cycle,
            )?;
            Ok(QueryStep { result, beta: Some(p.beta) })
        }
    }
}

/// Run one full AL experiment and persist loop files, results.csv, and
/// run metadata under `out_dir`. Fully deterministic per (config, seed).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = read_dataset(&config.dataset_dir)?;
    let dims = dataset.dims;
    let patch = config.patch_size;
    if patch[0] > dims.d || patch[1] > dims.h || patch[2] > dims.w {
        return Err(Error::InvalidConfig(format!(
            "patch {patch:?} does not fit volume {:?}",
            dims.as_array()
        )));
    }
    if config.query_size < 2 * dataset.num_classes as usize {
        return Err(Error::InvalidConfig(format!(
            "query_size {} below 2 patches per class for the starting budget",
            config.query_size
        )));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;

    let stride = config.candidate_stride.unwrap_or_else(|| default_stride(dims, patch));
    let seed = config.seed;
    let labels: Vec<LabelVolume> = dataset.train.iter().map(|(_, l)| l.clone()).collect();

    let y_full = full_data_reference(&dataset)?;
    let pool_fg_voxels = dataset.pool_fg_voxels();

    // Cycle 0: the protocol starting budget.
    let mut start_stream = derive_stream(seed, "start", 0);
    let start_fingerprint = start_stream.fingerprint().to_string();
    let (mut annotations, start_result) = oracle::build_starting_budget(
        &labels,
        patch,
        config.query_size,
        config.method.overlap(),
        &mut start_stream,
    )?;
    LoopFile::from_result(&start_result, &config.method, None, start_fingerprint)
        .write(out_dir)?;

    let mut cycles: Vec<CycleRecord> = Vec::with_capacity(config.cycles);
    let mut fit_stream = derive_stream(seed, "fit", 0);
    let mut ensemble =
        segmenter::fit(&annotations, &dataset.train, &mut fit_stream, config.ensemble_size)?;
    let (per_class, mean) = evaluate_test_dice(&ensemble, &dataset.test, dataset.num_classes)?;
    cycles.push(CycleRecord {
        budget_patches: annotations.total_patches(),
        fg_voxels: annotations.fg_voxels(),
        per_class_dice: per_class,
        mean_dice: mean,
    });

    let t_max = config.cycles - 1;
    for cycle in 1..config.cycles {
        let t = cycle - 1;
        let mut query_stream = derive_stream(seed, "query", t as u64);
        let fingerprint = query_stream.fingerprint().to_string();
        let step = run_query(
            &config.method,
            &ensemble,
            &dataset,
            &labels,
            &annotations,
            config,
            stride,
            t,
            t_max,
            &mut query_stream,
            cycle,
        )
        .map_err(|e| Error::Cycle { cycle, source: Box::new(e) })?;
        oracle::annotate(&mut annotations, &step.result, &labels);
        LoopFile::from_result(&step.result, &config.method, step.beta, fingerprint)
            .write(out_dir)?;

        let mut fit_stream = derive_stream(seed, "fit", cycle as u64);
        ensemble = segmenter::fit(
            &annotations,
            &dataset.train,
            &mut fit_stream,
            config.ensemble_size,
        )?;
        let (per_class, mean) =
            evaluate_test_dice(&ensemble, &dataset.test, dataset.num_classes)?;
        cycles.push(CycleRecord {
            budget_patches: annotations.total_patches(),
            fg_voxels: annotations.fg_voxels(),
            per_class_dice: per_class,
            mean_dice: mean,
        });
    }

    let record = TrajectoryRecord {
        method: config.method.id(),
        setting: config.dataset.clone(),
        seed,
        cycles,
    };
    record.validate()?;
    write_results(&out_dir.join(RESULTS_NAME), &record)?;

    let meta = RunMeta {
        schema_version: 1,
        method_id: record.method.clone(),
        dataset_id: config.dataset.clone(),
        seed,
        cycles: config.cycles,
        query_size: config.query_size,
        patch_size: patch,
        y_full,
        pool_fg_voxels,
        config: config.clone(),
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::json("serializing run meta", e))?;
    fs::write(out_dir.join(META_NAME), meta_json)
        .map_err(|e| Error::io("writing run meta", e))?;

    Ok(RunOutcome { record, annotations, y_full, pool_fg_voxels })
}
