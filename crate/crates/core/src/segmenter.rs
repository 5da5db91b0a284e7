//! A fast deterministic stand-in for a deep segmentation network: a
//! per-voxel Gaussian naive Bayes classifier over four features
//! (intensity plus normalized z/y/x coordinates), trained only on voxels
//! inside annotated patches, with a bootstrap ensemble supplying the M
//! stochastic predictive distributions that disagreement-based scoring
//! needs.

use rayon::prelude::*;

use crate::annotations::AnnotationState;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::volume::{LabelVolume, ProbabilityField, VoxelGrid};

pub const NUM_FEATURES: usize = 4;

/// Fitted variances never drop below this floor; single-voxel classes
/// would otherwise produce degenerate likelihoods.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Per-class feature Gaussians plus log prior for one ensemble member.
/// Classes absent from the member's resample carry a -inf log prior and
/// are never predicted by that member.
#[derive(Debug, Clone)]
pub struct GaussianClassModel {
    /// `[class][feature]` means; indexed by class id (0 = background).
    pub means: Vec<[f64; NUM_FEATURES]>,
    pub variances: Vec<[f64; NUM_FEATURES]>,
    pub log_priors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<GaussianClassModel>,
    pub num_classes: u8,
}

/// Everything `predict` returns: the per-member fields and their mean.
pub struct Prediction {
    pub members: Vec<ProbabilityField>,
    pub mean: ProbabilityField,
}

/// Feature/label pairs for every voxel under the annotation masks.
/// The feature vector is (intensity, z/D, y/H, x/W).
fn collect_samples(
    annotations: &AnnotationState,
    images: &[(VoxelGrid, LabelVolume)],
) -> (Vec<([f64; NUM_FEATURES], u8)>, u8) {
    let mut samples = Vec::new();
    let mut num_classes = 0u8;
    for (img_idx, (grid, labels)) in images.iter().enumerate() {
        num_classes = labels.num_classes;
        let mask = annotations.image(img_idx).mask();
        let dims = grid.dims;
        let mut i = 0usize;
        for z in 0..dims.d {
            let fz = z as f64 / dims.d as f64;
            for y in 0..dims.h {
                let fy = y as f64 / dims.h as f64;
                for x in 0..dims.w {
                    if mask[i] {
                        let f = [grid.values[i], fz, fy, x as f64 / dims.w as f64];
                        samples.push((f, labels.labels[i]));
                    }
                    i += 1;
                }
            }
        }
    }
    (samples, num_classes)
}

fn fit_member(
    samples: &[([f64; NUM_FEATURES], u8)],
    indices: &[usize],
    num_classes: u8,
) -> GaussianClassModel {
    let c_total = num_classes as usize + 1;
    let mut counts = vec![0u64; c_total];
    let mut sums = vec![[0.0; NUM_FEATURES]; c_total];
    for &i in indices {
        let (f, l) = samples[i];
        counts[l as usize] += 1;
        for (s, v) in sums[l as usize].iter_mut().zip(f) {
            *s += v;
        }
    }
    let mut means = vec![[0.0; NUM_FEATURES]; c_total];
    for c in 0..c_total {
        if counts[c] > 0 {
            for k in 0..NUM_FEATURES {
                means[c][k] = sums[c][k] / counts[c] as f64;
            }
        }
    }
    let mut sq = vec![[0.0; NUM_FEATURES]; c_total];
    for &i in indices {
        let (f, l) = samples[i];
        let c = l as usize;
        for (k, fv) in f.iter().enumerate() {
            let d = fv - means[c][k];
            sq[c][k] += d * d;
        }
    }
    let total = indices.len() as f64;
    let mut variances = vec![[VARIANCE_FLOOR; NUM_FEATURES]; c_total];
    let mut log_priors = vec![f64::NEG_INFINITY; c_total];
    for c in 0..c_total {
        if counts[c] > 0 {
            for k in 0..NUM_FEATURES {
                variances[c][k] = (sq[c][k] / counts[c] as f64).max(VARIANCE_FLOOR);
            }
            log_priors[c] = (counts[c] as f64 / total).ln();
        }
    }
    GaussianClassModel { means, variances, log_priors }
}

/// Fit a bootstrap ensemble on the annotated voxels. Each member is fit
/// on an independent with-replacement resample of the full annotated
/// voxel set, drawn from `stream` in member order.
pub fn fit(
    annotations: &AnnotationState,
    images: &[(VoxelGrid, LabelVolume)],
    stream: &mut RngStream,
    ensemble_size: usize,
) -> Result<Ensemble> {
    debug_assert_eq!(annotations.num_images(), images.len());
    let (samples, num_classes) = collect_samples(annotations, images);
    if samples.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let mut indices = vec![0usize; samples.len()];
    let members = (0..ensemble_size)
        .map(|_| {
            for i in indices.iter_mut() {
                *i = stream.below(samples.len());
            }
            fit_member(&samples, &indices, num_classes)
        })
        .collect();
    Ok(Ensemble { members, num_classes })
}

/// Fit one member on the complete annotated voxel set (no resampling)
/// and replicate it. Used for the full-data reference performance.
pub fn fit_without_bootstrap(
    annotations: &AnnotationState,
    images: &[(VoxelGrid, LabelVolume)],
    ensemble_size: usize,
) -> Result<Ensemble> {
    let (samples, num_classes) = collect_samples(annotations, images);
    if samples.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let indices: Vec<usize> = (0..samples.len()).collect();
    let member = fit_member(&samples, &indices, num_classes);
    Ok(Ensemble { members: vec![member; ensemble_size.max(1)], num_classes })
}

/// Per-class constants folded out of the voxel loop:
/// `offset = log prior - 0.5 sum_k ln(2 pi var_k)` and the half inverse
/// variances, so the per-voxel log-likelihood is a fused multiply chain.
struct ClassConsts {
    offset: f64,
    mean: [f64; NUM_FEATURES],
    half_inv_var: [f64; NUM_FEATURES],
}

fn class_consts(model: &GaussianClassModel) -> Vec<ClassConsts> {
    model
        .log_priors
        .iter()
        .enumerate()
        .map(|(c, &prior)| {
            let mut offset = prior;
            let mut half_inv_var = [0.0; NUM_FEATURES];
            if prior != f64::NEG_INFINITY {
                for (hiv, &var) in half_inv_var.iter_mut().zip(&model.variances[c]) {
                    offset -= 0.5 * (std::f64::consts::TAU * var).ln();
                    *hiv = 0.5 / var;
                }
            }
            ClassConsts { offset, mean: model.means[c], half_inv_var }
        })
        .collect()
}

fn predict_member(model: &GaussianClassModel, image: &VoxelGrid, num_classes: u8) -> ProbabilityField {
    let dims = image.dims;
    let n = dims.voxel_count();
    let c_total = num_classes as usize + 1;
    let consts = class_consts(model);
    let x_coords: Vec<f64> = (0..dims.w).map(|x| x as f64 / dims.w as f64).collect();
    let mut flat = vec![0.0; c_total * n];
    let mut ll = vec![0.0; c_total];
    let mut v = 0usize;
    for z in 0..dims.d {
        let fz = z as f64 / dims.d as f64;
        for y in 0..dims.h {
            let fy = y as f64 / dims.h as f64;
            let row_start = (z * dims.h + y) * dims.w;
            let row = &image.values[row_start..row_start + dims.w];
            for (x, &intensity) in row.iter().enumerate() {
                let f = [intensity, fz, fy, x_coords[x]];
                let mut max = f64::NEG_INFINITY;
                for (c, cc) in consts.iter().enumerate() {
                    let l = if cc.offset == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        let mut acc = cc.offset;
                        for ((fv, m), hiv) in f.iter().zip(&cc.mean).zip(&cc.half_inv_var) {
                            let d = fv - m;
                            acc -= d * d * hiv;
                        }
                        acc
                    };
                    ll[c] = l;
                    if l > max {
                        max = l;
                    }
                }
                let mut sum = 0.0;
                for l in ll.iter_mut() {
                    *l = (*l - max).exp();
                    sum += *l;
                }
                let inv = 1.0 / sum;
                for (c, &l) in ll.iter().enumerate() {
                    flat[c * n + v] = l * inv;
                }
                v += 1;
            }
        }
    }
    ProbabilityField::new(dims, c_total, flat).expect("softmax output is normalized")
}

/// Per-member softmaxed Gaussian log-likelihoods plus their arithmetic
/// mean. Members are independent; they are evaluated in parallel.
pub fn predict(ensemble: &Ensemble, image: &VoxelGrid) -> Prediction {
    let members: Vec<ProbabilityField> = ensemble
        .members
        .par_iter()
        .map(|m| predict_member(m, image, ensemble.num_classes))
        .collect();
    let mean = ProbabilityField::mean_of(&members).expect("ensemble is nonempty");
    Prediction { members, mean }
}
