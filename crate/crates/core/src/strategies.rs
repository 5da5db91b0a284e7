//! Query methods: naive and foreground-aware random baselines, top-k
//! uncertainty selection, power- and softrank-noised variants, the
//! exponential noise schedule, and class-stratified scheduled-power
//! selection with its ablations.
//!
//! Selection is greedy and order-defined everywhere: candidates are
//! visited in descending noised score with ties broken by
//! (image id, z, y, x) ascending, and a candidate is taken iff its
//! overlap with prior annotations plus already-taken boxes stays within
//! the allowed fraction `o`. This gives every method a total order and
//! makes runs bit-reproducible.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationState;
use crate::error::{Error, Result};
use crate::geom::{Dims3, PatchBox};
use crate::patchscore::{
    aggregate_patch_scores, overlap_exceeds, paint_box, Candidate, CandidateSet,
};
use crate::rng::{gumbel_sample, RngStream};
use crate::uncertainty::StratifiedScoreStack;
use crate::volume::LabelVolume;

/// Scores pass through `ln(max(score, SCORE_FLOOR))` before noising so
/// zero-uncertainty patches stay selectable with finite log scores.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Rejection-sampling attempt budget for the random strategies:
/// `RETRY_FACTOR * n` draws per query.
pub const RETRY_FACTOR: usize = 10_000;

/// The voxel-level score a method ranks by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    Pe,
    Bald,
}

impl UncertaintyKind {
    pub fn id(&self) -> &'static str {
        match self {
            UncertaintyKind::Pe => "pe",
            UncertaintyKind::Bald => "bald",
        }
    }
}

fn default_overlap() -> f64 {
    0.0
}

fn default_alpha() -> f64 {
    0.66
}

fn default_beta() -> f64 {
    1.0
}

fn default_beta0() -> f64 {
    1.0
}

fn default_beta_max() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomParams {
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFgParams {
    pub fg_fraction: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopkParams {
    pub base: UncertaintyKind,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub base: UncertaintyKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaspParams {
    pub base: UncertaintyKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaParams {
    pub base: UncertaintyKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClapParams {
    pub base: UncertaintyKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

/// Configured query method. Externally tagged in JSON, e.g.
/// `{"clasp": {"base": "pe", "alpha": 0.66}}`; unknown parameter keys
/// are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMethodSpec {
    Random(RandomParams),
    RandomFg(RandomFgParams),
    Topk(TopkParams),
    Power(PowerParams),
    Softrank(PowerParams),
    Clasp(ClaspParams),
    Cla(ClaParams),
    Clap(ClapParams),
}

impl QueryMethodSpec {
    /// Short stable identifier used in result files.
    pub fn id(&self) -> String {
        match self {
            QueryMethodSpec::Random(_) => "random".into(),
            QueryMethodSpec::RandomFg(p) => {
                format!("random_fg{:02}", (p.fg_fraction * 100.0).round() as u32)
            }
            QueryMethodSpec::Topk(p) => p.base.id().into(),
            QueryMethodSpec::Power(p) => format!("power_{}", p.base.id()),
            QueryMethodSpec::Softrank(p) => format!("softrank_{}", p.base.id()),
            QueryMethodSpec::Clasp(p) => format!("clasp_{}", p.base.id()),
            QueryMethodSpec::Cla(p) => {
                format!("cla_{}{:02}", p.base.id(), (p.alpha * 100.0).round() as u32)
            }
            QueryMethodSpec::Clap(p) => format!("clap_{}", p.base.id()),
        }
    }

    pub fn overlap(&self) -> f64 {
        match self {
            QueryMethodSpec::Random(p) => p.overlap,
            QueryMethodSpec::RandomFg(p) => p.overlap,
            QueryMethodSpec::Topk(p) => p.overlap,
            QueryMethodSpec::Power(p) | QueryMethodSpec::Softrank(p) => p.overlap,
            QueryMethodSpec::Clasp(p) => p.overlap,
            QueryMethodSpec::Cla(p) => p.overlap,
            QueryMethodSpec::Clap(p) => p.overlap,
        }
    }

    /// The uncertainty map this method scores with, if any.
    pub fn base(&self) -> Option<UncertaintyKind> {
        match self {
            QueryMethodSpec::Random(_) | QueryMethodSpec::RandomFg(_) => None,
            QueryMethodSpec::Topk(p) => Some(p.base),
            QueryMethodSpec::Power(p) | QueryMethodSpec::Softrank(p) => Some(p.base),
            QueryMethodSpec::Clasp(p) => Some(p.base),
            QueryMethodSpec::Cla(p) => Some(p.base),
            QueryMethodSpec::Clap(p) => Some(p.base),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
            Ok(())
        };
        let check_overlap = |o: f64| -> Result<()> {
            if !(0.0..1.0).contains(&o) {
                return Err(Error::InvalidConfig(format!("overlap = {o} outside [0, 1)")));
            }
            Ok(())
        };
        let check_beta = |name: &str, b: f64| -> Result<()> {
            if b <= 0.0 || !b.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {b} must be positive")));
            }
            Ok(())
        };
        match self {
            QueryMethodSpec::Random(p) => check_overlap(p.overlap),
            QueryMethodSpec::RandomFg(p) => {
                check_unit("fg_fraction", p.fg_fraction)?;
                check_overlap(p.overlap)
            }
            QueryMethodSpec::Topk(p) => check_overlap(p.overlap),
            QueryMethodSpec::Power(p) | QueryMethodSpec::Softrank(p) => {
                check_beta("beta", p.beta)?;
                check_overlap(p.overlap)
            }
            QueryMethodSpec::Clasp(p) => {
                check_unit("alpha", p.alpha)?;
                check_beta("beta0", p.beta0)?;
                check_beta("beta_max", p.beta_max)?;
                check_overlap(p.overlap)
            }
            QueryMethodSpec::Cla(p) => {
                check_unit("alpha", p.alpha)?;
                check_overlap(p.overlap)
            }
            QueryMethodSpec::Clap(p) => {
                check_unit("alpha", p.alpha)?;
                check_beta("beta", p.beta)?;
                check_overlap(p.overlap)
            }
        }
    }
}

/// Which score channel a selected patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Global,
    Class(u8),
    Random,
    /// Foreground-seeded random patch, tagged with the drawn class.
    Foreground(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedPatch {
    pub image: usize,
    pub patch: PatchBox,
    pub channel: Channel,
    pub raw_score: f64,
    pub noised_score: f64,
}

/// Ordered query set for one cycle. Fewer than `n` entries only when the
/// candidate pool was exhausted, in which case the flag is set.
#[derive(Debug, Clone)]
pub struct QueryResult {
    pub cycle: usize,
    pub selected: Vec<SelectedPatch>,
    pub exhausted: bool,
    /// (class id, shortfall) for stratified channels that could not fill
    /// their per-class budget; the shortfall rolls into the global fill.
    pub channel_shortfalls: Vec<(u8, usize)>,
}

impl QueryResult {
    fn new(cycle: usize) -> Self {
        QueryResult { cycle, selected: Vec::new(), exhausted: false, channel_shortfalls: Vec::new() }
    }
}

/// Exponential interpolation of the inverse noise scale across query
/// steps: `beta(t) = exp((1 - t/T) ln beta0 + (t/T) ln beta_max)`.
/// `t` counts only cycles with a query step. Endpoints are returned
/// exactly (`exp(ln x)` is not the identity in floating point).
pub fn beta_schedule(t: usize, total: usize, beta0: f64, beta_max: f64) -> f64 {
    debug_assert!(total >= 1 && t <= total);
    debug_assert!(beta0 > 0.0 && beta_max > 0.0);
    if t == 0 {
        return beta0;
    }
    if t == total {
        return beta_max;
    }
    let frac = t as f64 / total as f64;
    ((1.0 - frac) * beta0.ln() + frac * beta_max.ln()).exp()
}

/// Descending noised score with (image, z, y, x) ascending tie-breaks.
fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.noised
        .partial_cmp(&a.noised)
        .expect("scores are finite")
        .then(a.image.cmp(&b.image))
        .then(a.patch.origin.cmp(&b.patch.origin))
}

/// Log-scale power noising: `score' = ln(max(score, floor)) + Gumbel(0, 1/beta)`.
/// One Gumbel draw per candidate in entry order; raw scores are preserved.
pub fn apply_power_noise(set: &mut CandidateSet, beta: f64, stream: &mut RngStream, floor: f64) {
    debug_assert!(beta > 0.0);
    let scale = 1.0 / beta;
    for c in set.entries.iter_mut() {
        c.noised = c.raw.max(floor).ln() + gumbel_sample(stream, scale);
    }
}

/// Softrank noising: `score' = -ln(rank) + Gumbel(0, 1/beta)` with rank 1
/// the best raw score over the pooled candidates of all images. Ties in
/// raw score rank in the top-k tie-break order; Gumbel draws happen in
/// rank order.
pub fn apply_softrank_noise(sets: &mut [CandidateSet], beta: f64, stream: &mut RngStream) {
    debug_assert!(beta > 0.0);
    let scale = 1.0 / beta;
    let mut refs: Vec<(usize, usize)> = Vec::new();
    for (si, set) in sets.iter().enumerate() {
        refs.extend((0..set.entries.len()).map(|ei| (si, ei)));
    }
    refs.sort_by(|&(sa, ea), &(sb, eb)| {
        let a = &sets[sa].entries[ea];
        let b = &sets[sb].entries[eb];
        b.raw
            .partial_cmp(&a.raw)
            .expect("scores are finite")
            .then(a.image.cmp(&b.image))
            .then(a.patch.origin.cmp(&b.patch.origin))
    });
    for (rank0, &(si, ei)) in refs.iter().enumerate() {
        let rank = (rank0 + 1) as f64;
        sets[si].entries[ei].noised = -rank.ln() + gumbel_sample(stream, scale);
    }
}

/// Per-image coverage masks seeded from the labeled set, extended as
/// patches are taken during one greedy selection.
struct WorkingMasks {
    dims: Dims3,
    masks: Vec<Vec<bool>>,
}

impl WorkingMasks {
    fn from_annotations(annotations: &AnnotationState) -> Self {
        let dims = annotations.image(0).dims;
        WorkingMasks {
            dims,
            masks: annotations.images().iter().map(|img| img.mask().to_vec()).collect(),
        }
    }

    fn fits(&self, image: usize, patch: &PatchBox, o: f64) -> bool {
        !overlap_exceeds(patch, &self.masks[image], self.dims, o)
    }

    fn take(&mut self, image: usize, patch: &PatchBox) {
        paint_box(patch, &mut self.masks[image], self.dims);
    }
}

/// Greedy descending-score sweep over the pooled candidates of all
/// images; a candidate is taken iff its overlap against annotations plus
/// already-taken boxes stays within `o`.
pub fn select_topk(
    sets: &[CandidateSet],
    n: usize,
    o: f64,
    annotations: &AnnotationState,
    cycle: usize,
) -> QueryResult {
    let mut pool: Vec<Candidate> = sets.iter().flat_map(|s| s.entries.iter().copied()).collect();
    pool.sort_by(candidate_order);
    let mut masks = WorkingMasks::from_annotations(annotations);
    let mut result = QueryResult::new(cycle);
    for c in &pool {
        if result.selected.len() >= n {
            break;
        }
        if masks.fits(c.image, &c.patch, o) {
            masks.take(c.image, &c.patch);
            result.selected.push(SelectedPatch {
                image: c.image,
                patch: c.patch,
                channel: Channel::Global,
                raw_score: c.raw,
                noised_score: c.noised,
            });
        }
    }
    result.exhausted = result.selected.len() < n;
    result
}

fn in_bounds_origin(stream: &mut RngStream, dims: Dims3, patch: [usize; 3]) -> [usize; 3] {
    [
        stream.below(dims.d - patch[0] + 1),
        stream.below(dims.h - patch[1] + 1),
        stream.below(dims.w - patch[2] + 1),
    ]
}

/// Shared rejection sampler used by the random strategies: draw
/// (image, origin) uniformly, keep patches whose overlap stays within
/// `o`, spending from a shared attempt budget.
#[allow(clippy::too_many_arguments)]
fn sample_random_patches(
    masks: &mut WorkingMasks,
    n_images: usize,
    patch: [usize; 3],
    want: usize,
    o: f64,
    stream: &mut RngStream,
    attempts: &mut usize,
    out: &mut Vec<SelectedPatch>,
) {
    let mut taken = 0usize;
    while taken < want && *attempts > 0 {
        *attempts -= 1;
        let image = stream.below(n_images);
        let origin = in_bounds_origin(stream, masks.dims, patch);
        let candidate = PatchBox::new(origin, patch);
        if masks.fits(image, &candidate, o) {
            masks.take(image, &candidate);
            out.push(SelectedPatch {
                image,
                patch: candidate,
                channel: Channel::Random,
                raw_score: 0.0,
                noised_score: 0.0,
            });
            taken += 1;
        }
    }
}

/// Uniformly random in-bounds patches subject to the overlap constraint.
pub fn query_random(
    annotations: &AnnotationState,
    patch: [usize; 3],
    n: usize,
    o: f64,
    stream: &mut RngStream,
    cycle: usize,
) -> QueryResult {
    let mut masks = WorkingMasks::from_annotations(annotations);
    let mut result = QueryResult::new(cycle);
    let mut attempts = RETRY_FACTOR * n;
    sample_random_patches(
        &mut masks,
        annotations.num_images(),
        patch,
        n,
        o,
        stream,
        &mut attempts,
        &mut result.selected,
    );
    result.exhausted = result.selected.len() < n;
    result
}

/// Centered patch origin for a foreground voxel, clipped to bounds. The
/// seed voxel always stays inside the patch.
fn centered_origin(voxel: [usize; 3], patch: [usize; 3], dims: Dims3) -> [usize; 3] {
    let d = dims.as_array();
    let mut origin = [0usize; 3];
    for k in 0..3 {
        let half = patch[k] / 2;
        origin[k] = voxel[k].saturating_sub(half).min(d[k] - patch[k]);
    }
    origin
}

/// Foreground-aware random baseline: `floor(fg_fraction * n)` patches are
/// centered on uniformly drawn ground-truth foreground voxels, with the
/// class drawn round-robin over a stream-shuffled order of the classes
/// present in the pool; the remainder is filled by the plain random
/// sampler. This baseline is label-aware by design.
#[allow(clippy::too_many_arguments)]
pub fn query_random_fg(
    annotations: &AnnotationState,
    labels: &[LabelVolume],
    patch: [usize; 3],
    n: usize,
    fg_fraction: f64,
    o: f64,
    stream: &mut RngStream,
    cycle: usize,
) -> QueryResult {
    let mut masks = WorkingMasks::from_annotations(annotations);
    let mut result = QueryResult::new(cycle);
    let mut attempts = RETRY_FACTOR * n;
    let fg_target = (fg_fraction * n as f64).floor() as usize;

    if fg_target > 0 {
        let num_classes = labels.first().map_or(0, |l| l.num_classes);
        let mut voxels_by_class: Vec<Vec<(usize, [usize; 3])>> =
            vec![Vec::new(); num_classes as usize + 1];
        for (img, lab) in labels.iter().enumerate() {
            let dims = lab.dims;
            for z in 0..dims.d {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        let l = lab.labels[dims.index(z, y, x)];
                        if l > 0 {
                            voxels_by_class[l as usize].push((img, [z, y, x]));
                        }
                    }
                }
            }
        }
        let mut order: Vec<u8> =
            (1..=num_classes).filter(|&c| !voxels_by_class[c as usize].is_empty()).collect();
        stream.shuffle(&mut order);

        if !order.is_empty() {
            'fg: for k in 0..fg_target {
                let class = order[k % order.len()];
                let pool = &voxels_by_class[class as usize];
                loop {
                    if attempts == 0 {
                        break 'fg;
                    }
                    attempts -= 1;
                    let (image, voxel) = pool[stream.below(pool.len())];
                    let candidate = PatchBox::new(centered_origin(voxel, patch, masks.dims), patch);
                    if masks.fits(image, &candidate, o) {
                        masks.take(image, &candidate);
                        result.selected.push(SelectedPatch {
                            image,
                            patch: candidate,
                            channel: Channel::Foreground(class),
                            raw_score: 0.0,
                            noised_score: 0.0,
                        });
                        break;
                    }
                }
            }
        }
    }

    let remaining = n - result.selected.len();
    sample_random_patches(
        &mut masks,
        annotations.num_images(),
        patch,
        remaining,
        o,
        stream,
        &mut attempts,
        &mut result.selected,
    );
    result.exhausted = result.selected.len() < n;
    result
}

/// Class-stratified scheduled-power selection over a per-image stack of
/// score channels.
///
/// Pass 1, per image in id order: aggregate every channel to patch
/// candidates, log-transform and (optionally) Gumbel-noise the scores,
/// then greedily collect up to `floor(alpha * n / C)` candidates per
/// foreground class — classes visited in a stream-shuffled order — and
/// up to the same cap from the global channel, each collection checked
/// against the image's already-collected boxes plus prior annotations.
///
/// Pass 2, global: per class channel, keep the top `floor(alpha * n / C)`
/// collected candidates by noised score that still pass the overlap
/// check against everything selected so far; then fill the remainder of
/// `n` from the global-channel collection. Per-class shortfalls roll
/// into the global fill and are recorded.
///
/// `beta = None` disables noising (scores are still log-transformed), so
/// the ablation without perturbation shares this exact code path.
#[allow(clippy::too_many_arguments)]
pub fn query_clasp(
    stacks: &[StratifiedScoreStack],
    patch: [usize; 3],
    stride: usize,
    n: usize,
    alpha: f64,
    beta: Option<f64>,
    o: f64,
    annotations: &AnnotationState,
    stream: &mut RngStream,
    cycle: usize,
) -> Result<QueryResult> {
    debug_assert_eq!(stacks.len(), annotations.num_images());
    let num_classes = stacks.first().map_or(0, |s| s.num_foreground_classes());
    let per_class = if num_classes > 0 {
        (alpha * n as f64 / num_classes as f64).floor() as usize
    } else {
        0
    };
    // With alpha = 0 the method degenerates to plain top-k on the global
    // channel; the per-image cap must then admit a full query from a
    // single image.
    let global_cap = if per_class > 0 { per_class } else { n };

    let mut collected_class: Vec<Vec<Candidate>> = vec![Vec::new(); num_classes];
    let mut collected_global: Vec<Candidate> = Vec::new();

    for (image, stack) in stacks.iter().enumerate() {
        // Score and noise every channel for this image. Draw order:
        // class channels 1..=C, then the global channel, then the class
        // shuffle.
        let mut class_sets: Vec<CandidateSet> = Vec::with_capacity(num_classes);
        if per_class > 0 {
            for ch in &stack.channels {
                let mut set = aggregate_patch_scores(ch, image, patch, stride)?;
                match beta {
                    Some(b) => apply_power_noise(&mut set, b, stream, SCORE_FLOOR),
                    None => {
                        for c in set.entries.iter_mut() {
                            c.noised = c.raw.max(SCORE_FLOOR).ln();
                        }
                    }
                }
                set.entries.sort_by(candidate_order);
                class_sets.push(set);
            }
        }
        let mut global_set = aggregate_patch_scores(&stack.global, image, patch, stride)?;
        match beta {
            Some(b) => apply_power_noise(&mut global_set, b, stream, SCORE_FLOOR),
            None => {
                for c in global_set.entries.iter_mut() {
                    c.noised = c.raw.max(SCORE_FLOOR).ln();
                }
            }
        }
        global_set.entries.sort_by(candidate_order);

        let mut image_mask = annotations.image(image).mask().to_vec();
        let dims = annotations.image(image).dims;
        if per_class > 0 {
            let mut class_order: Vec<usize> = (0..num_classes).collect();
            stream.shuffle(&mut class_order);
            for &ci in &class_order {
                let mut got = 0usize;
                for cand in &class_sets[ci].entries {
                    if got >= per_class {
                        break;
                    }
                    if !overlap_exceeds(&cand.patch, &image_mask, dims, o) {
                        paint_box(&cand.patch, &mut image_mask, dims);
                        collected_class[ci].push(*cand);
                        got += 1;
                    }
                }
            }
        }
        let mut got = 0usize;
        for cand in &global_set.entries {
            if got >= global_cap {
                break;
            }
            if !overlap_exceeds(&cand.patch, &image_mask, dims, o) {
                paint_box(&cand.patch, &mut image_mask, dims);
                collected_global.push(*cand);
                got += 1;
            }
        }
    }

    // Global build: stratified channels first, then the unstratified fill.
    let mut masks = WorkingMasks::from_annotations(annotations);
    let mut result = QueryResult::new(cycle);
    for (ci, collected) in collected_class.iter_mut().enumerate() {
        collected.sort_by(candidate_order);
        let mut taken = 0usize;
        for cand in collected.iter() {
            if taken >= per_class {
                break;
            }
            if masks.fits(cand.image, &cand.patch, o) {
                masks.take(cand.image, &cand.patch);
                result.selected.push(SelectedPatch {
                    image: cand.image,
                    patch: cand.patch,
                    channel: Channel::Class((ci + 1) as u8),
                    raw_score: cand.raw,
                    noised_score: cand.noised,
                });
                taken += 1;
            }
        }
        if taken < per_class {
            result.channel_shortfalls.push(((ci + 1) as u8, per_class - taken));
        }
    }
    collected_global.sort_by(candidate_order);
    let fill = n - result.selected.len();
    let mut taken = 0usize;
    for cand in &collected_global {
        if taken >= fill {
            break;
        }
        if masks.fits(cand.image, &cand.patch, o) {
            masks.take(cand.image, &cand.patch);
            result.selected.push(SelectedPatch {
                image: cand.image,
                patch: cand.patch,
                channel: Channel::Global,
                raw_score: cand.raw,
                noised_score: cand.noised,
            });
            taken += 1;
        }
    }
    result.exhausted = result.selected.len() < n;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::volume::VoxelGrid;

    fn empty_state(n_images: usize, dims: Dims3) -> AnnotationState {
        AnnotationState::new(n_images, dims, 1)
    }

    fn set_from(entries: Vec<Candidate>) -> CandidateSet {
        CandidateSet { entries, stride: 1, patch: [2, 2, 2] }
    }

    fn cand(image: usize, origin: [usize; 3], score: f64) -> Candidate {
        Candidate { image, patch: PatchBox::new(origin, [2, 2, 2]), raw: score, noised: score }
    }

    #[test]
    fn beta_schedule_endpoints_and_midpoint() {
        assert_eq!(beta_schedule(0, 4, 1.0, 100.0), 1.0);
        assert_eq!(beta_schedule(4, 4, 1.0, 100.0), 100.0);
        assert!((beta_schedule(2, 4, 1.0, 100.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn beta_schedule_monotone_and_reversible() {
        let up: Vec<f64> = (0..=5).map(|t| beta_schedule(t, 5, 1.0, 100.0)).collect();
        let down: Vec<f64> = (0..=5).map(|t| beta_schedule(t, 5, 100.0, 1.0)).collect();
        for w in up.windows(2) {
            assert!(w[1] > w[0]);
        }
        for (u, d) in up.iter().zip(down.iter().rev()) {
            assert!((u - d).abs() < 1e-9);
        }
    }

    #[test]
    fn select_topk_orders_and_respects_overlap() {
        let dims = Dims3::new(8, 8, 8);
        let state = empty_state(1, dims);
        // two disjoint candidates, scores 5 and 3, n = 2 -> both, order [5, 3]
        let sets = vec![set_from(vec![cand(0, [0, 0, 0], 5.0), cand(0, [4, 4, 4], 3.0)])];
        let r = select_topk(&sets, 2, 0.0, &state, 1);
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.selected[0].raw_score, 5.0);
        assert_eq!(r.selected[1].raw_score, 3.0);
        assert!(!r.exhausted);

        // identical boxes, o = 0, n = 2 -> only one, exhaustion flagged
        let sets = vec![set_from(vec![cand(0, [0, 0, 0], 5.0), cand(0, [0, 0, 0], 3.0)])];
        let r = select_topk(&sets, 2, 0.0, &state, 1);
        assert_eq!(r.selected.len(), 1);
        assert!(r.exhausted);
    }

    #[test]
    fn select_topk_matches_argsort_oracle() {
        let dims = Dims3::new(8, 8, 8);
        let state = empty_state(1, dims);
        let mut stream = derive_stream(3, "topk", 0);
        // 8 disjoint candidates on the 2-lattice with distinct scores
        let mut entries = Vec::new();
        for z in [0usize, 4] {
            for y in [0usize, 4] {
                for x in [0usize, 4] {
                    entries.push(cand(0, [z, y, x], stream.uniform()));
                }
            }
        }
        let mut oracle: Vec<Candidate> = entries.clone();
        oracle.sort_by(|a, b| b.raw.partial_cmp(&a.raw).unwrap());
        let r = select_topk(&[set_from(entries)], 3, 0.0, &state, 1);
        assert_eq!(r.selected.len(), 3);
        for (sel, want) in r.selected.iter().zip(&oracle) {
            assert_eq!(sel.patch, want.patch);
        }
    }

    #[test]
    fn power_noise_preserves_ranking_at_large_beta() {
        let mut set = set_from(vec![
            cand(0, [0, 0, 0], 0.9),
            cand(0, [0, 0, 2], 0.5),
            cand(0, [0, 0, 4], 0.1),
            cand(0, [0, 2, 0], 0.7),
        ]);
        let mut stream = derive_stream(1, "noise", 0);
        apply_power_noise(&mut set, 1e12, &mut stream, SCORE_FLOOR);
        let mut by_raw = set.entries.clone();
        by_raw.sort_by(|a, b| b.raw.partial_cmp(&a.raw).unwrap());
        let mut by_noised = set.entries.clone();
        by_noised.sort_by(|a, b| b.noised.partial_cmp(&a.noised).unwrap());
        for (a, b) in by_raw.iter().zip(&by_noised) {
            assert_eq!(a.patch, b.patch);
        }
        // raw scores survive alongside
        assert!(set.entries.iter().all(|c| c.raw > 0.0));
    }

    #[test]
    fn power_noise_is_pure_log_at_zero_noise() {
        // Gumbel(0, scale) -> 0 as scale -> 0, so beta -> inf is a pure
        // log transform: raw 1.0 -> 0, raw e -> 1.
        let mut set = set_from(vec![
            cand(0, [0, 0, 0], 1.0),
            cand(0, [0, 0, 2], std::f64::consts::E),
        ]);
        let mut stream = derive_stream(2, "noise", 0);
        apply_power_noise(&mut set, 1e300, &mut stream, SCORE_FLOOR);
        assert!(set.entries[0].noised.abs() < 1e-290);
        assert!((set.entries[1].noised - 1.0).abs() < 1e-290);
    }

    #[test]
    fn power_noise_floors_zero_scores() {
        let mut set = set_from(vec![cand(0, [0, 0, 0], 0.0)]);
        let mut stream = derive_stream(3, "noise", 0);
        apply_power_noise(&mut set, 1.0, &mut stream, SCORE_FLOOR);
        assert!(set.entries[0].noised.is_finite());
        assert!(set.entries[0].noised < (1e-11f64).ln());
    }

    #[test]
    fn softrank_ranks_globally() {
        // 5 candidates across two images; zero noise -> scores -ln(1..=5).
        let mut sets = vec![
            set_from(vec![cand(0, [0, 0, 0], 0.9), cand(0, [0, 0, 2], 0.3)]),
            set_from(vec![
                cand(1, [0, 0, 0], 0.7),
                cand(1, [0, 0, 2], 0.5),
                cand(1, [0, 0, 4], 0.1),
            ]),
        ];
        let mut stream = derive_stream(4, "softrank", 0);
        apply_softrank_noise(&mut sets, 1e300, &mut stream);
        let mut all: Vec<Candidate> =
            sets.iter().flat_map(|s| s.entries.iter().copied()).collect();
        all.sort_by(|a, b| b.raw.partial_cmp(&a.raw).unwrap());
        for (i, c) in all.iter().enumerate() {
            assert!((c.noised - -((i + 1) as f64).ln()).abs() < 1e-290);
        }
    }

    #[test]
    fn softrank_single_candidate_is_pure_gumbel() {
        let mut sets = vec![set_from(vec![cand(0, [0, 0, 0], 0.5)])];
        let mut a = derive_stream(5, "softrank", 0);
        let mut b = derive_stream(5, "softrank", 0);
        apply_softrank_noise(&mut sets, 2.0, &mut a);
        let expected = crate::rng::gumbel_sample(&mut b, 0.5);
        assert_eq!(sets[0].entries[0].noised, expected);
    }

    #[test]
    fn random_query_basics() {
        let dims = Dims3::new(8, 8, 8);
        let state = empty_state(2, dims);
        let r = query_random(&state, [4, 4, 4], 1, 0.0, &mut derive_stream(6, "q", 0), 1);
        assert_eq!(r.selected.len(), 1);
        assert!(!r.exhausted);
        assert!(r.selected[0].patch.fits(dims));

        // identical streams -> identical results
        let r2 = query_random(&state, [4, 4, 4], 1, 0.0, &mut derive_stream(6, "q", 0), 1);
        assert_eq!(r.selected, r2.selected);
    }

    #[test]
    fn random_query_exhausts_on_full_volume() {
        let dims = Dims3::new(8, 8, 8);
        let labels = LabelVolume::new(dims, vec![0; dims.voxel_count()], 1).unwrap();
        let mut state = empty_state(1, dims);
        state.add_patch(0, PatchBox::new([0, 0, 0], [8, 8, 8]), &labels);
        let r = query_random(&state, [4, 4, 4], 1, 0.0, &mut derive_stream(7, "q", 0), 1);
        assert!(r.selected.is_empty());
        assert!(r.exhausted);
    }

    fn striped_labels(dims: Dims3, classes: &[u8]) -> LabelVolume {
        // class c occupies plane z = c (tiny foreground, plenty of bg)
        let mut l = vec![0u8; dims.voxel_count()];
        for &c in classes {
            let z = c as usize;
            for y in 0..dims.h {
                for x in 0..dims.w {
                    l[dims.index(z, y, x)] = c;
                }
            }
        }
        LabelVolume::new(dims, l, *classes.iter().max().unwrap()).unwrap()
    }

    #[test]
    fn random_fg_centers_contain_the_drawn_class() {
        let dims = Dims3::new(16, 16, 16);
        let labels = striped_labels(dims, &[1, 2]);
        let state = AnnotationState::new(1, dims, 2);
        let r = query_random_fg(
            &state,
            std::slice::from_ref(&labels),
            [4, 4, 4],
            4,
            1.0,
            0.0,
            &mut derive_stream(8, "fg", 0),
            1,
        );
        assert_eq!(r.selected.len(), 4);
        for s in &r.selected {
            let Channel::Foreground(c) = s.channel else {
                panic!("expected a foreground-seeded patch");
            };
            let mut found = false;
            s.patch.for_each_index(dims, |i| found |= labels.labels[i] == c);
            assert!(found);
        }
        // round-robin over both classes
        let classes: Vec<u8> = r
            .selected
            .iter()
            .map(|s| match s.channel {
                Channel::Foreground(c) => c,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(classes.iter().filter(|&&c| c == 1).count(), 2);
        assert_eq!(classes.iter().filter(|&&c| c == 2).count(), 2);
    }

    #[test]
    fn random_fg_zero_fraction_matches_plain_random() {
        let dims = Dims3::new(16, 16, 16);
        let labels = striped_labels(dims, &[1]);
        let state = AnnotationState::new(1, dims, 1);
        let a = query_random_fg(
            &state,
            std::slice::from_ref(&labels),
            [4, 4, 4],
            5,
            0.0,
            0.0,
            &mut derive_stream(9, "fg0", 0),
            1,
        );
        let b = query_random(&state, [4, 4, 4], 5, 0.0, &mut derive_stream(9, "fg0", 0), 1);
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn random_fg_split_counts() {
        let dims = Dims3::new(32, 32, 32);
        let labels = striped_labels(dims, &[1, 2]);
        let state = AnnotationState::new(1, dims, 2);
        let r = query_random_fg(
            &state,
            std::slice::from_ref(&labels),
            [3, 3, 3],
            100,
            0.66,
            0.0,
            &mut derive_stream(10, "fg66", 0),
            1,
        );
        let fg = r
            .selected
            .iter()
            .filter(|s| matches!(s.channel, Channel::Foreground(_)))
            .count();
        let random = r
            .selected
            .iter()
            .filter(|s| matches!(s.channel, Channel::Random))
            .count();
        assert_eq!(fg, 66);
        assert_eq!(random, 34);
    }

    fn uniform_stack(dims: Dims3, classes: usize, seed: u64) -> StratifiedScoreStack {
        let mut s = derive_stream(seed, "stack", 0);
        let mut field = |_: usize| {
            let values = (0..dims.voxel_count()).map(|_| s.uniform()).collect();
            VoxelGrid::new(dims, values).unwrap()
        };
        StratifiedScoreStack {
            channels: (0..classes).map(&mut field).collect(),
            global: field(classes),
        }
    }

    #[test]
    fn clasp_budget_split() {
        // n = 100, alpha = 0.66, C = 3 -> 22 per class + 34 global.
        let dims = Dims3::new(40, 40, 40);
        let state = AnnotationState::new(4, dims, 3);
        let stacks: Vec<StratifiedScoreStack> =
            (0..4).map(|i| uniform_stack(dims, 3, 20 + i)).collect();
        let r = query_clasp(
            &stacks,
            [4, 4, 4],
            4,
            100,
            0.66,
            Some(1.0),
            0.0,
            &state,
            &mut derive_stream(11, "clasp", 0),
            1,
        )
        .unwrap();
        assert_eq!(r.selected.len(), 100);
        for class in 1..=3u8 {
            let count = r
                .selected
                .iter()
                .filter(|s| s.channel == Channel::Class(class))
                .count();
            assert_eq!(count, 22, "class {class}");
        }
        let global = r
            .selected
            .iter()
            .filter(|s| s.channel == Channel::Global)
            .count();
        assert_eq!(global, 34);
        assert!(r.channel_shortfalls.is_empty());
    }

    #[test]
    fn clasp_per_class_budget_formula() {
        // n = 200, alpha = 0.66, C = 15 -> floor(132 / 15) = 8 per class.
        let per_class = (0.66f64 * 200.0 / 15.0).floor() as usize;
        assert_eq!(per_class, 8);
        assert_eq!(8 * 15, 120);
        assert_eq!(200 - 120, 80);
    }

    #[test]
    fn clasp_alpha_zero_large_beta_degenerates_to_topk() {
        let dims = Dims3::new(16, 16, 16);
        let state = AnnotationState::new(3, dims, 2);
        let stacks: Vec<StratifiedScoreStack> =
            (0..3).map(|i| uniform_stack(dims, 2, 40 + i)).collect();
        let clasp = query_clasp(
            &stacks,
            [4, 4, 4],
            2,
            7,
            0.0,
            Some(1e12),
            0.0,
            &state,
            &mut derive_stream(12, "deg", 0),
            1,
        )
        .unwrap();
        let sets: Vec<CandidateSet> = stacks
            .iter()
            .enumerate()
            .map(|(i, st)| aggregate_patch_scores(&st.global, i, [4, 4, 4], 2).unwrap())
            .collect();
        let topk = select_topk(&sets, 7, 0.0, &state, 1);
        assert_eq!(clasp.selected.len(), topk.selected.len());
        for (a, b) in clasp.selected.iter().zip(&topk.selected) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.patch, b.patch);
        }
    }

    #[test]
    fn clasp_respects_overlap_invariant() {
        let dims = Dims3::new(16, 16, 16);
        let state = AnnotationState::new(2, dims, 2);
        let stacks: Vec<StratifiedScoreStack> =
            (0..2).map(|i| uniform_stack(dims, 2, 60 + i)).collect();
        let r = query_clasp(
            &stacks,
            [5, 5, 5],
            1,
            10,
            0.66,
            Some(1.0),
            0.0,
            &state,
            &mut derive_stream(13, "ov", 0),
            1,
        )
        .unwrap();
        for (i, a) in r.selected.iter().enumerate() {
            for b in &r.selected[i + 1..] {
                if a.image == b.image {
                    assert_eq!(a.patch.intersection_voxels(&b.patch), 0);
                }
            }
        }
    }

    #[test]
    fn clasp_records_channel_shortfalls() {
        // Annotate everything except one 8^3 corner: only a single
        // disjoint patch survives, so both class budgets fall short and
        // the query exhausts.
        let dims = Dims3::new(16, 16, 16);
        let labels = LabelVolume::new(dims, vec![0; dims.voxel_count()], 2).unwrap();
        let mut state = AnnotationState::new(1, dims, 2);
        state.add_patch(0, PatchBox::new([8, 0, 0], [8, 16, 16]), &labels);
        state.add_patch(0, PatchBox::new([0, 8, 0], [8, 8, 16]), &labels);
        state.add_patch(0, PatchBox::new([0, 0, 8], [8, 8, 8]), &labels);
        let stacks = vec![uniform_stack(dims, 2, 70)];
        let r = query_clasp(
            &stacks,
            [8, 8, 8],
            8,
            4,
            1.0,
            Some(1.0),
            0.0,
            &state,
            &mut derive_stream(16, "short", 0),
            1,
        )
        .unwrap();
        assert_eq!(r.selected.len(), 1);
        assert!(r.exhausted);
        // both classes report shortfalls against the per-class budget of 2
        let total_shortfall: usize = r.channel_shortfalls.iter().map(|&(_, s)| s).sum();
        assert_eq!(r.channel_shortfalls.len(), 2);
        assert_eq!(total_shortfall, 3);
    }

    #[test]
    fn clasp_is_deterministic() {
        let dims = Dims3::new(16, 16, 16);
        let state = AnnotationState::new(2, dims, 2);
        let stacks: Vec<StratifiedScoreStack> =
            (0..2).map(|i| uniform_stack(dims, 2, 80 + i)).collect();
        let run = |seed: u64| {
            query_clasp(
                &stacks,
                [4, 4, 4],
                2,
                8,
                0.66,
                Some(2.0),
                0.0,
                &state,
                &mut derive_stream(seed, "det", 0),
                1,
            )
            .unwrap()
        };
        let a = run(14);
        let b = run(14);
        let c = run(15);
        assert_eq!(a.selected, b.selected);
        assert_ne!(a.selected, c.selected);
    }

    #[test]
    fn method_spec_ids_and_validation() {
        let spec = QueryMethodSpec::Clasp(ClaspParams {
            base: UncertaintyKind::Pe,
            alpha: 0.66,
            beta0: 1.0,
            beta_max: 100.0,
            overlap: 0.0,
        });
        assert_eq!(spec.id(), "clasp_pe");
        assert!(spec.validate().is_ok());

        let bad = QueryMethodSpec::Clasp(ClaspParams {
            base: UncertaintyKind::Pe,
            alpha: 1.5,
            beta0: 1.0,
            beta_max: 100.0,
            overlap: 0.0,
        });
        assert!(bad.validate().is_err());

        let fg = QueryMethodSpec::RandomFg(RandomFgParams { fg_fraction: 0.33, overlap: 0.0 });
        assert_eq!(fg.id(), "random_fg33");
    }
}
