//! The simulated annotator: builds the protocol starting budget, reveals
//! ground-truth labels inside queried patches, and tracks annotation
//! cost in foreground voxels.

use crate::annotations::AnnotationState;
use crate::error::{Error, Result};
use crate::geom::PatchBox;
use crate::rng::RngStream;
use crate::strategies::{
    self, Channel, QueryResult, SelectedPatch, RETRY_FACTOR,
};
use crate::volume::LabelVolume;

/// Representative starting budget: two patches centered on ground-truth
/// voxels of every class (classes in ascending id), then the remainder
/// via the foreground-aware random strategy at 33%. Requires
/// `n_start >= 2 * C`.
pub fn build_starting_budget(
    labels: &[LabelVolume],
    patch: [usize; 3],
    n_start: usize,
    o: f64,
    stream: &mut RngStream,
) -> Result<(AnnotationState, QueryResult)> {
    let first = labels
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty image pool".into()))?;
    let num_classes = first.num_classes;
    let dims = first.dims;
    if n_start < 2 * num_classes as usize {
        return Err(Error::InvalidConfig(format!(
            "starting budget {n_start} below 2 patches per class ({num_classes} classes)"
        )));
    }

    let mut voxels_by_class: Vec<Vec<(usize, [usize; 3])>> =
        vec![Vec::new(); num_classes as usize + 1];
    for (img, lab) in labels.iter().enumerate() {
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
    for c in 1..=num_classes {
        if voxels_by_class[c as usize].is_empty() {
            return Err(Error::InfeasibleStart(c));
        }
    }

    let mut state = AnnotationState::new(labels.len(), dims, num_classes);
    let mut result = QueryResult {
        cycle: 0,
        selected: Vec::new(),
        exhausted: false,
        channel_shortfalls: Vec::new(),
    };
    let mut attempts = RETRY_FACTOR * n_start;
    for class in 1..=num_classes {
        let pool = &voxels_by_class[class as usize];
        for _ in 0..2 {
            let placed = loop {
                if attempts == 0 {
                    break false;
                }
                attempts -= 1;
                let (image, voxel) = pool[stream.below(pool.len())];
                let candidate = centered_patch(voxel, patch, &state, image);
                let mask = state.image(image).mask();
                if !crate::patchscore::overlap_exceeds(&candidate, mask, dims, o) {
                    state.add_patch(image, candidate, &labels[image]);
                    result.selected.push(SelectedPatch {
                        image,
                        patch: candidate,
                        channel: Channel::Foreground(class),
                        raw_score: 0.0,
                        noised_score: 0.0,
                    });
                    break true;
                }
            };
            if !placed {
                return Err(Error::InvalidConfig(format!(
                    "could not seed two patches for class {class} within the retry budget"
                )));
            }
        }
    }

    let remainder = n_start - result.selected.len();
    if remainder > 0 {
        let fg_rest = strategies::query_random_fg(
            &state, labels, patch, remainder, 0.33, o, stream, 0,
        );
        result.exhausted = fg_rest.exhausted;
        for s in &fg_rest.selected {
            state.add_patch(s.image, s.patch, &labels[s.image]);
        }
        result.selected.extend(fg_rest.selected);
    }
    Ok((state, result))
}

fn centered_patch(
    voxel: [usize; 3],
    patch: [usize; 3],
    state: &AnnotationState,
    image: usize,
) -> PatchBox {
    let dims = state.image(image).dims;
    let d = dims.as_array();
    let mut origin = [0usize; 3];
    for k in 0..3 {
        origin[k] = voxel[k].saturating_sub(patch[k] / 2).min(d[k] - patch[k]);
    }
    PatchBox::new(origin, patch)
}

/// Reveal the labels under a query's patches. Foreground-cost counters
/// grow by newly revealed voxels only.
pub fn annotate(state: &mut AnnotationState, result: &QueryResult, labels: &[LabelVolume]) {
    for s in &result.selected {
        state.add_patch(s.image, s.patch, &labels[s.image]);
    }
}
