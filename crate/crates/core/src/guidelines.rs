//! Deployment recipe: query-patch-size selection from label statistics
//! and per-class query-budget normalization.
//!
//! The patch size is the per-axis median (lower median for even counts)
//! across classes of the per-class median bounding-box extents, where
//! each image contributes the bounding box of its largest 6-connected
//! component of that class.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Bounding-box extents (d, h, w) of the largest 6-connected component
/// of `class` in one volume, or None when the class is absent.
fn largest_component_extent(labels: &LabelVolume, class: u8) -> Option<[usize; 3]> {
    let dims = labels.dims;
    let n = dims.voxel_count();
    let mut visited = vec![false; n];
    let mut best: Option<(usize, [usize; 3])> = None;
    let mut queue = VecDeque::new();

    for start in 0..n {
        if visited[start] || labels.labels[start] != class {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut size = 0usize;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        while let Some(i) = queue.pop_front() {
            size += 1;
            let z = i / (dims.h * dims.w);
            let y = (i / dims.w) % dims.h;
            let x = i % dims.w;
            for (k, v) in [z, y, x].into_iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
            let mut push = |j: usize| {
                if !visited[j] && labels.labels[j] == class {
                    visited[j] = true;
                    queue.push_back(j);
                }
            };
            if z > 0 {
                push(i - dims.h * dims.w);
            }
            if z + 1 < dims.d {
                push(i + dims.h * dims.w);
            }
            if y > 0 {
                push(i - dims.w);
            }
            if y + 1 < dims.h {
                push(i + dims.w);
            }
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < dims.w {
                push(i + 1);
            }
        }
        let extent = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, extent));
        }
    }
    best.map(|(_, e)| e)
}

/// Lower median: element at index (len - 1) / 2 of the sorted values.
fn lower_median(values: &mut [usize]) -> usize {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Recommended query patch size from label statistics. Restricting
/// `classes_of_interest` supports tasks where only some structures
/// matter. The result is clamped to the smallest volume dims; the flag
/// in the return value reports whether clamping happened.
pub fn patch_size_from_labels(
    labels: &[LabelVolume],
    classes_of_interest: Option<&[u8]>,
) -> Result<([usize; 3], bool)> {
    let first = labels
        .first()
        .ok_or_else(|| Error::InvalidConfig("no label volumes given".into()))?;
    let classes: Vec<u8> = match classes_of_interest {
        Some(cs) => cs.to_vec(),
        None => (1..=first.num_classes).collect(),
    };
    if classes.is_empty() {
        return Err(Error::InvalidConfig("empty class set".into()));
    }

    let mut per_class_medians: Vec<[usize; 3]> = Vec::with_capacity(classes.len());
    for &class in &classes {
        let extents: Vec<[usize; 3]> = labels
            .iter()
            .filter_map(|l| largest_component_extent(l, class))
            .collect();
        if extents.is_empty() {
            return Err(Error::ClassAbsent(class));
        }
        let mut median = [0usize; 3];
        for k in 0..3 {
            let mut axis: Vec<usize> = extents.iter().map(|e| e[k]).collect();
            median[k] = lower_median(&mut axis);
        }
        per_class_medians.push(median);
    }

    let mut size = [0usize; 3];
    for k in 0..3 {
        let mut axis: Vec<usize> = per_class_medians.iter().map(|m| m[k]).collect();
        size[k] = lower_median(&mut axis);
    }

    let min_dims = labels.iter().fold([usize::MAX; 3], |acc, l| {
        let d = l.dims.as_array();
        [acc[0].min(d[0]), acc[1].min(d[1]), acc[2].min(d[2])]
    });
    let mut clamped = false;
    for k in 0..3 {
        if size[k] > min_dims[k] {
            size[k] = min_dims[k];
            clamped = true;
        }
    }
    Ok((size, clamped))
}

pub const BUDGET_CYCLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryBudget {
    /// Patches per AL cycle: the sum of per-class contributions.
    pub per_cycle: usize,
    /// Total over the five-cycle protocol.
    pub total: usize,
}

/// Per-cycle and total query budget from per-class patch contributions
/// (50 or 100 each, depending on task complexity).
pub fn query_budget(class_weights: &[usize]) -> Result<QueryBudget> {
    if class_weights.is_empty() {
        return Err(Error::InvalidConfig("need at least one class weight".into()));
    }
    let per_cycle = class_weights.iter().sum();
    Ok(QueryBudget { per_cycle, total: per_cycle * BUDGET_CYCLES })
}
