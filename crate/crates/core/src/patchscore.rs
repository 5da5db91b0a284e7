//! Patch-level aggregation of voxel scores via 3D summed-area tables,
//! candidate enumeration on a stride lattice, and overlap tests against
//! annotated regions.

use crate::error::{Error, Result};
use crate::geom::{Dims3, PatchBox};
use crate::volume::UncertaintyField;

/// 3D summed-area table with one plane of zeros on each leading face;
/// box sums come out of 8-corner inclusion-exclusion in f64.
#[derive(Debug, Clone)]
pub struct SummedAreaTable3D {
    dims: Dims3,
    table: Vec<f64>,
}

impl SummedAreaTable3D {
    #[inline]
    fn idx(&self, z: usize, y: usize, x: usize) -> usize {
        (z * (self.dims.h + 1) + y) * (self.dims.w + 1) + x
    }

    /// Exact sum of the field over a box.
    pub fn box_sum(&self, patch: &PatchBox) -> f64 {
        debug_assert!(patch.fits(self.dims));
        let [z0, y0, x0] = patch.origin;
        let z1 = z0 + patch.size[0];
        let y1 = y0 + patch.size[1];
        let x1 = x0 + patch.size[2];
        self.table[self.idx(z1, y1, x1)] - self.table[self.idx(z0, y1, x1)]
            - self.table[self.idx(z1, y0, x1)]
            - self.table[self.idx(z1, y1, x0)]
            + self.table[self.idx(z0, y0, x1)]
            + self.table[self.idx(z0, y1, x0)]
            + self.table[self.idx(z1, y0, x0)]
            - self.table[self.idx(z0, y0, x0)]
    }
}

/// Build the summed-area table of a field.
pub fn build_sat(field: &UncertaintyField) -> SummedAreaTable3D {
    let dims = field.dims;
    let (d, h, w) = (dims.d, dims.h, dims.w);
    let mut sat = SummedAreaTable3D {
        dims,
        table: vec![0.0; (d + 1) * (h + 1) * (w + 1)],
    };
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let v = field.values[dims.index(z, y, x)];
                let sum = v
                    + sat.table[sat.idx(z, y + 1, x + 1)]
                    + sat.table[sat.idx(z + 1, y, x + 1)]
                    + sat.table[sat.idx(z + 1, y + 1, x)]
                    - sat.table[sat.idx(z, y, x + 1)]
                    - sat.table[sat.idx(z, y + 1, x)]
                    - sat.table[sat.idx(z + 1, y, x)]
                    + sat.table[sat.idx(z, y, x)];
                let out = sat.idx(z + 1, y + 1, x + 1);
                sat.table[out] = sum;
            }
        }
    }
    sat
}

/// One candidate query: an in-bounds patch with its aggregated score.
/// `noised` equals `raw` until a noising pass rewrites it.
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub image: usize,
    pub patch: PatchBox,
    pub raw: f64,
    pub noised: f64,
}

/// Per-image candidate pool on a stride lattice.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
    pub stride: usize,
    pub patch: [usize; 3],
}

/// Candidate origins along one axis: the stride lattice plus the
/// boundary-flush origin, so `max origin + size = dim`.
fn axis_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = dim - size;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().expect("at least origin 0") != last {
        origins.push(last);
    }
    origins
}

/// Default candidate stride: exact enumeration at desk scale, coarser
/// lattice beyond 64^3 to bound the pool size.
pub fn default_stride(dims: Dims3, patch: [usize; 3]) -> usize {
    if dims.d <= 64 && dims.h <= 64 && dims.w <= 64 {
        1
    } else {
        let max_edge = patch.iter().copied().max().unwrap_or(1);
        max_edge.div_ceil(4).max(1)
    }
}

/// Enumerate candidates for one image and score each with the patch mean
/// of the field.
pub fn aggregate_patch_scores(
    field: &UncertaintyField,
    image: usize,
    patch: [usize; 3],
    stride: usize,
) -> Result<CandidateSet> {
    let dims = field.dims;
    if patch[0] > dims.d || patch[1] > dims.h || patch[2] > dims.w {
        return Err(Error::PatchLargerThanVolume { patch, dims: dims.as_array() });
    }
    debug_assert!(stride >= 1);
    let sat = build_sat(field);
    let inv_volume = 1.0 / (patch[0] * patch[1] * patch[2]) as f64;
    let zs = axis_origins(dims.d, patch[0], stride);
    let ys = axis_origins(dims.h, patch[1], stride);
    let xs = axis_origins(dims.w, patch[2], stride);
    let mut entries = Vec::with_capacity(zs.len() * ys.len() * xs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                let b = PatchBox::new([z, y, x], patch);
                let score = sat.box_sum(&b) * inv_volume;
                entries.push(Candidate { image, patch: b, raw: score, noised: score });
            }
        }
    }
    Ok(CandidateSet { entries, stride, patch })
}

/// Fraction of the candidate's voxels already covered by the mask.
pub fn overlap_fraction(candidate: &PatchBox, mask: &[bool], dims: Dims3) -> f64 {
    let mut covered = 0usize;
    candidate.for_each_index(dims, |i| {
        if mask[i] {
            covered += 1;
        }
    });
    covered as f64 / candidate.voxel_count() as f64
}

/// Early-exit form of `overlap_fraction(..) > o`, the hot predicate of
/// every greedy sweep: bails out as soon as the covered-voxel count can
/// no longer stay within the allowed fraction.
pub fn overlap_exceeds(candidate: &PatchBox, mask: &[bool], dims: Dims3, o: f64) -> bool {
    let volume = candidate.voxel_count();
    let allowed = (o * volume as f64 + 1e-9).floor() as usize;
    let mut covered = 0usize;
    let [z0, y0, x0] = candidate.origin;
    for z in z0..z0 + candidate.size[0] {
        for y in y0..y0 + candidate.size[1] {
            let row = (z * dims.h + y) * dims.w + x0;
            for &m in &mask[row..row + candidate.size[2]] {
                if m {
                    covered += 1;
                    if covered > allowed {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Mark the candidate's voxels as covered.
pub fn paint_box(patch: &PatchBox, mask: &mut [bool], dims: Dims3) {
    patch.for_each_index(dims, |i| mask[i] = true);
}
