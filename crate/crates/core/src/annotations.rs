//! The labeled set: annotated patches per image plus the derived voxel
//! masks and cumulative annotation-cost counters.

use crate::geom::{Dims3, PatchBox};
use crate::volume::LabelVolume;

/// Annotated regions of one image.
#[derive(Debug, Clone)]
pub struct ImageAnnotations {
    pub dims: Dims3,
    pub boxes: Vec<PatchBox>,
    mask: Vec<bool>,
}

impl ImageAnnotations {
    fn new(dims: Dims3) -> Self {
        ImageAnnotations { dims, boxes: Vec::new(), mask: vec![false; dims.voxel_count()] }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn annotated_voxels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Recompute the mask from the box list. Used to check the
    /// mask-equals-union invariant.
    pub fn rederive_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dims.voxel_count()];
        for b in &self.boxes {
            b.for_each_index(self.dims, |i| mask[i] = true);
        }
        mask
    }
}

/// The labeled set across all pool images. Foreground-voxel counters are
/// cumulative and only ever increase.
#[derive(Debug, Clone)]
pub struct AnnotationState {
    images: Vec<ImageAnnotations>,
    fg_voxels: u64,
    per_class_fg: Vec<u64>,
}

impl AnnotationState {
    /// Empty state for `n_images` volumes of identical dims and `C`
    /// foreground classes.
    pub fn new(n_images: usize, dims: Dims3, num_classes: u8) -> Self {
        AnnotationState {
            images: (0..n_images).map(|_| ImageAnnotations::new(dims)).collect(),
            fg_voxels: 0,
            per_class_fg: vec![0; num_classes as usize + 1],
        }
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn image(&self, image: usize) -> &ImageAnnotations {
        &self.images[image]
    }

    pub fn images(&self) -> &[ImageAnnotations] {
        &self.images
    }

    /// Cumulative count of annotated foreground voxels.
    pub fn fg_voxels(&self) -> u64 {
        self.fg_voxels
    }

    /// Cumulative annotated voxels per foreground class (index by class id;
    /// index 0 is unused).
    pub fn per_class_fg(&self) -> &[u64] {
        &self.per_class_fg
    }

    pub fn total_patches(&self) -> usize {
        self.images.iter().map(|img| img.boxes.len()).sum()
    }

    /// Add one annotated patch, revealing its ground-truth labels.
    /// Foreground counters grow by newly revealed voxels only; voxels
    /// already under the mask are not double-counted.
    pub fn add_patch(&mut self, image: usize, patch: PatchBox, labels: &LabelVolume) {
        let img = &mut self.images[image];
        debug_assert!(patch.fits(img.dims));
        debug_assert_eq!(img.dims, labels.dims);
        let mask = &mut img.mask;
        let mut fg_new = 0u64;
        patch.for_each_index(img.dims, |i| {
            if !mask[i] {
                mask[i] = true;
                let l = labels.labels[i];
                if l > 0 {
                    fg_new += 1;
                    self.per_class_fg[l as usize] += 1;
                }
            }
        });
        self.fg_voxels += fg_new;
        img.boxes.push(patch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelVolume;

    fn labels_with_fg(dims: Dims3, fg: &[(usize, usize, usize)]) -> LabelVolume {
        let mut l = vec![0u8; dims.voxel_count()];
        for &(z, y, x) in fg {
            l[dims.index(z, y, x)] = 1;
        }
        LabelVolume::new(dims, l, 1).unwrap()
    }

    #[test]
    fn fg_count_tracks_newly_revealed_voxels() {
        let dims = Dims3::new(4, 4, 4);
        let labels = labels_with_fg(dims, &[(0, 0, 0), (0, 0, 1), (3, 3, 3)]);
        let mut state = AnnotationState::new(1, dims, 1);

        state.add_patch(0, PatchBox::new([0, 0, 0], [1, 1, 2]), &labels);
        assert_eq!(state.fg_voxels(), 2);

        // Re-annotating the same box leaves the count unchanged.
        state.add_patch(0, PatchBox::new([0, 0, 0], [1, 1, 2]), &labels);
        assert_eq!(state.fg_voxels(), 2);

        // All-background patch leaves the count unchanged.
        state.add_patch(0, PatchBox::new([1, 0, 0], [1, 2, 2]), &labels);
        assert_eq!(state.fg_voxels(), 2);

        state.add_patch(0, PatchBox::new([3, 3, 2], [1, 1, 2]), &labels);
        assert_eq!(state.fg_voxels(), 3);
        assert_eq!(state.per_class_fg()[1], 3);
    }

    #[test]
    fn mask_equals_union_of_boxes() {
        let dims = Dims3::new(4, 4, 4);
        let labels = labels_with_fg(dims, &[]);
        let mut state = AnnotationState::new(1, dims, 1);
        state.add_patch(0, PatchBox::new([0, 0, 0], [2, 2, 2]), &labels);
        state.add_patch(0, PatchBox::new([1, 1, 1], [2, 2, 2]), &labels);
        let img = state.image(0);
        assert_eq!(img.mask(), img.rederive_mask().as_slice());
        assert_eq!(img.annotated_voxels(), 8 + 8 - 1);
    }
}
