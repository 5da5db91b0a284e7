//! Dense volumetric containers: scalar grids, label volumes and
//! per-voxel categorical distributions.

use crate::error::{Error, Result};
use crate::geom::Dims3;

/// Dense 3D scalar field (image intensities or uncertainty values),
/// C-order layout. All values are finite after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: Dims3,
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: Dims3, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "value buffer length {} does not match dims {:?}",
                values.len(),
                dims.as_array()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite value {v}")));
        }
        Ok(VoxelGrid { dims, values })
    }

    pub fn zeros(dims: Dims3) -> Self {
        VoxelGrid { dims, values: vec![0.0; dims.voxel_count()] }
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f64 {
        self.values[self.dims.index(z, y, x)]
    }
}

/// Field of uncertainty scores in nats; same container as an image grid.
pub type UncertaintyField = VoxelGrid;

/// Integer class id per voxel in `0..=C`, with 0 the background class
/// and `C` the number of foreground classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    pub dims: Dims3,
    pub labels: Vec<u8>,
    pub num_classes: u8,
}

impl LabelVolume {
    pub fn new(dims: Dims3, labels: Vec<u8>, num_classes: u8) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidVolume("need at least one foreground class".into()));
        }
        if labels.len() != dims.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "label buffer length {} does not match dims {:?}",
                labels.len(),
                dims.as_array()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > num_classes) {
            return Err(Error::InvalidVolume(format!(
                "label {l} exceeds class count {num_classes}"
            )));
        }
        Ok(LabelVolume { dims, labels, num_classes })
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> u8 {
        self.labels[self.dims.index(z, y, x)]
    }

    /// Voxel count per class id, index 0 = background.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Per-voxel categorical distribution over `C + 1` classes (channel 0 =
/// background), channel-major layout: `values[c * n + v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    pub dims: Dims3,
    pub num_channels: usize,
    values: Vec<f64>,
}

impl ProbabilityField {
    /// Tolerance on per-voxel normalization.
    pub const NORM_TOL: f64 = 1e-6;

    pub fn new(dims: Dims3, num_channels: usize, values: Vec<f64>) -> Result<Self> {
        let n = dims.voxel_count();
        if values.len() != n * num_channels {
            return Err(Error::InvalidVolume(format!(
                "probability buffer length {} does not match {num_channels} x {n}",
                values.len()
            )));
        }
        let field = ProbabilityField { dims, num_channels, values };
        field.check_normalized()?;
        Ok(field)
    }

    fn check_normalized(&self) -> Result<()> {
        let n = self.dims.voxel_count();
        for v in 0..n {
            let mut sum = 0.0;
            for c in 0..self.num_channels {
                let p = self.values[c * n + v];
                if !(0.0..=1.0 + Self::NORM_TOL).contains(&p) {
                    return Err(Error::InvalidVolume(format!(
                        "probability {p} out of [0, 1] at voxel {v} channel {c}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > Self::NORM_TOL {
                return Err(Error::InvalidVolume(format!(
                    "voxel {v} probabilities sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.voxel_count();
        &self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn prob(&self, c: usize, voxel: usize) -> f64 {
        self.values[c * self.dims.voxel_count() + voxel]
    }

    /// Arithmetic mean of several fields with identical shape.
    pub fn mean_of(fields: &[ProbabilityField]) -> Result<ProbabilityField> {
        let first = fields.first().ok_or(Error::EnsembleTooSmall(0))?;
        let mut acc = vec![0.0; first.values.len()];
        for f in fields {
            debug_assert_eq!(f.dims, first.dims);
            debug_assert_eq!(f.num_channels, first.num_channels);
            for (a, v) in acc.iter_mut().zip(&f.values) {
                *a += v;
            }
        }
        let inv = 1.0 / fields.len() as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
        ProbabilityField::new(first.dims, first.num_channels, acc)
    }

    /// Most probable class per voxel.
    pub fn argmax_labels(&self, num_classes: u8) -> Result<LabelVolume> {
        let n = self.dims.voxel_count();
        let mut labels = vec![0u8; n];
        for (v, label) in labels.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_p = self.values[v];
            for c in 1..self.num_channels {
                let p = self.values[c * n + v];
                if p > best_p {
                    best_p = p;
                    best = c;
                }
            }
            *label = best as u8;
        }
        LabelVolume::new(self.dims, labels, num_classes)
    }
}
