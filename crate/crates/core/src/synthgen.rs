//! Deterministic synthetic 3D datasets with controllable class imbalance.
//!
//! Each image is a noisy background with ellipsoidal foreground blobs per
//! class. Blob counts are derived from the per-class target volume
//! fraction and clamped to the configured range; later classes overwrite
//! earlier ones at overlap. Everything is driven by per-image derived
//! streams, so generation is reproducible and per-image parallel-safe.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geom::Dims3;
use crate::rng::{derive_stream, RngStream};
use crate::volume::{LabelVolume, VoxelGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// Inclusive blob-count bounds per image.
    pub blob_count: (usize, usize),
    /// Inclusive per-axis radius bounds in voxels.
    pub radius: (usize, usize),
    /// Target fraction of the volume occupied by this class.
    pub target_fraction: f64,
    pub intensity_mean: f64,
    pub intensity_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub id: String,
    pub n_train: usize,
    pub n_test: usize,
    pub dims: [usize; 3],
    /// Foreground classes 1..=C in draw order.
    pub classes: Vec<ClassSpec>,
    pub background_mean: f64,
    pub background_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Desk-scale default: 48^3 volumes, three classes with one rare
    /// (<1% volume) class, overlapping intensity bands hard enough that
    /// query choice matters, 20 train + 8 test.
    pub fn desk_default(seed: u64) -> Self {
        SynthSpec {
            id: "synth_default".into(),
            n_train: 20,
            n_test: 8,
            dims: [48, 48, 48],
            classes: vec![
                ClassSpec {
                    blob_count: (2, 8),
                    radius: (5, 7),
                    target_fraction: 0.05,
                    intensity_mean: 2.0,
                    intensity_sigma: 1.2,
                },
                ClassSpec {
                    blob_count: (1, 6),
                    radius: (4, 6),
                    target_fraction: 0.02,
                    intensity_mean: 4.0,
                    intensity_sigma: 1.2,
                },
                ClassSpec {
                    blob_count: (1, 4),
                    radius: (3, 4),
                    target_fraction: 0.005,
                    intensity_mean: 6.0,
                    intensity_sigma: 1.2,
                },
            ],
            background_mean: 0.0,
            background_sigma: 1.2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = Dims3::from(self.dims);
        if dims.d < 16 || dims.h < 16 || dims.w < 16 {
            return Err(Error::SpecInfeasible(format!(
                "dims {:?} below the 16^3 minimum",
                self.dims
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::SpecInfeasible("need at least one foreground class".into()));
        }
        if self.classes.len() > u8::MAX as usize {
            return Err(Error::SpecInfeasible("more than 255 classes".into()));
        }
        let min_dim = dims.d.min(dims.h).min(dims.w);
        for (i, c) in self.classes.iter().enumerate() {
            if c.radius.0 == 0 || c.radius.0 > c.radius.1 || c.blob_count.0 > c.blob_count.1 {
                return Err(Error::SpecInfeasible(format!("class {} has empty ranges", i + 1)));
            }
            // An ellipsoid of radius r spans 2r+1 voxels along an axis.
            if 2 * c.radius.1 + 1 > min_dim {
                return Err(Error::SpecInfeasible(format!(
                    "class {} radius {} cannot fit inside dims {:?}",
                    i + 1,
                    c.radius.1,
                    self.dims
                )));
            }
            if !(0.0..1.0).contains(&c.target_fraction) {
                return Err(Error::SpecInfeasible(format!(
                    "class {} target fraction {} out of [0, 1)",
                    i + 1,
                    c.target_fraction
                )));
            }
            if c.intensity_sigma < 0.0 {
                return Err(Error::SpecInfeasible("negative intensity sigma".into()));
            }
        }
        let total: f64 = self.classes.iter().map(|c| c.target_fraction).sum();
        if total >= 1.0 {
            return Err(Error::SpecInfeasible(format!(
                "target fractions sum to {total}; background must dominate"
            )));
        }
        Ok(())
    }
}

/// Expected discrete voxel volume of an ellipsoid with the mid-range radius.
fn expected_blob_volume(radius: (usize, usize)) -> f64 {
    let r = (radius.0 + radius.1) as f64 / 2.0;
    4.0 / 3.0 * std::f64::consts::PI * r * r * r
}

fn generate_image(spec: &SynthSpec, stream: &mut RngStream) -> (VoxelGrid, LabelVolume) {
    let dims = Dims3::from(spec.dims);
    let n = dims.voxel_count();
    let mut labels = vec![0u8; n];

    for (ci, class) in spec.classes.iter().enumerate() {
        let class_id = (ci + 1) as u8;
        let wanted = (class.target_fraction * n as f64 / expected_blob_volume(class.radius))
            .round() as usize;
        let count = wanted.clamp(class.blob_count.0, class.blob_count.1);
        for _ in 0..count {
            let rz = stream.range_inclusive(class.radius.0, class.radius.1);
            let ry = stream.range_inclusive(class.radius.0, class.radius.1);
            let rx = stream.range_inclusive(class.radius.0, class.radius.1);
            let cz = stream.range_inclusive(rz, dims.d - 1 - rz);
            let cy = stream.range_inclusive(ry, dims.h - 1 - ry);
            let cx = stream.range_inclusive(rx, dims.w - 1 - rx);
            for z in cz - rz..=cz + rz {
                let fz = (z as f64 - cz as f64) / rz as f64;
                for y in cy - ry..=cy + ry {
                    let fy = (y as f64 - cy as f64) / ry as f64;
                    for x in cx - rx..=cx + rx {
                        let fx = (x as f64 - cx as f64) / rx as f64;
                        if fz * fz + fy * fy + fx * fx <= 1.0 {
                            labels[dims.index(z, y, x)] = class_id;
                        }
                    }
                }
            }
        }
    }

    let mut values = vec![0.0f64; n];
    for (v, value) in values.iter_mut().enumerate() {
        let (mean, sigma) = match labels[v] {
            0 => (spec.background_mean, spec.background_sigma),
            l => {
                let c = &spec.classes[l as usize - 1];
                (c.intensity_mean, c.intensity_sigma)
            }
        };
        // One normal draw per voxel even when sigma = 0 keeps the stream
        // layout independent of the label content.
        let noise = stream.standard_normal();
        *value = mean + sigma * noise;
    }

    let grid = VoxelGrid::new(dims, values).expect("finite by construction");
    let volume =
        LabelVolume::new(dims, labels, spec.classes.len() as u8).expect("labels in range");
    (grid, volume)
}

/// Generate the train and test images for a spec. Deterministic in the
/// spec seed; image `i` of the train split uses stream ("synth", i) and
/// test images continue the index space after the train images.
pub fn generate_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let gen = |offset: usize, count: usize| {
        (0..count)
            .map(|i| {
                let mut stream = derive_stream(spec.seed, "synth", (offset + i) as u64);
                generate_image(spec, &mut stream)
            })
            .collect::<Vec<_>>()
    };
    let train = gen(0, spec.n_train);
    let test = gen(spec.n_train, spec.n_test);

    // Every foreground class must appear somewhere in the training pool.
    for class_id in 1..=spec.classes.len() as u8 {
        let present = train
            .iter()
            .any(|(_, l)| l.labels.contains(&class_id));
        if !present {
            return Err(Error::SpecInfeasible(format!(
                "class {class_id} absent from every training image; raise its blob count or radius"
            )));
        }
    }

    Ok(Dataset {
        id: spec.id.clone(),
        dims: Dims3::from(spec.dims),
        num_classes: spec.classes.len() as u8,
        seed: spec.seed,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_blob_spec() -> SynthSpec {
        SynthSpec {
            id: "single".into(),
            n_train: 1,
            n_test: 0,
            dims: [17, 17, 17],
            classes: vec![ClassSpec {
                blob_count: (1, 1),
                radius: (8, 8),
                // irrelevant: count is clamped to (1, 1)
                target_fraction: 0.5,
                intensity_mean: 5.0,
                intensity_sigma: 0.0,
            }],
            background_mean: 0.0,
            background_sigma: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn forced_centered_blob_matches_discrete_ellipsoid() {
        // radius 8 in a 17^3 volume forces the center to (8, 8, 8).
        let ds = generate_dataset(&single_blob_spec()).unwrap();
        let (grid, labels) = &ds.train[0];

        let mut expected = 0usize;
        for z in 0i64..17 {
            for y in 0i64..17 {
                for x in 0i64..17 {
                    let f = |v: i64| (v - 8) as f64 / 8.0;
                    if f(z).powi(2) + f(y).powi(2) + f(x).powi(2) <= 1.0 {
                        expected += 1;
                    }
                }
            }
        }
        let fg = labels.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(fg, expected);

        // sigma = 0: intensity exactly the class mean inside, background outside.
        for (v, &l) in labels.labels.iter().enumerate() {
            let want = if l == 1 { 5.0 } else { 0.0 };
            assert_eq!(grid.values[v], want);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec::desk_default(11);
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        for (ia, ib) in a.train.iter().zip(&b.train) {
            assert_eq!(ia.0.values, ib.0.values);
            assert_eq!(ia.1.labels, ib.1.labels);
        }
    }

    #[test]
    fn realized_fractions_near_targets() {
        let spec = SynthSpec::desk_default(0);
        let ds = generate_dataset(&spec).unwrap();
        let n = ds.dims.voxel_count() as f64;
        for (ci, class) in spec.classes.iter().enumerate() {
            let class_id = (ci + 1) as u8;
            let mean_fraction: f64 = ds
                .train
                .iter()
                .map(|(_, l)| l.labels.iter().filter(|&&v| v == class_id).count() as f64 / n)
                .sum::<f64>()
                / ds.train.len() as f64;
            let rel = (mean_fraction - class.target_fraction).abs() / class.target_fraction;
            assert!(
                rel < 0.5,
                "class {class_id}: realized {mean_fraction:.4} vs target {:.4}",
                class.target_fraction
            );
        }
    }

    #[test]
    fn labels_in_range_and_background_present() {
        let ds = generate_dataset(&SynthSpec::desk_default(5)).unwrap();
        for (_, l) in ds.train.iter().chain(&ds.test) {
            assert!(l.labels.iter().all(|&v| v <= ds.num_classes));
            assert!(l.labels.contains(&0));
        }
    }

    #[test]
    fn oversized_radius_is_infeasible() {
        let mut spec = single_blob_spec();
        spec.classes[0].radius = (9, 9); // 2*9+1 = 19 > 17
        assert!(matches!(generate_dataset(&spec), Err(Error::SpecInfeasible(_))));
    }

    #[test]
    fn dominant_foreground_is_infeasible() {
        let mut spec = SynthSpec::desk_default(0);
        spec.classes[0].target_fraction = 0.99;
        assert!(matches!(generate_dataset(&spec), Err(Error::SpecInfeasible(_))));
    }
}
