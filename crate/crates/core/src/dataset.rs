//! On-disk dataset format: a directory holding `manifest.json` plus flat
//! binary payloads per image — intensities as little-endian f32, labels
//! as u8, both in C-order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Dims3;
use crate::volume::{LabelVolume, VoxelGrid};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub id: String,
    pub dims: [usize; 3],
    pub num_foreground_classes: u8,
    /// Isotropic placeholder; no resampling is performed.
    pub spacing: [f64; 3],
    pub intensity_dtype: String,
    pub label_dtype: String,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// A loaded dataset: fixed train (pool) / test split, identical dims
/// across images.
pub struct Dataset {
    pub id: String,
    pub dims: Dims3,
    pub num_classes: u8,
    pub seed: u64,
    pub train: Vec<(VoxelGrid, LabelVolume)>,
    pub test: Vec<(VoxelGrid, LabelVolume)>,
}

impl Dataset {
    /// Total foreground voxels over the pool (train) images, the
    /// denominator of the annotated-foreground fraction.
    pub fn pool_fg_voxels(&self) -> u64 {
        self.train
            .iter()
            .map(|(_, l)| l.labels.iter().filter(|&&v| v > 0).count() as u64)
            .sum()
    }
}

fn image_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.img"))
}

fn label_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.lab"))
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let name = |prefix: &str, i: usize| format!("{prefix}_{i:03}");
    let manifest = Manifest {
        schema_version: 1,
        id: dataset.id.clone(),
        dims: dataset.dims.as_array(),
        num_foreground_classes: dataset.num_classes,
        spacing: [1.0, 1.0, 1.0],
        intensity_dtype: "f32le".into(),
        label_dtype: "u8".into(),
        seed: dataset.seed,
        train: (0..dataset.train.len()).map(|i| name("train", i)).collect(),
        test: (0..dataset.test.len()).map(|i| name("test", i)).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json("serializing manifest", e))?;
    fs::write(dir.join(MANIFEST_NAME), json)
        .map_err(|e| Error::io("writing manifest", e))?;

    let pairs = dataset
        .train
        .iter()
        .zip(&manifest.train)
        .chain(dataset.test.iter().zip(&manifest.test));
    for ((grid, labels), name) in pairs {
        let mut buf = Vec::with_capacity(grid.values.len() * 4);
        for &v in &grid.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(image_path(dir, name), buf)
            .map_err(|e| Error::io(format!("writing image {name}"), e))?;
        fs::write(label_path(dir, name), &labels.labels)
            .map_err(|e| Error::io(format!("writing labels {name}"), e))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| Error::json("parsing manifest", e))?;
    if manifest.intensity_dtype != "f32le" || manifest.label_dtype != "u8" {
        return Err(Error::InvalidConfig(format!(
            "unsupported dtypes {}/{}",
            manifest.intensity_dtype, manifest.label_dtype
        )));
    }
    let dims = Dims3::from(manifest.dims);
    let load = |name: &String| -> Result<(VoxelGrid, LabelVolume)> {
        let raw = fs::read(image_path(dir, name))
            .map_err(|e| Error::io(format!("reading image {name}"), e))?;
        if raw.len() != dims.voxel_count() * 4 {
            return Err(Error::InvalidVolume(format!(
                "image {name} has {} bytes, expected {}",
                raw.len(),
                dims.voxel_count() * 4
            )));
        }
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let grid = VoxelGrid::new(dims, values)?;
        let labels_raw = fs::read(label_path(dir, name))
            .map_err(|e| Error::io(format!("reading labels {name}"), e))?;
        let labels = LabelVolume::new(dims, labels_raw, manifest.num_foreground_classes)?;
        Ok((grid, labels))
    };
    Ok(Dataset {
        id: manifest.id,
        dims,
        num_classes: manifest.num_foreground_classes,
        seed: manifest.seed,
        train: manifest.train.iter().map(load).collect::<Result<_>>()?,
        test: manifest.test.iter().map(load).collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_payloads() {
        let dims = Dims3::new(3, 4, 5);
        let n = dims.voxel_count();
        let grid = VoxelGrid::new(dims, (0..n).map(|i| i as f64 * 0.5).collect()).unwrap();
        let labels =
            LabelVolume::new(dims, (0..n).map(|i| (i % 3) as u8).collect(), 2).unwrap();
        let ds = Dataset {
            id: "roundtrip".into(),
            dims,
            num_classes: 2,
            seed: 7,
            train: vec![(grid.clone(), labels.clone())],
            test: vec![(grid.clone(), labels.clone())],
        };
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), &ds).unwrap();
        let back = read_dataset(tmp.path()).unwrap();
        assert_eq!(back.train.len(), 1);
        assert_eq!(back.test.len(), 1);
        assert_eq!(back.train[0].0, grid);
        assert_eq!(back.train[0].1, labels);
        assert_eq!(back.num_classes, 2);
        assert_eq!(back.seed, 7);
    }
}
