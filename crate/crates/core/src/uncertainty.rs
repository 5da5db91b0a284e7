//! Voxel-level uncertainty fields and the class-stratified score stack.
//!
//! Predictive entropy and BALD are computed in nats. The stratified
//! stack weights the global uncertainty by the predicted per-class
//! probability, `u_c = p_c * u`, for the foreground classes only; the
//! background channel is excluded while entropy itself is taken over the
//! full distribution.

use crate::error::{Error, Result};
use crate::volume::{ProbabilityField, UncertaintyField, VoxelGrid};

/// C foreground score channels plus the unweighted global channel.
#[derive(Debug, Clone)]
pub struct StratifiedScoreStack {
    /// `channels[c - 1]` holds u_c for foreground class c.
    pub channels: Vec<UncertaintyField>,
    pub global: UncertaintyField,
}

impl StratifiedScoreStack {
    pub fn num_foreground_classes(&self) -> usize {
        self.channels.len()
    }
}

#[inline]
fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of the mean predictive distribution, per voxel.
pub fn predictive_entropy(mean: &ProbabilityField) -> UncertaintyField {
    let n = mean.dims.voxel_count();
    let mut values = vec![0.0; n];
    for c in 0..mean.num_channels {
        let ch = mean.channel(c);
        for (v, out) in values.iter_mut().enumerate() {
            *out -= xlnx(ch[v]);
        }
    }
    // Entropy is non-negative up to rounding; clamp stray negatives.
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    VoxelGrid::new(mean.dims, values).expect("entropy of a valid field is finite")
}

/// Mutual information between prediction and ensemble member:
/// `H[mean] - (1/M) sum_m H[p_m]`, clamped to zero where rounding makes
/// it negative.
pub fn bald(members: &[ProbabilityField], mean: &ProbabilityField) -> Result<UncertaintyField> {
    if members.len() < 2 {
        return Err(Error::EnsembleTooSmall(members.len()));
    }
    let mut total = predictive_entropy(mean);
    let inv_m = 1.0 / members.len() as f64;
    for member in members {
        let h = predictive_entropy(member);
        for (t, hv) in total.values.iter_mut().zip(&h.values) {
            *t -= inv_m * hv;
        }
    }
    for v in total.values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(total)
}

/// Class-stratified scores u_c = p_c * u for foreground classes 1..=C,
/// with the global channel passed through unchanged.
pub fn stratify(u: &UncertaintyField, mean: &ProbabilityField) -> StratifiedScoreStack {
    debug_assert_eq!(u.dims, mean.dims);
    let n = mean.dims.voxel_count();
    let channels = (1..mean.num_channels)
        .map(|c| {
            let p = mean.channel(c);
            let values = (0..n).map(|v| p[v] * u.values[v]).collect();
            VoxelGrid::new(mean.dims, values).expect("product of finite values")
        })
        .collect();
    StratifiedScoreStack { channels, global: u.clone() }
}
