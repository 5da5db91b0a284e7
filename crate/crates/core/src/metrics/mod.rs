//! Segmentation and AL-trajectory metrics plus the statistical
//! machinery used to compare query methods: Dice, area under the budget
//! curve, foreground efficiency, pairwise penalty matrices with
//! multiple-testing correction, Friedman / Nemenyi rank analysis, and
//! error-propagated aggregate means.

mod aggregate;
mod dice;
mod ppm;
mod ranks;
mod stat;
mod trajectory;

pub use aggregate::aggregate_mean_ci;
pub use dice::{dice, DiceScores};
pub use ppm::{holm_comparisons, ppm, Correction, PpmMatrix, PpmRecord};
pub use ranks::{
    delta_for_effect_size, friedman_nemenyi, FriedmanNemenyi, RangeDistribution,
    NEMENYI_MC_SAMPLES,
};
pub use stat::{holm_reject, paired_t_pvalue, PairedOutcome};
pub use trajectory::{aubc, fg_eff, FgEffFit};

use serde::{Deserialize, Serialize};

/// One cycle of an AL trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleRecord {
    pub budget_patches: usize,
    /// Cumulative annotated foreground voxels.
    pub fg_voxels: u64,
    /// Per foreground class; None when the class was absent from both
    /// prediction and ground truth everywhere.
    pub per_class_dice: Vec<Option<f64>>,
    pub mean_dice: f64,
}

/// Per-(method, setting, seed) performance and annotation-cost record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub method: String,
    pub setting: String,
    pub seed: u64,
    pub cycles: Vec<CycleRecord>,
}

impl TrajectoryRecord {
    /// Budgets must increase strictly across cycles.
    pub fn validate(&self) -> crate::error::Result<()> {
        for w in self.cycles.windows(2) {
            if w[1].budget_patches <= w[0].budget_patches {
                return Err(crate::error::Error::InconsistentRuns(format!(
                    "budgets not strictly increasing for {}/{}/seed {}",
                    self.method, self.setting, self.seed
                )));
            }
        }
        Ok(())
    }

    pub fn mean_dice_curve(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.mean_dice).collect()
    }

    pub fn final_dice(&self) -> Option<f64> {
        self.cycles.last().map(|c| c.mean_dice)
    }
}
