//! The results.csv contract: one row per cycle with the schema
//! `method, dataset, seed, cycle, budget_patches, fg_voxels, mean_dice,
//! dice_class_1..C`. Floats are written with the shortest round-trip
//! representation, so parse -> serialize is byte-stable.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{CycleRecord, TrajectoryRecord};

pub fn write_results(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    let num_classes = record.cycles.first().map_or(0, |c| c.per_class_dice.len());
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::csv(format!("creating {}", path.display()), e))?;
    let mut header = vec![
        "method".to_string(),
        "dataset".to_string(),
        "seed".to_string(),
        "cycle".to_string(),
        "budget_patches".to_string(),
        "fg_voxels".to_string(),
        "mean_dice".to_string(),
    ];
    header.extend((1..=num_classes).map(|c| format!("dice_class_{c}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::csv("writing header", e))?;
    for (cycle, rec) in record.cycles.iter().enumerate() {
        let mut row = vec![
            record.method.clone(),
            record.setting.clone(),
            record.seed.to_string(),
            cycle.to_string(),
            rec.budget_patches.to_string(),
            rec.fg_voxels.to_string(),
            rec.mean_dice.to_string(),
        ];
        row.extend(rec.per_class_dice.iter().map(|d| match d {
            Some(v) => v.to_string(),
            None => String::new(),
        }));
        writer
            .write_record(&row)
            .map_err(|e| Error::csv("writing row", e))?;
    }
    writer.flush().map_err(|e| Error::io("flushing results.csv", e))
}

pub fn read_results(path: &Path) -> Result<TrajectoryRecord> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::csv(format!("opening {}", path.display()), e))?;
    let header = reader
        .headers()
        .map_err(|e| Error::csv("reading header", e))?
        .clone();
    let num_classes = header.len().saturating_sub(7);
    let mut method = String::new();
    let mut setting = String::new();
    let mut seed = 0u64;
    let mut cycles = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv("reading row", e))?;
        let field = |k: usize| -> &str { row.get(k).unwrap_or("") };
        let parse_err = |what: &str| {
            Error::InconsistentRuns(format!("{}: bad {what} in row {i}", path.display()))
        };
        if i == 0 {
            method = field(0).to_string();
            setting = field(1).to_string();
            seed = field(2).parse().map_err(|_| parse_err("seed"))?;
        }
        let cycle: usize = field(3).parse().map_err(|_| parse_err("cycle"))?;
        if cycle != i {
            return Err(Error::InconsistentRuns(format!(
                "{}: cycle {cycle} out of order",
                path.display()
            )));
        }
        let mut per_class_dice = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            let cell = field(7 + c);
            per_class_dice.push(if cell.is_empty() {
                None
            } else {
                Some(cell.parse().map_err(|_| parse_err("dice"))?)
            });
        }
        cycles.push(CycleRecord {
            budget_patches: field(4).parse().map_err(|_| parse_err("budget"))?,
            fg_voxels: field(5).parse().map_err(|_| parse_err("fg_voxels"))?,
            per_class_dice,
            mean_dice: field(6).parse().map_err(|_| parse_err("mean_dice"))?,
        });
    }
    let record = TrajectoryRecord { method, setting, seed, cycles };
    record.validate()?;
    Ok(record)
}
