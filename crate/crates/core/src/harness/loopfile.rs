//! Per-cycle query metadata persisted as `loop_XXX.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::{Channel, QueryMethodSpec, QueryResult};

pub const LOOP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopPatch {
    pub image: usize,
    pub origin: [usize; 3],
    pub size: [usize; 3],
    pub channel: String,
    pub raw_score: f64,
    pub noised_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopFile {
    pub schema_version: u32,
    pub cycle: usize,
    pub method: QueryMethodSpec,
    /// Inverse noise scale used this cycle; absent for noise-free and
    /// random selections.
    pub beta: Option<f64>,
    /// Derivation path of the stream that drove the query.
    pub stream_fingerprint: String,
    pub exhausted: bool,
    pub patches: Vec<LoopPatch>,
}

fn channel_name(c: Channel) -> String {
    match c {
        Channel::Global => "global".into(),
        Channel::Class(id) => format!("class_{id}"),
        Channel::Random => "random".into(),
        Channel::Foreground(id) => format!("fg_class_{id}"),
    }
}

impl LoopFile {
    pub fn from_result(
        result: &QueryResult,
        method: &QueryMethodSpec,
        beta: Option<f64>,
        stream_fingerprint: String,
    ) -> Self {
        LoopFile {
            schema_version: LOOP_SCHEMA_VERSION,
            cycle: result.cycle,
            method: method.clone(),
            beta,
            stream_fingerprint,
            exhausted: result.exhausted,
            patches: result
                .selected
                .iter()
                .map(|s| LoopPatch {
                    image: s.image,
                    origin: s.patch.origin,
                    size: s.patch.size,
                    channel: channel_name(s.channel),
                    raw_score: s.raw_score,
                    noised_score: s.noised_score,
                })
                .collect(),
        }
    }

    pub fn path(dir: &Path, cycle: usize) -> PathBuf {
        dir.join(format!("loop_{cycle:03}.json"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = Self::path(dir, self.cycle);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json("serializing loop file", e))?;
        std::fs::write(&path, json)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json("parsing loop file", e))
    }
}
