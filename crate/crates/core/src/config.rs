//! Top-level configuration file: corpus generation plus the analysis pipeline.

use serde::{Deserialize, Serialize};

use crate::datagen::SynthConfig;
use crate::experiment::PipelineConfig;
use crate::util::canonical_digest;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    /// Electrode counts for the subset study; the full montage is always added.
    pub electrode_counts: Vec<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
            electrode_counts: vec![1, 3, 10],
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.pipeline.validate()
    }

    /// Overrides both seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.pipeline.seed = seed;
    }

    /// SHA-256 of the canonical JSON form; independent of key order in the source file.
    pub fn digest(&self) -> Result<String> {
        canonical_digest(self)
    }
}
