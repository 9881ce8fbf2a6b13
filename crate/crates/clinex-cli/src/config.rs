//! Experiment configuration file: feature space, optimizer settings
//! per model, and the pipeline knobs.
//!
//! ```toml
//! [features]
//! window = 2
//! hash_dim = 32768
//!
//! [entity]
//! learning_rate = 0.1
//! max_epochs = 25
//! patience = 6
//!
//! [span]
//! learning_rate = 0.2
//! l2_penalty = 0.01
//! max_epochs = 50
//!
//! alpha = 0.5
//! window = 150
//! ```
//!
//! Omitted keys keep their defaults; the `--seed` flag overrides any
//! seed given here.

use std::path::Path;

use anyhow::Context;
use clinex_core::crf::TrainConfig;
use clinex_core::pipeline::PipelineTrainConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    features: FeaturesBlock,
    #[serde(default)]
    entity: TrainBlock,
    #[serde(default)]
    span: TrainBlock,
    alpha: Option<f64>,
    window: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesBlock {
    window: Option<usize>,
    hash_dim: Option<usize>,
}

impl Default for FeaturesBlock {
    fn default() -> Self {
        FeaturesBlock { window: None, hash_dim: None }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainBlock {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    grad_clip_l2: Option<f64>,
    l2_penalty: Option<f64>,
    patience: Option<usize>,
}

fn apply(block: &TrainBlock, base: &mut TrainConfig) {
    if let Some(v) = block.learning_rate {
        base.learning_rate = v;
    }
    if let Some(v) = block.batch_size {
        base.batch_size = v;
    }
    if let Some(v) = block.max_epochs {
        base.max_epochs = v;
    }
    if let Some(v) = block.grad_clip_l2 {
        base.grad_clip_l2 = v;
    }
    if let Some(v) = block.l2_penalty {
        base.l2_penalty = v;
    }
    if let Some(v) = block.patience {
        base.patience = v;
    }
}

impl ExperimentFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<ExperimentFile> {
        match path {
            None => Ok(ExperimentFile::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Materialize the pipeline configuration with `seed` threaded into
    /// both trainers.
    pub fn pipeline_config(&self, seed: u64) -> PipelineTrainConfig {
        let mut cfg = PipelineTrainConfig::default();
        if let Some(v) = self.features.window {
            cfg.features.window = v;
        }
        if let Some(v) = self.features.hash_dim {
            cfg.features.hash_dim = v;
        }
        apply(&self.entity, &mut cfg.crf);
        apply(&self.span, &mut cfg.span);
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        cfg.crf.seed = seed;
        cfg.span.seed = seed;
        cfg
    }
}
