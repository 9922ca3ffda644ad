//! Run configuration: one JSON document, overridable from flags.

use std::path::{Path, PathBuf};

use docsynth_core::model::{AdamConfig, ModelConfig, PositionEncoding};
use docsynth_core::sampler::GenerationSettings;
use docsynth_core::tokenizer::{DEFAULT_MAX_ARRAY_LEN, DEFAULT_TAU};
use docsynth_core::train::TrainConfig;
use docsynth_eval::GbdtParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_mixtures: usize,
    pub max_array_len: usize,
    pub dropout: f64,
    pub position: PositionEncoding,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 8,
            n_heads: 4,
            d_ff: 512,
            n_mixtures: 5,
            max_array_len: DEFAULT_MAX_ARRAY_LEN,
            dropout: 0.1,
            position: PositionEncoding::KeyPath,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            n_mixtures: self.n_mixtures,
            max_array_len: self.max_array_len,
            vocab_size: 0,
            max_seq_len: 0,
            dropout: self.dropout,
            position: self.position,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub min_lr_factor: f64,
    pub clip_norm: f64,
    pub shuffle_keys: bool,
    pub use_masks: bool,
    pub best_by_valid: bool,
    /// Share of the training corpus held out for validation when no
    /// validation file is given.
    pub valid_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr: 5e-4,
            warmup_steps: 100,
            min_lr_factor: 0.0,
            clip_norm: 1.0,
            shuffle_keys: true,
            use_masks: true,
            best_by_valid: false,
            valid_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: Option<usize>,
    pub batch_size: usize,
    pub max_attempts: u32,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let g = GenerationSettings::default();
        Self { n: 1000, temperature: g.temperature, max_tokens: g.max_tokens, batch_size: g.batch_size, max_attempts: g.max_attempts }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub target: Option<String>,
    pub replicates: usize,
    pub utility: bool,
    pub privacy: bool,
    pub utility_model: GbdtParams,
    pub detection_model: GbdtParams,
}

impl Default for EvalSection {
    fn default() -> Self {
        let o = docsynth_eval::EvalOptions::default();
        Self {
            target: None,
            replicates: 1,
            utility: true,
            privacy: true,
            utility_model: o.utility,
            detection_model: o.detection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub tau: usize,
    pub paths: Paths,
    pub model: ModelSection,
    pub train: TrainSection,
    pub generate: GenerateSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            workers: None,
            tau: DEFAULT_TAU,
            paths: Paths::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            generate: GenerateSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// Checks that every configured input path exists.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for p in [&self.paths.train, &self.paths.valid, &self.paths.test].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed()?,
            shuffle_keys: t.shuffle_keys,
            use_masks: t.use_masks,
            adam: AdamConfig { lr: t.lr, ..Default::default() },
            warmup_steps: t.warmup_steps,
            min_lr_factor: t.min_lr_factor,
            clip_norm: t.clip_norm,
            best_by_valid: t.best_by_valid,
            ..Default::default()
        })
    }

    pub fn generation(&self, n: usize, seed: u64) -> GenerationSettings {
        let g = &self.generate;
        GenerationSettings {
            n,
            temperature: g.temperature,
            max_tokens: g.max_tokens,
            seed,
            batch_size: g.batch_size,
            max_attempts: g.max_attempts,
        }
    }

    pub fn eval_options(&self) -> Result<docsynth_eval::EvalOptions, CliError> {
        let e = &self.eval;
        Ok(docsynth_eval::EvalOptions {
            target: if e.utility { e.target.clone() } else { None },
            seed: self.seed()?,
            utility: e.utility_model.clone(),
            detection: e.detection_model.clone(),
            privacy: e.privacy,
        })
    }

    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        let out = self.paths.output.clone().ok_or_else(|| CliError::Config("an output directory is required (--out)".into()))?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "model": {"d_model": 32}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.model.d_model, 32);
        assert_eq!(c.model.n_layers, 8);
        assert_eq!(c.train.batch_size, 128);
    }

    #[test]
    fn unknown_fields_and_missing_seed_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(RunConfig::default().seed().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig { seed: Some(1), ..Default::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
