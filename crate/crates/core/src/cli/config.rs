//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so typos do not silently fall back to defaults.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::nnet::{NetworkConfig, TrainConfig};
use crate::tsne::TsneConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub images_root: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Fraction of paintings assigned to the training subset.
    pub split_ratio: f64,
    /// Seed for the split, training and T-SNE.
    pub seed: u64,
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub tsne: TsneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: None,
            images_root: PathBuf::from("."),
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            split_ratio: 0.9,
            seed: 0,
            train: TrainConfig::default(),
            network: NetworkConfig::default(),
            tsne: TsneConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "manifest" => self.manifest = optional_path(value),
            "images_root" => self.images_root = PathBuf::from(value),
            "checkpoint" => self.checkpoint = optional_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "split_ratio" => self.split_ratio = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "momentum" => self.train.momentum = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "input_height" => self.network.input_height = num(key, value)?,
            "input_width" => self.network.input_width = num(key, value)?,
            "conv_filters" => {
                self.network.conv_filters = value
                    .split(',')
                    .map(|f| num(key, f.trim()))
                    .collect::<Result<_, _>>()?
            }
            "tsne_dims" => self.tsne.out_dims = num(key, value)?,
            "tsne_perplexity" => self.tsne.perplexity = num(key, value)?,
            "tsne_iterations" => self.tsne.iterations = num(key, value)?,
            "tsne_learning_rate" => self.tsne.learning_rate = num(key, value)?,
            "tsne_exaggeration" => self.tsne.exaggeration = num(key, value)?,
            "tsne_exaggeration_iters" => self.tsne.exaggeration_iters = num(key, value)?,
            "tsne_momentum_initial" => self.tsne.momentum_initial = num(key, value)?,
            "tsne_momentum_final" => self.tsne.momentum_final = num(key, value)?,
            "tsne_momentum_switch" => self.tsne.momentum_switch = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Seeds flow from the single `seed` key.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            seed: self.seed,
            ..self.tsne.clone()
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.sgw"))
    }

    /// Canonical text of every key, in a fixed order.
    pub fn render(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let filters: Vec<String> = self.network.conv_filters.iter().map(|f| f.to_string()).collect();
        let t = &self.tsne;
        let rows: Vec<(&str, String)> = vec![
            ("manifest", path(&self.manifest)),
            ("images_root", self.images_root.display().to_string()),
            ("checkpoint", path(&self.checkpoint)),
            ("out_dir", self.out_dir.display().to_string()),
            ("split_ratio", self.split_ratio.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("momentum", self.train.momentum.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("input_height", self.network.input_height.to_string()),
            ("input_width", self.network.input_width.to_string()),
            ("conv_filters", filters.join(",")),
            ("tsne_dims", t.out_dims.to_string()),
            ("tsne_perplexity", t.perplexity.to_string()),
            ("tsne_iterations", t.iterations.to_string()),
            ("tsne_learning_rate", t.learning_rate.to_string()),
            ("tsne_exaggeration", t.exaggeration.to_string()),
            ("tsne_exaggeration_iters", t.exaggeration_iters.to_string()),
            ("tsne_momentum_initial", t.momentum_initial.to_string()),
            ("tsne_momentum_final", t.momentum_final.to_string()),
            ("tsne_momentum_switch", t.momentum_switch.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.render().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}
