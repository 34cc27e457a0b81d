//! Run configuration: one JSON document, one required top-level seed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tree_alime::dataset::StdConvention;
use tree_alime::explain::Method;
use tree_alime::neuralnet::{AdamConfig, Selection};
use tree_alime::sampler::CategoricalMode;
use tree_alime::surrogate::QuartileBase;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub blackbox: BlackboxConfig,
    #[serde(default)]
    pub autoencoder: AeConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub fidelity: FidelityConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub csv: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seeded row subsample taken before the split.
    #[serde(default)]
    pub max_rows: Option<usize>,
    #[serde(default)]
    pub std_convention: StdConvention,
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = tree_alime::neuralnet::TrainConfig::default();
        TrainSection {
            max_epochs: d.max_epochs,
            patience: d.patience,
            batch_size: d.batch_size,
            adam: d.adam,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> tree_alime::neuralnet::TrainConfig {
        tree_alime::neuralnet::TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            adam: self.adam,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlackboxConfig {
    /// Fixed hidden sizes; `null` runs the grid search.
    pub hidden: Option<(usize, usize)>,
    pub neurons: Vec<usize>,
    pub folds: usize,
    pub validation_fraction: f64,
    pub selection: Selection,
    /// Also report 10-fold CV accuracy of the final architecture.
    pub cv_report: bool,
    pub train: TrainSection,
}

impl Default for BlackboxConfig {
    fn default() -> Self {
        let g = tree_alime::neuralnet::GridSearchConfig::default();
        BlackboxConfig {
            hidden: None,
            neurons: g.neurons,
            folds: g.folds,
            validation_fraction: g.validation_fraction,
            selection: g.selection,
            cv_report: false,
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub latent_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub noise_std: f64,
    pub holdout_fraction: f64,
    pub train: TrainSection,
}

impl Default for AeConfig {
    fn default() -> Self {
        let a = tree_alime::neuralnet::AutoencoderConfig::default();
        AeConfig {
            latent_dim: a.latent_dim,
            hidden_dim: a.hidden_dim,
            noise_std: a.noise_std,
            holdout_fraction: a.holdout_fraction,
            train: TrainSection::default(),
        }
    }
}

impl AeConfig {
    pub fn library(&self) -> tree_alime::neuralnet::AutoencoderConfig {
        tree_alime::neuralnet::AutoencoderConfig {
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
            noise_std: self.noise_std,
            holdout_fraction: self.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub method: Method,
    /// Row of the test split.
    pub instance: usize,
    pub m: usize,
    pub n: usize,
    pub categorical_mode: CategoricalMode,
    pub kernel_width: Option<f64>,
    pub include_instance: bool,
    pub max_depth: Option<usize>,
    pub top_k: usize,
    pub threshold: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            method: Method::TreeAlime,
            instance: 0,
            m: 10_000,
            n: 1_000,
            categorical_mode: CategoricalMode::Frequency,
            kernel_width: None,
            include_instance: false,
            max_depth: Some(5),
            top_k: 5,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidelityConfig {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    /// First this many test rows; `null` uses the whole test split.
    pub test_points: Option<usize>,
    /// Tree depth limit while evaluating; `null` grows full trees.
    pub max_depth: Option<usize>,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            methods: vec![Method::Alime, Method::TreeAlime],
            n_grid: tree_alime::eval::default_n_grid(),
            test_points: None,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub runs: usize,
    /// Row of the test split.
    pub instance: usize,
    pub quartile_base: QuartileBase,
    /// Tree depth limit while evaluating; `null` grows full trees.
    pub max_depth: Option<usize>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            methods: vec![Method::Alime, Method::TreeAlime],
            n_grid: tree_alime::eval::default_n_grid(),
            runs: 20,
            instance: 0,
            quartile_base: QuartileBase::AllFeatures,
            max_depth: None,
        }
    }
}

impl RunConfig {
    /// Reads the file and resolves dataset paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset.csv, &mut cfg.dataset.schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for p in [&self.dataset.csv, &self.dataset.schema] {
            if !p.exists() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        let f = self.dataset.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("train_fraction {f} must lie in (0, 1)");
        }
        if self.explain.n == 0 || self.explain.n > self.explain.m {
            bail!("explain.n = {} must be in 1..=m ({})", self.explain.n, self.explain.m);
        }
        if self.stability.runs < 2 {
            bail!("stability.runs must be at least 2");
        }
        Ok(())
    }

    /// Seed for one pipeline component, derived from the top-level seed.
    pub fn component_seed(&self, component: &str) -> u64 {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(component.as_bytes())
            .finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Hex sha256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
