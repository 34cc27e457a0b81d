//! Data preparation shared by every stage: load, impute, encode, optionally
//! subsample, split, scale.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tree_alime::dataset::{
    load_csv, one_hot_encode, split_indices, EncodedDataset, FeatureSchema, ImputationReport, Scaler,
};
use tree_alime::sampler::TrainingStats;

use crate::config::RunConfig;

/// Everything downstream stages need to rebuild the exact same matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub columns: Vec<String>,
    pub rows: usize,
    /// Source rows kept by `max_rows`, in sampled order.
    pub subsample: Option<Vec<usize>>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub scaler: Scaler,
    pub stats: TrainingStats,
    pub imputation: ImputationReport,
}

pub struct Prepared {
    pub encoded: EncodedDataset,
    pub scaled: Array2<f64>,
    pub preprocess: Preprocess,
}

impl Prepared {
    pub fn train_x(&self) -> Array2<f64> {
        self.scaled.select(ndarray::Axis(0), &self.preprocess.train_indices)
    }

    pub fn test_x(&self) -> Array2<f64> {
        self.scaled.select(ndarray::Axis(0), &self.preprocess.test_indices)
    }

    pub fn train_y(&self) -> Vec<u8> {
        self.preprocess.train_indices.iter().map(|&i| self.encoded.labels[i]).collect()
    }

    pub fn test_y(&self) -> Vec<u8> {
        self.preprocess.test_indices.iter().map(|&i| self.encoded.labels[i]).collect()
    }

    /// Scaled test row `position` of the test split.
    pub fn test_row(&self, position: usize) -> Option<Vec<f64>> {
        let i = *self.preprocess.test_indices.get(position)?;
        Some(self.scaled.row(i).to_vec())
    }
}

/// Scaler on the whole (subsampled) encoded matrix; Gaussian sampling
/// statistics on the training split only.
pub fn prepare(cfg: &RunConfig) -> anyhow::Result<Prepared> {
    let schema = FeatureSchema::from_json_file(&cfg.dataset.schema)?;
    let (ds, imputation) = load_csv(&cfg.dataset.csv, &schema)?;
    if imputation.total() > 0 {
        for (name, count) in imputation.per_feature.iter().filter(|(_, c)| *c > 0) {
            log::info!("imputed {count} missing values in `{name}`");
        }
    }
    let mut encoded = one_hot_encode(&ds);
    let subsample = match cfg.dataset.max_rows {
        Some(limit) if limit < encoded.n_rows() => {
            let mut order: Vec<usize> = (0..encoded.n_rows()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.component_seed("subsample")));
            order.truncate(limit);
            encoded = encoded.select_rows(&order);
            Some(order)
        }
        _ => None,
    };
    let (train_indices, test_indices) =
        split_indices(encoded.n_rows(), cfg.dataset.train_fraction, cfg.component_seed("split"))?;
    let scaler = Scaler::fit_with(&encoded.matrix, cfg.dataset.std_convention)?;
    let scaled = scaler.transform(&encoded.matrix)?;
    let train = encoded.select_rows(&train_indices);
    let stats = TrainingStats::from_encoded(&train)?;
    let preprocess = Preprocess {
        columns: encoded.column_names(),
        rows: encoded.n_rows(),
        subsample,
        train_indices,
        test_indices,
        scaler,
        stats,
        imputation,
    };
    Ok(Prepared {
        encoded,
        scaled,
        preprocess,
    })
}
