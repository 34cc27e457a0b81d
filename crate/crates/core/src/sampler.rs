//! Perturbed neighborhoods around an instance.
//!
//! ALIME draws a pool of `m` Gaussian points from the training distribution,
//! keeps the `n` nearest to the instance in autoencoder latent space and
//! weights them with `exp(-d)`. LIME draws `n` points around the instance
//! directly and weights them with an RBF kernel in feature space.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{categorical_groups, CategoricalGroup, ColumnSource, EncodedDataset, Scaler};
use crate::error::{Error, Result};
use crate::neuralnet::DenoisingAutoencoder;

/// Per-column mean and population variance of the unscaled encoded training
/// matrix, plus the one-hot column groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub groups: Vec<CategoricalGroup>,
}

impl TrainingStats {
    pub fn from_encoded(train: &EncodedDataset) -> Result<TrainingStats> {
        TrainingStats::from_matrix(&train.matrix, &train.column_map)
    }

    pub fn from_matrix(matrix: &Array2<f64>, column_map: &[ColumnSource]) -> Result<TrainingStats> {
        if matrix.nrows() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if matrix.ncols() != column_map.len() {
            return Err(Error::DimensionMismatch {
                expected: column_map.len(),
                found: matrix.ncols(),
            });
        }
        let n = matrix.nrows() as f64;
        let mean: Vec<f64> = matrix.columns().into_iter().map(|c| c.sum() / n).collect();
        let variance = matrix
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
            .collect();
        Ok(TrainingStats {
            mean,
            variance,
            groups: categorical_groups(column_map),
        })
    }

    pub fn n_columns(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<()> {
        if self.variance.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: self.variance.len(),
            });
        }
        for (column, &variance) in self.variance.iter().enumerate() {
            if !(variance >= 0.0) {
                return Err(Error::InvalidVariance { column, variance });
            }
        }
        Ok(())
    }

    /// Marks which columns belong to a one-hot group (by group index).
    fn group_of_column(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.n_columns()];
        for (g, group) in self.groups.iter().enumerate() {
            for j in group.columns.clone() {
                owner[j] = Some(g);
            }
        }
        owner
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoricalMode {
    /// One category per group, drawn from the training frequencies.
    #[default]
    Frequency,
    /// Every one-hot column fixed at 1. Rows are not valid one-hot encodings
    /// and the resulting neighborhoods are marked non-canonical.
    LiteralPaper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Size of the sampled pool.
    pub m: usize,
    /// Points kept for the surrogate.
    pub n: usize,
    pub categorical_mode: CategoricalMode,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            m: 10_000,
            n: 1_000,
            categorical_mode: CategoricalMode::Frequency,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.n > self.m {
            return Err(Error::GridExceedsPool { n: self.n, m: self.m });
        }
        Ok(())
    }
}

fn fill_group(row: &mut [f64], group: &CategoricalGroup, stats: &TrainingStats, mode: CategoricalMode, rng: &mut ChaCha8Rng) {
    match mode {
        CategoricalMode::LiteralPaper => {
            for j in group.columns.clone() {
                row[j] = 1.0;
            }
        }
        CategoricalMode::Frequency => {
            let freqs = &stats.mean[group.columns.clone()];
            let total: f64 = freqs.iter().sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut cumulative = 0.0;
            let mut chosen = group.columns.end - 1;
            for (offset, &f) in freqs.iter().enumerate() {
                cumulative += f;
                if u < cumulative {
                    chosen = group.columns.start + offset;
                    break;
                }
            }
            for j in group.columns.clone() {
                row[j] = if j == chosen { 1.0 } else { 0.0 };
            }
        }
    }
}

/// `m` rows in the unscaled encoded space. Numeric columns are drawn i.i.d.
/// from Normal(mean, variance) of the training column.
pub fn gaussian_sample(stats: &TrainingStats, m: usize, mode: CategoricalMode, seed: u64) -> Result<Array2<f64>> {
    gaussian_rows(stats, None, m, mode, seed)
}

/// Shared sampler; `centre` replaces the training mean for numeric columns.
fn gaussian_rows(
    stats: &TrainingStats,
    centre: Option<&[f64]>,
    rows: usize,
    mode: CategoricalMode,
    seed: u64,
) -> Result<Array2<f64>> {
    stats.validate()?;
    let k = stats.n_columns();
    let owner = stats.group_of_column();
    let std: Vec<f64> = stats.variance.iter().map(|v| v.sqrt()).collect();
    let centre = centre.unwrap_or(&stats.mean);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((rows, k));
    for mut row in out.rows_mut() {
        let row = row.as_slice_mut().expect("contiguous row");
        let mut j = 0;
        while j < k {
            match owner[j] {
                Some(g) => {
                    let group = &stats.groups[g];
                    fill_group(row, group, stats, mode, &mut rng);
                    j = group.columns.end;
                }
                None => {
                    let z: f64 = rng.sample(StandardNormal);
                    row[j] = centre[j] + std[j] * z;
                    j += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Indices of the `n` rows of `latents` closest (Euclidean) to `instance`,
/// in ascending distance order with ties broken by lower index, and their
/// distances.
pub fn select_nearest(latents: &Array2<f64>, instance: &[f64], n: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if latents.ncols() != instance.len() {
        return Err(Error::DimensionMismatch {
            expected: latents.ncols(),
            found: instance.len(),
        });
    }
    let m = latents.nrows();
    if n > m {
        return Err(Error::GridExceedsPool { n, m });
    }
    let distances: Vec<f64> = latents
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(instance)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    let cmp = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    if n < m && n > 0 {
        order.select_nth_unstable_by(n - 1, cmp);
    }
    order.truncate(n);
    order.sort_unstable_by(cmp);
    let selected = order.iter().map(|&i| distances[i]).collect();
    Ok((order, selected))
}

/// `exp(-d)` for every distance.
pub fn kernel_weights(distances: &[f64]) -> Result<Vec<f64>> {
    distances
        .iter()
        .map(|&d| {
            if d >= 0.0 && d.is_finite() {
                Ok((-d).exp())
            } else {
                Err(Error::NegativeDistance(d))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSample {
    /// `n x K`, scaled space.
    pub points: Array2<f64>,
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row of the sampled pool each point came from.
    pub source_indices: Vec<usize>,
    /// False when sampled with [`CategoricalMode::LiteralPaper`].
    pub canonical: bool,
}

impl NeighborhoodSample {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Debug dump: `source_index,distance,weight,<feature columns...>`.
    pub fn write_csv<W: Write>(&self, out: W, column_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["source_index".to_string(), "distance".into(), "weight".into()];
        header.extend(column_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let mut rec = vec![
                self.source_indices[i].to_string(),
                self.distances[i].to_string(),
                self.weights[i].to_string(),
            ];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<neighborhood csv>", e))?;
        Ok(())
    }
}

/// Everything the samplers need from training time.
#[derive(Debug, Clone, Copy)]
pub struct SamplingContext<'a> {
    pub stats: &'a TrainingStats,
    pub scaler: &'a Scaler,
}

/// Pool of `m` Gaussian points, scaled, embedded, nearest `n` to the
/// instance in latent space kept, weighted by `exp(-d)`.
pub fn alime_neighborhood(
    ctx: SamplingContext<'_>,
    autoencoder: &DenoisingAutoencoder,
    x_scaled: &[f64],
    cfg: &PerturbationConfig,
) -> Result<NeighborhoodSample> {
    cfg.validate()?;
    let raw = gaussian_sample(ctx.stats, cfg.m, cfg.categorical_mode, cfg.seed)?;
    let pool = ctx.scaler.transform(&raw)?;
    let latents = autoencoder.encode_batch(&pool)?;
    let instance = autoencoder.encode(x_scaled)?;
    let (source_indices, distances) = select_nearest(&latents, &instance, cfg.n)?;
    let weights = kernel_weights(&distances)?;
    Ok(NeighborhoodSample {
        points: pool.select(Axis(0), &source_indices),
        distances,
        weights,
        source_indices,
        canonical: cfg.categorical_mode == CategoricalMode::Frequency,
    })
}

/// Default LIME kernel width, `0.75 * sqrt(K)`.
pub fn default_kernel_width(k: usize) -> f64 {
    0.75 * (k as f64).sqrt()
}

/// `n` Gaussian points drawn directly around the instance (numeric columns
/// centred on it with training variance, one-hot groups per `mode`),
/// weighted by `exp(-d^2 / width^2)` on feature-space distance.
pub fn lime_neighborhood(
    ctx: SamplingContext<'_>,
    x_scaled: &[f64],
    n: usize,
    kernel_width: f64,
    mode: CategoricalMode,
    seed: u64,
) -> Result<NeighborhoodSample> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if !(kernel_width > 0.0) {
        return Err(Error::InvalidConfig(format!("kernel width {kernel_width} must be positive")));
    }
    let centre = ctx.scaler.inverse_transform_row(x_scaled)?;
    if centre.len() != ctx.stats.n_columns() {
        return Err(Error::DimensionMismatch {
            expected: ctx.stats.n_columns(),
            found: centre.len(),
        });
    }
    let raw = gaussian_rows(ctx.stats, Some(&centre), n, mode, seed)?;
    let points = ctx.scaler.transform(&raw)?;
    let distances: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(x_scaled)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let weights = distances
        .iter()
        .map(|d| (-(d * d) / (kernel_width * kernel_width)).exp())
        .collect();
    Ok(NeighborhoodSample {
        points,
        distances,
        weights,
        source_indices: (0..n).collect(),
        canonical: mode == CategoricalMode::Frequency,
    })
}
