//! Dense feed-forward networks trained with Adam: the black-box classifier
//! and the denoising autoencoder whose encoder defines latent distances.
//!
//! Forward passes accumulate every output in a fixed input order, so a row's
//! result never depends on which batch it was evaluated in.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Mean binary cross-entropy on a sigmoid output.
    Bce,
    /// Mean squared error over all output cells.
    Mse,
}

/// One fully connected layer. `weights` is `fan_in x fan_out`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    fn glorot(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Dense {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
        Dense {
            weights: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    /// `x W + b`, one row at a time.
    fn affine(&self, x: &Array2<f64>) -> Array2<f64> {
        let fan_out = self.fan_out();
        let w = self.weights.as_standard_layout();
        let w = w.as_slice().expect("standard layout");
        let bias = self.bias.to_vec();
        let mut out = Array2::zeros((x.nrows(), fan_out));
        for (xr, mut orow) in x.rows().into_iter().zip(out.rows_mut()) {
            let orow = orow.as_slice_mut().expect("fresh array is contiguous");
            orow.copy_from_slice(&bias);
            for (i, &xi) in xr.iter().enumerate() {
                let wrow = &w[i * fan_out..(i + 1) * fan_out];
                for (acc, &wv) in orow.iter_mut().zip(wrow) {
                    *acc += xi * wv;
                }
            }
        }
        out
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Gradient of a scalar loss with respect to every layer's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

struct Cache {
    /// inputs[l] is the input to layer l; inputs[L] is the network output.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

impl Network {
    pub fn new(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Network> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "{} layer sizes need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &act)| Dense::glorot(d[0], d[1], act, &mut rng))
            .collect();
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_layers(x, self.layers.len())
    }

    /// Output of the first `depth` layers.
    pub fn forward_layers(&self, x: &Array2<f64>, depth: usize) -> Array2<f64> {
        let mut a = x.clone();
        for layer in &self.layers[..depth] {
            let act = layer.activation;
            a = layer.affine(&a);
            a.mapv_inplace(|z| act.apply(z));
        }
        a
    }

    fn forward_cached(&self, x: &Array2<f64>) -> Cache {
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.affine(inputs.last().expect("non-empty"));
            let act = layer.activation;
            inputs.push(z.mapv(|v| act.apply(v)));
            pre.push(z);
        }
        Cache { inputs, pre }
    }

    /// Mean loss over the batch.
    pub fn loss(&self, x: &Array2<f64>, target: &Array2<f64>, loss: Loss) -> f64 {
        match loss {
            Loss::Bce => {
                let depth = self.layers.len();
                let z = self.layers[depth - 1].affine(&self.forward_layers(x, depth - 1));
                bce_from_logits(&z, target)
            }
            Loss::Mse => {
                let out = self.forward(x);
                (&out - target).mapv(|d| d * d).mean().unwrap_or(0.0)
            }
        }
    }

    /// Mean loss and its gradient by backpropagation.
    pub fn loss_and_gradients(&self, x: &Array2<f64>, target: &Array2<f64>, loss: Loss) -> (f64, Gradients) {
        let cache = self.forward_cached(x);
        let batch = x.nrows() as f64;
        let last = self.layers.len() - 1;
        let out = &cache.inputs[last + 1];
        let z_out = &cache.pre[last];
        let (value, mut delta) = match loss {
            Loss::Bce => {
                let value = bce_from_logits(z_out, target);
                let delta = if self.layers[last].activation == Activation::Sigmoid {
                    (out - target) / batch
                } else {
                    // generic chain rule through the output activation
                    let mut d = Array2::zeros(out.dim());
                    ndarray::Zip::from(&mut d)
                        .and(out)
                        .and(z_out)
                        .and(target)
                        .for_each(|d, &a, &z, &t| {
                            let a = a.clamp(1e-12, 1.0 - 1e-12);
                            *d = (a - t) / (a * (1.0 - a)) / batch
                                * self.layers[last].activation.derivative(z, a);
                        });
                    d
                };
                (value, delta)
            }
            Loss::Mse => {
                let diff = out - target;
                let value = diff.mapv(|d| d * d).mean().unwrap_or(0.0);
                let scale = 2.0 / out.len() as f64;
                let act = self.layers[last].activation;
                let mut d = diff * scale;
                ndarray::Zip::from(&mut d)
                    .and(z_out)
                    .and(out)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                (value, d)
            }
        };

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            grads.push((dw, db));
            if l > 0 {
                let mut dx = delta.dot(&self.layers[l].weights.t());
                let act = self.layers[l - 1].activation;
                ndarray::Zip::from(&mut dx)
                    .and(&cache.pre[l - 1])
                    .and(&cache.inputs[l])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                delta = dx;
            }
        }
        grads.reverse();
        (value, Gradients { layers: grads })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn bce_from_logits(z: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let total: f64 = z
        .iter()
        .zip(target.iter())
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum();
    total / z.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    fn new(net: &Network, cfg: AdamConfig) -> Adam {
        let zeros: Vec<_> = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
            .collect();
        Adam {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let g = gw.iter().chain(gb.iter());
            let m = mw.iter_mut().chain(mb.iter_mut());
            let v = vw.iter_mut().chain(vb.iter_mut());
            for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 150,
            patience: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs, patience and batch_size must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_validation_loss(&self) -> f64 {
        self.epochs[self.best_epoch].validation_loss
    }

    /// Running minimum of the validation loss, one value per epoch.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .scan(f64::INFINITY, |best, e| {
                *best = best.min(e.validation_loss);
                Some(*best)
            })
            .collect()
    }
}

struct TrainData<'a> {
    x: &'a Array2<f64>,
    y: &'a Array2<f64>,
    x_val: &'a Array2<f64>,
    y_val: &'a Array2<f64>,
}

/// Mini-batch Adam with early stopping on validation loss; restores the
/// parameters of the best validation epoch.
fn train_network(
    net: &mut Network,
    data: TrainData<'_>,
    loss: Loss,
    cfg: &TrainConfig,
    input_noise: f64,
) -> Result<TrainHistory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_7a1e);
    let noise = Normal::new(0.0, input_noise.max(0.0))
        .map_err(|e| Error::InvalidConfig(format!("noise std: {e}")))?;
    let mut adam = Adam::new(net, cfg.adam);
    let mut order: Vec<usize> = (0..data.x.nrows()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut xb = data.x.select(Axis(0), batch);
            let yb = data.y.select(Axis(0), batch);
            if input_noise > 0.0 {
                xb.mapv_inplace(|v| v + noise.sample(&mut rng));
            }
            let (value, grads) = net.loss_and_gradients(&xb, &yb, loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.update(net, &grads);
        }
        let train_loss = net.loss(data.x, data.y, loss);
        let validation_loss = net.loss(data.x_val, data.y_val, loss);
        if !train_loss.is_finite() || !validation_loss.is_finite() || !net.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best = net.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    *net = best;
    Ok(history)
}

fn label_column(labels: &[u8]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), 1), |(i, _)| f64::from(labels[i]))
}

fn check_rows(x: &Array2<f64>, labels: &[u8]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::NonBinaryLabel {
            row: labels.iter().position(|&l| l == bad).unwrap_or(0),
            value: bad.to_string(),
        });
    }
    Ok(())
}

/// Two-hidden-layer classifier `K -> h1 -> h2 -> 1` with rectifier hidden
/// units and a sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    pub network: Network,
    pub config: TrainConfig,
}

impl MlpClassifier {
    pub fn new(input_dim: usize, hidden: (usize, usize), seed: u64) -> Result<MlpClassifier> {
        let network = Network::new(
            &[input_dim, hidden.0, hidden.1, 1],
            &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
            seed,
        )?;
        Ok(MlpClassifier {
            network,
            config: TrainConfig::default().with_seed(seed),
        })
    }

    pub fn fit(
        x: &Array2<f64>,
        y: &[u8],
        x_val: &Array2<f64>,
        y_val: &[u8],
        hidden: (usize, usize),
        cfg: &TrainConfig,
    ) -> Result<(MlpClassifier, TrainHistory)> {
        check_rows(x, y)?;
        check_rows(x_val, y_val)?;
        if x_val.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: x_val.ncols(),
            });
        }
        let mut model = MlpClassifier::new(x.ncols(), hidden, cfg.seed)?;
        model.config = *cfg;
        let (t, tv) = (label_column(y), label_column(y_val));
        let data = TrainData {
            x,
            y: &t,
            x_val,
            y_val: &tv,
        };
        let history = train_network(&mut model.network, data, Loss::Bce, cfg, 0.0)?;
        Ok((model, history))
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn hidden(&self) -> (usize, usize) {
        let d = self.network.dims();
        (d[1], d[2])
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.network.forward(&row)[[0, 0]])
    }

    pub fn predict_proba_batch(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(self.network.forward(x).column(0).to_vec())
    }

    pub fn accuracy(&self, x: &Array2<f64>, y: &[u8]) -> Result<f64> {
        let p = self.predict_proba_batch(x)?;
        let hits = p
            .iter()
            .zip(y)
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        Ok(hits as f64 / y.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Pick per-fold architecture and best fold by validation accuracy.
    #[default]
    Validation,
    /// Pick them by accuracy on the held-out fold itself (optimistic).
    TestFold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    pub neurons: Vec<usize>,
    pub folds: usize,
    pub validation_fraction: f64,
    pub selection: Selection,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            neurons: (1..=7).map(|i| 5 * i).collect(),
            folds: 10,
            validation_fraction: 0.1,
            selection: Selection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hidden: (usize, usize),
    pub mean_validation_accuracy: f64,
    pub mean_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub hidden: (usize, usize),
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub best_hidden: (usize, usize),
    pub best_fold: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub table: Vec<GridCell>,
    pub selection: Selection,
}

impl GridSearchReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.test_accuracy).collect()
    }
}

/// K-fold cross-validated grid search over the two hidden-layer widths.
///
/// Each fold's training part is split again into train/validation for early
/// stopping. Every fold picks its best width pair, the fold accuracy is that
/// pair's accuracy on the held-out fold, and the reported accuracy is the
/// mean over folds. The winning pair comes from the best fold.
pub fn grid_search_cv(
    x: &Array2<f64>,
    y: &[u8],
    grid: &GridSearchConfig,
    cfg: &TrainConfig,
) -> Result<GridSearchReport> {
    if grid.neurons.is_empty() {
        return Err(Error::InvalidConfig("empty neuron grid".into()));
    }
    let pairs: Vec<(usize, usize)> = grid
        .neurons
        .iter()
        .flat_map(|&a| grid.neurons.iter().map(move |&b| (a, b)))
        .collect();
    search_pairs(x, y, &pairs, grid, cfg)
}

/// Same protocol as [`grid_search_cv`] for a single fixed architecture;
/// `grid.neurons` is ignored.
pub fn cross_validate_pair(
    x: &Array2<f64>,
    y: &[u8],
    hidden: (usize, usize),
    grid: &GridSearchConfig,
    cfg: &TrainConfig,
) -> Result<GridSearchReport> {
    search_pairs(x, y, &[hidden], grid, cfg)
}

fn search_pairs(
    x: &Array2<f64>,
    y: &[u8],
    pairs: &[(usize, usize)],
    grid: &GridSearchConfig,
    cfg: &TrainConfig,
) -> Result<GridSearchReport> {
    check_rows(x, y)?;
    if grid.folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let bounds: Vec<usize> = (0..=grid.folds).map(|f| f * n / grid.folds).collect();

    struct FoldData {
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    }
    let mut folds = Vec::with_capacity(grid.folds);
    for f in 0..grid.folds {
        let test = order[bounds[f]..bounds[f + 1]].to_vec();
        let mut rest: Vec<usize> = order[..bounds[f]]
            .iter()
            .chain(&order[bounds[f + 1]..])
            .copied()
            .collect();
        let n_val = ((rest.len() as f64) * grid.validation_fraction).ceil() as usize;
        if test.len() < 2 || rest.len() < 2 || n_val == 0 || n_val >= rest.len() {
            return Err(Error::FoldTooSmall {
                fold: f,
                size: test.len().min(rest.len()),
            });
        }
        let val = rest.split_off(rest.len() - n_val);
        folds.push(FoldData {
            train: rest,
            val,
            test,
        });
    }

    let jobs: Vec<(usize, usize)> = (0..grid.folds)
        .flat_map(|f| (0..pairs.len()).map(move |p| (f, p)))
        .collect();
    let scores: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(f, p)| {
            let fd = &folds[f];
            let pick = |idx: &[usize]| {
                (
                    x.select(Axis(0), idx),
                    idx.iter().map(|&i| y[i]).collect::<Vec<u8>>(),
                )
            };
            let (xt, yt) = pick(&fd.train);
            let (xv, yv) = pick(&fd.val);
            let (xs, ys) = pick(&fd.test);
            let seed = cfg.seed.wrapping_add((f * pairs.len() + p) as u64 + 1);
            let (model, _) = MlpClassifier::fit(&xt, &yt, &xv, &yv, pairs[p], &cfg.with_seed(seed))?;
            Ok((model.accuracy(&xv, &yv)?, model.accuracy(&xs, &ys)?))
        })
        .collect::<Result<_>>()?;

    let score = |f: usize, p: usize| scores[f * pairs.len() + p];
    let key = |s: (f64, f64)| match grid.selection {
        Selection::Validation => s.0,
        Selection::TestFold => s.1,
    };
    let mut fold_results = Vec::with_capacity(grid.folds);
    for f in 0..grid.folds {
        // first maximum wins
        let best = (0..pairs.len()).fold(0, |b, p| if key(score(f, p)) > key(score(f, b)) { p } else { b });
        let (va, ta) = score(f, best);
        fold_results.push(FoldResult {
            fold: f,
            hidden: pairs[best],
            validation_accuracy: va,
            test_accuracy: ta,
        });
    }
    let fold_key = |r: &FoldResult| match grid.selection {
        Selection::Validation => r.validation_accuracy,
        Selection::TestFold => r.test_accuracy,
    };
    let best_fold = (0..grid.folds).fold(0, |b, f| {
        if fold_key(&fold_results[f]) > fold_key(&fold_results[b]) {
            f
        } else {
            b
        }
    });
    let mean_accuracy = fold_results.iter().map(|r| r.test_accuracy).sum::<f64>() / grid.folds as f64;
    let table = pairs
        .iter()
        .enumerate()
        .map(|(p, &hidden)| {
            let (sv, st) = (0..grid.folds).fold((0.0, 0.0), |(a, b), f| {
                let s = score(f, p);
                (a + s.0, b + s.1)
            });
            GridCell {
                hidden,
                mean_validation_accuracy: sv / grid.folds as f64,
                mean_test_accuracy: st / grid.folds as f64,
            }
        })
        .collect();
    Ok(GridSearchReport {
        best_hidden: fold_results[best_fold].hidden,
        best_fold,
        folds: fold_results,
        mean_accuracy,
        table,
        selection: grid.selection,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    /// Defaults to `min(8, K)`.
    pub latent_dim: Option<usize>,
    /// Defaults to `max(4, ceil(K / 2))`.
    pub hidden_dim: Option<usize>,
    pub noise_std: f64,
    pub holdout_fraction: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            latent_dim: None,
            hidden_dim: None,
            noise_std: 0.1,
            holdout_fraction: 0.1,
        }
    }
}

impl AutoencoderConfig {
    pub fn resolved_latent(&self, k: usize) -> usize {
        self.latent_dim.unwrap_or_else(|| k.min(8))
    }

    pub fn resolved_hidden(&self, k: usize) -> usize {
        self.hidden_dim.unwrap_or_else(|| 4.max(k.div_ceil(2)))
    }
}

/// Symmetric `K -> hidden -> latent -> hidden -> K` autoencoder. Training
/// corrupts inputs with Gaussian noise; encoding never does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoisingAutoencoder {
    pub network: Network,
    pub latent_dim: usize,
    pub noise_std: f64,
    pub config: TrainConfig,
}

impl DenoisingAutoencoder {
    const ENCODER_DEPTH: usize = 2;

    pub fn new(input_dim: usize, hidden: usize, latent_dim: usize, noise_std: f64, seed: u64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be at least 1".into()));
        }
        let network = Network::new(
            &[input_dim, hidden, latent_dim, hidden, input_dim],
            &[
                Activation::Relu,
                Activation::Identity,
                Activation::Relu,
                Activation::Identity,
            ],
            seed,
        )?;
        Ok(DenoisingAutoencoder {
            network,
            latent_dim,
            noise_std,
            config: TrainConfig::default().with_seed(seed),
        })
    }

    /// Holds out the last `holdout_fraction` of a seeded permutation for
    /// early stopping on clean reconstruction loss.
    pub fn fit(x: &Array2<f64>, ae: &AutoencoderConfig, cfg: &TrainConfig) -> Result<(Self, TrainHistory)> {
        if x.nrows() < 2 {
            return Err(Error::EmptyMatrix);
        }
        if !(ae.noise_std >= 0.0 && ae.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std {} must be >= 0", ae.noise_std)));
        }
        let k = x.ncols();
        let mut model = DenoisingAutoencoder::new(
            k,
            ae.resolved_hidden(k),
            ae.resolved_latent(k),
            ae.noise_std,
            cfg.seed,
        )?;
        model.config = *cfg;
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let n_hold = ((x.nrows() as f64) * ae.holdout_fraction).ceil().max(1.0) as usize;
        let n_hold = n_hold.min(x.nrows() - 1);
        let hold = order.split_off(x.nrows() - n_hold);
        let xt = x.select(Axis(0), &order);
        let xv = x.select(Axis(0), &hold);
        let data = TrainData {
            x: &xt,
            y: &xt,
            x_val: &xv,
            y_val: &xv,
        };
        let history = train_network(&mut model.network, data, Loss::Mse, cfg, ae.noise_std)?;
        Ok((model, history))
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        Ok(self.encode_batch(&row)?.row(0).to_vec())
    }

    pub fn encode_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(self.network.forward_layers(x, Self::ENCODER_DEPTH))
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(self.network.forward(x))
    }

    /// Mean squared reconstruction error per cell.
    pub fn reconstruction_mse(&self, x: &Array2<f64>) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok((&r - x).mapv(|d| d * d).mean().unwrap_or(0.0))
    }
}

/// Euclidean distance between two latent vectors.
pub fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
