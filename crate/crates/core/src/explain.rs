//! The three explainers end to end, plus explanation rendering.

use std::borrow::Cow;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{Error, Result};
use crate::neuralnet::{DenoisingAutoencoder, MlpClassifier};
use crate::sampler::{
    alime_neighborhood, default_kernel_width, lime_neighborhood, NeighborhoodSample, PerturbationConfig,
    SamplingContext, TrainingStats,
};
use crate::surrogate::{
    fit_cart, fit_logistic, threshold_labels, CartConfig, LinearSurrogate, LogisticConfig, Surrogate,
    TreeSurrogate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lime,
    Alime,
    TreeAlime,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lime, Method::Alime, Method::TreeAlime];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Alime => "alime",
            Method::TreeAlime => "tree-alime",
        }
    }

    pub fn is_tree(self) -> bool {
        self == Method::TreeAlime
    }

    pub fn needs_autoencoder(self) -> bool {
        self != Method::Lime
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}` (lime | alime | tree-alime)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub method: Method,
    pub perturbation: PerturbationConfig,
    pub logistic: LogisticConfig,
    pub cart: CartConfig,
    /// LIME kernel width; `None` means `0.75 * sqrt(K)`.
    pub kernel_width: Option<f64>,
    /// Add the explained instance itself to the neighborhood (weight 1).
    pub include_instance: bool,
    pub threshold: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            method: Method::TreeAlime,
            perturbation: PerturbationConfig::default(),
            logistic: LogisticConfig::default(),
            cart: CartConfig::default(),
            kernel_width: None,
            include_instance: false,
            threshold: 0.5,
        }
    }
}

impl ExplainerConfig {
    pub fn for_method(method: Method) -> Self {
        ExplainerConfig {
            method,
            ..ExplainerConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.perturbation.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.perturbation.n = n;
        self
    }
}

/// Trained artifacts shared read-only by every explanation.
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub blackbox: &'a MlpClassifier,
    pub autoencoder: Option<&'a DenoisingAutoencoder>,
    pub scaler: &'a Scaler,
    pub stats: &'a TrainingStats,
    pub feature_names: &'a [String],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// Black-box labels were constant over the neighborhood.
    SingleClass,
    /// Neighborhood drawn with literal-paper categorical sampling.
    NonCanonicalSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Linear(LinearSurrogate),
    Tree(TreeSurrogate),
}

impl Payload {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            Payload::Linear(s) => s.predict_proba(x),
            Payload::Tree(s) => s.predict_proba(x),
        }
    }

    pub fn probability(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            Payload::Linear(s) => s.probability(x),
            Payload::Tree(s) => s.probability(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: Method,
    pub instance_id: Option<usize>,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub black_box_probability: f64,
    pub surrogate_probability: f64,
    pub feature_names: Vec<String>,
    /// Scaled instance values.
    pub instance: Vec<f64>,
    pub payload: Payload,
    pub flags: Vec<Flag>,
    pub config: ExplainerConfig,
}

impl Explanation {
    pub fn is_flagged(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A neighborhood together with the black-box view of it, computed once so
/// every surrogate fitted on it sees the same labels.
#[derive(Debug, Clone)]
pub struct LabeledNeighborhood {
    pub sample: NeighborhoodSample,
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

pub struct Explainer<'a> {
    pub models: Models<'a>,
    pub config: ExplainerConfig,
}

impl<'a> Explainer<'a> {
    pub fn new(models: Models<'a>, config: ExplainerConfig) -> Result<Self> {
        if config.method.needs_autoencoder() && models.autoencoder.is_none() {
            return Err(Error::MissingAutoencoder(config.method.as_str()));
        }
        let k = models.blackbox.input_dim();
        for (what, got) in [
            ("scaler", models.scaler.n_columns()),
            ("training stats", models.stats.n_columns()),
            ("feature names", models.feature_names.len()),
        ] {
            if got != k {
                log::error!("{what} cover {got} columns, black box expects {k}");
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: got,
                });
            }
        }
        if !(config.threshold > 0.0 && config.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} must lie in (0, 1)",
                config.threshold
            )));
        }
        Ok(Explainer { models, config })
    }

    pub fn n_features(&self) -> usize {
        self.models.blackbox.input_dim()
    }

    fn sampling(&self) -> SamplingContext<'a> {
        SamplingContext {
            stats: self.models.stats,
            scaler: self.models.scaler,
        }
    }

    /// LIME's direct draw, or the ALIME pool-then-select neighborhood (shared
    /// by alime and tree-alime).
    pub fn neighborhood(&self, method: Method, x_scaled: &[f64], seed: u64) -> Result<NeighborhoodSample> {
        self.check_instance(x_scaled)?;
        let mut cfg = self.config.perturbation;
        cfg.seed = seed;
        let mut sample = match method {
            Method::Lime => {
                cfg.validate()?;
                let width = self
                    .config
                    .kernel_width
                    .unwrap_or_else(|| default_kernel_width(self.n_features()));
                lime_neighborhood(self.sampling(), x_scaled, cfg.n, width, cfg.categorical_mode, seed)?
            }
            Method::Alime | Method::TreeAlime => {
                let ae = self
                    .models
                    .autoencoder
                    .ok_or(Error::MissingAutoencoder(method.as_str()))?;
                alime_neighborhood(self.sampling(), ae, x_scaled, &cfg)?
            }
        };
        if self.config.include_instance {
            let row = ArrayView1::from(x_scaled).insert_axis(Axis(0));
            sample.points = concatenate(Axis(0), &[row, sample.points.view()]).expect("matching widths");
            sample.distances.insert(0, 0.0);
            sample.weights.insert(0, 1.0);
            sample.source_indices.insert(0, usize::MAX);
        }
        Ok(sample)
    }

    pub fn label(&self, sample: NeighborhoodSample) -> Result<LabeledNeighborhood> {
        let probabilities = self.models.blackbox.predict_proba_batch(&sample.points)?;
        let labels = threshold_labels(&probabilities, self.config.threshold);
        Ok(LabeledNeighborhood {
            sample,
            probabilities,
            labels,
        })
    }

    fn check_instance(&self, x_scaled: &[f64]) -> Result<()> {
        if x_scaled.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x_scaled.len(),
            });
        }
        if x_scaled.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// Kernel weights, or, when every one of them underflowed to zero, the same
    /// kernel taken relative to the nearest point. Both surrogates only see
    /// weights up to a common factor, so the fit is unchanged in exact
    /// arithmetic.
    fn fitting_weights<'s>(&self, method: Method, sample: &'s NeighborhoodSample) -> Cow<'s, [f64]> {
        if sample.weights.iter().sum::<f64>() > 0.0 {
            return Cow::Borrowed(&sample.weights);
        }
        let nearest = sample.distances.iter().copied().fold(f64::INFINITY, f64::min);
        log::warn!("all kernel weights underflowed (nearest distance {nearest:.1}); rescaling");
        let relative = match method {
            Method::Lime => {
                let width = self
                    .config
                    .kernel_width
                    .unwrap_or_else(|| default_kernel_width(self.n_features()));
                sample
                    .distances
                    .iter()
                    .map(|d| (-(d * d - nearest * nearest) / (width * width)).exp())
                    .collect()
            }
            Method::Alime | Method::TreeAlime => sample.distances.iter().map(|d| (nearest - d).exp()).collect(),
        };
        Cow::Owned(relative)
    }

    /// Fits the method's surrogate on an already labeled neighborhood.
    pub fn fit_surrogate(
        &self,
        method: Method,
        hood: &LabeledNeighborhood,
        x_scaled: &[f64],
        instance_id: Option<usize>,
        seed: u64,
    ) -> Result<Explanation> {
        let points = &hood.sample.points;
        let weights = self.fitting_weights(method, &hood.sample);
        let (payload, single_class) = if method.is_tree() {
            let tree = fit_cart(points, &hood.labels, &weights, &self.config.cart)?;
            let single = tree.nodes.len() == 1 && hood.labels.windows(2).all(|w| w[0] == w[1]);
            (Payload::Tree(tree), single)
        } else {
            let lin = fit_logistic(points, &hood.labels, &weights, &self.config.logistic)?;
            let single = lin.single_class;
            (Payload::Linear(lin), single)
        };
        let mut flags = Vec::new();
        if single_class {
            flags.push(Flag::SingleClass);
        }
        if !hood.sample.canonical {
            flags.push(Flag::NonCanonicalSampling);
        }
        let mut config = self.config;
        config.method = method;
        config.perturbation.seed = seed;
        Ok(Explanation {
            method,
            instance_id,
            n: self.config.perturbation.n,
            m: self.config.perturbation.m,
            seed,
            black_box_probability: self.models.blackbox.predict_proba(x_scaled)?,
            surrogate_probability: payload.predict_proba(x_scaled)?,
            feature_names: self.models.feature_names.to_vec(),
            instance: x_scaled.to_vec(),
            payload,
            flags,
            config,
        })
    }

    /// Explanation with the configured method and seed.
    pub fn explain(&self, x_scaled: &[f64], instance_id: Option<usize>) -> Result<Explanation> {
        let seed = self.config.perturbation.seed;
        let mut out = self.explain_methods(&[self.config.method], x_scaled, instance_id, seed)?;
        Ok(out.remove(0))
    }

    /// One explanation per method, in the order given. alime and tree-alime
    /// reuse a single neighborhood.
    pub fn explain_methods(
        &self,
        methods: &[Method],
        x_scaled: &[f64],
        instance_id: Option<usize>,
        seed: u64,
    ) -> Result<Vec<Explanation>> {
        let mut lime = None;
        let mut alime = None;
        methods
            .iter()
            .map(|&method| {
                let slot = if method == Method::Lime { &mut lime } else { &mut alime };
                if slot.is_none() {
                    let sample = self.neighborhood(method, x_scaled, seed)?;
                    *slot = Some(self.label(sample)?);
                }
                let hood = slot.as_ref().expect("filled above");
                self.fit_surrogate(method, hood, x_scaled, instance_id, seed)
            })
            .collect()
    }
}

pub fn explain_alime(models: Models<'_>, cfg: ExplainerConfig, x_scaled: &[f64]) -> Result<Explanation> {
    Explainer::new(models, ExplainerConfig { method: Method::Alime, ..cfg })?.explain(x_scaled, None)
}

pub fn explain_tree_alime(models: Models<'_>, cfg: ExplainerConfig, x_scaled: &[f64]) -> Result<Explanation> {
    Explainer::new(models, ExplainerConfig { method: Method::TreeAlime, ..cfg })?.explain(x_scaled, None)
}

pub fn explain_lime(models: Models<'_>, cfg: ExplainerConfig, x_scaled: &[f64]) -> Result<Explanation> {
    Explainer::new(models, ExplainerConfig { method: Method::Lime, ..cfg })?.explain(x_scaled, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedExplanation {
    pub text: String,
    /// Present for tree explanations.
    pub dot: Option<String>,
}

/// Strongest `top_k` positive and `top_k` negative coefficients, strongest
/// first, ties to the lower index.
pub fn top_coefficients(coefs: &[f64], top_k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut pos: Vec<usize> = (0..coefs.len()).filter(|&j| coefs[j] > 0.0).collect();
    let mut neg: Vec<usize> = (0..coefs.len()).filter(|&j| coefs[j] < 0.0).collect();
    pos.sort_by(|&a, &b| coefs[b].total_cmp(&coefs[a]).then(a.cmp(&b)));
    neg.sort_by(|&a, &b| coefs[a].total_cmp(&coefs[b]).then(a.cmp(&b)));
    pos.truncate(top_k);
    neg.truncate(top_k);
    (pos, neg)
}

pub fn render_explanation(e: &Explanation, top_k: usize) -> RenderedExplanation {
    let names = &e.feature_names;
    let mut text = String::new();
    let id = e.instance_id.map_or_else(|| "-".to_string(), |i| i.to_string());
    let _ = writeln!(text, "method: {}  instance: {id}  n: {}  m: {}  seed: {}", e.method, e.n, e.m, e.seed);
    let _ = writeln!(text, "black-box probability: {:.4}", e.black_box_probability);
    let _ = writeln!(text, "surrogate probability: {:.4}", e.surrogate_probability);
    for flag in &e.flags {
        let _ = writeln!(text, "flag: {}", serde_json::to_value(flag).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default());
    }
    let _ = writeln!(text, "\ninstance (scaled):");
    for (name, v) in names.iter().zip(&e.instance) {
        let _ = writeln!(text, "  {name:<32} {v:>10.4}");
    }
    let dot = match &e.payload {
        Payload::Linear(lin) => {
            let (pos, neg) = top_coefficients(&lin.coefficients, top_k);
            let _ = writeln!(text, "\npositive coefficients:");
            for j in pos {
                let _ = writeln!(text, "  {:<32} {:>+10.4}", names[j], lin.coefficients[j]);
            }
            let _ = writeln!(text, "negative coefficients:");
            for j in neg {
                let _ = writeln!(text, "  {:<32} {:>+10.4}", names[j], lin.coefficients[j]);
            }
            let _ = writeln!(text, "intercept: {:+.4}", lin.intercept);
            None
        }
        Payload::Tree(tree) => {
            let _ = writeln!(text, "\ndecision tree:");
            text.push_str(&tree.to_text(names));
            Some(tree.to_dot(names))
        }
    };
    RenderedExplanation { text, dot }
}

/// Row-by-row surrogate probabilities, mostly for diagnostics.
pub fn surrogate_probabilities(payload: &Payload, x: &Array2<f64>) -> Vec<f64> {
    x.rows().into_iter().map(|r| payload.probability(r)).collect()
}
