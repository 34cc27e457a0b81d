//! Local fidelity and Jaccard stability of explanations, single-shot and
//! swept over neighborhood sizes.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{Explainer, Method, Payload};
use crate::surrogate::{top_bottom_quartile, QuartileBase};

/// Tag recorded in stability reports: sums over ordered pairs `i != j`,
/// divided by `T (T - 1)`.
pub const STABILITY_FORMULA: &str = "ordered-pairs/T(T-1)";

pub type FeatureSet = BTreeSet<usize>;

/// `|a ∩ b| / |a ∪ b|`; two empty sets score 1.
pub fn jaccard(a: &FeatureSet, b: &FeatureSet) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Mean Jaccard similarity over all ordered pairs of distinct runs.
pub fn pairwise_stability(sets: &[FeatureSet]) -> Result<f64> {
    let t = sets.len();
    if t < 2 {
        return Err(Error::TooFewRuns(t));
    }
    let mut total = 0.0;
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            if i != j {
                total += jaccard(a, b);
            }
        }
    }
    Ok(total / (t * (t - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearStability {
    pub positive: f64,
    pub negative: f64,
    pub combined: f64,
}

pub fn linear_stability(runs: &[(FeatureSet, FeatureSet)]) -> Result<LinearStability> {
    let pos: Vec<FeatureSet> = runs.iter().map(|(p, _)| p.clone()).collect();
    let neg: Vec<FeatureSet> = runs.iter().map(|(_, n)| n.clone()).collect();
    let positive = pairwise_stability(&pos)?;
    let negative = pairwise_stability(&neg)?;
    Ok(LinearStability {
        positive,
        negative,
        combined: (positive + negative) / 2.0,
    })
}

pub fn tree_stability(runs: &[FeatureSet]) -> Result<f64> {
    pairwise_stability(runs)
}

/// Fraction of positions where both probabilities fall on the same side of
/// `threshold` (`p < threshold` is class 0).
pub fn agreement_rate(black_box: &[f64], surrogate: &[f64], threshold: f64) -> f64 {
    if black_box.is_empty() {
        return 0.0;
    }
    let hits = black_box
        .iter()
        .zip(surrogate)
        .filter(|(&a, &b)| (a >= threshold) == (b >= threshold))
        .count();
    hits as f64 / black_box.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub method: Method,
    pub n: usize,
    pub accuracy: f64,
    pub agreements: usize,
    pub points: usize,
    /// Points whose neighborhood was single-class (still counted).
    pub single_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub base_seed: u64,
    pub instance_ids: Vec<usize>,
    pub entries: Vec<FidelityEntry>,
}

/// A test point and the identifier its seed is derived from.
pub type TestPoint = (usize, Vec<f64>);

/// For each test point, explain it (seed `base_seed + id`) and check whether
/// the surrogate and the black box put the point in the same class.
pub fn local_fidelity(
    explainer: &Explainer<'_>,
    methods: &[Method],
    points: &[TestPoint],
    n: usize,
    base_seed: u64,
) -> Result<Vec<FidelityEntry>> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("fidelity needs at least one test point".into()));
    }
    let local = Explainer::new(explainer.models, explainer.config.with_n(n))?;
    let threshold = local.config.threshold;
    let per_point: Vec<Vec<(f64, f64, bool)>> = points
        .par_iter()
        .map(|(id, x)| {
            let seed = base_seed.wrapping_add(*id as u64);
            let explanations = local.explain_methods(methods, x, Some(*id), seed)?;
            Ok(explanations
                .iter()
                .map(|e| {
                    (
                        e.black_box_probability,
                        e.surrogate_probability,
                        e.is_flagged(crate::explain::Flag::SingleClass),
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let bb: Vec<f64> = per_point.iter().map(|r| r[k].0).collect();
            let sur: Vec<f64> = per_point.iter().map(|r| r[k].1).collect();
            let accuracy = agreement_rate(&bb, &sur, threshold);
            FidelityEntry {
                method,
                n,
                accuracy,
                agreements: (accuracy * points.len() as f64).round() as usize,
                points: points.len(),
                single_class: per_point.iter().filter(|r| r[k].2).count(),
            }
        })
        .collect())
}

fn check_grid(n_grid: &[usize], m: usize) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::InvalidConfig("empty n grid".into()));
    }
    match n_grid.iter().find(|&&n| n > m || n == 0) {
        Some(&n) if n == 0 => Err(Error::InvalidConfig("n must be at least 1".into())),
        Some(&n) => Err(Error::GridExceedsPool { n, m }),
        None => Ok(()),
    }
}

/// `100, 200, ..., 2000`.
pub fn default_n_grid() -> Vec<usize> {
    (1..=20).map(|i| i * 100).collect()
}

pub fn fidelity_sweep(
    explainer: &Explainer<'_>,
    methods: &[Method],
    points: &[TestPoint],
    n_grid: &[usize],
    base_seed: u64,
) -> Result<FidelityReport> {
    check_grid(n_grid, explainer.config.perturbation.m)?;
    let mut entries = Vec::new();
    for &n in n_grid {
        entries.extend(local_fidelity(explainer, methods, points, n, base_seed)?);
    }
    Ok(FidelityReport {
        base_seed,
        instance_ids: points.iter().map(|(id, _)| *id).collect(),
        entries,
    })
}

impl FidelityReport {
    pub fn value(&self, method: Method, n: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.n == n)
            .map(|e| e.accuracy)
    }

    pub fn n_values(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.entries.iter().map(|e| e.n).collect();
        ns.dedup();
        ns
    }

    /// `n,linear_value,tree_value`; absent methods leave the cell empty.
    pub fn write_csv<W: Write>(&self, out: W, linear: Method) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "linear_value", "tree_value"])?;
        for n in self.n_values() {
            let cell = |m| self.value(m, n).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([n.to_string(), cell(linear), cell(Method::TreeAlime)])?;
        }
        w.flush().map_err(|e| Error::io("<fidelity csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunFeatures {
    Linear {
        seed: u64,
        positive: Vec<usize>,
        negative: Vec<usize>,
    },
    Tree {
        seed: u64,
        used: Vec<usize>,
    },
}

impl RunFeatures {
    pub fn feature_count(&self) -> usize {
        match self {
            RunFeatures::Linear { positive, negative, .. } => positive.len() + negative.len(),
            RunFeatures::Tree { used, .. } => used.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub instance_id: Option<usize>,
    pub method: Method,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunFeatures>,
    pub score: f64,
    /// Linear methods only.
    pub positive_score: Option<f64>,
    pub negative_score: Option<f64>,
    pub mean_feature_count: f64,
    pub formula: String,
}

impl StabilityReport {
    pub fn run_count(&self) -> usize {
        self.runs.len()
    }
}

fn features_of(payload: &Payload, seed: u64, base: QuartileBase) -> RunFeatures {
    match payload {
        Payload::Linear(lin) => {
            let (positive, negative) = top_bottom_quartile(&lin.coefficients, base);
            RunFeatures::Linear {
                seed,
                positive,
                negative,
            }
        }
        Payload::Tree(tree) => RunFeatures::Tree {
            seed,
            used: tree
                .feature_importances()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(j, _)| j)
                .collect(),
        },
    }
}

fn summarize(
    method: Method,
    instance_id: Option<usize>,
    n: usize,
    seeds: Vec<u64>,
    runs: Vec<RunFeatures>,
) -> Result<StabilityReport> {
    let mean_feature_count = runs.iter().map(RunFeatures::feature_count).sum::<usize>() as f64 / runs.len().max(1) as f64;
    let (score, positive_score, negative_score) = if method.is_tree() {
        let sets: Vec<FeatureSet> = runs
            .iter()
            .map(|r| match r {
                RunFeatures::Tree { used, .. } => used.iter().copied().collect(),
                RunFeatures::Linear { .. } => FeatureSet::new(),
            })
            .collect();
        (tree_stability(&sets)?, None, None)
    } else {
        let sets: Vec<(FeatureSet, FeatureSet)> = runs
            .iter()
            .map(|r| match r {
                RunFeatures::Linear { positive, negative, .. } => {
                    (positive.iter().copied().collect(), negative.iter().copied().collect())
                }
                RunFeatures::Tree { .. } => Default::default(),
            })
            .collect();
        let s = linear_stability(&sets)?;
        (s.combined, Some(s.positive), Some(s.negative))
    };
    Ok(StabilityReport {
        instance_id,
        method,
        n,
        seeds,
        runs,
        score,
        positive_score,
        negative_score,
        mean_feature_count,
        formula: STABILITY_FORMULA.to_string(),
    })
}

/// Explains one instance `runs` times with seeds `base_seed + r`; trained
/// models stay fixed, only the perturbation seed changes.
pub fn stability_experiment(
    explainer: &Explainer<'_>,
    methods: &[Method],
    x_scaled: &[f64],
    instance_id: Option<usize>,
    runs: usize,
    base_seed: u64,
    base: QuartileBase,
) -> Result<Vec<StabilityReport>> {
    if runs < 2 {
        return Err(Error::TooFewRuns(runs));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let per_run: Vec<Vec<RunFeatures>> = seeds
        .par_iter()
        .map(|&seed| {
            let explanations = explainer.explain_methods(methods, x_scaled, instance_id, seed)?;
            Ok(explanations
                .iter()
                .map(|e| features_of(&e.payload, seed, base))
                .collect())
        })
        .collect::<Result<_>>()?;
    methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let runs = per_run.iter().map(|r| r[k].clone()).collect();
            summarize(method, instance_id, explainer.config.perturbation.n, seeds.clone(), runs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub instance_id: Option<usize>,
    pub base_seed: u64,
    pub reports: Vec<StabilityReport>,
}

pub fn stability_sweep(
    explainer: &Explainer<'_>,
    methods: &[Method],
    x_scaled: &[f64],
    instance_id: Option<usize>,
    n_grid: &[usize],
    runs: usize,
    base_seed: u64,
    base: QuartileBase,
) -> Result<StabilitySweep> {
    check_grid(n_grid, explainer.config.perturbation.m)?;
    let mut reports = Vec::new();
    for &n in n_grid {
        let local = Explainer::new(explainer.models, explainer.config.with_n(n))?;
        reports.extend(stability_experiment(&local, methods, x_scaled, instance_id, runs, base_seed, base)?);
    }
    Ok(StabilitySweep {
        instance_id,
        base_seed,
        reports,
    })
}

impl StabilitySweep {
    pub fn report(&self, method: Method, n: usize) -> Option<&StabilityReport> {
        self.reports.iter().find(|r| r.method == method && r.n == n)
    }

    /// `n,linear_stability,tree_stability,linear_mean_features,tree_mean_features`.
    pub fn write_csv<W: Write>(&self, out: W, linear: Method) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "linear_stability",
            "tree_stability",
            "linear_mean_features",
            "tree_mean_features",
        ])?;
        let mut ns: Vec<usize> = self.reports.iter().map(|r| r.n).collect();
        ns.dedup();
        for n in ns {
            let get = |m, f: fn(&StabilityReport) -> f64| self.report(m, n).map(|r| f(r).to_string()).unwrap_or_default();
            w.write_record([
                n.to_string(),
                get(linear, |r| r.score),
                get(Method::TreeAlime, |r| r.score),
                get(linear, |r| r.mean_feature_count),
                get(Method::TreeAlime, |r| r.mean_feature_count),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<stability csv>", e))?;
        Ok(())
    }
}
