//! Locally interpretable models fitted on a weighted neighborhood: weighted
//! logistic regression and a weighted CART classification tree.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::sigmoid;

/// Hard 0/1 labels from black-box probabilities (`p >= threshold` is class 1).
pub fn threshold_labels(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= threshold)).collect()
}

pub trait Surrogate {
    fn n_features(&self) -> usize;

    fn probability(&self, x: ArrayView1<f64>) -> f64;

    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(self.probability(ArrayView1::from(x)))
    }
}

fn check_fit_inputs(x: &Array2<f64>, y: &[u8], w: &[f64]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if w.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: w.len(),
        });
    }
    if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig("sample weights must be finite and >= 0".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("sample weights sum to zero".into()));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub max_iter: usize,
    pub l2: f64,
    /// Stop once the Newton step is this small relative to the parameters.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iter: 150,
            l2: 1e-4,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Every neighborhood label was the same; the model is intercept-only.
    pub single_class: bool,
}

/// Logit used for intercept-only models: probability 1 - 1e-6 (or 1e-6).
const SINGLE_CLASS_LOGIT: f64 = 13.815_509_557_963_773;

impl Surrogate for LinearSurrogate {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn probability(&self, x: ArrayView1<f64>) -> f64 {
        let z: f64 = self.coefficients.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        sigmoid(z + self.intercept)
    }
}

impl LinearSurrogate {
    pub fn to_json(&self, names: &[String]) -> serde_json::Value {
        serde_json::json!({
            "intercept": self.intercept,
            "coefficients": self
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| serde_json::json!({
                    "feature": names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                    "coefficient": c,
                }))
                .collect::<Vec<_>>(),
        })
    }
}

struct LogisticProblem<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    /// Weights divided by their sum.
    w: Vec<f64>,
    l2: f64,
}

impl LogisticProblem<'_> {
    /// Solves `H d = -g` with the Hessian at `theta`, adding a growing ridge
    /// whenever the factorization fails.
    fn newton_direction(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let k = self.x.ncols();
        let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
        for (row, &w) in self.x.rows().into_iter().zip(&self.w) {
            if w == 0.0 {
                continue;
            }
            let z: f64 = row.iter().zip(&theta[..k]).map(|(a, c)| a * c).sum::<f64>() + theta[k];
            let p = sigmoid(z);
            let s = w * p * (1.0 - p);
            let xi: Vec<f64> = row.iter().copied().chain(std::iter::once(1.0)).collect();
            for a in 0..=k {
                let sa = s * xi[a];
                for b in 0..=a {
                    h[(a, b)] += sa * xi[b];
                }
            }
        }
        for a in 0..=k {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for a in 0..k {
            h[(a, a)] += self.l2;
        }
        let rhs = DVector::from_iterator(k + 1, grad.iter().map(|g| -g));
        let mut ridge = 0.0;
        loop {
            let mut m = h.clone();
            for a in 0..=k {
                m[(a, a)] += ridge;
            }
            if let Some(chol) = m.cholesky() {
                return chol.solve(&rhs).iter().copied().collect();
            }
            ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
        }
    }

    /// Objective and gradient at `theta = (coefficients..., intercept)`.
    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let k = self.x.ncols();
        let (beta, b) = theta.split_at(k);
        let mut grad = vec![0.0; k + 1];
        let mut value = 0.0;
        for ((row, &y), &w) in self.x.rows().into_iter().zip(self.y).zip(&self.w) {
            if w == 0.0 {
                continue;
            }
            let z: f64 = row.iter().zip(beta).map(|(a, c)| a * c).sum::<f64>() + b[0];
            let y = f64::from(y);
            value += w * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
            let r = w * (sigmoid(z) - y);
            for (g, a) in grad.iter_mut().zip(row.iter()) {
                *g += r * a;
            }
            grad[k] += r;
        }
        for (g, c) in grad.iter_mut().zip(beta) {
            *g += self.l2 * c;
        }
        value += 0.5 * self.l2 * beta.iter().map(|c| c * c).sum::<f64>();
        (value, grad)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient of the weighted logistic objective; exposed for gradient checks.
pub fn logistic_objective(
    x: &Array2<f64>,
    y: &[u8],
    w: &[f64],
    l2: f64,
    coefficients: &[f64],
    intercept: f64,
) -> Result<(f64, Vec<f64>)> {
    let total = check_fit_inputs(x, y, w)?;
    let problem = LogisticProblem {
        x,
        y,
        w: w.iter().map(|v| v / total).collect(),
        l2,
    };
    let mut theta = coefficients.to_vec();
    theta.push(intercept);
    Ok(problem.evaluate(&theta))
}

/// Minimizes `sum(w_i * bce_i) / sum(w) + l2/2 * |coefficients|^2` by
/// damped Newton steps (Armijo backtracking until the Newton decrement is
/// small, full steps after that).
pub fn fit_logistic(x: &Array2<f64>, y: &[u8], w: &[f64], cfg: &LogisticConfig) -> Result<LinearSurrogate> {
    let total = check_fit_inputs(x, y, w)?;
    let k = x.ncols();
    let active = || y.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(&y, _)| y);
    let first = active().next().unwrap_or(0);
    if active().all(|l| l == first) {
        log::warn!("single-class neighborhood; returning an intercept-only surrogate");
        return Ok(LinearSurrogate {
            coefficients: vec![0.0; k],
            intercept: if first == 1 {
                SINGLE_CLASS_LOGIT
            } else {
                -SINGLE_CLASS_LOGIT
            },
            iterations_used: 0,
            converged: true,
            single_class: true,
        });
    }
    let problem = LogisticProblem {
        x,
        y,
        w: w.iter().map(|v| v / total).collect(),
        l2: cfg.l2,
    };

    let mut theta = vec![0.0; k + 1];
    let (mut value, mut grad) = problem.evaluate(&theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let step = problem.newton_direction(&theta, &grad);
        let decrement: f64 = -grad.iter().zip(&step).map(|(g, d)| g * d).sum::<f64>();
        iterations += 1;
        if decrement < 1e-8 {
            // quadratic region: take the full step, no line search
            for (t, d) in theta.iter_mut().zip(&step) {
                *t += d;
            }
            (value, grad) = problem.evaluate(&theta);
            if max_abs(&step) <= cfg.tolerance * (1.0 + max_abs(&theta)) {
                converged = true;
                break;
            }
            continue;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(&step).map(|(p, d)| p + t * d).collect();
            let (v, g) = problem.evaluate(&candidate);
            if v <= value - 1e-4 * t * decrement {
                accepted = Some((candidate, v, g));
                break;
            }
            t *= 0.5;
        }
        let Some((next, v, g)) = accepted else { break };
        theta = next;
        value = v;
        grad = g;
    }
    log::trace!("logistic fit: {iterations} Newton steps, objective {value:.6e}");
    let intercept = theta.pop().unwrap_or(0.0);
    Ok(LinearSurrogate {
        coefficients: theta,
        intercept,
        iterations_used: iterations,
        converged,
        single_class: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    /// Defaults to `1e-6 * total weight`.
    pub min_leaf_weight: Option<f64>,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: Some(5),
            min_leaf_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted class-1 fraction of the samples reaching this node.
        probability: f64,
        weight: f64,
    },
    Leaf {
        probability: f64,
        weight: f64,
    },
}

impl Node {
    pub fn weight(&self) -> f64 {
        match *self {
            Node::Split { weight, .. } | Node::Leaf { weight, .. } => weight,
        }
    }

    pub fn probability(&self) -> f64 {
        match *self {
            Node::Split { probability, .. } | Node::Leaf { probability, .. } => probability,
        }
    }

    /// Weight times Gini impurity.
    fn impurity_mass(&self) -> f64 {
        let p = self.probability();
        self.weight() * 2.0 * p * (1.0 - p)
    }
}

/// Binary tree stored in pre-order; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSurrogate {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: Option<usize>,
}

impl Surrogate for TreeSurrogate {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn probability(&self, x: ArrayView1<f64>) -> f64 {
        self.nodes[self.leaf_index(x)].probability()
    }
}

impl TreeSurrogate {
    pub fn leaf_index(&self, x: ArrayView1<f64>) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }

    /// Features used by at least one split, ascending.
    pub fn split_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    /// Total weighted Gini decrease per feature, normalized to sum to 1
    /// (all zeros for a single leaf).
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature, left, right, ..
            } = *node
            {
                let gain = node.impurity_mass() - self.nodes[left].impurity_mass() - self.nodes[right].impurity_mass();
                imp[feature] += gain;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }

    /// Graphviz rendering. Internal nodes read `name ≤ threshold`, leaves
    /// `p=<fraction> w=<mass>`.
    pub fn to_dot(&self, names: &[String]) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    let _ = writeln!(
                        out,
                        "  n{i} [label=\"{} ≤ {threshold:.4}\"];",
                        escape(&feature_name(names, feature))
                    );
                    let _ = writeln!(out, "  n{i} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(out, "  n{i} -> n{right} [label=\"no\"];");
                }
                Node::Leaf { probability, weight } => {
                    let _ = writeln!(out, "  n{i} [label=\"p={probability:.4} w={weight:.4}\"];");
                }
            }
        }
        out.push_str("}\n");
        out
    }

    /// Indented if/else listing of the tree.
    pub fn to_text(&self, names: &[String]) -> String {
        fn walk(tree: &TreeSurrogate, names: &[String], i: usize, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match tree.nodes[i] {
                Node::Leaf { probability, weight } => {
                    let _ = writeln!(out, "{pad}-> p(class 1) = {probability:.4} (weight {weight:.4})");
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    let name = feature_name(names, feature);
                    let _ = writeln!(out, "{pad}if {name} <= {threshold:.4}:");
                    walk(tree, names, left, depth + 1, out);
                    let _ = writeln!(out, "{pad}else ({name} > {threshold:.4}):");
                    walk(tree, names, right, depth + 1, out);
                }
            }
        }
        let mut out = String::new();
        walk(self, names, 0, 0, &mut out);
        out
    }
}

fn feature_name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn gini_mass(weight: f64, positive: f64) -> f64 {
    if weight <= 0.0 {
        0.0
    } else {
        2.0 * positive * (weight - positive) / weight
    }
}

/// Relative tolerance for comparing split scores.
pub const SPLIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted Gini mass of the two children.
    pub score: f64,
}

/// Midpoint between consecutive distinct values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Picks the minimum-score candidate; any candidate within the tolerance of
/// the minimum ties, and ties go to the lowest feature then lowest threshold.
pub fn choose_split(candidates: &[SplitCandidate], node_weight: f64) -> Option<SplitCandidate> {
    let min = candidates.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let tol = SPLIT_TOLERANCE * node_weight;
    candidates
        .iter()
        .filter(|c| c.score <= min + tol)
        .min_by(|a, b| a.feature.cmp(&b.feature).then(a.threshold.total_cmp(&b.threshold)))
        .copied()
}

struct CartBuilder<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    w: &'a [f64],
    max_depth: Option<usize>,
    min_leaf: f64,
    nodes: Vec<Node>,
}

impl CartBuilder<'_> {
    fn candidates(&self, samples: &[usize]) -> Vec<SplitCandidate> {
        let (total, positive) = self.totals(samples);
        let mut out = Vec::new();
        let mut sorted = samples.to_vec();
        for f in 0..self.x.ncols() {
            sorted.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let (mut wl, mut pl) = (0.0, 0.0);
            for pair in sorted.windows(2) {
                let i = pair[0];
                wl += self.w[i];
                pl += self.w[i] * f64::from(self.y[i]);
                let (lo, hi) = (self.x[[i, f]], self.x[[pair[1], f]]);
                if lo >= hi {
                    continue;
                }
                let (wr, pr) = (total - wl, positive - pl);
                if wl < self.min_leaf || wr < self.min_leaf {
                    continue;
                }
                out.push(SplitCandidate {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    score: gini_mass(wl, pl) + gini_mass(wr, pr),
                });
            }
        }
        out
    }

    fn totals(&self, samples: &[usize]) -> (f64, f64) {
        samples.iter().fold((0.0, 0.0), |(w, p), &i| {
            (w + self.w[i], p + self.w[i] * f64::from(self.y[i]))
        })
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let (weight, positive) = self.totals(&samples);
        let probability = if weight > 0.0 { positive / weight } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { probability, weight });

        let pure = positive <= 0.0 || positive >= weight;
        let at_limit = self.max_depth.is_some_and(|d| depth >= d);
        if pure || at_limit {
            return id;
        }
        let Some(best) = choose_split(&self.candidates(&samples), weight) else {
            return id;
        };
        let decrease = gini_mass(weight, positive) - best.score;
        if decrease <= SPLIT_TOLERANCE * weight {
            return id;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x[[i, best.feature]] <= best.threshold);
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            probability,
            weight,
        };
        id
    }
}

/// Greedy weighted-Gini CART. Stops at purity, at `max_depth`, when no
/// split lowers impurity, or when every split would leave a child lighter
/// than `min_leaf_weight`.
pub fn fit_cart(x: &Array2<f64>, y: &[u8], w: &[f64], cfg: &CartConfig) -> Result<TreeSurrogate> {
    let total = check_fit_inputs(x, y, w)?;
    let mut builder = CartBuilder {
        x,
        y,
        w,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf_weight.unwrap_or(1e-6 * total),
        nodes: Vec::new(),
    };
    builder.grow((0..x.nrows()).collect(), 0);
    Ok(TreeSurrogate {
        nodes: builder.nodes,
        n_features: x.ncols(),
        max_depth: cfg.max_depth,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuartileBase {
    /// `k = max(1, floor(K / 4))` for both signs.
    #[default]
    AllFeatures,
    /// `k` computed separately from the count of positive and of negative
    /// coefficients.
    SignedSubset,
}

fn quarter(count: usize) -> usize {
    (count / 4).max(1)
}

/// Indices of the largest strictly positive and the most negative
/// coefficients, at most `k` of each, strongest first (ties to lower index).
pub fn top_bottom_quartile(coefs: &[f64], base: QuartileBase) -> (Vec<usize>, Vec<usize>) {
    let mut pos: Vec<usize> = (0..coefs.len()).filter(|&j| coefs[j] > 0.0).collect();
    let mut neg: Vec<usize> = (0..coefs.len()).filter(|&j| coefs[j] < 0.0).collect();
    let (kp, kn) = match base {
        QuartileBase::AllFeatures => (quarter(coefs.len()), quarter(coefs.len())),
        QuartileBase::SignedSubset => (quarter(pos.len()), quarter(neg.len())),
    };
    pos.sort_by(|&a, &b| coefs[b].total_cmp(&coefs[a]).then(a.cmp(&b)));
    neg.sort_by(|&a, &b| coefs[a].total_cmp(&coefs[b]).then(a.cmp(&b)));
    pos.truncate(kp);
    neg.truncate(kn);
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_pair_logistic() {
        let x = array![[-1.0], [1.0]];
        let s = fit_logistic(&x, &[0, 1], &[1.0, 1.0], &LogisticConfig::default()).unwrap();
        assert!(s.coefficients[0] > 0.0);
        assert!((s.predict_proba(&[0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(!s.single_class);
    }

    #[test]
    fn logistic_single_class_is_flagged() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let s = fit_logistic(&x, &[1, 1, 1], &[1.0, 0.5, 2.0], &LogisticConfig::default()).unwrap();
        assert!(s.single_class);
        assert_eq!(s.coefficients, vec![0.0, 0.0]);
        assert!(s.predict_proba(&[5.0, -3.0]).unwrap() > 0.5);
        let s = fit_logistic(&x, &[0, 0, 0], &[1.0; 3], &LogisticConfig::default()).unwrap();
        assert!(s.predict_proba(&[0.0, 0.0]).unwrap() < 0.5);
    }

    #[test]
    fn logistic_input_errors() {
        let x = array![[0.0], [1.0]];
        assert!(fit_logistic(&x, &[0], &[1.0, 1.0], &LogisticConfig::default()).is_err());
        assert!(fit_logistic(&x, &[0, 1], &[1.0, -1.0], &LogisticConfig::default()).is_err());
        assert!(fit_logistic(&x, &[0, 1], &[0.0, 0.0], &LogisticConfig::default()).is_err());
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let s = LinearSurrogate {
            coefficients: vec![0.0; 3],
            intercept: 0.0,
            iterations_used: 0,
            converged: true,
            single_class: false,
        };
        assert_eq!(s.predict_proba(&[4.0, -1.0, 9.0]).unwrap(), 0.5);
        assert!(matches!(s.predict_proba(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn two_point_tree() {
        let x = array![[0.0], [1.0]];
        let cfg = CartConfig {
            max_depth: Some(1),
            ..CartConfig::default()
        };
        let t = fit_cart(&x, &[0, 1], &[1.0, 1.0], &cfg).unwrap();
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict_proba(&[0.0]).unwrap(), 0.0);
        assert_eq!(t.predict_proba(&[1.0]).unwrap(), 1.0);
        // boundary goes left
        assert_eq!(t.predict_proba(&[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn depth_zero_weighted_leaf() {
        let x = array![[0.0], [0.0], [1.0]];
        let cfg = CartConfig {
            max_depth: Some(0),
            ..CartConfig::default()
        };
        let t = fit_cart(&x, &[0, 1, 1], &[1.0, 3.0, 1.0], &cfg).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict_proba(&[7.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(t.feature_importances(), vec![0.0]);
    }

    #[test]
    fn single_point_is_single_leaf() {
        let t = fit_cart(&array![[3.0, 4.0]], &[1], &[0.2], &CartConfig::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn importance_concentrates_on_split_feature() {
        // only feature 2 separates the classes
        let x = array![
            [0.0, 1.0, -1.0],
            [0.0, 1.0, -2.0],
            [0.0, 1.0, 3.0],
            [0.0, 1.0, 4.0]
        ];
        let t = fit_cart(&x, &[0, 0, 1, 1], &[1.0; 4], &CartConfig::default()).unwrap();
        assert_eq!(t.feature_importances(), vec![0.0, 0.0, 1.0]);
        assert_eq!(t.split_features(), vec![2]);
    }

    #[test]
    fn dot_and_text_rendering() {
        let x = array![[0.0], [1.0]];
        let t = fit_cart(&x, &[0, 1], &[1.0, 1.0], &CartConfig::default()).unwrap();
        let dot = t.to_dot(&["age".into()]);
        assert!(dot.starts_with("digraph tree {"));
        assert!(dot.contains("age ≤ 0.5000"));
        assert!(dot.contains("p=1.0000 w=1.0000"));
        let text = t.to_text(&["age".into()]);
        assert!(text.contains("if age <= 0.5000:"));
    }

    #[test]
    fn quartile_sets() {
        let coefs = [0.9, 0.5, 0.3, 0.1, -0.2, -0.4, -0.7, -1.0];
        let (p, n) = top_bottom_quartile(&coefs, QuartileBase::AllFeatures);
        assert_eq!(p, vec![0, 1]);
        assert_eq!(n, vec![7, 6]);
        assert_eq!(top_bottom_quartile(&[0.0; 5], QuartileBase::AllFeatures), (vec![], vec![]));
        let (p, n) = top_bottom_quartile(&[0.2, -0.1, 0.5], QuartileBase::AllFeatures);
        assert_eq!((p, n), (vec![2], vec![1]));
        // ties go to the lower index
        let (p, _) = top_bottom_quartile(&[0.5, 0.5, 0.1, 0.0], QuartileBase::AllFeatures);
        assert_eq!(p, vec![0]);
        let (p, n) = top_bottom_quartile(&coefs, QuartileBase::SignedSubset);
        assert_eq!((p, n), (vec![0], vec![7]));
    }

    #[test]
    fn choose_split_tie_break() {
        let c = |feature, threshold, score| SplitCandidate {
            feature,
            threshold,
            score,
        };
        let cands = [c(1, 0.5, 1.0), c(0, 2.0, 1.0 + 1e-14), c(0, 1.0, 1.2)];
        assert_eq!(choose_split(&cands, 1.0), Some(c(0, 2.0, 1.0 + 1e-14)));
        assert_eq!(choose_split(&[], 1.0), None);
    }

    #[test]
    fn labels_from_threshold() {
        assert_eq!(threshold_labels(&[0.2, 0.5, 0.7], 0.5), vec![0, 1, 1]);
    }
}
