//! Independent reference implementations used by the integration tests and
//! by the acceptance suite.
#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Jaccard over hash sets, averaged over unordered pairs `i < j`.
pub fn unordered_pair_stability(sets: &[BTreeSet<usize>]) -> f64 {
    let hashed: Vec<HashSet<usize>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..hashed.len() {
        for j in i + 1..hashed.len() {
            let inter = hashed[i].intersection(&hashed[j]).count();
            let union = hashed[i].len() + hashed[j].len() - inter;
            sum += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            pairs += 1;
        }
    }
    sum / pairs as f64
}

pub fn random_set(rng: &mut ChaCha8Rng, universe: usize, max_len: usize) -> BTreeSet<usize> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(0..universe)).collect()
}

/// Exhaustive root split: every feature, every cut between two consecutive
/// distinct values, children scored by `W * (1 - p^2 - (1-p)^2)`. Returns
/// the feature and the left-child membership of the winner, or `None` when
/// the node should stay a leaf.
pub fn brute_force_root_split(x: &Array2<f64>, y: &[u8], w: &[f64]) -> Option<(usize, Vec<bool>)> {
    let n = x.nrows();
    let total: f64 = w.iter().sum();
    let gini = |members: &[usize]| -> f64 {
        let wt: f64 = members.iter().map(|&i| w[i]).sum();
        if wt <= 0.0 {
            return 0.0;
        }
        let p = members.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum::<f64>() / wt;
        wt * (1.0 - p * p - (1.0 - p) * (1.0 - p))
    };
    let all: Vec<usize> = (0..n).collect();
    let parent = gini(&all);
    let positive: f64 = (0..n).filter(|&i| y[i] == 1).map(|i| w[i]).sum();
    if positive <= 0.0 || positive >= total {
        return None;
    }
    // (feature, cut value, score, membership); the cut is the largest value
    // kept on the left
    let mut cands: Vec<(usize, f64, f64, Vec<bool>)> = Vec::new();
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &cut in &values[..values.len().saturating_sub(1)] {
            let member: Vec<bool> = (0..n).map(|i| x[[i, f]] <= cut).collect();
            let left: Vec<usize> = (0..n).filter(|&i| member[i]).collect();
            let right: Vec<usize> = (0..n).filter(|&i| !member[i]).collect();
            let wl: f64 = left.iter().map(|&i| w[i]).sum();
            let wr: f64 = right.iter().map(|&i| w[i]).sum();
            if wl < 1e-6 * total || wr < 1e-6 * total {
                continue;
            }
            cands.push((f, cut, gini(&left) + gini(&right), member));
        }
    }
    let best = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    if !best.is_finite() || parent - best <= 1e-12 * total {
        return None;
    }
    cands
        .into_iter()
        .filter(|c| c.2 <= best + 1e-12 * total)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|c| (c.0, c.3))
}

/// Indices of the `n` closest rows by full sort on `(distance, index)`.
pub fn brute_force_nearest(points: &Array2<f64>, q: &[f64], n: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let d2: f64 = r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            (d2.sqrt(), i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(n).map(|(_, i)| i).collect()
}

/// Central finite differences of `f` at `params`.
pub fn central_differences(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`, worst over all components.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
