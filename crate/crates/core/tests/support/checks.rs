//! Checks shared by the integration tests and the acceptance suite. Each one
//! compares the library against an oracle from the parent module.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tree_alime::dataset::{categorical_groups, one_hot_encode, Cell, Dataset, FeatureSchema, FeatureSpec};
use tree_alime::eval::{linear_stability, tree_stability};
use tree_alime::neuralnet::{Activation, Loss, Network};
use tree_alime::sampler::{kernel_weights, select_nearest};
use tree_alime::surrogate::{
    fit_cart, fit_logistic, top_bottom_quartile, CartConfig, LogisticConfig, Node, QuartileBase,
};

pub type Problem = (Array2<f64>, Vec<u8>, Vec<f64>);

/// Small weighted binary classification problem.
pub fn weighted_problem() -> impl Strategy<Value = Problem> {
    (2usize..30, 1usize..5).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * k),
            prop::collection::vec(0u8..2, n),
            prop::collection::vec(0.01f64..2.0, n),
        )
            .prop_map(move |(x, y, w)| (Array2::from_shape_vec((n, k), x).unwrap(), y, w))
    })
}

/// Random schema plus rows that respect it.
pub fn random_dataset() -> impl Strategy<Value = Dataset> {
    let feature = prop_oneof![Just(0usize), 2usize..5];
    (prop::collection::vec(feature, 1..5), 1usize..15).prop_flat_map(|(widths, n)| {
        let widths2 = widths.clone();
        let cells = widths
            .iter()
            .map(|&w| {
                if w == 0 {
                    (-10.0f64..10.0).prop_map(Cell::Numeric).boxed()
                } else {
                    (0..w).prop_map(Cell::Category).boxed()
                }
            })
            .collect::<Vec<_>>();
        (prop::collection::vec(cells, n), prop::collection::vec(0u8..2, n)).prop_map(move |(rows, labels)| {
            let features = widths2
                .iter()
                .enumerate()
                .map(|(j, &w)| {
                    if w == 0 {
                        FeatureSpec::numeric(format!("f{j}"))
                    } else {
                        FeatureSpec::categorical(format!("f{j}"), (0..w).map(|c| format!("c{c}")))
                    }
                })
                .collect();
            let schema = FeatureSchema::new(features, "label").unwrap();
            Dataset::new(schema, rows, labels).unwrap()
        })
    })
}

pub fn coefficient_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], 1..60)
}

/// `(m, d, seed, fraction kept, coarse grid)`
pub fn nearest_case() -> impl Strategy<Value = (usize, usize, u64, f64, bool)> {
    (1usize..300, 1usize..4, any::<u64>(), 0.0f64..1.0, any::<bool>())
}

pub fn logistic_weight_scaling((x, y, w): &Problem, c: f64) -> Result<(), TestCaseError> {
    let cfg = LogisticConfig::default();
    let a = fit_logistic(x, y, w, &cfg).unwrap();
    let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
    let b = fit_logistic(x, y, &scaled, &cfg).unwrap();
    for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
        prop_assert!((p - q).abs() <= 1e-8, "{p} vs {q}");
    }
    prop_assert!((a.intercept - b.intercept).abs() <= 1e-8);
    Ok(())
}

pub fn tree_weight_scaling((x, y, w): &Problem, c: f64, depth: Option<usize>) -> Result<(), TestCaseError> {
    let cfg = CartConfig { max_depth: depth, min_leaf_weight: None };
    let a = fit_cart(x, y, w, &cfg).unwrap();
    let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
    let b = fit_cart(x, y, &scaled, &cfg).unwrap();
    prop_assert_eq!(a.nodes.len(), b.nodes.len());
    for (p, q) in a.nodes.iter().zip(&b.nodes) {
        match (p, q) {
            (
                Node::Split { feature: f1, threshold: t1, left: l1, right: r1, .. },
                Node::Split { feature: f2, threshold: t2, left: l2, right: r2, .. },
            ) => {
                prop_assert_eq!((f1, l1, r1), (f2, l2, r2));
                prop_assert_eq!(t1, t2);
            }
            (Node::Leaf { probability: p1, .. }, Node::Leaf { probability: p2, .. }) => {
                prop_assert!((p1 - p2).abs() < 1e-12);
            }
            _ => prop_assert!(false, "node kinds differ"),
        }
    }
    Ok(())
}

pub fn quartile_cardinality(coefs: &[f64]) -> Result<(), TestCaseError> {
    let k = (coefs.len() / 4).max(1);
    for base in [QuartileBase::AllFeatures, QuartileBase::SignedSubset] {
        let (pos, neg) = top_bottom_quartile(coefs, base);
        prop_assert!(pos.len() <= k && neg.len() <= k);
        prop_assert!(pos.iter().all(|j| !neg.contains(j)));
        prop_assert!(pos.iter().all(|&j| coefs[j] > 0.0));
        prop_assert!(neg.iter().all(|&j| coefs[j] < 0.0));
        // nothing outside the set beats anything inside it
        if let Some(&weakest) = pos.last() {
            let outside = (0..coefs.len()).filter(|j| !pos.contains(j)).map(|j| coefs[j]);
            prop_assert!(outside.into_iter().all(|c| c <= coefs[weakest]));
        }
    }
    let positives = coefs.iter().filter(|&&c| c > 0.0).count();
    let (pos, _) = top_bottom_quartile(coefs, QuartileBase::AllFeatures);
    prop_assert_eq!(pos.len(), positives.min(k));
    Ok(())
}

pub fn one_hot_groups_sum_to_one(ds: &Dataset) -> Result<(), TestCaseError> {
    let enc = one_hot_encode(ds);
    prop_assert_eq!(enc.n_columns(), ds.schema.encoded_width());
    for group in categorical_groups(&enc.column_map) {
        for row in enc.matrix.rows() {
            let s: f64 = row.slice(ndarray::s![group.columns.clone()]).sum();
            prop_assert_eq!(s, 1.0);
        }
    }
    // column map round trip
    for (r, row) in ds.rows.iter().enumerate() {
        for (c, src) in enc.column_map.iter().enumerate() {
            let expected = match (row[src.feature], src.category) {
                (Cell::Numeric(v), None) => v,
                (Cell::Category(k), Some(cat)) => f64::from(u8::from(k == cat)),
                _ => unreachable!(),
            };
            prop_assert_eq!(enc.matrix[[r, c]], expected);
        }
    }
    Ok(())
}

pub fn nearest_matches_brute_force((m, d, seed, frac, coarse): (usize, usize, u64, f64, bool)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // coarse grids force many exact distance ties
    let mut draw = || if coarse { f64::from(rng.random_range(-2i32..3)) } else { rng.random_range(-1.0..1.0) };
    let points = Array2::from_shape_simple_fn((m, d), &mut draw);
    let q: Vec<f64> = (0..d).map(|_| draw()).collect();
    let n = ((m as f64 * frac) as usize).max(1);
    let (idx, dist) = select_nearest(&points, &q, n).unwrap();
    prop_assert_eq!(&idx, &super::brute_force_nearest(&points, &q, n));
    let kept: BTreeSet<usize> = idx.iter().copied().collect();
    let worst = dist.iter().copied().fold(0.0, f64::max);
    for (i, r) in points.rows().into_iter().enumerate() {
        if !kept.contains(&i) {
            let di: f64 = r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(worst <= di);
        }
    }
    let w = kernel_weights(&dist).unwrap();
    for i in 0..n {
        prop_assert!(w[i] > 0.0);
        for j in 0..n {
            if dist[i] < dist[j] {
                prop_assert!(w[i] > w[j]);
            }
        }
    }
    Ok(())
}

/// Random ensembles of feature sets against the unordered-pair oracle.
/// Returns the worst absolute difference seen, or a description of the first
/// violated property.
pub fn stability_oracle_suite(ensembles: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for e in 0..ensembles {
        let t = rng.random_range(2..25);
        let universe = rng.random_range(1..12);
        let sets: Vec<BTreeSet<usize>> = (0..t).map(|_| super::random_set(&mut rng, universe, 6)).collect();
        let other: Vec<BTreeSet<usize>> = (0..t).map(|_| super::random_set(&mut rng, universe, 6)).collect();
        let tree = tree_stability(&sets).map_err(|err| err.to_string())?;
        worst = worst.max((tree - super::unordered_pair_stability(&sets)).abs());
        if !(0.0..=1.0).contains(&tree) {
            return Err(format!("ensemble {e}: tree stability {tree} outside [0, 1]"));
        }
        let pairs: Vec<_> = sets.iter().cloned().zip(other.iter().cloned()).collect();
        let lin = linear_stability(&pairs).map_err(|err| err.to_string())?;
        let oracle = (super::unordered_pair_stability(&sets) + super::unordered_pair_stability(&other)) / 2.0;
        worst = worst.max((lin.combined - oracle).abs());
        let same = vec![sets[0].clone(); t];
        if tree_stability(&same).map_err(|err| err.to_string())? != 1.0 {
            return Err(format!("ensemble {e}: identical sets did not score 1.0"));
        }
        let same_pairs = vec![pairs[0].clone(); t];
        if linear_stability(&same_pairs).map_err(|err| err.to_string())?.combined != 1.0 {
            return Err(format!("ensemble {e}: identical linear runs did not score 1.0"));
        }
    }
    Ok(worst)
}

/// Greedy root split versus exhaustive enumeration. Returns
/// `(cases, cases with a split)`.
pub fn cart_oracle_suite(cases: usize, seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split_cases = 0;
    for case in 0..cases {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=3);
        // small integer grids produce plenty of duplicate values and ties
        let x = if case % 2 == 0 {
            Array2::from_shape_simple_fn((n, k), || f64::from(rng.random_range(0..4i32)))
        } else {
            Array2::from_shape_simple_fn((n, k), || rng.random_range(-1.0..1.0))
        };
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let w: Vec<f64> = if case % 3 == 0 {
            vec![1.0; n]
        } else {
            (0..n).map(|_| rng.random_range(0.05..3.0)).collect()
        };
        let expected = super::brute_force_root_split(&x, &y, &w);
        let tree = fit_cart(&x, &y, &w, &CartConfig { max_depth: Some(1), min_leaf_weight: None })
            .map_err(|e| e.to_string())?;
        let got = match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                Some((feature, (0..n).map(|i| x[[i, feature]] <= threshold).collect()))
            }
            Node::Leaf { .. } => None,
        };
        if got != expected {
            return Err(format!("case {case}: x={x:?} y={y:?} w={w:?}: greedy {got:?}, exhaustive {expected:?}"));
        }
        split_cases += usize::from(expected.is_some());
    }
    Ok((cases, split_cases))
}

/// Smallest |pre-activation| across the relu layers; finite differences
/// across a kink are meaningless.
fn closest_to_kink(net: &Network, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut closest = f64::INFINITY;
    for layer in &net.layers {
        let z = a.dot(&layer.weights) + &layer.bias;
        if layer.activation == Activation::Relu {
            closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
        }
        a = z.mapv(|v| match layer.activation {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Identity => v,
        });
    }
    closest
}

pub const CLASSIFIER_DIMS: [usize; 4] = [3, 4, 2, 1];
pub const CLASSIFIER_ACTS: [Activation; 3] = [Activation::Relu, Activation::Relu, Activation::Sigmoid];
pub const AUTOENCODER_DIMS: [usize; 5] = [3, 4, 2, 4, 3];
pub const AUTOENCODER_ACTS: [Activation; 4] =
    [Activation::Relu, Activation::Identity, Activation::Relu, Activation::Identity];

/// Worst relative error between analytic and central-difference gradients
/// over `draws` random parameter/input draws.
pub fn network_gradient_error(dims: &[usize], acts: &[Activation], loss: Loss, draws: usize, seed: u64) -> f64 {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    while done < draws {
        let mut net = Network::new(dims, acts, rng.random()).unwrap();
        let params: Vec<f64> = (0..net.n_params()).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8).collect();
        net.set_parameters(&params).unwrap();
        let batch = rng.random_range(1..5);
        let x = Array2::from_shape_simple_fn((batch, dims[0]), || rng.sample(StandardNormal));
        let out = *dims.last().unwrap();
        let target = match loss {
            Loss::Bce => Array2::from_shape_simple_fn((batch, out), || f64::from(rng.random_range(0..2u8))),
            Loss::Mse => Array2::from_shape_simple_fn((batch, out), || rng.sample(StandardNormal)),
        };
        if closest_to_kink(&net, &x) < 1e-3 {
            continue;
        }
        let (value, grads) = net.loss_and_gradients(&x, &target, loss);
        assert!((value - net.loss(&x, &target, loss)).abs() < 1e-12);
        let numeric = super::central_differences(&params, H, |p| {
            let mut probe = net.clone();
            probe.set_parameters(p).unwrap();
            probe.loss(&x, &target, loss)
        });
        worst = worst.max(super::max_relative_error(&grads.flatten(), &numeric, 1e-6));
        done += 1;
    }
    worst
}
