use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tree_alime::dataset::{one_hot_encode, Cell, Dataset, EncodedDataset, FeatureSchema, FeatureSpec, Scaler};
use tree_alime::eval::{fidelity_sweep, local_fidelity, stability_experiment, TestPoint};
use tree_alime::explain::{render_explanation, Explainer, ExplainerConfig, Flag, Method, Models, Payload};
use tree_alime::neuralnet::{AutoencoderConfig, DenoisingAutoencoder, MlpClassifier, TrainConfig};
use tree_alime::sampler::{gaussian_sample, kernel_weights, PerturbationConfig, TrainingStats};
use tree_alime::surrogate::{fit_logistic, threshold_labels, QuartileBase};
use tree_alime::Error;

struct Fixture {
    encoded: EncodedDataset,
    scaled: Array2<f64>,
    scaler: Scaler,
    stats: TrainingStats,
    blackbox: MlpClassifier,
    autoencoder: DenoisingAutoencoder,
    names: Vec<String>,
}

impl Fixture {
    fn models(&self) -> Models<'_> {
        Models {
            blackbox: &self.blackbox,
            autoencoder: Some(&self.autoencoder),
            scaler: &self.scaler,
            stats: &self.stats,
            feature_names: &self.names,
        }
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.scaled.row(i).to_vec()
    }
}

fn fixture() -> Fixture {
    let schema = FeatureSchema::new(
        vec![
            FeatureSpec::numeric("a"),
            FeatureSpec::numeric("b"),
            FeatureSpec::categorical("c", ["x", "y", "z"]),
            FeatureSpec::numeric("d"),
        ],
        "label",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..300 {
        let a: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(0.0..10.0);
        let c: usize = rng.random_range(0..3);
        let d: f64 = rng.random_range(-1.0..1.0);
        labels.push(u8::from(a + 0.3 * b - 1.5 + if c == 2 { 1.0 } else { 0.0 } > 0.0));
        rows.push(vec![Cell::Numeric(a), Cell::Numeric(b), Cell::Category(c), Cell::Numeric(d)]);
    }
    let ds = Dataset::new(schema, rows, labels).unwrap();
    let encoded = one_hot_encode(&ds);
    let scaler = Scaler::fit(&encoded.matrix).unwrap();
    let scaled = scaler.transform(&encoded.matrix).unwrap();
    let stats = TrainingStats::from_encoded(&encoded).unwrap();
    let (xt, xv) = (scaled.slice(ndarray::s![..250, ..]).to_owned(), scaled.slice(ndarray::s![250.., ..]).to_owned());
    let (yt, yv) = (&encoded.labels[..250], &encoded.labels[250..]);
    let cfg = TrainConfig::default().with_seed(1);
    let (blackbox, _) = MlpClassifier::fit(&xt, yt, &xv, yv, (8, 6), &cfg).unwrap();
    let (autoencoder, _) = DenoisingAutoencoder::fit(&scaled, &AutoencoderConfig::default(), &cfg).unwrap();
    let names = encoded.column_names();
    Fixture {
        encoded,
        scaled,
        scaler,
        stats,
        blackbox,
        autoencoder,
        names,
    }
}

fn small(method: Method, m: usize, n: usize) -> ExplainerConfig {
    ExplainerConfig {
        perturbation: PerturbationConfig {
            m,
            n,
            ..PerturbationConfig::default()
        },
        ..ExplainerConfig::for_method(method)
    }
    .with_seed(17)
}

#[test]
fn explanations_are_deterministic_and_replayable() {
    let f = fixture();
    assert!(f.blackbox.accuracy(&f.scaled, &f.encoded.labels).unwrap() > 0.8);
    let x = f.row(3);
    for method in Method::ALL {
        let ex = Explainer::new(f.models(), small(method, 2000, 300)).unwrap();
        let a = ex.explain(&x, Some(3)).unwrap();
        let b = ex.explain(&x, Some(3)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.surrogate_probability, a.payload.predict_proba(&x).unwrap());
        // everything needed to rerun is in the record
        let replay = Explainer::new(f.models(), a.config)
            .unwrap()
            .explain(&a.instance, a.instance_id)
            .unwrap();
        assert_eq!(replay, a);
        let text = render_explanation(&a, 5).text;
        assert!(text.contains("black-box probability") && text.contains("surrogate probability"));
    }
}

#[test]
fn alime_and_tree_alime_share_the_neighborhood() {
    let f = fixture();
    let ex = Explainer::new(f.models(), small(Method::Alime, 2000, 400)).unwrap();
    let x = f.row(10);
    let a = ex.neighborhood(Method::Alime, &x, 5).unwrap();
    let t = ex.neighborhood(Method::TreeAlime, &x, 5).unwrap();
    assert_eq!(a, t);
    let both = ex.explain_methods(&[Method::Alime, Method::TreeAlime], &x, None, 5).unwrap();
    let alone = Explainer::new(f.models(), small(Method::TreeAlime, 2000, 400).with_seed(5))
        .unwrap()
        .explain(&x, None)
        .unwrap();
    assert_eq!(both[1].payload, alone.payload);
}

#[test]
fn full_pool_skips_selection() {
    let f = fixture();
    let m = 500;
    let cfg = small(Method::Alime, m, m);
    let ex = Explainer::new(f.models(), cfg).unwrap();
    let x = f.row(0);
    let hood = ex.neighborhood(Method::Alime, &x, 17).unwrap();
    let mut idx = hood.source_indices.clone();
    idx.sort_unstable();
    assert_eq!(idx, (0..m).collect::<Vec<_>>());

    // rebuild the unselected pool directly
    let pool = f.scaler.transform(&gaussian_sample(&f.stats, m, cfg.perturbation.categorical_mode, 17).unwrap()).unwrap();
    let latents = f.autoencoder.encode_batch(&pool).unwrap();
    let lx = f.autoencoder.encode(&x).unwrap();
    let d: Vec<f64> = latents
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&lx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let w = kernel_weights(&d).unwrap();
    let labels = threshold_labels(&f.blackbox.predict_proba_batch(&pool).unwrap(), 0.5);
    let direct = fit_logistic(&pool, &labels, &w, &cfg.logistic).unwrap();
    let e = ex.explain(&x, None).unwrap();
    let Payload::Linear(lin) = e.payload else { panic!("linear payload expected") };
    for (p, q) in lin.coefficients.iter().zip(&direct.coefficients) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
}

#[test]
fn wide_lime_kernel_is_unweighted() {
    let f = fixture();
    let mut cfg = small(Method::Lime, 1000, 400);
    cfg.kernel_width = Some(1e9);
    let ex = Explainer::new(f.models(), cfg).unwrap();
    let x = f.row(7);
    let hood = ex.neighborhood(Method::Lime, &x, 17).unwrap();
    assert_eq!(hood.len(), 400);
    assert!(hood.weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    let labels = threshold_labels(&f.blackbox.predict_proba_batch(&hood.points).unwrap(), 0.5);
    let plain = fit_logistic(&hood.points, &labels, &vec![1.0; 400], &cfg.logistic).unwrap();
    let Payload::Linear(lin) = ex.explain(&x, None).unwrap().payload else { panic!() };
    for (p, q) in lin.coefficients.iter().zip(&plain.coefficients) {
        assert!((p - q).abs() < 1e-6);
    }

    let tiny = Explainer::new(f.models(), small(Method::Lime, 10, 2)).unwrap();
    tiny.explain(&x, None).unwrap();
}

#[test]
fn tree_depth_and_dot_bounds() {
    let f = fixture();
    let ex = Explainer::new(f.models(), small(Method::TreeAlime, 3000, 1000)).unwrap();
    for i in [1, 40, 77] {
        let e = ex.explain(&f.row(i), Some(i)).unwrap();
        let Payload::Tree(tree) = &e.payload else { panic!() };
        assert!(tree.depth() <= 5);
        let dot = render_explanation(&e, 5).dot.unwrap();
        assert!(dot.starts_with("digraph") && dot.trim_end().ends_with('}'));
        let declared = dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count();
        assert_eq!(declared, tree.nodes.len());
        assert!(declared <= 63);
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!(edges, declared - 1);
    }
}

#[test]
fn constant_black_box_gives_single_leaf() {
    let mut f = fixture();
    let last = f.blackbox.network.layers.last_mut().unwrap();
    last.weights.fill(0.0);
    last.bias.fill(40.0);
    let ex = Explainer::new(f.models(), small(Method::TreeAlime, 1000, 200)).unwrap();
    let out = ex.explain_methods(&[Method::TreeAlime, Method::Alime], &f.row(2), None, 3).unwrap();
    let Payload::Tree(tree) = &out[0].payload else { panic!() };
    assert_eq!(tree.nodes.len(), 1);
    assert_eq!(out[0].surrogate_probability, 1.0);
    assert!(out[0].is_flagged(Flag::SingleClass) && out[1].is_flagged(Flag::SingleClass));
}

#[test]
fn autoencoder_required_for_alime() {
    let f = fixture();
    let mut models = f.models();
    models.autoencoder = None;
    for method in [Method::Alime, Method::TreeAlime] {
        assert!(matches!(
            Explainer::new(models, ExplainerConfig::for_method(method)),
            Err(Error::MissingAutoencoder(_))
        ));
    }
    assert!(Explainer::new(models, ExplainerConfig::for_method(Method::Lime)).is_ok());
}

#[test]
fn fidelity_ignores_test_order() {
    let f = fixture();
    let ex = Explainer::new(f.models(), small(Method::Alime, 1000, 200)).unwrap();
    let mut points: Vec<TestPoint> = (250..270).map(|i| (i, f.row(i))).collect();
    let methods = [Method::Alime, Method::TreeAlime, Method::Lime];
    let forward = local_fidelity(&ex, &methods, &points, 200, 8).unwrap();
    points.reverse();
    let backward = local_fidelity(&ex, &methods, &points, 200, 8).unwrap();
    assert_eq!(forward, backward);
    for e in &forward {
        assert_eq!(e.points, 20);
        assert_eq!(e.accuracy, e.agreements as f64 / 20.0);
    }

    let sweep = fidelity_sweep(&ex, &[Method::Alime, Method::TreeAlime], &points[..5], &[100, 200, 300], 8).unwrap();
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv, Method::Alime).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,linear_value,tree_value");
    assert_eq!(lines.len(), 4);
    assert!(matches!(
        fidelity_sweep(&ex, &[Method::Alime], &points, &[500, 2000], 8),
        Err(Error::GridExceedsPool { n: 2000, m: 1000 })
    ));
}

#[test]
fn stability_run_bookkeeping() {
    let f = fixture();
    let ex = Explainer::new(f.models(), small(Method::Alime, 1000, 300)).unwrap();
    let reports = stability_experiment(
        &ex,
        &[Method::Alime, Method::TreeAlime],
        &f.row(5),
        Some(5),
        20,
        100,
        QuartileBase::AllFeatures,
    )
    .unwrap();
    for r in &reports {
        assert_eq!(r.runs.len(), 20);
        assert_eq!(r.seeds, (100..120).collect::<Vec<u64>>());
        assert!((0.0..=1.0).contains(&r.score));
    }
    // K = 6 columns, k = 1 per sign
    assert!(reports[0].mean_feature_count <= 2.0);
}

#[test]
fn far_neighborhoods_survive_weight_underflow() {
    let f = fixture();
    let x = f.row(7);
    for method in [Method::Alime, Method::TreeAlime] {
        let ex = Explainer::new(f.models(), small(method, 2000, 300)).unwrap();
        let near = ex.label(ex.neighborhood(method, &x, 3).unwrap()).unwrap();
        let mut far = ex.label(ex.neighborhood(method, &x, 3).unwrap()).unwrap();
        // every exp(-d) is now exactly zero
        for d in &mut far.sample.distances {
            *d += 900.0;
        }
        far.sample.weights = kernel_weights(&far.sample.distances).unwrap();
        assert!(far.sample.weights.iter().all(|&w| w == 0.0));
        let a = ex.fit_surrogate(method, &near, &x, None, 3).unwrap();
        let b = ex.fit_surrogate(method, &far, &x, None, 3).unwrap();
        assert!((a.surrogate_probability - b.surrogate_probability).abs() < 1e-6);
    }
}
