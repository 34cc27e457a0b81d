//! The six subcommands. Each one opens the artifact store, rebuilds the
//! prepared data, checks its upstream artifacts and writes its own.

use std::fmt;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::json;
use tree_alime::eval::{fidelity_sweep, stability_sweep, TestPoint};
use tree_alime::explain::{render_explanation, Explainer, ExplainerConfig, Method, Models};
use tree_alime::neuralnet::{
    cross_validate_pair, grid_search_cv, DenoisingAutoencoder, GridSearchConfig, GridSearchReport, MlpClassifier, TrainHistory,
};
use tree_alime::sampler::PerturbationConfig;
use tree_alime::surrogate::CartConfig;

use crate::config::{config_hash, RunConfig};
use crate::pipeline::{prepare, Prepared, Preprocess};
use crate::store::{sha256_hex, ArtifactStore};

pub const PREPROCESS: &str = "models/preprocess.json";
pub const BLACKBOX: &str = "models/blackbox.json";
pub const AUTOENCODER: &str = "models/autoencoder.json";

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Training,
    Evaluation,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Input => 2,
            FailureKind::Training => 3,
            FailureKind::Evaluation => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn kind(self, kind: FailureKind) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn kind(self, kind: FailureKind) -> CmdResult<T> {
        self.map_err(|e| Failure { kind, error: e.into() })
    }
}

use FailureKind::{Evaluation, Input, Training};

/// Opened store plus freshly rebuilt data, checked against the ingest
/// artifact.
struct Stage {
    store: ArtifactStore,
    data: Prepared,
}

fn open(cfg: &RunConfig, out: &std::path::Path, need_ingest: bool) -> CmdResult<Stage> {
    cfg.validate().kind(Input)?;
    let store = ArtifactStore::open(out).kind(Input)?;
    let data = prepare(cfg).kind(Input)?;
    if need_ingest {
        let recorded: Preprocess = store.read_json(PREPROCESS).kind(Input)?;
        if recorded != data.preprocess {
            return Err(anyhow!("dataset or split differs from the ingested one; rerun ingest into a fresh --out")).kind(Input);
        }
    }
    Ok(Stage { store, data })
}

fn artifact_hash(store: &ArtifactStore, rel: &str) -> CmdResult<String> {
    store
        .manifest()
        .artifacts
        .get(rel)
        .map(|r| r.sha256.clone())
        .ok_or_else(|| anyhow!("{rel} missing; run the stage that produces it first"))
        .kind(Input)
}

fn loss_csv(history: &TrainHistory) -> Vec<u8> {
    let mut out = String::from("epoch,train_loss,validation_loss\n");
    for e in &history.epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.validation_loss));
    }
    out.into_bytes()
}

/// Hashes dataset file contents rather than paths, so relocating the inputs
/// does not invalidate a run.
fn ingest_hash(cfg: &RunConfig) -> anyhow::Result<String> {
    let file_hash = |p: &std::path::Path| -> anyhow::Result<String> {
        Ok(sha256_hex(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?))
    };
    let d = &cfg.dataset;
    Ok(config_hash(&json!({
        "seed": cfg.seed,
        "csv": file_hash(&d.csv)?,
        "schema": file_hash(&d.schema)?,
        "train_fraction": d.train_fraction,
        "max_rows": d.max_rows,
        "std_convention": d.std_convention,
    })))
}

pub fn ingest(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, false)?;
    let stage = "ingest";
    store
        .begin_stage(stage, &ingest_hash(cfg).kind(Input)?)
        .kind(Input)?;
    let p = &data.preprocess;
    let report = json!({
        "rows": p.rows,
        "encoded_columns": p.columns.len(),
        "train_rows": p.train_indices.len(),
        "test_rows": p.test_indices.len(),
        "positive_rate": data.encoded.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / p.rows as f64,
        "imputed": p.imputation.per_feature,
        "imputed_total": p.imputation.total(),
        "split_seed": cfg.component_seed("split"),
    });
    store.write_json(PREPROCESS, p, stage).kind(Input)?;
    store.write_json("reports/ingest.json", &report, stage).kind(Input)?;
    store.finish().kind(Input)
}

#[derive(Serialize)]
struct BlackboxReport {
    hidden: (usize, usize),
    seed: u64,
    best_epoch: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    grid: Option<GridSearchReport>,
    cv: Option<GridSearchReport>,
}

pub fn train_blackbox(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, true)?;
    let stage = "train-blackbox";
    let upstream = artifact_hash(&store, PREPROCESS)?;
    store
        .begin_stage(
            stage,
            &config_hash(&json!({"seed": cfg.seed, "blackbox": cfg.blackbox, "preprocess": upstream})),
        )
        .kind(Input)?;
    let bb = &cfg.blackbox;
    let (x, y) = (data.train_x(), data.train_y());
    let grid_cfg = |neurons: Vec<usize>| GridSearchConfig {
        neurons,
        folds: bb.folds,
        validation_fraction: bb.validation_fraction,
        selection: bb.selection,
    };
    let (hidden, grid) = match bb.hidden {
        Some(h) => (h, None),
        None => {
            let report = grid_search_cv(&x, &y, &grid_cfg(bb.neurons.clone()), &bb.train.with_seed(cfg.component_seed("blackbox-grid")))
                .kind(Training)?;
            log::info!("grid search picked {:?}, mean fold accuracy {:.4}", report.best_hidden, report.mean_accuracy);
            (report.best_hidden, Some(report))
        }
    };
    let cv = if bb.cv_report {
        let seeded = bb.train.with_seed(cfg.component_seed("blackbox-cv"));
        Some(cross_validate_pair(&x, &y, hidden, &grid_cfg(Vec::new()), &seeded).kind(Training)?)
    } else {
        None
    };
    let (fit_idx, val_idx) = tree_alime::dataset::split_indices(x.nrows(), 1.0 - bb.validation_fraction, cfg.component_seed("blackbox-holdout"))
        .kind(Input)?;
    let sel = |idx: &[usize]| (x.select(ndarray::Axis(0), idx), idx.iter().map(|&i| y[i]).collect::<Vec<u8>>());
    let (xf, yf) = sel(&fit_idx);
    let (xv, yv) = sel(&val_idx);
    let seed = cfg.component_seed("blackbox");
    let (model, history) = MlpClassifier::fit(&xf, &yf, &xv, &yv, hidden, &bb.train.with_seed(seed)).kind(Training)?;
    let report = BlackboxReport {
        hidden,
        seed,
        best_epoch: history.best_epoch,
        train_accuracy: model.accuracy(&x, &y).kind(Evaluation)?,
        test_accuracy: model.accuracy(&data.test_x(), &data.test_y()).kind(Evaluation)?,
        grid,
        cv,
    };
    log::info!("black box {hidden:?}: test accuracy {:.4}", report.test_accuracy);
    store.write_json(BLACKBOX, &model, stage).kind(Input)?;
    store.write_json("reports/blackbox.json", &report, stage).kind(Input)?;
    store.write("logs/blackbox_loss.csv", &loss_csv(&history), stage).kind(Input)?;
    store.finish().kind(Input)
}

pub fn train_ae(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, true)?;
    let stage = "train-ae";
    let upstream = artifact_hash(&store, PREPROCESS)?;
    store
        .begin_stage(
            stage,
            &config_hash(&json!({"seed": cfg.seed, "autoencoder": cfg.autoencoder, "preprocess": upstream})),
        )
        .kind(Input)?;
    let ae_cfg = cfg.autoencoder.library();
    let seed = cfg.component_seed("autoencoder");
    let (ae, history) =
        DenoisingAutoencoder::fit(&data.train_x(), &ae_cfg, &cfg.autoencoder.train.with_seed(seed)).kind(Training)?;
    let report = json!({
        "input_dim": ae.input_dim(),
        "hidden_dim": ae_cfg.resolved_hidden(ae.input_dim()),
        "latent_dim": ae.latent_dim,
        "noise_std": ae.noise_std,
        "seed": seed,
        "best_epoch": history.best_epoch,
        "best_validation_mse": history.best_validation_loss(),
        "test_mse": ae.reconstruction_mse(&data.test_x()).kind(Evaluation)?,
    });
    store.write_json(AUTOENCODER, &ae, stage).kind(Input)?;
    store.write_json("reports/autoencoder.json", &report, stage).kind(Input)?;
    store.write("logs/autoencoder_loss.csv", &loss_csv(&history), stage).kind(Input)?;
    store.finish().kind(Input)
}

struct LoadedModels {
    blackbox: MlpClassifier,
    autoencoder: Option<DenoisingAutoencoder>,
    hashes: serde_json::Value,
}

fn load_models(store: &ArtifactStore, methods: &[Method]) -> CmdResult<LoadedModels> {
    let blackbox: MlpClassifier = store.read_json(BLACKBOX).kind(Input)?;
    let needs_ae = methods.iter().any(|m| m.needs_autoencoder());
    let autoencoder = if needs_ae {
        Some(store.read_json::<DenoisingAutoencoder>(AUTOENCODER).kind(Input)?)
    } else {
        None
    };
    let hashes = json!({
        "blackbox": artifact_hash(store, BLACKBOX)?,
        "autoencoder": if needs_ae { Some(artifact_hash(store, AUTOENCODER)?) } else { None },
    });
    Ok(LoadedModels {
        blackbox,
        autoencoder,
        hashes,
    })
}

fn explainer_config(cfg: &RunConfig, method: Method, seed: u64, max_depth: Option<usize>) -> ExplainerConfig {
    let e = &cfg.explain;
    ExplainerConfig {
        method,
        perturbation: PerturbationConfig {
            m: e.m,
            n: e.n,
            categorical_mode: e.categorical_mode,
            seed,
        },
        cart: CartConfig {
            max_depth,
            ..CartConfig::default()
        },
        kernel_width: e.kernel_width,
        include_instance: e.include_instance,
        threshold: e.threshold,
        ..ExplainerConfig::default()
    }
}

fn models<'a>(loaded: &'a LoadedModels, p: &'a Preprocess) -> Models<'a> {
    Models {
        blackbox: &loaded.blackbox,
        autoencoder: loaded.autoencoder.as_ref(),
        scaler: &p.scaler,
        stats: &p.stats,
        feature_names: &p.columns,
    }
}

pub fn explain(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, true)?;
    let method = cfg.explain.method;
    let idx = cfg.explain.instance;
    let x = data
        .test_row(idx)
        .ok_or_else(|| anyhow!("instance {idx} out of range: test split has {} rows", data.preprocess.test_indices.len()))
        .kind(Input)?;
    let loaded = load_models(&store, &[method])?;
    let stage = format!("explain:{method}:{idx}");
    store
        .begin_stage(
            &stage,
            &config_hash(&json!({"seed": cfg.seed, "explain": cfg.explain, "models": loaded.hashes})),
        )
        .kind(Input)?;
    let seed = cfg.component_seed("explain");
    let explainer = Explainer::new(models(&loaded, &data.preprocess), explainer_config(cfg, method, seed, cfg.explain.max_depth)).kind(Input)?;
    let e = explainer.explain(&x, Some(idx)).kind(Evaluation)?;
    let rendered = render_explanation(&e, cfg.explain.top_k);
    let base = format!("explanations/{method}-{idx}");
    store.write_json(&format!("{base}.json"), &e, &stage).kind(Input)?;
    store.write(&format!("{base}.txt"), rendered.text.as_bytes(), &stage).kind(Input)?;
    if let Some(dot) = rendered.dot {
        store.write(&format!("{base}.dot"), dot.as_bytes(), &stage).kind(Input)?;
    }
    print!("{}", rendered.text);
    store.finish().kind(Input)
}

fn linear_of(methods: &[Method]) -> Method {
    methods.iter().copied().find(|m| !m.is_tree()).unwrap_or(Method::Alime)
}

pub fn fidelity(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, true)?;
    let methods = &cfg.fidelity.methods;
    let loaded = load_models(&store, methods)?;
    let stage = "fidelity";
    store
        .begin_stage(
            stage,
            &config_hash(&json!({"seed": cfg.seed, "explain": cfg.explain, "fidelity": cfg.fidelity, "models": loaded.hashes})),
        )
        .kind(Input)?;
    let available = data.preprocess.test_indices.len();
    let count = cfg.fidelity.test_points.unwrap_or(available).min(available);
    let points: Vec<TestPoint> = (0..count).map(|i| (i, data.test_row(i).expect("in range"))).collect();
    let explainer = Explainer::new(
        models(&loaded, &data.preprocess),
        explainer_config(cfg, methods.first().copied().unwrap_or(Method::Alime), 0, cfg.fidelity.max_depth),
    )
    .kind(Input)?;
    let report = fidelity_sweep(&explainer, methods, &points, &cfg.fidelity.n_grid, cfg.component_seed("fidelity"))
        .map_err(|e| match e {
            tree_alime::Error::GridExceedsPool { .. } => Failure { kind: Input, error: e.into() },
            e => Failure { kind: Evaluation, error: e.into() },
        })?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv, linear_of(methods)).kind(Evaluation)?;
    store.write_json("reports/fidelity.json", &report, stage).kind(Input)?;
    store.write("reports/fidelity.csv", &csv, stage).kind(Input)?;
    print!("{}", String::from_utf8_lossy(&csv));
    store.finish().kind(Input)
}

pub fn stability(cfg: &RunConfig, out: &std::path::Path) -> CmdResult {
    let Stage { mut store, data } = open(cfg, out, true)?;
    let s = &cfg.stability;
    let loaded = load_models(&store, &s.methods)?;
    let stage = "stability";
    store
        .begin_stage(
            stage,
            &config_hash(&json!({"seed": cfg.seed, "explain": cfg.explain, "stability": s, "models": loaded.hashes})),
        )
        .kind(Input)?;
    let x = data
        .test_row(s.instance)
        .ok_or_else(|| anyhow!("instance {} out of range: test split has {} rows", s.instance, data.preprocess.test_indices.len()))
        .kind(Input)?;
    let explainer = Explainer::new(
        models(&loaded, &data.preprocess),
        explainer_config(cfg, s.methods.first().copied().unwrap_or(Method::Alime), 0, s.max_depth),
    )
    .kind(Input)?;
    let sweep = stability_sweep(
        &explainer,
        &s.methods,
        &x,
        Some(s.instance),
        &s.n_grid,
        s.runs,
        cfg.component_seed("stability"),
        s.quartile_base,
    )
    .map_err(|e| match e {
        tree_alime::Error::GridExceedsPool { .. } | tree_alime::Error::TooFewRuns(_) => {
            Failure { kind: Input, error: e.into() }
        }
        e => Failure { kind: Evaluation, error: e.into() },
    })?;
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv, linear_of(&s.methods)).kind(Evaluation)?;
    store.write_json("reports/stability.json", &sweep, stage).kind(Input)?;
    store.write("reports/stability.csv", &csv, stage).kind(Input)?;
    print!("{}", String::from_utf8_lossy(&csv));
    store.finish().kind(Input)
}
