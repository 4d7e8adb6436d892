use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use tplscan_core::detection::Detector;
use tplscan_core::embedding::{train, EmbeddingModel, FunctionVector};
use tplscan_core::evaluation::{
    build_database, generate_corpus, load_training_pairs, metrics_csv, run_ablation, GroundTruth, Variant,
};
use tplscan_core::extraction::{load_manifest, to_manifest_json};
use tplscan_core::featuredb::FeatureDb;
use tplscan_core::reporting::{render_text, report_libraries};
use tplscan_core::{BinaryFeatureSet, Provenance};

use crate::config::{Config, Format};
use crate::inputs::{list_inputs, read_feature_set, with_timeout, Timed};

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Partial,
}

fn is_integrity(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<tplscan_core::Error>(),
        Some(tplscan_core::Error::Integrity(_))
    )
}

fn required(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| anyhow!("configuration error: no {what} path given (flag or [paths] in the config)"))
}

fn load_model(path: Option<&Path>) -> Result<Option<EmbeddingModel>> {
    path.map(|p| EmbeddingModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .transpose()
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn db_build(cfg: &Config, input: &Path, db_dir: &Path, model: Option<&Path>) -> Result<Status> {
    let model = load_model(model)?.map(Arc::new);
    let opts = cfg.extract_options();
    let limit = Duration::from_secs(cfg.timeout_mins * 60);
    let paths = list_inputs(input)?;
    let mut status = Status::Success;
    if paths.is_empty() {
        warn!("{}: no input files", input.display());
    }

    type Job = Result<(BinaryFeatureSet, Option<Vec<FunctionVector>>)>;
    // One binary at a time: embedding inside a job runs on the rayon pool,
    // whose workers must stay free while the job is awaited.
    let results: Vec<(PathBuf, Result<Timed<Job>>)> = paths
        .iter()
        .map(|path| {
            let (p, opts, model) = (path.clone(), opts.clone(), model.clone());
            let outcome = with_timeout(limit, move || -> Job {
                let set = read_feature_set(&p, &opts)?;
                let vectors = model.as_deref().map(|m| m.embed_feature_set(&set)).transpose()?;
                Ok((set, vectors))
            });
            (path.clone(), outcome)
        })
        .collect();

    let fingerprint = model.as_ref().map(|m| m.fingerprint());
    let mut db = FeatureDb::new();
    for (path, outcome) in results {
        let indexed = match outcome? {
            Timed::TimedOut => {
                warn!("{}: timed out after {} min, skipped", path.display(), cfg.timeout_mins);
                status = Status::Partial;
                continue;
            }
            Timed::Done(job) => job.and_then(|(set, vectors)| {
                match &vectors {
                    Some(v) => db.index_unit_with_vectors(&set, v, fingerprint.as_deref())?,
                    None => db.index_unit(&set, None)?,
                };
                Ok(())
            }),
        };
        if let Err(e) = indexed {
            let e = e.context(path.display().to_string());
            if cfg.strict || is_integrity(&e) {
                return Err(e);
            }
            warn!("{e:#}; skipped");
            status = Status::Partial;
        }
    }
    db.persist(db_dir)?;
    println!(
        "db {}: {} units, {} basic features, {} postings, {} vectors",
        db_dir.display(),
        db.unit_count(),
        db.index().feature_count(),
        db.index().posting_count(),
        db.store().len()
    );
    Ok(status)
}

pub fn extract(cfg: &Config, input: &Path, output: Option<&Path>, provenance: Option<Provenance>) -> Result<Status> {
    let mut set = read_feature_set(input, &cfg.extract_options())?;
    if provenance.is_some() {
        set.provenance = provenance;
    }
    emit(&format!("{}\n", to_manifest_json(&set)), output)?;
    Ok(Status::Success)
}

pub fn train_model(cfg: &Config, pairs_path: &Path, output: &Path) -> Result<Status> {
    let pairs = load_training_pairs(pairs_path).with_context(|| format!("loading {}", pairs_path.display()))?;
    let mut tc = cfg.train.clone();
    if let Some(seed) = cfg.seed {
        tc.seed = seed;
    }
    let outcome = train(&pairs, &tc)?;
    outcome.model.save(output)?;
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "model {}: {} pairs, best epoch {} (validation loss {:.6}), fingerprint {}",
        output.display(),
        pairs.len(),
        outcome.best_epoch,
        best.validation_loss,
        outcome.model.fingerprint()
    );
    Ok(Status::Success)
}

pub fn scan(cfg: &Config, target: &Path, db_dir: &Path, model: Option<&Path>, output: Option<&Path>) -> Result<Status> {
    let db = FeatureDb::load(db_dir).with_context(|| format!("loading database {}", db_dir.display()))?;
    let model = load_model(model)?;
    let set = read_feature_set(target, &cfg.extract_options())?;
    let detector = Detector::new(&db, model.as_ref(), cfg.detection())?;
    let outcome = detector.scan(&set)?;
    for w in &outcome.warnings {
        warn!("{w}");
    }
    let report = report_libraries(&set.binary_id, &outcome.candidates)?;
    let text = match cfg.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report)?),
        Format::Text => render_text(&report),
    };
    emit(&text, output)?;
    Ok(if outcome.warnings.is_empty() {
        Status::Success
    } else {
        Status::Partial
    })
}

fn load_sets(dir: &Path, cfg: &Config) -> Result<Vec<BinaryFeatureSet>> {
    let opts = cfg.extract_options();
    list_inputs(dir)?
        .par_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| load_manifest(p, &opts).with_context(|| p.display().to_string()))
        .collect()
}

pub fn eval(
    cfg: &Config,
    corpus: &Path,
    model: Option<&Path>,
    variants: &[Variant],
    output: Option<&Path>,
) -> Result<Status> {
    let model = load_model(model)?;
    let units = load_sets(&corpus.join("db"), cfg)?;
    let targets = load_sets(&corpus.join("targets"), cfg)?;
    let truth = GroundTruth::load(corpus.join("ground_truth.json"))?;
    info!("{} units, {} targets", units.len(), targets.len());
    let db = build_database(&units, model.as_ref())?;
    let variants = if variants.is_empty() {
        &Variant::ALL[..]
    } else {
        variants
    };
    let rows = run_ablation(
        &db,
        model.as_ref(),
        &targets,
        &truth,
        variants,
        &cfg.detection(),
        &cfg.version_weights,
    )?;
    let csv = metrics_csv(&rows);
    let json = format!("{}\n", serde_json::to_string_pretty(&rows)?);
    match output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("metrics.csv"), &csv)?;
            fs::write(dir.join("metrics.json"), &json)?;
            print!("{csv}");
        }
        None => print!("{}", if cfg.format == Format::Json { &json } else { &csv }),
    }
    Ok(Status::Success)
}

pub fn corpus_gen(cfg: &Config, output: &Path) -> Result<Status> {
    let mut spec = cfg.corpus.clone();
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let corpus = generate_corpus(&spec)?;
    if output.exists() && fs::read_dir(output)?.next().is_some() {
        bail!("{} exists and is not empty", output.display());
    }
    corpus.write(output)?;
    println!(
        "corpus {}: {} units, {} targets, {} training pairs",
        output.display(),
        corpus.units.len(),
        corpus.targets.len(),
        corpus.training_pairs.len()
    );
    Ok(Status::Success)
}

pub fn resolve(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    required(flag.or_else(|| configured.clone()), what)
}
