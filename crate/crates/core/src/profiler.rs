//! The trainable scoring unit and its on-disk artifact form.
//!
//! An artifact is a directory:
//!
//! ```text
//! config.yaml           configuration text as given to `train`
//! pipeline.json         tokenizer, extractor list, standardizer, feature means
//! model.json            task, label range and fitted learner
//! resources/unigram.tsv copied unigram table (when used)
//! resources/vectors.txt copied word vectors (when used)
//! manifest.json         format version, sha256 per file, creation time
//! ```
//!
//! All paths inside are relative, so artifacts can be moved freely.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    DatasetConfig, ExperimentConfig, FeatureSpec, LearnerConfig, ProfilerKind, UnigramSource,
};
use crate::dataset::{read_asap, read_text, read_tsv, split};
use crate::error::{Error, Result};
use crate::features::{fit_standardizer, Extractor, FeaturePipeline, Standardizer};
use crate::learners::{
    argmax, forest_fit, forest_predict, logistic_fit, logistic_predict_proba, ridge_fit,
    ridge_predict, Forest, ForestMode, ForestOutput, LinearModel, LogisticModel, Targets,
};
use crate::lingproc::{build_unigram_table, Tokenizer, UnigramTable, VectorTable};
use crate::metrics::{evaluate_all, MetricReport};
use crate::textmodel::{
    denormalize_score, label_to_score, normalize_score, score_to_label, Dataset, LabelSpec,
    Prediction, TaskKind,
};

pub const FORMAT_VERSION: &str = "1";

const MANIFEST: &str = "manifest.json";
const CONFIG_FILE: &str = "config.yaml";
const PIPELINE_FILE: &str = "pipeline.json";
const MODEL_FILE: &str = "model.json";
const UNIGRAM_FILE: &str = "resources/unigram.tsv";
const VECTORS_FILE: &str = "resources/vectors.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Logistic(LogisticModel),
    Forest(Forest),
}

impl Model {
    pub fn type_name(&self) -> &'static str {
        match self {
            Model::Linear(_) => "ridge",
            Model::Logistic(_) => "logistic",
            Model::Forest(f) if f.mode == ForestMode::Regression => "random_forest (regression)",
            Model::Forest(_) => "random_forest (classification)",
        }
    }

    fn task(&self) -> TaskKind {
        match self {
            Model::Linear(_) => TaskKind::Regression,
            Model::Logistic(_) => TaskKind::Classification,
            Model::Forest(f) => match f.mode {
                ForestMode::Regression => TaskKind::Regression,
                ForestMode::Classification => TaskKind::Classification,
            },
        }
    }

    fn dims(&self) -> usize {
        match self {
            Model::Linear(m) => m.weights.len(),
            Model::Logistic(m) => m.dims(),
            Model::Forest(f) => f.n_features,
        }
    }

    fn n_classes(&self) -> Option<usize> {
        match self {
            Model::Linear(_) => None,
            Model::Logistic(m) => Some(m.n_classes()),
            Model::Forest(f) => (f.mode == ForestMode::Classification).then_some(f.n_classes),
        }
    }
}

/// Raw model output for one feature row.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Output {
    /// Regression score on the label scale.
    Score(f64),
    Probs(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Profiler {
    task: TaskKind,
    pipeline: FeaturePipeline,
    model: Model,
    label_spec: LabelSpec,
    output_normalized: bool,
    feature_means: Vec<f64>,
    config_source: String,
}

/// Result of training from a configuration.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub profiler: Profiler,
    pub n_train: usize,
    /// Held-out metrics when the configuration asks for a split.
    pub heldout: Option<(usize, MetricReport)>,
}

impl Profiler {
    /// Assembles a profiler from already fitted parts. `feature_means` are the
    /// raw (unstandardized) training means used for feature ablation.
    pub fn from_parts(
        task: TaskKind,
        pipeline: FeaturePipeline,
        model: Model,
        label_spec: LabelSpec,
        output_normalized: bool,
        feature_means: Vec<f64>,
    ) -> Result<Self> {
        if model.task() != task {
            return Err(Error::TaskModelMismatch {
                task: task.to_string(),
                model: model.type_name().into(),
            });
        }
        let d = pipeline.dims();
        for got in [model.dims(), feature_means.len()] {
            if got != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got,
                    line: None,
                });
            }
        }
        if let Some(k) = model.n_classes() {
            if k != label_spec.len() {
                return Err(Error::CorruptArtifact(format!(
                    "model has {k} classes but label range {label_spec} has {}",
                    label_spec.len()
                )));
            }
        }
        Ok(Profiler {
            task,
            pipeline,
            model,
            label_spec,
            output_normalized: output_normalized && task == TaskKind::Regression,
            feature_means,
            config_source: String::new(),
        })
    }

    pub fn with_config_source(mut self, source: impl Into<String>) -> Self {
        self.config_source = source.into();
        self
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn label_spec(&self) -> LabelSpec {
        self.label_spec
    }

    pub fn output_normalized(&self) -> bool {
        self.output_normalized
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_names(&self) -> &[String] {
        self.pipeline.feature_names()
    }

    pub fn config_source(&self) -> &str {
        &self.config_source
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.pipeline.tokenize(text)
    }

    /// Model output for raw (unstandardized) feature values.
    pub(crate) fn output_raw(&self, raw: Vec<f64>) -> Result<Output> {
        let x = self.pipeline.finish(raw);
        match &self.model {
            Model::Linear(m) => self.scale(ridge_predict(m, &x)?).map(Output::Score),
            Model::Logistic(m) => logistic_predict_proba(m, &x).map(Output::Probs),
            Model::Forest(f) => match forest_predict(f, &x)? {
                ForestOutput::Value(v) => self.scale(v).map(Output::Score),
                ForestOutput::Probs(p) => Ok(Output::Probs(p)),
            },
        }
    }

    fn scale(&self, y: f64) -> Result<f64> {
        if self.output_normalized {
            denormalize_score(y, self.label_spec)
        } else {
            Ok(y)
        }
    }

    pub(crate) fn to_prediction(&self, out: Output) -> Result<Prediction> {
        match out {
            Output::Score(score) => Ok(Prediction {
                score,
                label: score_to_label(score, self.label_spec)?,
                probs: None,
            }),
            Output::Probs(probs) => {
                let label = self.label_spec.label_at(argmax(&probs));
                Ok(Prediction {
                    score: label_to_score(label, self.label_spec)?,
                    label,
                    probs: Some(probs),
                })
            }
        }
    }

    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Prediction> {
        let out = self.output_raw(self.pipeline.raw_features(tokens))?;
        self.to_prediction(out)
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        self.predict_tokens(&self.tokenize(text))
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Prediction>> {
        ds.iter().map(|inst| self.predict(&inst.text)).collect()
    }

    /// Predicts every instance and scores against the gold labels, using this
    /// profiler's label range.
    pub fn evaluate(&self, ds: &Dataset) -> Result<MetricReport> {
        let golds = ds.gold_labels()?;
        for (inst, &g) in ds.iter().zip(&golds) {
            if !self.label_spec.contains(g) {
                return Err(self.label_spec.out_of_range(g, inst.id.parse().ok()));
            }
        }
        let preds = self.predict_dataset(ds)?;
        evaluate_all(&preds, &golds, self.task, self.label_spec)
    }
}

// ---------------------------------------------------------------------------
// Training

fn load_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    match cfg {
        DatasetConfig::Tsv { path, label_spec, .. } => read_tsv(path, *label_spec),
        DatasetConfig::AsapAes {
            path,
            prompt_id,
            label_spec,
            ..
        } => read_asap(path, *prompt_id, *label_spec),
    }
    .map_err(|e| e.context("dataset.params.path"))
}

fn build_extractors(specs: &[FeatureSpec], tok: &Tokenizer) -> Result<Vec<Extractor>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let at = |e: Error| e.context(format!("profiler.params.features[{i}]"));
            Ok(match spec {
                FeatureSpec::TokenCount => Extractor::TokenCount,
                FeatureSpec::AvgTokenLength => Extractor::AvgTokenLength,
                FeatureSpec::UnigramLikelihood(UnigramSource::Table(p)) => {
                    Extractor::UnigramLikelihood(Arc::new(UnigramTable::load(p).map_err(at)?))
                }
                FeatureSpec::UnigramLikelihood(UnigramSource::Corpus(p)) => {
                    let text = read_text(p).map_err(at)?;
                    let table = build_unigram_table(text.lines(), tok)
                        .map_err(|e| at(e.context(p.display().to_string())))?;
                    Extractor::UnigramLikelihood(Arc::new(table))
                }
                FeatureSpec::DocEmbedding { vectors_path } => {
                    Extractor::DocEmbedding(Arc::new(VectorTable::load(vectors_path).map_err(at)?))
                }
            })
        })
        .collect()
}

fn check_task(cfg: &ExperimentConfig) -> Result<()> {
    let p = &cfg.profiler;
    let kind_task = match p.kind {
        ProfilerKind::FeatureRegressor => TaskKind::Regression,
        ProfilerKind::FeatureClassifier => TaskKind::Classification,
    };
    let mismatch = |model: &str| Error::TaskModelMismatch {
        task: cfg.task.to_string(),
        model: model.to_string(),
    };
    if kind_task != cfg.task {
        return Err(mismatch(p.kind.as_str()));
    }
    match (&p.learner, cfg.task) {
        (LearnerConfig::Ridge { .. }, TaskKind::Classification) => Err(mismatch("ridge")),
        (LearnerConfig::Logistic(_), TaskKind::Regression) => Err(mismatch("logistic")),
        _ => Ok(()),
    }
}

/// Trains on the dataset named in the configuration, holding out a test part
/// when a split is configured.
pub fn train_from_config(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    check_task(cfg)?;
    let ds = load_dataset(&cfg.dataset)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset.context("dataset.params.path"));
    }
    match cfg.dataset.split() {
        None => Ok(TrainOutcome {
            n_train: ds.len(),
            profiler: train_on(cfg, &ds)?,
            heldout: None,
        }),
        Some(s) => {
            let (tr, te) = split(&ds, s.train_ratio, s.seed).map_err(|e| e.context("dataset.params"))?;
            let profiler = train_on(cfg, &tr)?;
            let heldout = if te.is_empty() {
                None
            } else {
                Some((te.len(), profiler.evaluate(&te)?))
            };
            Ok(TrainOutcome {
                n_train: tr.len(),
                profiler,
                heldout,
            })
        }
    }
}

pub fn train(cfg: &ExperimentConfig) -> Result<Profiler> {
    train_from_config(cfg).map(|o| o.profiler)
}

/// Trains on an explicit dataset; the configuration's dataset section is only
/// used for its label range when the dataset has none of its own.
pub fn train_on(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Profiler> {
    check_task(cfg)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = &cfg.profiler;
    let spec = ds.label_spec();
    let golds = ds.gold_labels()?;

    let extractors = build_extractors(&p.features, &p.tokenizer)?;
    let mut pipeline = FeaturePipeline::new(p.tokenizer, extractors)?;
    let raw: Vec<Vec<f64>> = ds
        .iter()
        .map(|inst| pipeline.raw_features(&pipeline.tokenize(&inst.text)))
        .collect();
    let n = raw.len() as f64;
    let feature_means: Vec<f64> = (0..pipeline.dims())
        .map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let x = if p.standardize {
        let st: Standardizer = fit_standardizer(&raw)?;
        pipeline = pipeline.with_standardizer(st)?;
        raw.into_iter().map(|r| pipeline.finish(r)).collect()
    } else {
        raw
    };

    let output_normalized = p.output_normalized && cfg.task == TaskKind::Regression;
    let model = match cfg.task {
        TaskKind::Regression => {
            let y: Vec<f64> = golds
                .iter()
                .map(|&g| {
                    let s = label_to_score(g, spec)?;
                    if output_normalized {
                        normalize_score(s, spec)
                    } else {
                        Ok(s)
                    }
                })
                .collect::<Result<_>>()?;
            match &p.learner {
                LearnerConfig::Ridge { lambda } => Model::Linear(ridge_fit(&x, &y, *lambda)?),
                LearnerConfig::RandomForest(fc) => Model::Forest(forest_fit(&x, Targets::Regression(&y), fc)?),
                LearnerConfig::Logistic(_) => unreachable!("rejected by check_task"),
            }
        }
        TaskKind::Classification => {
            let idx: Vec<usize> = golds.iter().map(|&g| spec.index_of(g)).collect::<Result<_>>()?;
            let k = spec.len();
            match &p.learner {
                LearnerConfig::Logistic(lp) => Model::Logistic(logistic_fit(&x, &idx, k, *lp)?),
                LearnerConfig::RandomForest(fc) => Model::Forest(forest_fit(
                    &x,
                    Targets::Classification {
                        labels: &idx,
                        n_classes: k,
                    },
                    fc,
                )?),
                LearnerConfig::Ridge { .. } => unreachable!("rejected by check_task"),
            }
        }
    };
    Ok(
        Profiler::from_parts(cfg.task, pipeline, model, spec, output_normalized, feature_means)?
            .with_config_source(cfg.source.clone()),
    )
}

// ---------------------------------------------------------------------------
// Artifacts

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resource: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PipelineFile {
    tokenizer: Tokenizer,
    features: Vec<FeatureEntry>,
    feature_names: Vec<String>,
    standardizer: Option<Standardizer>,
    feature_means: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    task: TaskKind,
    label_spec: LabelSpec,
    output_normalized: bool,
    model: Model,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: String,
    /// Seconds since the Unix epoch; not covered by `digest`.
    created_unix: u64,
    files: BTreeMap<String, String>,
    digest: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn manifest_digest(version: &str, files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(version.as_bytes());
    h.update(b"\n");
    for (name, hash) in files {
        h.update(format!("{name}\t{hash}\n").as_bytes());
    }
    hex::encode(h.finalize())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

impl Profiler {
    /// File name to contents, excluding the manifest.
    fn artifact_files(&self) -> Result<BTreeMap<&'static str, String>> {
        let mut files = BTreeMap::new();
        let mut features = Vec::new();
        for e in self.pipeline.extractors() {
            let resource = match e {
                Extractor::UnigramLikelihood(t) => {
                    files.insert(UNIGRAM_FILE, t.to_tsv());
                    Some(UNIGRAM_FILE.to_string())
                }
                Extractor::DocEmbedding(v) => {
                    files.insert(VECTORS_FILE, v.to_text());
                    Some(VECTORS_FILE.to_string())
                }
                _ => None,
            };
            features.push(FeatureEntry {
                kind: e.type_name().to_string(),
                resource,
            });
        }
        let pipeline = PipelineFile {
            tokenizer: *self.pipeline.tokenizer(),
            features,
            feature_names: self.feature_names().to_vec(),
            standardizer: self.pipeline.standardizer().cloned(),
            feature_means: self.feature_means.clone(),
        };
        let model = ModelFile {
            task: self.task,
            label_spec: self.label_spec,
            output_normalized: self.output_normalized,
            model: self.model.clone(),
        };
        files.insert(CONFIG_FILE, self.config_source.clone());
        files.insert(PIPELINE_FILE, to_json(&pipeline)?);
        files.insert(MODEL_FILE, to_json(&model)?);
        Ok(files)
    }

    /// Serialized `model.json` contents.
    pub fn model_json(&self) -> Result<String> {
        Ok(self.artifact_files()?.remove(MODEL_FILE).expect("model file is always written"))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let files = self.artifact_files()?;
        fs::create_dir_all(dir.join("resources")).map_err(|e| Error::io(dir, e))?;
        let mut hashes = BTreeMap::new();
        for (name, content) in &files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            hashes.insert(name.to_string(), sha256_hex(content.as_bytes()));
        }
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            format_version: FORMAT_VERSION.into(),
            created_unix,
            digest: manifest_digest(FORMAT_VERSION, &hashes),
            files: hashes,
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, to_json(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::load_inner(dir).map_err(|e| e.context(dir.display().to_string()))
    }

    fn load_inner(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let raw: serde_json::Value = serde_json::from_str(&read(MANIFEST)?)
            .map_err(|e| Error::CorruptArtifact(format!("{MANIFEST}: {e}")))?;
        match raw.get("format_version").and_then(|v| v.as_str()) {
            Some(FORMAT_VERSION) => {}
            Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
            None => return Err(Error::CorruptArtifact(format!("{MANIFEST}: no format_version"))),
        }
        let manifest: Manifest =
            serde_json::from_value(raw).map_err(|e| Error::CorruptArtifact(format!("{MANIFEST}: {e}")))?;
        if manifest.digest != manifest_digest(&manifest.format_version, &manifest.files) {
            return Err(Error::CorruptArtifact(format!("{MANIFEST}: digest mismatch")));
        }
        for required in [CONFIG_FILE, PIPELINE_FILE, MODEL_FILE] {
            if !manifest.files.contains_key(required) {
                return Err(Error::CorruptArtifact(format!("{required} is not listed in the manifest")));
            }
        }
        let mut contents = BTreeMap::new();
        for (name, hash) in &manifest.files {
            if Path::new(name).is_absolute() || name.split('/').any(|c| c == "..") {
                return Err(Error::CorruptArtifact(format!("bad file name {name:?}")));
            }
            let text = read(name)?;
            if &sha256_hex(text.as_bytes()) != hash {
                return Err(Error::CorruptArtifact(format!("{name}: hash mismatch")));
            }
            contents.insert(name.as_str(), text);
        }
        let corrupt = |name: &str, e: &dyn std::fmt::Display| Error::CorruptArtifact(format!("{name}: {e}"));
        let pf: PipelineFile = serde_json::from_str(&contents[PIPELINE_FILE]).map_err(|e| corrupt(PIPELINE_FILE, &e))?;
        let mf: ModelFile = serde_json::from_str(&contents[MODEL_FILE]).map_err(|e| corrupt(MODEL_FILE, &e))?;

        let resource = |entry: &FeatureEntry| -> Result<&str> {
            let name = entry
                .resource
                .as_deref()
                .ok_or_else(|| corrupt(PIPELINE_FILE, &format!("{} has no resource", entry.kind)))?;
            contents
                .get(name)
                .map(String::as_str)
                .ok_or_else(|| corrupt(name, &"resource is not listed in the manifest"))
        };
        let extractors = pf
            .features
            .iter()
            .map(|f| {
                Ok(match f.kind.as_str() {
                    "token_count" => Extractor::TokenCount,
                    "avg_token_length" => Extractor::AvgTokenLength,
                    "unigram_likelihood" => Extractor::UnigramLikelihood(Arc::new(
                        UnigramTable::from_tsv(resource(f)?).map_err(|e| corrupt(UNIGRAM_FILE, &e))?,
                    )),
                    "doc_embedding" => Extractor::DocEmbedding(Arc::new(
                        VectorTable::parse(resource(f)?).map_err(|e| corrupt(VECTORS_FILE, &e))?,
                    )),
                    other => return Err(corrupt(PIPELINE_FILE, &format!("unknown feature {other:?}"))),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pipeline = FeaturePipeline::new(pf.tokenizer, extractors)?;
        if pipeline.feature_names() != pf.feature_names.as_slice() {
            return Err(corrupt(PIPELINE_FILE, &"feature names do not match the extractors"));
        }
        if let Some(st) = pf.standardizer {
            pipeline = pipeline.with_standardizer(st)?;
        }
        Profiler::from_parts(mf.task, pipeline, mf.model, mf.label_spec, mf.output_normalized, pf.feature_means)
            .map(|p| p.with_config_source(contents[CONFIG_FILE].clone()))
    }
}
