//! Four-fold cross-validation over embedding tables and the one-hot
//! baseline, plus the PCM comparison against human labels.
//!
//! Every run is sequential and seeded from a single master seed, so two
//! runs with the same inputs produce bit-identical results.

mod config;
mod report;

use std::collections::BTreeMap;

pub use config::{EmbeddingSource, ExperimentConfig, SyntheticSettings};
pub use report::{model_path, summary_text, write_results, WordPlot, RESULT_FILES};

use crate::dataset::{
    group_by_word, mean_human_label, normalize_gain, select_human_label, EqCurve, EqExample,
    FoldPlan, NUM_BANDS,
};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::metrics::pcm_eq;
use crate::nn::{train, InputMode, Mlp, Sample, SampleInput, TrainConfig, TrainReport};

pub const BASELINE_NAME: &str = "one-hot";

/// Loaded inputs of an experiment: English examples, folds, tables.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub examples: Vec<EqExample>,
    pub plan: FoldPlan,
    pub tables: Vec<EmbeddingTable<f64>>,
    /// Row count before language filtering.
    pub total_rows: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Index into [`ExperimentData::tables`].
    Embedding(usize),
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
}

impl ExperimentData {
    pub fn model_specs(&self, include_baseline: bool) -> Vec<ModelSpec> {
        let mut specs: Vec<ModelSpec> = self
            .tables
            .iter()
            .enumerate()
            .map(|(i, t)| ModelSpec {
                name: t.name().to_string(),
                kind: ModelKind::Embedding(i),
            })
            .collect();
        if include_baseline {
            specs.push(ModelSpec {
                name: BASELINE_NAME.into(),
                kind: ModelKind::Baseline,
            });
        }
        specs
    }

    fn table(&self, kind: ModelKind) -> Option<&EmbeddingTable<f64>> {
        match kind {
            ModelKind::Embedding(i) => self.tables.get(i),
            ModelKind::Baseline => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub train: TrainConfig,
    pub master_seed: u64,
    pub include_baseline: bool,
}

impl From<&ExperimentConfig> for CvSettings {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            train: cfg.train.clone(),
            master_seed: cfg.master_seed,
            include_baseline: cfg.include_baseline,
        }
    }
}

/// Seed of the model at `model` position trained on fold `fold`.
pub fn fold_seed(master: u64, model: usize, fold: usize) -> u64 {
    master
        .wrapping_add(1_000_003u64.wrapping_mul(model as u64 + 1))
        .wrapping_add(7_919u64.wrapping_mul(fold as u64 + 1))
}

/// Test error on the three reporting scales.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorTriple {
    /// Mean absolute per-band error on the normalized [0, 1] scale.
    pub normalized: f64,
    /// The same error in dB.
    pub db: f64,
    /// Normalized absolute error summed over the 40 bands.
    pub summed: f64,
}

impl ErrorTriple {
    fn map2(a: &[Self], f: impl Fn(&[f64]) -> f64) -> Self {
        let pick = |g: fn(&Self) -> f64| f(&a.iter().map(g).collect::<Vec<_>>());
        Self {
            normalized: pick(|e| e.normalized),
            db: pick(|e| e.db),
            summed: pick(|e| e.summed),
        }
    }
}

/// Mean and sample standard deviation over folds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorSummary {
    pub mean: ErrorTriple,
    pub std: ErrorTriple,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n − 1) standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub errors: ErrorTriple,
    pub n_train: usize,
    pub n_test: usize,
    /// Training rows dropped because no part of the word had a vector.
    pub skipped_train: usize,
    /// Test words without a vector; their rows are not scored.
    pub skipped_test_words: Vec<String>,
    pub report: TrainReport,
    /// dB gains predicted for each resolvable test word of the fold.
    pub predictions: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub spec: ModelSpec,
    pub folds: Vec<FoldOutcome>,
    pub models: Vec<Mlp<f64>>,
}

impl ModelRun {
    pub fn summary(&self) -> ErrorSummary {
        let e: Vec<ErrorTriple> = self.folds.iter().map(|f| f.errors).collect();
        ErrorSummary {
            mean: ErrorTriple::map2(&e, mean),
            std: ErrorTriple::map2(&e, sample_std),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub fingerprint: u32,
    pub master_seed: u64,
    pub runs: Vec<ModelRun>,
}

impl CvResult {
    pub fn run(&self, name: &str) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.spec.name == name)
    }
}

fn sample_input(
    kind: ModelKind,
    table: Option<&EmbeddingTable<f64>>,
    mode: &InputMode,
    word: &str,
) -> Result<Option<SampleInput<f64>>> {
    Ok(match kind {
        ModelKind::Embedding(_) => table
            .expect("embedding model has a table")
            .embed_descriptor(word)?
            .map(|v| SampleInput::Dense(v.into_inner())),
        ModelKind::Baseline => Some(SampleInput::OneHot(mode.index_of(word))),
    })
}

/// Trains and scores one model on one fold.
pub fn run_fold(
    data: &ExperimentData,
    spec: &ModelSpec,
    model_pos: usize,
    fold: usize,
    settings: &CvSettings,
) -> Result<(FoldOutcome, Mlp<f64>)> {
    let f = data
        .plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::Argument(format!("no fold {fold}")))?;
    let table = data.table(spec.kind);
    let mode = match spec.kind {
        ModelKind::Embedding(_) => InputMode::Embedding {
            dim: table
                .ok_or_else(|| Error::Argument(format!("no embedding table for {}", spec.name)))?
                .dimension(),
        },
        ModelKind::Baseline => InputMode::one_hot(f.train.iter().map(|&i| data.examples[i].word())),
    };
    let seed = fold_seed(settings.master_seed, model_pos, fold);

    let mut samples = Vec::with_capacity(f.train.len());
    let mut skipped_train = 0;
    for &i in &f.train {
        let ex = &data.examples[i];
        match sample_input(spec.kind, table, &mode, &ex.word())? {
            Some(input) => samples.push(Sample {
                input,
                target: ex
                    .curve
                    .gains_db()
                    .iter()
                    .map(|&g| normalize_gain(g))
                    .collect(),
            }),
            None => skipped_train += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::Evaluation("no resolvable training rows".into()));
    }

    let mut model = Mlp::init(mode, seed)?;
    let cfg = TrainConfig {
        seed: seed ^ 0x5eed,
        ..settings.train.clone()
    };
    let report = train(&mut model, &samples, &cfg)?;

    let mut predictions = BTreeMap::new();
    let mut skipped_test_words = Vec::new();
    for word in f.test_words() {
        match model.predict(&word, table) {
            Ok(p) => {
                predictions.insert(word, p.normalized().to_vec());
            }
            Err(Error::Unresolvable(_)) => skipped_test_words.push(word),
            Err(e) => return Err(e),
        }
    }

    let mut per_example = Vec::new();
    for &i in &f.test {
        let ex = &data.examples[i];
        let Some(pred) = predictions.get(&ex.word()) else {
            continue;
        };
        let mut abs_norm = 0.0;
        let mut abs_db = 0.0;
        for (p, &t) in pred.iter().zip(ex.curve.gains_db()) {
            abs_norm += (p - normalize_gain(t)).abs();
            abs_db += (crate::dataset::denormalize_gain(*p) - t).abs();
        }
        per_example.push(ErrorTriple {
            normalized: abs_norm / NUM_BANDS as f64,
            db: abs_db / NUM_BANDS as f64,
            summed: abs_norm,
        });
    }
    if per_example.is_empty() {
        return Err(Error::Evaluation("no scorable test rows".into()));
    }
    let errors = ErrorTriple::map2(&per_example, mean);
    let predictions = predictions
        .into_iter()
        .map(|(w, p)| {
            (
                w,
                p.into_iter()
                    .map(crate::dataset::denormalize_gain)
                    .collect(),
            )
        })
        .collect();
    Ok((
        FoldOutcome {
            fold,
            seed,
            errors,
            n_train: samples.len(),
            n_test: per_example.len(),
            skipped_train,
            skipped_test_words,
            report,
            predictions,
        },
        model,
    ))
}

/// Runs every model on every fold, in a fixed order.
pub fn run_cv(data: &ExperimentData, settings: &CvSettings) -> Result<CvResult> {
    let fingerprint = data.plan.fingerprint();
    let mut runs = Vec::new();
    for (pos, spec) in data
        .model_specs(settings.include_baseline)
        .into_iter()
        .enumerate()
    {
        let mut folds = Vec::new();
        let mut models = Vec::new();
        for fold in 0..data.plan.folds.len() {
            let (outcome, model) =
                run_fold(data, &spec, pos, fold, settings).map_err(|e| Error::Experiment {
                    model: spec.name.clone(),
                    fold: fold + 1,
                    source: Box::new(e),
                })?;
            folds.push(outcome);
            models.push(model);
        }
        runs.push(ModelRun {
            spec,
            folds,
            models,
        });
    }
    if data.plan.fingerprint() != fingerprint {
        return Err(Error::State("fold plan changed during the run".into()));
    }
    Ok(CvResult {
        fingerprint,
        master_seed: settings.master_seed,
        runs,
    })
}

/// PCM scores of one test word in one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmRow {
    pub fold: usize,
    pub word: String,
    pub occurrences: usize,
    pub human: f64,
    /// One entry per model, `None` when the word had no vector.
    pub models: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcmSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl PcmSummary {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: sample_std(xs),
            count: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmComparison {
    pub model_names: Vec<String>,
    pub rows: Vec<PcmRow>,
}

impl PcmComparison {
    pub fn human_summary(&self) -> PcmSummary {
        PcmSummary::of(&self.rows.iter().map(|r| r.human).collect::<Vec<_>>())
    }

    pub fn model_summary(&self, name: &str) -> Option<PcmSummary> {
        let k = self.model_names.iter().position(|n| n == name)?;
        Some(PcmSummary::of(
            &self
                .rows
                .iter()
                .filter_map(|r| r.models[k])
                .collect::<Vec<_>>(),
        ))
    }
}

/// Scores, for every fold's test words occurring at least twice in the
/// whole set, the PCM distance from the mean human curve to the selected
/// human curve and to each model's prediction.
pub fn run_pcm_comparison(data: &ExperimentData, cv: &CvResult) -> Result<PcmComparison> {
    if data.plan.fingerprint() != cv.fingerprint {
        return Err(Error::State(
            "fold plan differs from the one used for training".into(),
        ));
    }
    let groups = group_by_word(&data.examples);
    let mut rows = Vec::new();
    for f in &data.plan.folds {
        for word in f.test_words() {
            let Some(examples) = groups.get(&word) else {
                continue;
            };
            if examples.len() < 2 {
                continue;
            }
            let reference = mean_human_label(examples)?;
            let human = pcm_eq(&reference, &select_human_label(examples)?)?;
            let mut models = Vec::with_capacity(cv.runs.len());
            for run in &cv.runs {
                let score = match run.folds[f.index].predictions.get(&word) {
                    Some(gains) => {
                        let curve = EqCurve::new(gains.clone(), reference.bands().clone())?;
                        Some(pcm_eq(&reference, &curve)?)
                    }
                    None => None,
                };
                models.push(score);
            }
            rows.push(PcmRow {
                fold: f.index,
                word,
                occurrences: examples.len(),
                human,
                models,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Evaluation(
            "no test word occurs at least twice".into(),
        ));
    }
    Ok(PcmComparison {
        model_names: cv.runs.iter().map(|r| r.spec.name.clone()).collect(),
        rows,
    })
}
