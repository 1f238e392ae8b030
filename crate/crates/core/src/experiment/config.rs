//! Experiment configuration file (TOML).
//!
//! ```toml
//! dataset = "socialeq.csv"
//! master_seed = 2021
//! include_baseline = true
//!
//! [columns]
//! gain_prefix = "band_"
//!
//! [[embedding]]
//! name = "glove-840b"
//! path = "glove.840B.300d.txt"
//!
//! [train]
//! max_epochs = 500
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_folds, filter_language, load_dataset, BandGrid, ColumnMap, EqExample, FoldSpec,
    SynthConfig, ENGLISH,
};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

use super::ExperimentData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub name: String,
    pub path: PathBuf,
    /// Required vector width; unchecked when absent.
    #[serde(default)]
    pub dim: Option<usize>,
}

/// Settings for generating the synthetic dataset in place of a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub seed: u64,
    pub english_rows: usize,
    pub unique_english_words: usize,
    pub non_english_rows: usize,
    pub num_clusters: usize,
    pub embedding_dim: usize,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            seed: d.seed,
            english_rows: d.english_rows,
            unique_english_words: d.unique_english_words,
            non_english_rows: d.non_english_rows,
            num_clusters: d.num_clusters,
            embedding_dim: d.embedding_dim,
        }
    }
}

impl SyntheticSettings {
    pub fn to_synth_config(&self, folds: FoldSpec) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            english_rows: self.english_rows,
            unique_english_words: self.unique_english_words,
            non_english_rows: self.non_english_rows,
            num_clusters: self.num_clusters,
            embedding_dim: self.embedding_dim,
            folds,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Used when `dataset` is absent.
    pub synthetic: Option<SyntheticSettings>,
    pub language: String,
    pub columns: ColumnMap,
    pub band_centers_hz: Option<Vec<f64>>,
    /// Fold word lists; the bundled four-fold table when absent.
    pub folds: Option<PathBuf>,
    #[serde(rename = "embedding")]
    pub embeddings: Vec<EmbeddingSource>,
    pub include_baseline: bool,
    pub master_seed: u64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: None,
            language: ENGLISH.into(),
            columns: ColumnMap::default(),
            band_centers_hz: None,
            folds: None,
            embeddings: Vec::new(),
            include_baseline: true,
            master_seed: 2021,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.dataset.as_mut() {
            fix(p);
        }
        if let Some(p) = self.folds.as_mut() {
            fix(p);
        }
        for e in &mut self.embeddings {
            fix(&mut e.path);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() && !self.include_baseline && self.synthetic.is_none() {
            return Err(Error::Config(
                "no embedding tables and baseline disabled".into(),
            ));
        }
        if self.dataset.is_none() && self.synthetic.is_none() {
            return Err(Error::Config(
                "set either `dataset` or `[synthetic]`".into(),
            ));
        }
        self.train.validate()
    }

    pub fn band_grid(&self) -> Result<BandGrid> {
        match &self.band_centers_hz {
            Some(c) => BandGrid::new(c.clone()).map_err(|e| Error::Config(e.to_string())),
            None => Ok(BandGrid::default()),
        }
    }

    pub fn fold_spec(&self) -> Result<FoldSpec> {
        match &self.folds {
            Some(p) => FoldSpec::load(p),
            None => Ok(FoldSpec::standard()),
        }
    }

    /// Loads (or generates) everything the experiment needs.
    pub fn load_data(&self) -> Result<ExperimentData> {
        self.validate()?;
        let spec = self.fold_spec()?;
        let (all, mut tables, warnings): (Vec<EqExample>, Vec<EmbeddingTable<f64>>, Vec<String>) =
            match (&self.dataset, &self.synthetic) {
                (Some(path), _) => {
                    let report = load_dataset(path, &self.columns, &self.band_grid()?)?;
                    (report.examples, Vec::new(), report.warnings)
                }
                (None, Some(s)) => {
                    let data = s.to_synth_config(spec.clone()).generate()?;
                    (data.examples, vec![data.table], Vec::new())
                }
                (None, None) => unreachable!("validated above"),
            };
        for src in &self.embeddings {
            let mut t = EmbeddingTable::load(&src.path, src.dim)?;
            t = t.renamed(&src.name);
            tables.push(t);
        }
        let examples = filter_language(&all, &self.language);
        if examples.is_empty() {
            return Err(Error::Schema(format!(
                "no rows with language {:?}",
                self.language
            )));
        }
        let plan = build_folds(&examples, &spec)?;
        Ok(ExperimentData {
            total_rows: all.len(),
            examples,
            plan,
            tables,
            warnings,
        })
    }
}
