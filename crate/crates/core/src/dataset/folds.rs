//! Word-disjoint cross-validation folds.
//!
//! Each fold names its test words explicitly. The test split holds every
//! example of those words whose consistency exceeds the threshold; the
//! training split holds every example of every other word, unfiltered.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_word, EqExample};
use crate::error::{Error, Result};

const STANDARD_FOLDS: &str = include_str!("../../data/standard_folds.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldRules {
    pub hq_per_fold: usize,
    pub hr_per_fold: usize,
    /// Test examples need consistency strictly above this value.
    pub consistency_threshold: f64,
}

impl Default for FoldRules {
    fn default() -> Self {
        Self {
            hq_per_fold: 9,
            hr_per_fold: 22,
            consistency_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldWords {
    pub hq: Vec<String>,
    pub hr: Vec<String>,
}

/// Fold word lists as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    #[serde(flatten)]
    pub rules: FoldRules,
    #[serde(rename = "fold")]
    pub folds: Vec<FoldWords>,
}

pub const NUM_FOLDS: usize = 4;

impl FoldSpec {
    /// The shipped four-fold assignment.
    pub fn standard() -> Self {
        Self::parse(STANDARD_FOLDS).expect("bundled fold table parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec: FoldSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for f in &mut spec.folds {
            f.hq.iter_mut().for_each(|w| *w = normalize_word(w));
            f.hr.iter_mut().for_each(|w| *w = normalize_word(w));
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fold spec serializes")
    }

    /// Distinct HQ words over all folds, sorted.
    pub fn hq_words(&self) -> BTreeSet<String> {
        self.folds
            .iter()
            .flat_map(|f| f.hq.iter().cloned())
            .collect()
    }

    pub fn hr_words(&self) -> BTreeSet<String> {
        self.folds
            .iter()
            .flat_map(|f| f.hr.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    /// Zero-based fold number.
    pub index: usize,
    pub hq_words: BTreeSet<String>,
    pub hr_words: BTreeSet<String>,
    /// Indices into the example list the plan was built from.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Test words with no example above the consistency threshold.
    pub missing_test_words: Vec<String>,
}

impl Fold {
    pub fn test_words(&self) -> BTreeSet<String> {
        self.hq_words.union(&self.hr_words).cloned().collect()
    }

    pub fn is_test_word(&self, word: &str) -> bool {
        let w = normalize_word(word);
        self.hq_words.contains(&w) || self.hr_words.contains(&w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub rules: FoldRules,
}

impl FoldPlan {
    /// CRC-32 over every fold's train and test index lists; identifies the
    /// exact splits used by an experiment.
    pub fn fingerprint(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for f in &self.folds {
            h.update(&(f.index as u64).to_le_bytes());
            for list in [&f.train, &f.test] {
                h.update(&(list.len() as u64).to_le_bytes());
                for &i in list {
                    h.update(&(i as u64).to_le_bytes());
                }
            }
        }
        h.finalize()
    }

    pub fn fold_of_word(&self, word: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.is_test_word(word))
    }
}

/// Builds the word-disjoint folds and verifies every structural rule:
/// fold count, per-fold HQ/HR counts, HQ/HR disjointness, and that no test
/// word leaks into its fold's training split.
pub fn build_folds(examples: &[EqExample], spec: &FoldSpec) -> Result<FoldPlan> {
    let rules = spec.rules;
    if spec.folds.len() != NUM_FOLDS {
        return Err(Error::Construction(format!(
            "expected {NUM_FOLDS} folds, got {}",
            spec.folds.len()
        )));
    }
    let hq_all = spec.hq_words();
    let hr_all = spec.hr_words();
    if let Some(w) = hq_all.intersection(&hr_all).next() {
        return Err(Error::Construction(format!(
            "{w:?} is listed as both HQ and HR"
        )));
    }

    let words: Vec<String> = examples.iter().map(EqExample::word).collect();
    let mut folds = Vec::with_capacity(NUM_FOLDS);
    for (index, fw) in spec.folds.iter().enumerate() {
        let hq: BTreeSet<String> = fw.hq.iter().cloned().collect();
        let hr: BTreeSet<String> = fw.hr.iter().cloned().collect();
        if hq.len() != fw.hq.len() || hr.len() != fw.hr.len() {
            return Err(Error::Construction(format!(
                "fold {} repeats a word",
                index + 1
            )));
        }
        if hq.len() != rules.hq_per_fold || hr.len() != rules.hr_per_fold {
            return Err(Error::Construction(format!(
                "fold {} has {} HQ and {} HR words, expected {} and {}",
                index + 1,
                hq.len(),
                hr.len(),
                rules.hq_per_fold,
                rules.hr_per_fold
            )));
        }
        let test_set: HashSet<&str> = hq.iter().chain(&hr).map(String::as_str).collect();

        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut covered: HashSet<&str> = HashSet::new();
        for (i, (ex, w)) in examples.iter().zip(&words).enumerate() {
            if test_set.contains(w.as_str()) {
                if ex.consistency > rules.consistency_threshold {
                    test.push(i);
                    covered.insert(w.as_str());
                }
            } else {
                train.push(i);
            }
        }
        if let Some(&i) = train
            .iter()
            .find(|&&i| test_set.contains(words[i].as_str()))
        {
            return Err(Error::Construction(format!(
                "test word {:?} appears in the training split of fold {}",
                words[i],
                index + 1
            )));
        }
        let mut missing: Vec<String> = test_set
            .iter()
            .filter(|w| !covered.contains(*w))
            .map(|w| w.to_string())
            .collect();
        missing.sort();
        folds.push(Fold {
            index,
            hq_words: hq,
            hr_words: hr,
            train,
            test,
            missing_test_words: missing,
        });
    }

    Ok(FoldPlan { folds, rules })
}
