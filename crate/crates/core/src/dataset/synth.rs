//! Synthetic stand-in for the crowd-sourced dataset.
//!
//! Words are grouped into latent clusters. Every cluster owns a prototype EQ
//! curve and a centroid in embedding space; a word's curve is its cluster
//! prototype plus a small word-specific deviation, and its embedding is the
//! centroid plus isotropic noise. Individual examples add per-rater noise on
//! top of the word curve. The planted structure is what lets an
//! embedding-fed model generalize to held-out words while a one-hot model
//! cannot.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    normalize_word, BandGrid, EqCurve, EqExample, FoldSpec, ENGLISH, GAIN_LIMIT_DB, NUM_BANDS,
};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub english_rows: usize,
    pub unique_english_words: usize,
    pub non_english_rows: usize,
    pub num_clusters: usize,
    pub embedding_dim: usize,
    /// Scale of embedding components around the cluster centroid, relative
    /// to the centroid's own per-component scale.
    pub embedding_spread: f64,
    /// Amplitude (dB) of each word's deviation from its cluster prototype.
    pub word_deviation_db: f64,
    /// Amplitude (dB) of per-example rater noise.
    pub example_noise_db: f64,
    /// Test-fold words that must appear in the data.
    pub folds: FoldSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            english_rows: 918,
            unique_english_words: 388,
            non_english_rows: 677,
            num_clusters: 12,
            embedding_dim: 300,
            embedding_spread: 0.45,
            word_deviation_db: 0.5,
            example_noise_db: 0.35,
            folds: FoldSpec::standard(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub examples: Vec<EqExample>,
    pub table: EmbeddingTable<f64>,
    pub folds: FoldSpec,
    /// Latent cluster of every English word.
    pub clusters: BTreeMap<String, usize>,
    /// Noise-free curve of every English word.
    pub word_curves: BTreeMap<String, EqCurve>,
}

const OTHER_LANGUAGES: [&str; 4] = ["spanish", "italian", "german", "french"];

impl SynthConfig {
    pub fn generate(&self) -> Result<SynthData> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let bands = BandGrid::default();
        let log_f: Vec<f64> = bands.centers().iter().map(|f| f.log10()).collect();

        let mut fold_words: Vec<String> = Vec::new();
        for f in &self.folds.folds {
            for w in f.hq.iter().chain(&f.hr) {
                let w = normalize_word(w);
                if !fold_words.contains(&w) {
                    fold_words.push(w);
                }
            }
        }
        if self.unique_english_words < fold_words.len() {
            return Err(Error::Argument(format!(
                "{} unique words requested but the folds name {}",
                self.unique_english_words,
                fold_words.len()
            )));
        }
        if self.num_clusters == 0 || self.embedding_dim == 0 {
            return Err(Error::Argument(
                "need at least one cluster and dimension".into(),
            ));
        }
        let fillers = self.unique_english_words - fold_words.len();

        // Fold words get two to four rows each so every one of them is
        // eligible for the repeated-word comparison; filler words share
        // whatever remains, at least one row apiece.
        let mut rows_per_word: Vec<usize> =
            fold_words.iter().map(|_| rng.gen_range(2..=4)).collect();
        let fold_rows: usize = rows_per_word.iter().sum();
        let min_needed = fold_rows + fillers;
        if self.english_rows < min_needed {
            return Err(Error::Argument(format!(
                "{} English rows cannot cover {} words (need at least {min_needed})",
                self.english_rows, self.unique_english_words
            )));
        }
        let mut filler_rows = vec![1usize; fillers];
        let mut spare = self.english_rows - min_needed;
        if fillers == 0 {
            while spare > 0 {
                let i = rng.gen_range(0..rows_per_word.len());
                rows_per_word[i] += 1;
                spare -= 1;
            }
        } else {
            while spare > 0 {
                let i = rng.gen_range(0..fillers);
                filler_rows[i] += 1;
                spare -= 1;
            }
        }

        let mut words: Vec<(String, usize, bool)> = fold_words
            .iter()
            .cloned()
            .zip(rows_per_word)
            .map(|(w, n)| (w, n, true))
            .collect();
        words.extend(
            filler_rows
                .into_iter()
                .enumerate()
                .map(|(i, n)| (format!("synthword{i:03}"), n, false)),
        );

        let prototypes: Vec<Vec<f64>> = (0..self.num_clusters)
            .map(|_| prototype_curve(&mut rng, &log_f))
            .collect();
        let centroids: Vec<Vec<f64>> = (0..self.num_clusters)
            .map(|_| {
                (0..self.embedding_dim)
                    .map(|_| 0.5 * standard_normal(&mut rng))
                    .collect()
            })
            .collect();

        let mut clusters = BTreeMap::new();
        let mut word_curves = BTreeMap::new();
        let mut entries = Vec::with_capacity(words.len());
        let mut english = Vec::with_capacity(self.english_rows);
        for (i, (word, n_rows, is_fold_word)) in words.iter().enumerate() {
            // round-robin keeps cluster sizes balanced within the fold words
            let cluster = if *is_fold_word {
                i % self.num_clusters
            } else {
                rng.gen_range(0..self.num_clusters)
            };
            clusters.insert(word.clone(), cluster);
            let deviation = smooth_bumps(&mut rng, &log_f, 2, self.word_deviation_db);
            let base: Vec<f64> = prototypes[cluster]
                .iter()
                .zip(&deviation)
                .map(|(p, d)| (p + d).clamp(-GAIN_LIMIT_DB, GAIN_LIMIT_DB))
                .collect();
            word_curves.insert(word.clone(), EqCurve::new(base.clone(), bands.clone())?);

            let vector: Vec<f64> = centroids[cluster]
                .iter()
                .map(|c| c + 0.5 * self.embedding_spread * standard_normal(&mut rng))
                .collect();
            entries.push((word.clone(), vector));

            for r in 0..*n_rows {
                let noise = smooth_bumps(&mut rng, &log_f, 2, self.example_noise_db);
                let gains: Vec<f64> = base
                    .iter()
                    .zip(&noise)
                    .map(|(b, e)| b + e + 0.03 * standard_normal(&mut rng))
                    .collect();
                let (curve, _) = EqCurve::clamped(gains, bands.clone())?;
                let consistency = if *is_fold_word && r == 0 {
                    rng.gen_range(0.72..0.98)
                } else {
                    rng.gen_range(0.2..1.0)
                };
                english.push(EqExample {
                    descriptor: word.clone(),
                    language: ENGLISH.to_string(),
                    audio_id: format!("{}", rng.gen_range(0..3)),
                    consistency: round3(consistency),
                    curve,
                });
            }
        }
        english.shuffle(&mut rng);

        let mut examples = english;
        for i in 0..self.non_english_rows {
            let lang = OTHER_LANGUAGES[i % OTHER_LANGUAGES.len()];
            let gains = smooth_bumps(&mut rng, &log_f, 3, 2.0);
            let (curve, _) = EqCurve::clamped(gains, bands.clone())?;
            let at = rng.gen_range(0..=examples.len());
            examples.insert(
                at,
                EqExample {
                    descriptor: format!("palabra{:03}", i % 150),
                    language: lang.to_string(),
                    audio_id: format!("{}", rng.gen_range(0..3)),
                    consistency: round3(rng.gen_range(0.2..1.0)),
                    curve,
                },
            );
        }

        let table = EmbeddingTable::from_entries("synthetic", entries)?;
        Ok(SynthData {
            examples,
            table,
            folds: self.folds.clone(),
            clusters,
            word_curves,
        })
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Two or three broad bumps with amplitudes of 1.5–3.5 dB.
fn prototype_curve<R: Rng>(rng: &mut R, log_f: &[f64]) -> Vec<f64> {
    let n = rng.gen_range(2..=3);
    let mut curve = vec![0.0; NUM_BANDS];
    for _ in 0..n {
        let centre = rng.gen_range(1.4..4.2);
        let width = rng.gen_range(0.2..0.45);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let amp = sign * rng.gen_range(1.5..3.5);
        add_bump(&mut curve, log_f, centre, width, amp);
    }
    curve
        .into_iter()
        .map(|g| g.clamp(-GAIN_LIMIT_DB, GAIN_LIMIT_DB))
        .collect()
}

/// `count` Gaussian bumps in log-frequency with normally distributed
/// amplitudes of standard deviation `scale_db`.
fn smooth_bumps<R: Rng>(rng: &mut R, log_f: &[f64], count: usize, scale_db: f64) -> Vec<f64> {
    let mut curve = vec![0.0; NUM_BANDS];
    for _ in 0..count {
        let centre = rng.gen_range(1.3..4.3);
        let width = rng.gen_range(0.15..0.4);
        let amp = scale_db * standard_normal(rng);
        add_bump(&mut curve, log_f, centre, width, amp);
    }
    curve
}

fn add_bump(curve: &mut [f64], log_f: &[f64], centre: f64, width: f64, amp: f64) {
    for (g, x) in curve.iter_mut().zip(log_f) {
        let z = (x - centre) / width;
        *g += amp * (-0.5 * z * z).exp();
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
