//! Crowd-sourced EQ records: ingestion, normalization and fold construction.

mod folds;
mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use folds::{build_folds, Fold, FoldPlan, FoldRules, FoldSpec, FoldWords};
pub use synth::{SynthConfig, SynthData};

pub const NUM_BANDS: usize = 40;

/// Largest boost or cut representable in a curve, in dB.
pub const GAIN_LIMIT_DB: f64 = 4.0;

/// Strictly increasing band-center frequencies in Hz, one per EQ band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid(Arc<[f64]>);

impl BandGrid {
    pub fn new(centers_hz: Vec<f64>) -> Result<Self> {
        if centers_hz.len() != NUM_BANDS {
            return Err(Error::Argument(format!(
                "band grid needs {NUM_BANDS} centers, got {}",
                centers_hz.len()
            )));
        }
        if centers_hz.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::Argument(
                "band centers must be positive and finite".into(),
            ));
        }
        if centers_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "band centers must be strictly increasing".into(),
            ));
        }
        Ok(Self(centers_hz.into()))
    }

    /// Forty centers spaced evenly in log-frequency from 20 Hz to 20 kHz.
    pub fn log_spaced() -> Self {
        let ratio = 1000f64.powf(1.0 / (NUM_BANDS - 1) as f64);
        let centers = (0..NUM_BANDS)
            .map(|k| {
                if k == NUM_BANDS - 1 {
                    20_000.0
                } else {
                    20.0 * ratio.powi(k as i32)
                }
            })
            .collect::<Vec<_>>();
        Self(centers.into())
    }

    pub fn centers(&self) -> &[f64] {
        &self.0
    }
}

impl Default for BandGrid {
    fn default() -> Self {
        Self::log_spaced()
    }
}

/// A 40-band EQ curve: gains in dB anchored at band centers.
#[derive(Debug, Clone, PartialEq)]
pub struct EqCurve {
    gains_db: Vec<f64>,
    bands: BandGrid,
}

impl EqCurve {
    /// Validating constructor; gains must already lie in ±4 dB.
    pub fn new(gains_db: Vec<f64>, bands: BandGrid) -> Result<Self> {
        check_len(gains_db.len())?;
        if let Some(i) = gains_db
            .iter()
            .position(|g| !g.is_finite() || g.abs() > GAIN_LIMIT_DB)
        {
            return Err(Error::Domain(format!(
                "band {i} gain {} outside ±{GAIN_LIMIT_DB} dB",
                gains_db[i]
            )));
        }
        Ok(Self { gains_db, bands })
    }

    /// Saturates out-of-range gains to ±4 dB. Returns the curve and the
    /// number of bands that were clamped.
    pub fn clamped(gains_db: Vec<f64>, bands: BandGrid) -> Result<(Self, usize)> {
        check_len(gains_db.len())?;
        if gains_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("EQ gain is not finite".into()));
        }
        let mut clamped = 0;
        let gains_db = gains_db
            .into_iter()
            .map(|g| {
                let c = g.clamp(-GAIN_LIMIT_DB, GAIN_LIMIT_DB);
                if c != g {
                    clamped += 1;
                }
                c
            })
            .collect();
        Ok((Self { gains_db, bands }, clamped))
    }

    pub fn flat(bands: BandGrid) -> Self {
        Self {
            gains_db: vec![0.0; NUM_BANDS],
            bands,
        }
    }

    pub fn gains_db(&self) -> &[f64] {
        &self.gains_db
    }

    pub fn bands(&self) -> &BandGrid {
        &self.bands
    }

    pub fn band_centers_hz(&self) -> &[f64] {
        self.bands.centers()
    }
}

fn check_len(n: usize) -> Result<()> {
    if n != NUM_BANDS {
        return Err(Error::Shape {
            expected: NUM_BANDS,
            found: n,
        });
    }
    Ok(())
}

/// Network target: each band gain mapped linearly from ±4 dB onto [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTarget(Vec<f64>);

impl NormalizedTarget {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_len(values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!(
                "normalized value {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn normalize_gain(gain_db: f64) -> f64 {
    (gain_db + GAIN_LIMIT_DB) / (2.0 * GAIN_LIMIT_DB)
}

#[inline]
pub fn denormalize_gain(value: f64) -> f64 {
    value * (2.0 * GAIN_LIMIT_DB) - GAIN_LIMIT_DB
}

pub fn normalize_curve(curve: &EqCurve) -> NormalizedTarget {
    NormalizedTarget(curve.gains_db.iter().map(|&g| normalize_gain(g)).collect())
}

/// Maps normalized values back to dB. Values outside [0, 1] are a domain
/// error.
pub fn denormalize(values: &[f64]) -> Result<Vec<f64>> {
    check_len(values.len())?;
    values
        .iter()
        .map(|&v| {
            if (0.0..=1.0).contains(&v) {
                Ok(denormalize_gain(v))
            } else {
                Err(Error::Domain(format!(
                    "normalized value {v} outside [0, 1]"
                )))
            }
        })
        .collect()
}

/// One crowd-sourced record.
#[derive(Debug, Clone, PartialEq)]
pub struct EqExample {
    pub descriptor: String,
    pub language: String,
    pub audio_id: String,
    pub consistency: f64,
    pub curve: EqCurve,
}

impl EqExample {
    /// Lowercased, trimmed descriptor used for all word matching.
    pub fn word(&self) -> String {
        normalize_word(&self.descriptor)
    }
}

pub fn normalize_word(word: &str) -> String {
    word.trim().to_lowercase()
}

/// How gain columns are encoded in the source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainUnits {
    #[default]
    Db,
    /// Already mapped onto [0, 1]; converted back to dB on load.
    Normalized,
}

/// Maps dataset header names onto record fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub descriptor: String,
    pub language: String,
    pub audio_id: String,
    pub consistency: String,
    /// Explicit gain column names in band order. Takes precedence over
    /// `gain_prefix`.
    pub gains: Option<Vec<String>>,
    /// Gain columns named `<prefix>1` .. `<prefix>40`.
    pub gain_prefix: String,
    pub units: GainUnits,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            descriptor: "descriptor".into(),
            language: "language".into(),
            audio_id: "audio_id".into(),
            consistency: "consistency".into(),
            gains: None,
            gain_prefix: "band_".into(),
            units: GainUnits::Db,
        }
    }
}

impl ColumnMap {
    pub fn gain_columns(&self) -> Vec<String> {
        match &self.gains {
            Some(g) => g.clone(),
            None => (1..=NUM_BANDS)
                .map(|k| format!("{}{k}", self.gain_prefix))
                .collect(),
        }
    }
}

/// Parsed dataset plus any non-fatal problems met on the way.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub examples: Vec<EqExample>,
    pub warnings: Vec<String>,
    /// 1-based data row numbers (header excluded) that were rejected.
    pub rejected_rows: Vec<usize>,
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    columns: &ColumnMap,
    bands: &BandGrid,
) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, columns, bands)
}

pub fn read_dataset<R: Read>(
    reader: R,
    columns: &ColumnMap,
    bands: &BandGrid,
) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let gain_names = columns.gain_columns();
    if gain_names.len() != NUM_BANDS {
        return Err(Error::Schema(format!(
            "{} gain columns mapped, need exactly {NUM_BANDS}",
            gain_names.len()
        )));
    }
    let i_desc = find(&columns.descriptor)?;
    let i_lang = find(&columns.language)?;
    let i_audio = find(&columns.audio_id)?;
    let i_cons = find(&columns.consistency)?;
    let i_gains = gain_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut report = LoadReport::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.rejected_rows.push(row);
                report
                    .warnings
                    .push(format!("row {row}: unreadable record ({e})"));
                continue;
            }
        };
        match parse_row(
            &record,
            i_desc,
            i_lang,
            i_audio,
            i_cons,
            &i_gains,
            columns.units,
            bands,
        ) {
            Ok((example, clamped)) => {
                if clamped > 0 {
                    report.warnings.push(format!(
                        "row {row}: {clamped} gain value(s) clamped to ±{GAIN_LIMIT_DB} dB"
                    ));
                }
                report.examples.push(example);
            }
            Err(msg) => {
                report.rejected_rows.push(row);
                report.warnings.push(format!("row {row}: rejected, {msg}"));
            }
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    record: &csv::StringRecord,
    i_desc: usize,
    i_lang: usize,
    i_audio: usize,
    i_cons: usize,
    i_gains: &[usize],
    units: GainUnits,
    bands: &BandGrid,
) -> std::result::Result<(EqExample, usize), String> {
    let cell = |i: usize| {
        record
            .get(i)
            .ok_or_else(|| format!("missing field {}", i + 1))
    };
    let descriptor = cell(i_desc)?.to_string();
    if descriptor.is_empty() {
        return Err("empty descriptor".into());
    }
    let number = |i: usize| -> std::result::Result<f64, String> {
        let raw = cell(i)?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("field {} ({raw:?}) is not a finite number", i + 1))
    };
    let consistency = number(i_cons)?;
    if !(0.0..=1.0).contains(&consistency) {
        return Err(format!("consistency {consistency} outside [0, 1]"));
    }
    let gains = i_gains
        .iter()
        .map(|&i| {
            number(i).map(|v| match units {
                GainUnits::Db => v,
                GainUnits::Normalized => denormalize_gain(v),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let (curve, clamped) = EqCurve::clamped(gains, bands.clone()).map_err(|e| e.to_string())?;
    Ok((
        EqExample {
            descriptor,
            language: cell(i_lang)?.to_string(),
            audio_id: cell(i_audio)?.to_string(),
            consistency,
            curve,
        },
        clamped,
    ))
}

/// Writes examples in the layout [`read_dataset`] expects with the default
/// column map.
pub fn write_dataset<W: std::io::Write>(writer: W, examples: &[EqExample]) -> Result<()> {
    let map = ColumnMap::default();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        map.descriptor.clone(),
        map.language.clone(),
        map.audio_id.clone(),
        map.consistency.clone(),
    ];
    header.extend(map.gain_columns());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    wtr.write_record(&header).map_err(csv_err)?;
    for ex in examples {
        let mut rec = vec![
            ex.descriptor.clone(),
            ex.language.clone(),
            ex.audio_id.clone(),
            format!("{}", ex.consistency),
        ];
        rec.extend(ex.curve.gains_db().iter().map(|g| format!("{g}")));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub const ENGLISH: &str = "english";

/// Keeps rows whose language tag matches `tag` case-insensitively, in order.
pub fn filter_language(examples: &[EqExample], tag: &str) -> Vec<EqExample> {
    let tag = tag.trim();
    examples
        .iter()
        .filter(|e| e.language.trim().eq_ignore_ascii_case(tag))
        .cloned()
        .collect()
}

pub fn filter_english(examples: &[EqExample]) -> Vec<EqExample> {
    filter_language(examples, ENGLISH)
}

/// Examples grouped by normalized descriptor, each group in file order.
pub fn group_by_word(examples: &[EqExample]) -> BTreeMap<String, Vec<&EqExample>> {
    let mut groups: BTreeMap<String, Vec<&EqExample>> = BTreeMap::new();
    for ex in examples {
        groups.entry(ex.word()).or_default().push(ex);
    }
    groups
}

pub fn unique_descriptors(examples: &[EqExample]) -> usize {
    group_by_word(examples).len()
}

/// The curve of the most consistent example; ties go to the earliest row.
pub fn select_human_label(examples: &[&EqExample]) -> Result<EqCurve> {
    let mut best: Option<&EqExample> = None;
    for ex in examples {
        if best.is_none_or(|b| ex.consistency > b.consistency) {
            best = Some(ex);
        }
    }
    best.map(|e| e.curve.clone())
        .ok_or_else(|| Error::Argument("no examples to select a human label from".into()))
}

/// Component-wise mean of a word's curves. Needs at least two examples.
pub fn mean_human_label(examples: &[&EqExample]) -> Result<EqCurve> {
    if examples.len() < 2 {
        return Err(Error::Argument(format!(
            "mean label needs at least 2 examples, got {}",
            examples.len()
        )));
    }
    let n = examples.len() as f64;
    let mut mean = vec![0.0; NUM_BANDS];
    for ex in examples {
        mean.iter_mut()
            .zip(ex.curve.gains_db())
            .for_each(|(m, g)| *m += g);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    EqCurve::new(mean, examples[0].curve.bands().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: f64) -> EqCurve {
        EqCurve::new(vec![v; NUM_BANDS], BandGrid::default()).unwrap()
    }

    fn example(word: &str, consistency: f64, gain: f64) -> EqExample {
        EqExample {
            descriptor: word.into(),
            language: "English".into(),
            audio_id: "1".into(),
            consistency,
            curve: curve(gain),
        }
    }

    #[test]
    fn default_grid_endpoints() {
        let g = BandGrid::default();
        assert_eq!(g.centers().len(), 40);
        assert!((g.centers()[0] - 20.0).abs() < 1e-12);
        assert_eq!(g.centers()[39], 20_000.0);
        assert!(g.centers().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_validation() {
        assert!(BandGrid::new(vec![1.0; 40]).is_err());
        assert!(BandGrid::new(vec![1.0; 3]).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize_gain(-4.0), 0.0);
        assert_eq!(normalize_gain(4.0), 1.0);
        assert_eq!(normalize_gain(0.0), 0.5);
        assert_eq!(denormalize_gain(0.5), 0.0);
        assert_eq!(denormalize_gain(1.0), 4.0);
        assert!(matches!(denormalize(&[1.5; 40]), Err(Error::Domain(_))));
        assert!(matches!(denormalize(&[0.5; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn clamping_counts() {
        let mut g = vec![0.0; 40];
        g[3] = 7.3;
        g[4] = -9.0;
        let (c, n) = EqCurve::clamped(g, BandGrid::default()).unwrap();
        assert_eq!(n, 2);
        assert_eq!(c.gains_db()[3], 4.0);
        assert_eq!(c.gains_db()[4], -4.0);
        assert!(EqCurve::new(vec![4.5; 40], BandGrid::default()).is_err());
    }

    #[test]
    fn human_label_selection() {
        let a = example("warm", 0.71, 1.0);
        let b = example("warm", 0.93, 2.0);
        assert_eq!(select_human_label(&[&a, &b]).unwrap(), curve(2.0));
        assert_eq!(select_human_label(&[&a]).unwrap(), curve(1.0));
        let c = example("warm", 0.8, 3.0);
        let d = example("warm", 0.8, -3.0);
        assert_eq!(select_human_label(&[&c, &d]).unwrap(), curve(3.0));
        assert!(select_human_label(&[]).is_err());
    }

    #[test]
    fn mean_label() {
        let a = example("w", 0.5, 0.0);
        let b = example("w", 0.5, 2.0);
        assert_eq!(mean_human_label(&[&a, &b]).unwrap(), curve(1.0));
        assert_eq!(mean_human_label(&[&b, &b]).unwrap(), curve(2.0));
        assert!(mean_human_label(&[&a]).is_err());
    }

    #[test]
    fn english_filter_preserves_order() {
        let mut rows = vec![
            example("a", 0.5, 0.0),
            example("b", 0.5, 0.0),
            example("c", 0.5, 0.0),
        ];
        rows[1].language = "spanish".into();
        rows[2].language = " ENGLISH ".into();
        let kept = filter_english(&rows);
        assert_eq!(
            kept.iter()
                .map(|e| e.descriptor.as_str())
                .collect::<Vec<_>>(),
            ["a", "c"]
        );
        rows.iter_mut().for_each(|r| r.language = "italian".into());
        assert!(filter_english(&rows).is_empty());
    }
}
