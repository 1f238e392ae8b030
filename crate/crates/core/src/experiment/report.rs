use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{group_by_word, normalize_word, select_human_label, EqCurve};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::nn::Mlp;

use super::{CvResult, ExperimentData, PcmComparison};

/// Files written by [`write_results`] besides the model weights.
pub const RESULT_FILES: [&str; 4] = ["summary.txt", "errors.csv", "folds.csv", "pcm.csv"];

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `key = value` lines; floats use the shortest round-trip form, so equal
/// results give byte-identical files.
pub fn summary_text(data: &ExperimentData, cv: &CvResult, pcm: Option<&PcmComparison>) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("fold_plan", format!("{:08x}", cv.fingerprint));
    kv("master_seed", cv.master_seed.to_string());
    kv("english_rows", data.examples.len().to_string());
    kv("total_rows", data.total_rows.to_string());
    for run in &cv.runs {
        let n = &run.spec.name;
        let sum = run.summary();
        for (scale, m, sd) in [
            ("normalized", sum.mean.normalized, sum.std.normalized),
            ("db", sum.mean.db, sum.std.db),
            ("summed", sum.mean.summed, sum.std.summed),
        ] {
            kv(&format!("{n}.{scale}.mean"), m.to_string());
            kv(&format!("{n}.{scale}.std"), sd.to_string());
        }
        for f in &run.folds {
            kv(
                &format!("{n}.fold{}.normalized", f.fold + 1),
                f.errors.normalized.to_string(),
            );
        }
    }
    if let Some(p) = pcm {
        let h = p.human_summary();
        kv("pcm.words", h.count.to_string());
        kv("pcm.human.mean", h.mean.to_string());
        kv("pcm.human.std", h.std.to_string());
        for name in &p.model_names {
            if let Some(m) = p.model_summary(name) {
                kv(&format!("pcm.{name}.mean"), m.mean.to_string());
                kv(&format!("pcm.{name}.std"), m.std.to_string());
            }
        }
    }
    s
}

/// Where [`write_results`] stores the weights of `model` on zero-based
/// `fold`.
pub fn model_path(dir: &Path, model: &str, fold: usize) -> PathBuf {
    dir.join("models")
        .join(format!("{model}-fold{}.weqm", fold + 1))
}

/// Writes the summary, result tables and per-fold weights under `dir`.
pub fn write_results(
    dir: impl AsRef<Path>,
    data: &ExperimentData,
    cv: &CvResult,
    pcm: Option<&PcmComparison>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("models")).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, bytes)?;
        written.push(p);
        Ok(())
    };

    put("summary.txt", summary_text(data, cv, pcm).as_bytes())?;

    let rows: Vec<Vec<String>> = cv
        .runs
        .iter()
        .map(|r| {
            let s = r.summary();
            vec![
                r.spec.name.clone(),
                s.mean.normalized.to_string(),
                s.std.normalized.to_string(),
                s.mean.db.to_string(),
                s.std.db.to_string(),
                s.mean.summed.to_string(),
                s.std.summed.to_string(),
            ]
        })
        .collect();
    let header = strings([
        "model",
        "normalized_mean",
        "normalized_std",
        "db_mean",
        "db_std",
        "summed_mean",
        "summed_std",
    ]);
    put("errors.csv", &csv_bytes(&header, &rows)?)?;

    let mut rows = Vec::new();
    for r in &cv.runs {
        for f in &r.folds {
            rows.push(vec![
                r.spec.name.clone(),
                (f.fold + 1).to_string(),
                f.seed.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.skipped_train.to_string(),
                f.errors.normalized.to_string(),
                f.errors.db.to_string(),
                f.errors.summed.to_string(),
                f.report.final_loss().to_string(),
                f.report.epoch_losses.len().to_string(),
            ]);
        }
    }
    let header = strings([
        "model",
        "fold",
        "seed",
        "train_rows",
        "test_rows",
        "skipped_train_rows",
        "normalized",
        "db",
        "summed",
        "final_train_loss",
        "epochs",
    ]);
    put("folds.csv", &csv_bytes(&header, &rows)?)?;

    if let Some(p) = pcm {
        let mut header = strings(["fold", "word", "occurrences", "human"]);
        header.extend(p.model_names.iter().cloned());
        let rows: Vec<Vec<String>> = p
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    (r.fold + 1).to_string(),
                    r.word.clone(),
                    r.occurrences.to_string(),
                    r.human.to_string(),
                ];
                row.extend(r.models.iter().map(|&m| opt(m)));
                row
            })
            .collect();
        put("pcm.csv", &csv_bytes(&header, &rows)?)?;
    }

    for r in &cv.runs {
        for (k, m) in r.models.iter().enumerate() {
            let p = model_path(dir, &r.spec.name, k);
            write_atomic(&p, &m.to_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Band-by-band curves of one test word: the selected human label and
/// each model's prediction from the fold holding the word out.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPlot {
    pub word: String,
    pub fold: usize,
    pub band_hz: Vec<f64>,
    pub human_db: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl WordPlot {
    fn human(data: &ExperimentData, word: &str) -> Result<(String, usize, EqCurve)> {
        let word = normalize_word(word);
        let fold = data
            .plan
            .fold_of_word(&word)
            .ok_or_else(|| Error::Argument(format!("{word:?} is not a test word of any fold")))?;
        let groups = group_by_word(&data.examples);
        let examples = groups
            .get(&word)
            .ok_or_else(|| Error::Argument(format!("{word:?} has no examples")))?;
        let human = select_human_label(examples)?;
        Ok((word, fold, human))
    }

    fn assemble(
        word: String,
        fold: usize,
        human: EqCurve,
        series: Vec<(String, Vec<f64>)>,
    ) -> Self {
        Self {
            word,
            fold,
            band_hz: human.band_centers_hz().to_vec(),
            human_db: human.gains_db().to_vec(),
            series,
        }
    }

    /// Uses the predictions stored in a finished cross-validation run.
    pub fn build(data: &ExperimentData, cv: &CvResult, word: &str) -> Result<Self> {
        let (word, fold, human) = Self::human(data, word)?;
        let series = cv
            .runs
            .iter()
            .filter_map(|r| {
                r.folds[fold]
                    .predictions
                    .get(&word)
                    .map(|p| (r.spec.name.clone(), p.clone()))
            })
            .collect();
        Ok(Self::assemble(word, fold, human, series))
    }

    /// Uses the weights saved by [`write_results`] under `results_dir`.
    /// Models whose file is missing are left out.
    pub fn from_saved_models(
        data: &ExperimentData,
        results_dir: &Path,
        include_baseline: bool,
        word: &str,
    ) -> Result<Self> {
        let (word, fold, human) = Self::human(data, word)?;
        let mut series = Vec::new();
        for spec in data.model_specs(include_baseline) {
            let path = model_path(results_dir, &spec.name, fold);
            if !path.exists() {
                continue;
            }
            let model = Mlp::<f64>::load(&path)?;
            match model.predict(&word, data.table(spec.kind)) {
                Ok(p) => series.push((spec.name, p.gains_db())),
                Err(Error::Unresolvable(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self::assemble(word, fold, human, series))
    }

    /// Writes `<word>.csv` and, when `svg` is set, `<word>.svg` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>, svg: bool) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem: String = self
            .word
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let csv_path = dir.join(format!("{stem}.csv"));
        write_atomic(&csv_path, &self.to_csv()?)?;
        let mut out = vec![csv_path];
        if svg {
            let p = dir.join(format!("{stem}.svg"));
            write_atomic(&p, self.to_svg().as_bytes())?;
            out.push(p);
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut header = strings(["band_hz", "human_db"]);
        header.extend(self.series.iter().map(|(n, _)| format!("{n}_db")));
        let rows: Vec<Vec<String>> = (0..self.band_hz.len())
            .map(|i| {
                let mut row = vec![self.band_hz[i].to_string(), self.human_db[i].to_string()];
                row.extend(self.series.iter().map(|(_, s)| s[i].to_string()));
                row
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    /// A small self-contained SVG line chart on a log-frequency axis.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 320.0;
        const PAD: f64 = 40.0;
        const COLORS: [&str; 6] = [
            "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
        ];
        let lo = self.band_hz.first().copied().unwrap_or(20.0).log10();
        let hi = self.band_hz.last().copied().unwrap_or(20_000.0).log10();
        let x = |hz: f64| PAD + (hz.log10() - lo) / (hi - lo).max(1e-12) * (W - 2.0 * PAD);
        let y = |db: f64| H / 2.0 - db / 4.0 * (H / 2.0 - PAD);
        let line = |ys: &[f64]| {
            self.band_hz
                .iter()
                .zip(ys)
                .map(|(&f, &g)| format!("{:.2},{:.2}", x(f), y(g)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="#999" stroke-dasharray="4 3"/>"##,
            H / 2.0,
            W - PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="14">{} (fold {})</text>"#,
            self.word,
            self.fold + 1
        );
        let mut all = vec![("human".to_string(), self.human_db.clone())];
        all.extend(self.series.iter().cloned());
        for (k, (name, ys)) in all.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            let _ = writeln!(
                s,
                r##"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"##,
                line(ys)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{c}" font-family="sans-serif" font-size="12">{name}</text>"#,
                W - PAD - 110.0,
                20.0 + 14.0 * k as f64
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_and_csv_shapes() {
        let band_hz: Vec<f64> = crate::dataset::BandGrid::default().centers().to_vec();
        let plot = WordPlot {
            word: "warm".into(),
            fold: 0,
            human_db: vec![1.0; band_hz.len()],
            series: vec![("m".into(), vec![-1.0; band_hz.len()])],
            band_hz,
        };
        let csv = String::from_utf8(plot.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 41);
        assert!(csv.starts_with("band_hz,human_db,m_db"));
        let svg = plot.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
