use std::collections::BTreeSet;

use wordeq::dataset::{
    build_folds, filter_english, normalize_gain, write_dataset, EqCurve, FoldSpec, SynthConfig,
};
use wordeq::embedding::cosine_similarity;
use wordeq::experiment::{
    run_cv, run_pcm_comparison, write_results, CvSettings, ExperimentConfig, SyntheticSettings,
    WordPlot, BASELINE_NAME, RESULT_FILES,
};
use wordeq::metrics::pcm_eq;
use wordeq::nn::{train, InputMode, Mlp, Sample, SampleInput, TrainConfig};
use wordeq::Error;

fn quick_config(epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        synthetic: Some(SyntheticSettings::default()),
        train: TrainConfig {
            max_epochs: epochs,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn short_run_writes_every_artifact() {
    let cfg = quick_config(2);
    let data = cfg.load_data().unwrap();
    let cv = run_cv(&data, &CvSettings::from(&cfg)).unwrap();
    assert_eq!(cv.runs.len(), 2);
    assert_eq!(cv.runs[1].spec.name, BASELINE_NAME);
    for run in &cv.runs {
        assert_eq!(run.folds.len(), 4);
        assert_eq!(run.models.len(), 4);
        let s = run.summary();
        assert!(s.mean.normalized > 0.0 && s.std.normalized >= 0.0);
        assert!((s.mean.db - 8.0 * s.mean.normalized).abs() < 1e-9);
        assert!((s.mean.summed - 40.0 * s.mean.normalized).abs() < 1e-9);
    }
    let pcm = run_pcm_comparison(&data, &cv).unwrap();
    assert!(pcm
        .rows
        .iter()
        .all(|r| r.occurrences >= 2 && r.human >= 0.0));
    assert_eq!(pcm.human_summary().count, pcm.rows.len());

    let dir = tempfile::tempdir().unwrap();
    let files = write_results(dir.path(), &data, &cv, Some(&pcm)).unwrap();
    for name in RESULT_FILES {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert_eq!(files.len(), RESULT_FILES.len() + 8);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains(&format!("fold_plan = {:08x}", cv.fingerprint)));

    let plot = WordPlot::build(&data, &cv, "Warm").unwrap();
    assert_eq!(plot.band_hz.len(), 40);
    assert_eq!(plot.series.len(), 2);
    let saved = WordPlot::from_saved_models(&data, dir.path(), true, "warm").unwrap();
    assert_eq!(saved, plot);
    let out = saved.export(dir.path().join("plots"), true).unwrap();
    assert_eq!(out.len(), 2);
    let csv = std::fs::read_to_string(&out[0]).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(matches!(
        WordPlot::build(&data, &cv, "synthword000"),
        Err(Error::Argument(_))
    ));
}

#[test]
fn config_file_drives_a_csv_dataset() {
    let synth = SynthConfig::default().generate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    write_dataset(&mut csv, &synth.examples).unwrap();
    std::fs::write(dir.path().join("data.csv"), csv).unwrap();
    let mut emb = Vec::new();
    synth.table.write_text(&mut emb).unwrap();
    std::fs::write(dir.path().join("vectors.txt"), emb).unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "dataset = \"data.csv\"\n[[embedding]]\nname = \"vec\"\npath = \"vectors.txt\"\ndim = 300\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(dir.path().join("exp.toml")).unwrap();
    let data = cfg.load_data().unwrap();
    assert_eq!(data.total_rows, 1595);
    assert_eq!(data.examples.len(), 918);
    assert_eq!(data.tables[0].name(), "vec");
    let direct = build_folds(&filter_english(&synth.examples), &FoldSpec::standard()).unwrap();
    assert_eq!(data.plan.fingerprint(), direct.fingerprint());
}

#[test]
fn related_words_get_closer_predictions_than_unrelated_ones() {
    let synth = SynthConfig::default().generate().unwrap();
    let english = filter_english(&synth.examples);
    let samples: Vec<Sample<f64>> = english
        .iter()
        .map(|ex| Sample {
            input: SampleInput::Dense(synth.table.lookup(&ex.word()).unwrap().into_inner()),
            target: ex
                .curve
                .gains_db()
                .iter()
                .map(|&g| normalize_gain(g))
                .collect(),
        })
        .collect();
    let mut model = Mlp::<f64>::init(InputMode::Embedding { dim: 300 }, 3).unwrap();
    train(
        &mut model,
        &samples,
        &TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let predict = |w: &str| {
        let p = model.predict(w, Some(&synth.table)).unwrap();
        EqCurve::new(p.gains_db(), Default::default()).unwrap()
    };

    let words: Vec<&String> = synth.clusters.keys().collect();
    let vec_of = |w: &str| synth.table.lookup(w).unwrap().into_inner();
    let (a, b) = words
        .iter()
        .flat_map(|a| words.iter().map(move |b| (*a, *b)))
        .find(|(a, b)| {
            a < b
                && synth.clusters[*a] == synth.clusters[*b]
                && cosine_similarity(&vec_of(a), &vec_of(b)).unwrap() > 0.8
        })
        .expect("a same-cluster pair with cosine above 0.8");
    let anchor = predict(a);
    let far = words
        .iter()
        .filter(|w| synth.clusters[**w] != synth.clusters[a])
        .max_by(|x, y| {
            let dx = pcm_eq(&synth.word_curves[a], &synth.word_curves[**x]).unwrap();
            let dy = pcm_eq(&synth.word_curves[a], &synth.word_curves[**y]).unwrap();
            dx.total_cmp(&dy)
        })
        .unwrap();
    let near_d = pcm_eq(&anchor, &predict(b)).unwrap();
    let far_d = pcm_eq(&anchor, &predict(far)).unwrap();
    assert!(near_d < far_d, "{a}/{b}: {near_d} vs {a}/{far}: {far_d}");
}

#[test]
fn fold_words_are_disjoint_from_training_words() {
    let cfg = quick_config(1);
    let data = cfg.load_data().unwrap();
    for f in &data.plan.folds {
        let train_words: BTreeSet<String> =
            f.train.iter().map(|&i| data.examples[i].word()).collect();
        assert!(train_words.is_disjoint(&f.test_words()));
        assert_eq!(
            f.train.len() + f.test.len() + excluded(&data, f),
            data.examples.len()
        );
    }
}

fn excluded(data: &wordeq::experiment::ExperimentData, f: &wordeq::dataset::Fold) -> usize {
    data.examples
        .iter()
        .filter(|e| {
            f.is_test_word(&e.word()) && e.consistency <= data.plan.rules.consistency_threshold
        })
        .count()
}

#[test]
fn absent_fold_words_are_reported() {
    let mut synth = SynthConfig::default().generate().unwrap();
    synth.examples.retain(|e| e.word() != "warm");
    let english = filter_english(&synth.examples);
    let plan = build_folds(&english, &FoldSpec::standard()).unwrap();
    let f = plan.fold_of_word("warm").unwrap();
    assert_eq!(plan.folds[f].missing_test_words, vec!["warm".to_string()]);
}

#[test]
fn overlapping_word_lists_fail_construction() {
    let synth = SynthConfig::default().generate().unwrap();
    let english = filter_english(&synth.examples);
    let mut spec = FoldSpec::standard();
    let hq = spec.folds[0].hq[0].clone();
    spec.folds[0].hr[0] = hq;
    assert!(matches!(
        build_folds(&english, &spec),
        Err(Error::Construction(_))
    ));
}
