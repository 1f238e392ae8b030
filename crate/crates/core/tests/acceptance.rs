//! Acceptance checks, one PASS/FAIL line each.
//!
//! Criterion 5 uses the real dataset when `WORDEQ_DATASET` (ratings CSV)
//! and `WORDEQ_EMBEDDING` (300-d text table) are set, and the synthetic
//! clustered dataset otherwise.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordeq::dataset::{
    build_folds, denormalize_gain, filter_english, normalize_gain, BandGrid, EqCurve, FoldSpec,
    SynthConfig,
};
use wordeq::experiment::{
    run_cv, run_pcm_comparison, write_results, CvResult, CvSettings, EmbeddingSource,
    ExperimentConfig, ExperimentData, SyntheticSettings, BASELINE_NAME,
};
use wordeq::metrics::pcm_distance;
use wordeq::nn::{InputMode, Mlp, TrainConfig};
use wordeq::render::{apply_eq, AudioBuffer, FirOptions};
use wordeq::Curve2D;

use common::{gradient_check, pcm_oracle, sine_probe_db, smooth_random_curve};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("took {elapsed:.1?}, limit {limit:?}"),
    )
}

fn fold_protocol() -> Check {
    let synth = SynthConfig::default()
        .generate()
        .map_err(|e| e.to_string())?;
    let english = filter_english(&synth.examples);
    let spec = FoldSpec::standard();
    let t = Instant::now();
    let plan = build_folds(&english, &spec).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(plan.folds.len() == 4, "fold count")?;
    let mut hq = std::collections::BTreeSet::new();
    let mut hr = std::collections::BTreeSet::new();
    for f in &plan.folds {
        ensure(
            f.hq_words.len() == 9 && f.hr_words.len() == 22,
            format!("fold {} sizes", f.index + 1),
        )?;
        hq.extend(f.hq_words.iter().cloned());
        hr.extend(f.hr_words.iter().cloned());
        let test_words = f.test_words();
        for &i in &f.train {
            ensure(
                !test_words.contains(&english[i].word()),
                format!("fold {} leaks {}", f.index + 1, english[i].word()),
            )?;
        }
        for &i in &f.test {
            ensure(
                english[i].consistency > 0.7,
                "test example with consistency <= 0.7",
            )?;
            ensure(
                test_words.contains(&english[i].word()),
                "test example of a non-test word",
            )?;
        }
        ensure(
            f.missing_test_words.is_empty(),
            "test word without a qualifying example",
        )?;
    }
    ensure(hq.len() == 32, format!("{} distinct HQ words", hq.len()))?;
    ensure(hr.len() == 86, format!("{} distinct HR words", hr.len()))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "4 folds of 9 HQ + 22 HR, 32/86 distinct, built in {elapsed:.1?}"
    ))
}

fn gradients() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dim = 24;
        let mut model =
            Mlp::<f64>::init(InputMode::Embedding { dim }, seed).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = gradient_check(&mut model, &x, &target, 12, 1e-5, seed);
        worst = worst.max(g.max_rel_err);
        checked += g.checked;
        skipped += g.skipped_kinks;
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.3e}"))?;
    ensure(
        checked > 10 * skipped,
        format!("{skipped} of {} probes on kinks", checked + skipped),
    )?;
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "20 seeded networks, {checked} probes ({skipped} on kinks skipped), max rel err {worst:.2e}"
    ))
}

fn normalization() -> Check {
    ensure(
        normalize_gain(-4.0) == 0.0 && normalize_gain(4.0) == 1.0,
        "endpoints",
    )?;
    ensure(
        denormalize_gain(0.0) == -4.0 && denormalize_gain(1.0) == 4.0,
        "inverse endpoints",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        for _ in 0..40 {
            let g: f64 = rng.gen_range(-4.0..=4.0);
            worst = worst.max((denormalize_gain(normalize_gain(g)) - g).abs());
        }
    }
    ensure(worst <= 1e-12, format!("round-trip error {worst:e}"))?;
    Ok(format!(
        "10^4 curves, max round-trip error {worst:.1e}, endpoints exact"
    ))
}

fn random_curve(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.gen_range(2..=8);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x += rng.gen_range(0.05..1.0);
            (x, rng.gen_range(-4.0..4.0))
        })
        .collect()
}

fn pcm_oracle_equivalence() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = random_curve(&mut rng);
        let b = random_curve(&mut rng);
        let got = pcm_distance(
            &Curve2D::from_points(&a).unwrap(),
            &Curve2D::from_points(&b).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let want = pcm_oracle(&a, &b, 20_000);
        worst = worst.max((got - want).abs());
        let self_dist = pcm_distance(
            &Curve2D::from_points(&a).unwrap(),
            &Curve2D::from_points(&a).unwrap(),
        )
        .unwrap();
        ensure(self_dist.abs() < 1e-9, format!("pcm(A, A) = {self_dist:e}"))?;
    }
    ensure(worst < 1e-6, format!("oracle disagreement {worst:e}"))?;
    let xs: Vec<f64> = (0..40).map(|i| 1.3 + 0.077 * i as f64).collect();
    let zero = Curve2D::new(xs.clone(), vec![0.0; 40]).unwrap();
    let mut last = 0.0;
    for delta in [0.5, 1.0, 2.0] {
        let d = pcm_distance(&zero, &Curve2D::new(xs.clone(), vec![delta; 40]).unwrap()).unwrap();
        ensure(d > last, format!("not monotone at offset {delta}"))?;
        last = d;
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "100 pairs, max |pcm - oracle| {worst:.1e}; pcm(A,A)=0; monotone in offset"
    ))
}

fn acceptance_config() -> ExperimentConfig {
    let train = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    match (
        std::env::var_os("WORDEQ_DATASET"),
        std::env::var_os("WORDEQ_EMBEDDING"),
    ) {
        (Some(d), Some(e)) => ExperimentConfig {
            dataset: Some(PathBuf::from(d)),
            embeddings: vec![EmbeddingSource {
                name: "embedding".into(),
                path: PathBuf::from(e),
                dim: Some(300),
            }],
            train,
            ..ExperimentConfig::default()
        },
        _ => ExperimentConfig {
            synthetic: Some(SyntheticSettings::default()),
            train,
            ..ExperimentConfig::default()
        },
    }
}

fn ordering(data: &ExperimentData, cv: &CvResult) -> Check {
    let pcm = run_pcm_comparison(data, cv).map_err(|e| e.to_string())?;
    let emb_name = &data.tables[0].name().to_string();
    let emb = cv.run(emb_name).ok_or("no embedding run")?.summary();
    let base = cv.run(BASELINE_NAME).ok_or("no baseline run")?.summary();
    let h = pcm.human_summary();
    let pe = pcm.model_summary(emb_name).ok_or("no embedding PCM")?;
    let pb = pcm.model_summary(BASELINE_NAME).ok_or("no baseline PCM")?;
    let detail = format!(
        "error {:.3} vs {:.3}; PCM human {:.3} < embedding {:.3} < baseline {:.3}; PCM std {:.3} vs {:.3}",
        emb.mean.normalized, base.mean.normalized, h.mean, pe.mean, pb.mean, pe.std, pb.std
    );
    ensure(
        emb.mean.normalized < base.mean.normalized,
        format!("(a) fails: {detail}"),
    )?;
    ensure(
        h.mean * 1.5 <= pe.mean,
        format!("(b) human/embedding gap: {detail}"),
    )?;
    ensure(
        pe.mean * 1.5 <= pb.mean,
        format!("(b) embedding/baseline gap: {detail}"),
    )?;
    ensure(pb.std > pe.std, format!("(c) fails: {detail}"))?;
    Ok(detail)
}

fn baseline_degeneracy(data: &ExperimentData, cv: &CvResult) -> Check {
    let run = cv.run(BASELINE_NAME).ok_or("no baseline run")?;
    let mut words = 0;
    for (f, outcome) in run.folds.iter().enumerate() {
        let vocab = match run.models[f].mode() {
            InputMode::OneHot { vocab } => vocab.clone(),
            _ => return Err("baseline is not one-hot".into()),
        };
        let unseen: Vec<&Vec<f64>> = outcome
            .predictions
            .iter()
            .filter(|(w, _)| vocab.binary_search(w).is_err())
            .map(|(_, p)| p)
            .collect();
        ensure(
            unseen.len() == data.plan.folds[f].test_words().len(),
            "a test word is in the training vocabulary",
        )?;
        ensure(
            unseen.windows(2).all(|w| w[0] == w[1]),
            format!("fold {} predictions differ", f + 1),
        )?;
        words += unseen.len();
    }
    Ok(format!(
        "{words} unseen test words, one identical prediction per fold"
    ))
}

fn rendering() -> Check {
    let t = Instant::now();
    let sr = 44_100;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let curve = smooth_random_curve(&mut rng);
        for (&f, &g) in curve.band_centers_hz().iter().zip(curve.gains_db()) {
            if f >= sr as f64 / 2.0 {
                continue;
            }
            let measured = sine_probe_db(&curve, sr, 2047, f);
            worst = worst.max((measured - g).abs());
        }
    }
    ensure(worst <= 0.5, format!("max band error {worst:.3} dB"))?;
    let x: Vec<f64> = (0..sr as usize).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let buf = AudioBuffer::mono(x.clone(), sr).unwrap();
    let (y, _) = apply_eq(
        &buf,
        &EqCurve::flat(BandGrid::default()),
        2047,
        &FirOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let diff: f64 = x
        .iter()
        .zip(&y.channels()[0])
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let energy: f64 = x.iter().map(|a| a * a).sum();
    let flat_db = 10.0 * (diff / energy).log10();
    ensure(
        flat_db < -60.0,
        format!("flat curve residual {flat_db:.1} dB"),
    )?;
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "20 smooth random curves, max band error {worst:.3} dB; flat residual {flat_db:.0} dB"
    ))
}

fn determinism() -> Check {
    let cfg = ExperimentConfig {
        synthetic: Some(SyntheticSettings::default()),
        master_seed: 99,
        train: TrainConfig {
            max_epochs: 4,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut listings = Vec::new();
    for d in &dirs {
        let data = cfg.load_data().map_err(|e| e.to_string())?;
        let cv = run_cv(&data, &CvSettings::from(&cfg)).map_err(|e| e.to_string())?;
        let pcm = run_pcm_comparison(&data, &cv).map_err(|e| e.to_string())?;
        let files = write_results(d.path(), &data, &cv, Some(&pcm)).map_err(|e| e.to_string())?;
        let mut contents = Vec::new();
        for f in files {
            let rel = f.strip_prefix(d.path()).unwrap().to_path_buf();
            contents.push((rel, std::fs::read(&f).unwrap()));
        }
        listings.push(contents);
    }
    ensure(
        listings[0].len() == listings[1].len(),
        "different file sets",
    )?;
    for ((p, a), (q, b)) in listings[0].iter().zip(&listings[1]) {
        ensure(p == q && a == b, format!("{} differs", p.display()))?;
    }
    Ok(format!(
        "{} output files bitwise identical across two runs",
        listings[0].len()
    ))
}

fn run(id: u32, name: &str, check: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("criterion {id} [{name}]: PASS ({secs:.1}s) {detail}");
            true
        }
        Err(why) => {
            println!("criterion {id} [{name}]: FAIL ({secs:.1}s) {why}");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, "fold protocol", fold_protocol);
    ok &= run(2, "gradient correctness", gradients);
    ok &= run(3, "normalization", normalization);
    ok &= run(4, "PCM oracle equivalence", pcm_oracle_equivalence);

    let cfg = acceptance_config();
    let source = if cfg.dataset.is_some() {
        "real data"
    } else {
        "synthetic data"
    };
    let t = Instant::now();
    let shared = cfg
        .load_data()
        .and_then(|data| run_cv(&data, &CvSettings::from(&cfg)).map(|cv| (data, cv)));
    println!(
        "cross-validation on {source}: {:.1}s",
        t.elapsed().as_secs_f64()
    );
    match &shared {
        Ok((data, cv)) => {
            ok &= run(5, "ordering reproduction", || ordering(data, cv));
            ok &= run(6, "baseline degeneracy", || baseline_degeneracy(data, cv));
        }
        Err(e) => {
            println!("criterion 5 [ordering reproduction]: FAIL {e}");
            println!("criterion 6 [baseline degeneracy]: FAIL {e}");
            ok = false;
        }
    }
    ok &= run(7, "rendering fidelity", rendering);
    ok &= run(8, "determinism", determinism);
    if !ok {
        std::process::exit(1);
    }
}
