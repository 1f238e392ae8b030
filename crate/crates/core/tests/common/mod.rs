//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordeq::dataset::{BandGrid, EqCurve, NUM_BANDS};
use wordeq::nn::{mae_loss, Input, Mlp};
use wordeq::render::{apply_eq, AudioBuffer, FirOptions};

/// PCM by exhaustive offset search: a uniform grid of `steps` offsets over
/// the admissible range, then ternary refinement within one grid step of
/// every local minimum of the grid.
pub fn pcm_oracle(reference: &[(f64, f64)], candidate: &[(f64, f64)], steps: usize) -> f64 {
    let xs: Vec<f64> = reference.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = reference.iter().map(|p| p.1).collect();
    let lo_x = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_x = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo_y = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sx = if hi_x > lo_x { hi_x - lo_x } else { 1.0 };
    let sy = if hi_y > lo_y { hi_y - lo_y } else { 1.0 };
    let scale = |c: &[(f64, f64)]| -> Vec<(f64, f64)> {
        c.iter()
            .map(|&(x, y)| ((x - lo_x) / sx, (y - lo_y) / sy))
            .collect()
    };
    let cum = |c: &[(f64, f64)]| -> Vec<f64> {
        let mut out = vec![0.0];
        for i in 1..c.len() {
            let d = ((c[i].0 - c[i - 1].0).powi(2) + (c[i].1 - c[i - 1].1).powi(2)).sqrt();
            out.push(out[i - 1] + d);
        }
        out
    };
    let a = scale(reference);
    let b = scale(candidate);
    let (la, lb) = (cum(&a), cum(&b));
    let (short, ls, long, ll) = if lb.last() < la.last() {
        (b, lb, a, la)
    } else {
        (a, la, b, lb)
    };
    let point_at = |s: f64| -> (f64, f64) {
        let total = *ll.last().unwrap();
        let s = s.clamp(0.0, total);
        for i in 1..long.len() {
            if s <= ll[i] || i == long.len() - 1 {
                let seg = ll[i] - ll[i - 1];
                let t = if seg > 0.0 {
                    ((s - ll[i - 1]) / seg).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                return (
                    long[i - 1].0 + t * (long[i].0 - long[i - 1].0),
                    long[i - 1].1 + t * (long[i].1 - long[i - 1].1),
                );
            }
        }
        long[0]
    };
    let area = |o: f64| -> f64 {
        let d: Vec<f64> = short
            .iter()
            .zip(&ls)
            .map(|(p, &s)| {
                let q = point_at(o + s);
                ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
            })
            .collect();
        (1..short.len())
            .map(|k| 0.5 * (d[k] + d[k - 1]) * (ls[k] - ls[k - 1]))
            .sum()
    };
    let slack = (ll.last().unwrap() - ls.last().unwrap()).max(0.0);
    if slack == 0.0 {
        return area(0.0);
    }
    let h = slack / steps as f64;
    let grid: Vec<f64> = (0..=steps).map(|i| area(i as f64 * h)).collect();
    let mut best = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    for i in 0..=steps {
        let left = if i > 0 { grid[i - 1] } else { f64::INFINITY };
        let right = if i < steps {
            grid[i + 1]
        } else {
            f64::INFINITY
        };
        if grid[i] <= left && grid[i] <= right {
            let (mut lo, mut hi) = (
                ((i as f64) - 1.0).max(0.0) * h,
                ((i as f64 + 1.0) * h).min(slack),
            );
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if area(m1) < area(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            best = best.min(area(0.5 * (lo + hi)));
        }
    }
    best
}

/// Relative error with an absolute floor, so vanishing gradients compare
/// on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

fn kink_signature(model: &Mlp<f64>, x: &[f64], target: &[f64]) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = model.forward_train(Input::Dense(x), 0.0, &mut rng).unwrap();
    let mut sig: Vec<bool> = cache.gates().iter().flatten().map(|g| *g > 0.0).collect();
    sig.extend(cache.output().iter().zip(target).map(|(p, t)| p > t));
    sig
}

/// Compares analytic gradients against central differences for
/// `per_layer` randomly chosen weights and biases of every layer. Probes
/// whose perturbation flips a ReLU gate or the sign of an output residual
/// sit on a kink and are skipped.
pub fn gradient_check(
    model: &mut Mlp<f64>,
    x: &[f64],
    target: &[f64],
    per_layer: usize,
    step: f64,
    seed: u64,
) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grads = model.gradients();
    let cache = model.forward_train(Input::Dense(x), 0.0, &mut rng).unwrap();
    model.backward(&cache, target, &mut grads).unwrap();
    let base_sig = kink_signature(model, x, target);
    let loss = |m: &Mlp<f64>| mae_loss(&m.forward(Input::Dense(x)).unwrap(), target).unwrap();
    let mut out = GradCheck::default();
    for layer in 0..model.layers().len() {
        let n_w = model.layers()[layer].weights().len();
        let n_b = model.layers()[layer].bias().len();
        for probe in 0..2 * per_layer {
            let is_bias = probe >= per_layer;
            let idx = rng.gen_range(0..if is_bias { n_b } else { n_w });
            let analytic = if is_bias {
                grads.bias(layer)[idx]
            } else {
                grads.weights(layer)[idx]
            };
            let orig = if is_bias {
                model.layers()[layer].bias()[idx]
            } else {
                model.layers()[layer].weights()[idx]
            };
            let eval = |delta: f64, model: &mut Mlp<f64>| {
                let l = &mut model.layers_mut()[layer];
                if is_bias {
                    l.bias_mut()[idx] = orig + delta;
                } else {
                    l.weights_mut()[idx] = orig + delta;
                }
                (loss(model), kink_signature(model, x, target))
            };
            let (plus, sig_p) = eval(step, model);
            let (minus, sig_m) = eval(-step, model);
            eval(0.0, model);
            if sig_p != base_sig || sig_m != base_sig {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            out.checked += 1;
            out.max_rel_err = out.max_rel_err.max(rel_err(analytic, numeric));
        }
    }
    out
}

/// Random curve built from a few Gaussian bumps in log-frequency.
pub fn smooth_random_curve(rng: &mut impl Rng) -> EqCurve {
    let grid = BandGrid::default();
    let xs: Vec<f64> = grid.centers().iter().map(|f| f.log10()).collect();
    let mut gains = vec![0.0; NUM_BANDS];
    for _ in 0..3 {
        let center = rng.gen_range(1.3..4.3);
        let width: f64 = rng.gen_range(0.15..0.5);
        let height = rng.gen_range(-3.0..3.0);
        for (g, x) in gains.iter_mut().zip(&xs) {
            *g += height * (-0.5 * ((x - center) / width).powi(2)).exp();
        }
    }
    for g in &mut gains {
        *g = g.clamp(-3.9, 3.9);
    }
    EqCurve::new(gains, grid).unwrap()
}

/// Amplitude of the `freq` component of `x[range]`, by least-squares fit
/// of a sine and cosine pair.
pub fn tone_amplitude(x: &[f64], sample_rate: f64, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        let (s, c) = (w * n as f64).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    (a * a + b * b).sqrt()
}

/// Gain in dB that `apply_eq` gives a sine at `freq`, measured away from
/// the signal edges.
pub fn sine_probe_db(curve: &EqCurve, sample_rate: u32, taps: usize, freq: f64) -> f64 {
    let n = sample_rate as usize;
    let sr = sample_rate as f64;
    let x: Vec<f64> = (0..n)
        .map(|i| 0.25 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin())
        .collect();
    let buf = AudioBuffer::mono(x.clone(), sample_rate).unwrap();
    let (y, _) = apply_eq(&buf, curve, taps, &FirOptions::default()).unwrap();
    let edge = taps;
    let y = &y.channels()[0][edge..n - edge];
    let x = &x[edge..n - edge];
    20.0 * (tone_amplitude(y, sr, freq) / tone_amplitude(x, sr, freq)).log10()
}
