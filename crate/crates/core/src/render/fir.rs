//! Linear-phase FIR realization of a 40-band EQ curve.
//!
//! The target magnitude is interpolated linearly in log-frequency between
//! the band anchors, sampled on a dense frequency grid, inverse transformed
//! with zero phase and truncated with a Kaiser window. Because truncation
//! smooths the response, a few correction passes re-aim the anchors at the
//! residual error measured at the band centers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::AudioBuffer;
use crate::dataset::EqCurve;
use crate::error::{Error, Result};

pub const DEFAULT_NUM_TAPS: usize = 2047;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirOptions {
    pub kaiser_beta: f64,
    pub correction_passes: usize,
    /// Dense design grid size as a multiple of the tap count (rounded up to
    /// a power of two).
    pub grid_oversampling: usize,
    /// Correction never moves an anchor further than this from its target.
    pub max_correction_db: f64,
}

impl Default for FirOptions {
    fn default() -> Self {
        Self {
            kaiser_beta: 2.0,
            correction_passes: 3,
            grid_oversampling: 8,
            max_correction_db: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirDesign {
    /// Symmetric impulse response; the delay is `(len - 1) / 2` samples.
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    /// Bands at or above Nyquist that were left out of the design.
    pub dropped_bands: Vec<f64>,
}

impl FirDesign {
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Zero-phase amplitude response at `freq_hz`, in dB.
    pub fn response_db(&self, freq_hz: f64) -> f64 {
        fir_response_db(&self.taps, self.sample_rate, freq_hz)
    }
}

/// Magnitude response in dB of a symmetric odd-length FIR at one frequency.
pub fn fir_response_db(taps: &[f64], sample_rate: u32, freq_hz: f64) -> f64 {
    let half = (taps.len() - 1) / 2;
    let w = std::f64::consts::TAU * freq_hz / f64::from(sample_rate);
    let amp = taps[half]
        + 2.0
            * (1..=half)
                .map(|k| taps[half + k] * (w * k as f64).cos())
                .sum::<f64>();
    20.0 * amp.abs().max(1e-300).log10()
}

/// Piecewise-linear interpolation in log-frequency; constant beyond the
/// outermost anchors.
fn interp_db(anchors_logf: &[f64], anchors_db: &[f64], freq_hz: f64) -> f64 {
    let n = anchors_logf.len();
    if freq_hz <= 0.0 {
        return anchors_db[0];
    }
    let lf = freq_hz.log10();
    if lf <= anchors_logf[0] {
        return anchors_db[0];
    }
    if lf >= anchors_logf[n - 1] {
        return anchors_db[n - 1];
    }
    let j = anchors_logf.partition_point(|&a| a <= lf);
    let t = (lf - anchors_logf[j - 1]) / (anchors_logf[j] - anchors_logf[j - 1]);
    anchors_db[j - 1] + t * (anchors_db[j] - anchors_db[j - 1])
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn frequency_sample(
    logf: &[f64],
    db: &[f64],
    sample_rate: u32,
    num_taps: usize,
    grid: usize,
    ifft: &Arc<dyn Fft<f64>>,
    window: &[f64],
) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let mut spec: Vec<Complex<f64>> = (0..grid)
        .map(|k| {
            let bin = if k <= grid / 2 { k } else { grid - k };
            let f = bin as f64 * fs / grid as f64;
            Complex::new(10f64.powf(interp_db(logf, db, f) / 20.0), 0.0)
        })
        .collect();
    ifft.process(&mut spec);
    let half = (num_taps - 1) / 2;
    let scale = 1.0 / grid as f64;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|m| {
            let idx = (m + grid - half) % grid;
            spec[idx].re * scale * window[m]
        })
        .collect();
    // exact symmetry
    for k in 0..half {
        let avg = 0.5 * (taps[k] + taps[num_taps - 1 - k]);
        taps[k] = avg;
        taps[num_taps - 1 - k] = avg;
    }
    taps
}

/// Designs a linear-phase FIR whose magnitude follows `curve`.
pub fn design_fir(
    curve: &EqCurve,
    sample_rate: u32,
    num_taps: usize,
    options: &FirOptions,
) -> Result<FirDesign> {
    if num_taps.is_multiple_of(2) || num_taps < 3 {
        return Err(Error::Argument(format!(
            "tap count {num_taps} must be odd and at least 3"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Argument("sample rate must be positive".into()));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    let mut logf = Vec::new();
    let mut target = Vec::new();
    let mut dropped = Vec::new();
    for (&f, &g) in curve.band_centers_hz().iter().zip(curve.gains_db()) {
        if f < nyquist {
            logf.push(f.log10());
            target.push(g);
        } else {
            dropped.push(f);
        }
    }
    if logf.is_empty() {
        return Err(Error::Argument("no band centers below Nyquist".into()));
    }

    let grid = (num_taps * options.grid_oversampling.max(2)).next_power_of_two();
    let ifft = FftPlanner::new().plan_fft_inverse(grid);
    let window = kaiser(num_taps, options.kaiser_beta);
    let mut aim = target.clone();
    let mut taps = frequency_sample(&logf, &aim, sample_rate, num_taps, grid, &ifft, &window);
    for _ in 0..options.correction_passes {
        for ((a, &t), &lf) in aim.iter_mut().zip(&target).zip(&logf) {
            let err = fir_response_db(&taps, sample_rate, 10f64.powf(lf)) - t;
            *a = (*a - err).clamp(t - options.max_correction_db, t + options.max_correction_db);
        }
        taps = frequency_sample(&logf, &aim, sample_rate, num_taps, grid, &ifft, &window);
    }
    Ok(FirDesign {
        taps,
        sample_rate,
        dropped_bands: dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderReport {
    /// Output samples with magnitude above 1.0.
    pub clipped_samples: usize,
    pub peak: f64,
    pub dropped_bands: Vec<f64>,
}

/// FFT overlap-add convolution, trimmed so output sample `n` lines up with
/// input sample `n`.
fn convolve_centered(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let n_taps = taps.len();
    let delay = (n_taps - 1) / 2;
    if x.is_empty() {
        return Vec::new();
    }
    let size = (4 * n_taps).next_power_of_two().max(1024);
    let block = size - n_taps + 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut h: Vec<Complex<f64>> = taps.iter().map(|&t| Complex::new(t, 0.0)).collect();
    h.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut h);

    let full_len = x.len() + n_taps - 1;
    let mut full = vec![0.0; full_len];
    let scale = 1.0 / size as f64;
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (b, chunk) in x.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, &s) in buf.iter_mut().zip(chunk) {
            c.re = s;
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&h).for_each(|(c, hk)| *c *= hk);
        inv.process(&mut buf);
        let start = b * block;
        let end = (start + chunk.len() + n_taps - 1).min(full_len);
        for (o, c) in full[start..end].iter_mut().zip(&buf) {
            *o += c.re * scale;
        }
    }
    full[delay..delay + x.len()].to_vec()
}

/// Filters every channel with the FIR designed for `curve`. Output length
/// equals input length; the filter delay is compensated. The output is not
/// normalized, so boosts may push samples past full scale; the report
/// counts them.
pub fn apply_eq(
    buffer: &AudioBuffer,
    curve: &EqCurve,
    num_taps: usize,
    options: &FirOptions,
) -> Result<(AudioBuffer, RenderReport)> {
    let design = design_fir(curve, buffer.sample_rate(), num_taps, options)?;
    let channels: Vec<Vec<f64>> = buffer
        .channels()
        .iter()
        .map(|ch| convolve_centered(ch, &design.taps))
        .collect();
    let out = AudioBuffer::new(channels, buffer.sample_rate())?;
    let clipped = out
        .channels()
        .iter()
        .flatten()
        .filter(|s| s.abs() > 1.0)
        .count();
    let report = RenderReport {
        clipped_samples: clipped,
        peak: out.peak(),
        dropped_bands: design.dropped_bands,
    };
    Ok((out, report))
}
