//! Time-domain double-resonance signal synthesis and spectral analysis:
//! multi-frequency combs, decaying cosine traces, periodograms, and
//! least-squares signal fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{levenberg_marquardt, LmOptions};

/// One spectral line of a modulation comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombLine {
    /// Non-negative line frequency, Hz.
    pub frequency_hz: f64,
    pub weight: f64,
}

fn push_line(lines: &mut Vec<CombLine>, frequency_hz: f64, weight: f64) {
    let f = frequency_hz.abs();
    if let Some(l) = lines.iter_mut().find(|l| l.frequency_hz == f) {
        l.weight += weight;
    } else {
        lines.push(CombLine { frequency_hz: f, weight });
    }
}

/// Comb produced by simultaneously addressing targets at `frequencies`:
/// one line for each sign combination `+-f1 +-f2 ...`, each carrying
/// weight `2^-N`. Coincident lines are merged, so weights always sum
/// to one.
pub fn frequency_comb(frequencies: &[f64]) -> Vec<CombLine> {
    let n = frequencies.len();
    let mut lines = Vec::new();
    if n == 0 {
        return vec![CombLine { frequency_hz: 0.0, weight: 1.0 }];
    }
    let w = 0.5f64.powi(n as i32);
    for mask in 0..(1u32 << n) {
        let sum: f64 = frequencies
            .iter()
            .enumerate()
            .map(|(k, f)| if mask >> k & 1 == 1 { *f } else { -*f })
            .sum();
        push_line(&mut lines, sum, w);
    }
    lines.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    lines
}

/// Comb including imperfect addressing: target `k` participates with
/// probability `success[k]`, and every subset of successfully addressed
/// targets contributes its own comb, weighted by the subset probability.
pub fn frequency_comb_with_failures(
    frequencies: &[f64],
    success: &[f64],
) -> Result<Vec<CombLine>> {
    if frequencies.len() != success.len() {
        return Err(Error::InvalidInput(format!(
            "{} frequencies but {} success probabilities",
            frequencies.len(),
            success.len()
        )));
    }
    if success.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput(
            "success probabilities must lie in [0, 1]".into(),
        ));
    }
    let n = frequencies.len();
    let mut lines = Vec::new();
    for subset in 0..(1u32 << n) {
        let mut prob = 1.0;
        let mut active = Vec::new();
        for k in 0..n {
            if subset >> k & 1 == 1 {
                prob *= success[k];
                active.push(frequencies[k]);
            } else {
                prob *= 1.0 - success[k];
            }
        }
        if prob == 0.0 {
            continue;
        }
        for line in frequency_comb(&active) {
            push_line(&mut lines, line.frequency_hz, prob * line.weight);
        }
    }
    lines.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(lines)
}

/// Sampled time-domain signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Sample times, seconds.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceParams {
    pub n_samples: usize,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// Coherence time, seconds; `None` disables the decay envelope.
    pub t2: Option<f64>,
    /// Envelope exponent `n` in `exp(-(t/T2)^n)`.
    pub decay_exponent: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Gaussian noise sigma; 0 for a clean trace.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            n_samples: 2048,
            dt: 1e-3,
            t2: None,
            decay_exponent: 2.0,
            amplitude: 1.0,
            offset: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Synthesises `offset + amplitude * env(t) * sum_k w_k cos(2 pi f_k t)`
/// plus optional Gaussian noise from a fixed-seed generator, so equal
/// parameters always produce byte-identical traces.
pub fn synthesize_trace(comb: &[CombLine], params: &TraceParams) -> Result<Trace> {
    if params.n_samples == 0 || params.dt <= 0.0 {
        return Err(Error::InvalidInput("need n_samples > 0 and dt > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut times = Vec::with_capacity(params.n_samples);
    let mut values = Vec::with_capacity(params.n_samples);
    for i in 0..params.n_samples {
        let t = i as f64 * params.dt;
        let env = match params.t2 {
            Some(t2) => (-(t / t2).powf(params.decay_exponent)).exp(),
            None => 1.0,
        };
        let osc: f64 = comb
            .iter()
            .map(|l| l.weight * (std::f64::consts::TAU * l.frequency_hz * t).cos())
            .sum();
        let noise = if params.noise_sigma > 0.0 {
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            params.noise_sigma
                * (-2.0 * u1.ln()).sqrt()
                * (std::f64::consts::TAU * u2).cos()
        } else {
            0.0
        };
        times.push(t);
        values.push(params.offset + params.amplitude * env * osc + noise);
    }
    Ok(Trace { times, values })
}

/// One-sided power spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bin frequencies, Hz.
    pub frequencies: Vec<f64>,
    /// `|X_k|^2 / M` with `M` the padded length; with no zero filling
    /// the bin sum equals the mean squared signal (after DC removal).
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &p)| (self.frequencies[i], p))
    }
}

/// Periodogram of a uniformly sampled trace: the mean is removed, the
/// record is zero-padded by `zero_fill` (1 = none), and the squared DFT
/// magnitude is returned on the one-sided frequency grid.
pub fn psd(trace: &Trace, zero_fill: usize) -> Result<Spectrum> {
    let n = trace.values.len();
    if n < 2 || trace.times.len() != n {
        return Err(Error::InvalidInput("trace too short".into()));
    }
    let dt = trace.times[1] - trace.times[0];
    for (k, w) in trace.times.windows(2).enumerate() {
        let dev = (w[1] - w[0]) - dt;
        if dev.abs() > 1e-9 * dt.abs() {
            return Err(Error::NonUniformGrid(k + 1, dev));
        }
    }
    let zero_fill = zero_fill.max(1);
    let m = n * zero_fill;
    let mean = trace.values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = trace
        .values
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)).take(m - n))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let n_bins = m / 2 + 1;
    let df = 1.0 / (m as f64 * dt);
    let frequencies = (0..n_bins).map(|k| k as f64 * df).collect();
    let power = buf[..n_bins]
        .iter()
        .map(|c| c.norm_sqr() / m as f64)
        .collect();
    Ok(Spectrum { frequencies, power })
}

/// Fitted parameters of a single decaying tone,
/// `S = a + A exp(-(t/T2)^n) cos(2 pi f t + phi) + B exp(-(t/T2)^n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFit {
    pub offset: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub t2: f64,
    pub frequency_hz: f64,
    pub phase: f64,
    /// Fixed envelope exponent used during the fit.
    pub decay_exponent: f64,
    /// 1-sigma uncertainties for (offset, amplitude, baseline, t2, f, phi).
    pub uncertainties: Option<[f64; 6]>,
    pub cost: f64,
}

fn signal_model(p: &[f64], n_exp: f64, t: f64) -> f64 {
    let (a, amp, b, t2, f, phi) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let env = (-(t / t2.abs().max(1e-30)).powf(n_exp)).exp();
    a + amp * env * (std::f64::consts::TAU * f * t + phi).cos() + b * env
}

/// Fits the decaying-cosine model to a trace. The frequency is seeded
/// from the tallest periodogram bin (zero-filled 4x) unless an explicit
/// initial guess is supplied.
pub fn fit_signal(
    trace: &Trace,
    decay_exponent: f64,
    initial_frequency_hz: Option<f64>,
) -> Result<SignalFit> {
    let n = trace.values.len();
    if n < 8 {
        return Err(Error::InvalidInput("trace too short to fit".into()));
    }
    let f0 = match initial_frequency_hz {
        Some(f) => f,
        None => {
            let spec = psd(trace, 4)?;
            spec.peak()
                .map(|(f, _)| f)
                .filter(|f| *f > 0.0)
                .ok_or_else(|| Error::InvalidInput("flat spectrum".into()))?
        }
    };
    let mean = trace.values.iter().sum::<f64>() / n as f64;
    let spread = trace
        .values
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0f64, f64::max);
    let span = trace.times[n - 1] - trace.times[0];
    let x0 = [mean, spread.max(1e-12), 0.0, span, f0, 0.0];
    let f = |p: &[f64], r: &mut Vec<f64>| {
        for (k, (&t, &v)) in trace.times.iter().zip(&trace.values).enumerate() {
            r[k] = signal_model(p, decay_exponent, t) - v;
        }
        Ok(())
    };
    let res = levenberg_marquardt(f, &x0, n, LmOptions::default())?;
    let u = res.uncertainties().map(|v| {
        let mut a = [0.0; 6];
        a.copy_from_slice(&v);
        a
    });
    let p = res.params;
    Ok(SignalFit {
        offset: p[0],
        amplitude: p[1],
        baseline: p[2],
        t2: p[3].abs(),
        frequency_hz: p[4].abs(),
        phase: p[5],
        decay_exponent,
        uncertainties: u,
        cost: res.cost,
    })
}

/// Spectral full width at half maximum of a Gaussian-envelope
/// (`exp(-(t/T2)^2)`) decay: `2 sqrt(ln 2) / (pi T2)`, Hz.
pub fn fwhm_resolution(t2_seconds: f64) -> Result<f64> {
    if t2_seconds <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "T2 = {t2_seconds} s must be positive"
        )));
    }
    Ok(2.0 * (2.0f64.ln()).sqrt() / (std::f64::consts::PI * t2_seconds))
}
