//! FMCW front end and delay-Doppler processing.
//!
//! Beat signals are synthesized from CIR frames with the stretch-processing
//! model
//!
//! ```text
//! x_k[m] = sum_n a_n exp(j 2 pi [S tau_n t_m + f_c tau_n - S tau_n^2 / 2]) exp(j 2 pi nu_n t_k)
//! ```
//!
//! with `t_m = m / f_samp` inside chirp `k` and `t_k` the epoch start. The
//! carrier term `f_c tau_n` cancels the propagation phase carried by `a_n`,
//! so the slow-time evolution of every path is governed by its Doppler
//! shift. The residual video phase `S tau^2 / 2` is kept; it stays below
//! 0.02 rad for delays under 62 ns.
//!
//! For a constant Doppler shift the slow-time phase is exactly `nu_n t_k`.
//! When `nu_n` drifts from frame to frame the phase is integrated along the
//! path instead (trapezoidal rule over epochs, starting from `nu_n t_k` on
//! the first frame the path appears in), so the instantaneous slow-time
//! frequency is always the path's Doppler. Multiplying the current `nu_n` by
//! an absolute epoch time would add a spurious shift `t_k dnu_n/dt`, which is
//! several Doppler bins for a platform seconds into its trajectory.
//!
//! Processing is a windowed range FFT per chirp followed by a windowed FFT
//! across `N` chirps for every delay bin. Both FFTs are scaled by the
//! coherent gain of their window, so a path sitting exactly on a bin centre
//! shows up with power `|a_n|^2` in both the PDP and the delay-Doppler map.
//! [`predicted_map`] builds the same map analytically from the path lists.

pub mod export;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{ChirpConfig, CirFrame};
use crate::error::{Error, Result};
use crate::raytrace::PathKey;

/// Floor applied before converting power to dB.
pub const POWER_FLOOR: f64 = 1e-30;

pub fn to_db(power: f64) -> f64 {
    10.0 * power.max(POWER_FLOOR).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rect,
    Hann,
}

impl Window {
    /// Periodic (DFT-even) window coefficients.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|m| 0.5 - 0.5 * (2.0 * PI * m as f64 / n as f64).cos())
                .collect(),
        }
    }

    /// Normalized power response `|W(delta)|^2 / |W(0)|^2` of the window
    /// applied over a continuous observation interval, for a frequency
    /// offset of `delta` bins. Rect gives `sinc^2(delta)`; Hann gives the
    /// square of `sinc(delta) + (sinc(delta - 1) + sinc(delta + 1)) / 2`.
    pub fn kernel(&self, delta: f64) -> f64 {
        let amp = match self {
            Window::Rect => sinc(delta),
            Window::Hann => sinc(delta) + 0.5 * (sinc(delta - 1.0) + sinc(delta + 1.0)),
        };
        amp * amp
    }

    pub fn name(&self) -> &'static str {
        match self {
            Window::Rect => "rect",
            Window::Hann => "hann",
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" | "rectangular" | "none" => Ok(Window::Rect),
            "hann" | "hanning" => Ok(Window::Hann),
            _ => Err(Error::UnknownWindow(s.to_string())),
        }
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Complex AWGN added to synthesized beats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Noise power per complex sample, in dB relative to the transmit power
    /// (the same scale as `|a_n|^2`).
    pub floor_db: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig {
            enabled: false,
            floor_db: f64::NEG_INFINITY,
            seed: 0,
        }
    }

    /// Thermal floor `-174 dBm/Hz + 10 log10(f_samp) + NF`, referred to the
    /// transmit power.
    pub fn from_link_budget(tx_power_dbm: f64, noise_figure_db: f64, f_samp: f64, seed: u64) -> Self {
        NoiseConfig {
            enabled: true,
            floor_db: -174.0 + 10.0 * f_samp.log10() + noise_figure_db - tx_power_dbm,
            seed,
        }
    }
}

/// Dechirped I/Q samples of one chirp.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFrame {
    pub epoch_index: usize,
    /// Epoch start time (s).
    pub t: f64,
    pub samples: Vec<Complex64>,
}

fn wrapped_phasor(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// Slow-time phase of every path in every frame, in cycles.
fn slow_time_cycles(frames: &[CirFrame]) -> Vec<Vec<f64>> {
    let mut state: HashMap<&PathKey, (f64, f64, f64)> = HashMap::new();
    frames
        .iter()
        .map(|frame| {
            frame
                .paths
                .iter()
                .map(|p| {
                    let cycles = match state.get(&p.key) {
                        Some(&(t, nu, c)) => c + 0.5 * (nu + p.doppler) * (frame.t - t),
                        None => p.doppler * frame.t,
                    };
                    state.insert(&p.key, (frame.t, p.doppler, cycles));
                    cycles
                })
                .collect()
        })
        .collect()
}

fn synth_one(frame: &CirFrame, slow_cycles: &[f64], config: &ChirpConfig, noise: &NoiseConfig) -> BeatFrame {
    let m_len = config.samples_per_chirp();
    let mut samples = vec![Complex64::new(0.0, 0.0); m_len];
    for (p, slow) in frame.paths.iter().zip(slow_cycles) {
        let tau = p.delay;
        let fast = config.f_c * tau - 0.5 * config.slope * tau * tau;
        let start = wrapped_phasor(fast - fast.floor() + slow - slow.floor());
        let step = wrapped_phasor(config.slope * tau / config.f_samp);
        let mut z = p.amplitude * start;
        for s in samples.iter_mut() {
            *s += z;
            z *= step;
        }
    }
    if noise.enabled {
        let sigma = (10f64.powf(noise.floor_db / 10.0) / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ (frame.epoch_index as u64).wrapping_mul(0xD134_2543_DE82_EF95));
        for s in samples.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *s += Complex64::new(sigma * re, sigma * im);
        }
    }
    BeatFrame {
        epoch_index: frame.epoch_index,
        t: frame.t,
        samples,
    }
}

/// Synthesize the beat signal of every frame.
///
/// Paths are followed across frames by their [`PathKey`], so the frames
/// should be consecutive epochs of one episode.
pub fn synth_beat(frames: &[CirFrame], config: &ChirpConfig, noise: &NoiseConfig) -> Vec<BeatFrame> {
    let slow = slow_time_cycles(frames);
    frames
        .par_iter()
        .zip(slow.par_iter())
        .map(|(f, c)| synth_one(f, c, config, noise))
        .collect()
}

/// Windowed, coherent-gain-normalized range FFT.
pub struct RangeProcessor {
    window: Vec<f64>,
    gain: f64,
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl RangeProcessor {
    /// Processor for `samples`-long chirps, zero-padded by `zero_pad`.
    pub fn new(samples: usize, window: Window, zero_pad: usize) -> Self {
        let w = window.coefficients(samples);
        let gain = w.iter().sum();
        let len = samples * zero_pad.max(1);
        let fft = FftPlanner::new().plan_fft_forward(len);
        RangeProcessor {
            window: w,
            gain,
            len,
            fft,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coherent gain `sum(w)` used for normalization.
    pub fn coherent_gain(&self) -> f64 {
        self.gain
    }

    pub fn process(&self, samples: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.window.len(), "beat frame length");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for ((b, x), w) in buf.iter_mut().zip(samples).zip(&self.window) {
            *b = x * (w / self.gain);
        }
        self.fft.process(&mut buf);
        buf
    }
}

/// Complex range profile of one beat frame (no zero padding).
pub fn range_fft(beat: &BeatFrame, window: Window) -> Vec<Complex64> {
    RangeProcessor::new(beat.samples.len(), window, 1).process(&beat.samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// From the synthesized beat signals.
    Processed,
    /// Analytic prediction from the path lists.
    Predicted,
}

/// Grid geometry shared by maps that can be compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapAxes {
    pub n_delay: usize,
    pub n_doppler: usize,
    /// Delay spacing (s); column `j` is at `j * delay_bin`.
    pub delay_bin: f64,
    /// Doppler spacing (Hz), equal to `1 / T_w`; row `i` is at
    /// `(i - n_doppler / 2) * doppler_bin`.
    pub doppler_bin: f64,
}

impl MapAxes {
    pub fn for_window(config: &ChirpConfig, n: usize, zero_pad: usize) -> Self {
        MapAxes {
            n_delay: config.samples_per_chirp() * zero_pad,
            n_doppler: n,
            delay_bin: config.delay_bin(zero_pad),
            doppler_bin: 1.0 / config.window_duration(n),
        }
    }

    pub fn delay(&self, col: usize) -> f64 {
        col as f64 * self.delay_bin
    }

    pub fn doppler(&self, row: usize) -> f64 {
        (row as f64 - (self.n_doppler / 2) as f64) * self.doppler_bin
    }

    /// Row of the zero-Doppler bin.
    pub fn zero_row(&self) -> usize {
        self.n_doppler / 2
    }

    /// Nearest Doppler row, if inside the grid.
    pub fn doppler_row(&self, doppler: f64) -> Option<usize> {
        let r = (doppler / self.doppler_bin).round() + (self.n_doppler / 2) as f64;
        (r >= 0.0 && r < self.n_doppler as f64).then_some(r as usize)
    }

    /// Nearest delay column, if inside the grid.
    pub fn delay_col(&self, delay: f64) -> Option<usize> {
        let c = (delay / self.delay_bin).round();
        (c >= 0.0 && c < self.n_delay as f64).then_some(c as usize)
    }

    pub fn matches(&self, other: &MapAxes) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        self.n_delay == other.n_delay
            && self.n_doppler == other.n_doppler
            && close(self.delay_bin, other.delay_bin)
            && close(self.doppler_bin, other.doppler_bin)
    }
}

/// How a map was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub kind: MapKind,
    /// Chirps per window.
    pub n_chirps: usize,
    /// Window duration `N (T_chirp + T_idle)` (s).
    pub t_w: f64,
    /// Start time of the first chirp in the window (s).
    pub t0: f64,
    pub start_epoch: usize,
    pub window_fast: Window,
    pub window_slow: Window,
    pub zero_pad: usize,
}

/// Power over (Doppler, delay), row-major with `n_doppler` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    pub axes: MapAxes,
    pub meta: MapMeta,
    /// Power in dB, `power_db[row * n_delay + col]`.
    pub power_db: Vec<f64>,
}

impl DelayDopplerMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.power_db[row * self.axes.n_delay + col]
    }

    pub fn linear(&self, row: usize, col: usize) -> f64 {
        10f64.powf(self.at(row, col) / 10.0)
    }

    /// (row, col, dB) of the strongest cell.
    pub fn max_cell(&self) -> (usize, usize, f64) {
        let (i, v) = self
            .power_db
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i / self.axes.n_delay, i % self.axes.n_delay, v)
    }

    /// Strongest cell inside a rectangular neighbourhood.
    pub fn max_near(&self, row: usize, col: usize, radius: usize) -> (usize, usize, f64) {
        let r0 = row.saturating_sub(radius);
        let r1 = (row + radius).min(self.axes.n_doppler - 1);
        let c0 = col.saturating_sub(radius);
        let c1 = (col + radius).min(self.axes.n_delay - 1);
        let mut best = (row, col, f64::NEG_INFINITY);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let v = self.at(r, c);
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        best
    }

    /// Fraction of the linear power that lies within one Doppler bin of zero.
    pub fn ridge_fraction(&self) -> f64 {
        self.ridge_fraction_in(0..self.axes.n_delay)
    }

    /// Ridge fraction restricted to the given delay columns.
    pub fn ridge_fraction_in(&self, cols: impl IntoIterator<Item = usize> + Clone) -> f64 {
        let z = self.axes.zero_row();
        let mut ridge = 0.0;
        let mut total = 0.0;
        for r in 0..self.axes.n_doppler {
            let near = r.abs_diff(z) <= 1;
            for c in cols.clone() {
                let p = self.linear(r, c);
                total += p;
                if near {
                    ridge += p;
                }
            }
        }
        if total > 0.0 {
            ridge / total
        } else {
            0.0
        }
    }
}

/// Delay-Doppler map of `n` chirps starting at `start`.
pub fn delay_doppler(
    beats: &[BeatFrame],
    start: usize,
    n: usize,
    fast: Window,
    slow: Window,
    config: &ChirpConfig,
) -> Result<DelayDopplerMap> {
    delay_doppler_padded(beats, start, n, fast, slow, config, 1)
}

/// [`delay_doppler`] with optional zero padding of the range FFT.
pub fn delay_doppler_padded(
    beats: &[BeatFrame],
    start: usize,
    n: usize,
    fast: Window,
    slow: Window,
    config: &ChirpConfig,
    zero_pad: usize,
) -> Result<DelayDopplerMap> {
    if n == 0 || start + n > beats.len() {
        return Err(Error::InsufficientFrames {
            needed: n,
            start,
            available: beats.len(),
        });
    }
    let zero_pad = zero_pad.max(1);
    let range = RangeProcessor::new(config.samples_per_chirp(), fast, zero_pad);
    let profiles: Vec<Vec<Complex64>> = beats[start..start + n]
        .par_iter()
        .map(|b| range.process(&b.samples))
        .collect();
    let axes = MapAxes::for_window(config, n, zero_pad);

    let w = slow.coefficients(n);
    let gain: f64 = w.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let half = n / 2;
    let columns: Vec<Vec<f64>> = (0..axes.n_delay)
        .into_par_iter()
        .map(|col| {
            let mut buf: Vec<Complex64> = profiles
                .iter()
                .zip(&w)
                .map(|(p, wk)| p[col] * (wk / gain))
                .collect();
            fft.process(&mut buf);
            // fftshift: row r holds FFT bin (r + n - half) mod n
            (0..n).map(|r| to_db(buf[(r + n - half) % n].norm_sqr())).collect()
        })
        .collect();

    let mut power_db = vec![0.0; n * axes.n_delay];
    for (col, c) in columns.iter().enumerate() {
        for (row, v) in c.iter().enumerate() {
            power_db[row * axes.n_delay + col] = *v;
        }
    }
    Ok(DelayDopplerMap {
        axes,
        meta: MapMeta {
            kind: MapKind::Processed,
            n_chirps: n,
            t_w: config.window_duration(n),
            t0: beats[start].t,
            start_epoch: beats[start].epoch_index,
            window_fast: fast,
            window_slow: slow,
            zero_pad,
        },
        power_db,
    })
}

/// Analytic delay-Doppler map from CIR frames.
///
/// Every path of the mid-window frame contributes `|a_n|^2 K((nu_n - nu) T_w)`
/// to its nearest delay bin, where `K` is the Doppler response of `slow`
/// (`sinc^2` for the rectangular window). Contributions add in power.
pub fn predicted_map(
    frames: &[CirFrame],
    start: usize,
    n: usize,
    slow: Window,
    config: &ChirpConfig,
    zero_pad: usize,
) -> Result<DelayDopplerMap> {
    if n == 0 || start + n > frames.len() {
        return Err(Error::InsufficientFrames {
            needed: n,
            start,
            available: frames.len(),
        });
    }
    let zero_pad = zero_pad.max(1);
    let axes = MapAxes::for_window(config, n, zero_pad);
    let t_w = config.window_duration(n);
    let mid = &frames[start + n / 2];
    let mut power = vec![0.0; n * axes.n_delay];
    for p in &mid.paths {
        let Some(col) = axes.delay_col(p.delay) else {
            continue;
        };
        let a2 = p.amplitude.norm_sqr();
        for row in 0..n {
            power[row * axes.n_delay + col] += a2 * slow.kernel((p.doppler - axes.doppler(row)) * t_w);
        }
    }
    Ok(DelayDopplerMap {
        axes,
        meta: MapMeta {
            kind: MapKind::Predicted,
            n_chirps: n,
            t_w,
            t0: frames[start].t,
            start_epoch: frames[start].epoch_index,
            window_fast: Window::Rect,
            window_slow: slow,
            zero_pad,
        },
        power_db: power.into_iter().map(to_db).collect(),
    })
}

/// Power-delay profiles stacked over epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpSeries {
    pub n_delay: usize,
    pub delay_bin: f64,
    pub epochs: Vec<usize>,
    pub times: Vec<f64>,
    /// Power in dB, `power_db[row * n_delay + col]`, one row per epoch.
    pub power_db: Vec<f64>,
}

impl PdpSeries {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.power_db[r * self.n_delay..(r + 1) * self.n_delay]
    }

    pub fn n_rows(&self) -> usize {
        self.epochs.len()
    }
}

/// `|range profile|^2` in dB for every beat frame.
pub fn pdp_series(beats: &[BeatFrame], window: Window, config: &ChirpConfig) -> PdpSeries {
    let range = RangeProcessor::new(config.samples_per_chirp(), window, 1);
    let rows: Vec<Vec<f64>> = beats
        .par_iter()
        .map(|b| range.process(&b.samples).iter().map(|x| to_db(x.norm_sqr())).collect())
        .collect();
    PdpSeries {
        n_delay: range.len(),
        delay_bin: config.delay_bin(1),
        epochs: beats.iter().map(|b| b.epoch_index).collect(),
        times: beats.iter().map(|b| b.t).collect(),
        power_db: rows.into_iter().flatten().collect(),
    }
}
