//! Chirp-rate channel impulse responses for mono- and bi-static links.
//!
//! Each chirp epoch `t_k = t0 + k * PRI` gets a fresh world snapshot; paths
//! are traced, given amplitudes and Doppler shifts, and frozen for the
//! duration of the chirp.

pub mod io;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::amplitude_of;
use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;
use crate::kinematics::SceneKinematics;
use crate::raytrace::{path_doppler, trace_paths, PathKey, PathKind, TraceConfig};
use crate::scene::Scene;

/// FMCW timing and sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Sweep bandwidth (Hz).
    pub bandwidth: f64,
    /// Ramp duration (s).
    pub t_chirp: f64,
    /// Idle time between ramps (s).
    pub t_idle: f64,
    /// Chirp slope (Hz/s).
    pub slope: f64,
    /// Complex I/Q sampling rate (Hz).
    pub f_samp: f64,
    pub n_chirps_total: usize,
}

impl Default for ChirpConfig {
    /// 79 GHz E-band sounder: 4 GHz sweep, 112.86 us ramp, 13 us idle,
    /// 35.44 MHz/us slope, 18.75 MHz I/Q rate, 4096 chirps per episode.
    fn default() -> Self {
        ChirpConfig {
            f_c: 79e9,
            bandwidth: 4e9,
            t_chirp: 112.86e-6,
            t_idle: 13e-6,
            slope: 35.44e12,
            f_samp: 18.75e6,
            n_chirps_total: 4096,
        }
    }
}

impl ChirpConfig {
    /// Pulse repetition interval `T_chirp + T_idle` (s).
    pub fn pri(&self) -> f64 {
        self.t_chirp + self.t_idle
    }

    pub fn samples_per_chirp(&self) -> usize {
        // guard against 2116.0 landing on 2115.9999...
        (self.t_chirp * self.f_samp * (1.0 + 1e-12)).floor() as usize
    }

    /// Largest unambiguous delay `f_samp / slope` (s).
    pub fn max_delay(&self) -> f64 {
        self.f_samp / self.slope
    }

    /// Delay spacing of range-FFT bins for a given zero-padding factor.
    pub fn delay_bin(&self, zero_pad: usize) -> f64 {
        self.f_samp / ((self.samples_per_chirp() * zero_pad) as f64 * self.slope)
    }

    /// Observation window `N (T_chirp + T_idle)` for `n` chirps.
    pub fn window_duration(&self, n: usize) -> f64 {
        n as f64 * self.pri()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::validation("chirp config", reason));
        for (name, v) in [
            ("f_c", self.f_c),
            ("bandwidth", self.bandwidth),
            ("t_chirp", self.t_chirp),
            ("slope", self.slope),
            ("f_samp", self.f_samp),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.t_idle >= 0.0) {
            return bad("t_idle must be >= 0".into());
        }
        let swept = self.slope * self.t_chirp;
        if ((swept - self.bandwidth) / self.bandwidth).abs() > 1e-3 {
            return bad(format!(
                "slope * t_chirp = {swept:.6e} Hz differs from bandwidth {:.6e} Hz by more than 0.1%",
                self.bandwidth
            ));
        }
        if self.n_chirps_total == 0 {
            return bad("n_chirps_total must be >= 1".into());
        }
        if self.samples_per_chirp() == 0 {
            return bad("t_chirp * f_samp < 1 sample".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Co-located transmitter and receiver (UE mono-static).
    MonoStatic,
    /// Separated transmitter and receiver (BS-UE).
    BiStatic,
}

/// Maximum unambiguous range (m): `c f_samp / (2 slope)` mono-static,
/// `c f_samp / slope` bi-static (total path length).
pub fn max_range(config: &ChirpConfig, mode: LinkMode) -> f64 {
    let path = SPEED_OF_LIGHT * config.max_delay();
    match mode {
        LinkMode::MonoStatic => path / 2.0,
        LinkMode::BiStatic => path,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingLink {
    pub mode: LinkMode,
    pub tx: String,
    pub rx: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl SensingLink {
    pub fn mono_static(node: &str) -> Self {
        SensingLink {
            mode: LinkMode::MonoStatic,
            tx: node.into(),
            rx: node.into(),
            scenario: None,
        }
    }

    pub fn bi_static(tx: &str, rx: &str) -> Self {
        SensingLink {
            mode: LinkMode::BiStatic,
            tx: tx.into(),
            rx: rx.into(),
            scenario: None,
        }
    }

    /// Transceiver indices of the link in `scene`.
    pub fn resolve(&self, scene: &Scene) -> Result<(usize, usize)> {
        match self.mode {
            LinkMode::MonoStatic if self.tx != self.rx => Err(Error::validation(
                "sensing link",
                format!("mono-static link needs tx == rx (got '{}' and '{}')", self.tx, self.rx),
            )),
            LinkMode::BiStatic if self.tx == self.rx => Err(Error::validation(
                "sensing link",
                format!("bi-static link needs distinct tx and rx (got '{}')", self.tx),
            )),
            _ => Ok((scene.transceiver_index(&self.tx)?, scene.transceiver_index(&self.rx)?)),
        }
    }
}

/// One path of a CIR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CirPath {
    pub amplitude: Complex64,
    /// Delay (s).
    pub delay: f64,
    /// Doppler shift (Hz).
    pub doppler: f64,
    /// Total path length (m).
    pub length: f64,
    pub key: PathKey,
}

impl CirPath {
    pub fn kind(&self) -> PathKind {
        self.key.kind
    }
}

/// The channel at one chirp epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFrame {
    pub epoch_index: usize,
    /// Epoch start time (s).
    pub t: f64,
    pub paths: Vec<CirPath>,
    /// Paths dropped for exceeding the unambiguous delay.
    pub dropped: usize,
}

/// Simulate `config.n_chirps_total` CIR frames starting at `t0`.
pub fn simulate_cir(
    scene: &Scene,
    link: &SensingLink,
    config: &ChirpConfig,
    trace: &TraceConfig,
    t0: f64,
) -> Result<Vec<CirFrame>> {
    config.validate()?;
    trace.validate()?;
    let (tx, rx) = link.resolve(scene)?;
    let end = t0 + config.n_chirps_total as f64 * config.pri();
    if let Some((start, stop)) = scene.time_overlap() {
        if t0 < start || end > stop + 1e-9 {
            return Err(Error::OutOfRange {
                what: "trajectory coverage of the episode".into(),
                t: if t0 < start { t0 } else { end },
                start,
                end: stop,
            });
        }
    }
    let kin = SceneKinematics::new(scene);
    let max_delay = config.max_delay();

    (0..config.n_chirps_total)
        .into_par_iter()
        .map(|k| {
            let t = t0 + k as f64 * config.pri();
            let snap = kin.snapshot(scene, t)?;
            let mut paths = Vec::new();
            let mut dropped = 0;
            for p in trace_paths(&snap, tx, rx, trace) {
                let delay = p.delay();
                if delay >= max_delay {
                    dropped += 1;
                    continue;
                }
                let amp = amplitude_of(&p, &snap, scene, config.f_c);
                paths.push(CirPath {
                    amplitude: amp.value,
                    delay,
                    doppler: path_doppler(&p, &snap, config.f_c),
                    length: p.total_length,
                    key: p.key(),
                });
            }
            Ok(CirFrame {
                epoch_index: k,
                t,
                paths,
                dropped,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let c = ChirpConfig::default();
        c.validate().unwrap();
        assert_eq!(c.samples_per_chirp(), 2116);
        assert!((c.pri() - 125.86e-6).abs() < 1e-15);
    }

    #[test]
    fn slope_mismatch_rejected() {
        let c = ChirpConfig {
            slope: 30e12,
            ..ChirpConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_chirps_rejected() {
        let c = ChirpConfig {
            n_chirps_total: 0,
            ..ChirpConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn max_range_halves_with_sampling_rate() {
        let c = ChirpConfig::default();
        let half = ChirpConfig {
            f_samp: c.f_samp / 2.0,
            ..c.clone()
        };
        for mode in [LinkMode::MonoStatic, LinkMode::BiStatic] {
            assert_eq!(max_range(&half, mode), max_range(&c, mode) / 2.0);
        }
    }

    #[test]
    fn max_range_sounder_values() {
        let c = ChirpConfig::default();
        let mono = max_range(&c, LinkMode::MonoStatic);
        let bi = max_range(&c, LinkMode::BiStatic);
        assert!((mono - 79.36).abs() < 0.1, "{mono}");
        assert!((bi - 158.7).abs() < 0.1, "{bi}");
        assert_eq!(bi, 2.0 * mono);
    }
}
