//! Complex path amplitudes: spreading, antenna gains, specular reflection
//! with reflection reduction, and the directive diffuse lobe.
//!
//! Power at an interaction is split between the specular and the diffuse
//! part with `R^2 + S^2 = 1`, where `S` is the material scattering
//! coefficient. The diffuse part re-radiates around the specular direction
//! `k_r` with the lobe `((1 + k_r . k_s) / 2)^alpha`.
//!
//! The field model is scalar: reflection uses the mean of the TE and TM
//! Fresnel magnitudes with the TE phase.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Vec3, EPSILON_0, SPEED_OF_LIGHT};
use crate::kinematics::WorldSnapshot;
use crate::raytrace::{PathGeometry, PathKind};
use crate::scene::{Material, Scene};

const UNIT_TOL: f64 = 1e-6;

/// Specular reflection reduction `R = sqrt(1 - S^2)` for scattering
/// coefficient `S` in `[0, 1]`.
pub fn split_power(scattering_coeff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&scattering_coeff) {
        return Err(Error::validation(
            "scattering coefficient",
            format!("{scattering_coeff} outside [0, 1]"),
        ));
    }
    Ok((1.0 - scattering_coeff * scattering_coeff).sqrt())
}

/// Unnormalized directive lobe `((1 + k_r . k_s) / 2)^alpha`.
pub fn lobe_shape(k_r: &Vec3, k_s: &Vec3, alpha: u32) -> f64 {
    let c = (0.5 * (1.0 + k_r.dot(k_s))).clamp(0.0, 1.0);
    c.powi(alpha as i32)
}

/// Normalization making the lobe integrate to one over the hemisphere
/// centred on `k_r` (closed form for a lobe aimed along the facet normal).
pub fn lobe_normalization(alpha: u32) -> f64 {
    let a = alpha as f64;
    (a + 1.0) / (4.0 * PI * (1.0 - 0.5f64.powf(a + 1.0)))
}

/// Normalized diffuse lobe weight (1/sr) towards `k_s`.
pub fn lobe_gain(k_r: &Vec3, k_s: &Vec3, alpha: u32) -> Result<f64> {
    for (name, v) in [("k_r", k_r), ("k_s", k_s)] {
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::validation(
                "lobe direction",
                format!("{name} is not unit length (|{name}| = {})", v.norm()),
            ));
        }
    }
    if alpha < 1 {
        return Err(Error::validation("lobe exponent", "alpha must be >= 1"));
    }
    Ok(lobe_normalization(alpha) * lobe_shape(k_r, k_s, alpha))
}

/// Complex relative permittivity `eps_r - j sigma / (2 pi f eps_0)`.
pub fn complex_permittivity(material: &Material, f_c: f64) -> Complex64 {
    Complex64::new(
        material.rel_permittivity,
        -material.conductivity / (2.0 * PI * f_c * EPSILON_0),
    )
}

/// TE and TM Fresnel reflection coefficients at incidence angle `theta`
/// (radians from the normal).
pub fn fresnel_te_tm(material: &Material, theta: f64, f_c: f64) -> (Complex64, Complex64) {
    let eps = complex_permittivity(material, f_c);
    let (s, c) = theta.sin_cos();
    let root = (eps - s * s).sqrt();
    let te = (c - root) / (c + root);
    let tm = (eps * c - root) / (eps * c + root);
    (te, tm)
}

/// Scalar reflection coefficient: mean of the TE and TM magnitudes with the
/// TE phase.
pub fn fresnel_reflection(material: &Material, theta: f64, f_c: f64) -> Complex64 {
    let (te, tm) = fresnel_te_tm(material, theta, f_c);
    Complex64::from_polar(0.5 * (te.norm() + tm.norm()), te.arg())
}

/// Per-term decomposition of a path amplitude in dB (voltage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeBreakdown {
    /// Free-space spreading `20 log10(lambda / (4 pi d))`.
    pub spread_db: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    /// Reflection and scattering losses of all interactions.
    pub interaction_db: f64,
}

impl AmplitudeBreakdown {
    pub fn total_db(&self) -> f64 {
        self.spread_db + self.tx_gain_db + self.rx_gain_db + self.interaction_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAmplitude {
    pub value: Complex64,
    pub breakdown: AmplitudeBreakdown,
}

impl PathAmplitude {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase(&self) -> f64 {
        self.value.arg()
    }
}

/// Complex amplitude `a_n` of a path for carrier `f_c`.
///
/// ```text
/// |a| = lambda / (4 pi d) * sqrt(G_tx) * sqrt(G_rx) * prod(interaction factors)
/// ```
///
/// A specular bounce contributes `R |Gamma|` and the TE phase of `Gamma`.
/// A diffuse bounce treats its sample as a re-radiating patch of area `A`:
/// it intercepts `A cos(theta_i)` of the incident flux, scatters the fraction
/// `(S |Gamma|)^2` into the normalized lobe `f` (1/sr), and the second leg
/// spreads independently, so the factor relative to the unfolded Friis term
/// is `S |Gamma| sqrt(f A cos(theta_i)) d / (d_1 d_2)`. Diffuse bounces add no
/// deterministic phase. The carrier phase is `-2 pi f_c tau`.
pub fn amplitude_of(path: &PathGeometry, snapshot: &WorldSnapshot, scene: &Scene, f_c: f64) -> PathAmplitude {
    let lambda = SPEED_OF_LIGHT / f_c;
    let d = path.total_length;
    let spread_db = 20.0 * (lambda / (4.0 * PI * d)).log10();

    let tx_state = &snapshot.transceivers[path.tx];
    let rx_state = &snapshot.transceivers[path.rx];
    let tx_gain_db = scene.transceivers[path.tx]
        .pattern
        .gain_towards_db(&tx_state.boresight, &path.departure);
    let rx_gain_db = scene.transceivers[path.rx]
        .pattern
        .gain_towards_db(&rx_state.boresight, &(-path.arrival));

    let mut factor = 1.0;
    let mut phase = -2.0 * PI * f_c * path.delay();
    for (j, hit) in path.interactions.iter().enumerate() {
        let material = scene.material(hit.facet);
        let normal = &snapshot.facets[hit.facet].normal;
        let cos_i = (-hit.k_in.dot(normal)).clamp(0.0, 1.0);
        let gamma = fresnel_reflection(material, cos_i.acos(), f_c);
        match path.kind {
            PathKind::Diffuse => {
                let area = path.diffuse.map(|s| s.effective_area).unwrap_or(0.0);
                let lobe = lobe_normalization(material.lobe_exponent)
                    * lobe_shape(&hit.k_mirror, &hit.k_out, material.lobe_exponent);
                let seg = path.segment_lengths();
                let (d1, d2) = (seg[j], seg[j + 1]);
                factor *= material.scattering_coeff * gamma.norm() * (lobe * area * cos_i).sqrt() * d / (d1 * d2);
            }
            _ => {
                factor *= material.reflection_reduction() * gamma.norm();
                phase += gamma.arg();
            }
        }
    }
    let interaction_db = 20.0 * factor.log10();

    let breakdown = AmplitudeBreakdown {
        spread_db,
        tx_gain_db,
        rx_gain_db,
        interaction_db,
    };
    let magnitude = lambda / (4.0 * PI * d) * 10f64.powf((tx_gain_db + rx_gain_db) / 20.0) * factor;
    PathAmplitude {
        value: Complex64::from_polar(magnitude, phase),
        breakdown,
    }
}
