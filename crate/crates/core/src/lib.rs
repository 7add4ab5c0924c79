//! Dynamic ray-traced RF digital twin for integrated sensing and
//! communication.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`scene`]: facets, materials, transceivers and moving bodies, loaded from JSON.
//! * [`kinematics`]: spline trajectories and per-instant world snapshots.
//! * [`raytrace`]: LOS, image-method specular and sampled diffuse paths.
//! * [`em`]: complex path amplitudes.
//! * [`channel`]: chirp-rate CIR frames for mono- and bi-static links.
//! * [`fmcw`]: beat synthesis, range/Doppler FFTs and the analytic predicted map.
//! * [`analysis`]: peak extraction and map comparison.
//!
//! ```
//! use isac_rt::channel::{max_range, ChirpConfig, LinkMode};
//!
//! let cfg = ChirpConfig::default();
//! let mono = max_range(&cfg, LinkMode::MonoStatic);
//! assert!((mono - 79.3).abs() < 0.01);
//! ```

// `!(x >= lo)` style checks are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod em;
pub mod error;
pub mod fmcw;
pub mod geometry;
pub mod kinematics;
pub mod raytrace;
pub mod scene;

pub use error::{Error, Result};

// The guide's code listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../docs/scene-format.md")]
    mod scene_format {}
    #[doc = include_str!("../../../book/src/motion.md")]
    mod motion {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/amplitudes.md")]
    mod amplitudes {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/processing.md")]
    mod processing {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
