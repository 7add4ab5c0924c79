//! CIR export.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes   "ISACCIR1"
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (CirHeader)
//! frame_count  u64
//! frame_count times:
//!   epoch_index u64
//!   t           f64
//!   n_paths     u32
//!   dropped     u32
//!   n_paths times:
//!     re, im, delay, doppler, length   5 x f64
//!     kind u8 (0 los, 1 specular, 2 diffuse), order u8, n_facets u8, reserved u8
//!     sample u32 (0xFFFFFFFF when absent)
//!     facet ids  n_facets x u32
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ChirpConfig, CirFrame, CirPath, SensingLink};
use crate::error::{Error, Result};
use crate::raytrace::{PathKey, PathKind, TraceConfig};

pub const CIR_MAGIC: &[u8; 8] = b"ISACCIR1";
const NO_SAMPLE: u32 = u32::MAX;

/// Everything needed to interpret (and reproduce) a CIR file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirHeader {
    pub chirp: ChirpConfig,
    pub link: SensingLink,
    pub trace: TraceConfig,
    /// Start time of the first epoch (s).
    pub t0: f64,
    pub seed: u64,
    pub created: String,
    /// Free-form run configuration recorded by the caller.
    #[serde(default)]
    pub run: serde_json::Value,
}

fn corrupt(what: &str) -> Error {
    Error::Corrupt(format!("CIR stream: {what}"))
}

pub fn write_cir<W: Write>(mut w: W, header: &CirHeader, frames: &[CirFrame]) -> std::io::Result<()> {
    let json = serde_json::to_vec(header).expect("header serializes");
    w.write_all(CIR_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(frames.len() as u64).to_le_bytes())?;
    for f in frames {
        w.write_all(&(f.epoch_index as u64).to_le_bytes())?;
        w.write_all(&f.t.to_le_bytes())?;
        w.write_all(&(f.paths.len() as u32).to_le_bytes())?;
        w.write_all(&(f.dropped as u32).to_le_bytes())?;
        for p in &f.paths {
            for v in [p.amplitude.re, p.amplitude.im, p.delay, p.doppler, p.length] {
                w.write_all(&v.to_le_bytes())?;
            }
            let order = match p.key.kind {
                PathKind::Specular { order } => order,
                _ => 0,
            };
            w.write_all(&[p.key.kind.code(), order, p.key.facets.len() as u8, 0])?;
            w.write_all(&p.key.sample.unwrap_or(NO_SAMPLE).to_le_bytes())?;
            for id in &p.key.facets {
                w.write_all(&id.to_le_bytes())?;
            }
        }
    }
    w.flush()
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| corrupt("unexpected end of data"))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_cir<R: Read>(r: R) -> Result<(CirHeader, Vec<CirFrame>)> {
    let mut r = Reader { inner: r };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != CIR_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let len = r.u32()? as usize;
    if len > 1 << 24 {
        return Err(corrupt("header too large"));
    }
    let mut json = vec![0u8; len];
    r.inner
        .read_exact(&mut json)
        .map_err(|_| corrupt("truncated header"))?;
    let header: CirHeader =
        serde_json::from_slice(&json).map_err(|e| corrupt(&format!("header: {e}")))?;
    let n_frames = r.u64()? as usize;
    let mut frames = Vec::with_capacity(n_frames.min(1 << 20));
    for _ in 0..n_frames {
        let epoch_index = r.u64()? as usize;
        let t = r.f64()?;
        let n_paths = r.u32()? as usize;
        let dropped = r.u32()? as usize;
        let mut paths = Vec::with_capacity(n_paths.min(1 << 16));
        for _ in 0..n_paths {
            let (re, im, delay, doppler, length) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let kind = r.u8()?;
            let order = r.u8()?;
            let n_facets = r.u8()? as usize;
            let _reserved = r.u8()?;
            let sample = r.u32()?;
            let facets = (0..n_facets).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let kind = match kind {
                0 => PathKind::Los,
                1 => PathKind::Specular { order },
                2 => PathKind::Diffuse,
                other => return Err(corrupt(&format!("unknown path kind {other}"))),
            };
            paths.push(CirPath {
                amplitude: Complex64::new(re, im),
                delay,
                doppler,
                length,
                key: PathKey {
                    kind,
                    facets,
                    sample: (sample != NO_SAMPLE).then_some(sample),
                },
            });
        }
        frames.push(CirFrame {
            epoch_index,
            t,
            paths,
            dropped,
        });
    }
    Ok((header, frames))
}

/// One row per path: epoch, time, kind, order, facet ids, sample, delay,
/// length, Doppler and the complex amplitude.
pub fn write_cir_csv<W: Write>(mut w: W, frames: &[CirFrame]) -> std::io::Result<()> {
    writeln!(w, "epoch,t_s,kind,order,facets,sample,delay_s,length_m,doppler_hz,amp_re,amp_im,amp_db")?;
    for f in frames {
        for p in &f.paths {
            let order = match p.key.kind {
                PathKind::Specular { order } => order,
                _ => 0,
            };
            let facets: Vec<String> = p.key.facets.iter().map(|x| x.to_string()).collect();
            writeln!(
                w,
                "{},{:.9},{},{},{},{},{:.6e},{:.6},{:.4},{:.6e},{:.6e},{:.3}",
                f.epoch_index,
                f.t,
                p.key.kind.label(),
                order,
                facets.join(";"),
                p.key.sample.map(|s| s.to_string()).unwrap_or_default(),
                p.delay,
                p.length,
                p.doppler,
                p.amplitude.re,
                p.amplitude.im,
                20.0 * p.amplitude.norm().log10(),
            )?;
        }
    }
    w.flush()
}
