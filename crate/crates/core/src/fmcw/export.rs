//! Map and PDP export.
//!
//! Binary maps use the layout
//!
//! ```text
//! magic        8 bytes   "ISACDDM1"
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON (MapHeader)
//! n_doppler    u32 LE
//! n_delay      u32 LE
//! power_db     n_doppler * n_delay f64 LE, row-major (Doppler rows)
//! ```
//!
//! PGM heatmaps are 8-bit P5 images with one pixel per cell. The highest
//! Doppler row is at the top, so approaching targets appear above the
//! zero-Doppler ridge. Gray levels map a fixed dB range linearly onto 0..255;
//! the range is written to a sidecar `.scale.txt` file so that every exported
//! pair shares the same colour scale.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DelayDopplerMap, MapAxes, MapMeta, PdpSeries};
use crate::error::{Error, Result};

pub const MAP_MAGIC: &[u8; 8] = b"ISACDDM1";

/// JSON header of an exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub axes: MapAxes,
    pub meta: MapMeta,
    /// Effective run configuration recorded by the caller.
    #[serde(default)]
    pub run: serde_json::Value,
}

pub fn write_map_bin<W: Write>(mut w: W, map: &DelayDopplerMap, run: &serde_json::Value) -> std::io::Result<()> {
    let header = MapHeader {
        axes: map.axes,
        meta: map.meta.clone(),
        run: run.clone(),
    };
    let json = serde_json::to_vec(&header).expect("map header serializes");
    w.write_all(MAP_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(map.axes.n_doppler as u32).to_le_bytes())?;
    w.write_all(&(map.axes.n_delay as u32).to_le_bytes())?;
    for v in &map.power_db {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

fn corrupt(what: &str) -> Error {
    Error::Corrupt(format!("map file: {what}"))
}

pub fn read_map_bin<R: Read>(mut r: R) -> Result<(DelayDopplerMap, serde_json::Value)> {
    let mut buf8 = [0u8; 8];
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf8).map_err(|_| corrupt("unexpected end of data"))?;
    if &buf8 != MAP_MAGIC {
        return Err(corrupt("bad magic"));
    }
    r.read_exact(&mut buf4).map_err(|_| corrupt("unexpected end of data"))?;
    let len = u32::from_le_bytes(buf4) as usize;
    if len > 1 << 24 {
        return Err(corrupt("header too large"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
    let header: MapHeader = serde_json::from_slice(&json).map_err(|e| corrupt(&format!("header: {e}")))?;
    r.read_exact(&mut buf4).map_err(|_| corrupt("unexpected end of data"))?;
    let n_doppler = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4).map_err(|_| corrupt("unexpected end of data"))?;
    let n_delay = u32::from_le_bytes(buf4) as usize;
    if n_doppler != header.axes.n_doppler || n_delay != header.axes.n_delay {
        return Err(corrupt("grid size disagrees with header"));
    }
    let mut power_db = Vec::with_capacity(n_doppler * n_delay);
    for _ in 0..n_doppler * n_delay {
        r.read_exact(&mut buf8).map_err(|_| corrupt("truncated power grid"))?;
        power_db.push(f64::from_le_bytes(buf8));
    }
    Ok((
        DelayDopplerMap {
            axes: header.axes,
            meta: header.meta,
            power_db,
        },
        header.run,
    ))
}

/// One row per cell: delay (s), Doppler (Hz), power (dB).
pub fn write_map_csv<W: Write>(mut w: W, map: &DelayDopplerMap) -> std::io::Result<()> {
    writeln!(w, "delay_s,doppler_hz,power_db")?;
    for row in 0..map.axes.n_doppler {
        let nu = map.axes.doppler(row);
        for col in 0..map.axes.n_delay {
            writeln!(w, "{:.6e},{:.4},{:.3}", map.axes.delay(col), nu, map.at(row, col))?;
        }
    }
    w.flush()
}

/// Fixed dB range for PGM gray levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbScale {
    pub min_db: f64,
    pub max_db: f64,
}

impl Default for DbScale {
    fn default() -> Self {
        DbScale {
            min_db: -180.0,
            max_db: -80.0,
        }
    }
}

impl DbScale {
    pub fn gray(&self, db: f64) -> u8 {
        let x = (db - self.min_db) / (self.max_db - self.min_db);
        (x.clamp(0.0, 1.0) * 255.0).round() as u8
    }

    /// Sidecar text describing the mapping.
    pub fn sidecar(&self, map: &DelayDopplerMap) -> String {
        format!(
            "format P5 8-bit\n\
             gray 0 = {:.3} dB\n\
             gray 255 = {:.3} dB\n\
             mapping linear in dB, clipped\n\
             columns {} delay bins, delay = col * {:.9e} s\n\
             rows {} doppler bins, top row = {:.6} Hz, spacing {:.6} Hz (decreasing downwards)\n\
             window fast = {}, slow = {}, N = {}, T_w = {:.9e} s\n",
            self.min_db,
            self.max_db,
            map.axes.n_delay,
            map.axes.delay_bin,
            map.axes.n_doppler,
            map.axes.doppler(map.axes.n_doppler - 1),
            map.axes.doppler_bin,
            map.meta.window_fast,
            map.meta.window_slow,
            map.meta.n_chirps,
            map.meta.t_w,
        )
    }
}

pub fn write_map_pgm<W: Write>(mut w: W, map: &DelayDopplerMap, scale: &DbScale) -> std::io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", map.axes.n_delay, map.axes.n_doppler)?;
    let mut line = vec![0u8; map.axes.n_delay];
    for row in (0..map.axes.n_doppler).rev() {
        for (col, px) in line.iter_mut().enumerate() {
            *px = scale.gray(map.at(row, col));
        }
        w.write_all(&line)?;
    }
    w.flush()
}

/// One row per (epoch, delay bin).
pub fn write_pdp_csv<W: Write>(mut w: W, pdp: &PdpSeries) -> std::io::Result<()> {
    writeln!(w, "epoch,t_s,delay_s,power_db")?;
    for r in 0..pdp.n_rows() {
        for (col, p) in pdp.row(r).iter().enumerate() {
            writeln!(
                w,
                "{},{:.9},{:.6e},{:.3}",
                pdp.epochs[r],
                pdp.times[r],
                col as f64 * pdp.delay_bin,
                p
            )?;
        }
    }
    w.flush()
}

/// PDP as a binary matrix: magic "ISACPDP1", u32 JSON header length, JSON
/// header, u32 rows, u32 columns, then f64 LE values row by row.
pub fn write_pdp_bin<W: Write>(mut w: W, pdp: &PdpSeries, run: &serde_json::Value) -> std::io::Result<()> {
    let header = serde_json::json!({
        "delay_bin": pdp.delay_bin,
        "n_delay": pdp.n_delay,
        "epochs": pdp.epochs,
        "times": pdp.times,
        "run": run,
    });
    let json = serde_json::to_vec(&header).expect("pdp header serializes");
    w.write_all(b"ISACPDP1")?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(pdp.n_rows() as u32).to_le_bytes())?;
    w.write_all(&(pdp.n_delay as u32).to_le_bytes())?;
    for v in &pdp.power_db {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}
