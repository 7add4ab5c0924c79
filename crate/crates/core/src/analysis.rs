//! Peak extraction and peak matching between delay-Doppler maps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmcw::{DelayDopplerMap, MapAxes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    /// Delay (s).
    pub delay: f64,
    /// Doppler (Hz).
    pub doppler: f64,
    /// Power (dB).
    pub power_db: f64,
}

/// Peaks of one map, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    pub threshold_db: f64,
    pub min_separation: usize,
    pub axes: MapAxes,
    /// Zero-Doppler ridge fraction of the source map.
    pub ridge_fraction: f64,
}

fn is_strict_local_max(map: &DelayDopplerMap, row: usize, col: usize) -> bool {
    let v = map.at(row, col);
    let (nr, nc) = (map.axes.n_doppler as isize, map.axes.n_delay as isize);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (r, c) = (row as isize + dr, col as isize + dc);
            if r < 0 || c < 0 || r >= nr || c >= nc {
                continue;
            }
            if map.at(r as usize, c as usize) >= v {
                return false;
            }
        }
    }
    true
}

/// Strict 3x3 local maxima within `threshold_db` of the global maximum,
/// thinned so that any two kept peaks differ by at least `min_separation`
/// bins in delay or in Doppler.
pub fn extract_peaks(map: &DelayDopplerMap, threshold_db: f64, min_separation: usize) -> Result<PeakList> {
    if !(threshold_db > 0.0) {
        return Err(Error::validation("peak threshold", "threshold_db must be > 0"));
    }
    let (_, _, max_db) = map.max_cell();
    let floor = max_db - threshold_db;
    let mut candidates = Vec::new();
    for row in 0..map.axes.n_doppler {
        for col in 0..map.axes.n_delay {
            let v = map.at(row, col);
            if v >= floor && is_strict_local_max(map, row, col) {
                candidates.push(Peak {
                    row,
                    col,
                    delay: map.axes.delay(col),
                    doppler: map.axes.doppler(row),
                    power_db: v,
                });
            }
        }
    }
    // ties broken by position so the order is deterministic
    candidates.sort_by(|a, b| {
        b.power_db
            .total_cmp(&a.power_db)
            .then(a.row.cmp(&b.row))
            .then(a.col.cmp(&b.col))
    });
    let mut peaks: Vec<Peak> = Vec::new();
    for c in candidates {
        let separated = peaks
            .iter()
            .all(|p| p.row.abs_diff(c.row) >= min_separation || p.col.abs_diff(c.col) >= min_separation);
        if separated {
            peaks.push(c);
        }
    }
    Ok(PeakList {
        peaks,
        threshold_db,
        min_separation,
        axes: map.axes,
        ridge_fraction: map.ridge_fraction(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Index into the first list.
    pub a: usize,
    /// Index into the second list.
    pub b: usize,
    /// `b - a` in delay bins.
    pub delta_delay_bins: i64,
    /// `b - a` in Doppler bins.
    pub delta_doppler_bins: i64,
    /// `b - a` in dB.
    pub delta_power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub gate_bins: usize,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: usize,
    pub unmatched_b: usize,
    pub ridge_fraction_a: f64,
    pub ridge_fraction_b: f64,
    pub peaks_a: Vec<Peak>,
    pub peaks_b: Vec<Peak>,
}

/// Greedy matching over candidate pairs.
///
/// Every pair within `gate` bins (Chebyshev distance) is a candidate.
/// Candidates are taken strongest first by summed power, then nearest, and a
/// pair is kept when neither peak is used yet. The ordering key does not
/// depend on which map is `a`, so swapping the inputs swaps the unmatched
/// counts.
pub fn match_maps(a: &PeakList, b: &PeakList, gate: usize) -> Result<MatchReport> {
    if !a.axes.matches(&b.axes) {
        return Err(Error::AxisMismatch(format!(
            "{}x{} grid ({:.6e} s, {:.6} Hz) vs {}x{} grid ({:.6e} s, {:.6} Hz)",
            a.axes.n_doppler,
            a.axes.n_delay,
            a.axes.delay_bin,
            a.axes.doppler_bin,
            b.axes.n_doppler,
            b.axes.n_delay,
            b.axes.delay_bin,
            b.axes.doppler_bin
        )));
    }
    let mut candidates = Vec::new();
    for (i, pa) in a.peaks.iter().enumerate() {
        for (j, pb) in b.peaks.iter().enumerate() {
            let d = pa.row.abs_diff(pb.row).max(pa.col.abs_diff(pb.col));
            if d <= gate {
                let (lo, hi) = ((pa.row, pa.col).min((pb.row, pb.col)), (pa.row, pa.col).max((pb.row, pb.col)));
                candidates.push((pa.power_db + pb.power_db, d, lo, hi, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
    });
    let mut used_a = vec![false; a.peaks.len()];
    let mut used_b = vec![false; b.peaks.len()];
    let mut pairs = Vec::new();
    for &(_, _, _, _, i, j) in &candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let (pa, pb) = (&a.peaks[i], &b.peaks[j]);
        pairs.push(MatchedPair {
            a: i,
            b: j,
            delta_delay_bins: pb.col as i64 - pa.col as i64,
            delta_doppler_bins: pb.row as i64 - pa.row as i64,
            delta_power_db: pb.power_db - pa.power_db,
        });
    }
    pairs.sort_by_key(|p| p.a);
    Ok(MatchReport {
        gate_bins: gate,
        unmatched_a: a.peaks.len() - pairs.len(),
        unmatched_b: b.peaks.len() - pairs.len(),
        pairs,
        ridge_fraction_a: a.ridge_fraction,
        ridge_fraction_b: b.ridge_fraction,
        peaks_a: a.peaks.clone(),
        peaks_b: b.peaks.clone(),
    })
}

impl MatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table, one line per matched pair.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>12} {:>12} {:>10} {:>6} {:>6} {:>8}",
            "#", "delay_ns", "doppler_hz", "power_db", "d_del", "d_dop", "d_pow"
        );
        for (k, p) in self.pairs.iter().enumerate() {
            let pa = &self.peaks_a[p.a];
            let _ = writeln!(
                s,
                "{:>4} {:>12.3} {:>12.2} {:>10.2} {:>6} {:>6} {:>8.2}",
                k,
                pa.delay * 1e9,
                pa.doppler,
                pa.power_db,
                p.delta_delay_bins,
                p.delta_doppler_bins,
                p.delta_power_db
            );
        }
        let _ = writeln!(
            s,
            "matched {}  unmatched a {}  unmatched b {}  gate {} bins",
            self.pairs.len(),
            self.unmatched_a,
            self.unmatched_b,
            self.gate_bins
        );
        let _ = writeln!(
            s,
            "ridge fraction a {:.4}  b {:.4}",
            self.ridge_fraction_a, self.ridge_fraction_b
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmcw::{to_db, MapKind, MapMeta, Window};

    fn map_with(peaks: &[(usize, usize, f64)], n_doppler: usize, n_delay: usize) -> DelayDopplerMap {
        let mut lin = vec![1e-20; n_doppler * n_delay];
        for &(r, c, p) in peaks {
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < n_doppler && (cc as usize) < n_delay {
                        let fall = if dr == 0 && dc == 0 { 1.0 } else { 0.1 };
                        lin[rr as usize * n_delay + cc as usize] += p * fall;
                    }
                }
            }
        }
        DelayDopplerMap {
            axes: MapAxes {
                n_delay,
                n_doppler,
                delay_bin: 1e-9,
                doppler_bin: 10.0,
            },
            meta: MapMeta {
                kind: MapKind::Predicted,
                n_chirps: n_doppler,
                t_w: 0.1,
                t0: 0.0,
                start_epoch: 0,
                window_fast: Window::Rect,
                window_slow: Window::Rect,
                zero_pad: 1,
            },
            power_db: lin.into_iter().map(to_db).collect(),
        }
    }

    #[test]
    fn single_peak() {
        let m = map_with(&[(5, 7, 1e-6)], 16, 20);
        let p = extract_peaks(&m, 40.0, 3).unwrap();
        assert_eq!(p.peaks.len(), 1);
        assert_eq!((p.peaks[0].row, p.peaks[0].col), (5, 7));
    }

    #[test]
    fn two_separated_peaks() {
        let m = map_with(&[(5, 4, 1e-6), (5, 8, 5e-7)], 16, 20);
        let p = extract_peaks(&m, 40.0, 3).unwrap();
        assert_eq!(p.peaks.len(), 2);
        assert!(p.peaks[0].power_db > p.peaks[1].power_db);
    }

    #[test]
    fn uniform_map_has_no_peaks() {
        let m = map_with(&[], 8, 8);
        assert!(extract_peaks(&m, 10.0, 1).unwrap().peaks.is_empty());
    }

    #[test]
    fn threshold_must_be_positive() {
        let m = map_with(&[], 8, 8);
        assert!(extract_peaks(&m, 0.0, 1).is_err());
    }

    #[test]
    fn shifted_map_reports_one_bin() {
        let a = map_with(&[(5, 4, 1e-6), (10, 12, 1e-7)], 16, 20);
        let b = map_with(&[(5, 5, 1e-6), (10, 13, 1e-7)], 16, 20);
        let r = match_maps(
            &extract_peaks(&a, 60.0, 3).unwrap(),
            &extract_peaks(&b, 60.0, 3).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert!(r.pairs.iter().all(|p| p.delta_delay_bins == 1 && p.delta_doppler_bins == 0));
        assert!(r.to_table().contains("matched 2"));
    }

    #[test]
    fn axis_mismatch() {
        let a = extract_peaks(&map_with(&[(2, 2, 1.0)], 8, 8), 10.0, 1).unwrap();
        let b = extract_peaks(&map_with(&[(2, 2, 1.0)], 16, 8), 10.0, 1).unwrap();
        assert!(matches!(match_maps(&a, &b, 3), Err(Error::AxisMismatch(_))));
    }
}
