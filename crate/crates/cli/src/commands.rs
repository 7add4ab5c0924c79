use std::io::Write;
use std::path::{Path, PathBuf};

use isac_rt::analysis::{extract_peaks, match_maps};
use isac_rt::channel::io::{read_cir, write_cir, write_cir_csv, CirHeader};
use isac_rt::channel::{max_range, simulate_cir, ChirpConfig, CirFrame, LinkMode, SensingLink};
use isac_rt::fmcw::export::{read_map_bin, write_map_bin, write_map_csv, write_map_pgm, write_pdp_bin, write_pdp_csv, DbScale};
use isac_rt::fmcw::{delay_doppler_padded, pdp_series, predicted_map, synth_beat, DelayDopplerMap, NoiseConfig, Window};
use isac_rt::raytrace::{PathKind, TraceConfig};
use isac_rt::scene::load_scene;
use serde_json::{json, Value};

use crate::output::{ensure_dir, open, timestamp, write_file, write_json};
use crate::{
    ChirpOverrides, CliError, CompareArgs, Export, InfoArgs, Mode, PredictArgs, ProcessArgs, SimulateArgs,
    TraceOverrides, WindowArgs,
};

/// Settings shared by every subcommand.
pub struct Context {
    pub out: PathBuf,
    pub seed: u64,
    pub created: String,
}

impl Context {
    pub fn new(cli: &crate::Cli) -> Self {
        Context {
            out: cli.out.clone(),
            seed: cli.seed,
            created: timestamp(cli.frozen_clock),
        }
    }
}

fn chirp_config(o: &ChirpOverrides, n_chirps: usize) -> ChirpConfig {
    let d = ChirpConfig::default();
    let bandwidth = o.bandwidth.unwrap_or(d.bandwidth);
    let t_chirp = o.t_chirp.unwrap_or(d.t_chirp);
    // keep the slope consistent with an overridden sweep unless given explicitly
    let slope = match (o.slope, o.bandwidth.is_some() || o.t_chirp.is_some()) {
        (Some(s), _) => s,
        (None, true) => bandwidth / t_chirp,
        (None, false) => d.slope,
    };
    ChirpConfig {
        f_c: o.fc.unwrap_or(d.f_c),
        bandwidth,
        t_chirp,
        t_idle: o.t_idle.unwrap_or(d.t_idle),
        slope,
        f_samp: o.f_samp.unwrap_or(d.f_samp),
        n_chirps_total: n_chirps,
    }
}

fn trace_config(o: &TraceOverrides, seed: u64) -> TraceConfig {
    let d = TraceConfig::default();
    TraceConfig {
        max_specular_order: o.max_order.unwrap_or(d.max_specular_order),
        diffuse_enabled: !o.no_diffuse,
        diffuse_samples_per_facet: o.diffuse_samples.unwrap_or(d.diffuse_samples_per_facet),
        max_patch_area: o.max_patch_area.unwrap_or(d.max_patch_area),
        seed,
        ..d
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Default, Clone, Copy)]
struct KindCounts {
    los: usize,
    specular: usize,
    diffuse: usize,
}

fn count_kinds(frame: &CirFrame) -> KindCounts {
    let mut c = KindCounts::default();
    for p in &frame.paths {
        match p.kind() {
            PathKind::Los => c.los += 1,
            PathKind::Specular { .. } => c.specular += 1,
            PathKind::Diffuse => c.diffuse += 1,
        }
    }
    c
}

fn range_stats(values: impl Iterator<Item = usize> + Clone) -> Value {
    let n = values.clone().count().max(1) as f64;
    json!({
        "min": values.clone().min().unwrap_or(0),
        "max": values.clone().max().unwrap_or(0),
        "mean": values.sum::<usize>() as f64 / n,
    })
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), CliError> {
    let scene = load_scene(&a.scene)?;
    let chirp = chirp_config(&a.chirp, a.chirps);
    let trace = trace_config(&a.trace, ctx.seed);
    let link = SensingLink {
        mode: match a.mode {
            Mode::Mono => LinkMode::MonoStatic,
            Mode::Bi => LinkMode::BiStatic,
        },
        tx: a.tx.clone(),
        rx: a.rx.clone().unwrap_or_else(|| a.tx.clone()),
        scenario: None,
    };
    let (tx, rx) = link.resolve(&scene)?;
    let frames = simulate_cir(&scene, &link, &chirp, &trace, a.t0)?;

    let run = json!({
        "command": "simulate",
        "scene": path_str(&a.scene),
        "seed": ctx.seed,
        "t0": a.t0,
        "chirps": a.chirps,
        "link_budget": {
            "tx_power_dbm": scene.transceivers[tx].tx_power_dbm,
            "noise_figure_db": scene.transceivers[rx].noise_figure_db,
        },
    });
    let header = CirHeader {
        chirp: chirp.clone(),
        link,
        trace,
        t0: a.t0,
        seed: ctx.seed,
        created: ctx.created.clone(),
        run: run.clone(),
    };

    ensure_dir(&ctx.out)?;
    let cir_path = write_file(&ctx.out, "cir.bin", |w| write_cir(w, &header, &frames))?;
    write_file(&ctx.out, "paths.csv", |w| write_cir_csv(w, &frames))?;
    let counts: Vec<KindCounts> = frames.iter().map(count_kinds).collect();
    write_file(&ctx.out, "path_counts.csv", |w| {
        writeln!(w, "epoch,t_s,los,specular,diffuse,dropped")?;
        for (f, c) in frames.iter().zip(&counts) {
            writeln!(w, "{},{:.9},{},{},{},{}", f.epoch_index, f.t, c.los, c.specular, c.diffuse, f.dropped)?;
        }
        Ok(())
    })?;
    let summary = json!({
        "created": ctx.created,
        "header": header,
        "frames": frames.len(),
        "paths_per_epoch": {
            "los": range_stats(counts.iter().map(|c| c.los)),
            "specular": range_stats(counts.iter().map(|c| c.specular)),
            "diffuse": range_stats(counts.iter().map(|c| c.diffuse)),
        },
        "dropped_total": frames.iter().map(|f| f.dropped).sum::<usize>(),
    });
    write_json(&ctx.out, "simulate.json", &summary)?;

    println!("wrote {} ({} frames)", cir_path.display(), frames.len());
    println!(
        "paths per epoch: los {}, specular {}, diffuse {}",
        summary["paths_per_epoch"]["los"]["mean"],
        summary["paths_per_epoch"]["specular"]["mean"],
        summary["paths_per_epoch"]["diffuse"]["mean"]
    );
    Ok(())
}

/// Window start epochs requested by `w` for an episode of `total` frames.
fn window_starts(w: &WindowArgs, total: usize) -> Result<Vec<usize>, CliError> {
    if w.n == 0 {
        return Err(CliError::Input("--N must be >= 1".into()));
    }
    if w.windows == 0 {
        return Err(CliError::Input("--windows must be >= 1".into()));
    }
    if w.zero_pad == 0 {
        return Err(CliError::Input("--zero-pad must be >= 1".into()));
    }
    if !w.db_min.is_finite() || !w.db_max.is_finite() || w.db_max <= w.db_min {
        return Err(CliError::Input("--db-max must exceed --db-min".into()));
    }
    let hop = w.hop.unwrap_or(w.n);
    if hop == 0 {
        return Err(CliError::Input("--hop must be >= 1".into()));
    }
    let first = w.start.unwrap_or_else(|| (total / 2).saturating_sub(w.n / 2));
    Ok((0..w.windows).map(|k| first + k * hop).collect())
}

fn read_cir_file(path: &Path) -> Result<(CirHeader, Vec<CirFrame>), CliError> {
    read_cir(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes one map in every requested format and returns the file names.
fn export_map(
    ctx: &Context,
    stem: &str,
    map: &DelayDopplerMap,
    run: &Value,
    w: &WindowArgs,
) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    let mut formats = w.export.clone();
    formats.dedup();
    for f in formats {
        match f {
            Export::Bin => {
                let name = format!("{stem}.bin");
                write_file(&ctx.out, &name, |out| write_map_bin(out, map, run))?;
                files.push(name);
            }
            Export::Csv => {
                let name = format!("{stem}.csv");
                write_file(&ctx.out, &name, |out| write_map_csv(out, map))?;
                files.push(name);
            }
            Export::Pgm => {
                let scale = DbScale {
                    min_db: w.db_min,
                    max_db: w.db_max,
                };
                let name = format!("{stem}.pgm");
                write_file(&ctx.out, &name, |out| write_map_pgm(out, map, &scale))?;
                let sidecar = format!("{stem}.pgm.scale.txt");
                write_file(&ctx.out, &sidecar, |out| out.write_all(scale.sidecar(map).as_bytes()))?;
                files.push(name);
                files.push(sidecar);
            }
        }
    }
    Ok(files)
}

fn map_summary(map: &DelayDopplerMap, files: Vec<String>) -> Value {
    let (row, col, db) = map.max_cell();
    json!({
        "start_epoch": map.meta.start_epoch,
        "t0": map.meta.t0,
        "t_w": map.meta.t_w,
        "axes": map.axes,
        "max": {"delay_s": map.axes.delay(col), "doppler_hz": map.axes.doppler(row), "power_db": db},
        "ridge_fraction": map.ridge_fraction(),
        "files": files,
    })
}

fn noise_config(a: &ProcessArgs, header: &CirHeader, seed: u64) -> Result<NoiseConfig, CliError> {
    if !a.noise {
        return Ok(NoiseConfig::off());
    }
    if let Some(floor_db) = a.noise_floor_db {
        return Ok(NoiseConfig {
            enabled: true,
            floor_db,
            seed,
        });
    }
    let budget = &header.run["link_budget"];
    match (budget["tx_power_dbm"].as_f64(), budget["noise_figure_db"].as_f64()) {
        (Some(p), Some(nf)) => Ok(NoiseConfig::from_link_budget(p, nf, header.chirp.f_samp, seed)),
        _ => Err(CliError::Input(
            "CIR header carries no link budget; pass --noise-floor-db or --noise false".into(),
        )),
    }
}

pub fn process(ctx: &Context, a: &ProcessArgs) -> Result<(), CliError> {
    let (header, frames) = read_cir_file(&a.cir)?;
    let starts = window_starts(&a.windows, frames.len())?;
    let fast = a.fast_window.unwrap_or(a.window);
    let slow = a.slow_window.unwrap_or(a.window);
    let noise = noise_config(a, &header, ctx.seed)?;
    let chirp = &header.chirp;

    let run = json!({
        "command": "process",
        "cir": path_str(&a.cir),
        "source": header,
        "seed": ctx.seed,
        "created": ctx.created,
        "window_fast": fast,
        "window_slow": slow,
        "n": a.windows.n,
        "zero_pad": a.windows.zero_pad,
        "noise": noise,
    });

    // fail on bad windows before the expensive synthesis
    for &s in &starts {
        if s + a.windows.n > frames.len() {
            return Err(isac_rt::Error::InsufficientFrames {
                needed: a.windows.n,
                start: s,
                available: frames.len(),
            }
            .into());
        }
    }
    let beats = synth_beat(&frames, chirp, &noise);
    ensure_dir(&ctx.out)?;

    let pdp = pdp_series(&beats, fast, chirp);
    let mut pdp_files = Vec::new();
    if a.windows.export.contains(&Export::Csv) {
        write_file(&ctx.out, "pdp.csv", |w| write_pdp_csv(w, &pdp))?;
        pdp_files.push("pdp.csv");
    }
    if a.windows.export.contains(&Export::Bin) {
        write_file(&ctx.out, "pdp.bin", |w| write_pdp_bin(w, &pdp, &run))?;
        pdp_files.push("pdp.bin");
    }

    let mut maps = Vec::new();
    for &s in &starts {
        let map = delay_doppler_padded(&beats, s, a.windows.n, fast, slow, chirp, a.windows.zero_pad)?;
        let files = export_map(ctx, &format!("map_{s:05}"), &map, &run, &a.windows)?;
        println!(
            "map at chirp {s}: N = {}, T_w = {:.3} ms, Doppler bin {:.2} Hz, delay bin {:.4} ns",
            a.windows.n,
            map.meta.t_w * 1e3,
            map.axes.doppler_bin,
            map.axes.delay_bin * 1e9
        );
        maps.push(map_summary(&map, files));
    }
    write_json(&ctx.out, "process.json", &json!({"run": run, "pdp": pdp_files, "maps": maps}))?;
    Ok(())
}

pub fn predict(ctx: &Context, a: &PredictArgs) -> Result<(), CliError> {
    let (header, frames) = read_cir_file(&a.cir)?;
    let starts = window_starts(&a.windows, frames.len())?;
    let run = json!({
        "command": "predict",
        "cir": path_str(&a.cir),
        "source": header,
        "seed": ctx.seed,
        "created": ctx.created,
        "window_slow": a.window,
        "n": a.windows.n,
        "zero_pad": a.windows.zero_pad,
    });
    let mut maps = Vec::new();
    for &s in &starts {
        let map = predicted_map(&frames, s, a.windows.n, a.window, &header.chirp, a.windows.zero_pad)?;
        ensure_dir(&ctx.out)?;
        let files = export_map(ctx, &format!("predicted_{s:05}"), &map, &run, &a.windows)?;
        println!("predicted map at chirp {s}: {} paths in the mid frame", frames[s + a.windows.n / 2].paths.len());
        maps.push(map_summary(&map, files));
    }
    write_json(&ctx.out, "predict.json", &json!({"run": run, "maps": maps}))?;
    Ok(())
}

fn read_map_file(path: &Path) -> Result<(DelayDopplerMap, Value), CliError> {
    read_map_bin(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn compare(ctx: &Context, a: &CompareArgs) -> Result<(), CliError> {
    let (map_a, run_a) = read_map_file(&a.a)?;
    let (map_b, run_b) = read_map_file(&a.b)?;
    let peaks_a = extract_peaks(&map_a, a.threshold_db, a.min_sep)?;
    let peaks_b = extract_peaks(&map_b, a.threshold_db, a.min_sep)?;
    let report = match_maps(&peaks_a, &peaks_b, a.gate)?;
    let run = json!({
        "command": "compare",
        "a": path_str(&a.a),
        "b": path_str(&a.b),
        "seed": ctx.seed,
        "created": ctx.created,
        "threshold_db": a.threshold_db,
        "min_separation": a.min_sep,
        "gate": a.gate,
        "source_a": run_a,
        "source_b": run_b,
    });
    ensure_dir(&ctx.out)?;
    write_json(&ctx.out, "report.json", &json!({"run": run, "report": report}))?;
    let table = report.to_table();
    write_file(&ctx.out, "report.txt", |w| w.write_all(table.as_bytes()))?;
    print!("{table}");
    Ok(())
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

pub fn info(a: &InfoArgs) -> Result<(), CliError> {
    if let Some(path) = &a.scene {
        let scene = load_scene(path)?;
        let bodies: Vec<Value> = scene
            .bodies
            .iter()
            .map(|b| {
                json!({
                    "id": b.id,
                    "facets": b.facets.len(),
                    "t_start": b.trajectory.first().map(|w| w.t),
                    "t_end": b.trajectory.last().map(|w| w.t),
                })
            })
            .collect();
        return print_json(&json!({
            "materials": scene.materials.iter().map(|m| m.name.clone()).collect::<Vec<_>>(),
            "facets": scene.facets.len(),
            "transceivers": scene.transceivers.iter().map(|t| t.id.clone()).collect::<Vec<_>>(),
            "bodies": bodies,
        }));
    }
    if let Some(path) = &a.cir {
        let (header, frames) = read_cir_file(path)?;
        let counts: Vec<KindCounts> = frames.iter().map(count_kinds).collect();
        return print_json(&json!({
            "header": header,
            "frames": frames.len(),
            "t_first": frames.first().map(|f| f.t),
            "t_last": frames.last().map(|f| f.t),
            "paths_per_epoch": {
                "los": range_stats(counts.iter().map(|c| c.los)),
                "specular": range_stats(counts.iter().map(|c| c.specular)),
                "diffuse": range_stats(counts.iter().map(|c| c.diffuse)),
            },
        }));
    }
    if let Some(path) = &a.map {
        let (map, run) = read_map_file(path)?;
        let (row, col, db) = map.max_cell();
        return print_json(&json!({
            "axes": map.axes,
            "meta": map.meta,
            "max": {"delay_s": map.axes.delay(col), "doppler_hz": map.axes.doppler(row), "power_db": db},
            "ridge_fraction": map.ridge_fraction(),
            "run": run,
        }));
    }
    let c = ChirpConfig::default();
    let n = 128;
    print_json(&json!({
        "chirp": c,
        "pri_s": c.pri(),
        "samples_per_chirp": c.samples_per_chirp(),
        "delay_bin_s": c.delay_bin(1),
        "max_delay_s": c.max_delay(),
        "max_range_mono_m": max_range(&c, LinkMode::MonoStatic),
        "max_range_bi_m": max_range(&c, LinkMode::BiStatic),
        "window": {"n": n, "t_w_s": c.window_duration(n), "doppler_bin_hz": 1.0 / c.window_duration(n)},
        "windows": [Window::Hann, Window::Rect],
    }))
}
