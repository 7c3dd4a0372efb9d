//! WebAssembly bindings for the browser demo.
//!
//! Every export returns a JSON document. The `*_json` functions hold the
//! logic and are plain Rust so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use llc_dmm::circuit::{derived_ratios, resonant_frequencies};
use llc_dmm::precompute::build_bundle;
use llc_dmm::report::{gain_curve, Waveforms};
use llc_dmm::scenario::{run_simulation, Scenario};
use llc_dmm::solvers::EngineKind;
use llc_dmm::{LlcParameters, Preset};

/// Rows above this are refused so a page cannot exhaust memory.
const MAX_ROWS: usize = 200_000;
const MAX_GRID: usize = 512;

fn preset(name: &str) -> Result<LlcParameters, String> {
    name.parse::<Preset>().map(Preset::parameters).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GainSeries {
    q: f64,
    f: Vec<f64>,
    g: Vec<f64>,
}

#[derive(Serialize)]
struct GainDoc {
    m: f64,
    fr1: f64,
    fr2: f64,
    q_nominal: f64,
    series: Vec<GainSeries>,
}

pub fn gain_curves_json(preset_name: &str, qs: &[f64], f_min: f64, f_max: f64, points: usize) -> Result<String, String> {
    let r = derived_ratios(&preset(preset_name)?);
    let pts = gain_curve(r.m, qs, f_min, f_max, points.min(MAX_ROWS)).map_err(|e| e.to_string())?;
    let series = qs
        .iter()
        .map(|&q| {
            let (f, g) = pts.iter().filter(|p| p.q == q).map(|p| (p.f, p.g)).unzip();
            GainSeries { q, f, g }
        })
        .collect();
    let doc = GainDoc { m: r.m, fr1: r.fr1, fr2: r.fr2, q_nominal: r.q, series };
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RegionDoc {
    m1: f64,
    m2: f64,
    extent: f64,
    size: usize,
    /// Row-major rectifier states, first row at `ih2 = +extent`.
    states: Vec<u8>,
}

/// Rectifier state chosen by the mapping function over a square of the
/// `(ih1, ih2)` plane centred on the origin.
pub fn region_map_json(preset_name: &str, extent: f64, size: usize) -> Result<String, String> {
    if !(extent > 0.0 && extent.is_finite()) || !(2..=MAX_GRID).contains(&size) {
        return Err(format!("need extent > 0 and 2 <= size <= {MAX_GRID}"));
    }
    let b = build_bundle(&preset(preset_name)?).map_err(|e| e.to_string())?;
    let mf = b.mapping();
    let at = |i: usize| extent * (2.0 * i as f64 / (size - 1) as f64 - 1.0);
    let mut states = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            states.push(mf.classify(at(col), -at(row)).map_err(|e| e.to_string())?);
        }
    }
    serde_json::to_string(&RegionDoc { m1: mf.m1, m2: mf.m2, extent, size, states }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SimDoc<'a> {
    engine: &'a str,
    fs: f64,
    t: &'a [f64],
    vo: &'a [f64],
    ir: &'a [f64],
    im: &'a [f64],
    sigma: &'a [u8],
}

/// Constant-frequency run from rest. `fs <= 0` selects √(fr1·fr2).
pub fn simulate_json(preset_name: &str, engine: &str, fs: f64, duration: f64, decimation: usize) -> Result<String, String> {
    let p = preset(preset_name)?;
    let kind: EngineKind = engine.parse().map_err(|e: llc_dmm::Error| e.to_string())?;
    let fs = if fs > 0.0 {
        fs
    } else {
        let (fr1, fr2) = resonant_frequencies(&p);
        (fr1 * fr2).sqrt()
    };
    let mut s = Scenario::constant(fs, p.vin, duration);
    s.decimation = decimation.max(1);
    let rows = s.steps(p.dt) / s.decimation;
    if rows > MAX_ROWS {
        return Err(format!("{rows} rows requested; raise the decimation to stay under {MAX_ROWS}"));
    }
    let w: Waveforms = run_simulation(kind, &s, &p, None).map_err(|e| e.to_string())?;
    let doc = SimDoc { engine: kind.as_str(), fs, t: &w.t, vo: &w.vo, ir: &w.ir, im: &w.im, sigma: &w.sigma };
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn gain_curves(preset: &str, qs: Vec<f64>, f_min: f64, f_max: f64, points: usize) -> Result<String, JsValue> {
    gain_curves_json(preset, &qs, f_min, f_max, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn region_map(preset: &str, extent: f64, size: usize) -> Result<String, JsValue> {
    region_map_json(preset, extent, size).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(preset: &str, engine: &str, fs: f64, duration: f64, decimation: usize) -> Result<String, JsValue> {
    simulate_json(preset, engine, fs, duration, decimation).map_err(|e| JsValue::from_str(&e))
}
