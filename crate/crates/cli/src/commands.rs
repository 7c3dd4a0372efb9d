use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;

use llc_dmm::circuit::{derived_ratios, resonant_frequencies};
use llc_dmm::dmm::enumerate_feasible;
use llc_dmm::fxp::{quantize_bundle, PerUnitScale};
use llc_dmm::precompute::{build_bundle, export_bundle, import_bundle, MatrixBundle};
use llc_dmm::report::{emit_gain_curve, gain_curve, ErrorAccumulator, Waveforms};
use llc_dmm::scenario::{drive, prepare_bundles, test_sequence, Scenario};
use llc_dmm::solvers::{build_engine, Engine, EngineKind};
use llc_dmm::stamping::FEASIBLE_REC;
use llc_dmm::{LlcParameters, Preset};

use crate::config::{ParameterOverrides, ScenarioFile, CONFIG_SCHEMA_VERSION};
use crate::{GainArgs, PrecomputeArgs, RunArgs, SequenceArgs, Source, VerifyArgs};

/// Largest DMM2 vs iterBE relative 2-norm gap accepted by `verify`.
const EXACTNESS_TOLERANCE: f64 = 1e-10;

fn resolve(source: &Source) -> Result<(LlcParameters, Scenario)> {
    let (mut p, scenario) = match &source.config {
        Some(path) => {
            let file = ScenarioFile::load(path)?;
            (file.resolved_parameters(), file.scenario)
        }
        None => {
            let p = source.preset.parameters();
            let fs = source.fs.unwrap_or_else(|| {
                let (fr1, fr2) = resonant_frequencies(&p);
                (fr1 * fr2).sqrt()
            });
            (p, Scenario::constant(fs, p.vin, source.duration))
        }
    };
    if let Some(dt) = source.dt {
        p.dt = dt;
    }
    scenario.validate(&p)?;
    Ok((p, scenario))
}

/// Shortens a scenario, dropping faults that start after the new end and
/// clipping one that straddles it.
fn truncate(mut s: Scenario, duration: f64) -> Scenario {
    if duration < s.duration {
        s.duration = duration;
        s.faults.retain(|f| f.t_on < duration);
        for f in &mut s.faults {
            f.t_off = f.t_off.min(duration);
        }
    }
    s
}

/// Error windows between consecutive profile and fault boundaries, plus
/// the whole run.
fn windows(s: &Scenario) -> Vec<(String, f64, f64)> {
    let mut cuts = vec![0.0, s.duration];
    cuts.extend(s.profile.segments.iter().flat_map(|g| [g.t_start, g.t_end]));
    cuts.extend(s.faults.iter().flat_map(|f| [f.t_on, f.t_off]));
    cuts.retain(|t| (0.0..=s.duration).contains(t));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let secs = |t: f64| if (t * 100.0).round() == t * 100.0 { format!("{t:.2}") } else { format!("{t}") };
    let label = |a: f64, b: f64| format!("{}s-{}s", secs(a), secs(b));
    let mut out: Vec<_> = cuts.windows(2).map(|w| (label(w[0], w[1]), w[0], w[1])).collect();
    if out.len() > 1 {
        out.push((label(0.0, s.duration), 0.0, s.duration));
    }
    out
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn engines(kinds: &[EngineKind], s: &Scenario, p: &LlcParameters, bundles: &[MatrixBundle]) -> Result<Vec<Box<dyn Engine>>> {
    let variants = s.variants(p);
    let b = (!bundles.is_empty()).then_some(bundles);
    Ok(kinds.iter().map(|&k| build_engine(k, &variants, b)).collect::<llc_dmm::Result<_>>()?)
}

pub fn precompute(a: &PrecomputeArgs) -> Result<bool> {
    let (mut p, _) = resolve(&a.source)?;
    if let Some(rl) = a.load {
        p = p.with_load(rl);
    }
    let mut b = build_bundle(&p)?;
    if a.fixed_point {
        b = quantize_bundle(&b, &PerUnitScale::for_parameters(&p))?;
    }
    export_bundle(&b, &a.out)?;
    let feasible = enumerate_feasible(b.norton.g1, b.norton.g2, p.g_on(), p.g_off())?.feasible_set();
    eprintln!(
        "wrote {} (parameters {}, m1 = {}, m2 = {}, feasible rectifier states {:?})",
        a.out.display(),
        b.parameters_hash,
        b.slopes.m1,
        b.slopes.m2,
        feasible
    );
    Ok(true)
}

pub fn run(a: &RunArgs) -> Result<bool> {
    let (p, mut s) = resolve(&a.source)?;
    if let Some(d) = a.decimation {
        s.decimation = d;
    }
    let variants = s.variants(&p);
    let bundles = if a.bundle.is_empty() {
        if a.engine.needs_bundle() {
            prepare_bundles(&p, &s, a.engine == EngineKind::Dmm1Fxp)?
        } else {
            Vec::new()
        }
    } else {
        if a.bundle.len() != variants.len() {
            bail!("{} bundles given for {} network variants", a.bundle.len(), variants.len());
        }
        a.bundle.iter().zip(&variants).map(|(path, v)| import_bundle(path, Some(v))).collect::<llc_dmm::Result<_>>()?
    };
    let mut e = engines(&[a.engine], &s, &p, &bundles)?;
    let started = Instant::now();
    let mut w = Waveforms::default();
    drive(&s, &p, &mut e, |ctx, o| {
        if ctx.k % s.decimation == 0 {
            w.push(ctx.t, &o[0], ctx.fs);
        }
        Ok(())
    })?;
    w.write_csv(output(&a.out)?)?;
    let stats = e[0].stats();
    info!("{} steps in {:?}", stats.steps, started.elapsed());
    eprintln!("{}: {} steps, {} rows, stats {:?}", a.engine, stats.steps, w.len(), stats);
    Ok(stats.overflows == 0)
}

fn check(ok: bool, what: &str) -> bool {
    println!("{}  {what}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn verify(a: &VerifyArgs) -> Result<bool> {
    let (p, s) = resolve(&a.source)?;
    let span = a.steps as f64 * p.dt;
    let s = match a.source.config {
        Some(_) => truncate(s, span),
        None => Scenario::constant(s.profile.frequency(0.0)?, s.u, span),
    };
    let mut all = true;

    for (i, v) in s.variants(&p).iter().enumerate() {
        let b = build_bundle(v)?;
        let report = enumerate_feasible(b.norton.g1, b.norton.g2, v.g_on(), v.g_off())?;
        println!("network {i}: m1 = {:.9e}, m2 = {:.9e}", b.slopes.m1, b.slopes.m2);
        for entry in &report.entries {
            let witness = entry.witness.map_or("-".to_string(), |[x, y]| format!("({x:.3e}, {y:.3e})"));
            println!("  sigma_rec {:>2} ({:04b})  feasible {:<5}  witness {witness}", entry.sigma_rec, entry.sigma_rec, entry.feasible);
        }
        all &= check(report.feasible_set() == FEASIBLE_REC, &format!("network {i}: feasible rectifier states {:?}", report.feasible_set()));
    }

    let bundles = prepare_bundles(&p, &s, false)?;
    let mut e = engines(&[EngineKind::IterBe, EngineKind::Dmm2, EngineKind::Dmm1], &s, &p, &bundles)?;
    let (mut steps, mut be_mismatch, mut fold_mismatch) = (0u64, 0u64, 0u64);
    let (mut d2, mut r2) = (0.0, 0.0);
    drive(&s, &p, &mut e, |_, o| {
        steps += 1;
        be_mismatch += u64::from(o[0].sigma != o[1].sigma);
        fold_mismatch += u64::from(o[1].sigma != o[2].sigma || o[1].y != o[2].y);
        for k in 0..3 {
            d2 += (o[1].y[k] - o[0].y[k]).powi(2);
            r2 += o[0].y[k].powi(2);
        }
        Ok(())
    })?;
    let gap = if r2 > 0.0 { (d2 / r2).sqrt() } else { d2.sqrt() };
    all &= check(be_mismatch == 0, &format!("dmm2 vs iter-be: {be_mismatch} switch-state mismatches in {steps} steps"));
    all &= check(gap <= EXACTNESS_TOLERANCE, &format!("dmm2 vs iter-be: relative 2-norm gap {gap:.3e}"));
    all &= check(fold_mismatch == 0, &format!("dmm1 vs dmm2: {fold_mismatch} mismatching steps at one-step latency"));
    let it = e[0].stats();
    println!("iter-be: at most {} solves per step, {} cycle-guard events", it.max_iterations, it.cycle_guard_events);
    Ok(all)
}

pub fn gain(a: &GainArgs) -> Result<bool> {
    let m = match a.m {
        Some(m) => m,
        None => {
            let r = derived_ratios(&a.preset.parameters());
            eprintln!(
                "{}: fr1 = {:.1} Hz, fr2 = {:.1} Hz, m = {}, Q = {:.4}, Rac = {:.3} Ω",
                a.preset, r.fr1, r.fr2, r.m, r.q, r.rac
            );
            r.m
        }
    };
    let points = gain_curve(m, &a.q, a.f_min, a.f_max, a.points)?;
    emit_gain_curve(&points, output(&a.out)?)?;
    let unity = points.iter().filter(|g| g.f == 1.0).all(|g| (g.g - 1.0).abs() <= 1e-12);
    Ok(unity)
}

pub fn sequence(a: &SequenceArgs) -> Result<bool> {
    let mut file = match &a.config {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile {
            schema_version: CONFIG_SCHEMA_VERSION,
            preset: Preset::Set2,
            parameters: ParameterOverrides::default(),
            scenario: test_sequence(),
        },
    };
    file.scenario = truncate(file.scenario, a.duration.unwrap_or(f64::INFINITY));
    let p = file.resolved_parameters();
    file.scenario.validate(&p)?;
    if let Some(path) = &a.save_config {
        fs::write(path, file.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let s = file.scenario;
    let kinds = [a.reference, a.dut];
    let fixed = kinds.contains(&EngineKind::Dmm1Fxp);
    let bundles = if kinds.iter().any(|k| k.needs_bundle()) { prepare_bundles(&p, &s, fixed)? } else { Vec::new() };
    let mut e = engines(&kinds, &s, &p, &bundles)?;

    let mut acc = ErrorAccumulator::new(windows(&s));
    let (mut wr, mut wd) = (Waveforms::default(), Waveforms::default());
    let keep = a.csv_dir.is_some();
    let dec = a.decimation.max(1);
    let started = Instant::now();
    drive(&s, &p, &mut e, |ctx, o| {
        acc.push(ctx.t, &o[1].y, &o[0].y);
        if keep && ctx.k % dec == 0 {
            wr.push(ctx.t, &o[0], ctx.fs);
            wd.push(ctx.t, &o[1], ctx.fs);
        }
        Ok(())
    })?;
    let report = acc.report();
    println!("{} vs {} over {} s ({:?})", a.dut, a.reference, s.duration, started.elapsed());
    print!("{report}");

    if let Some(dir) = &a.csv_dir {
        fs::create_dir_all(dir)?;
        wr.write_csv(BufWriter::new(File::create(dir.join("reference.csv"))?))?;
        wd.write_csv(BufWriter::new(File::create(dir.join("dut.csv"))?))?;
    }

    let within = report.rows.iter().all(|r| r.e.iter().all(|e| e.is_some_and(|v| v <= a.threshold)));
    let overflows: u64 = e.iter().map(|x| x.stats().overflows).sum();
    let mut ok = check(within, &format!("every window and signal within {:.3}%", 100.0 * a.threshold));
    ok &= check(overflows == 0, &format!("{overflows} fixed-point overflow events"));
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use llc_dmm::scenario::test_sequence_windows;

    #[test]
    fn windows_of_the_test_sequence() {
        assert_eq!(windows(&test_sequence()), test_sequence_windows());
    }

    #[test]
    fn truncation_clips_faults() {
        let s = truncate(test_sequence(), 0.12);
        assert_eq!(s.faults.len(), 1);
        assert_eq!(s.faults[0].t_off, 0.12);
        assert!(truncate(test_sequence(), 0.05).faults.is_empty());
        assert_eq!(truncate(test_sequence(), 1.0), test_sequence());
    }
}
