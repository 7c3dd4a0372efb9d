//! Gating profiles, load faults and the lockstep simulation driver.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::circuit::LlcParameters;
use crate::error::{Error, Result};
use crate::fxp::{quantize_bundle, PerUnitScale};
use crate::precompute::{build_bundle, MatrixBundle};
use crate::report::Waveforms;
use crate::solvers::{build_engine, Engine, EngineKind, StepInput, StepOutput};

/// Phase slack (cycles) so that half-period boundaries landing exactly on a
/// step are not lost to rounding.
const PHASE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ramp {
    Hold,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub fs_start: f64,
    pub fs_end: f64,
    pub ramp: Ramp,
}

impl Segment {
    pub fn hold(t_start: f64, t_end: f64, fs: f64) -> Self {
        Self { t_start, t_end, fs_start: fs, fs_end: fs, ramp: Ramp::Hold }
    }

    pub fn linear(t_start: f64, t_end: f64, fs_start: f64, fs_end: f64) -> Self {
        Self { t_start, t_end, fs_start, fs_end, ramp: Ramp::Linear }
    }

    fn frequency(&self, t: f64) -> f64 {
        match self.ramp {
            Ramp::Hold => self.fs_start,
            Ramp::Linear => {
                let a = (t - self.t_start) / (self.t_end - self.t_start);
                self.fs_start + a * (self.fs_end - self.fs_start)
            }
        }
    }

    /// Cycles elapsed between the segment start and `t`.
    fn phase(&self, t: f64) -> f64 {
        (t - self.t_start) * 0.5 * (self.fs_start + self.frequency(t))
    }
}

/// Fixed 50 % duty square wave with a piecewise frequency law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingProfile {
    pub segments: Vec<Segment>,
}

impl GatingProfile {
    pub fn constant(fs: f64, duration: f64) -> Self {
        Self { segments: vec![Segment::hold(0.0, duration, fs)] }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        let err = |m: String| Err(Error::Scenario(m));
        let Some(first) = self.segments.first() else {
            return err("gating profile has no segments".into());
        };
        if first.t_start != 0.0 {
            return err(format!("gating profile must start at t = 0, not {}", first.t_start));
        }
        let fmax = 0.5 / dt;
        for (i, s) in self.segments.iter().enumerate() {
            if s.t_end.partial_cmp(&s.t_start) != Some(std::cmp::Ordering::Greater) {
                return err(format!("segment {i} is empty or reversed"));
            }
            for f in [s.fs_start, s.fs_end] {
                if !(f > 0.0 && f <= fmax) {
                    return err(format!("segment {i}: fs = {f} Hz outside (0, {fmax}]"));
                }
            }
            if s.ramp == Ramp::Hold && s.fs_end != s.fs_start {
                return err(format!("segment {i} holds but has different start and end frequencies"));
            }
            if i > 0 && self.segments[i - 1].t_end != s.t_start {
                return err(format!("segment {i} does not start where segment {} ends", i - 1));
            }
        }
        Ok(())
    }

    pub fn span(&self) -> (f64, f64) {
        (self.segments.first().map_or(0.0, |s| s.t_start), self.segments.last().map_or(0.0, |s| s.t_end))
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = self.span();
        if !(t >= t0 && t <= t1) {
            return Err(Error::Scenario(format!("t = {t} outside gating profile [{t0}, {t1}]")));
        }
        let mut phase = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t < s.t_end || i + 1 == self.segments.len() {
                return Ok((i, phase));
            }
            phase += s.phase(s.t_end);
        }
        unreachable!()
    }

    pub fn frequency(&self, t: f64) -> Result<f64> {
        let (i, _) = self.locate(t)?;
        Ok(self.segments[i].frequency(t))
    }

    /// Accumulated switching cycles since the profile start.
    pub fn phase(&self, t: f64) -> Result<f64> {
        let (i, before) = self.locate(t)?;
        Ok(before + self.segments[i].phase(t))
    }
}

/// Gate bit at `t`: high for the first half of every switching cycle.
pub fn gate(t: f64, profile: &GatingProfile) -> Result<bool> {
    Ok((profile.phase(t)? + PHASE_EPS).fract() < 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub t_on: f64,
    pub t_off: f64,
    /// Load resistance while the fault is active (Ω).
    pub r_fault: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: GatingProfile,
    /// Constant input voltage (V).
    pub u: f64,
    #[serde(default)]
    pub faults: Vec<Fault>,
    pub duration: f64,
    #[serde(default = "one")]
    pub decimation: usize,
}

fn one() -> usize {
    1
}

impl Scenario {
    pub fn constant(fs: f64, u: f64, duration: f64) -> Self {
        Self { profile: GatingProfile::constant(fs, duration), u, faults: Vec::new(), duration, decimation: 1 }
    }

    pub fn validate(&self, p: &LlcParameters) -> Result<()> {
        p.validate()?;
        self.profile.validate(p.dt)?;
        let err = |m: String| Err(Error::Scenario(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return err(format!("duration must be positive, got {}", self.duration));
        }
        if self.profile.span().1 < self.duration {
            return err("gating profile ends before the scenario".into());
        }
        if !self.u.is_finite() {
            return err("input voltage must be finite".into());
        }
        if self.decimation == 0 {
            return err("decimation must be at least 1".into());
        }
        let mut windows: Vec<_> = self.faults.iter().collect();
        windows.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
        for (i, f) in windows.iter().enumerate() {
            if !(f.r_fault > 0.0 && f.r_fault.is_finite()) {
                return err(format!("fault resistance must be positive, got {}", f.r_fault));
            }
            if !(0.0 <= f.t_on && f.t_on < f.t_off && f.t_off <= self.duration) {
                return err(format!("fault window [{}, {}] outside [0, {}]", f.t_on, f.t_off, self.duration));
            }
            if i > 0 && windows[i - 1].t_off > f.t_on {
                return err("fault windows overlap".into());
            }
        }
        Ok(())
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.duration / dt).round() as usize
    }

    /// Nominal parameters followed by one variant per fault.
    pub fn variants(&self, p: &LlcParameters) -> Vec<LlcParameters> {
        std::iter::once(*p).chain(self.faults.iter().map(|f| p.with_load(f.r_fault))).collect()
    }

    /// Index into [`Scenario::variants`] active at `t`.
    pub fn network_at(&self, t: f64) -> usize {
        self.faults.iter().position(|f| t >= f.t_on && t < f.t_off).map_or(0, |i| i + 1)
    }
}

/// Set #2 at 400 V: 312.5 kHz, a 30 ms load short, then a linear sweep to
/// 500 kHz, 0.6 s in total.
pub fn test_sequence() -> Scenario {
    Scenario {
        profile: GatingProfile {
            segments: vec![
                Segment::hold(0.0, 0.1, 312.5e3),
                Segment::hold(0.1, 0.13, 312.5e3),
                Segment::hold(0.13, 0.25, 312.5e3),
                Segment::linear(0.25, 0.48, 312.5e3, 500e3),
                Segment::hold(0.48, 0.6, 500e3),
            ],
        },
        u: 400.0,
        faults: vec![Fault { t_on: 0.1, t_off: 0.13, r_fault: 1e-3 }],
        duration: 0.6,
        decimation: 1,
    }
}

/// Sub-sequence windows of the test sequence plus the whole run.
pub fn test_sequence_windows() -> Vec<(String, f64, f64)> {
    [(0.0, 0.1), (0.1, 0.13), (0.13, 0.25), (0.25, 0.48), (0.48, 0.6), (0.0, 0.6)]
        .into_iter()
        .map(|(a, b)| (format!("{a:.2}s-{b:.2}s"), a, b))
        .collect()
}

/// Parameters and bundle with the load replaced by `r_fault`.
pub fn apply_fault(p: &LlcParameters, r_fault: f64) -> Result<(LlcParameters, MatrixBundle)> {
    if !(r_fault > 0.0 && r_fault.is_finite()) {
        return Err(Error::InvalidParameters(format!("fault resistance must be positive, got {r_fault}")));
    }
    let faulted = p.with_load(r_fault);
    let bundle = build_bundle(&faulted)?;
    Ok((faulted, bundle))
}

/// One bundle per network variant. Quantized mirrors share the nominal
/// per-unit bases.
pub fn prepare_bundles(p: &LlcParameters, scenario: &Scenario, quantized: bool) -> Result<Vec<MatrixBundle>> {
    let scale = PerUnitScale::for_parameters(p);
    scenario
        .variants(p)
        .iter()
        .map(|v| {
            let b = build_bundle(v)?;
            if quantized {
                quantize_bundle(&b, &scale)
            } else {
                Ok(b)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub k: usize,
    pub t: f64,
    pub fs: f64,
    pub input: StepInput,
}

/// Runs `engines` in lockstep over `scenario` and hands `on_step` the
/// outputs describing each step, already aligned for engine latency.
/// Engines with latency are flushed with the final input.
pub fn drive(
    scenario: &Scenario,
    p: &LlcParameters,
    engines: &mut [Box<dyn Engine>],
    mut on_step: impl FnMut(&StepContext, &[StepOutput]) -> Result<()>,
) -> Result<()> {
    scenario.validate(p)?;
    let n = scenario.steps(p.dt);
    if n == 0 || engines.is_empty() {
        return Ok(());
    }
    let lat: Vec<usize> = engines.iter().map(|e| e.latency()).collect();
    let lmax = lat.iter().copied().max().unwrap_or(0);
    let mut queues: Vec<VecDeque<StepOutput>> = vec![VecDeque::with_capacity(lmax + 1); engines.len()];
    let mut pending: VecDeque<StepContext> = VecDeque::with_capacity(lmax + 1);
    let mut last = None;
    let mut row = Vec::with_capacity(engines.len());

    for cycle in 0..n + lmax {
        let ctx = if cycle < n {
            let t = cycle as f64 * p.dt;
            let ctx = StepContext {
                k: cycle,
                t,
                fs: scenario.profile.frequency(t)?,
                input: StepInput { u: scenario.u, gate: gate(t, &scenario.profile)?, network: scenario.network_at(t) },
            };
            pending.push_back(ctx);
            last = Some(ctx);
            ctx
        } else {
            last.expect("n > 0")
        };
        for (e, engine) in engines.iter_mut().enumerate() {
            if cycle < n + lat[e] {
                let out = engine.step(ctx.input)?;
                if cycle >= lat[e] {
                    queues[e].push_back(out);
                }
            }
        }
        while queues.iter().all(|q| !q.is_empty()) {
            row.clear();
            row.extend(queues.iter_mut().map(|q| q.pop_front().expect("non-empty")));
            let ctx = pending.pop_front().expect("context for every aligned row");
            on_step(&ctx, &row)?;
        }
    }
    Ok(())
}

/// Runs one engine and records every `scenario.decimation`-th step.
pub fn run_simulation(
    kind: EngineKind,
    scenario: &Scenario,
    p: &LlcParameters,
    bundles: Option<&[MatrixBundle]>,
) -> Result<Waveforms> {
    let variants = scenario.variants(p);
    let owned;
    let bundles = match bundles {
        Some(b) => Some(b),
        None if kind.needs_bundle() => {
            owned = prepare_bundles(p, scenario, kind == EngineKind::Dmm1Fxp)?;
            Some(owned.as_slice())
        }
        None => None,
    };
    let mut engines = vec![build_engine(kind, &variants, bundles)?];
    let mut w = Waveforms::default();
    let dec = scenario.decimation;
    drive(scenario, p, &mut engines, |ctx, outs| {
        if ctx.k % dec == 0 {
            w.push(ctx.t, &outs[0], ctx.fs);
        }
        Ok(())
    })?;
    Ok(w)
}
