//! Time-stepping engines over a shared state.
//!
//! Every engine is driven one step at a time with the source voltage, the
//! gate bit and the index of the active network variant (nominal circuit or
//! a load fault). Engines with a nonzero [`Engine::latency`] return the
//! output of an earlier step.

mod fixed;
mod forward_euler;
mod iterative;
mod mapped;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::LlcParameters;
use crate::error::{Error, Result};
use crate::precompute::MatrixBundle;
use crate::stamping::{SwitchCombination, REC_BLOCKED};

pub use fixed::SingleStageFxp;
pub use forward_euler::{step_fe, FeState, ForwardEuler};
pub use iterative::{IterativeBe, ITERATION_CAP};
pub use mapped::{step_dmm_single_stage, step_dmm_two_stage, SingleStage, SingleStageCycle, TwoStage};

/// Companion histories and the previous step's switch state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// `[hist_Cr, hist_Lr, hist_Lm]` (A).
    pub hist_ac: [f64; 3],
    /// `hist_Cf` (A).
    pub hist_dc: f64,
    pub sigma_prev: SwitchCombination,
    pub u_prev: f64,
    pub t: f64,
}

impl SimState {
    /// All histories zero, blocked rectifier, no previous input.
    pub fn cold(gate: bool) -> Self {
        let inv = crate::dmm::sigma_inv_for(gate);
        Self {
            hist_ac: [0.0; 3],
            hist_dc: 0.0,
            sigma_prev: SwitchCombination::new(inv, REC_BLOCKED).expect("feasible"),
            u_prev: 0.0,
            t: 0.0,
        }
    }

    pub fn inputs(&self, u: f64) -> [f64; 5] {
        [u, self.hist_ac[0], self.hist_ac[1], self.hist_ac[2], self.hist_dc]
    }

    pub fn is_finite(&self) -> bool {
        self.hist_ac.iter().all(|v| v.is_finite()) && self.hist_dc.is_finite() && self.u_prev.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    /// `[vo, ir, im]`.
    pub y: [f64; 3],
    pub sigma: SwitchCombination,
    pub ih1: f64,
    pub ih2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub u: f64,
    pub gate: bool,
    /// Index into the engine's network variants.
    pub network: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EngineStats {
    pub steps: u64,
    pub max_iterations: usize,
    pub cycle_guard_events: u64,
    pub overflows: u64,
}

pub trait Engine: Send {
    fn kind(&self) -> EngineKind;

    /// Steps between an input and the output describing it.
    fn latency(&self) -> usize {
        0
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput>;

    fn stats(&self) -> EngineStats;

    /// Human-readable snapshot for error reports.
    fn state_dump(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    IterBe,
    Fe,
    Dmm2,
    Dmm1,
    Dmm1Fxp,
}

impl EngineKind {
    pub const ALL: [EngineKind; 5] =
        [EngineKind::IterBe, EngineKind::Fe, EngineKind::Dmm2, EngineKind::Dmm1, EngineKind::Dmm1Fxp];

    pub fn needs_bundle(self) -> bool {
        matches!(self, EngineKind::Dmm2 | EngineKind::Dmm1 | EngineKind::Dmm1Fxp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::IterBe => "iter-be",
            EngineKind::Fe => "fe",
            EngineKind::Dmm2 => "dmm2",
            EngineKind::Dmm1 => "dmm1",
            EngineKind::Dmm1Fxp => "dmm1-fxp",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || (norm == "iterbe" && *k == EngineKind::IterBe))
            .ok_or_else(|| Error::InvalidParameters(format!("unknown engine '{s}'")))
    }
}

/// Builds an engine over the given network variants. DMM engines need one
/// bundle per variant; the fixed-point engine needs quantized bundles.
pub fn build_engine(
    kind: EngineKind,
    variants: &[LlcParameters],
    bundles: Option<&[MatrixBundle]>,
) -> Result<Box<dyn Engine>> {
    if variants.is_empty() {
        return Err(Error::InvalidParameters("no network variants".into()));
    }
    let need = || -> Result<Vec<MatrixBundle>> {
        let b = bundles.ok_or_else(|| Error::Bundle(format!("engine {kind} needs a matrix bundle")))?;
        if b.len() != variants.len() {
            return Err(Error::Bundle(format!("{} bundles for {} network variants", b.len(), variants.len())));
        }
        for (bundle, p) in b.iter().zip(variants) {
            if bundle.parameters_hash != p.digest() {
                return Err(Error::Bundle("bundle does not match its network variant".into()));
            }
        }
        Ok(b.to_vec())
    };
    Ok(match kind {
        EngineKind::IterBe => Box::new(IterativeBe::new(variants)?),
        EngineKind::Fe => Box::new(ForwardEuler::new(variants)?),
        EngineKind::Dmm2 => Box::new(TwoStage::new(need()?)?),
        EngineKind::Dmm1 => Box::new(SingleStage::new(need()?)?),
        EngineKind::Dmm1Fxp => Box::new(SingleStageFxp::new(need()?)?),
    })
}

/// Wraps a step failure with its index and a state snapshot.
pub(crate) fn step_error(step: usize, t: f64, dump: String, source: Error) -> Error {
    Error::Step { step, t, state: dump, source: Box::new(source) }
}

pub(crate) fn check_network(index: usize, count: usize) -> Result<()> {
    if index < count {
        Ok(())
    } else {
        Err(Error::Scenario(format!("network variant {index} does not exist ({count} available)")))
    }
}
