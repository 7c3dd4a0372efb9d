//! Explicit forward-Euler baseline with a two-mode rectifier.
//!
//! The rectifier is positive when `n·(ir − im) ≥ 0` and negative otherwise;
//! blocked and shorted modes do not exist in this model.

use serde::{Deserialize, Serialize};

use super::{check_network, Engine, EngineKind, EngineStats, StepInput, StepOutput};
use crate::circuit::LlcParameters;
use crate::dmm::sigma_inv_for;
use crate::error::Result;
use crate::stamping::{SwitchCombination, REC_NEGATIVE, REC_POSITIVE};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeState {
    pub ir: f64,
    pub im: f64,
    pub v_cr: f64,
    pub vo: f64,
}

impl FeState {
    pub fn rectifier_current(&self, n: f64) -> f64 {
        n * (self.ir - self.im)
    }
}

/// Advances every state variable from its previous-step derivative.
/// Returns the next state and its rectifier input current.
pub fn step_fe(s: &FeState, u: f64, gate: bool, p: &LlcParameters) -> (FeState, f64) {
    let i_rec = s.rectifier_current(p.n);
    let v_p = if i_rec >= 0.0 { p.n * s.vo } else { -p.n * s.vo };
    let v_ab = if gate { u } else { -u };
    let next = FeState {
        ir: s.ir + p.dt / p.lr * (v_ab - s.v_cr - v_p),
        im: s.im + p.dt / p.lm * v_p,
        v_cr: s.v_cr + p.dt / p.cr * s.ir,
        vo: s.vo + p.dt / p.co * (i_rec.abs() - s.vo / p.rl),
    };
    let i_next = next.rectifier_current(p.n);
    (next, i_next)
}

pub struct ForwardEuler {
    variants: Vec<LlcParameters>,
    state: FeState,
    stats: EngineStats,
}

impl ForwardEuler {
    pub fn new(variants: &[LlcParameters]) -> Result<Self> {
        for p in variants {
            p.validate()?;
        }
        Ok(Self { variants: variants.to_vec(), state: FeState::default(), stats: EngineStats::default() })
    }

    pub fn state(&self) -> &FeState {
        &self.state
    }
}

impl Engine for ForwardEuler {
    fn kind(&self) -> EngineKind {
        EngineKind::Fe
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput> {
        check_network(input.network, self.variants.len())?;
        let (next, i_rec) = step_fe(&self.state, input.u, input.gate, &self.variants[input.network]);
        self.state = next;
        self.stats.steps += 1;
        let rec = if i_rec >= 0.0 { REC_POSITIVE } else { REC_NEGATIVE };
        Ok(StepOutput {
            y: [next.vo, next.ir, next.im],
            sigma: SwitchCombination::new(sigma_inv_for(input.gate), rec)?,
            ih1: i_rec,
            ih2: 0.0,
        })
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn state_dump(&self) -> String {
        format!("{:?}", self.state)
    }
}
