//! Direct-mapped engines.
//!
//! Two-stage: Norton currents, classify, then one 7×5 product.
//!
//! Single-stage: the classifier works directly on the previous step's
//! inputs, so the 7×5 product of a cycle finishes the previous step. The
//! output therefore trails the input by one step.

use super::{check_network, step_error, Engine, EngineKind, EngineStats, SimState, StepInput, StepOutput};
use crate::dmm::{pack_pattern, sigma_inv_for, sign_bit, MappingFunction};
use crate::error::{Error, Result};
use crate::precompute::{dot, ClassifierMatrix, HBlocks, MatrixBundle};
use crate::stamping::SwitchCombination;

fn check_bundles(bundles: &[MatrixBundle]) -> Result<()> {
    if bundles.is_empty() {
        return Err(Error::Bundle("no bundles".into()));
    }
    let dt = bundles[0].parameters.dt;
    for b in bundles {
        b.validate()?;
        if b.parameters.dt != dt {
            return Err(Error::Bundle("network variants must share the time-step".into()));
        }
    }
    Ok(())
}

pub fn step_dmm_two_stage(state: &SimState, u: f64, gate: bool, bundle: &MatrixBundle) -> Result<(StepOutput, SimState)> {
    let ih1 = bundle.norton.ih1(gate, u, &state.hist_ac);
    let ih2 = bundle.norton.ih2(state.hist_dc);
    let rec = bundle.mapping().classify(ih1, ih2)?;
    let sigma = SwitchCombination::new(sigma_inv_for(gate), rec)?;
    let out = bundle.h(sigma).apply(&state.inputs(u));
    let next = SimState {
        hist_ac: [out[0], out[1], out[2]],
        hist_dc: out[3],
        sigma_prev: sigma,
        u_prev: u,
        t: state.t + bundle.parameters.dt,
    };
    Ok((StepOutput { y: [out[4], out[5], out[6]], sigma, ih1, ih2 }, next))
}

/// Result of one single-stage cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleStageCycle {
    /// Switch state of the current step.
    pub sigma: SwitchCombination,
    /// Outputs of the previous step.
    pub y_prev: [f64; 3],
    /// Histories of the current step, ready for the next cycle.
    pub next: SimState,
}

fn single_cycle(
    state: &SimState,
    u: f64,
    gate: bool,
    m: &ClassifierMatrix,
    h_prev: &HBlocks,
    mf: &MappingFunction,
    dt: f64,
) -> Result<SingleStageCycle> {
    let w = state.inputs(state.u_prev);
    let folded_in = [w[0], w[1], w[2], w[3], w[4], u];
    let rec = mf.decode_pattern(pack_pattern(m.map(|r| sign_bit(dot(&r, &folded_in)))))?;
    let sigma = SwitchCombination::new(sigma_inv_for(gate), rec)?;
    let out = h_prev.apply(&w);
    Ok(SingleStageCycle {
        sigma,
        y_prev: [out[4], out[5], out[6]],
        next: SimState {
            hist_ac: [out[0], out[1], out[2]],
            hist_dc: out[3],
            sigma_prev: sigma,
            u_prev: u,
            t: state.t + dt,
        },
    })
}

/// One single-stage cycle. `state` holds the previous step's histories,
/// input and switch state.
pub fn step_dmm_single_stage(state: &SimState, u: f64, gate: bool, bundle: &MatrixBundle) -> Result<SingleStageCycle> {
    single_cycle(
        state,
        u,
        gate,
        &bundle.classifier(gate, state.sigma_prev).matrix,
        bundle.h(state.sigma_prev),
        &bundle.mapping(),
        bundle.parameters.dt,
    )
}

pub struct TwoStage {
    bundles: Vec<MatrixBundle>,
    state: Option<SimState>,
    stats: EngineStats,
}

impl TwoStage {
    pub fn new(bundles: Vec<MatrixBundle>) -> Result<Self> {
        check_bundles(&bundles)?;
        Ok(Self { bundles, state: None, stats: EngineStats::default() })
    }
}

impl Engine for TwoStage {
    fn kind(&self) -> EngineKind {
        EngineKind::Dmm2
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput> {
        check_network(input.network, self.bundles.len())?;
        let state = self.state.unwrap_or_else(|| SimState::cold(input.gate));
        let (out, next) = step_dmm_two_stage(&state, input.u, input.gate, &self.bundles[input.network])
            .map_err(|e| step_error(self.stats.steps as usize, state.t, format!("{state:?}"), e))?;
        self.state = Some(next);
        self.stats.steps += 1;
        Ok(out)
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn state_dump(&self) -> String {
        format!("{:?}", self.state)
    }
}

pub struct SingleStage {
    bundles: Vec<MatrixBundle>,
    state: Option<SimState>,
    prev_network: usize,
    /// Switch state and diagnostics of the step whose outputs come next.
    pending: Option<(SwitchCombination, f64, f64)>,
    stats: EngineStats,
}

impl SingleStage {
    pub fn new(bundles: Vec<MatrixBundle>) -> Result<Self> {
        check_bundles(&bundles)?;
        Ok(Self { bundles, state: None, prev_network: 0, pending: None, stats: EngineStats::default() })
    }

    fn cycle(&self, state: &SimState, input: StepInput) -> Result<SingleStageCycle> {
        let now = &self.bundles[input.network];
        if input.network == self.prev_network {
            return step_dmm_single_stage(state, input.u, input.gate, now);
        }
        let before = &self.bundles[self.prev_network];
        let m = now.transitional_classifier(before, input.gate, state.sigma_prev);
        single_cycle(state, input.u, input.gate, &m, before.h(state.sigma_prev), &now.mapping(), now.parameters.dt)
    }
}

impl Engine for SingleStage {
    fn kind(&self) -> EngineKind {
        EngineKind::Dmm1
    }

    fn latency(&self) -> usize {
        1
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput> {
        check_network(input.network, self.bundles.len())?;
        let state = match self.state {
            Some(s) => s,
            None => {
                self.prev_network = input.network;
                SimState::cold(input.gate)
            }
        };
        let c = self
            .cycle(&state, input)
            .map_err(|e| step_error(self.stats.steps as usize, state.t, format!("{state:?}"), e))?;
        let norton = &self.bundles[input.network].norton;
        let ih1 = norton.ih1(input.gate, input.u, &c.next.hist_ac);
        let ih2 = norton.ih2(c.next.hist_dc);
        let (sigma, p1, p2) = self.pending.replace((c.sigma, ih1, ih2)).unwrap_or((c.sigma, ih1, ih2));
        self.state = Some(c.next);
        self.prev_network = input.network;
        self.stats.steps += 1;
        Ok(StepOutput { y: c.y_prev, sigma, ih1: p1, ih2: p2 })
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn state_dump(&self) -> String {
        format!("{:?} network {}", self.state, self.prev_network)
    }
}
