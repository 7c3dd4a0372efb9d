//! Backward Euler with switch-state iteration on the full MANA system.

use nalgebra::{DMatrix, DVector};

use super::{check_network, step_error, Engine, EngineKind, EngineStats, SimState, StepInput, StepOutput};
use crate::circuit::LlcParameters;
use crate::dmm::{compose_sigma, sigma_inv_for};
use crate::error::{Error, Result};
use crate::linalg::Factorized;
use crate::precompute::{build_norton_rows, NortonRows};
use crate::stamping::{diode_on, LlcNetwork, SwitchCombination, FEASIBLE_REC};

/// Hard limit on switch-state iterations per step.
pub const ITERATION_CAP: usize = 64;

struct Variant {
    net: LlcNetwork,
    b: DMatrix<f64>,
    norton: NortonRows,
    lu: Vec<Option<Factorized>>,
}

impl Variant {
    fn new(p: &LlcParameters) -> Result<Self> {
        let net = LlcNetwork::new(p)?;
        let b = net.mana_code(0).b;
        let norton = build_norton_rows(&net)?;
        Ok(Self { net, b, norton, lu: vec![None; 256] })
    }

    fn factor(&mut self, code: u8) -> Result<&Factorized> {
        let slot = &mut self.lu[usize::from(code)];
        if slot.is_none() {
            *slot = Some(self.net.mana_code(code).factor()?);
        }
        Ok(slot.as_ref().expect("just filled"))
    }
}

fn rec_from_voltages(vd: &[f64; 4]) -> u8 {
    vd.iter().enumerate().fold(0, |acc, (k, &v)| if v > 0.0 { acc | (0b1000 >> k) } else { acc })
}

/// Summed magnitude of the diode voltages that contradict `rec`.
fn inconsistency(rec: u8, vd: &[f64; 4]) -> f64 {
    (0..4).map(|k| if diode_on(rec, k + 1) == (vd[k] > 0.0) { 0.0 } else { vd[k].abs() }).sum()
}

pub struct IterativeBe {
    variants: Vec<Variant>,
    state: Option<SimState>,
    stats: EngineStats,
    rhs: DVector<f64>,
    x: DVector<f64>,
}

impl IterativeBe {
    pub fn new(variants: &[LlcParameters]) -> Result<Self> {
        let variants = variants.iter().map(Variant::new).collect::<Result<Vec<_>>>()?;
        let dim = variants[0].b.nrows();
        Ok(Self {
            variants,
            state: None,
            stats: EngineStats::default(),
            rhs: DVector::zeros(dim),
            x: DVector::zeros(dim),
        })
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    fn solve(&mut self, network: usize, code: u8, w: &[f64; 5]) -> Result<[f64; 4]> {
        let v = &mut self.variants[network];
        self.rhs.gemv(1.0, &v.b, &DVector::from_row_slice(w), 0.0);
        self.x.copy_from(&self.rhs);
        v.factor(code)?.solve_in_place(&mut self.x);
        Ok(v.net.diode_voltages(self.x.as_slice()))
    }

    /// One step from `state`; returns the output, the next state and the
    /// number of linear solves.
    pub fn step_state(&mut self, state: &SimState, input: StepInput) -> Result<(StepOutput, SimState, usize)> {
        check_network(input.network, self.variants.len())?;
        let inv = sigma_inv_for(input.gate);
        let w = state.inputs(input.u);
        let mut rec = state.sigma_prev.sigma_rec();
        let mut tried = Vec::with_capacity(4);
        let mut solves = 0;
        loop {
            if solves >= ITERATION_CAP {
                return Err(Error::NoConvergence { iterations: solves, dump: format!("{state:?} tried {tried:?}") });
            }
            let vd = self.solve(input.network, compose_sigma(inv, rec), &w)?;
            solves += 1;
            let want = rec_from_voltages(&vd);
            if want == rec {
                break;
            }
            tried.push(rec);
            if tried.contains(&want) {
                let mut best = (f64::INFINITY, FEASIBLE_REC[0]);
                for cand in FEASIBLE_REC {
                    let vd = self.solve(input.network, compose_sigma(inv, cand), &w)?;
                    solves += 1;
                    let r = inconsistency(cand, &vd);
                    if r < best.0 {
                        best = (r, cand);
                    }
                }
                log::warn!(
                    "switch-state cycle at t = {:e} s through {tried:?}; settled on {} (residual {:e})",
                    state.t, best.1, best.0
                );
                self.stats.cycle_guard_events += 1;
                rec = best.1;
                self.solve(input.network, compose_sigma(inv, rec), &w)?;
                break;
            }
            rec = want;
        }
        let sigma = SwitchCombination::new(inv, rec)?;
        let v = &self.variants[input.network];
        let (hist, y) = v.net.readout(self.x.as_slice(), &w);
        let ih1 = v.norton.ih1(input.gate, input.u, &state.hist_ac);
        let ih2 = v.norton.ih2(state.hist_dc);
        let dt = v.net.params().dt;
        let next = SimState {
            hist_ac: [hist[0], hist[1], hist[2]],
            hist_dc: hist[3],
            sigma_prev: sigma,
            u_prev: input.u,
            t: state.t + dt,
        };
        Ok((StepOutput { y, sigma, ih1, ih2 }, next, solves))
    }
}

impl Engine for IterativeBe {
    fn kind(&self) -> EngineKind {
        EngineKind::IterBe
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput> {
        let state = self.state.unwrap_or_else(|| SimState::cold(input.gate));
        match self.step_state(&state, input) {
            Ok((out, next, solves)) => {
                self.stats.steps += 1;
                self.stats.max_iterations = self.stats.max_iterations.max(solves);
                self.state = Some(next);
                Ok(out)
            }
            Err(e) => Err(step_error(self.stats.steps as usize, state.t, format!("{state:?}"), e)),
        }
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn state_dump(&self) -> String {
        format!("{:?}", self.state)
    }
}
