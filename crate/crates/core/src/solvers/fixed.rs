//! Single-stage engine on the fixed-point datapath.
//!
//! Signals live in per-unit form as vector-format integers. Each cycle runs
//! one 7×5 dot-product bank and one 4×6 classifier bank on the same input
//! register; the classifier uses only the sign of the exact accumulator.

use super::{check_network, Engine, EngineKind, EngineStats, StepInput, StepOutput};
use crate::dmm::{decode, pack_pattern, sigma_inv_for};
use crate::error::{Error, Result};
use crate::fxp::{dot_wide, quantize, quantize_classifier, shift_round, OverflowLog, QuantizedBundle};
use crate::precompute::MatrixBundle;
use crate::solvers::SimState;
use crate::stamping::SwitchCombination;

pub struct SingleStageFxp {
    bundles: Vec<MatrixBundle>,
    /// `[u_prev, hist_ac_prev(3), hist_dc_prev]` in vector format.
    reg: [i64; 5],
    sigma_prev: Option<SwitchCombination>,
    prev_network: usize,
    pending: Option<(SwitchCombination, f64, f64)>,
    log: OverflowLog,
    stats: EngineStats,
}

fn mirror(b: &MatrixBundle) -> &QuantizedBundle {
    b.quantized.as_ref().expect("checked at construction")
}

impl SingleStageFxp {
    pub fn new(bundles: Vec<MatrixBundle>) -> Result<Self> {
        let first = bundles.first().ok_or_else(|| Error::Bundle("no bundles".into()))?;
        let q0 = first.quantized.as_ref().ok_or_else(|| Error::Bundle("bundle has no quantized mirror".into()))?;
        for b in &bundles {
            b.validate()?;
            let q = b.quantized.as_ref().ok_or_else(|| Error::Bundle("bundle has no quantized mirror".into()))?;
            if q.scale != q0.scale
                || q.vector_format != q0.vector_format
                || q.matrix_format != q0.matrix_format
                || q.rounding != q0.rounding
            {
                return Err(Error::Bundle("network variants must share formats and per-unit bases".into()));
            }
        }
        Ok(Self {
            bundles,
            reg: [0; 5],
            sigma_prev: None,
            prev_network: 0,
            pending: None,
            log: OverflowLog::default(),
            stats: EngineStats::default(),
        })
    }

    pub fn overflows(&self) -> &OverflowLog {
        &self.log
    }

    /// Histories of the current step, dequantized, as a [`SimState`].
    pub fn sim_state(&self) -> Option<SimState> {
        let q = mirror(&self.bundles[0]);
        let lsb = q.vector_format.lsb();
        let v = |k: usize| self.reg[k] as f64 * lsb;
        Some(SimState {
            hist_ac: [v(1) * q.scale.hist[0], v(2) * q.scale.hist[1], v(3) * q.scale.hist[2]],
            hist_dc: v(4) * q.scale.hist[3],
            sigma_prev: self.sigma_prev?,
            u_prev: v(0) * q.scale.u,
            t: self.stats.steps as f64 * self.bundles[0].parameters.dt,
        })
    }
}

impl Engine for SingleStageFxp {
    fn kind(&self) -> EngineKind {
        EngineKind::Dmm1Fxp
    }

    fn latency(&self) -> usize {
        1
    }

    fn step(&mut self, input: StepInput) -> Result<StepOutput> {
        check_network(input.network, self.bundles.len())?;
        let sigma_prev = match self.sigma_prev {
            Some(s) => s,
            None => {
                self.prev_network = input.network;
                SimState::cold(input.gate).sigma_prev
            }
        };
        let now = &self.bundles[input.network];
        let before = &self.bundles[self.prev_network];
        let (qn, qb) = (mirror(now), mirror(before));
        let vf = qn.vector_format;
        let mode = qn.rounding;
        let step = self.stats.steps;

        let u = quantize(input.u / qn.scale.u, vf, mode, &mut self.log).raw;
        let transitional;
        let m = if input.network == self.prev_network {
            &qn.classifiers[crate::precompute::classifier_index(input.gate, sigma_prev)].raw
        } else {
            let folded = now.transitional_classifier(before, input.gate, sigma_prev);
            transitional = quantize_classifier(&folded, &qn.scale, qn.matrix_format, mode)?;
            &transitional.raw
        };
        let x6 = [self.reg[0], self.reg[1], self.reg[2], self.reg[3], self.reg[4], u];
        let pattern = pack_pattern(m.map(|r| u8::from(dot_wide(&r, &x6) >= 0)));
        let mf = now.mapping();
        let rec = decode(pattern).ok_or(Error::Decode { pattern, m1: mf.m1, m2: mf.m2 }).map_err(|e| {
            super::step_error(step as usize, step as f64 * now.parameters.dt, format!("{:?}", self.reg), e)
        })?;
        let sigma = SwitchCombination::new(sigma_inv_for(input.gate), rec)?;

        let h = &qb.hblocks[sigma_prev.index()];
        let shift = qb.matrix_format.frac_bits;
        let mut out = [0i64; 7];
        for (i, row) in h.iter().enumerate() {
            let raw = shift_round(dot_wide(row, &self.reg), shift, mode);
            out[i] = if vf.fits(raw) {
                raw as i64
            } else {
                self.log.record(|| format!("row {i} saturated at step {step}"));
                if raw > 0 { vf.max_raw() } else { vf.min_raw() }
            };
        }
        let lsb = vf.lsb();
        let y = [0, 1, 2].map(|k| out[4 + k] as f64 * lsb * qb.scale.y[k]);

        self.reg = [u, out[0], out[1], out[2], out[3]];
        self.sigma_prev = Some(sigma);
        self.prev_network = input.network;
        self.stats.steps += 1;
        self.stats.overflows = self.log.count;
        let hist = [0, 1, 2, 3].map(|k| out[k] as f64 * lsb * qn.scale.hist[k]);
        let ih1 = now.norton.ih1(input.gate, input.u, &[hist[0], hist[1], hist[2]]);
        let ih2 = now.norton.ih2(hist[3]);
        let (reported, p1, p2) = self.pending.replace((sigma, ih1, ih2)).unwrap_or((sigma, ih1, ih2));
        Ok(StepOutput { y, sigma: reported, ih1: p1, ih2: p2 })
    }

    fn stats(&self) -> EngineStats {
        self.stats
    }

    fn state_dump(&self) -> String {
        format!("reg {:?} sigma_prev {:?} network {}", self.reg, self.sigma_prev, self.prev_network)
    }
}
