//! LLC circuit parameterization and first-harmonic tank analysis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default switch and diode on-resistance (Ω).
pub const DEFAULT_RON: f64 = 1e-3;
/// Default switch and diode off-resistance (Ω).
pub const DEFAULT_ROFF: f64 = 1e6;
/// Default simulation time-step (s).
pub const DEFAULT_DT: f64 = 25e-9;

/// Physical parameters of the full-bridge LLC converter.
///
/// The transformer ratio is primary:secondary = `n`:1. Switches and diodes
/// share the same two-valued resistive model (`ron`/`roff`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlcParameters {
    /// Resonant inductance (H).
    pub lr: f64,
    /// Magnetizing inductance (H).
    pub lm: f64,
    /// Resonant capacitance (F).
    pub cr: f64,
    /// Output filter capacitance (F).
    pub co: f64,
    /// Turns ratio.
    pub n: f64,
    /// Input dc voltage (V).
    pub vin: f64,
    /// Load resistance (Ω).
    pub rl: f64,
    /// On-resistance (Ω).
    pub ron: f64,
    /// Off-resistance (Ω).
    pub roff: f64,
    /// Time-step (s).
    pub dt: f64,
}

impl LlcParameters {
    /// 160 kHz, 600 V → 400 V, 5.3 kW converter.
    pub fn set1() -> Self {
        Self {
            lr: 25e-6,
            lm: 150e-6,
            cr: 40e-9,
            co: 1000e-6,
            n: 1.5,
            vin: 600.0,
            rl: 30.0,
            ron: DEFAULT_RON,
            roff: DEFAULT_ROFF,
            dt: DEFAULT_DT,
        }
    }

    /// 500 kHz, 400 V → 12 V, 1 kW converter.
    pub fn set2() -> Self {
        Self {
            lr: 4.5e-6,
            lm: 21.6e-6,
            cr: 22e-9,
            co: 3000e-6,
            n: 33.0,
            vin: 400.0,
            rl: 0.144,
            ron: DEFAULT_RON,
            roff: DEFAULT_ROFF,
            dt: DEFAULT_DT,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_load(mut self, rl: f64) -> Self {
        self.rl = rl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lm", self.lm),
            ("cr", self.cr),
            ("co", self.co),
            ("n", self.n),
            ("rl", self.rl),
            ("dt", self.dt),
            ("ron", self.ron),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if !self.vin.is_finite() {
            return Err(Error::InvalidParameters(format!("vin must be finite, got {}", self.vin)));
        }
        if !self.roff.is_finite() || self.roff <= self.ron {
            return Err(Error::InvalidParameters(format!(
                "roff must be finite and larger than ron ({} vs {})",
                self.roff, self.ron
            )));
        }
        Ok(())
    }

    pub fn g_on(&self) -> f64 {
        1.0 / self.ron
    }

    pub fn g_off(&self) -> f64 {
        1.0 / self.roff
    }

    /// SHA-256 over the IEEE-754 bit patterns of every field, in declaration order.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in [
            self.lr, self.lm, self.cr, self.co, self.n, self.vin, self.rl, self.ron, self.roff,
            self.dt,
        ] {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Named built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Set1,
    Set2,
}

impl Preset {
    pub fn parameters(self) -> LlcParameters {
        match self {
            Preset::Set1 => LlcParameters::set1(),
            Preset::Set2 => LlcParameters::set2(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "set1" | "1" => Ok(Preset::Set1),
            "set2" | "2" => Ok(Preset::Set2),
            other => Err(Error::InvalidParameters(format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Set1 => f.write_str("set1"),
            Preset::Set2 => f.write_str("set2"),
        }
    }
}

/// Resonant frequencies and the normalized quantities of the gain curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisRatios {
    pub fr1: f64,
    pub fr2: f64,
    pub q: f64,
    pub m: f64,
    pub rac: f64,
    /// `fs / fr1`, when a switching frequency was supplied.
    pub f: Option<f64>,
}

/// Series resonance (Lr, Cr) and the lower resonance including Lm.
pub fn resonant_frequencies(p: &LlcParameters) -> (f64, f64) {
    let fr1 = 1.0 / (2.0 * PI * (p.lr * p.cr).sqrt());
    let fr2 = 1.0 / (2.0 * PI * ((p.lr + p.lm) * p.cr).sqrt());
    (fr1, fr2)
}

pub fn derived_ratios(p: &LlcParameters) -> AnalysisRatios {
    let (fr1, fr2) = resonant_frequencies(p);
    let rac = 8.0 * p.n * p.n / (PI * PI) * p.rl;
    AnalysisRatios {
        fr1,
        fr2,
        q: (p.lr / p.cr).sqrt() / rac,
        m: (p.lr + p.lm) / p.lr,
        rac,
        f: None,
    }
}

pub fn ratios_at(p: &LlcParameters, fs: f64) -> AnalysisRatios {
    let mut r = derived_ratios(p);
    r.f = Some(fs / r.fr1);
    r
}

/// First-harmonic voltage gain of the LLC tank at normalized frequency `f`.
pub fn tank_gain(f: f64, m: f64, q: f64) -> Result<f64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::Domain(format!("normalized frequency must be positive, got {f}")));
    }
    if !(m.is_finite() && m > 1.0) {
        return Err(Error::Domain(format!("inductance ratio must exceed 1, got {m}")));
    }
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Domain(format!("quality factor must be non-negative, got {q}")));
    }
    let f2 = f * f;
    let a = m * f2 - 1.0;
    let b = (m - 1.0) * f * (f2 - 1.0) * q;
    let den = (a * a + b * b).sqrt();
    if den == 0.0 {
        return Err(Error::Domain(format!("gain pole at F = {f} (m = {m}, Q = 0)")));
    }
    Ok((m - 1.0) * f2 / den)
}
