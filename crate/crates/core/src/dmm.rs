//! The direct mapping from Norton history currents to rectifier states.
//!
//! Feasibility of each of the sixteen diode combinations is decided by
//! Fourier–Motzkin elimination over exact rationals. The four feasible
//! cones are separated by half-lines of slope `±m1` (blocked boundary) and
//! `±m2` (shorted boundary), so classification reduces to four sign tests.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stamping::{
    diode_on, threshold_coefficients, REC_BLOCKED, REC_NEGATIVE, REC_POSITIVE, REC_SHORTED,
    SIGMA_INV_HIGH, SIGMA_INV_LOW,
};

/// `σ = 16·σ_inv + σ_rec`.
pub fn compose_sigma(sigma_inv: u8, sigma_rec: u8) -> u8 {
    debug_assert!(sigma_inv < 16 && sigma_rec < 16);
    16 * sigma_inv + sigma_rec
}

/// Inverter code for gate bit `c` (S1/S4 driven by `c`).
pub fn sigma_inv_of(c: u8) -> Result<u8> {
    match c {
        0 => Ok(SIGMA_INV_LOW),
        1 => Ok(SIGMA_INV_HIGH),
        other => Err(Error::Domain(format!("gate signal must be 0 or 1, got {other}"))),
    }
}

pub fn sigma_inv_for(gate: bool) -> u8 {
    if gate {
        SIGMA_INV_HIGH
    } else {
        SIGMA_INV_LOW
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub m1: f64,
    pub m2: f64,
}

fn check_conductances(g1: f64, g2: f64, gon: f64, goff: f64) -> Result<()> {
    let ok = |g: f64| g.is_finite() && g > 0.0;
    if !(ok(g1) && ok(g2) && ok(gon) && ok(goff)) {
        return Err(Error::Domain(format!(
            "conductances must be finite and positive (g1 = {g1}, g2 = {g2}, gon = {gon}, goff = {goff})"
        )));
    }
    if goff >= gon {
        return Err(Error::Domain(format!("degenerate diode model: goff = {goff} >= gon = {gon}")));
    }
    Ok(())
}

/// Blocked-boundary slope `m1` and shorted-boundary slope `m2`.
pub fn mapping_slopes(g1: f64, g2: f64, gon: f64, goff: f64) -> Result<Slopes> {
    check_conductances(g1, g2, gon, goff)?;
    Ok(Slopes { m1: (goff + g2) / (goff + g1), m2: (gon + g2) / (gon + g1) })
}

/// The same slopes before cancelling the common diode-conductance factor.
pub fn mapping_slopes_expanded(g1: f64, g2: f64, gon: f64, goff: f64) -> Slopes {
    let ratio = |g: f64| (g * g + g * g + g * g2 + g * g2) / (g * g + g * g + g * g1 + g * g1);
    Slopes { m1: ratio(goff), m2: ratio(gon) }
}

/// `g2 / g1`, the blocked slope in the limit of a perfect off-state.
pub fn blocked_slope_approximation(g1: f64, g2: f64) -> f64 {
    g2 / g1
}

/// Sign-pattern bit for a dot product: `sgn(0) = +1`.
#[inline]
pub fn sign_bit(v: f64) -> u8 {
    u8::from(v >= 0.0)
}

/// Packs `[p1, p2, p3, p4]` (true = non-negative) into bits 3..0.
#[inline]
pub fn pack_pattern(p: [u8; 4]) -> u8 {
    (p[0] << 3) | (p[1] << 2) | (p[2] << 1) | p[3]
}

const DECODE: [Option<u8>; 16] = build_decode();

const fn build_decode() -> [Option<u8>; 16] {
    let mut table = [None; 16];
    let mut pattern = 0;
    while pattern < 16 {
        let p1 = (pattern >> 3) & 1 == 1;
        let p2 = (pattern >> 2) & 1 == 1;
        let p3 = (pattern >> 1) & 1 == 1;
        let p4 = pattern & 1 == 1;
        let mut hits = 0;
        let mut rec = 0;
        if p1 && p2 {
            hits += 1;
            rec = REC_BLOCKED;
        }
        if !p2 && p3 {
            hits += 1;
            rec = REC_NEGATIVE;
        }
        if !p1 && p4 {
            hits += 1;
            rec = REC_POSITIVE;
        }
        if !p3 && !p4 {
            hits += 1;
            rec = REC_SHORTED;
        }
        if hits == 1 {
            table[pattern] = Some(rec);
        }
        pattern += 1;
    }
    table
}

/// Rectifier state for a sign pattern, or `None` when the pattern matches
/// no rule or more than one.
pub fn decode(pattern: u8) -> Option<u8> {
    DECODE[usize::from(pattern & 0xF)]
}

/// The four-region classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingFunction {
    pub m1: f64,
    pub m2: f64,
}

impl MappingFunction {
    pub fn new(slopes: Slopes) -> Result<Self> {
        if !(slopes.m1.is_finite() && slopes.m1 > 0.0 && slopes.m2.is_finite() && slopes.m2 > 0.0) {
            return Err(Error::Domain(format!("slopes must be positive: {slopes:?}")));
        }
        Ok(Self { m1: slopes.m1, m2: slopes.m2 })
    }

    pub fn from_conductances(g1: f64, g2: f64, gon: f64, goff: f64) -> Result<Self> {
        Self::new(mapping_slopes(g1, g2, gon, goff)?)
    }

    /// Rows of the sign matrix applied to `[ih1, ih2]`.
    pub fn rows(&self) -> [[f64; 2]; 4] {
        [[-self.m1, 1.0], [self.m1, 1.0], [-self.m2, 1.0], [self.m2, 1.0]]
    }

    pub fn pattern(&self, ih1: f64, ih2: f64) -> u8 {
        pack_pattern(self.rows().map(|[a, b]| sign_bit(a * ih1 + b * ih2)))
    }

    pub fn decode_pattern(&self, pattern: u8) -> Result<u8> {
        decode(pattern).ok_or(Error::Decode { pattern, m1: self.m1, m2: self.m2 })
    }

    pub fn classify(&self, ih1: f64, ih2: f64) -> Result<u8> {
        if !(ih1.is_finite() && ih2.is_finite()) {
            return Err(Error::Domain(format!("non-finite history currents ({ih1}, {ih2})")));
        }
        self.decode_pattern(self.pattern(ih1, ih2))
    }
}

/// Feasibility of one diode combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityEntry {
    pub sigma_rec: u8,
    pub feasible: bool,
    /// `[a, b]` rows with the state's cone = `{a·ih1 + b·ih2 > 0}` for every row.
    pub constraints: [[f64; 2]; 4],
    /// A point strictly inside the cone, when feasible.
    pub witness: Option<[f64; 2]>,
}

impl FeasibilityEntry {
    pub fn contains(&self, ih1: f64, ih2: f64) -> bool {
        self.constraints.iter().all(|[a, b]| a * ih1 + b * ih2 > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub entries: Vec<FeasibilityEntry>,
}

impl FeasibilityReport {
    pub fn feasible_set(&self) -> Vec<u8> {
        self.entries.iter().filter(|e| e.feasible).map(|e| e.sigma_rec).collect()
    }
}

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite conductance")
}

/// Decides whether the strict homogeneous system `a·x + b·y > 0` has a
/// solution by eliminating `x`, and returns an interior witness.
fn fourier_motzkin(rows: &[[BigRational; 2]]) -> Option<[BigRational; 2]> {
    let (mut pos, mut neg, mut y_rows) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if r[0].is_positive() {
            pos.push(r);
        } else if r[0].is_negative() {
            neg.push(r);
        } else {
            y_rows.push(r[1].clone());
        }
    }
    for p in &pos {
        for n in &neg {
            // (-a_n)·p + a_p·n eliminates x.
            y_rows.push(-n[0].clone() * p[1].clone() + p[0].clone() * n[1].clone());
        }
    }
    if y_rows.iter().any(Zero::is_zero) {
        return None;
    }
    let any_pos = y_rows.iter().any(Signed::is_positive);
    let any_neg = y_rows.iter().any(Signed::is_negative);
    let y = match (any_pos, any_neg) {
        (true, true) => return None,
        (false, true) => -BigRational::one(),
        _ => BigRational::one(),
    };

    let bound = |r: &[BigRational; 2]| -r[1].clone() * y.clone() / r[0].clone();
    let lower = pos.iter().map(|r| bound(r)).max();
    let upper = neg.iter().map(|r| bound(r)).min();
    let two = BigRational::from_integer(BigInt::from(2));
    let x = match (lower, upper) {
        (Some(l), Some(u)) => {
            if l >= u {
                return None;
            }
            (l + u) / two
        }
        (Some(l), None) => l + BigRational::one(),
        (None, Some(u)) => u - BigRational::one(),
        (None, None) => BigRational::zero(),
    };
    let ok = rows
        .iter()
        .all(|r| (r[0].clone() * x.clone() + r[1].clone() * y.clone()).is_positive());
    debug_assert!(ok, "Fourier-Motzkin witness violates a constraint");
    ok.then_some([x, y])
}

/// Runs Fourier–Motzkin over all sixteen diode combinations.
pub fn enumerate_feasible(g1: f64, g2: f64, gon: f64, goff: f64) -> Result<FeasibilityReport> {
    check_conductances(g1, g2, gon, goff)?;
    let (g1r, g2r, onr, offr) = (rational(g1), rational(g2), rational(gon), rational(goff));
    let entries = (0u8..16)
        .map(|rec| {
            let gd: [BigRational; 4] =
                std::array::from_fn(|k| if diode_on(rec, k + 1) { onr.clone() } else { offr.clone() });
            let coeffs = threshold_coefficients(&gd, &g1r, &g2r);
            let signed: Vec<[BigRational; 2]> = coeffs
                .into_iter()
                .enumerate()
                .map(|(k, [a, b])| if diode_on(rec, k + 1) { [a, b] } else { [-a, -b] })
                .collect();
            let witness = fourier_motzkin(&signed);
            let to_f = |r: &BigRational| num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN);
            FeasibilityEntry {
                sigma_rec: rec,
                feasible: witness.is_some(),
                constraints: std::array::from_fn(|k| [to_f(&signed[k][0]), to_f(&signed[k][1])]),
                witness: witness.map(|[x, y]| [to_f(&x), to_f(&y)]),
            }
        })
        .collect();
    Ok(FeasibilityReport { entries })
}
