//! Fixed-point datapath emulation.
//!
//! Values are two's-complement integers with an implied binary point.
//! Products are accumulated exactly in `i128` and rounded once at the end.
//! Overflow saturates and is counted in an [`OverflowLog`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::LlcParameters;
use crate::error::{Error, Result};
use crate::precompute::{ClassifierMatrix, HMatrix, MatrixBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl FxpFormat {
    /// Signal vectors.
    pub const VECTOR: FxpFormat = FxpFormat { total_bits: 25, frac_bits: 23 };
    /// Matrix coefficients.
    pub const MATRIX: FxpFormat = FxpFormat { total_bits: 35, frac_bits: 29 };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let f = Self { total_bits, frac_bits };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.frac_bits && self.frac_bits < self.total_bits && self.total_bits <= 64) {
            return Err(Error::FixedPointRange(format!(
                "invalid format {self}: need 1 <= frac < total <= 64"
            )));
        }
        Ok(())
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.total_bits - 1)) - 1) as i64
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.total_bits - 1))) as i64
    }

    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    /// Exclusive bound on representable magnitudes, `2^(total - frac - 1)`.
    pub fn range(&self) -> f64 {
        ((self.total_bits - self.frac_bits - 1) as f64).exp2()
    }

    pub fn fits(&self, raw: i128) -> bool {
        raw >= i128::from(self.min_raw()) && raw <= i128::from(self.max_raw())
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.total_bits, self.frac_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    NearestEven,
    /// Toward negative infinity (drop the low bits).
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FxpValue {
    pub raw: i64,
    pub format: FxpFormat,
}

impl FxpValue {
    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Saturation events. Never silently wraps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OverflowLog {
    pub count: u64,
    /// First few events, for diagnostics.
    pub events: Vec<String>,
}

impl OverflowLog {
    const KEEP: usize = 16;

    pub fn record(&mut self, what: impl FnOnce() -> String) {
        self.count += 1;
        if self.events.len() < Self::KEEP {
            self.events.push(what());
        }
    }

    pub fn is_clean(&self) -> bool {
        self.count == 0
    }
}

fn saturate(raw: i128, f: FxpFormat, log: &mut OverflowLog, ctx: impl FnOnce() -> String) -> i64 {
    if f.fits(raw) {
        raw as i64
    } else {
        log.record(ctx);
        if raw > 0 {
            f.max_raw()
        } else {
            f.min_raw()
        }
    }
}

pub fn quantize(x: f64, f: FxpFormat, mode: Rounding, log: &mut OverflowLog) -> FxpValue {
    if x.is_nan() {
        log.record(|| format!("NaN quantized to {f}"));
        return FxpValue { raw: 0, format: f };
    }
    let scaled = x * (f.frac_bits as f64).exp2();
    let r = match mode {
        Rounding::NearestEven => scaled.round_ties_even(),
        Rounding::Truncate => scaled.floor(),
    };
    let raw = if r.abs() >= 2f64.powi(100) { r.signum() as i128 * (1i128 << 100) } else { r as i128 };
    FxpValue { raw: saturate(raw, f, log, || format!("{x} saturated in {f}")), format: f }
}

/// Quantizes without saturation: out-of-range values are an error.
pub fn try_quantize(x: f64, f: FxpFormat, mode: Rounding) -> Result<FxpValue> {
    let mut log = OverflowLog::default();
    let v = quantize(x, f, mode, &mut log);
    if !log.is_clean() {
        return Err(Error::FixedPointRange(format!("{x} does not fit {f}")));
    }
    Ok(v)
}

pub fn dequantize(v: FxpValue) -> f64 {
    v.raw as f64 * v.format.lsb()
}

/// Rescales an exact accumulator by `2^-shift` with the given rounding.
pub fn shift_round(acc: i128, shift: u32, mode: Rounding) -> i128 {
    if shift == 0 {
        return acc;
    }
    let floor = acc >> shift;
    match mode {
        Rounding::Truncate => floor,
        Rounding::NearestEven => {
            let rem = acc - (floor << shift);
            let half = 1i128 << (shift - 1);
            if rem > half || (rem == half && floor & 1 == 1) {
                floor + 1
            } else {
                floor
            }
        }
    }
}

/// Exact sum of products in index order; the binary point sits at
/// `row.frac + vec.frac`.
pub fn dot_wide(row: &[i64], vec: &[i64]) -> i128 {
    debug_assert_eq!(row.len(), vec.len());
    row.iter().zip(vec).fold(0i128, |acc, (&a, &b)| acc + i128::from(a) * i128::from(b))
}

pub fn fxp_dot_product(
    row: &[FxpValue],
    vec: &[FxpValue],
    out: FxpFormat,
    mode: Rounding,
    log: &mut OverflowLog,
) -> Result<FxpValue> {
    if row.len() != vec.len() {
        return Err(Error::FixedPointRange(format!("length mismatch {} vs {}", row.len(), vec.len())));
    }
    let Some(first) = row.first().zip(vec.first()) else {
        return Ok(FxpValue { raw: 0, format: out });
    };
    let (rf, vf) = (first.0.format, first.1.format);
    if row.iter().any(|v| v.format != rf) || vec.iter().any(|v| v.format != vf) {
        return Err(Error::FixedPointRange("mixed formats in one operand".into()));
    }
    let acc = dot_wide(&row.iter().map(|v| v.raw).collect::<Vec<_>>(), &vec.iter().map(|v| v.raw).collect::<Vec<_>>());
    let point = rf.frac_bits + vf.frac_bits;
    if point < out.frac_bits {
        return Err(Error::FixedPointRange(format!("output {out} is finer than the product")));
    }
    let raw = shift_round(acc, point - out.frac_bits, mode);
    Ok(FxpValue { raw: saturate(raw, out, log, || "dot product saturated".to_string()), format: out })
}

/// Base quantities dividing each signal before quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitScale {
    /// Input voltage base (V).
    pub u: f64,
    /// `[hist_Cr, hist_Lr, hist_Lm, hist_Cf]` bases (A).
    pub hist: [f64; 4],
    /// `[vo, ir, im]` bases.
    pub y: [f64; 3],
}

impl PerUnitScale {
    pub const IDENTITY: PerUnitScale = PerUnitScale { u: 1.0, hist: [1.0; 4], y: [1.0; 3] };

    /// Bases from the tank's characteristic impedance with ample headroom
    /// for start-up and load-fault transients.
    pub fn for_parameters(p: &LlcParameters) -> Self {
        let vin = p.vin.abs().max(1.0);
        let z0 = (p.lr / p.cr).sqrt();
        let i_base = 4.0 * vin / z0;
        let v_cr = 4.0 * vin;
        let v_out = 2.0 * vin / p.n;
        Self {
            u: vin,
            hist: [p.cr / p.dt * v_cr, i_base, i_base, p.co / p.dt * v_out],
            y: [v_out, i_base, i_base],
        }
    }

    pub fn input_bases(&self) -> [f64; 5] {
        [self.u, self.hist[0], self.hist[1], self.hist[2], self.hist[3]]
    }

    pub fn output_bases(&self) -> [f64; 7] {
        [self.hist[0], self.hist[1], self.hist[2], self.hist[3], self.y[0], self.y[1], self.y[2]]
    }

    pub fn classifier_bases(&self) -> [f64; 6] {
        [self.u, self.hist[0], self.hist[1], self.hist[2], self.hist[3], self.u]
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_bases().iter().chain(&self.y).all(|b| b.is_finite() && *b > 0.0) {
            Ok(())
        } else {
            Err(Error::FixedPointRange(format!("per-unit bases must be positive: {self:?}")))
        }
    }
}

/// Per-unit image of an H matrix.
pub fn scale_h(h: &HMatrix, s: &PerUnitScale) -> HMatrix {
    let (bi, bo) = (s.input_bases(), s.output_bases());
    std::array::from_fn(|i| std::array::from_fn(|j| h[i][j] * bi[j] / bo[i]))
}

/// Per-unit image of a classifier, each row normalized by a power of two so
/// its largest entry lies in `[range/4, range/2)`. Returns the exponents.
pub fn scale_classifier(m: &ClassifierMatrix, s: &PerUnitScale, f: FxpFormat) -> (ClassifierMatrix, [i32; 4]) {
    let b = s.classifier_bases();
    let mut shifts = [0; 4];
    let mut out = [[0.0; 6]; 4];
    for r in 0..4 {
        let row: [f64; 6] = std::array::from_fn(|j| m[r][j] * b[j]);
        let max = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let e = if max > 0.0 { (f.range() / 4.0).log2().floor() as i32 - max.log2().floor() as i32 } else { 0 };
        shifts[r] = e;
        out[r] = row.map(|v| v * (e as f64).exp2());
    }
    (out, shifts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedClassifier {
    pub raw: [[i64; 6]; 4],
    /// Row `r` of the per-unit matrix was multiplied by `2^shift[r]`.
    pub shift: [i32; 4],
}

/// The fixed-point mirror of a bundle's matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedBundle {
    pub vector_format: FxpFormat,
    pub matrix_format: FxpFormat,
    pub rounding: Rounding,
    pub scale: PerUnitScale,
    pub hblocks: Vec<[[i64; 5]; 7]>,
    pub classifiers: Vec<QuantizedClassifier>,
}

impl QuantizedBundle {
    pub fn validate(&self) -> Result<()> {
        self.vector_format.validate()?;
        self.matrix_format.validate()?;
        self.scale.validate()?;
        if self.hblocks.len() != 8 || self.classifiers.len() != 16 {
            return Err(Error::Bundle("incomplete quantized mirror".into()));
        }
        let f = self.matrix_format;
        let ok = self.hblocks.iter().flat_map(|h| h.iter().flatten())
            .chain(self.classifiers.iter().flat_map(|c| c.raw.iter().flatten()))
            .all(|&r| f.fits(i128::from(r)));
        if !ok {
            return Err(Error::Bundle(format!("quantized entry outside {f}")));
        }
        Ok(())
    }

    pub fn dequantize_h(&self, i: usize) -> HMatrix {
        let lsb = self.matrix_format.lsb();
        self.hblocks[i].map(|r| r.map(|v| v as f64 * lsb))
    }
}

fn quantize_matrix<const R: usize, const C: usize>(
    m: &[[f64; C]; R],
    f: FxpFormat,
    mode: Rounding,
    label: &str,
    bad: &mut Vec<String>,
) -> [[i64; C]; R] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| match try_quantize(m[i][j], f, mode) {
            Ok(v) => v.raw,
            Err(_) => {
                bad.push(format!("{label}[{i}][{j}] = {}", m[i][j]));
                0
            }
        })
    })
}

pub fn quantize_classifier(
    m: &ClassifierMatrix,
    s: &PerUnitScale,
    f: FxpFormat,
    mode: Rounding,
) -> Result<QuantizedClassifier> {
    let (scaled, shift) = scale_classifier(m, s, f);
    let mut bad = Vec::new();
    let raw = quantize_matrix(&scaled, f, mode, "classifier", &mut bad);
    if !bad.is_empty() {
        return Err(Error::FixedPointRange(bad.join(", ")));
    }
    Ok(QuantizedClassifier { raw, shift })
}

/// Populates the quantized mirror of `bundle` under the given bases.
pub fn per_unit_scale(
    bundle: &MatrixBundle,
    scale: &PerUnitScale,
    vector_format: FxpFormat,
    matrix_format: FxpFormat,
    rounding: Rounding,
) -> Result<MatrixBundle> {
    scale.validate()?;
    vector_format.validate()?;
    matrix_format.validate()?;
    let mut bad = Vec::new();
    let hblocks = bundle
        .hblocks
        .iter()
        .map(|h| quantize_matrix(&scale_h(&h.matrix, scale), matrix_format, rounding, &format!("H[{}]", h.sigma.sigma()), &mut bad))
        .collect();
    let classifiers = bundle
        .classifiers
        .iter()
        .map(|c| {
            let (scaled, shift) = scale_classifier(&c.matrix, scale, matrix_format);
            let label = format!("M[{}, {}]", c.sigma_inv, c.sigma_prev.sigma());
            QuantizedClassifier { raw: quantize_matrix(&scaled, matrix_format, rounding, &label, &mut bad), shift }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::FixedPointRange(format!("entries out of range: {}", bad.join(", "))));
    }
    let mut out = bundle.clone();
    out.quantized = Some(QuantizedBundle { vector_format, matrix_format, rounding, scale: *scale, hblocks, classifiers });
    Ok(out)
}

/// [`per_unit_scale`] with the default formats, rounding and bases.
pub fn quantize_bundle(bundle: &MatrixBundle, scale: &PerUnitScale) -> Result<MatrixBundle> {
    per_unit_scale(bundle, scale, FxpFormat::VECTOR, FxpFormat::MATRIX, Rounding::NearestEven)
}
