//! Offline inversion of every feasible MANA system into H-blocks, the
//! Norton extraction rows, and the folded single-stage classifiers.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::circuit::LlcParameters;
use crate::dmm::{mapping_slopes, MappingFunction, Slopes};
use crate::error::{Error, Result};
use crate::fxp::QuantizedBundle;
use crate::stamping::{LlcNetwork, SwitchCombination, SIGMA_INV_HIGH, SIGMA_INV_LOW};

pub const SCHEMA_VERSION: u32 = 1;

/// Rows: next `[hist_Cr, hist_Lr, hist_Lm]`, next `hist_Cf`, `[vo, ir, im]`.
/// Columns: `[u, hist_Cr, hist_Lr, hist_Lm, hist_Cf]`.
pub type HMatrix = [[f64; 5]; 7];
/// Four half-line tests over `[u_prev, hist_ac_prev(3), hist_dc_prev, u]`.
pub type ClassifierMatrix = [[f64; 6]; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBlocks {
    pub sigma: SwitchCombination,
    pub matrix: HMatrix,
}

impl HBlocks {
    fn block<const R: usize, const C: usize>(&self, r0: usize, c0: usize) -> [[f64; C]; R] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.matrix[r0 + i][c0 + j]))
    }

    pub fn h_ac_u(&self) -> [[f64; 1]; 3] {
        self.block(0, 0)
    }
    pub fn h_ac_ac(&self) -> [[f64; 3]; 3] {
        self.block(0, 1)
    }
    pub fn h_ac_dc(&self) -> [[f64; 1]; 3] {
        self.block(0, 4)
    }
    pub fn h_dc_u(&self) -> [[f64; 1]; 1] {
        self.block(3, 0)
    }
    pub fn h_dc_ac(&self) -> [[f64; 3]; 1] {
        self.block(3, 1)
    }
    pub fn h_dc_dc(&self) -> [[f64; 1]; 1] {
        self.block(3, 4)
    }
    pub fn h_y_u(&self) -> [[f64; 1]; 3] {
        self.block(4, 0)
    }
    pub fn h_y_ac(&self) -> [[f64; 3]; 3] {
        self.block(4, 1)
    }
    pub fn h_y_dc(&self) -> [[f64; 1]; 3] {
        self.block(4, 4)
    }

    pub fn apply(&self, w: &[f64; 5]) -> [f64; 7] {
        self.matrix.map(|row| dot(&row, w))
    }
}

#[inline]
pub fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ih1 = h1[inv]·[u, hist_ac]` and `ih2 = h2·hist_dc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NortonRows {
    /// Indexed by gate: 0 for σ_inv = 6, 1 for σ_inv = 9.
    pub h1: [[f64; 4]; 2],
    pub h2: f64,
    pub g1: f64,
    pub g2: f64,
}

impl NortonRows {
    pub fn ih1(&self, gate: bool, u: f64, hist_ac: &[f64; 3]) -> f64 {
        let r = &self.h1[usize::from(gate)];
        r[0] * u + r[1] * hist_ac[0] + r[2] * hist_ac[1] + r[3] * hist_ac[2]
    }

    pub fn ih2(&self, hist_dc: f64) -> f64 {
        self.h2 * hist_dc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedClassifier {
    pub sigma_inv: u8,
    pub sigma_prev: SwitchCombination,
    pub matrix: ClassifierMatrix,
}

pub fn classifier_index(gate: bool, sigma_prev: SwitchCombination) -> usize {
    usize::from(gate) * 8 + sigma_prev.index()
}

fn gate_of(sigma_inv: u8) -> Result<bool> {
    match sigma_inv {
        SIGMA_INV_LOW => Ok(false),
        SIGMA_INV_HIGH => Ok(true),
        other => Err(Error::InvalidSwitch(format!("sigma_inv {other} is not 6 or 9"))),
    }
}

pub fn build_norton_rows(net: &LlcNetwork) -> Result<NortonRows> {
    let lo = net.ac_port_norton(SIGMA_INV_LOW)?;
    let hi = net.ac_port_norton(SIGMA_INV_HIGH)?;
    let dc = net.dc_port_norton()?;
    let row = |c: &[f64]| -> [f64; 4] { std::array::from_fn(|k| c[k]) };
    Ok(NortonRows { h1: [row(&lo.coeffs), row(&hi.coeffs)], h2: dc.coeffs[0], g1: hi.g, g2: dc.g })
}

pub fn build_h_blocks_with(net: &LlcNetwork, sigma: SwitchCombination) -> Result<HBlocks> {
    let sys = net.mana(sigma);
    let lu = sys.factor()?;
    let mut matrix = [[0.0; 5]; 7];
    for j in 0..5 {
        let mut x: DVector<f64> = sys.b.column(j).into_owned();
        lu.solve_in_place(&mut x);
        let mut e = [0.0; 5];
        e[j] = 1.0;
        let (hist, y) = net.readout(x.as_slice(), &e);
        for (i, v) in hist.iter().chain(y.iter()).enumerate() {
            matrix[i][j] = *v;
        }
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Singular { sigma: sigma.sigma() });
    }
    Ok(HBlocks { sigma, matrix })
}

pub fn build_h_blocks(p: &LlcParameters, sigma: SwitchCombination) -> Result<HBlocks> {
    build_h_blocks_with(&LlcNetwork::new(p)?, sigma)
}

/// Folds the Norton rows of the current step through the previous step's
/// H-blocks, then applies the four half-line tests.
pub fn fold_classifier(mf: &MappingFunction, norton: &NortonRows, gate: bool, prev: &HBlocks) -> ClassifierMatrix {
    let h1 = &norton.h1[usize::from(gate)];
    let ac: [f64; 6] = std::array::from_fn(|j| match j {
        5 => h1[0],
        _ => (0..3).map(|k| h1[1 + k] * prev.matrix[k][j]).sum(),
    });
    let dc: [f64; 6] = std::array::from_fn(|j| if j < 5 { norton.h2 * prev.matrix[3][j] } else { 0.0 });
    let f = [ac, dc];
    mf.rows().map(|[a, b]| std::array::from_fn(|j| a * f[0][j] + b * f[1][j]))
}

pub fn build_classifiers_with(
    mf: &MappingFunction,
    norton: &NortonRows,
    hblocks: &[HBlocks],
) -> Vec<FoldedClassifier> {
    [false, true]
        .into_iter()
        .flat_map(|gate| {
            hblocks.iter().map(move |prev| FoldedClassifier {
                sigma_inv: if gate { SIGMA_INV_HIGH } else { SIGMA_INV_LOW },
                sigma_prev: prev.sigma,
                matrix: fold_classifier(mf, norton, gate, prev),
            })
        })
        .collect()
}

pub fn build_classifiers(p: &LlcParameters) -> Result<Vec<FoldedClassifier>> {
    let b = build_bundle(p)?;
    Ok(b.classifiers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixBundle {
    pub schema_version: u32,
    pub parameters: LlcParameters,
    pub parameters_hash: String,
    pub slopes: Slopes,
    pub norton: NortonRows,
    /// In [`SwitchCombination::index`] order.
    pub hblocks: Vec<HBlocks>,
    /// In [`classifier_index`] order.
    pub classifiers: Vec<FoldedClassifier>,
    pub quantized: Option<QuantizedBundle>,
}

pub fn build_bundle(p: &LlcParameters) -> Result<MatrixBundle> {
    let net = LlcNetwork::new(p)?;
    let norton = build_norton_rows(&net)?;
    let slopes = mapping_slopes(norton.g1, norton.g2, p.g_on(), p.g_off())?;
    let mf = MappingFunction::new(slopes)?;
    let hblocks = SwitchCombination::all()
        .into_iter()
        .map(|s| build_h_blocks_with(&net, s))
        .collect::<Result<Vec<_>>>()?;
    let classifiers = build_classifiers_with(&mf, &norton, &hblocks);
    Ok(MatrixBundle {
        schema_version: SCHEMA_VERSION,
        parameters: *p,
        parameters_hash: p.digest(),
        slopes,
        norton,
        hblocks,
        classifiers,
        quantized: None,
    })
}

impl MatrixBundle {
    pub fn mapping(&self) -> MappingFunction {
        MappingFunction { m1: self.slopes.m1, m2: self.slopes.m2 }
    }

    pub fn h(&self, sigma: SwitchCombination) -> &HBlocks {
        &self.hblocks[sigma.index()]
    }

    pub fn classifier(&self, gate: bool, sigma_prev: SwitchCombination) -> &FoldedClassifier {
        &self.classifiers[classifier_index(gate, sigma_prev)]
    }

    /// Classifier for the first step after switching from `prev_bundle`.
    pub fn transitional_classifier(&self, prev_bundle: &MatrixBundle, gate: bool, sigma_prev: SwitchCombination) -> ClassifierMatrix {
        fold_classifier(&self.mapping(), &self.norton, gate, prev_bundle.h(sigma_prev))
    }

    /// Structural checks: schema, hash, completeness, ordering, finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Bundle(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.parameters_hash != self.parameters.digest() {
            return Err(Error::Bundle("parameters_hash does not match the embedded parameters".into()));
        }
        if self.hblocks.len() != 8 || self.classifiers.len() != 16 {
            return Err(Error::Bundle(format!(
                "incomplete bundle: {} hblocks (need 8), {} classifiers (need 16)",
                self.hblocks.len(),
                self.classifiers.len()
            )));
        }
        for (i, h) in self.hblocks.iter().enumerate() {
            if h.sigma.index() != i {
                return Err(Error::Bundle(format!("hblock {i} holds sigma {}", h.sigma)));
            }
        }
        for (i, c) in self.classifiers.iter().enumerate() {
            if classifier_index(gate_of(c.sigma_inv)?, c.sigma_prev) != i {
                return Err(Error::Bundle(format!("classifier {i} is out of order")));
            }
        }
        let finite = self.hblocks.iter().flat_map(|h| h.matrix.iter().flatten())
            .chain(self.classifiers.iter().flat_map(|c| c.matrix.iter().flatten()))
            .chain(self.norton.h1.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Bundle("non-finite matrix entry".into()));
        }
        MappingFunction::new(self.slopes)?;
        if let Some(q) = &self.quantized {
            q.validate()?;
        }
        Ok(())
    }
}

pub fn export_bundle(b: &MatrixBundle, path: &Path) -> Result<()> {
    b.validate()?;
    fs::write(path, serde_json::to_string_pretty(b)?)?;
    Ok(())
}

/// Reads a bundle, optionally requiring it to have been built for `expected`.
pub fn import_bundle(path: &Path, expected: Option<&LlcParameters>) -> Result<MatrixBundle> {
    let text = fs::read_to_string(path)?;
    let b: MatrixBundle = serde_json::from_str(&text)?;
    b.validate()?;
    if let Some(p) = expected {
        if b.parameters_hash != p.digest() {
            return Err(Error::Bundle(format!(
                "bundle was built for parameters {} but {} was requested",
                b.parameters_hash,
                p.digest()
            )));
        }
    }
    Ok(b)
}
