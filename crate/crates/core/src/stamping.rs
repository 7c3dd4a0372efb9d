//! Companion models, the rectifier admittance block and MANA assembly.
//!
//! The converter netlist is fixed (node names in parentheses):
//!
//! ```text
//!   VDC (vdc,0)        input u, branch current i_DC
//!   S1 (vdc,a)  S2 (a,0)  S3 (vdc,b)  S4 (b,0)      inverter, RSM
//!   Cr (a,x)   Lr (x,p)   Lm (p,b)                  resonant tank
//!   XFMR primary (p,b) : secondary (s1,s2), n:1     branch current i_DB
//!   D1 (s1,o)  D2 (0,s1)  D3 (s2,o)  D4 (0,s2)      rectifier, (anode,cathode)
//!   Co (o,0)   RL (o,0)                             output filter and load
//! ```
//!
//! Every two-terminal element carries its reference current from its first
//! to its second terminal. A companion element's current is `g·v + ih`,
//! so `ih` enters the right-hand side with `-1` at the first terminal and
//! `+1` at the second. `i_DB` is the current entering the secondary port
//! at `s1`, hence the rectifier input current is `-i_DB`.
//!
//! Elements are stamped sorted by name, so the assembled matrices do not
//! depend on the order in which the netlist was described.

use std::fmt;
use std::ops::{Add, Mul, Neg};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::LlcParameters;
use crate::error::{Error, Result};
use crate::linalg::Factorized;

/// Inverter code with S2 and S3 conducting (gate low).
pub const SIGMA_INV_LOW: u8 = 0b0110;
/// Inverter code with S1 and S4 conducting (gate high).
pub const SIGMA_INV_HIGH: u8 = 0b1001;
/// The only self-consistent rectifier codes: blocked, negative, positive, shorted.
pub const FEASIBLE_REC: [u8; 4] = [0, 6, 9, 15];

pub const REC_BLOCKED: u8 = 0;
pub const REC_NEGATIVE: u8 = 6;
pub const REC_POSITIVE: u8 = 9;
pub const REC_SHORTED: u8 = 15;

/// Full switch combination `σ = 16·σ_inv + σ_rec` restricted to the eight
/// feasible codes.
///
/// Bit 7 is S1 and bit 4 is S4; bit 3 is d1 and bit 0 is d4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SwitchCombination(u8);

impl SwitchCombination {
    pub fn new(sigma_inv: u8, sigma_rec: u8) -> Result<Self> {
        if sigma_inv != SIGMA_INV_LOW && sigma_inv != SIGMA_INV_HIGH {
            return Err(Error::InvalidSwitch(format!("sigma_inv {sigma_inv} is not 6 or 9")));
        }
        if !FEASIBLE_REC.contains(&sigma_rec) {
            return Err(Error::InvalidSwitch(format!(
                "sigma_rec {sigma_rec} is not one of 0, 6, 9, 15"
            )));
        }
        Ok(Self(16 * sigma_inv + sigma_rec))
    }

    pub fn from_code(sigma: u8) -> Result<Self> {
        Self::new(sigma >> 4, sigma & 0xF)
    }

    pub fn sigma(self) -> u8 {
        self.0
    }

    pub fn sigma_inv(self) -> u8 {
        self.0 >> 4
    }

    pub fn sigma_rec(self) -> u8 {
        self.0 & 0xF
    }

    /// Dense index in `0..8`: inverter half in the high bit, rectifier state below.
    pub fn index(self) -> usize {
        let inv = usize::from(self.sigma_inv() == SIGMA_INV_HIGH);
        inv * 4 + rec_index(self.sigma_rec())
    }

    pub fn from_index(i: usize) -> Self {
        let inv = if i >= 4 { SIGMA_INV_HIGH } else { SIGMA_INV_LOW };
        Self(16 * inv + FEASIBLE_REC[i % 4])
    }

    /// All eight combinations in index order.
    pub fn all() -> [Self; 8] {
        std::array::from_fn(Self::from_index)
    }
}

impl TryFrom<u8> for SwitchCombination {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::from_code(v)
    }
}

impl From<SwitchCombination> for u8 {
    fn from(s: SwitchCombination) -> u8 {
        s.0
    }
}

impl fmt::Display for SwitchCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (inv {:04b}, rec {:04b})", self.0, self.sigma_inv(), self.sigma_rec())
    }
}

/// Position of a feasible rectifier code in [`FEASIBLE_REC`].
pub fn rec_index(sigma_rec: u8) -> usize {
    match sigma_rec {
        REC_BLOCKED => 0,
        REC_NEGATIVE => 1,
        REC_POSITIVE => 2,
        REC_SHORTED => 3,
        _ => panic!("rectifier code {sigma_rec} is not feasible"),
    }
}

/// Whether diode `i` (1-based, d1 = most significant bit) conducts in `sigma_rec`.
pub fn diode_on(sigma_rec: u8, i: usize) -> bool {
    debug_assert!((1..=4).contains(&i));
    sigma_rec & (0b1000 >> (i - 1)) != 0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NortonEquivalent {
    pub g: f64,
    pub ih: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reactive {
    Inductor,
    Capacitor,
}

/// Backward-Euler companion of an inductor (`prev` = current) or capacitor
/// (`prev` = voltage).
pub fn companion_model(kind: Reactive, value: f64, dt: f64, prev: f64) -> NortonEquivalent {
    debug_assert!(value > 0.0 && dt > 0.0);
    match kind {
        Reactive::Inductor => NortonEquivalent { g: dt / value, ih: prev },
        Reactive::Capacitor => {
            let g = value / dt;
            NortonEquivalent { g, ih: -g * prev }
        }
    }
}

pub fn diode_conductances(sigma_rec: u8, gon: f64, goff: f64) -> [f64; 4] {
    std::array::from_fn(|k| if diode_on(sigma_rec, k + 1) { gon } else { goff })
}

/// Nodal admittance of the bridge rectifier between an ac Norton source
/// (`g1`, nodes 1-2) and a dc Norton source (`g2`, node 3 to ground).
pub fn rectifier_admittance(sigma_rec: u8, g1: f64, g2: f64, gon: f64, goff: f64) -> [[f64; 3]; 3] {
    let [d1, d2, d3, d4] = diode_conductances(sigma_rec, gon, goff);
    [
        [g1 + d1 + d2, -g1, -d1],
        [-g1, g1 + d3 + d4, -d3],
        [-d1, -d3, g2 + d1 + d3],
    ]
}

/// Coefficients `[a, b]` with `ϑ_di = a·ih1 + b·ih2`, where `ϑ_di` is the
/// diode voltage scaled by the (positive) determinant of the rectifier
/// admittance matrix.
///
/// `gd` are the four diode conductances. Generic so that feasibility can be
/// decided in exact arithmetic with the same expressions.
pub fn threshold_coefficients<T>(gd: &[T; 4], g1: &T, g2: &T) -> [[T; 2]; 4]
where
    T: Clone + Add<Output = T> + Mul<Output = T> + Neg<Output = T>,
{
    let [d1, d2, d3, d4] = gd.clone();
    let p = |a: &T, b: &T| a.clone() * b.clone();
    [
        [
            p(&d2, &d3) + p(&d3, &d4) + p(&d3, g2) + p(&d4, g2),
            -(p(&d2, &d3) + p(&d2, &d4) + p(&d2, g1) + p(&d4, g1)),
        ],
        [
            -(p(&d1, &d4) + p(&d3, &d4) + p(&d3, g2) + p(&d4, g2)),
            -(p(&d1, &d3) + p(&d1, &d4) + p(&d1, g1) + p(&d3, g1)),
        ],
        [
            -(p(&d1, &d2) + p(&d1, &d4) + p(&d1, g2) + p(&d2, g2)),
            -(p(&d1, &d4) + p(&d2, &d4) + p(&d2, g1) + p(&d4, g1)),
        ],
        [
            p(&d1, &d2) + p(&d2, &d3) + p(&d1, g2) + p(&d2, g2),
            -(p(&d1, &d3) + p(&d2, &d3) + p(&d1, g1) + p(&d3, g1)),
        ],
    ]
}

/// Signed diode thresholds: `d_i` conducts whenever its entry is positive.
pub fn diode_thresholds(
    sigma_rec: u8,
    g1: f64,
    g2: f64,
    gon: f64,
    goff: f64,
    ih1: f64,
    ih2: f64,
) -> [f64; 4] {
    let gd = diode_conductances(sigma_rec, gon, goff);
    threshold_coefficients(&gd, &g1, &g2).map(|[a, b]| a * ih1 + b * ih2)
}

pub type Node = Option<usize>;

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor { g: f64 },
    /// Two-valued resistor whose state is bit `bit` of the switch code.
    Switch { bit: u8 },
    /// Norton companion of an L or C; the history current is input `input`.
    Companion { kind: Reactive, g: f64, input: usize },
    /// Ideal voltage source driven by input `input`.
    Source { input: usize },
    /// Ideal transformer, primary:secondary = `ratio`:1.
    Transformer { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Two terminals, or four for a transformer (p+, p-, s+, s-).
    pub terminals: Vec<Node>,
    /// Label of the branch-current unknown, for sources and transformers.
    pub branch: Option<String>,
}

impl Element {
    fn has_branch(&self) -> bool {
        matches!(self.kind, ElementKind::Source { .. } | ElementKind::Transformer { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Netlist {
    nodes: Vec<String>,
    inputs: Vec<String>,
    elements: Vec<Element>,
}

pub struct NetlistBuilder {
    nodes: Vec<String>,
    grounds: Vec<String>,
    inputs: Vec<String>,
    elements: Vec<(String, ElementKind, Vec<String>, Option<String>)>,
}

impl NetlistBuilder {
    pub fn new(nodes: &[&str], grounds: &[&str], inputs: &[&str]) -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self { nodes: owned(nodes), grounds: owned(grounds), inputs: owned(inputs), elements: Vec::new() }
    }

    fn push(mut self, name: &str, kind: ElementKind, terms: &[&str], branch: Option<&str>) -> Self {
        self.elements.push((
            name.to_string(),
            kind,
            terms.iter().map(|s| s.to_string()).collect(),
            branch.map(str::to_string),
        ));
        self
    }

    fn input(&self, name: &str) -> usize {
        self.inputs.iter().position(|i| i == name).unwrap_or(usize::MAX)
    }

    pub fn resistor(self, name: &str, a: &str, b: &str, g: f64) -> Self {
        self.push(name, ElementKind::Resistor { g }, &[a, b], None)
    }

    pub fn switch(self, name: &str, a: &str, b: &str, bit: u8) -> Self {
        self.push(name, ElementKind::Switch { bit }, &[a, b], None)
    }

    pub fn companion(self, name: &str, a: &str, b: &str, kind: Reactive, g: f64, input: &str) -> Self {
        let input = self.input(input);
        self.push(name, ElementKind::Companion { kind, g, input }, &[a, b], None)
    }

    pub fn source(self, name: &str, pos: &str, neg: &str, input: &str, branch: &str) -> Self {
        let input = self.input(input);
        self.push(name, ElementKind::Source { input }, &[pos, neg], Some(branch))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn transformer(
        self,
        name: &str,
        p_pos: &str,
        p_neg: &str,
        s_pos: &str,
        s_neg: &str,
        ratio: f64,
        branch: &str,
    ) -> Self {
        self.push(name, ElementKind::Transformer { ratio }, &[p_pos, p_neg, s_pos, s_neg], Some(branch))
    }

    pub fn build(self) -> Result<Netlist> {
        let resolve = |n: &str| -> Result<Node> {
            if self.grounds.iter().any(|g| g == n) {
                return Ok(None);
            }
            self.nodes
                .iter()
                .position(|x| x == n)
                .map(Some)
                .ok_or_else(|| Error::InvalidParameters(format!("unknown node '{n}'")))
        };
        let mut elements = Vec::with_capacity(self.elements.len());
        for (name, kind, terms, branch) in &self.elements {
            if let ElementKind::Companion { input, .. } | ElementKind::Source { input } = kind {
                if *input == usize::MAX {
                    return Err(Error::InvalidParameters(format!("element {name} references an unknown input")));
                }
            }
            let terminals = terms.iter().map(|t| resolve(t)).collect::<Result<Vec<_>>>()?;
            elements.push(Element { name: name.clone(), kind: kind.clone(), terminals, branch: branch.clone() });
        }
        elements.sort_by(|a, b| a.name.cmp(&b.name));
        if elements.windows(2).any(|w| w[0].name == w[1].name) {
            return Err(Error::InvalidParameters("duplicate element names".into()));
        }
        Ok(Netlist { nodes: self.nodes, inputs: self.inputs, elements })
    }
}

/// `A x = B w` for one switch combination.
#[derive(Debug, Clone)]
pub struct ManaSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub unknown_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub code: u8,
}

impl ManaSystem {
    pub fn unknown(&self, label: &str) -> Option<usize> {
        self.unknown_labels.iter().position(|l| l == label)
    }

    pub fn factor(&self) -> Result<Factorized> {
        Factorized::new(self.a.clone(), self.code)
    }
}

impl Netlist {
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn unknown_labels(&self) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| format!("v({n})"))
            .chain(self.elements.iter().filter_map(|e| e.branch.clone()))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.nodes.len() + self.elements.iter().filter(|e| e.has_branch()).count()
    }

    /// Stamps every element for switch code `code`.
    pub fn assemble(&self, code: u8, gon: f64, goff: f64) -> ManaSystem {
        let dim = self.dim();
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DMatrix::zeros(dim, self.inputs.len());
        let mut branch = self.nodes.len();

        let conductance = |a: &mut DMatrix<f64>, p: Node, q: Node, g: f64| {
            if let Some(i) = p {
                a[(i, i)] += g;
            }
            if let Some(j) = q {
                a[(j, j)] += g;
            }
            if let (Some(i), Some(j)) = (p, q) {
                a[(i, j)] -= g;
                a[(j, i)] -= g;
            }
        };

        for e in &self.elements {
            let t = &e.terminals;
            match e.kind {
                ElementKind::Resistor { g } => conductance(&mut a, t[0], t[1], g),
                ElementKind::Switch { bit } => {
                    let g = if code & (1 << bit) != 0 { gon } else { goff };
                    conductance(&mut a, t[0], t[1], g);
                }
                ElementKind::Companion { g, input, .. } => {
                    conductance(&mut a, t[0], t[1], g);
                    if let Some(i) = t[0] {
                        b[(i, input)] -= 1.0;
                    }
                    if let Some(j) = t[1] {
                        b[(j, input)] += 1.0;
                    }
                }
                ElementKind::Source { input } => {
                    if let Some(i) = t[0] {
                        a[(i, branch)] += 1.0;
                        a[(branch, i)] += 1.0;
                    }
                    if let Some(j) = t[1] {
                        a[(j, branch)] -= 1.0;
                        a[(branch, j)] -= 1.0;
                    }
                    b[(branch, input)] = 1.0;
                    branch += 1;
                }
                ElementKind::Transformer { ratio } => {
                    // Unknown: current entering s+. Primary current entering p+ is -i/ratio.
                    let coeffs = [-1.0 / ratio, 1.0 / ratio, 1.0, -1.0];
                    let row = [1.0, -1.0, -ratio, ratio];
                    for k in 0..4 {
                        if let Some(i) = t[k] {
                            a[(i, branch)] += coeffs[k];
                            a[(branch, i)] += row[k];
                        }
                    }
                    branch += 1;
                }
            }
        }

        ManaSystem {
            a,
            b,
            unknown_labels: self.unknown_labels(),
            input_labels: self.inputs.clone(),
            code,
        }
    }
}

/// Thevenin/Norton view of a two-terminal port: the current the network
/// delivers into the port is `coeffs · w - g · v_port`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortNorton {
    pub coeffs: Vec<f64>,
    pub g: f64,
}

/// Converter inputs, in MANA right-hand-side order.
pub const INPUT_LABELS: [&str; 5] = ["u", "hist_Cr", "hist_Lr", "hist_Lm", "hist_Cf"];

/// Element conductances of the discretized converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductances {
    pub cr: f64,
    pub lr: f64,
    pub lm: f64,
    pub co: f64,
    pub load: f64,
}

/// The discretized converter: full netlist plus the two port sub-networks
/// seen by the rectifier.
#[derive(Debug, Clone)]
pub struct LlcNetwork {
    params: LlcParameters,
    full: Netlist,
    ac_port: Netlist,
    dc_port: Netlist,
    pub g: Conductances,
    readout: ReadoutMap,
}

/// Unknown indices used to turn a solution vector into histories, outputs
/// and diode voltages.
#[derive(Debug, Clone)]
struct ReadoutMap {
    /// For each history slot 0..4: (kind, g, pos, neg).
    hist: [(Reactive, f64, Node, Node); 4],
    vo: usize,
    diodes: [(Node, Node); 4],
}

impl LlcNetwork {
    pub fn new(p: &LlcParameters) -> Result<Self> {
        p.validate()?;
        let g = Conductances {
            cr: p.cr / p.dt,
            lr: p.dt / p.lr,
            lm: p.dt / p.lm,
            co: p.co / p.dt,
            load: 1.0 / p.rl,
        };
        let full = with_rectifier(
            with_tank(NetlistBuilder::new(
                &["vdc", "a", "b", "x", "p", "s1", "s2", "o"],
                &["0"],
                &INPUT_LABELS,
            ), &g)
            .transformer("XFMR", "p", "b", "s1", "s2", p.n, "i_DB"),
            &g,
        )
        .build()?;

        let ac_port = with_tank(
            NetlistBuilder::new(
                &["vdc", "a", "b", "x", "p", "s1"],
                &["0", "s2"],
                &["u", "hist_Cr", "hist_Lr", "hist_Lm", "v_test"],
            ),
            &g,
        )
        .transformer("XFMR", "p", "b", "s1", "s2", p.n, "i_DB")
        .source("VT", "s1", "s2", "v_test", "i_T")
        .build()?;

        let dc_port = NetlistBuilder::new(&["o"], &["0"], &["hist_Cf", "v_test"])
            .companion("Co", "o", "0", Reactive::Capacitor, g.co, "hist_Cf")
            .resistor("RL", "o", "0", g.load)
            .source("VT", "o", "0", "v_test", "i_T")
            .build()?;

        let node = |n: &str| full.nodes.iter().position(|x| x == n);
        let slot = |name: &str| -> (Reactive, f64, Node, Node) {
            let e = full.element(name).expect("tank element");
            match e.kind {
                ElementKind::Companion { kind, g, .. } => (kind, g, e.terminals[0], e.terminals[1]),
                _ => unreachable!(),
            }
        };
        let diode = |name: &str| {
            let e = full.element(name).expect("diode");
            (e.terminals[0], e.terminals[1])
        };
        let readout = ReadoutMap {
            hist: [slot("Cr"), slot("Lr"), slot("Lm"), slot("Co")],
            vo: node("o").expect("output node"),
            diodes: [diode("D1"), diode("D2"), diode("D3"), diode("D4")],
        };

        Ok(Self { params: *p, full, ac_port, dc_port, g, readout })
    }

    pub fn params(&self) -> &LlcParameters {
        &self.params
    }

    pub fn netlist(&self) -> &Netlist {
        &self.full
    }

    /// Assembles the MANA system for any 8-bit switch code, feasible or not.
    pub fn mana_code(&self, code: u8) -> ManaSystem {
        self.full.assemble(code, self.params.g_on(), self.params.g_off())
    }

    pub fn mana(&self, sigma: SwitchCombination) -> ManaSystem {
        self.mana_code(sigma.sigma())
    }

    /// Next history currents and outputs `[vo, ir, im]` from a MANA solution.
    pub fn readout(&self, x: &[f64], inputs: &[f64; 5]) -> ([f64; 4], [f64; 3]) {
        let v = |n: Node| n.map_or(0.0, |i| x[i]);
        let hist: [f64; 4] = std::array::from_fn(|k| {
            let (kind, g, a, b) = self.readout.hist[k];
            let vab = v(a) - v(b);
            match kind {
                Reactive::Inductor => g * vab + inputs[1 + k],
                Reactive::Capacitor => -g * vab,
            }
        });
        (hist, [x[self.readout.vo], hist[1], hist[2]])
    }

    /// Anode-to-cathode voltages of d1..d4.
    pub fn diode_voltages(&self, x: &[f64]) -> [f64; 4] {
        let v = |n: Node| n.map_or(0.0, |i| x[i]);
        self.readout.diodes.map(|(a, k)| v(a) - v(k))
    }

    /// Norton equivalent of the inverter, tank and transformer seen from the
    /// secondary terminals, as a function of `[u, hist_Cr, hist_Lr, hist_Lm]`.
    pub fn ac_port_norton(&self, sigma_inv: u8) -> Result<PortNorton> {
        port_norton(&self.ac_port, sigma_inv << 4, &self.params)
    }

    /// Norton equivalent of the output filter and load, as a function of `hist_Cf`.
    pub fn dc_port_norton(&self) -> Result<PortNorton> {
        port_norton(&self.dc_port, 0, &self.params)
    }
}

fn with_tank(b: NetlistBuilder, g: &Conductances) -> NetlistBuilder {
    b.source("VDC", "vdc", "0", "u", "i_DC")
        .switch("S1", "vdc", "a", 7)
        .switch("S2", "a", "0", 6)
        .switch("S3", "vdc", "b", 5)
        .switch("S4", "b", "0", 4)
        .companion("Cr", "a", "x", Reactive::Capacitor, g.cr, "hist_Cr")
        .companion("Lr", "x", "p", Reactive::Inductor, g.lr, "hist_Lr")
        .companion("Lm", "p", "b", Reactive::Inductor, g.lm, "hist_Lm")
}

fn with_rectifier(b: NetlistBuilder, g: &Conductances) -> NetlistBuilder {
    b.switch("D1", "s1", "o", 3)
        .switch("D2", "0", "s1", 2)
        .switch("D3", "s2", "o", 1)
        .switch("D4", "0", "s2", 0)
        .companion("Co", "o", "0", Reactive::Capacitor, g.co, "hist_Cf")
        .resistor("RL", "o", "0", g.load)
}

/// Extracts the Norton equivalent at the port driven by the test source
/// `VT` (last input, branch `i_T`).
fn port_norton(net: &Netlist, code: u8, p: &LlcParameters) -> Result<PortNorton> {
    let sys = net.assemble(code, p.g_on(), p.g_off());
    let x = sys.factor()?.solve(&sys.b);
    let row = sys.unknown("i_T").expect("test source");
    let k = net.input_count() - 1;
    let coeffs = (0..k).map(|j| x[(row, j)]).collect();
    Ok(PortNorton { coeffs, g: -x[(row, k)] })
}

/// Convenience wrapper: the MANA system of `sigma` for parameters `p`.
pub fn assemble_mana(sigma: SwitchCombination, p: &LlcParameters) -> Result<ManaSystem> {
    let net = LlcNetwork::new(p)?;
    let sys = net.mana(sigma);
    sys.factor()?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::condition_number;
    use nalgebra::{DVector, Matrix3, Vector3};

    #[test]
    fn switch_combination_codes() {
        let s = SwitchCombination::new(9, 6).unwrap();
        assert_eq!(s.sigma(), 150);
        assert_eq!((s.sigma_inv(), s.sigma_rec()), (9, 6));
        let codes: Vec<u8> = SwitchCombination::all().iter().map(|s| s.sigma()).collect();
        assert_eq!(codes, vec![96, 102, 105, 111, 144, 150, 153, 159]);
        for (i, s) in SwitchCombination::all().into_iter().enumerate() {
            assert_eq!(s.index(), i);
        }
        assert!(SwitchCombination::new(5, 0).is_err());
        assert!(SwitchCombination::new(9, 8).is_err());
        assert!(SwitchCombination::from_code(97).is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "150");
        assert!(serde_json::from_str::<SwitchCombination>("151").is_err());
    }

    #[test]
    fn companion_examples() {
        let l = companion_model(Reactive::Inductor, 25e-6, 25e-9, 0.0);
        assert!((l.g - 1e-3).abs() < 1e-18);
        assert_eq!(l.ih, 0.0);
        let c = companion_model(Reactive::Capacitor, 40e-9, 25e-9, 1.0);
        assert!((c.g - 1.6).abs() < 1e-15);
        assert!((c.ih + 1.6).abs() < 1e-15);
        assert_eq!(companion_model(Reactive::Inductor, 1e-6, 3e-9, 2.0).ih, 2.0);
        assert_eq!(companion_model(Reactive::Inductor, 1e-6, 7e-9, 2.0).ih, 2.0);
    }

    #[test]
    fn admittance_examples() {
        let y = rectifier_admittance(0, 1.0, 1.0, 1000.0, 0.0);
        assert_eq!(y, [[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let y = rectifier_admittance(9, 0.1, 0.5, 1e3, 1e-6);
        assert_eq!(y[0][0], 0.1 + 1e3 + 1e-6);
        for rec in 0..16 {
            let y = rectifier_admittance(rec, 0.3, 2.0, 1e3, 1e-6);
            for i in 0..3 {
                let off: f64 = (0..3).filter(|&j| j != i).map(|j| y[i][j].abs()).sum();
                assert!(y[i][i] >= off);
                for j in 0..3 {
                    assert_eq!(y[i][j], y[j][i]);
                }
            }
        }
    }

    #[test]
    fn thresholds_are_homogeneous() {
        assert_eq!(diode_thresholds(6, 0.2, 3.0, 1e3, 1e-6, 0.0, 0.0), [0.0; 4]);
        let a = diode_thresholds(0, 0.2, 3.0, 1e3, 1e-6, 1.3, -0.7);
        let b = diode_thresholds(0, 0.2, 3.0, 1e3, 1e-6, 2.6, -1.4);
        for k in 0..4 {
            assert!((b[k] - 2.0 * a[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
        }
    }

    /// The third threshold carries `+g_d2·g2`; the opposite sign disagrees
    /// with the direct nodal solve.
    #[test]
    fn third_threshold_sign_matches_nodal_solve() {
        let (g1, g2): (f64, f64) = (0.7, 1.9);
        let gd: [f64; 4] = [0.3, 2.0, 0.5, 1.1];
        let y = Matrix3::new(
            g1 + gd[0] + gd[1], -g1, -gd[0],
            -g1, g1 + gd[2] + gd[3], -gd[2],
            -gd[0], -gd[2], g2 + gd[0] + gd[2],
        );
        let det = y.determinant();
        let (ih1, ih2) = (1.0, 0.0);
        let v = y.lu().solve(&Vector3::new(ih1, -ih1, ih2)).unwrap();
        let vd3 = v[1] - v[2];
        let coeff = threshold_coefficients(&gd, &g1, &g2);
        assert!((coeff[2][0] * ih1 - vd3 * det).abs() < 1e-12);
        let misprinted = -(gd[0] * gd[1] + gd[0] * gd[3] + gd[0] * g2 - gd[1] * g2);
        assert!((misprinted - vd3 * det).abs() > 1e-3);
    }

    #[test]
    fn mana_is_nonsingular_for_all_feasible_states() {
        for p in [LlcParameters::set1(), LlcParameters::set2()] {
            let net = LlcNetwork::new(&p).unwrap();
            for s in SwitchCombination::all() {
                let sys = net.mana(s);
                assert!(sys.factor().is_ok(), "sigma {s}");
                assert!(condition_number(&sys.a).is_finite());
                assert_eq!(sys.a.nrows(), sys.unknown_labels.len());
                assert_eq!(sys.b.nrows(), sys.a.nrows());
                assert_eq!(sys.b.ncols(), 5);
            }
            assert!(assemble_mana(SwitchCombination::new(9, 0).unwrap(), &p).is_ok());
        }
    }

    #[test]
    fn unknowns_end_with_source_and_transformer_currents() {
        let net = LlcNetwork::new(&LlcParameters::set2()).unwrap();
        let labels = net.netlist().unknown_labels();
        assert_eq!(labels.len(), 10);
        assert_eq!(&labels[8..], &["i_DC".to_string(), "i_DB".to_string()]);
        assert_eq!(net.mana_code(150).input_labels, INPUT_LABELS.map(String::from).to_vec());
    }

    #[test]
    fn homogeneous_system_gives_zero() {
        let net = LlcNetwork::new(&LlcParameters::set2()).unwrap();
        let sys = net.mana(SwitchCombination::new(9, 9).unwrap());
        let mut rhs = DVector::zeros(sys.a.nrows());
        sys.factor().unwrap().solve_in_place(&mut rhs);
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stamping_is_order_independent() {
        let p = LlcParameters::set2();
        let g = Conductances { cr: 0.88, lr: 5e-3, lm: 1e-3, co: 1.2e5, load: 7.0 };
        let nodes = ["vdc", "a", "b", "x", "p", "s1", "s2", "o"];
        let forward = with_rectifier(with_tank(NetlistBuilder::new(&nodes, &["0"], &INPUT_LABELS), &g)
            .transformer("XFMR", "p", "b", "s1", "s2", p.n, "i_DB"), &g)
            .build()
            .unwrap();
        let reversed = NetlistBuilder::new(&nodes, &["0"], &INPUT_LABELS)
            .resistor("RL", "o", "0", g.load)
            .companion("Co", "o", "0", Reactive::Capacitor, g.co, "hist_Cf")
            .switch("D4", "0", "s2", 0)
            .switch("D3", "s2", "o", 1)
            .switch("D2", "0", "s1", 2)
            .switch("D1", "s1", "o", 3)
            .transformer("XFMR", "p", "b", "s1", "s2", p.n, "i_DB")
            .companion("Lm", "p", "b", Reactive::Inductor, g.lm, "hist_Lm")
            .companion("Lr", "x", "p", Reactive::Inductor, g.lr, "hist_Lr")
            .companion("Cr", "a", "x", Reactive::Capacitor, g.cr, "hist_Cr")
            .switch("S4", "b", "0", 4)
            .switch("S3", "vdc", "b", 5)
            .switch("S2", "a", "0", 6)
            .switch("S1", "vdc", "a", 7)
            .source("VDC", "vdc", "0", "u", "i_DC")
            .build()
            .unwrap();
        for code in 0..=255u8 {
            let a = forward.assemble(code, 1e3, 1e-6);
            let b = reversed.assemble(code, 1e3, 1e-6);
            assert_eq!(a.a, b.a);
            assert_eq!(a.b, b.b);
            assert_eq!(a.unknown_labels, b.unknown_labels);
        }
    }

    #[test]
    fn builder_rejects_bad_netlists() {
        assert!(NetlistBuilder::new(&["a"], &["0"], &[]).resistor("R", "a", "zz", 1.0).build().is_err());
        assert!(NetlistBuilder::new(&["a"], &["0"], &[])
            .resistor("R", "a", "0", 1.0)
            .resistor("R", "a", "0", 2.0)
            .build()
            .is_err());
        assert!(NetlistBuilder::new(&["a"], &["0"], &["u"])
            .source("V", "a", "0", "w", "i_V")
            .build()
            .is_err());
    }

    /// The full MANA solve and the reduced rectifier model agree once the
    /// ac and dc sides are replaced by their port Norton equivalents.
    #[test]
    fn port_nortons_reproduce_full_solve() {
        let p = LlcParameters::set2();
        let net = LlcNetwork::new(&p).unwrap();
        let dc = net.dc_port_norton().unwrap();
        assert_eq!(dc.coeffs, vec![-1.0]);
        assert!((dc.g - (net.g.co + net.g.load)).abs() < 1e-9 * dc.g);
        let w = [400.0, -120.0, 11.0, -3.0, -1.3e6];
        for s in SwitchCombination::all() {
            let ac = net.ac_port_norton(s.sigma_inv()).unwrap();
            let ih1: f64 = ac.coeffs.iter().zip(&w[..4]).map(|(c, v)| c * v).sum();
            let ih2 = dc.coeffs[0] * w[4];
            let sys = net.mana(s);
            let mut x = &sys.b * DVector::from_row_slice(&w);
            sys.factor().unwrap().solve_in_place(&mut x);
            let vd = net.diode_voltages(x.as_slice());

            let y = rectifier_admittance(s.sigma_rec(), ac.g, dc.g, p.g_on(), p.g_off());
            let y = Matrix3::from_fn(|i, j| y[i][j]);
            let v = y.lu().solve(&Vector3::new(ih1, -ih1, ih2)).unwrap();
            let t = nalgebra::Matrix4x3::new(1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, -1.0, 0.0);
            let vd_reduced = t * v;
            for k in 0..4 {
                let scale = vd[k].abs().max(1.0);
                assert!((vd[k] - vd_reduced[k]).abs() < 1e-6 * scale, "{s} d{}: {} vs {}", k + 1, vd[k], vd_reduced[k]);
            }
        }
    }

    #[test]
    fn ac_port_conductance_is_symmetric_in_gate() {
        for p in [LlcParameters::set1(), LlcParameters::set2()] {
            let net = LlcNetwork::new(&p).unwrap();
            let hi = net.ac_port_norton(SIGMA_INV_HIGH).unwrap();
            let lo = net.ac_port_norton(SIGMA_INV_LOW).unwrap();
            assert!(((hi.g - lo.g) / hi.g).abs() < 1e-12);
            assert!(((hi.coeffs[0] + lo.coeffs[0]) / hi.coeffs[0]).abs() < 1e-9);
        }
    }
}
