//! Waveform records, CSV files, gain curves and relative error norms.

use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;

use crate::circuit::tank_gain;
use crate::error::{Error, Result};
use crate::solvers::StepOutput;

pub const WAVEFORM_HEADER: [&str; 6] = ["t", "vo", "ir", "im", "sigma", "fs"];
pub const GAIN_HEADER: [&str; 3] = ["F", "Q", "G"];

/// Columnar simulation output.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Waveforms {
    pub t: Vec<f64>,
    pub vo: Vec<f64>,
    pub ir: Vec<f64>,
    pub im: Vec<f64>,
    pub sigma: Vec<u8>,
    pub fs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Vo,
    Ir,
    Im,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Vo, Signal::Ir, Signal::Im];
}

impl Waveforms {
    pub fn push(&mut self, t: f64, out: &StepOutput, fs: f64) {
        self.t.push(t);
        self.vo.push(out.y[0]);
        self.ir.push(out.y[1]);
        self.im.push(out.y[2]);
        self.sigma.push(out.sigma.sigma());
        self.fs.push(fs);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn signal(&self, s: Signal) -> &[f64] {
        match s {
            Signal::Vo => &self.vo,
            Signal::Ir => &self.ir,
            Signal::Im => &self.im,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(WAVEFORM_HEADER)?;
        for i in 0..self.len() {
            w.write_record([
                self.t[i].to_string(),
                self.vo[i].to_string(),
                self.ir[i].to_string(),
                self.im[i].to_string(),
                self.sigma[i].to_string(),
                self.fs[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != WAVEFORM_HEADER {
            return Err(Error::Domain(format!("unexpected waveform header {header:?}")));
        }
        let mut w = Self::default();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Domain(format!("bad number '{}' in column {}", &rec[i], WAVEFORM_HEADER[i])))
            };
            w.t.push(f(0)?);
            w.vo.push(f(1)?);
            w.ir.push(f(2)?);
            w.im.push(f(3)?);
            w.sigma.push(rec[4].parse().map_err(|_| Error::Domain(format!("bad sigma '{}'", &rec[4])))?);
            w.fs.push(f(5)?);
        }
        Ok(w)
    }
}

/// `‖sim − ref‖₂ / ‖ref‖₂` over samples with `t0 ≤ t < t1`.
pub fn error_2norm(sim: &Waveforms, reference: &Waveforms, signal: Signal, window: (f64, f64)) -> Result<f64> {
    if sim.len() != reference.len() || sim.t.iter().zip(&reference.t).any(|(a, b)| a != b) {
        return Err(Error::Domain("waveforms are not on the same time base".into()));
    }
    let mut acc = ErrorAccumulator::new(vec![(String::new(), window.0, window.1)]);
    let (s, r) = (sim.signal(signal), reference.signal(signal));
    for i in 0..sim.len() {
        acc.push_one(sim.t[i], signal, s[i], r[i]);
    }
    let idx = Signal::ALL.iter().position(|&x| x == signal).expect("listed");
    acc.report().rows[0].e[idx].ok_or_else(|| Error::Domain("reference norm is zero; relative error undefined".into()))
}

/// Streaming version of [`error_2norm`] over several windows at once.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    windows: Vec<(String, f64, f64)>,
    diff2: Vec<[f64; 3]>,
    ref2: Vec<[f64; 3]>,
    samples: Vec<u64>,
}

impl ErrorAccumulator {
    pub fn new(windows: Vec<(String, f64, f64)>) -> Self {
        let n = windows.len();
        Self { windows, diff2: vec![[0.0; 3]; n], ref2: vec![[0.0; 3]; n], samples: vec![0; n] }
    }

    pub fn push(&mut self, t: f64, sim: &[f64; 3], reference: &[f64; 3]) {
        for (w, (_, t0, t1)) in self.windows.iter().enumerate() {
            if t >= *t0 && t < *t1 {
                self.samples[w] += 1;
                for k in 0..3 {
                    let d = sim[k] - reference[k];
                    self.diff2[w][k] += d * d;
                    self.ref2[w][k] += reference[k] * reference[k];
                }
            }
        }
    }

    fn push_one(&mut self, t: f64, signal: Signal, sim: f64, reference: f64) {
        let k = Signal::ALL.iter().position(|&x| x == signal).expect("listed");
        let mut s = [0.0; 3];
        let mut r = [0.0; 3];
        s[k] = sim;
        r[k] = reference;
        self.push(t, &s, &r);
    }

    pub fn report(&self) -> ErrorReport {
        let rows = self
            .windows
            .iter()
            .enumerate()
            .map(|(w, (label, t0, t1))| ErrorRow {
                label: label.clone(),
                t0: *t0,
                t1: *t1,
                samples: self.samples[w],
                e: std::array::from_fn(|k| {
                    (self.ref2[w][k] > 0.0).then(|| (self.diff2[w][k] / self.ref2[w][k]).sqrt())
                }),
            })
            .collect();
        ErrorReport { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub label: String,
    pub t0: f64,
    pub t1: f64,
    pub samples: u64,
    /// Relative errors of `[vo, ir, im]`; `None` when the reference is zero.
    pub e: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Largest error, or `None` if any entry is undefined or a window is empty.
    pub fn max_error(&self) -> Option<f64> {
        self.rows.iter().try_fold(0.0f64, |m, r| {
            if r.samples == 0 {
                return None;
            }
            r.e.iter().try_fold(m, |m, e| e.map(|v| m.max(v)))
        })
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>10} {:>10} {:>10}", "Sequence", "vo", "ir", "im")?;
        for r in &self.rows {
            write!(f, "{:<14}", r.label)?;
            for e in r.e {
                match e {
                    Some(v) => write!(f, " {:>9.3}%", 100.0 * v)?,
                    None => write!(f, " {:>10}", "undefined")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPoint {
    pub f: f64,
    pub q: f64,
    pub g: f64,
}

/// Gain curve samples on an even grid over `[f_min, f_max]`, always
/// including `F = 1`. Poles are skipped.
pub fn gain_curve(m: f64, qs: &[f64], f_min: f64, f_max: f64, points: usize) -> Result<Vec<GainPoint>> {
    if !(f_min > 0.0 && f_max > f_min && points >= 2) {
        return Err(Error::Domain(format!("bad frequency grid [{f_min}, {f_max}] x {points}")));
    }
    let mut grid: Vec<f64> = (0..points).map(|i| f_min + (f_max - f_min) * i as f64 / (points - 1) as f64).collect();
    if !grid.contains(&1.0) {
        grid.push(1.0);
        grid.sort_by(f64::total_cmp);
    }
    let mut out = Vec::with_capacity(grid.len() * qs.len());
    for &q in qs {
        for &f in &grid {
            match tank_gain(f, m, q) {
                Ok(g) => out.push(GainPoint { f, q, g }),
                Err(Error::Domain(msg)) if msg.contains("pole") => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

pub fn emit_gain_curve<W: Write>(points: &[GainPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GAIN_HEADER)?;
    for p in points {
        w.write_record([p.f.to_string(), p.q.to_string(), p.g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gain_curve<R: Read>(input: R) -> Result<Vec<GainPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| Error::Domain(format!("bad number '{}'", &rec[i]))) };
        out.push(GainPoint { f: f(0)?, q: f(1)?, g: f(2)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stamping::SwitchCombination;

    fn sample(n: usize) -> Waveforms {
        let mut w = Waveforms::default();
        for i in 0..n {
            let out = StepOutput {
                y: [i as f64 * 0.1, (i as f64).sin(), -1.0 / (i as f64 + 3.0)],
                sigma: SwitchCombination::from_index(i % 8),
                ih1: 0.0,
                ih2: 0.0,
            };
            w.push(i as f64 * 25e-9, &out, 312.5e3);
        }
        w
    }

    #[test]
    fn csv_round_trip() {
        let w = sample(50);
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(Waveforms::read_csv(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn empty_waveform_is_header_only() {
        let mut buf = Vec::new();
        Waveforms::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,vo,ir,im,sigma,fs\n");
    }

    #[test]
    fn error_norm_examples() {
        let w = sample(100);
        for s in Signal::ALL {
            assert_eq!(error_2norm(&w, &w, s, (0.0, 1.0)).unwrap(), 0.0);
        }
        let mut scaled = w.clone();
        scaled.ir.iter_mut().for_each(|v| *v *= 1.01);
        let e = error_2norm(&scaled, &w, Signal::Ir, (0.0, 1.0)).unwrap();
        assert!((e - 0.01).abs() < 1e-12);
        let zero = Waveforms { vo: vec![0.0; 100], ..w.clone() };
        assert!(error_2norm(&w, &zero, Signal::Vo, (0.0, 1.0)).is_err());
        assert!(error_2norm(&sample(10), &w, Signal::Vo, (0.0, 1.0)).is_err());
    }

    #[test]
    fn report_table() {
        let mut acc = ErrorAccumulator::new(vec![("a".into(), 0.0, 1.0), ("b".into(), 5.0, 6.0)]);
        acc.push(0.5, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        let r = acc.report();
        assert_eq!(r.rows[0].e, [Some(0.0); 3]);
        assert_eq!(r.rows[1].e, [None; 3]);
        assert_eq!(r.max_error(), None);
        assert!(r.to_string().contains("undefined"));
    }

    #[test]
    fn gain_curve_has_unity_at_resonance() {
        let qs = [0.0, 0.2, 0.5, 1.0];
        let pts = gain_curve(7.0, &qs, 0.2, 2.0, 37).unwrap();
        for q in qs {
            let at_one: Vec<_> = pts.iter().filter(|p| p.q == q && p.f == 1.0).collect();
            assert_eq!(at_one.len(), 1);
            assert!((at_one[0].g - 1.0).abs() <= 1e-12);
        }
        let mut buf = Vec::new();
        emit_gain_curve(&pts, &mut buf).unwrap();
        assert_eq!(read_gain_curve(buf.as_slice()).unwrap(), pts);
    }
}
