//! Versioned TOML scenario files.
//!
//! ```toml
//! schema_version = 1
//! preset = "set2"
//!
//! [parameters]
//! dt = 25e-9
//!
//! [scenario]
//! u = 400.0
//! duration = 0.01
//! decimation = 10
//!
//! [[scenario.profile.segments]]
//! t_start = 0.0
//! t_end = 0.01
//! fs_start = 312.5e3
//! fs_end = 312.5e3
//! ramp = "hold"
//!
//! [[scenario.faults]]
//! t_on = 0.004
//! t_off = 0.006
//! r_fault = 1e-3
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use llc_dmm::scenario::Scenario;
use llc_dmm::{LlcParameters, Preset};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Optional replacements for fields of the preset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterOverrides {
    pub lr: Option<f64>,
    pub lm: Option<f64>,
    pub cr: Option<f64>,
    pub co: Option<f64>,
    pub n: Option<f64>,
    pub vin: Option<f64>,
    pub rl: Option<f64>,
    pub ron: Option<f64>,
    pub roff: Option<f64>,
    pub dt: Option<f64>,
}

impl ParameterOverrides {
    pub fn apply(&self, mut p: LlcParameters) -> LlcParameters {
        let fields = [
            (&mut p.lr, self.lr),
            (&mut p.lm, self.lm),
            (&mut p.cr, self.cr),
            (&mut p.co, self.co),
            (&mut p.n, self.n),
            (&mut p.vin, self.vin),
            (&mut p.rl, self.rl),
            (&mut p.ron, self.ron),
            (&mut p.roff, self.roff),
            (&mut p.dt, self.dt),
        ];
        for (slot, value) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub preset: Preset,
    #[serde(default)]
    pub parameters: ParameterOverrides,
    pub scenario: Scenario,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).context("malformed scenario file")?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            bail!("scenario schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", file.schema_version);
        }
        file.scenario.validate(&file.resolved_parameters())?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolved_parameters(&self) -> LlcParameters {
        self.parameters.apply(self.preset.parameters())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
