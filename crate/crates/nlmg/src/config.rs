//! Run configuration: JSON schema, parsing and validation.
//!
//! The JSON layout is documented in the README. CLI flags may override
//! `mode` and `out_dir` after parsing. Validation bounds the mesh sizes so
//! that a config file can never request an absurdly large run by accident.

use serde::{Deserialize, Serialize};

use crate::assembly::{Nonlinearity, Potential};
use crate::eigen::ScfConfig;
use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::scheme::{CorrectionKind, SchemeConfig};

/// Largest 1/H accepted from a config file.
const MAX_SUBDIVISIONS: f64 = 4096.0;
/// Largest number of refinement levels accepted from a config file.
const MAX_LEVELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    Interval01,
    Square01,
}

impl From<DomainSpec> for Domain {
    fn from(d: DomainSpec) -> Domain {
        match d {
            DomainSpec::Interval01 => Domain::Interval01,
            DomainSpec::Square01 => Domain::Square01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { value: f64 },
    Harmonic { coefficient: f64 },
}

impl From<PotentialSpec> for Potential {
    fn from(p: PotentialSpec) -> Potential {
        match p {
            PotentialSpec::Constant { value } => Potential::Constant(value),
            PotentialSpec::Harmonic { coefficient } => Potential::HarmonicWell { coefficient },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    Potential { potential: PotentialSpec },
    Cubic { zeta: f64 },
    Gpe { potential: PotentialSpec, zeta: f64 },
}

impl From<NonlinearitySpec> for Nonlinearity {
    fn from(f: NonlinearitySpec) -> Nonlinearity {
        match f {
            NonlinearitySpec::Zero => Nonlinearity::Zero,
            NonlinearitySpec::Potential { potential } => Nonlinearity::Potential {
                v: potential.into(),
            },
            NonlinearitySpec::Cubic { zeta } => Nonlinearity::Cubic { zeta },
            NonlinearitySpec::Gpe { potential, zeta } => Nonlinearity::Gpe {
                v: potential.into(),
                zeta,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Scheme,
    Direct,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// Known continuum eigenpair; only valid for the zero nonlinearity.
    Analytic,
    /// Direct solve on one extra refinement level.
    DirectFiner,
    None,
}

fn default_schema_version() -> u32 {
    1
}

fn default_beta() -> u32 {
    2
}

fn default_mode() -> RunMode {
    RunMode::Scheme
}

fn default_reference() -> ReferenceSpec {
    ReferenceSpec::None
}

fn default_out_dir() -> String {
    "out".to_string()
}

fn default_seed() -> u64 {
    0
}

fn default_correction() -> CorrectionKind {
    CorrectionKind::FixedPoint
}

fn default_scf() -> ScfConfig {
    ScfConfig::default()
}

/// One solver run as described by a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub coarse_h: f64,
    pub levels: usize,
    #[serde(default = "default_beta")]
    pub beta: u32,
    pub nonlinearity: NonlinearitySpec,
    #[serde(default = "default_correction")]
    pub correction: CorrectionKind,
    #[serde(default = "default_scf")]
    pub scf: ScfConfig,
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    #[serde(default = "default_reference")]
    pub reference: ReferenceSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("parse failure: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "schema_version: unsupported version {}",
                self.schema_version
            )));
        }
        if !self.coarse_h.is_finite() || !(self.coarse_h > 0.0) || self.coarse_h >= 1.0 {
            return Err(Error::Config(format!(
                "coarse_h: {} is not in (0, 1)",
                self.coarse_h
            )));
        }
        let m = (1.0 / self.coarse_h).round();
        if m < 2.0 || m > MAX_SUBDIVISIONS || (m * self.coarse_h - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "coarse_h: 1/{} must be an integer in [2, {MAX_SUBDIVISIONS}]",
                self.coarse_h
            )));
        }
        if self.levels < 1 || self.levels > MAX_LEVELS {
            return Err(Error::Config(format!(
                "levels: {} is not in [1, {MAX_LEVELS}]",
                self.levels
            )));
        }
        let extra = match self.reference {
            ReferenceSpec::DirectFiner => 1usize,
            _ => 0,
        };
        let finest = m * 2f64.powi((self.levels + extra) as i32);
        if finest > MAX_SUBDIVISIONS {
            return Err(Error::Config(format!(
                "levels: finest mesh would have {finest} subdivisions per side (max {MAX_SUBDIVISIONS})"
            )));
        }
        if self.beta != 2 {
            return Err(Error::Config(format!(
                "beta: {} is unsupported, only 2 is implemented",
                self.beta
            )));
        }
        if let Err(e) = self.scf.validate() {
            return Err(Error::Config(format!("scf: {e}")));
        }
        match self.nonlinearity {
            NonlinearitySpec::Cubic { zeta } | NonlinearitySpec::Gpe { zeta, .. } => {
                if !zeta.is_finite() || zeta < 0.0 {
                    return Err(Error::Config(format!(
                        "nonlinearity.zeta: {zeta} must be finite and nonnegative"
                    )));
                }
            }
            _ => {}
        }
        if let NonlinearitySpec::Potential { potential }
        | NonlinearitySpec::Gpe { potential, .. } = self.nonlinearity
        {
            let ok = match potential {
                PotentialSpec::Constant { value } => value.is_finite() && value >= 0.0,
                PotentialSpec::Harmonic { coefficient } => {
                    coefficient.is_finite() && coefficient >= 0.0
                }
            };
            if !ok {
                return Err(Error::Config(
                    "nonlinearity.potential: coefficients must be finite and nonnegative".into(),
                ));
            }
        }
        if self.reference == ReferenceSpec::Analytic
            && self.nonlinearity != NonlinearitySpec::Zero
        {
            return Err(Error::Config(
                "reference: analytic reference is only available for the zero nonlinearity".into(),
            ));
        }
        if self.out_dir.is_empty() {
            return Err(Error::Config("out_dir: must not be empty".into()));
        }
        Ok(())
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            domain: self.domain.into(),
            coarse_h: self.coarse_h,
            n_levels: self.levels,
            beta: self.beta,
            nonlinearity: self.nonlinearity.into(),
            correction: self.correction,
            scf: self.scf,
        }
    }
}
