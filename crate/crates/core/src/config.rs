//! Key-value configuration files (TOML syntax, flat keys).
//!
//! A simulation file describes both the architecture and the workload:
//!
//! ```toml
//! banks = 16
//! bank_size = "8kB"
//! variant = "pc3"            # fla | pc2 | pc3
//! truncate = true
//! datatype = "bfloat16"      # bfloat16 | float32
//! clock_hz = 1e9
//! regfile_entries_per_bank = 4       # optional
//! scratchpad_inputs_per_cycle = 16   # optional, defaults to `banks`
//!
//! workload = "conv"          # conv | gemm
//! h = 224                    # conv: h w cin cout kh kw [stride=1] [pad=0]
//! w = 224                    # gemm: m k n
//! cin = 3
//! cout = 64
//! kh = 3
//! kw = 3
//! stride = 1
//! pad = 1
//! ```
//!
//! A cost file lists every [`CostConfig`] field plus `provenance`.

use std::path::Path;

use serde::Deserialize;

use crate::accel_sim::{ArchConfig, Workload};
use crate::cost_model::CostConfig;
use crate::error::{Error, Result};
use crate::fp_mul::FpFormat;
use crate::pp_core::{MulConfig, Variant};
use crate::sram_layout::{BankGeometry, BankSize};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub banks: u32,
    pub bank_size: String,
    pub variant: String,
    #[serde(default)]
    pub truncate: bool,
    pub datatype: String,
    pub clock_hz: f64,
    pub regfile_entries_per_bank: Option<u32>,
    pub scratchpad_inputs_per_cycle: Option<u32>,

    pub workload: String,
    pub m: Option<u64>,
    pub k: Option<u64>,
    pub n: Option<u64>,
    pub h: Option<u64>,
    pub w: Option<u64>,
    pub cin: Option<u64>,
    pub cout: Option<u64>,
    pub kh: Option<u64>,
    pub kw: Option<u64>,
    pub stride: Option<u64>,
    pub pad: Option<u64>,
}

fn required(field: &'static str, v: Option<u64>, workload: &str) -> Result<u64> {
    v.ok_or_else(|| Error::Config(format!("missing field `{field}` for workload `{workload}`")))
}

impl SimFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn arch(&self) -> Result<ArchConfig> {
        let variant: Variant = self
            .variant
            .parse()
            .map_err(|e: String| Error::Config(format!("field `variant`: {e}")))?;
        let fmt = FpFormat::by_name(&self.datatype).ok_or_else(|| {
            Error::Config(format!(
                "field `datatype`: unknown format `{}` (expected bfloat16 or float32)",
                self.datatype
            ))
        })?;
        let size: BankSize = self
            .bank_size
            .parse()
            .map_err(|e: String| Error::Config(format!("field `bank_size`: {e}")))?;
        let bank = BankGeometry::square(size.0)?;
        let mul = MulConfig::new(variant, fmt.significand_bits(), true, self.truncate)?;
        let mut arch = ArchConfig {
            banks: self.banks,
            bank,
            mul,
            fmt,
            clock_hz: self.clock_hz,
            regfile_entries_per_bank: ArchConfig::DEFAULT_REGFILE_ENTRIES,
            scratchpad_inputs_per_cycle: self.banks,
        };
        if let Some(r) = self.regfile_entries_per_bank {
            arch.regfile_entries_per_bank = r;
        }
        if let Some(s) = self.scratchpad_inputs_per_cycle {
            arch.scratchpad_inputs_per_cycle = s;
        }
        arch.validate()?;
        Ok(arch)
    }

    pub fn workload(&self) -> Result<Workload> {
        let kind = self.workload.as_str();
        let w = match kind {
            "gemm" => Workload::Gemm {
                m: required("m", self.m, kind)?,
                k: required("k", self.k, kind)?,
                n: required("n", self.n, kind)?,
            },
            "conv" => Workload::Conv {
                h: required("h", self.h, kind)?,
                w: required("w", self.w, kind)?,
                cin: required("cin", self.cin, kind)?,
                cout: required("cout", self.cout, kind)?,
                kh: required("kh", self.kh, kind)?,
                kw: required("kw", self.kw, kind)?,
                stride: self.stride.unwrap_or(1),
                pad: self.pad.unwrap_or(0),
            },
            other => {
                return Err(Error::Config(format!(
                    "field `workload`: unknown kind `{other}` (expected conv or gemm)"
                )))
            }
        };
        w.lowered()?;
        Ok(w)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load_sim_config(path: &Path) -> Result<(ArchConfig, Workload)> {
    let file = SimFile::parse(&read(path)?)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))?;
    Ok((file.arch()?, file.workload()?))
}

pub fn parse_cost_config(text: &str) -> Result<CostConfig> {
    let cc: CostConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cc.validate()?;
    Ok(cc)
}

pub fn load_cost_config(path: &Path) -> Result<CostConfig> {
    parse_cost_config(&read(path)?).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(s) => s,
        other => other.to_string(),
    }
}
