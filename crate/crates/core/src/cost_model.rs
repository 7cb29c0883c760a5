//! Energy and area accounting over simulator access counts.
//!
//! All per-event energies and per-component areas are inputs. The crate ships
//! one illustrative [`CostConfig`] for demos; its numbers are placeholders.

use serde::{Deserialize, Serialize};

use crate::accel_sim::{ArchConfig, SimReport};
use crate::error::{Error, Result};
use crate::sram_layout::KernelLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Joules per multi-wordline row-group read.
    pub sram_read_per_row_access: f64,
    pub regfile_read: f64,
    /// Joules per scratchpad read or write.
    pub scratchpad_access: f64,
    pub decoder_op: f64,
    pub accumulator_add: f64,
    /// Joules per exponent add/realign, one per product.
    pub exponent_op: f64,
    /// mm^2 per SRAM bit cell.
    pub sram_per_bit: f64,
    pub pe_logic_per_column: f64,
    pub decoder_per_bank: f64,
    pub accumulator_per_column: f64,
    /// Where the numbers came from.
    pub provenance: String,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidCost(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.provenance.trim().is_empty() {
            return Err(Error::InvalidCost("provenance must name the source of the numbers".into()));
        }
        Ok(())
    }

    fn entries(&self) -> [(&'static str, f64); 10] {
        [
            ("sram_read_per_row_access", self.sram_read_per_row_access),
            ("regfile_read", self.regfile_read),
            ("scratchpad_access", self.scratchpad_access),
            ("decoder_op", self.decoder_op),
            ("accumulator_add", self.accumulator_add),
            ("exponent_op", self.exponent_op),
            ("sram_per_bit", self.sram_per_bit),
            ("pe_logic_per_column", self.pe_logic_per_column),
            ("decoder_per_bank", self.decoder_per_bank),
            ("accumulator_per_column", self.accumulator_per_column),
        ]
    }

    /// Every numeric entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> CostConfig {
        CostConfig {
            sram_read_per_row_access: self.sram_read_per_row_access * c,
            regfile_read: self.regfile_read * c,
            scratchpad_access: self.scratchpad_access * c,
            decoder_op: self.decoder_op * c,
            accumulator_add: self.accumulator_add * c,
            exponent_op: self.exponent_op * c,
            sram_per_bit: self.sram_per_bit * c,
            pe_logic_per_column: self.pe_logic_per_column * c,
            decoder_per_bank: self.decoder_per_bank * c,
            accumulator_per_column: self.accumulator_per_column * c,
            provenance: self.provenance.clone(),
        }
    }

    pub fn zero() -> CostConfig {
        CostConfig {
            provenance: "all-zero".into(),
            ..Self::illustrative().scaled(0.0)
        }
    }

    /// Placeholder values of plausible relative magnitude; not measurements.
    pub fn illustrative() -> CostConfig {
        CostConfig {
            sram_read_per_row_access: 20e-12,
            regfile_read: 0.5e-12,
            scratchpad_access: 2e-12,
            decoder_op: 0.05e-12,
            accumulator_add: 0.4e-12,
            exponent_op: 0.2e-12,
            sram_per_bit: 0.6e-6,
            pe_logic_per_column: 1.5e-3,
            decoder_per_bank: 2e-3,
            accumulator_per_column: 1e-3,
            provenance: "illustrative placeholder values, not measured or synthesized".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub sram_read: f64,
    pub regfile: f64,
    pub scratchpad: f64,
    pub decoder: f64,
    pub accumulator: f64,
    pub exponent: f64,
}

impl EnergyBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("sram_read", self.sram_read),
            ("regfile", self.regfile),
            ("scratchpad", self.scratchpad),
            ("decoder", self.decoder),
            ("accumulator", self.accumulator),
            ("exponent", self.exponent),
        ]
    }

    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, v)| v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaBreakdown {
    pub sram: f64,
    pub pe_logic: f64,
    pub accumulator: f64,
    pub decoder: f64,
}

impl AreaBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("sram", self.sram),
            ("pe_logic", self.pe_logic),
            ("accumulator", self.accumulator),
            ("decoder", self.decoder),
        ]
    }

    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, v)| v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub energy: EnergyBreakdown,
    pub total_energy: f64,
    pub energy_per_mac: f64,
    pub area: Option<AreaBreakdown>,
    pub total_area: Option<f64>,
    pub decoder_share: f64,
}

impl CostReport {
    pub fn with_area(mut self, area: AreaBreakdown) -> Self {
        self.total_area = Some(area.total());
        self.area = Some(area);
        self
    }
}

/// Linear accounting of every access count times its per-event energy.
pub fn energy_report(sim: &SimReport, cc: &CostConfig) -> CostReport {
    let a = &sim.access_counts;
    let energy = EnergyBreakdown {
        sram_read: a.sram_compute_read as f64 * cc.sram_read_per_row_access,
        regfile: a.regfile_read as f64 * cc.regfile_read,
        scratchpad: (a.scratchpad_read + a.scratchpad_write) as f64 * cc.scratchpad_access,
        decoder: a.decoder_op as f64 * cc.decoder_op,
        accumulator: a.accumulator_add as f64 * cc.accumulator_add,
        exponent: sim.useful_macs as f64 * cc.exponent_op,
    };
    let total = energy.total();
    CostReport {
        energy,
        total_energy: total,
        energy_per_mac: if sim.useful_macs == 0 {
            0.0
        } else {
            total / sim.useful_macs as f64
        },
        area: None,
        total_area: None,
        decoder_share: if total == 0.0 { 0.0 } else { energy.decoder / total },
    }
}

/// SRAM area scales with rows x cols of every bank; PE, accumulator and
/// exponent logic scale with the PE column count.
pub fn area_report(arch: &ArchConfig, cc: &CostConfig) -> Result<AreaBreakdown> {
    let banks = arch.banks as f64;
    let columns = arch.layout()?.elements_per_row_group as f64;
    Ok(AreaBreakdown {
        sram: banks * arch.bank.bits() as f64 * cc.sram_per_bit,
        pe_logic: banks * columns * cc.pe_logic_per_column,
        accumulator: banks * columns * cc.accumulator_per_column,
        decoder: banks * cc.decoder_per_bank,
    })
}

/// Energy of a reference multiplier at another precision, obtained by
/// scaling a known one with the ratio of two simulated energies and a factor `t`.
pub fn scale_baseline(e32: f64, e_sim16: f64, e_sim32: f64, t: f64) -> Result<f64> {
    if e_sim32.is_nan() || e_sim32 <= 0.0 {
        return Err(Error::NonPositive {
            name: "e_sim32",
            value: e_sim32,
        });
    }
    if t.is_nan() || t <= 0.0 {
        return Err(Error::NonPositive { name: "t", value: t });
    }
    Ok(e32 * (e_sim16 / e_sim32) * t)
}

/// Multiplications served by one row-group read.
pub fn computations_per_read(layout: &KernelLayout) -> u32 {
    layout.elements_per_row_group
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel_sim::{build_mapping, simulate, AccessCounts, Workload};
    use crate::fp_mul::BFLOAT16;
    use crate::pp_core::{MulConfig, Variant};
    use crate::sram_layout::{pack_bank, BankGeometry};

    fn arch(banks: u32, kb: u64) -> ArchConfig {
        let mul = MulConfig::new(Variant::Pc3, 8, true, true).unwrap();
        ArchConfig::new(banks, BankGeometry::square(kb * 1024).unwrap(), mul, BFLOAT16, 1e9).unwrap()
    }

    fn one_mac() -> SimReport {
        SimReport {
            cycles: 1,
            useful_macs: 1,
            pe_count: 32,
            utilization: 1.0 / 32.0,
            access_counts: AccessCounts {
                sram_compute_read: 1,
                regfile_read: 1,
                scratchpad_read: 1,
                scratchpad_write: 1,
                decoder_op: 1,
                accumulator_add: 1,
            },
            sustained_gops: 0.0625,
        }
    }

    fn unit_config() -> CostConfig {
        CostConfig {
            sram_read_per_row_access: 1.0,
            regfile_read: 1.0,
            scratchpad_access: 1.0,
            decoder_op: 1.0,
            accumulator_add: 1.0,
            exponent_op: 1.0,
            sram_per_bit: 1.0,
            pe_logic_per_column: 1.0,
            decoder_per_bank: 1.0,
            accumulator_per_column: 1.0,
            provenance: "unit".into(),
        }
    }

    #[test]
    fn zero_config() {
        let r = energy_report(&one_mac(), &CostConfig::zero());
        assert_eq!(r.total_energy, 0.0);
        assert!(r.energy.components().iter().all(|(_, v)| *v == 0.0));
        assert_eq!(r.decoder_share, 0.0);
        let area = area_report(&arch(4, 8), &CostConfig::zero()).unwrap();
        assert_eq!(area.total(), 0.0);
    }

    #[test]
    fn unit_energies_sum_counts() {
        let sim = one_mac();
        let r = energy_report(&sim, &unit_config());
        let a = sim.access_counts;
        let counts = a.sram_compute_read
            + a.regfile_read
            + a.scratchpad_read
            + a.scratchpad_write
            + a.decoder_op
            + a.accumulator_add
            + sim.useful_macs;
        assert_eq!(r.total_energy, counts as f64);
        assert_eq!(r.energy_per_mac, counts as f64);
    }

    #[test]
    fn validation() {
        assert!(CostConfig::illustrative().validate().is_ok());
        let mut c = CostConfig::illustrative();
        c.provenance = "  ".into();
        assert!(c.validate().is_err());
        let mut c = CostConfig::illustrative();
        c.decoder_op = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn baseline_scaling() {
        assert_eq!(scale_baseline(3.7e-12, 0.3, 0.3, 1.0).unwrap(), 3.7e-12);
        assert_eq!(scale_baseline(10.0, 2.0, 4.0, 1.0).unwrap(), 5.0);
        assert_eq!(scale_baseline(10.0, 2.0, 4.0, 0.5).unwrap(), 2.5);
        assert!(scale_baseline(10.0, 2.0, 0.0, 1.0).is_err());
        assert!(scale_baseline(10.0, 2.0, 4.0, -1.0).is_err());
    }

    #[test]
    fn area_scaling() {
        let cc = CostConfig::illustrative();
        let small = area_report(&arch(16, 8), &cc).unwrap();
        let wide = area_report(&arch(16, 32), &cc).unwrap();
        assert_eq!(wide.sram, small.sram * 4.0);
        assert_eq!(wide.pe_logic, small.pe_logic * 2.0);
        assert_eq!(wide.accumulator, small.accumulator * 2.0);
        assert_eq!(wide.decoder, small.decoder);
        let double = area_report(&arch(32, 8), &cc).unwrap();
        for ((_, d), (_, s)) in double.components().iter().zip(small.components()) {
            assert_eq!(*d, s * 2.0);
        }
    }

    #[test]
    fn computations_per_read_doubles() {
        let g = BankGeometry::square(512 * 1024).unwrap();
        let tr = MulConfig::new(Variant::Pc3, 8, true, true).unwrap();
        let full = MulConfig::new(Variant::Pc3, 8, true, false).unwrap();
        let a = computations_per_read(&pack_bank(&g, &tr, &BFLOAT16).unwrap());
        let b = computations_per_read(&pack_bank(&g, &full, &BFLOAT16).unwrap());
        assert_eq!((a, b), (256, 128));
    }

    #[test]
    fn decoder_share_small_for_vgg8() {
        let a = arch(16, 8);
        let w = Workload::vgg8_layer1();
        let sim = simulate(&a, &w, &build_mapping(&a, &w).unwrap()).unwrap();
        let r = energy_report(&sim, &CostConfig::illustrative());
        assert!(r.decoder_share < 0.005, "{}", r.decoder_share);
        assert!(r.decoder_share > 0.0);
    }

    #[test]
    fn config_parses_from_key_value_text() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/illustrative_cost.toml"
        ))
        .unwrap();
        let cc: CostConfig = toml::from_str(&text).unwrap();
        assert_eq!(cc, CostConfig::illustrative());
    }
}
