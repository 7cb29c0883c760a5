//! Wordline allocation and kernel packing into square SRAM banks.
//!
//! Each kernel element occupies a row-group: its partial-product lines stacked
//! vertically, `product_width_bits` columns wide. Elements sharing a row-group
//! sit side by side and see the same multiplier on every read.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp_mul::FpFormat;
use crate::pp_core::{decode_lines, MulConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BankGeometry {
    pub size_bytes: u64,
    pub rows: u32,
    /// Bit columns.
    pub cols: u32,
}

impl BankGeometry {
    /// A square bank of `size_bytes`; the bit count must be a power of four.
    pub fn square(size_bytes: u64) -> Result<Self> {
        let bits = size_bytes.checked_mul(8).filter(|b| b.is_power_of_two());
        match bits {
            Some(bits) if bits.trailing_zeros() % 2 == 0 => {
                let side = 1u32 << (bits.trailing_zeros() / 2);
                Ok(BankGeometry {
                    size_bytes,
                    rows: side,
                    cols: side,
                })
            }
            _ => Err(Error::NonSquareBank { size_bytes }),
        }
    }

    pub fn from_dims(rows: u32, cols: u32) -> Result<Self> {
        let size_bytes = rows as u64 * cols as u64 / 8;
        let geom = Self::square(size_bytes)?;
        if geom.rows != rows || geom.cols != cols {
            return Err(Error::NonSquareBank { size_bytes });
        }
        Ok(geom)
    }

    pub fn bits(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

/// Parsed bank size such as `8kB`, `512KB` or `8192`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankSize(pub u64);

impl FromStr for BankSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let (digits, scale) = if let Some(d) = lower.strip_suffix("kb") {
            (d, 1024)
        } else if let Some(d) = lower.strip_suffix("mb") {
            (d, 1024 * 1024)
        } else if let Some(d) = lower.strip_suffix('b') {
            (d, 1)
        } else {
            (lower.as_str(), 1)
        };
        let n: u64 = digits
            .trim()
            .parse()
            .map_err(|_| format!("invalid bank size `{t}` (expected e.g. 8kB, 512kB, 8192)"))?;
        Ok(BankSize(n * scale))
    }
}

impl fmt::Display for BankSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(1024 * 1024) {
            write!(f, "{}MB", self.0 / (1024 * 1024))
        } else if self.0.is_multiple_of(1024) {
            write!(f, "{}kB", self.0 / 1024)
        } else {
            write!(f, "{}B", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct KernelLayout {
    pub product_width_bits: u32,
    pub lines_per_element: u32,
    pub rows_per_group: u32,
    pub elements_per_row_group: u32,
    pub row_groups: u32,
    pub capacity_elements: u64,
    pub unused_bits: u64,
}

/// Physical wordlines one stored element needs.
pub fn lines_required(config: &MulConfig) -> u32 {
    let n = config.width();
    match (config.variant(), config.fp_mode()) {
        (Variant::Fla, _) => n,
        // A, AB, then C.. (B elided)
        (Variant::Pc2, true) => n,
        // shift-0 slot repurposed for AB
        (Variant::Pc2, false) => n,
        // A, AB, AC, ABC, then D..
        (Variant::Pc3, true) => 4 + (n - 3),
        (Variant::Pc3, false) => unreachable!("rejected by MulConfig::new"),
    }
}

pub fn product_width_bits(config: &MulConfig) -> u32 {
    if config.truncate() {
        config.width()
    } else {
        2 * config.width()
    }
}

pub fn pack_bank(geom: &BankGeometry, config: &MulConfig, fmt: &FpFormat) -> Result<KernelLayout> {
    if config.width() != fmt.significand_bits() {
        return Err(Error::FormatMismatch {
            format: fmt.name.to_string(),
            expected: fmt.significand_bits(),
            got: config.width(),
            fp_mode: config.fp_mode(),
        });
    }
    let product_width = product_width_bits(config);
    let lines = lines_required(config);
    let rows_per_group = lines.next_power_of_two();
    if geom.cols < product_width || geom.rows < rows_per_group {
        return Err(Error::BankTooSmall {
            rows: geom.rows,
            cols: geom.cols,
            needed_rows: rows_per_group,
            needed_cols: product_width,
        });
    }
    let elements_per_row_group = geom.cols / product_width;
    let row_groups = geom.rows / rows_per_group;
    let capacity = elements_per_row_group as u64 * row_groups as u64;
    let stored_bits = capacity * product_width as u64 * lines as u64;
    Ok(KernelLayout {
        product_width_bits: product_width,
        lines_per_element: lines,
        rows_per_group,
        elements_per_row_group,
        row_groups,
        capacity_elements: capacity,
        unused_bits: geom.bits() - stored_bits,
    })
}

/// Number of wordlines raised simultaneously for multiplier `b`.
pub fn activation_count(b: u64, config: &MulConfig) -> Result<u32> {
    Ok(decode_lines(b, config)?.len() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp_mul::{BFLOAT16, FLOAT32};

    fn cfg(v: Variant, n: u32, fp: bool, tr: bool) -> MulConfig {
        MulConfig::new(v, n, fp, tr).unwrap()
    }

    #[test]
    fn geometry() {
        let g = BankGeometry::square(512 * 1024).unwrap();
        assert_eq!((g.rows, g.cols), (2048, 2048));
        let g = BankGeometry::square(8 * 1024).unwrap();
        assert_eq!((g.rows, g.cols), (256, 256));
        assert_eq!(BankGeometry::square(32 * 1024).unwrap().cols, 512);
        assert!(BankGeometry::square(4 * 1024).is_err());
        assert!(BankGeometry::square(3000).is_err());
        assert!(BankGeometry::from_dims(256, 512).is_err());
        assert_eq!(BankGeometry::from_dims(256, 256).unwrap().size_bytes, 8192);
    }

    #[test]
    fn bank_size_parse() {
        assert_eq!("512kB".parse::<BankSize>().unwrap(), BankSize(524288));
        assert_eq!("8KB".parse::<BankSize>().unwrap(), BankSize(8192));
        assert_eq!("8192".parse::<BankSize>().unwrap(), BankSize(8192));
        assert!("eight".parse::<BankSize>().is_err());
        assert_eq!(BankSize(32768).to_string(), "32kB");
    }

    #[test]
    fn line_counts() {
        assert_eq!(lines_required(&cfg(Variant::Fla, 8, true, false)), 8);
        assert_eq!(lines_required(&cfg(Variant::Pc2, 8, true, false)), 8);
        assert_eq!(lines_required(&cfg(Variant::Pc2, 8, false, false)), 8);
        assert_eq!(lines_required(&cfg(Variant::Pc3, 8, true, false)), 9);
    }

    #[test]
    fn pc3_line_count_matches_distinct_lines() {
        // every distinct line the decoder can raise must have a physical slot
        for n in 3..=8 {
            let c = cfg(Variant::Pc3, n, true, false);
            let mut seen = std::collections::BTreeSet::new();
            for b in (1u64 << (n - 1))..(1u64 << n) {
                seen.extend(decode_lines(b, &c).unwrap().lines);
            }
            assert_eq!(seen.len() as u32, lines_required(&c), "n={n}");
        }
        let c = cfg(Variant::Pc2, 8, true, false);
        let mut seen = std::collections::BTreeSet::new();
        for b in 0x80..=0xFFu64 {
            seen.extend(decode_lines(b, &c).unwrap().lines);
        }
        assert_eq!(seen.len() as u32, lines_required(&c));
    }

    #[test]
    fn calibration_layouts() {
        let pc3_tr = cfg(Variant::Pc3, 8, true, true);
        let big = pack_bank(&BankGeometry::square(512 * 1024).unwrap(), &pc3_tr, &BFLOAT16).unwrap();
        assert_eq!(big.product_width_bits, 8);
        assert_eq!(big.rows_per_group, 16);
        assert_eq!((big.row_groups, big.elements_per_row_group), (128, 256));
        assert_eq!(big.capacity_elements, 32768);

        let small = pack_bank(&BankGeometry::square(8 * 1024).unwrap(), &pc3_tr, &BFLOAT16).unwrap();
        assert_eq!((small.row_groups, small.elements_per_row_group), (16, 32));
        assert_eq!(small.unused_bits, 256 * 256 - 16 * 32 * 8 * 9);

        let pc3 = cfg(Variant::Pc3, 8, true, false);
        let full = pack_bank(&BankGeometry::square(512 * 1024).unwrap(), &pc3, &BFLOAT16).unwrap();
        assert_eq!(full.elements_per_row_group, 128);
    }

    #[test]
    fn errors() {
        let pc3 = cfg(Variant::Pc3, 8, true, false);
        assert!(matches!(
            pack_bank(&BankGeometry::square(8 * 1024).unwrap(), &pc3, &FLOAT32),
            Err(Error::FormatMismatch { .. })
        ));
        let f32_full = cfg(Variant::Fla, 24, true, false);
        let tiny = BankGeometry::square(2 * 1024).unwrap();
        assert_eq!(tiny.cols, 128);
        let lay = pack_bank(&tiny, &f32_full, &FLOAT32).unwrap();
        assert_eq!(lay.elements_per_row_group, 2);
        let g = BankGeometry::square(8).unwrap();
        assert!(matches!(
            pack_bank(&g, &f32_full, &FLOAT32),
            Err(Error::BankTooSmall { .. })
        ));
    }

    #[test]
    fn activation_examples() {
        for v in Variant::ALL {
            assert_eq!(activation_count(0x80, &cfg(v, 8, true, false)).unwrap(), 1);
        }
        assert_eq!(activation_count(0xFF, &cfg(Variant::Fla, 8, true, false)).unwrap(), 8);
        assert_eq!(activation_count(0xFF, &cfg(Variant::Pc2, 8, true, false)).unwrap(), 7);
        assert_eq!(activation_count(0xFF, &cfg(Variant::Pc3, 8, true, false)).unwrap(), 6);
        assert_eq!(activation_count(0, &cfg(Variant::Fla, 8, false, false)).unwrap(), 0);
    }

    #[test]
    fn layout_json_fields() {
        let pc3_tr = cfg(Variant::Pc3, 8, true, true);
        let lay = pack_bank(&BankGeometry::square(8 * 1024).unwrap(), &pc3_tr, &BFLOAT16).unwrap();
        let v = serde_json::to_value(lay).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 7);
        for k in [
            "product_width_bits",
            "lines_per_element",
            "rows_per_group",
            "elements_per_row_group",
            "row_groups",
            "capacity_elements",
            "unused_bits",
        ] {
            assert!(keys.contains(&k.to_string()), "{k}");
        }
    }
}
