//! Brute-force reference multiplier.
//!
//! Nothing here calls into `pp_core` beyond reading the configuration fields;
//! the variant semantics are rebuilt from the storage description so the two
//! implementations can disagree if either one is wrong.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pp_core::{approx_mul, MulConfig, Variant};

pub const EXHAUSTIVE_LIMIT: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub a: u64,
    pub b: u64,
    pub got: u64,
    pub expected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub config: MulConfig,
    pub pairs_checked: u64,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn in_domain(v: u64, n: u32, fp: bool) -> bool {
    let fits = v < (1u64 << n);
    let hidden = !fp || v & (1u64 << (n - 1)) != 0;
    fits && hidden
}

/// Reference OR-multiplier.
///
/// Multiplier bits covered by a precomputed group (the top two for PC2, the
/// top three for PC3) drive exactly one line whose content is the exact
/// product of `a` with those bits. Every other set bit contributes `a << i`.
/// Integer PC2 loses bit 0 because that slot holds the `A+B` line.
pub fn oracle_or_mul(a: u64, b: u64, config: &MulConfig) -> Result<u64> {
    let n = config.width();
    let fp = config.fp_mode();
    for v in [a, b] {
        if !in_domain(v, n, fp) {
            return Err(if v >= (1u64 << n) {
                Error::OperandOutOfRange { value: v, width: n }
            } else {
                Error::MissingHiddenBit { value: v, bit: n - 1 }
            });
        }
    }

    let grouped = match config.variant() {
        Variant::Fla => 0,
        Variant::Pc2 => 2,
        Variant::Pc3 => 3,
    };
    let group_floor = n - grouped;
    let lost_bit = (config.variant() == Variant::Pc2 && !fp).then_some(0u32);

    let mut result = 0u64;
    for i in 0..n {
        if b & (1u64 << i) == 0 || i >= group_floor || Some(i) == lost_bit {
            continue;
        }
        result |= a * (1u64 << i);
    }
    if grouped > 0 {
        let group_bits = b & !((1u64 << group_floor) - 1);
        result |= a * group_bits;
    }

    if config.truncate() {
        result = (result >> n) << n;
    }
    Ok(result)
}

fn domain(n: u32, fp: bool) -> std::ops::Range<u64> {
    if fp {
        (1u64 << (n - 1))..(1u64 << n)
    } else {
        0..(1u64 << n)
    }
}

/// Checks `approx_mul` against `oracle_or_mul` on every valid operand pair.
pub fn exhaustive_compare(config: &MulConfig) -> Result<OracleReport> {
    let n = config.width();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::SweepTooLarge {
            width: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut report = OracleReport {
        config: *config,
        pairs_checked: 0,
        mismatches: Vec::new(),
    };
    for a in domain(n, config.fp_mode()) {
        for b in domain(n, config.fp_mode()) {
            let got = approx_mul(a, b, config)?;
            let expected = oracle_or_mul(a, b, config)?;
            report.pairs_checked += 1;
            if got != expected {
                report.mismatches.push(Mismatch { a, b, got, expected });
            }
        }
    }
    Ok(report)
}

/// Exhaustive comparison for every supported configuration at widths `2..=max_width`.
pub fn exhaustive_suite(max_width: u32) -> Result<Vec<OracleReport>> {
    let mut reports = Vec::new();
    for n in 2..=max_width {
        for config in MulConfig::all_supported(n) {
            reports.push(exhaustive_compare(&config)?);
        }
    }
    Ok(reports)
}
