//! Unsigned multiplication by wired-OR of partial products.
//!
//! The multiplicand is stored once per shift in SRAM wordlines; the multiplier
//! selects which wordlines are raised, and the bitlines return the OR of every
//! selected row instead of their sum. The precomputed-sum variants (PC2, PC3)
//! replace co-active top lines with a single line holding their exact sum.
//!
//! Partial products are named by letter from the most significant one down:
//! `A` is the multiplicand shifted by `n - 1`, `B` by `n - 2`, `C` by `n - 3`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_WIDTH: u32 = 2;
pub const MAX_WIDTH: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// Full lines activation: every selected partial product is ORed.
    Fla,
    /// Exact `A + B` stored on its own line.
    Pc2,
    /// Exact sums of every `A`-containing combination of `A`, `B`, `C`.
    Pc3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Fla, Variant::Pc2, Variant::Pc3];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fla => "FLA",
            Variant::Pc2 => "PC2",
            Variant::Pc3 => "PC3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fla" => Ok(Variant::Fla),
            "pc2" => Ok(Variant::Pc2),
            "pc3" => Ok(Variant::Pc3),
            other => Err(format!("unknown variant `{other}` (expected fla, pc2 or pc3)")),
        }
    }
}

/// A validated multiplier configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MulConfig {
    variant: Variant,
    truncate: bool,
    width: u32,
    fp_mode: bool,
}

impl MulConfig {
    /// Builds a configuration for `width`-bit operands.
    ///
    /// In `fp_mode` both operands carry a guaranteed 1 at bit `width - 1`
    /// (the hidden bit of a normal significand), which is what lets PC2 elide
    /// the `B` line and PC3 store only `A`-containing combinations.
    pub fn new(variant: Variant, width: u32, fp_mode: bool, truncate: bool) -> Result<Self> {
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&width) {
            return Err(Error::InvalidWidth(width));
        }
        let unsupported = |reason| Error::UnsupportedConfig {
            variant,
            mode: if fp_mode { "fp" } else { "integer" },
            width,
            reason,
        };
        match (variant, fp_mode) {
            (Variant::Pc3, false) => {
                return Err(unsupported("storage of integer PC3 lines is undefined"))
            }
            (Variant::Pc3, true) if width < 3 => {
                return Err(unsupported("PC3 needs three partial products"))
            }
            // The repurposed shift-0 slot would be the B line itself.
            (Variant::Pc2, false) if width < 3 => {
                return Err(unsupported("integer PC2 needs a shift-0 slot distinct from B"))
            }
            _ => {}
        }
        Ok(Self {
            variant,
            truncate,
            width,
            fp_mode,
        })
    }

    /// Every configuration `new` accepts at this width, in a fixed order.
    pub fn all_supported(width: u32) -> Vec<MulConfig> {
        let mut out = Vec::new();
        for fp_mode in [false, true] {
            for variant in Variant::ALL {
                for truncate in [false, true] {
                    if let Ok(c) = MulConfig::new(variant, width, fp_mode, truncate) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn truncate(&self) -> bool {
        self.truncate
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn fp_mode(&self) -> bool {
        self.fp_mode
    }

    /// Short label such as `PC3_tr`.
    pub fn label(&self) -> String {
        if self.truncate {
            format!("{}_tr", self.variant)
        } else {
            self.variant.to_string()
        }
    }

    /// Mask keeping product columns `2n-1..n` when truncating, all `2n` otherwise.
    pub fn result_mask(&self) -> u64 {
        let full = u64::MAX >> (64 - 2 * self.width);
        if self.truncate {
            full & !((1u64 << self.width) - 1)
        } else {
            full
        }
    }

    pub fn check_operand(&self, value: u64) -> Result<()> {
        if value >> self.width != 0 {
            return Err(Error::OperandOutOfRange {
                value,
                width: self.width,
            });
        }
        let top = self.width - 1;
        if self.fp_mode && (value >> top) & 1 == 0 {
            return Err(Error::MissingHiddenBit { value, bit: top });
        }
        Ok(())
    }

    /// Shift of the partial product named by `letter` (0 = A, 1 = B, 2 = C).
    fn lead_shift(&self, letter: u32) -> u32 {
        self.width - 1 - letter
    }
}

impl fmt::Display for MulConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = if self.fp_mode { "fp" } else { "int" };
        write!(f, "{} {} n={}", self.label(), mode, self.width)
    }
}

/// A nonempty subset of the three leading partial products `A`, `B`, `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeadSet(u8);

impl LeadSet {
    pub const A: u8 = 0b001;
    pub const B: u8 = 0b010;
    pub const C: u8 = 0b100;
    pub const AB: LeadSet = LeadSet(Self::A | Self::B);
    pub const AC: LeadSet = LeadSet(Self::A | Self::C);
    pub const ABC: LeadSet = LeadSet(Self::A | Self::B | Self::C);

    pub fn new(mask: u8) -> Option<Self> {
        (mask != 0 && mask & !0b111 == 0).then_some(LeadSet(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Letter indices in the set, `A` first.
    pub fn letters(self) -> impl Iterator<Item = u32> {
        (0..3).filter(move |i| self.0 >> i & 1 == 1)
    }
}

impl fmt::Display for LeadSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.letters() {
            write!(f, "{}", (b'A' + i as u8) as char)?;
        }
        Ok(())
    }
}

impl Serialize for LeadSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One physical wordline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LineId {
    /// The multiplicand shifted left by the given amount.
    Single(u32),
    /// The exact sum of the named leading partial products.
    Combo(LeadSet),
}

impl LineId {
    /// Value stored on this line for multiplicand `a`.
    pub fn value(self, a: u64, config: &MulConfig) -> u64 {
        match self {
            LineId::Single(shift) => a << shift,
            LineId::Combo(set) => set.letters().map(|l| a << config.lead_shift(l)).sum(),
        }
    }

    /// Conventional name: `A`..`Z` for singles, `AB`/`AC`/`ABC` for combos.
    pub fn label(self, config: &MulConfig) -> String {
        match self {
            LineId::Single(shift) => {
                let letter = config.width - 1 - shift;
                if letter < 26 {
                    ((b'A' + letter as u8) as char).to_string()
                } else {
                    format!("s{shift}")
                }
            }
            LineId::Combo(set) => set.to_string(),
        }
    }
}

/// Wordlines raised for one multiplication.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LineSet {
    /// Combo line first (if any), then singles by descending shift.
    pub lines: Vec<LineId>,
    /// Multiplier bits that were set but whose partial product has no readable line.
    pub dropped_bits: Vec<u32>,
}

impl LineSet {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn combo(&self) -> Option<LeadSet> {
        self.lines.iter().find_map(|l| match l {
            LineId::Combo(set) => Some(*set),
            LineId::Single(_) => None,
        })
    }

    /// Wired-OR of every line for multiplicand `a`, before any truncation.
    pub fn read(&self, a: u64, config: &MulConfig) -> u64 {
        self.lines.iter().fold(0, |acc, l| acc | l.value(a, config))
    }
}

/// Partial products `(shift, a << shift)` for every set bit of `b`, highest first.
pub fn generate_pps(a: u64, b: u64, config: &MulConfig) -> Result<Vec<(u32, u64)>> {
    config.check_operand(a)?;
    config.check_operand(b)?;
    Ok((0..config.width)
        .rev()
        .filter(|s| b >> s & 1 == 1)
        .map(|s| (s, a << s))
        .collect())
}

/// Address-decoder model: which wordlines multiplier `b` raises.
pub fn decode_lines(b: u64, config: &MulConfig) -> Result<LineSet> {
    config.check_operand(b)?;
    let n = config.width;
    let bit = |s: u32| b >> s & 1 == 1;
    let singles_below = |top: u32, floor: u32| {
        (floor..top)
            .rev()
            .filter(move |&s| bit(s))
            .map(LineId::Single)
    };

    let mut set = LineSet::default();
    match (config.variant, config.fp_mode) {
        (Variant::Fla, _) => set.lines.extend(singles_below(n, 0)),
        (Variant::Pc2, true) => {
            // A is always active; the B line itself is never stored.
            set.lines.push(if bit(n - 2) {
                LineId::Combo(LeadSet::AB)
            } else {
                LineId::Single(n - 1)
            });
            set.lines.extend(singles_below(n - 2, 0));
        }
        (Variant::Pc2, false) => {
            match (bit(n - 1), bit(n - 2)) {
                (true, true) => set.lines.push(LineId::Combo(LeadSet::AB)),
                (a_on, b_on) => {
                    if a_on {
                        set.lines.push(LineId::Single(n - 1));
                    }
                    if b_on {
                        set.lines.push(LineId::Single(n - 2));
                    }
                }
            }
            // Shift-0 slot stores A+B, so the H partial product is unreadable.
            set.lines.extend(singles_below(n - 2, 1));
            if bit(0) {
                set.dropped_bits.push(0);
            }
        }
        (Variant::Pc3, true) => {
            let lead = match (bit(n - 2), bit(n - 3)) {
                (false, false) => LineId::Single(n - 1),
                (true, false) => LineId::Combo(LeadSet::AB),
                (false, true) => LineId::Combo(LeadSet::AC),
                (true, true) => LineId::Combo(LeadSet::ABC),
            };
            set.lines.push(lead);
            set.lines.extend(singles_below(n - 3, 0));
        }
        (Variant::Pc3, false) => unreachable!("rejected by MulConfig::new"),
    }
    Ok(set)
}

/// Approximate product of stored multiplicand `a` and wordline-selecting multiplier `b`.
pub fn approx_mul(a: u64, b: u64, config: &MulConfig) -> Result<u64> {
    config.check_operand(a)?;
    let lines = decode_lines(b, config)?;
    Ok(lines.read(a, config) & config.result_mask())
}

pub fn exact_mul(a: u64, b: u64) -> u64 {
    a * b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: Variant, n: u32, fp: bool, tr: bool) -> MulConfig {
        MulConfig::new(v, n, fp, tr).unwrap()
    }

    #[test]
    fn pps_for_fig2_operands() {
        let c = cfg(Variant::Fla, 4, false, false);
        assert_eq!(
            generate_pps(0b1011, 0b0101, &c).unwrap(),
            vec![(2, 0b101100), (0, 0b1011)]
        );
        assert!(generate_pps(0b1011, 0, &c).unwrap().is_empty());
        let c2 = cfg(Variant::Fla, 2, false, false);
        assert_eq!(generate_pps(0b11, 0b10, &c2).unwrap(), vec![(1, 0b110)]);
    }

    #[test]
    fn operand_range_checked() {
        let c = cfg(Variant::Fla, 4, false, false);
        assert!(matches!(
            generate_pps(16, 1, &c),
            Err(Error::OperandOutOfRange { .. })
        ));
        let fp = cfg(Variant::Pc2, 8, true, false);
        assert!(matches!(
            approx_mul(0x80, 0x7F, &fp),
            Err(Error::MissingHiddenBit { bit: 7, .. })
        ));
    }

    #[test]
    fn config_gates() {
        assert!(matches!(
            MulConfig::new(Variant::Pc3, 8, false, false),
            Err(Error::UnsupportedConfig { .. })
        ));
        assert_eq!(MulConfig::new(Variant::Fla, 1, false, false), Err(Error::InvalidWidth(1)));
        assert_eq!(MulConfig::new(Variant::Fla, 33, false, false), Err(Error::InvalidWidth(33)));
        assert!(MulConfig::new(Variant::Pc2, 2, false, false).is_err());
        assert!(MulConfig::new(Variant::Pc2, 2, true, false).is_ok());
        assert!(MulConfig::new(Variant::Pc3, 2, true, false).is_err());
        assert!(MulConfig::new(Variant::Fla, 32, false, true).is_ok());
    }

    #[test]
    fn decode_pc3_selection() {
        let c = cfg(Variant::Pc3, 8, true, false);
        let set = decode_lines(0b1100_0101, &c).unwrap();
        assert_eq!(
            set.lines,
            vec![
                LineId::Combo(LeadSet::AB),
                LineId::Single(2),
                LineId::Single(0)
            ]
        );
        assert_eq!(LineId::Combo(LeadSet::AB).value(0xAB, &c), (0xAB << 7) + (0xAB << 6));
        for (b, lead) in [
            (0b1000_0000, LineId::Single(7)),
            (0b1100_0000, LineId::Combo(LeadSet::AB)),
            (0b1010_0000, LineId::Combo(LeadSet::AC)),
            (0b1110_0000, LineId::Combo(LeadSet::ABC)),
        ] {
            assert_eq!(decode_lines(b, &c).unwrap().lines, vec![lead]);
        }
    }

    #[test]
    fn decode_pc2() {
        let fp = cfg(Variant::Pc2, 8, true, false);
        assert_eq!(decode_lines(0b1000_0000, &fp).unwrap().lines, vec![LineId::Single(7)]);
        let all = decode_lines(0xFF, &fp).unwrap();
        assert!(!all.lines.contains(&LineId::Single(6)));
        assert_eq!(all.len(), 7);

        let int = cfg(Variant::Pc2, 4, false, false);
        let set = decode_lines(0b1111, &int).unwrap();
        assert_eq!(set.lines, vec![LineId::Combo(LeadSet::AB), LineId::Single(1)]);
        assert_eq!(set.dropped_bits, vec![0]);
        let set = decode_lines(0b0100, &int).unwrap();
        assert_eq!(set.lines, vec![LineId::Single(2)]);
        assert!(set.dropped_bits.is_empty());
    }

    #[test]
    fn approx_examples() {
        let fla4 = cfg(Variant::Fla, 4, false, false);
        assert_eq!(approx_mul(0b1011, 0b0101, &fla4).unwrap(), 0b101111);
        assert_eq!(exact_mul(0b1011, 0b0101), 55);

        let fla = cfg(Variant::Fla, 8, true, false);
        let pc2 = cfg(Variant::Pc2, 8, true, false);
        assert_eq!(approx_mul(0b1100_0000, 0b1100_0000, &fla).unwrap(), 28672);
        assert_eq!(approx_mul(0b1100_0000, 0b1100_0000, &pc2).unwrap(), 36864);
        assert_eq!(exact_mul(192, 192), 36864);

        let fla_tr = cfg(Variant::Fla, 8, true, true);
        // 129<<7 | 129 leaves column 7 set, which truncation clears
        assert_eq!(approx_mul(0b1000_0001, 0b1000_0001, &fla).unwrap(), 16513);
        assert_eq!(approx_mul(0b1000_0001, 0b1000_0001, &fla_tr).unwrap(), 16384);
        assert_eq!(exact_mul(129, 129) & fla_tr.result_mask(), 16640);
    }

    #[test]
    fn line_counts_bounded() {
        for (v, bound) in [(Variant::Fla, 8), (Variant::Pc2, 7), (Variant::Pc3, 6)] {
            let c = cfg(v, 8, true, false);
            for b in 0x80..=0xFFu64 {
                let set = decode_lines(b, &c).unwrap();
                assert!(set.len() <= bound, "{c} b={b:#b}");
                assert!(set.lines.iter().filter(|l| matches!(l, LineId::Combo(_))).count() <= 1);
            }
        }
    }

    #[test]
    fn labels() {
        let c = cfg(Variant::Pc3, 8, true, true);
        assert_eq!(c.label(), "PC3_tr");
        assert_eq!(LineId::Single(7).label(&c), "A");
        assert_eq!(LineId::Single(0).label(&c), "H");
        assert_eq!(LineId::Combo(LeadSet::ABC).label(&c), "ABC");
        assert_eq!("Pc2".parse::<Variant>().unwrap(), Variant::Pc2);
    }

    #[test]
    fn full_width_mask() {
        let c = cfg(Variant::Fla, 32, false, true);
        assert_eq!(c.result_mask(), 0xFFFF_FFFF_0000_0000);
        let full = u32::MAX as u64;
        assert_eq!(approx_mul(full, 1, &c).unwrap(), 0);
        let c = cfg(Variant::Fla, 32, false, false);
        assert_eq!(approx_mul(full, 1 << 31, &c).unwrap(), full << 31);
    }
}
