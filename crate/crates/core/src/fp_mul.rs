//! Floating-point multiplication on top of the approximate significand multiplier.
//!
//! Only the significands go through [`approx_mul`]; sign, exponent and special
//! values are handled exactly on the side. Subnormals are flushed to zero on
//! both input and output and every rounding step truncates toward zero.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pp_core::{approx_mul, MulConfig};

/// Largest significand width accepted for exhaustive error sweeps.
pub const EXHAUSTIVE_SIGNIFICAND_LIMIT: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FpFormat {
    pub name: &'static str,
    pub exponent_bits: u32,
    /// Stored mantissa bits, excluding the hidden 1.
    pub mantissa_bits: u32,
    pub bias: i32,
}

pub const BFLOAT16: FpFormat = FpFormat {
    name: "bfloat16",
    exponent_bits: 8,
    mantissa_bits: 7,
    bias: 127,
};

pub const FLOAT32: FpFormat = FpFormat {
    name: "float32",
    exponent_bits: 8,
    mantissa_bits: 23,
    bias: 127,
};

impl FpFormat {
    pub fn by_name(name: &str) -> Option<FpFormat> {
        match name.to_ascii_lowercase().as_str() {
            "bfloat16" | "bf16" => Some(BFLOAT16),
            "float32" | "fp32" | "f32" => Some(FLOAT32),
            _ => None,
        }
    }

    pub fn word_bits(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    /// Significand width `n`, hidden bit included.
    pub fn significand_bits(&self) -> u32 {
        self.mantissa_bits + 1
    }

    fn exp_all_ones(&self) -> u32 {
        (1 << self.exponent_bits) - 1
    }

    fn mantissa_mask(&self) -> u32 {
        (1 << self.mantissa_bits) - 1
    }

    fn sign_shift(&self) -> u32 {
        self.exponent_bits + self.mantissa_bits
    }

    /// Canonical quiet NaN.
    pub fn nan(&self) -> u32 {
        (self.exp_all_ones() << self.mantissa_bits) | (1 << (self.mantissa_bits - 1))
    }

    /// Converts an `f32` by dropping excess mantissa bits (round toward zero).
    pub fn from_f32(&self, x: f32) -> u32 {
        let v = decode(x.to_bits(), &FLOAT32);
        let v = match v.class {
            FpClass::Normal => {
                let (from, to) = (FLOAT32.mantissa_bits, self.mantissa_bits);
                let significand = if from >= to {
                    v.significand >> (from - to)
                } else {
                    v.significand << (to - from)
                };
                FpValue { significand, ..v }
            }
            _ => v,
        };
        encode(&v, self)
    }

    pub fn to_f64(&self, raw: u32) -> f64 {
        let v = decode(raw, self);
        let magnitude = match v.class {
            FpClass::Zero => 0.0,
            FpClass::Inf => f64::INFINITY,
            FpClass::NaN => return f64::NAN,
            FpClass::Normal => {
                v.significand as f64 * 2f64.powi(v.exponent - self.mantissa_bits as i32)
            }
        };
        if v.sign {
            -magnitude
        } else {
            magnitude
        }
    }

    pub fn to_f32(&self, raw: u32) -> f32 {
        self.to_f64(raw) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FpClass {
    Zero,
    Normal,
    Inf,
    NaN,
}

/// A decoded value. `significand` includes the hidden bit for normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FpValue {
    pub sign: bool,
    pub class: FpClass,
    /// Unbiased exponent; meaningful for `Normal` only.
    pub exponent: i32,
    pub significand: u64,
}

impl FpValue {
    pub fn zero(sign: bool) -> Self {
        FpValue {
            sign,
            class: FpClass::Zero,
            exponent: 0,
            significand: 0,
        }
    }

    fn special(sign: bool, class: FpClass) -> Self {
        FpValue {
            class,
            ..FpValue::zero(sign)
        }
    }
}

pub fn decode(bits: u32, fmt: &FpFormat) -> FpValue {
    let sign = (bits >> fmt.sign_shift()) & 1 == 1;
    let exp_field = (bits >> fmt.mantissa_bits) & fmt.exp_all_ones();
    let mantissa = bits & fmt.mantissa_mask();
    if exp_field == 0 {
        // zero or subnormal, both flushed
        return FpValue::zero(sign);
    }
    if exp_field == fmt.exp_all_ones() {
        let class = if mantissa == 0 { FpClass::Inf } else { FpClass::NaN };
        return FpValue::special(sign, class);
    }
    FpValue {
        sign,
        class: FpClass::Normal,
        exponent: exp_field as i32 - fmt.bias,
        significand: (1u64 << fmt.mantissa_bits) | mantissa as u64,
    }
}

/// Packs a value. Overflow saturates to infinity, underflow flushes to a
/// signed zero, and the significand is stored by truncation.
pub fn encode(v: &FpValue, fmt: &FpFormat) -> u32 {
    let sign = (v.sign as u32) << fmt.sign_shift();
    let inf = fmt.exp_all_ones() << fmt.mantissa_bits;
    match v.class {
        FpClass::Zero => sign,
        FpClass::Inf => sign | inf,
        FpClass::NaN => sign | fmt.nan(),
        FpClass::Normal => {
            debug_assert!(v.significand >> fmt.mantissa_bits == 1, "unnormalized significand");
            let biased = v.exponent + fmt.bias;
            if biased >= fmt.exp_all_ones() as i32 {
                sign | inf
            } else if biased <= 0 {
                sign
            } else {
                sign | ((biased as u32) << fmt.mantissa_bits)
                    | (v.significand as u32 & fmt.mantissa_mask())
            }
        }
    }
}

fn check_format(fmt: &FpFormat, config: &MulConfig) -> Result<()> {
    if config.width() != fmt.significand_bits() || !config.fp_mode() {
        return Err(Error::FormatMismatch {
            format: fmt.name.to_string(),
            expected: fmt.significand_bits(),
            got: config.width(),
            fp_mode: config.fp_mode(),
        });
    }
    Ok(())
}

/// Normalizes a `2n`-bit significand product (top bit at `2n-1` or `2n-2`)
/// into an `n`-bit significand and the exponent carry.
fn normalize_product(product: u64, n: u32) -> (u64, i32) {
    if product >> (2 * n - 1) & 1 == 1 {
        (product >> n, 1)
    } else {
        (product >> (n - 1), 0)
    }
}

/// Multiplies two raw words. `x` plays the stored multiplicand (kernel
/// element) and `y` selects the wordlines (input).
pub fn fp_mul(x: u32, y: u32, fmt: &FpFormat, config: &MulConfig) -> Result<u32> {
    check_format(fmt, config)?;
    let (vx, vy) = (decode(x, fmt), decode(y, fmt));
    let sign = vx.sign ^ vy.sign;
    use FpClass::*;
    let out = match (vx.class, vy.class) {
        (NaN, _) | (_, NaN) => FpValue::special(false, NaN),
        (Inf, Zero) | (Zero, Inf) => FpValue::special(false, NaN),
        (Inf, _) | (_, Inf) => FpValue::special(sign, Inf),
        (Zero, _) | (_, Zero) => FpValue::zero(sign),
        (Normal, Normal) => {
            let product = approx_mul(vx.significand, vy.significand, config)?;
            let (significand, carry) = normalize_product(product, config.width());
            FpValue {
                sign,
                class: Normal,
                exponent: vx.exponent + vy.exponent + carry,
                significand,
            }
        }
    };
    Ok(encode(&out, fmt))
}

/// [`fp_mul`] on `f32` operands converted into `fmt` by truncation.
pub fn fp_mul_f32(x: f32, y: f32, fmt: &FpFormat, config: &MulConfig) -> Result<f32> {
    let raw = fp_mul(fmt.from_f32(x), fmt.from_f32(y), fmt, config)?;
    Ok(fmt.to_f32(raw))
}

/// Order-independent exact sum of raw words in one format.
///
/// Every finite normal value is an integer multiple of the smallest normal
/// ulp, so the running total is kept as a big integer in those units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSum {
    fmt: FpFormat,
    units: BigInt,
    pos_inf: bool,
    neg_inf: bool,
    nan: bool,
}

impl ExactSum {
    pub fn new(fmt: FpFormat) -> Self {
        ExactSum {
            fmt,
            units: BigInt::zero(),
            pos_inf: false,
            neg_inf: false,
            nan: false,
        }
    }

    pub fn add(&mut self, raw: u32) {
        let v = decode(raw, &self.fmt);
        match v.class {
            FpClass::Zero => {}
            FpClass::NaN => self.nan = true,
            FpClass::Inf if v.sign => self.neg_inf = true,
            FpClass::Inf => self.pos_inf = true,
            FpClass::Normal => {
                let shift = (v.exponent + self.fmt.bias - 1) as usize;
                let term = BigInt::from(v.significand) << shift;
                if v.sign {
                    self.units -= term;
                } else {
                    self.units += term;
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        if self.nan || (self.pos_inf && self.neg_inf) {
            return f64::NAN;
        }
        if self.pos_inf {
            return f64::INFINITY;
        }
        if self.neg_inf {
            return f64::NEG_INFINITY;
        }
        let ulp_exp = 1 - self.fmt.bias - self.fmt.mantissa_bits as i32;
        self.units.to_f64().unwrap_or(f64::NAN) * 2f64.powi(ulp_exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sampling {
    Exhaustive,
    Random { count: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub pairs: u64,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
    pub exact_fraction: f64,
}

/// Relative error `(exact - approx) / exact` of the significand multiplier
/// over hidden-1 operand pairs.
pub fn mantissa_error_table(
    fmt: &FpFormat,
    config: &MulConfig,
    sampling: Sampling,
) -> Result<ErrorStats> {
    check_format(fmt, config)?;
    let n = config.width();
    let lo = 1u64 << (n - 1);
    let hi = 1u64 << n;

    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    let mut exact_hits = 0u64;
    let mut pairs = 0u64;
    let mut record = |a: u64, b: u64| -> Result<()> {
        let exact = a * b;
        let approx = approx_mul(a, b, config)?;
        let rel = (exact - approx) as f64 / exact as f64;
        sum += rel;
        max = max.max(rel);
        exact_hits += (approx == exact) as u64;
        pairs += 1;
        Ok(())
    };

    match sampling {
        Sampling::Exhaustive => {
            if n > EXHAUSTIVE_SIGNIFICAND_LIMIT {
                return Err(Error::SweepTooLarge {
                    width: n,
                    limit: EXHAUSTIVE_SIGNIFICAND_LIMIT,
                });
            }
            for a in lo..hi {
                for b in lo..hi {
                    record(a, b)?;
                }
            }
        }
        Sampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..count {
                let a = rng.random_range(lo..hi);
                let b = rng.random_range(lo..hi);
                record(a, b)?;
            }
        }
    }

    if pairs == 0 {
        return Ok(ErrorStats {
            pairs,
            mean_relative_error: 0.0,
            max_relative_error: 0.0,
            exact_fraction: 0.0,
        });
    }
    Ok(ErrorStats {
        pairs,
        mean_relative_error: sum / pairs as f64,
        max_relative_error: max,
        exact_fraction: exact_hits as f64 / pairs as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pp_core::Variant;

    fn bf16_cfg(v: Variant, tr: bool) -> MulConfig {
        MulConfig::new(v, 8, true, tr).unwrap()
    }

    #[test]
    fn decode_examples() {
        let one = decode(0x3F80, &BFLOAT16);
        assert_eq!(
            one,
            FpValue {
                sign: false,
                class: FpClass::Normal,
                exponent: 0,
                significand: 0b1000_0000
            }
        );
        assert_eq!(decode(0x0000, &BFLOAT16), FpValue::zero(false));
        assert_eq!(decode(0x3FC0, &BFLOAT16).significand, 0b1100_0000);
        assert_eq!(decode(0x0001, &BFLOAT16).class, FpClass::Zero);
        assert_eq!(decode(0x7F80, &BFLOAT16).class, FpClass::Inf);
        assert_eq!(decode(0xFFC1, &BFLOAT16).class, FpClass::NaN);
    }

    #[test]
    fn encode_examples() {
        let v = FpValue {
            sign: false,
            class: FpClass::Normal,
            exponent: 1,
            significand: 0b1110_0000,
        };
        assert_eq!(encode(&v, &BFLOAT16), 0x4060);
        assert_eq!(BFLOAT16.to_f32(0x4060), 3.5);
        assert_eq!(encode(&FpValue::zero(true), &BFLOAT16), 0x8000);
        let big = FpValue { exponent: 200, ..v };
        assert_eq!(encode(&big, &BFLOAT16), 0x7F80);
        let tiny = FpValue { exponent: -127, ..v };
        assert_eq!(encode(&tiny, &BFLOAT16), 0x0000);
    }

    #[test]
    fn mul_examples() {
        let x = BFLOAT16.from_f32(1.5);
        assert_eq!(x, 0x3FC0);
        let fla = fp_mul(x, x, &BFLOAT16, &bf16_cfg(Variant::Fla, false)).unwrap();
        assert_eq!(BFLOAT16.to_f32(fla), 1.75);
        let pc2 = fp_mul(x, x, &BFLOAT16, &bf16_cfg(Variant::Pc2, false)).unwrap();
        assert_eq!(BFLOAT16.to_f32(pc2), 2.25);
    }

    #[test]
    fn zero_and_powers_of_two() {
        let two = BFLOAT16.from_f32(2.0);
        for v in Variant::ALL {
            for tr in [false, true] {
                let c = bf16_cfg(v, tr);
                for raw in (0u32..0x10000).step_by(97) {
                    let val = BFLOAT16.to_f64(raw);
                    if !val.is_finite() {
                        continue;
                    }
                    let z = fp_mul(0x0000, raw, &BFLOAT16, &c).unwrap();
                    assert_eq!(BFLOAT16.to_f64(z), 0.0);
                    // a single line a << (n-1); truncation drops its lowest column
                    let kept = if tr { BFLOAT16.to_f64(raw & !1) } else { val };
                    let p = fp_mul(raw, two, &BFLOAT16, &c).unwrap();
                    let want = if val.abs() * 2.0 < 3.4e38 { kept * 2.0 } else { kept.signum() * f64::INFINITY };
                    assert_eq!(BFLOAT16.to_f64(p), want, "{c} raw={raw:#x}");
                }
            }
        }
    }


    #[test]
    fn specials() {
        let c = bf16_cfg(Variant::Pc3, true);
        let one = 0x3F80;
        let inf = 0x7F80;
        let ninf = 0xFF80;
        assert_eq!(fp_mul(inf, one, &BFLOAT16, &c).unwrap(), inf);
        assert_eq!(fp_mul(0xBF80, inf, &BFLOAT16, &c).unwrap(), ninf);
        assert_eq!(decode(fp_mul(inf, 0, &BFLOAT16, &c).unwrap(), &BFLOAT16).class, FpClass::NaN);
        assert_eq!(decode(fp_mul(0x7FC0, one, &BFLOAT16, &c).unwrap(), &BFLOAT16).class, FpClass::NaN);
        assert_eq!(fp_mul(0x8000, one, &BFLOAT16, &c).unwrap(), 0x8000);
    }

    #[test]
    fn format_mismatch_rejected() {
        let c = MulConfig::new(Variant::Pc3, 8, true, false).unwrap();
        assert!(matches!(fp_mul(0, 0, &FLOAT32, &c), Err(Error::FormatMismatch { .. })));
        let int = MulConfig::new(Variant::Fla, 8, false, false).unwrap();
        assert!(fp_mul(0x3F80, 0x3F80, &BFLOAT16, &int).is_err());
    }

    #[test]
    fn float32_path() {
        let c = MulConfig::new(Variant::Pc3, 24, true, false).unwrap();
        assert_eq!(fp_mul_f32(1.5, 1.5, &FLOAT32, &c).unwrap(), 2.25);
        assert_eq!(fp_mul_f32(-3.0, 0.5, &FLOAT32, &c).unwrap(), -1.5);
        assert!(matches!(
            mantissa_error_table(&FLOAT32, &c, Sampling::Exhaustive),
            Err(Error::SweepTooLarge { width: 24, limit: 12 })
        ));
        let s = mantissa_error_table(&FLOAT32, &c, Sampling::Random { count: 1000, seed: 7 }).unwrap();
        assert_eq!(s.pairs, 1000);
        assert!(s.mean_relative_error > 0.0 && s.max_relative_error < 1.0);
    }

    #[test]
    fn from_f32_truncates() {
        // 1 + 2^-7 + 2^-8 drops the last bit instead of rounding up
        let x = 1.0f32 + 2f32.powi(-7) + 2f32.powi(-8);
        assert_eq!(BFLOAT16.from_f32(x), 0x3F81);
        assert_eq!(BFLOAT16.from_f32(-0.0), 0x8000);
        assert_eq!(BFLOAT16.from_f32(f32::NAN) & 0x7F80, 0x7F80);
        assert_eq!(FLOAT32.from_f32(1.25), 1.25f32.to_bits());
    }

    #[test]
    fn exact_sum_order_independent() {
        let words = [0x3F80u32, 0x7F00, 0xFF00, 0x0080, 0xBFC0, 0x3C01];
        let mut fwd = ExactSum::new(BFLOAT16);
        let mut rev = ExactSum::new(BFLOAT16);
        for &w in &words {
            fwd.add(w);
        }
        for &w in words.iter().rev() {
            rev.add(w);
        }
        assert_eq!(fwd, rev);
        // the two huge terms cancel exactly
        let expected = 1.0 + 2f64.powi(-126) - 1.5 + BFLOAT16.to_f64(0x3C01);
        assert_eq!(fwd.value(), expected);
        let mut s = ExactSum::new(BFLOAT16);
        s.add(0x7F80);
        s.add(0xFF80);
        assert!(s.value().is_nan());
    }

    #[test]
    fn sampled_stats_deterministic() {
        let c = bf16_cfg(Variant::Fla, false);
        let s1 = mantissa_error_table(&BFLOAT16, &c, Sampling::Random { count: 500, seed: 1 }).unwrap();
        let s2 = mantissa_error_table(&BFLOAT16, &c, Sampling::Random { count: 500, seed: 1 }).unwrap();
        assert_eq!(s1, s2);
    }
}
