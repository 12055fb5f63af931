//! Two's-complement fixed-point scalars.
//!
//! Values are stored as raw integers in `n` bits with `f` fraction bits, so the
//! real value of a raw integer `r` is `r / 2^f`. Every arithmetic result is
//! brought back into range by the format's [`Overflow`] policy; nothing here
//! ever panics on overflow.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;

/// What happens to a result that falls outside the representable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    Saturate,
    Wrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFormat")]
pub struct FixedPointFormat {
    total_bits: u8,
    fraction_bits: u8,
    overflow: Overflow,
}

#[derive(Deserialize)]
struct RawFormat {
    total_bits: u8,
    fraction_bits: u8,
    overflow: Overflow,
}

impl TryFrom<RawFormat> for FixedPointFormat {
    type Error = Error;

    fn try_from(r: RawFormat) -> Result<Self, Error> {
        FixedPointFormat::new(r.total_bits, r.fraction_bits, r.overflow)
    }
}

impl Default for FixedPointFormat {
    /// Q7.8 in 16 bits, saturating.
    fn default() -> Self {
        Self {
            total_bits: 16,
            fraction_bits: 8,
            overflow: Overflow::Saturate,
        }
    }
}

impl FixedPointFormat {
    pub fn new(total_bits: u8, fraction_bits: u8, overflow: Overflow) -> Result<Self, Error> {
        if !(2..=32).contains(&total_bits) {
            return Err(Error::InvalidFormat(format!(
                "total bits must be in 2..=32, got {total_bits}"
            )));
        }
        if fraction_bits >= total_bits {
            return Err(Error::InvalidFormat(format!(
                "fraction bits ({fraction_bits}) must be below total bits ({total_bits})"
            )));
        }
        Ok(Self {
            total_bits,
            fraction_bits,
            overflow,
        })
    }

    pub fn total_bits(&self) -> u8 {
        self.total_bits
    }

    pub fn fraction_bits(&self) -> u8 {
        self.fraction_bits
    }

    pub fn overflow(&self) -> Overflow {
        self.overflow
    }

    /// Smallest raw value, `-2^(n-1)`.
    pub fn min_raw(&self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    /// Largest raw value, `2^(n-1) - 1`.
    pub fn max_raw(&self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    /// Weight of one raw unit, `2^-f`.
    pub fn resolution(&self) -> f64 {
        (-(self.fraction_bits as f64)).exp2()
    }

    /// Brings a wide intermediate back into range. The flag is `true` when the
    /// policy had to intervene.
    pub fn handle_overflow(&self, wide: i64) -> (i32, bool) {
        self.handle_overflow_wide(wide as i128)
    }

    fn handle_overflow_wide(&self, wide: i128) -> (i32, bool) {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if (lo..=hi).contains(&wide) {
            return (wide as i32, false);
        }
        let raw = match self.overflow {
            Overflow::Saturate => wide.clamp(lo, hi),
            Overflow::Wrap => {
                let modulus = 1i128 << self.total_bits;
                let r = wide.rem_euclid(modulus);
                if r > hi {
                    r - modulus
                } else {
                    r
                }
            }
        };
        (raw as i32, true)
    }

    /// Round half away from zero, then apply the overflow policy.
    pub fn quantize(&self, x: f64) -> Fx {
        self.quantize_checked(x).0
    }

    /// Like [`quantize`](Self::quantize), also reporting whether the value
    /// was out of range.
    pub fn quantize_checked(&self, x: f64) -> (Fx, bool) {
        let scaled = (x * (self.fraction_bits as f64).exp2()).round();
        // `as` saturates at the i128 bounds and maps NaN to 0.
        let (raw, hit) = self.handle_overflow_wide(scaled as i128);
        (Fx { raw, format: *self }, hit)
    }

    /// Builds a value from a raw integer, which must already be in range.
    pub fn from_raw(&self, raw: i32) -> Result<Fx, Error> {
        if raw < self.min_raw() || raw > self.max_raw() {
            return Err(Error::InvalidFormat(format!(
                "raw value {raw} outside [{}, {}]",
                self.min_raw(),
                self.max_raw()
            )));
        }
        Ok(Fx { raw, format: *self })
    }

    pub fn zero(&self) -> Fx {
        Fx {
            raw: 0,
            format: *self,
        }
    }

    /// Raw-level addition with the policy applied; second field flags overflow.
    pub fn add_raw(&self, a: i32, b: i32) -> (i32, bool) {
        self.handle_overflow(a as i64 + b as i64)
    }

    pub fn negate_raw(&self, a: i32) -> (i32, bool) {
        self.handle_overflow(-(a as i64))
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let policy = match self.overflow {
            Overflow::Saturate => "sat",
            Overflow::Wrap => "wrap",
        };
        write!(
            f,
            "Q{}.{}/{}",
            self.total_bits - self.fraction_bits - 1,
            self.fraction_bits,
            policy
        )
    }
}

/// A fixed-point value together with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fx {
    raw: i32,
    format: FixedPointFormat,
}

/// Alias kept for readability at API boundaries.
pub type FixedPointValue = Fx;

impl Fx {
    pub fn raw(&self) -> i32 {
        self.raw
    }

    pub fn format(&self) -> FixedPointFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.resolution()
    }

    pub fn try_add(self, other: Fx) -> Result<Fx, Error> {
        self.add_flagged(other).map(|(v, _)| v)
    }

    /// Addition that also reports whether the overflow policy fired.
    pub fn add_flagged(self, other: Fx) -> Result<(Fx, bool), Error> {
        if self.format != other.format {
            return Err(Error::FormatMismatch {
                left: self.format.to_string(),
                right: other.format.to_string(),
            });
        }
        let (raw, hit) = self.format.add_raw(self.raw, other.raw);
        Ok((
            Fx {
                raw,
                format: self.format,
            },
            hit,
        ))
    }

    pub fn negate(self) -> Fx {
        self.negate_flagged().0
    }

    pub fn negate_flagged(self) -> (Fx, bool) {
        let (raw, hit) = self.format.negate_raw(self.raw);
        (
            Fx {
                raw,
                format: self.format,
            },
            hit,
        )
    }

    pub fn relu(self) -> Fx {
        Fx {
            raw: self.raw.max(0),
            format: self.format,
        }
    }
}

pub fn quantize(x: f64, fmt: FixedPointFormat) -> Fx {
    fmt.quantize(x)
}

pub fn fx_add(a: Fx, b: Fx) -> Result<Fx, Error> {
    a.try_add(b)
}

pub fn fx_negate(a: Fx) -> Fx {
    a.negate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q16(policy: Overflow) -> FixedPointFormat {
        FixedPointFormat::new(16, 8, policy).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let fmt = q16(Overflow::Saturate);
        assert_eq!(quantize(0.0, fmt).raw(), 0);
        assert_eq!(quantize(1.0, fmt).raw(), 256);
        assert_eq!(quantize(200.0, fmt).raw(), 32767);
        assert_eq!(quantize(-200.0, fmt).raw(), -32768);
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        let fmt = q16(Overflow::Saturate);
        // 0.5 / 256 sits exactly halfway between raw 0 and raw 1.
        assert_eq!(quantize(0.5 / 256.0, fmt).raw(), 1);
        assert_eq!(quantize(-0.5 / 256.0, fmt).raw(), -1);
        assert_eq!(quantize(1.5 / 256.0, fmt).raw(), 2);
    }

    #[test]
    fn quantize_wraps() {
        let fmt = q16(Overflow::Wrap);
        // 200 * 256 = 51200 -> 51200 - 65536
        assert_eq!(quantize(200.0, fmt).raw(), 51200 - 65536);
    }

    #[test]
    fn add_examples() {
        let sat = q16(Overflow::Saturate);
        let wrap = q16(Overflow::Wrap);
        let a = sat.from_raw(5).unwrap();
        let b = sat.from_raw(-5).unwrap();
        assert_eq!(fx_add(a, b).unwrap().raw(), 0);

        let a = sat.from_raw(30000).unwrap();
        let b = sat.from_raw(10000).unwrap();
        assert_eq!(fx_add(a, b).unwrap().raw(), 32767);

        let a = wrap.from_raw(30000).unwrap();
        let b = wrap.from_raw(10000).unwrap();
        assert_eq!(fx_add(a, b).unwrap().raw(), -25536);
    }

    #[test]
    fn add_rejects_mixed_formats() {
        let a = q16(Overflow::Saturate).from_raw(1).unwrap();
        let b = q16(Overflow::Wrap).from_raw(1).unwrap();
        assert!(matches!(fx_add(a, b), Err(Error::FormatMismatch { .. })));
    }

    #[test]
    fn negate_examples() {
        let sat = q16(Overflow::Saturate);
        assert_eq!(fx_negate(sat.from_raw(256).unwrap()).raw(), -256);
        assert_eq!(fx_negate(sat.from_raw(0).unwrap()).raw(), 0);
        assert_eq!(fx_negate(sat.from_raw(-32768).unwrap()).raw(), 32767);
        let wrap = q16(Overflow::Wrap);
        assert_eq!(fx_negate(wrap.from_raw(-32768).unwrap()).raw(), -32768);
    }

    #[test]
    fn format_validation() {
        assert!(FixedPointFormat::new(1, 0, Overflow::Saturate).is_err());
        assert!(FixedPointFormat::new(33, 0, Overflow::Saturate).is_err());
        assert!(FixedPointFormat::new(8, 8, Overflow::Saturate).is_err());
        let f32b = FixedPointFormat::new(32, 16, Overflow::Wrap).unwrap();
        assert_eq!(f32b.min_raw(), i32::MIN);
        assert_eq!(f32b.max_raw(), i32::MAX);
        assert!(FixedPointFormat::default().from_raw(40000).is_err());
    }

    fn any_format() -> impl Strategy<Value = FixedPointFormat> {
        (2u8..=32, any::<bool>()).prop_flat_map(|(n, wrap)| {
            (0..n).prop_map(move |f| {
                let policy = if wrap { Overflow::Wrap } else { Overflow::Saturate };
                FixedPointFormat::new(n, f, policy).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn quantize_error_bounded_in_range(fmt in any_format(), t in -1.0f64..1.0) {
            let span = fmt.max_raw() as f64 * fmt.resolution();
            let x = t * span;
            let q = fmt.quantize(x);
            prop_assert!((q.to_f64() - x).abs() <= fmt.resolution() / 2.0 + 1e-12);
        }

        #[test]
        fn quantize_idempotent_on_representable(fmt in any_format(), seed in any::<i64>()) {
            let lo = fmt.min_raw() as i64;
            let span = fmt.max_raw() as i64 - lo + 1;
            let raw = (lo + seed.rem_euclid(span)) as i32;
            let v = fmt.from_raw(raw).unwrap();
            prop_assert_eq!(fmt.quantize(v.to_f64()), v);
        }

        #[test]
        fn saturating_add_is_monotone(a in -32768i32..=32767, b in -32768i32..=32767, c in -32768i32..=32767) {
            let fmt = FixedPointFormat::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let c = fmt.from_raw(c).unwrap();
            let x = fx_add(fmt.from_raw(lo).unwrap(), c).unwrap();
            let y = fx_add(fmt.from_raw(hi).unwrap(), c).unwrap();
            prop_assert!(x.raw() <= y.raw());
        }

        #[test]
        fn add_commutes(fmt in any_format(), a in any::<i32>(), b in any::<i32>()) {
            let clamp = |r: i32| r.clamp(fmt.min_raw(), fmt.max_raw());
            let a = fmt.from_raw(clamp(a)).unwrap();
            let b = fmt.from_raw(clamp(b)).unwrap();
            prop_assert_eq!(fx_add(a, b).unwrap(), fx_add(b, a).unwrap());
        }
    }
}
