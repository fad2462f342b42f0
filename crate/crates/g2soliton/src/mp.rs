//! Fixed-width binary floating point with a mantissa of `64 L` bits.
//!
//! Values are `(-1)^neg * 0.m * 2^exp` with the mantissa `m` stored little-endian and its top bit set.
//! Arithmetic rounds to nearest on a guard limb, so each operation has relative error about `2^(-64 L)`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::autodiff::Real;

const MAX_LIMBS: usize = 15;
const BUF: usize = 2 * MAX_LIMBS + 2;

/// Binary float with `L` 64-bit mantissa limbs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mp<const L: usize> {
    neg: bool,
    exp: i64,
    mant: [u64; L],
}

/// 320-bit mantissa, about 96 significant decimal digits.
pub type Mp320 = Mp<5>;

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Shifts `buf[..n]` right by `bits`, dropping bits off the low end.
fn shr(buf: &mut [u64], n: usize, bits: u64) {
    let limbs = (bits / 64) as usize;
    let r = (bits % 64) as u32;
    for i in 0..n {
        let src = i + limbs;
        let lo = if src < n { buf[src] } else { 0 };
        let hi = if src + 1 < n { buf[src + 1] } else { 0 };
        buf[i] = if r == 0 { lo } else { (lo >> r) | (hi << (64 - r)) };
    }
}

/// Shifts `buf[..n]` left by `bits`.
fn shl(buf: &mut [u64], n: usize, bits: u64) {
    let limbs = (bits / 64) as usize;
    let r = (bits % 64) as u32;
    for i in (0..n).rev() {
        let hi = if i >= limbs { buf[i - limbs] } else { 0 };
        let lo = if i > limbs { buf[i - limbs - 1] } else { 0 };
        buf[i] = if r == 0 { hi } else { (hi << r) | (lo >> (64 - r)) };
    }
}

fn leading_zeros(buf: &[u64], n: usize) -> Option<u64> {
    (0..n).rev().find(|&i| buf[i] != 0).map(|i| (n - 1 - i) as u64 * 64 + u64::from(buf[i].leading_zeros()))
}

impl<const L: usize> Mp<L> {
    const ZERO: Self = Self { neg: false, exp: 0, mant: [0; L] };

    fn is_zero(&self) -> bool {
        self.mant[L - 1] == 0
    }

    /// Builds a value from `buf[..L + 1]` (one guard limb below the mantissa), normalising and rounding.
    fn from_guarded(neg: bool, mut exp: i64, buf: &mut [u64; BUF]) -> Self {
        let n = L + 1;
        let Some(lz) = leading_zeros(buf, n) else {
            return Self::ZERO;
        };
        if lz > 0 {
            shl(buf, n, lz);
            exp -= lz as i64;
        }
        let mut mant = [0u64; L];
        mant.copy_from_slice(&buf[1..n]);
        if buf[0] >> 63 == 1 {
            let mut carry = true;
            for limb in mant.iter_mut() {
                if !carry {
                    break;
                }
                let (v, c) = limb.overflowing_add(1);
                *limb = v;
                carry = c;
            }
            if carry {
                mant[L - 1] = 1 << 63;
                exp += 1;
            }
        }
        Self { neg, exp, mant }
    }

    /// Exact conversion from `f64`.
    pub fn from_f64(x: f64) -> Self {
        assert!(L >= 2 && L <= MAX_LIMBS, "limb count out of range");
        if x == 0.0 || !x.is_finite() {
            return Self::ZERO;
        }
        let neg = x < 0.0;
        let (a, shift) = if x.abs() < f64::MIN_POSITIVE { (x.abs() * 2f64.powi(64), 64) } else { (x.abs(), 0) };
        let bits = a.to_bits();
        let e = ((bits >> 52) & 0x7ff) as i64;
        let n = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
        let mut mant = [0u64; L];
        mant[L - 1] = n << 11;
        Self { neg, exp: e - 1022 - shift, mant }
    }

    /// Nearest `f64`.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let top = self.mant[L - 1] as f64 + self.mant[L - 2] as f64 * 2f64.powi(-64);
        let v = ldexp(top, self.exp - 64);
        if self.neg {
            -v
        } else {
            v
        }
    }

    fn cmp_mag(&self, o: &Self) -> std::cmp::Ordering {
        self.exp.cmp(&o.exp).then_with(|| self.mant.iter().rev().cmp(o.mant.iter().rev()))
    }

    fn add_signed(self, o: Self, o_neg: bool) -> Self {
        if o.is_zero() {
            return self;
        }
        if self.is_zero() {
            return Self { neg: o_neg, ..o };
        }
        let (big, big_neg, small, small_neg) = match self.cmp_mag(&o) {
            std::cmp::Ordering::Less => (o, o_neg, self, self.neg),
            _ => (self, self.neg, o, o_neg),
        };
        let d = (big.exp - small.exp) as u64;
        if d > 64 * (L as u64 + 1) {
            return Self { neg: big_neg, ..big };
        }
        let n = L + 1;
        let mut a = [0u64; BUF];
        let mut b = [0u64; BUF];
        a[1..n].copy_from_slice(&big.mant);
        b[1..n].copy_from_slice(&small.mant);
        shr(&mut b, n, d);
        let mut exp = big.exp;
        if big_neg == small_neg {
            let mut carry = 0u64;
            for i in 0..n {
                let (s1, c1) = a[i].overflowing_add(b[i]);
                let (s2, c2) = s1.overflowing_add(carry);
                a[i] = s2;
                carry = u64::from(c1 || c2);
            }
            if carry == 1 {
                shr(&mut a, n, 1);
                a[n - 1] |= 1 << 63;
                exp += 1;
            }
        } else {
            let mut borrow = 0u64;
            for i in 0..n {
                let (s1, c1) = a[i].overflowing_sub(b[i]);
                let (s2, c2) = s1.overflowing_sub(borrow);
                a[i] = s2;
                borrow = u64::from(c1 || c2);
            }
        }
        Self::from_guarded(big_neg, exp, &mut a)
    }

    fn mul_mag(&self, o: &Self) -> [u64; BUF] {
        let mut p = [0u64; BUF];
        for i in 0..L {
            let mut carry: u128 = 0;
            for j in 0..L {
                let t = u128::from(self.mant[i]) * u128::from(o.mant[j]) + u128::from(p[i + j]) + carry;
                p[i + j] = t as u64;
                carry = t >> 64;
            }
            p[i + L] = carry as u64;
        }
        p
    }

    fn recip(self) -> Self {
        // Newton iteration on the mantissa in [1/2, 1), seeded from f64.
        let m = Self { neg: false, exp: 0, ..self };
        let mut x = Self::from_f64(1.0 / m.to_f64());
        let one = Self::from_f64(1.0);
        let mut bits = 50usize;
        while bits < 64 * L + 8 {
            x = x + x * (one - m * x);
            bits *= 2;
        }
        x = x + x * (one - m * x);
        Self { neg: self.neg, exp: x.exp - self.exp, mant: x.mant }
    }
}

impl<const L: usize> From<f64> for Mp<L> {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl<const L: usize> Add for Mp<L> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.add_signed(o, o.neg)
    }
}

impl<const L: usize> Sub for Mp<L> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.add_signed(o, !o.neg)
    }
}

impl<const L: usize> Neg for Mp<L> {
    type Output = Self;
    fn neg(self) -> Self {
        if self.is_zero() {
            self
        } else {
            Self { neg: !self.neg, ..self }
        }
    }
}

impl<const L: usize> Mul for Mp<L> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self::ZERO;
        }
        let p = self.mul_mag(&o);
        // Keep the top L + 1 limbs of the 2L-limb product as mantissa plus guard.
        let mut buf = [0u64; BUF];
        buf[..=L].copy_from_slice(&p[L - 1..2 * L]);
        if buf[L] >> 63 == 0 {
            // One extra bit comes from the limb below the guard.
            shl(&mut buf, L + 1, 1);
            buf[0] |= p[L - 2] >> 63;
            return Self::from_guarded(self.neg != o.neg, self.exp + o.exp - 1, &mut buf);
        }
        Self::from_guarded(self.neg != o.neg, self.exp + o.exp, &mut buf)
    }
}

impl<const L: usize> Div for Mp<L> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        assert!(!o.is_zero(), "division by zero");
        self * o.recip()
    }
}

impl<const L: usize> Real for Mp<L> {
    fn cst(x: f64) -> Self {
        Self::from_f64(x)
    }
    fn to_f64(self) -> f64 {
        Mp::to_f64(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DoubleDouble;

    type M = Mp320;

    fn m(x: f64) -> M {
        M::from(x)
    }

    #[test]
    fn round_trips_f64() {
        for x in [1.0, -2.5, 1e-300, 3e300, 0.1, -7.0 / 3.0, 5e-320, 0.0] {
            assert_eq!(m(x).to_f64(), x);
        }
    }

    #[test]
    fn small_integer_arithmetic_is_exact() {
        assert_eq!((m(3.0) * m(7.0) - m(21.0)).to_f64(), 0.0);
        assert_eq!((m(1.0) - m(1.0)).to_f64(), 0.0);
        assert_eq!((m(-5.0) + m(12.0)).to_f64(), 7.0);
        assert_eq!((m(6.0) / m(4.0)).to_f64(), 1.5);
    }

    #[test]
    fn resolves_far_below_double_double() {
        let third = m(1.0) / m(3.0);
        let r = third * m(3.0) - m(1.0);
        assert!(r.to_f64().abs() < 1e-94, "{}", r.to_f64());
        let tiny = m(2f64.powi(-300));
        let back = (m(1.0) + tiny) - m(1.0);
        assert!((back.to_f64() - 2f64.powi(-300)).abs() < 2f64.powi(-360));
        let x = m(0.1);
        let z = (x * x * x + x) / (x + m(1.0));
        let resid = z * (x + m(1.0)) - x * x * x - x;
        assert!(resid.to_f64().abs() < 1e-94);
    }

    #[test]
    fn agrees_with_double_double() {
        let xs = [0.3, -1.7, 12.25, 1e-5, -3e4];
        for &a in &xs {
            for &b in &xs {
                let (ma, mb) = (m(a), m(b));
                let (da, db) = (DoubleDouble::from(a), DoubleDouble::from(b));
                let pairs = [
                    ((ma + mb).to_f64(), (da + db).to_f64()),
                    ((ma - mb).to_f64(), (da - db).to_f64()),
                    ((ma * mb).to_f64(), (da * db).to_f64()),
                    ((ma / mb).to_f64(), (da / db).to_f64()),
                ];
                for (x, y) in pairs {
                    assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-300), "{a} {b}: {x} {y}");
                }
            }
        }
    }

    #[test]
    fn cancellation_normalises() {
        let a = m(1.0) + m(2f64.powi(-200));
        let d = a - m(1.0);
        assert_eq!(d.to_f64(), 2f64.powi(-200));
        let s = m(1.5) - m(1.5 + 2f64.powi(-52));
        assert_eq!(s.to_f64(), -(2f64.powi(-52)));
    }
}
