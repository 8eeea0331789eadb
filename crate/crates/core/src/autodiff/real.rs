//! Scalar abstraction shared by the plain `f64` path and the dual-number
//! path used for Hessian-vector products.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Minimal real-number interface the graph needs.
///
/// Every branch the graph takes (abs sign, clamps) looks at [`Real::value`],
/// so evaluating with [`Dual`] differentiates the exact same piecewise
/// function the `f64` path evaluates.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    /// `self^e` for a constant exponent; callers guarantee `self > 0`.
    fn powf(self, e: f64) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Forward-mode dual number `re + du·ε`, `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub const fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.du - q * o.du) / o.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.du)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.du += o.du;
    }
}

impl Real for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Self::new(t, self.du * (1.0 - t * t))
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.du * e)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        let p = self.re.powf(e);
        Self::new(p, self.du * e * self.re.powf(e - 1.0))
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Self::new(self.re * c, self.du * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_matches_analytic_derivatives() {
        let x = Dual::new(0.3, 1.0);
        assert!((x.tanh().du - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-15);
        assert!((x.exp().du - 0.3f64.exp()).abs() < 1e-15);
        assert!((x.powf(2.5).du - 2.5 * 0.3f64.powf(1.5)).abs() < 1e-15);
        let q = Dual::new(1.0, 0.0) / x;
        assert!((q.du + 1.0 / 0.09).abs() < 1e-12);
    }
}
