//! Scalar abstraction shared by the value-only and the differentiated code paths.
//!
//! Every numerical routine that feeds the likelihood is written once against
//! [`Real`]. Instantiating it with `f64` gives plain evaluation, instantiating it
//! with [`Dual`] gives forward-mode derivatives in `W` directions at once.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Whether values of this type carry derivative information.
    const DIFFERENTIABLE: bool;

    fn cst(x: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    /// `exp(x) - 1`, accurate near zero.
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// Multiply by a plain float (cheaper than `self * Self::cst(k)` for duals).
    fn scale(self, k: f64) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }

    /// `1 / (1 + exp(-x))`.
    #[inline]
    fn logistic(self) -> Self {
        if self.value() >= 0.0 {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `1 - exp(-x)`.
    #[inline]
    fn one_minus_exp_neg(self) -> Self {
        -((-self).exp_m1())
    }

    #[inline]
    fn square(self) -> Self {
        self * self
    }

    /// The derivative part only: `self - value(self)`.
    #[inline]
    fn tangent_part(self) -> Self {
        self - Self::cst(self.value())
    }
}

impl Real for f64 {
    const DIFFERENTIABLE: bool = false;

    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Forward-mode dual number carrying `W` tangent directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const W: usize> {
    pub v: f64,
    pub d: [f64; W],
}

impl<const W: usize> Dual<W> {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; W] }
    }

    /// Independent variable seeded along direction `dir`.
    #[inline]
    pub fn variable(v: f64, dir: usize) -> Self {
        let mut d = [0.0; W];
        d[dir] = 1.0;
        Dual { v, d }
    }

    /// Chain rule for a unary function with value `f` and derivative `df`.
    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= df;
        }
        Dual { v: f, d }
    }
}

impl<const W: usize> Add for Dual<W> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const W: usize> AddAssign for Dual<W> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.v += rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d.iter()) {
            *a += *b;
        }
    }
}

impl<const W: usize> Sub for Dual<W> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const W: usize> SubAssign for Dual<W> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.v -= rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d.iter()) {
            *a -= *b;
        }
    }
}

impl<const W: usize> Mul for Dual<W> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; W];
        for i in 0..W {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<const W: usize> MulAssign for Dual<W> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const W: usize> Div for Dual<W> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; W];
        for i in 0..W {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl<const W: usize> Neg for Dual<W> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const W: usize> Real for Dual<W> {
    const DIFFERENTIABLE: bool = true;

    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        self.chain(self.v.exp_m1(), self.v.exp())
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self.chain(self.v * k, k)
    }
}

/// Fixed-order compensated (Neumaier) accumulator.
///
/// The compensation is driven by the value part, so the same summation order
/// produces the same value bits for `f64` and for duals.
#[derive(Clone, Copy, Debug)]
pub struct CompensatedSum<S: Real> {
    sum: S,
    comp: S,
}

impl<S: Real> Default for CompensatedSum<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> CompensatedSum<S> {
    pub fn new() -> Self {
        CompensatedSum {
            sum: S::zero(),
            comp: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.value().abs() >= x.value().abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> S {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<S: Real>(x: S, y: S) -> S {
        (x * y).exp() / (S::one() + y.square()) + x.ln() * y.sqrt() - x.logistic()
            + (-y).exp_m1()
    }

    #[test]
    fn dual_matches_finite_differences() {
        let (x, y) = (1.3, 0.7);
        let gx = f(Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1));
        let h = 1e-6;
        let fdx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fdy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert_relative_eq!(gx.v, f(x, y), epsilon = 1e-15);
        assert_relative_eq!(gx.d[0], fdx, epsilon = 1e-8);
        assert_relative_eq!(gx.d[1], fdy, epsilon = 1e-8);
    }

    #[test]
    fn constant_has_zero_tangent() {
        let c = Dual::<3>::cst(2.5);
        let r = c.exp() * c.ln();
        assert_eq!(r.d, [0.0; 3]);
    }

    #[test]
    fn logistic_is_stable_for_large_arguments() {
        assert_eq!(Real::logistic(800.0f64), 1.0);
        assert!(Real::logistic(-800.0f64) >= 0.0);
        let d = Dual::<1>::variable(-40.0, 0).logistic();
        assert!(d.d[0].is_finite());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::<f64>::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.total(), 10.0);
    }

    #[test]
    fn tangent_part_drops_value() {
        let x = Dual::<1>::variable(3.0, 0);
        let t = x.tangent_part();
        assert_eq!(t.v, 0.0);
        assert_eq!(t.d[0], 1.0);
    }
}
