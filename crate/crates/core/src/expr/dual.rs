//! Dual numbers for forward-mode differentiation.
//!
//! A [`DualValue`] carries a value together with its directional derivative
//! with respect to one seeded variable. Arithmetic follows the product and
//! chain rules, so evaluating an expression tree on dual inputs yields the
//! exact first derivative up to floating-point rounding.

use std::ops::{Add, Mul, Neg, Sub};

/// `value + derivative·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub derivative: f64,
}

impl DualValue {
    pub const fn new(value: f64, derivative: f64) -> Self {
        Self { value, derivative }
    }

    /// A constant: derivative zero.
    pub const fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// The seeded variable: derivative one.
    pub const fn variable(value: f64) -> Self {
        Self::new(value, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.derivative.is_finite()
    }
}

impl Add for DualValue {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.derivative + rhs.derivative)
    }
}

impl Sub for DualValue {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.derivative - rhs.derivative)
    }
}

impl Mul for DualValue {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.derivative * rhs.value + self.value * rhs.derivative,
        )
    }
}

impl Neg for DualValue {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.derivative)
    }
}
