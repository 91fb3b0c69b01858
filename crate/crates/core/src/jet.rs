//! Truncated Taylor series ("jets") with exact order-k arithmetic.
//!
//! A jet of order `k` stores the normalized coefficients `c_j = f^(j)(x0) / j!`
//! for `j = 0..=k`. Every operation is the exact truncation of the
//! corresponding formal power series operation, so the `k`-th derivative of a
//! composed expression is `k! * c_k` up to floating round-off.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Values that expressions can be evaluated on: plain `f64` or a jet.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    /// A constant with the same shape as `self`.
    fn lift(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn powf(&self, e: f64) -> Self;
    fn value(&self) -> f64;

    fn pow(&self, e: &Self) -> Self {
        (e.clone() * self.ln()).exp()
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn powf(&self, e: f64) -> Self {
        f64::powf(*self, e)
    }
    fn value(&self) -> f64 {
        *self
    }
    fn pow(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    coeffs: Vec<f64>,
}

impl TaylorJet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { coeffs }
    }

    /// The independent variable `x0 + scale * u`, expanded in `u`.
    ///
    /// With `scale != 1` the coefficients are those of `f(x0 + scale*u)`, i.e.
    /// `c_j * scale^j`; choosing `scale` near `x0` keeps high orders in range.
    pub fn variable(x0: f64, scale: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = x0;
        if order >= 1 {
            coeffs[1] = scale;
        }
        Self { coeffs }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least the constant term");
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs[j]
    }

    /// `j! * c_j`. May overflow for large `j`; callers that care should work with
    /// [`coeff`](Self::coeff) directly.
    pub fn derivative(&self, j: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=j {
            fact *= i as f64;
        }
        fact * self.coeffs[j]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.order(), other.order(), "jet orders differ");
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    fn mul_jet(&self, other: &Self) -> Self {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.coeffs[j] * other.coeffs[k - j];
            }
            *slot = acc;
        }
        Self { coeffs: out }
    }

    fn div_jet(&self, other: &Self) -> Self {
        let n = self.coeffs.len();
        let b0 = other.coeffs[0];
        let mut q = vec![0.0; n];
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc -= other.coeffs[j] * q[k - j];
            }
            q[k] = acc / b0;
        }
        Self { coeffs: q }
    }

    fn powi(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = self.lift(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        acc
    }
}

impl Add for TaylorJet {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a + b)
    }
}

impl Sub for TaylorJet {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_with(&rhs, |a, b| a - b)
    }
}

impl Mul for TaylorJet {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.mul_jet(&rhs)
    }
}

impl Div for TaylorJet {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self.div_jet(&rhs)
    }
}

impl Neg for TaylorJet {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Add<f64> for TaylorJet {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl Mul<f64> for TaylorJet {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl Scalar for TaylorJet {
    fn lift(&self, c: f64) -> Self {
        Self::constant(c, self.order())
    }

    fn exp(&self) -> Self {
        let a = &self.coeffs;
        let n = a.len();
        let mut e = vec![0.0; n];
        e[0] = a[0].exp();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * a[j] * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Self { coeffs: e }
    }

    fn ln(&self) -> Self {
        let a = &self.coeffs;
        let n = a.len();
        let mut l = vec![0.0; n];
        l[0] = a[0].ln();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * l[j] * a[k - j];
            }
            l[k] = (a[k] - acc / k as f64) / a[0];
        }
        Self { coeffs: l }
    }

    fn powf(&self, p: f64) -> Self {
        if p >= 0.0 && p.fract() == 0.0 && p <= u32::MAX as f64 {
            return self.powi(p as u32);
        }
        let a = &self.coeffs;
        let n = a.len();
        let mut y = vec![0.0; n];
        y[0] = a[0].powf(p);
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ((p + 1.0) * j as f64 - k as f64) * a[j] * y[k - j];
            }
            y[k] = acc / (k as f64 * a[0]);
        }
        Self { coeffs: y }
    }

    fn value(&self) -> f64 {
        self.coeffs[0]
    }
}
