//! Forward-mode automatic differentiation.
//!
//! Vector fields are written once against the [`Scalar`] trait and evaluated
//! with `f64` for values, [`Dual`] for first derivatives and [`Jet`] for
//! first and second derivatives with respect to `N` seeded inputs.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn recip(self) -> Self {
        Self::constant(1.0) / self
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            2 => self * self,
            3 => self * self * self,
            n if n < 0 => self.powi(-n).recip(),
            n => {
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// First-order dual number carrying a gradient over `N` inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn variable(re: f64, index: usize) -> Self {
        let mut eps = [0.0; N];
        eps[index] = 1.0;
        Self { re, eps }
    }

    fn chain(self, f0: f64, f1: f64) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= f1;
        }
        Self { re: f0, eps }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        self.chain(r, -r * r)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + rhs.eps[i] * self.re;
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for e in &mut self.eps {
            *e *= rhs;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

/// Second-order jet: value, gradient and (symmetric) Hessian over `N` inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub re: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn variable(re: f64, index: usize) -> Self {
        let mut grad = [0.0; N];
        grad[index] = 1.0;
        Self {
            re,
            grad,
            hess: [[0.0; N]; N],
        }
    }

    /// Apply a scalar function with derivatives `f1`, `f2` at the value.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..N {
            out.grad[i] = f1 * self.grad[i];
            for j in 0..N {
                out.hess[i][j] = f1 * self.hess[i][j] + f2 * self.grad[i] * self.grad[j];
            }
        }
        out
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn constant(re: f64) -> Self {
        Self {
            re,
            grad: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.re))
    }
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(c, -s, -c)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for i in 0..N {
            self.grad[i] += rhs.grad[i];
            for j in 0..N {
                self.hess[i][j] += rhs.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.re * rhs.re);
        for i in 0..N {
            out.grad[i] = self.grad[i] * rhs.re + rhs.grad[i] * self.re;
            for j in 0..N {
                out.hess[i][j] = self.hess[i][j] * rhs.re
                    + rhs.hess[i][j] * self.re
                    + self.grad[i] * rhs.grad[j]
                    + rhs.grad[i] * self.grad[j];
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for i in 0..N {
            self.grad[i] *= rhs;
            for j in 0..N {
                self.hess[i][j] *= rhs;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly<S: Scalar>(x: S, y: S) -> S {
        // x^3 y + sin(x) / y + sqrt(x y)
        x.powi(3) * y + x.sin() / y + (x * y).sqrt()
    }

    #[test]
    fn dual_matches_analytic_gradient() {
        let (x, y) = (0.7, 1.3);
        let f = poly(Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1));
        let dfdx = 3.0 * x * x * y + x.cos() / y + 0.5 * y / (x * y).sqrt();
        let dfdy = x.powi(3) - x.sin() / (y * y) + 0.5 * x / (x * y).sqrt();
        assert_relative_eq!(f.re, poly(x, y), epsilon = 1e-14);
        assert_relative_eq!(f.eps[0], dfdx, epsilon = 1e-13);
        assert_relative_eq!(f.eps[1], dfdy, epsilon = 1e-13);
    }

    #[test]
    fn jet_hessian_matches_analytic() {
        let (x, y) = (0.7, 1.3);
        let f = poly(Jet::<2>::variable(x, 0), Jet::<2>::variable(y, 1));
        let q = (x * y).sqrt();
        let dxx = 6.0 * x * y - x.sin() / y - 0.25 * y * y / (q * q * q);
        let dyy = 2.0 * x.sin() / (y * y * y) - 0.25 * x * x / (q * q * q);
        let dxy = 3.0 * x * x - x.cos() / (y * y) + 0.5 / q - 0.25 * x * y / (q * q * q);
        assert_relative_eq!(f.hess[0][0], dxx, epsilon = 1e-12);
        assert_relative_eq!(f.hess[1][1], dyy, epsilon = 1e-12);
        assert_relative_eq!(f.hess[0][1], dxy, epsilon = 1e-12);
        assert_relative_eq!(f.hess[1][0], dxy, epsilon = 1e-12);
    }

    #[test]
    fn negative_powers_and_cos() {
        let x = 1.7;
        let f = (Jet::<1>::variable(x, 0).powi(-3)) + Jet::<1>::variable(x, 0).cos();
        assert_relative_eq!(f.grad[0], -3.0 * x.powi(-4) - x.sin(), epsilon = 1e-13);
        assert_relative_eq!(f.hess[0][0], 12.0 * x.powi(-5) - x.cos(), epsilon = 1e-12);
    }
}
