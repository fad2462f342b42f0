//! Minimal forward-mode dual numbers for exact Jacobians of rational vector fields.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Field operations needed by the generic right-hand sides.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    /// Embeds a constant.
    fn cst(x: f64) -> Self;
    /// Nearest `f64`, dropping any derivative part.
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Value with one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    /// Value.
    pub re: f64,
    /// Derivative.
    pub eps: f64,
}

impl Dual {
    /// Independent variable seeded with unit derivative.
    pub fn var(re: f64) -> Self {
        Self { re, eps: 1.0 }
    }
}

impl Real for Dual {
    fn cst(x: f64) -> Self {
        Self { re: x, eps: 0.0 }
    }
    fn to_f64(self) -> f64 {
        self.re
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self { re: self.re * o.re, eps: self.eps * o.re + self.re * o.eps }
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self { re: -self.re, eps: -self.eps }
    }
}

/// Jacobian `J[i][j] = d out_i / d x_j` of a generic vector field.
pub fn jacobian<const N: usize, F>(field: F, x: [f64; N]) -> [[f64; N]; N]
where
    F: Fn([Dual; N]) -> [Dual; N],
{
    let mut jac = [[0.0; N]; N];
    for j in 0..N {
        let arg: [Dual; N] = std::array::from_fn(|k| if k == j { Dual::var(x[k]) } else { Dual::cst(x[k]) });
        let out = field(arg);
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = out[i].eps;
        }
    }
    jac
}
