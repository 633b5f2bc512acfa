//! Arithmetic shared by `f64`, double-double and first-order jets, so the
//! polynomial recurrences are written once.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::dd::Dd;

pub trait Field:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + From<f64>
{
    fn value(self) -> f64;
}

impl Field for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

impl Field for Dd {
    #[inline]
    fn value(self) -> f64 {
        self.to_f64()
    }
}

/// Value and gradient in up to three variables (forward-mode differentiation).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
}

impl Jet {
    /// The coordinate function `x_i` at value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; 3];
        g[i] = 1.0;
        Jet { v, g }
    }

    pub fn vars(x: &[f64]) -> Vec<Jet> {
        x.iter().enumerate().map(|(i, v)| Jet::var(*v, i)).collect()
    }

    fn map(self, f: f64, df: f64) -> Jet {
        Jet {
            v: f,
            g: [df * self.g[0], df * self.g[1], df * self.g[2]],
        }
    }

    pub fn sqrt(self) -> Jet {
        let s = self.v.sqrt();
        self.map(s, 0.5 / s)
    }

    pub fn acos(self) -> Jet {
        self.map(self.v.acos(), -1.0 / (1.0 - self.v * self.v).sqrt())
    }

    pub fn sin(self) -> Jet {
        self.map(self.v.sin(), self.v.cos())
    }

    pub fn cos(self) -> Jet {
        self.map(self.v.cos(), -self.v.sin())
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.map(e, e)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet { v, g: [0.0; 3] }
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            g: [self.g[0] - o.g[0], self.g[1] - o.g[1], self.g[2] - o.g[2]],
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            g: [-self.g[0], -self.g[1], -self.g[2]],
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let g = [
            self.v * o.g[0] + o.v * self.g[0],
            self.v * o.g[1] + o.v * self.g[1],
            self.v * o.g[2] + o.v * self.g[2],
        ];
        Jet { v: self.v * o.v, g }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        let g = [
            (self.g[0] - q * o.g[0]) / o.v,
            (self.g[1] - q * o.g[1]) / o.v,
            (self.g[2] - q * o.g[2]) / o.v,
        ];
        Jet { v: q, g }
    }
}

impl Field for Jet {
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Jet::var(2.0, 0);
        let y = Jet::var(3.0, 1);
        let f = x * x * y / (x + y);
        // f = x^2 y / (x + y)
        let fx = (2.0 * 2.0 * 3.0 * 5.0 - 4.0 * 3.0) / 25.0;
        let fy = (4.0 * 5.0 - 4.0 * 3.0) / 25.0;
        assert!((f.v - 12.0 / 5.0).abs() < 1e-15);
        assert!((f.g[0] - fx).abs() < 1e-15);
        assert!((f.g[1] - fy).abs() < 1e-15);
        assert_eq!(f.g[2], 0.0);
    }

    #[test]
    fn elementary_functions() {
        let x = Jet::var(0.3, 2);
        assert!((x.acos().g[2] + 1.0 / (1.0f64 - 0.09).sqrt()).abs() < 1e-15);
        assert!((x.sqrt().g[2] - 0.5 / 0.3f64.sqrt()).abs() < 1e-15);
        assert!((x.exp().g[2] - 0.3f64.exp()).abs() < 1e-15);
        assert!((x.sin().g[2] - 0.3f64.cos()).abs() < 1e-15);
    }
}
