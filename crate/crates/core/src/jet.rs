//! Forward-mode first derivatives of complex expressions with respect to a fixed number
//! of real parameters.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

pub const P: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: C64,
    pub d: [C64; P],
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

impl Jet {
    pub fn constant(v: C64) -> Self {
        Jet { v, d: [ZERO; P] }
    }

    pub fn real(x: f64) -> Self {
        Self::constant(C64::new(x, 0.0))
    }

    /// The complex number x_i + i x_{i+1} as a function of parameters i and i+1.
    pub fn variable(v: C64, i: usize) -> Self {
        let mut d = [ZERO; P];
        d[i] = C64::new(1.0, 0.0);
        d[i + 1] = C64::new(0.0, 1.0);
        Jet { v, d }
    }

    pub fn conj(self) -> Self {
        Jet { v: self.v.conj(), d: self.d.map(|x| x.conj()) }
    }

    /// |z|², a real jet.
    pub fn norm_sqr(self) -> Self {
        let m = self * self.conj();
        Jet { v: C64::new(m.v.re, 0.0), d: m.d.map(|x| C64::new(x.re, 0.0)) }
    }

    /// Applies a real function with derivative `df` to the real part.
    pub fn map_real(self, f: f64, df: f64) -> Self {
        Jet { v: C64::new(f, 0.0), d: self.d.map(|x| C64::new(x.re * df, 0.0)) }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.re.sqrt();
        self.map_real(s, 0.5 / s)
    }

    pub fn atanh(self) -> Self {
        let x = self.v.re;
        self.map_real(x.atanh(), 1.0 / (1.0 - x * x))
    }

    pub fn tanh(self) -> Self {
        let t = self.v.re.tanh();
        self.map_real(t, 1.0 - t * t)
    }

    pub fn re(self) -> Self {
        Jet { v: C64::new(self.v.re, 0.0), d: self.d.map(|x| C64::new(x.re, 0.0)) }
    }

    pub fn scale(self, c: C64) -> Self {
        Jet { v: self.v * c, d: self.d.map(|x| x * c) }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: std::array::from_fn(|i| self.d[i] + o.d[i]) }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: std::array::from_fn(|i| self.d[i] - o.d[i]) }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: std::array::from_fn(|i| self.d[i] * o.v + self.v * o.d[i]) }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let inv = 1.0 / o.v;
        Jet { v: self.v * inv, d: std::array::from_fn(|i| (self.d[i] - self.v * inv * o.d[i]) * inv) }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: self.v * c, d: self.d.map(|x| x * c) }
    }
}

/// Point at hyperbolic fraction τ from b to c and its τ-derivative.
pub fn geodesic_jet(b: Jet, c: Jet, tau: f64) -> (Jet, Jet) {
    let one = Jet::real(1.0);
    let beta = (c - b) / (one - b.conj() * c);
    if beta.v.norm() < 1e-6 {
        let p0 = beta * tau;
        let den = one + b.conj() * p0;
        return ((p0 + b) / den, (one - b.norm_sqr()) / (den * den) * beta);
    }
    let r = beta.norm_sqr().sqrt();
    let half = r.atanh();
    let s = (half * tau).tanh();
    let dir = beta / r;
    let p0 = dir * s;
    let den = one + b.conj() * p0;
    let g = (p0 + b) / den;
    let dp0 = dir * ((one - s * s) * half);
    let gt = (one - b.norm_sqr()) / (den * den) * dp0;
    (g, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobius::geodesic_point_and_tangent;

    #[test]
    fn geodesic_jet_matches_point_and_tangent() {
        let b = C64::new(0.3, -0.2);
        let c = C64::new(-0.1, 0.5);
        let (g, gt) = geodesic_jet(Jet::variable(b, 0), Jet::variable(c, 2), 0.37);
        let (p, t) = geodesic_point_and_tangent(b, c, 0.37);
        assert!((g.v - p).norm() < 1e-14);
        assert!((gt.v - t).norm() < 1e-13);
    }

    #[test]
    fn coincident_ends_are_finite() {
        let b = C64::new(0.3, -0.2);
        let (g, gt) = geodesic_jet(Jet::variable(b, 0), Jet::variable(b, 2), 0.4);
        assert!((g.v - b).norm() < 1e-15 && gt.v.norm() < 1e-15);
        assert!((g.d[0] - 0.6).norm() < 1e-12 && (g.d[2] - 0.4).norm() < 1e-12);
        let (p, t) = geodesic_point_and_tangent(b, b, 0.4);
        assert!((p - b).norm() < 1e-15 && t.norm() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = C64::new(0.3, -0.2);
        let c = C64::new(-0.1, 0.5);
        let (g, gt) = geodesic_jet(Jet::variable(b, 0), Jet::variable(c, 2), 0.61);
        let h = 1e-7;
        let shifts = [C64::new(h, 0.0), C64::new(0.0, h)];
        for (i, sh) in shifts.iter().enumerate() {
            let (p1, t1) = geodesic_point_and_tangent(b + sh, c, 0.61);
            let (p0, t0) = geodesic_point_and_tangent(b - sh, c, 0.61);
            assert!(((p1 - p0) / (2.0 * h) - g.d[i]).norm() < 1e-7);
            assert!(((t1 - t0) / (2.0 * h) - gt.d[i]).norm() < 1e-6);
            let (p1, _) = geodesic_point_and_tangent(b, c + sh, 0.61);
            let (p0, _) = geodesic_point_and_tangent(b, c - sh, 0.61);
            assert!(((p1 - p0) / (2.0 * h) - g.d[2 + i]).norm() < 1e-7);
        }
    }
}
