//! Orientation-preserving isometries of the Poincaré disk.
//!
//! An element of SU(1,1) acts by z ↦ (αz+β)/(β̄z+ᾱ). Products are renormalized so that
//! |α|² − |β|² = 1 stays true to rounding.

use num_complex::Complex64 as C64;

/// Disk isometry z ↦ (αz+β)/(β̄z+ᾱ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobius {
    pub alpha: C64,
    pub beta: C64,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        alpha: C64 { re: 1.0, im: 0.0 },
        beta: C64 { re: 0.0, im: 0.0 },
    };

    /// Builds a transform and rescales it onto |α|² − |β|² = 1.
    pub fn new(alpha: C64, beta: C64) -> Self {
        Mobius { alpha, beta }.normalized()
    }

    pub fn normalized(self) -> Self {
        let det = self.alpha.norm_sqr() - self.beta.norm_sqr();
        let s = det.sqrt();
        Mobius {
            alpha: self.alpha / s,
            beta: self.beta / s,
        }
    }

    /// The hyperbolic translation sending 0 to `a`.
    pub fn translation_to(a: C64) -> Self {
        Mobius::new(C64::new(1.0, 0.0), a)
    }

    /// Rotation z ↦ e^{iθ} z.
    pub fn rotation(theta: f64) -> Self {
        Mobius {
            alpha: C64::from_polar(1.0, theta / 2.0),
            beta: C64::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, z: C64) -> C64 {
        (self.alpha * z + self.beta) / (self.beta.conj() * z + self.alpha.conj())
    }

    /// Complex derivative at z.
    pub fn deriv(&self, z: C64) -> C64 {
        let d = self.beta.conj() * z + self.alpha.conj();
        1.0 / (d * d)
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        let a = self.alpha * other.alpha + self.beta * other.beta.conj();
        let b = self.alpha * other.beta + self.beta * other.alpha.conj();
        Mobius { alpha: a, beta: b }.normalized()
    }

    pub fn inverse(&self) -> Mobius {
        Mobius {
            alpha: self.alpha.conj(),
            beta: -self.beta,
        }
    }

    /// Distance to ±identity in matrix entries.
    pub fn deviation_from_identity(&self) -> f64 {
        let plus = (self.alpha - 1.0).norm().max(self.beta.norm());
        let minus = (self.alpha + 1.0).norm().max(self.beta.norm());
        plus.min(minus)
    }

    /// Entrywise distance between the projective classes of two transforms.
    pub fn distance(&self, other: &Mobius) -> f64 {
        let plus = (self.alpha - other.alpha)
            .norm()
            .max((self.beta - other.beta).norm());
        let minus = (self.alpha + other.alpha)
            .norm()
            .max((self.beta + other.beta).norm());
        plus.min(minus)
    }

    /// Sign-normalized copy: Re α > 0, or Re α = 0 and Im α ≥ 0. Makes ±M compare equal.
    pub fn canonical(&self) -> Mobius {
        let flip = self.alpha.re < 0.0 || (self.alpha.re == 0.0 && self.alpha.im < 0.0);
        if flip {
            Mobius {
                alpha: -self.alpha,
                beta: -self.beta,
            }
        } else {
            *self
        }
    }

    /// Translation length: 2 acosh(|Re α|) for hyperbolic elements, 0 otherwise.
    pub fn translation_length(&self) -> f64 {
        let tr = self.alpha.re.abs();
        if tr <= 1.0 {
            0.0
        } else {
            2.0 * tr.acosh()
        }
    }

    /// The unique isometry taking p1 ↦ q1 and p2 ↦ q2. Requires d(p1,p2) = d(q1,q2).
    pub fn from_point_pairs(p1: C64, p2: C64, q1: C64, q2: C64) -> Mobius {
        let tp = Mobius::translation_to(p1).inverse();
        let tq = Mobius::translation_to(q1).inverse();
        let a = tp.apply(p2);
        let b = tq.apply(q2);
        let rot = Mobius::rotation(b.arg() - a.arg());
        tq.inverse().compose(&rot).compose(&tp)
    }
}

/// Hyperbolic distance in the disk with curvature −1.
pub fn disk_distance(z: C64, w: C64) -> f64 {
    let num = (z - w).norm();
    let den = (C64::new(1.0, 0.0) - z.conj() * w).norm();
    2.0 * (num / den).atanh()
}

/// Point at fraction `tau` of the hyperbolic geodesic from `a` to `b`.
pub fn geodesic_point(a: C64, b: C64, tau: f64) -> C64 {
    let t = Mobius::translation_to(a);
    let bp = t.inverse().apply(b);
    let r = bp.norm();
    if r == 0.0 {
        return a;
    }
    let s = (tau * r.atanh()).tanh();
    t.apply(bp * (s / r))
}

/// Point and τ-derivative of the geodesic parametrized proportionally to arclength.
pub fn geodesic_point_and_tangent(a: C64, b: C64, tau: f64) -> (C64, C64) {
    let t = Mobius::translation_to(a);
    let bp = t.inverse().apply(b);
    let r = bp.norm();
    if r < 1e-6 {
        // tanh(τ atanh r)/r = τ + O(r²)
        return (t.apply(bp * tau), t.deriv(bp * tau) * bp);
    }
    let dir = bp / r;
    let big_d = r.atanh();
    let s = (tau * big_d).tanh();
    let zeta = dir * s;
    let dzeta = dir * (big_d * (1.0 - s * s));
    (t.apply(zeta), t.deriv(zeta) * dzeta)
}

/// Conformal factor λ²(z) = 4/(1−|z|²)² of the curvature −1 disk metric.
pub fn conformal_factor(z: C64) -> f64 {
    let s = 1.0 - z.norm_sqr();
    4.0 / (s * s)
}

/// 2 ∂_v log ρ for ρ = 2/(1−|v|²), i.e. 2v̄/(1−|v|²).
pub fn connection_coefficient(v: C64) -> C64 {
    v.conj() * (2.0 / (1.0 - v.norm_sqr()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_composes_to_identity() {
        let m = Mobius::new(c(1.3, 0.4), c(0.2, -0.7));
        let id = m.compose(&m.inverse());
        assert!(id.deviation_from_identity() < 1e-12);
    }

    #[test]
    fn composition_is_associative() {
        let a = Mobius::new(c(1.1, 0.3), c(0.4, 0.1));
        let b = Mobius::new(c(0.9, -0.8), c(-0.3, 0.5));
        let d = Mobius::new(c(2.0, 0.0), c(0.1, 1.2));
        let l = a.compose(&b).compose(&d);
        let r = a.compose(&b.compose(&d));
        assert!(l.distance(&r) < 1e-12);
        let z = c(0.3, -0.2);
        assert!((l.apply(z) - a.apply(b.apply(d.apply(z)))).norm() < 1e-12);
    }

    #[test]
    fn point_pairs_map_exactly() {
        let p1 = c(0.1, 0.2);
        let p2 = c(-0.3, 0.4);
        let q1 = c(0.5, -0.1);
        let shift = Mobius::new(c(1.0, 0.2), c(0.3, -0.1));
        let q2 = shift.apply(p2);
        let q1b = shift.apply(p1);
        let m = Mobius::from_point_pairs(p1, p2, q1b, q2);
        assert!((m.apply(p1) - q1b).norm() < 1e-12);
        assert!((m.apply(p2) - q2).norm() < 1e-12);
        let _ = q1;
    }

    #[test]
    fn isometry_preserves_metric() {
        let m = Mobius::new(c(1.4, -0.2), c(0.6, 0.7));
        for k in 0..20 {
            let z = C64::from_polar(0.05 * k as f64, 0.7 * k as f64);
            let lhs = conformal_factor(m.apply(z)).sqrt() * m.deriv(z).norm();
            assert!((lhs - conformal_factor(z).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn geodesic_midpoint_is_equidistant() {
        let a = c(0.5, 0.1);
        let b = c(-0.2, 0.6);
        let m = geodesic_point(a, b, 0.5);
        assert!((disk_distance(a, m) - disk_distance(m, b)).abs() < 1e-12);
        let (p, dp) = geodesic_point_and_tangent(a, b, 0.3);
        let h = 1e-6;
        let fd = (geodesic_point(a, b, 0.3 + h) - geodesic_point(a, b, 0.3 - h)) / (2.0 * h);
        assert!((p - geodesic_point(a, b, 0.3)).norm() < 1e-14);
        assert!((fd - dp).norm() < 1e-7);
    }

    #[test]
    fn connection_coefficient_matches_log_derivative() {
        let v = c(0.3, -0.45);
        let h = 1e-6;
        let lr = |w: C64| (2.0 / (1.0 - w.norm_sqr())).ln();
        let dx = (lr(v + h) - lr(v - h)) / (2.0 * h);
        let dy = (lr(v + c(0.0, h)) - lr(v - c(0.0, h))) / (2.0 * h);
        let dv = C64::new(dx, -dy) * 0.5;
        assert!((connection_coefficient(v) - dv * 2.0).norm() < 1e-8);
    }
}
