//! Holomorphic quadratic differentials from truncated Poincaré series, harmonic
//! Beltrami differentials, and the Weil–Petersson pairing.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::mesh::TriangulatedDomain;
use crate::mobius::{conformal_factor, Mobius};
use crate::quadrature;
use crate::surface::{enumerate_elements, word_hom, CyclicCover, FuchsianSurface};

/// q(z) = s · Σ_{|γ|≤L} (γz)^m γ′(z)², one sum per sheet of a cyclic cover.
#[derive(Clone, Debug)]
pub struct QuadraticDifferential {
    pub seed_power: u32,
    pub truncation: usize,
    /// Overall real multiplier (used for normalization).
    pub scale: f64,
    /// Group elements of each coset class (one class unless the domain is a cover).
    terms: Vec<Vec<Mobius>>,
}

impl QuadraticDifferential {
    fn from_group(gens: &[Mobius], hom: &[usize], classes: usize, m: u32, l: usize) -> Self {
        let mut terms = vec![Vec::new(); classes];
        for e in enumerate_elements(gens, l) {
            let k = if classes > 1 { word_hom(hom, classes, &e.word) } else { 0 };
            terms[k].push(e.transform);
        }
        QuadraticDifferential { seed_power: m, truncation: l, scale: 1.0, terms }
    }

    /// q ≡ 1 on a group with no generators; used as a degenerate-free reference.
    pub fn trivial_group(m: u32) -> Self {
        QuadraticDifferential { seed_power: m, truncation: 0, scale: 1.0, terms: vec![vec![Mobius::IDENTITY]] }
    }

    pub fn zero() -> Self {
        QuadraticDifferential { seed_power: 0, truncation: 0, scale: 0.0, terms: vec![Vec::new()] }
    }

    pub fn num_terms(&self) -> usize {
        self.terms.iter().map(|t| t.len()).sum()
    }

    pub fn sheets(&self) -> usize {
        self.terms.len()
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.scale = s;
        self
    }

    /// Value in the chart of `sheet`.
    pub fn eval(&self, z: C64, sheet: usize) -> C64 {
        let m = self.seed_power as i32;
        let mut s = C64::new(0.0, 0.0);
        for g in &self.terms[sheet] {
            let inv = 1.0 / (g.beta.conj() * z + g.alpha.conj());
            let inv2 = inv * inv;
            let d2 = inv2 * inv2;
            if m == 0 {
                s += d2;
            } else {
                let w = (g.alpha * z + g.beta) * inv;
                s += w.powi(m) * d2;
            }
        }
        s * self.scale
    }

    /// max over samples and generators of |q(γz)γ′(z)² − q(z)|.
    pub fn automorphy_residual(&self, gens: &[Mobius], samples: &[C64]) -> f64 {
        let mut worst: f64 = 0.0;
        for g in gens {
            for &z in samples {
                let d = g.deriv(z);
                let lhs = self.eval(g.apply(z), 0) * d * d;
                worst = worst.max((lhs - self.eval(z, 0)).norm());
            }
        }
        worst
    }

    /// Cauchy–Riemann residual |∂_z̄ q| by central differences, worst over samples.
    pub fn cauchy_riemann_residual(&self, samples: &[C64], step: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for &z in samples {
            let dx = (self.eval(z + step, 0) - self.eval(z - step, 0)) / (2.0 * step);
            let dy = (self.eval(z + C64::new(0.0, step), 0) - self.eval(z - C64::new(0.0, step), 0)) / (2.0 * step);
            worst = worst.max(((dx + C64::i() * dy) * 0.5).norm());
        }
        worst
    }

    pub fn max_abs(&self, samples: &[C64]) -> f64 {
        samples.iter().map(|&z| self.eval(z, 0).norm()).fold(0.0, f64::max)
    }
}

/// Fixed interior sample points of a polygon: the centre and rings towards the corners.
pub fn polygon_samples(surface: &FuchsianSurface, count: usize) -> Vec<C64> {
    let n = surface.polygon.len();
    (0..count)
        .map(|i| {
            let v = surface.polygon[i % n];
            let w = surface.polygon[(i + 1) % n];
            let s = 0.15 + 0.7 * ((i * 7919) % 97) as f64 / 97.0;
            let t = ((i * 104729) % 89) as f64 / 89.0;
            (v * (1.0 - t) + w * t) * s
        })
        .collect()
}

fn check_nondegenerate(q: QuadraticDifferential, samples: &[C64]) -> Result<QuadraticDifferential> {
    let mut worst: f64 = 0.0;
    for k in 0..q.sheets() {
        for &z in samples {
            worst = worst.max(q.eval(z, k).norm());
        }
    }
    if worst < 1e-14 {
        return Err(LabError::DegenerateDifferential(worst));
    }
    Ok(q)
}

/// Poincaré series of weight 4 with seed w^m over words of length ≤ L.
pub fn poincare_series(surface: &FuchsianSurface, m: u32, l: usize) -> Result<QuadraticDifferential> {
    let q = QuadraticDifferential::from_group(&surface.generators, &[], 1, m, l);
    check_nondegenerate(q, &polygon_samples(surface, 50))
}

/// Poincaré series over the cover group, written in the sheet charts: sheet k sums the
/// base elements of word length ≤ L in the coset of c_k.
pub fn poincare_series_on_cover(cover: &CyclicCover, m: u32, l: usize) -> Result<QuadraticDifferential> {
    let q = QuadraticDifferential::from_group(&cover.base.generators, &cover.hom, cover.degree, m, l);
    check_nondegenerate(q, &polygon_samples(&cover.base, 50))
}

/// μ = q̄/λ².
#[derive(Clone, Debug)]
pub struct HarmonicBeltrami {
    pub q: QuadraticDifferential,
}

pub fn beltrami_from_q(q: QuadraticDifferential) -> HarmonicBeltrami {
    HarmonicBeltrami { q }
}

impl HarmonicBeltrami {
    pub fn eval(&self, z: C64, sheet: usize) -> C64 {
        self.q.eval(z, sheet).conj() / conformal_factor(z)
    }
}

/// q and μ sampled on a triangulation.
#[derive(Clone, Debug)]
pub struct SampledBeltrami {
    pub node_q: Vec<[C64; quadrature::N]>,
    pub centroid_q: Vec<C64>,
    /// q at each orbit representative.
    pub vertex_q: Vec<C64>,
}

impl SampledBeltrami {
    pub fn new(mu: &HarmonicBeltrami, domain: &TriangulatedDomain) -> Self {
        let node_q = domain
            .geometry
            .iter()
            .zip(&domain.face_sheet)
            .map(|(g, &k)| g.nodes.map(|z| mu.q.eval(z, k)))
            .collect();
        let centroid_q = domain
            .geometry
            .iter()
            .zip(&domain.face_sheet)
            .map(|(g, &k)| mu.q.eval(g.centroid, k))
            .collect();
        let vertex_q = (0..domain.num_orbits())
            .map(|o| {
                let s = domain.orbit_rep[o];
                mu.q.eval(domain.vertices[s], s / (domain.vertices.len() / domain.sheets))
            })
            .collect();
        SampledBeltrami { node_q, centroid_q, vertex_q }
    }

    pub fn zero(domain: &TriangulatedDomain) -> Self {
        let z = C64::new(0.0, 0.0);
        SampledBeltrami {
            node_q: vec![[z; quadrature::N]; domain.faces.len()],
            centroid_q: vec![z; domain.faces.len()],
            vertex_q: vec![z; domain.num_orbits()],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        SampledBeltrami {
            node_q: self.node_q.iter().map(|a| a.map(|v| v * c)).collect(),
            centroid_q: self.centroid_q.iter().map(|v| v * c).collect(),
            vertex_q: self.vertex_q.iter().map(|v| v * c).collect(),
        }
    }

    pub fn mu_at_node(&self, domain: &TriangulatedDomain, f: usize, q: usize) -> C64 {
        self.node_q[f][q].conj() / conformal_factor(domain.geometry[f].nodes[q])
    }

    pub fn mu_at_centroid(&self, domain: &TriangulatedDomain, f: usize) -> C64 {
        self.centroid_q[f].conj() / conformal_factor(domain.geometry[f].centroid)
    }

    /// |q|²/λ⁴ at each orbit.
    pub fn vertex_q_ratio(&self, domain: &TriangulatedDomain) -> Vec<f64> {
        self.vertex_q
            .iter()
            .enumerate()
            .map(|(o, q)| {
                let l2 = conformal_factor(domain.orbit_position(o));
                q.norm_sqr() / (l2 * l2)
            })
            .collect()
    }

    /// max over nodes of |μ|.
    pub fn max_mu(&self, domain: &TriangulatedDomain) -> f64 {
        let mut m: f64 = 0.0;
        for f in 0..domain.faces.len() {
            for q in 0..quadrature::N {
                m = m.max(self.mu_at_node(domain, f, q).norm());
            }
        }
        m
    }
}

/// ∫ |μ|² λ² dA = ∫ |q|²/λ² dA.
pub fn wp_norm_sq(mu: &SampledBeltrami, domain: &TriangulatedDomain) -> f64 {
    let mut s = 0.0;
    for (f, g) in domain.geometry.iter().enumerate() {
        for q in 0..quadrature::N {
            s += g.weights[q] * mu.node_q[f][q].norm_sqr() / conformal_factor(g.nodes[q]);
        }
    }
    s
}

/// Re ∫ φ μ dA with φ given at the quadrature nodes.
pub fn qb_pairing(phi: &[[C64; quadrature::N]], mu: &SampledBeltrami, domain: &TriangulatedDomain) -> f64 {
    let mut s = 0.0;
    for (f, g) in domain.geometry.iter().enumerate() {
        for q in 0..quadrature::N {
            s += g.weights[q] * (phi[f][q] * mu.mu_at_node(domain, f, q)).re;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangulate;
    use crate::surface::build_surface;

    #[test]
    fn trivial_group_gives_one() {
        let q = QuadraticDifferential::trivial_group(0);
        for z in [C64::new(0.1, 0.2), C64::new(-0.5, 0.3)] {
            assert!((q.eval(z, 0) - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn automorphy_improves_with_truncation() {
        let s = build_surface(2).unwrap();
        let samples = polygon_samples(&s, 50);
        let q4 = poincare_series(&s, 0, 4).unwrap();
        let q6 = poincare_series(&s, 0, 6).unwrap();
        let r4 = q4.automorphy_residual(&s.generators, &samples) / q4.max_abs(&samples);
        let r6 = q6.automorphy_residual(&s.generators, &samples) / q6.max_abs(&samples);
        assert!(r6 <= r4 + 1e-12, "{r6} vs {r4}");
        assert!(r6 < 1e-3);
    }

    #[test]
    fn series_is_holomorphic() {
        let s = build_surface(2).unwrap();
        let samples = polygon_samples(&s, 20);
        let q = poincare_series(&s, 2, 4).unwrap();
        assert!(q.cauchy_riemann_residual(&samples, 1e-5) <= 1e-6 * q.max_abs(&samples));
    }

    #[test]
    fn beltrami_identities() {
        let s = build_surface(2).unwrap();
        let q = poincare_series(&s, 1, 3).unwrap();
        let mu = beltrami_from_q(q.clone());
        for z in polygon_samples(&s, 10) {
            let l2 = conformal_factor(z);
            let lhs = mu.eval(z, 0).norm_sqr() * l2;
            let rhs = q.eval(z, 0).norm_sqr() / l2;
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
        let zero = beltrami_from_q(QuadraticDifferential::zero());
        assert_eq!(zero.eval(C64::new(0.2, 0.1), 0), C64::new(0.0, 0.0));
    }

    #[test]
    fn pairing_with_itself_is_the_norm() {
        let s = build_surface(2).unwrap();
        let d = triangulate(&s, 2).unwrap();
        let mu = SampledBeltrami::new(&beltrami_from_q(poincare_series(&s, 0, 3).unwrap()), &d);
        let n = wp_norm_sq(&mu, &d);
        assert!(n > 0.0);
        assert!((qb_pairing(&mu.node_q, &mu, &d) - n).abs() <= 1e-12 * n);
        let iq: Vec<_> = mu.node_q.iter().map(|a| a.map(|v| v * C64::i())).collect();
        assert!(qb_pairing(&iq, &mu, &d).abs() <= 1e-12 * n);
        assert!((wp_norm_sq(&mu.scaled(2.0), &d) - 4.0 * n).abs() <= 1e-12 * n);
    }
}
