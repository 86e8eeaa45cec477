//! Wolf's expansion of hyperbolic metrics along a Weil–Petersson ray:
//! g(t) = G_zz dz² + 2G_zz̄ |dz|² + G_z̄z̄ dz̄² with
//! G_zz = tq, G_zz̄ = λ²/2 + (t²/2)(|q|²/λ⁴ + α)λ², α = −2(Δ−2)⁻¹(|q|²/λ⁴).
//! The O(t⁴) remainder is dropped.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::mesh::TriangulatedDomain;
use crate::mobius::conformal_factor;
use crate::qdiff::SampledBeltrami;
use crate::quadrature;
use crate::sparse::{conjugate_gradient, jacobi_preconditioner, Csr};

/// Weak-form Laplacian on orbit values: Δ = −M⁻¹K with flat cotangent stiffness K and
/// lumped hyperbolic mass M.
#[derive(Clone, Debug)]
pub struct Laplacian {
    pub stiffness: Csr<f64>,
    pub mass: Vec<f64>,
}

pub fn assemble_laplacian(domain: &TriangulatedDomain) -> Result<Laplacian> {
    let n = domain.num_orbits();
    let mut trip = Vec::with_capacity(9 * domain.faces.len());
    for (i, (f, g)) in domain.faces.iter().zip(&domain.geometry).enumerate() {
        if !(g.area > 0.0) {
            return Err(LabError::Mesh(format!("face {i} has zero area")));
        }
        for k in 0..3 {
            for l in 0..3 {
                let v: f64 = (0..quadrature::N).map(|q| 4.0 * g.weights[q] * (g.grad[q][k] * g.grad[q][l].conj()).re).sum();
                trip.push((domain.slot_orbit[f[k]], domain.slot_orbit[f[l]], v));
            }
        }
    }
    Ok(Laplacian { stiffness: Csr::from_triplets(n, n, trip), mass: domain.lumped_mass() })
}

impl Laplacian {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.stiffness.mul_vec(f).iter().zip(&self.mass).map(|(k, m)| -k / m).collect()
    }

    /// Mass-weighted inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Per-orbit scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    /// Relative residual of the defining solve.
    pub residual: f64,
}

/// Solves (Δ−2)α = −2Q, i.e. (K + 2M)α = 2MQ, for an orbit field Q = |q|²/λ⁴.
pub fn solve_alpha_field(lap: &Laplacian, q_ratio: &[f64], tol: f64, max_iter: usize) -> Result<ScalarField> {
    let n = q_ratio.len();
    let mut trip = Vec::new();
    for i in 0..n {
        for k in lap.stiffness.row_ptr[i]..lap.stiffness.row_ptr[i + 1] {
            trip.push((i, lap.stiffness.cols[k], lap.stiffness.vals[k]));
        }
        trip.push((i, i, 2.0 * lap.mass[i]));
    }
    let a = Csr::from_triplets(n, n, trip);
    let rhs: Vec<f64> = q_ratio.iter().zip(&lap.mass).map(|(q, m)| 2.0 * m * q).collect();
    let diag = a.diagonal();
    let out = conjugate_gradient(|v| a.mul_vec(v), jacobi_preconditioner(&diag), &rhs, tol, max_iter, None)?;
    Ok(ScalarField { values: out.x, residual: out.relative_residual })
}

pub fn solve_alpha(domain: &TriangulatedDomain, lap: &Laplacian, q: &SampledBeltrami) -> Result<ScalarField> {
    solve_alpha_field(lap, &q.vertex_q_ratio(domain), 1e-12, 20 * domain.num_orbits() + 100)
}

/// Metric coefficients at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GMatrix {
    pub g_zz: C64,
    pub g_zzbar: f64,
    pub g_zbarzbar: C64,
}

impl GMatrix {
    pub fn new(lambda2: f64, q: C64, alpha: f64, t: f64) -> Self {
        let q_ratio = q.norm_sqr() / (lambda2 * lambda2);
        GMatrix {
            g_zz: q * t,
            g_zzbar: 0.5 * lambda2 + 0.5 * t * t * (q_ratio + alpha) * lambda2,
            g_zbarzbar: q.conj() * t,
        }
    }

    /// G_zz G_z̄z̄ − G_zz̄², negative for a Riemannian metric.
    pub fn det(&self) -> f64 {
        (self.g_zz * self.g_zbarzbar).re - self.g_zzbar * self.g_zzbar
    }

    /// √|det G|, the density of dμ_{g(t)} against i dz∧dz̄.
    pub fn volume_element(&self) -> f64 {
        self.det().abs().sqrt()
    }

    /// Coefficients (a, b) of the energy integrand ρ²[a S − 2 Re(b ū_z u_z̄)] per chart area.
    pub fn energy_coefficients(&self) -> (f64, C64) {
        let v = self.volume_element();
        (self.g_zzbar / v, self.g_zz / v)
    }
}

/// Data of the family g(t) sampled at the quadrature nodes and centroids of a domain.
#[derive(Clone, Debug)]
pub struct WolfMetricFamily {
    pub q: SampledBeltrami,
    pub alpha: ScalarField,
    pub t_max: f64,
    /// α interpolated to quadrature nodes and centroids.
    pub node_alpha: Vec<[f64; quadrature::N]>,
    pub centroid_alpha: Vec<f64>,
}

/// Default range: |t μ| ≤ 0.05 everywhere, so the t² corrections stay below a few
/// thousandths of the leading term.
pub fn auto_t_max(q: &SampledBeltrami, domain: &TriangulatedDomain) -> f64 {
    let m = q.max_mu(domain);
    if m > 0.0 {
        0.05 / m
    } else {
        1.0
    }
}

impl WolfMetricFamily {
    pub fn new(domain: &TriangulatedDomain, q: SampledBeltrami, alpha: ScalarField, t_max: f64) -> Self {
        let mut node_alpha = Vec::with_capacity(domain.faces.len());
        let mut centroid_alpha = Vec::with_capacity(domain.faces.len());
        for (f, g) in domain.faces.iter().zip(&domain.geometry) {
            let a = f.map(|s| alpha.values[domain.slot_orbit[s]]);
            node_alpha.push(std::array::from_fn(|qi| {
                let l = g.bary[qi];
                a[0] * l[0] + a[1] * l[1] + a[2] * l[2]
            }));
            centroid_alpha.push((a[0] + a[1] + a[2]) / 3.0);
        }
        WolfMetricFamily { q, alpha, t_max, node_alpha, centroid_alpha }
    }

    /// Builds the family for q: assembles Δ, solves for α, picks t_max (auto if `None`).
    pub fn build(domain: &TriangulatedDomain, q: SampledBeltrami, t_max: Option<f64>) -> Result<Self> {
        let lap = assemble_laplacian(domain)?;
        let alpha = solve_alpha(domain, &lap, &q)?;
        let t_max = t_max.unwrap_or_else(|| auto_t_max(&q, domain));
        Ok(Self::new(domain, q, alpha, t_max))
    }

    /// The constant family (q = 0).
    pub fn flat(domain: &TriangulatedDomain) -> Self {
        let alpha = ScalarField { values: vec![0.0; domain.num_orbits()], residual: 0.0 };
        Self::new(domain, SampledBeltrami::zero(domain), alpha, 1.0)
    }

    pub fn check_t(&self, t: f64) -> Result<()> {
        if t.abs() > self.t_max * (1.0 + 1e-12) {
            return Err(LabError::OutOfRange { t, t_max: self.t_max });
        }
        Ok(())
    }

    pub fn metric_at_node(&self, domain: &TriangulatedDomain, t: f64, f: usize, qi: usize) -> Result<GMatrix> {
        self.check_t(t)?;
        let z = domain.geometry[f].nodes[qi];
        Ok(GMatrix::new(conformal_factor(z), self.q.node_q[f][qi], self.node_alpha[f][qi], t))
    }

    pub fn metric_at_centroid(&self, domain: &TriangulatedDomain, t: f64, f: usize) -> Result<GMatrix> {
        self.check_t(t)?;
        let z = domain.geometry[f].centroid;
        Ok(GMatrix::new(conformal_factor(z), self.q.centroid_q[f], self.centroid_alpha[f], t))
    }

    /// G(t) at a vertex orbit's representative.
    pub fn metric_at_orbit(&self, domain: &TriangulatedDomain, t: f64, o: usize) -> Result<GMatrix> {
        self.check_t(t)?;
        let z = domain.orbit_position(o);
        Ok(GMatrix::new(conformal_factor(z), self.q.vertex_q[o], self.alpha.values[o], t))
    }

    pub fn volume_element_at_node(&self, domain: &TriangulatedDomain, t: f64, f: usize, qi: usize) -> Result<f64> {
        Ok(self.metric_at_node(domain, t, f, qi)?.volume_element())
    }

    /// Energy coefficients (a, b) at every node for a fixed t.
    pub fn coefficients(&self, domain: &TriangulatedDomain, t: f64) -> Result<Vec<[(f64, C64); quadrature::N]>> {
        self.check_t(t)?;
        Ok((0..domain.faces.len())
            .map(|f| {
                std::array::from_fn(|qi| {
                    let z = domain.geometry[f].nodes[qi];
                    GMatrix::new(conformal_factor(z), self.q.node_q[f][qi], self.node_alpha[f][qi], t).energy_coefficients()
                })
            })
            .collect())
    }

    /// min over orbits of α − |q|²/(3λ⁴), and max |q|²/λ⁴.
    pub fn alpha_bound_margin(&self, domain: &TriangulatedDomain) -> (f64, f64) {
        let qr = self.q.vertex_q_ratio(domain);
        let margin = self
            .alpha
            .values
            .iter()
            .zip(&qr)
            .map(|(a, q)| a - q / 3.0)
            .fold(f64::INFINITY, f64::min);
        (margin, qr.iter().copied().fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangulate;
    use crate::qdiff::{beltrami_from_q, poincare_series};
    use crate::surface::build_surface;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn domain(level: usize) -> TriangulatedDomain {
        triangulate(&build_surface(2).unwrap(), level).unwrap()
    }

    #[test]
    fn constants_are_harmonic_and_mass_partitions_area() {
        let d = domain(2);
        let lap = assemble_laplacian(&d).unwrap();
        let ones = vec![1.0; d.num_orbits()];
        assert!(lap.apply(&ones).iter().all(|v| v.abs() < 1e-12));
        assert!((lap.total_mass() - d.hyperbolic_area()).abs() < 1e-12 * d.hyperbolic_area());
    }

    #[test]
    fn laplacian_is_mass_symmetric_and_negative() {
        let d = domain(2);
        let lap = assemble_laplacian(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f: Vec<f64> = (0..d.num_orbits()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..d.num_orbits()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = lap.inner(&lap.apply(&f), &g);
            let rhs = lap.inner(&f, &lap.apply(&g));
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
            let shifted: Vec<f64> = lap.apply(&f).iter().zip(&f).map(|(a, b)| a - 2.0 * b).collect();
            assert!(lap.inner(&shifted, &f) <= -2.0 * lap.inner(&f, &f) + 1e-10);
        }
    }

    #[test]
    fn alpha_of_zero_and_constant_sources() {
        let d = domain(2);
        let lap = assemble_laplacian(&d).unwrap();
        let zero = solve_alpha_field(&lap, &vec![0.0; d.num_orbits()], 1e-12, 1000).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let c = solve_alpha_field(&lap, &vec![0.7; d.num_orbits()], 1e-13, 1000).unwrap();
        assert!(c.values.iter().all(|v| (v - 0.7).abs() < 1e-9));
    }

    #[test]
    fn alpha_satisfies_pointwise_bound() {
        let d = domain(3);
        let q = SampledBeltrami::new(&beltrami_from_q(poincare_series(&d.base, 0, 4).unwrap()), &d);
        let fam = WolfMetricFamily::build(&d, q, None).unwrap();
        let (margin, qmax) = fam.alpha_bound_margin(&d);
        assert!(margin >= -1e-6 * qmax, "{margin} {qmax}");
        assert!(fam.alpha.residual <= 1e-10);
    }

    #[test]
    fn metric_parity_and_initial_values() {
        let l2 = 5.3;
        let q = C64::new(0.4, -1.1);
        let g0 = GMatrix::new(l2, q, 0.2, 0.0);
        assert_eq!(g0.det(), -l2 * l2 / 4.0);
        assert_eq!(g0.volume_element(), l2 / 2.0);
        for t in [0.01, 0.1, 0.3] {
            assert_eq!(GMatrix::new(l2, q, 0.2, t).det(), GMatrix::new(l2, q, 0.2, -t).det());
        }
        let flat = GMatrix::new(l2, C64::new(0.0, 0.0), 0.0, 0.2);
        assert_eq!(flat.det(), -l2 * l2 / 4.0);
        let h = 1e-4;
        let dv = (GMatrix::new(l2, q, 0.2, h).volume_element() - GMatrix::new(l2, q, 0.2, -h).volume_element()) / (2.0 * h);
        assert!(dv.abs() <= 1e-6 * l2);
    }

    #[test]
    fn out_of_range_t_is_rejected() {
        let d = domain(1);
        let fam = WolfMetricFamily::flat(&d);
        assert!(matches!(fam.metric_at_node(&d, 2.0, 0, 0), Err(LabError::OutOfRange { .. })));
    }

    #[test]
    fn volume_integral_at_zero_is_area() {
        let d = domain(2);
        let q = SampledBeltrami::new(&beltrami_from_q(poincare_series(&d.base, 0, 3).unwrap()), &d);
        let fam = WolfMetricFamily::build(&d, q, None).unwrap();
        let mut s = 0.0;
        for f in 0..d.faces.len() {
            for qi in 0..quadrature::N {
                // i dz∧dz̄ = 2 dA
                s += 2.0 * d.geometry[f].weights[qi] * fam.volume_element_at_node(&d, 0.0, f, qi).unwrap();
            }
        }
        assert!((s - d.hyperbolic_area()).abs() <= 1e-12 * s);
    }
}
