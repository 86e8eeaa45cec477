//! Energy along Wolf's family E(t), its first and second derivatives at t = 0 by finite
//! differences and by the closed formulas, and certificates for critical points and
//! covering maps.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::harmonic::{
    degree, energy_report, holomorphy_residual, hopf_at_nodes, hopf_differential, minimize, DegreeReport,
    EnergyReport, EquivariantMap, SolverOptions,
};
use crate::jacobi::JacobiSystem;
use crate::mesh::{triangulate, TriangulatedDomain};
use crate::mobius::Mobius;
use crate::qdiff::{beltrami_from_q, poincare_series_on_cover, qb_pairing, wp_norm_sq, SampledBeltrami};
use crate::surface::{build_cyclic_cover, build_perturbed_surface, build_surface, CyclicCover};
use crate::wolf::WolfMetricFamily;

/// A domain triangulation together with a starting map in a fixed homotopy class.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: String,
    pub cover: CyclicCover,
    pub domain: TriangulatedDomain,
    pub start: EquivariantMap,
    /// Euler characteristic of the target surface.
    pub target_chi: i64,
}

impl Scenario {
    /// The degree-d cyclic cover Σ → S of the regular genus-g surface (d = 1 is the identity).
    pub fn covering(genus: usize, d: usize, level: usize) -> Result<Self> {
        let base = build_surface(genus)?;
        let mut hom = vec![0; 2 * genus];
        hom[0] = 1;
        let cover = build_cyclic_cover(&base, &hom, d)?;
        let domain = triangulate(&base, level)?.lift_to_cover(&cover)?;
        let start = EquivariantMap::identity(&domain);
        let id = if d == 1 { format!("identity-g{genus}") } else { format!("covering-g{genus}-d{d}") };
        Ok(Scenario { id, cover, domain, start, target_chi: 2 - 2 * genus as i64 })
    }

    /// Maps from the regular surface to a randomly perturbed one in the class of the
    /// marking; the harmonic map is not conformal, so t = 0 is not critical.
    pub fn perturbed_target(genus: usize, level: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let mut sc = Self::covering(genus, 1, level)?;
        let target = build_perturbed_surface(genus, amplitude, &mut ChaCha8Rng::seed_from_u64(seed))?;
        sc.start.phi = target.generators;
        sc.id = format!("perturbed-g{genus}");
        Ok(sc)
    }

    /// A constant map with trivial holonomy; degree 0 and du ≡ 0.
    pub fn constant(genus: usize, level: usize) -> Result<Self> {
        let mut sc = Self::covering(genus, 1, level)?;
        sc.start = EquivariantMap {
            phi: vec![Mobius::IDENTITY; 2 * genus],
            values: vec![C64::new(0.0, 0.0); sc.domain.num_orbits()],
        };
        sc.id = format!("constant-g{genus}");
        Ok(sc)
    }

    pub fn domain_chi(&self) -> i64 {
        self.cover.degree as i64 * self.target_chi
    }

    /// Area(Σ) = −2πχ(Σ).
    pub fn area(&self) -> f64 {
        -2.0 * std::f64::consts::PI * self.domain_chi() as f64
    }

    /// Beltrami differential of the Poincaré series with seed power `m`, scaled to unit
    /// Weil–Petersson norm. Truncation 0 gives μ = 0.
    pub fn beltrami(&self, m: u32, truncation: usize) -> Result<SampledBeltrami> {
        if truncation == 0 {
            return Ok(SampledBeltrami::zero(&self.domain));
        }
        let q = poincare_series_on_cover(&self.cover, m, truncation)?;
        let mu = SampledBeltrami::new(&beltrami_from_q(q), &self.domain);
        let n = wp_norm_sq(&mu, &self.domain);
        Ok(mu.scaled(1.0 / n.sqrt()))
    }

    /// Harmonic map at t = 0.
    pub fn solve(&self, opts: SolverOptions) -> Result<(EquivariantMap, EnergyReport)> {
        minimize(&self.start, &self.domain, &WolfMetricFamily::flat(&self.domain), 0.0, opts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// E(t) on the grid {kh : |k| ≤ K} with central differences at 0 and their
/// Richardson error estimates from the steps h and 2h.
#[derive(Clone, Debug)]
pub struct EnergyCurve {
    pub samples: Vec<CurveSample>,
    pub h: f64,
    pub fd_first: f64,
    pub fd_first_err: f64,
    pub fd_second: f64,
    pub fd_second_err: f64,
}

impl EnergyCurve {
    pub fn energy_at_zero(&self) -> f64 {
        self.samples[self.samples.len() / 2].energy
    }

    /// min_t E(t) − E(0).
    pub fn min_excess(&self) -> f64 {
        let e0 = self.energy_at_zero();
        self.samples.iter().map(|s| s.energy - e0).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy,grad_norm\n");
        for x in &self.samples {
            s.push_str(&format!("{:e},{:e},{:e}\n", x.t, x.energy, x.grad_norm));
        }
        s
    }
}

/// Samples E(t) on a symmetric grid of `points` (odd, ≥ 5) values in ±t_max/2, with step
/// h = t_max/(points − 1), warm starting outward from the harmonic map at t = 0.
pub fn energy_curve(
    map0: &EquivariantMap,
    domain: &TriangulatedDomain,
    family: &WolfMetricFamily,
    points: usize,
    opts: SolverOptions,
) -> Result<EnergyCurve> {
    if points < 5 || points % 2 == 0 {
        return Err(LabError::InvalidArgument(format!("grid needs an odd number ≥ 5 of points, got {points}")));
    }
    let k = (points / 2) as i64;
    let h = family.t_max / (points - 1) as f64;
    let solve = |m: &EquivariantMap, t: f64| {
        minimize(m, domain, family, t, opts).map_err(|e| LabError::Curve { t, source: Box::new(e) })
    };
    let (m0, r0) = solve(map0, 0.0)?;
    let mut samples = vec![CurveSample { t: 0.0, energy: r0.energy, grad_norm: r0.gradient_norm, iterations: r0.iterations }];
    for dir in [-1.0, 1.0] {
        let mut m = m0.clone();
        for i in 1..=k {
            let t = dir * i as f64 * h;
            let (mi, r) = solve(&m, t)?;
            samples.push(CurveSample { t, energy: r.energy, grad_norm: r.gradient_norm, iterations: r.iterations });
            m = mi;
        }
    }
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    let c = k as usize;
    let e = |i: i64| samples[(c as i64 + i) as usize].energy;
    let d1 = |s: i64| (e(s) - e(-s)) / (2.0 * s as f64 * h);
    let d2 = |s: i64| (e(s) - 2.0 * e(0) + e(-s)) / (s as f64 * h).powi(2);
    Ok(EnergyCurve {
        samples: samples.clone(),
        h,
        fd_first: (4.0 * d1(1) - d1(2)) / 3.0,
        fd_first_err: (d1(1) - d1(2)).abs() / 3.0,
        fd_second: (4.0 * d2(1) - d2(2)) / 3.0,
        fd_second_err: (d2(1) - d2(2)).abs() / 3.0,
    })
}

/// dE/dt at t = 0 for a harmonic map: −4 Re∫ φμ with φ the Hopf differential.
pub fn first_variation_formula(map: &EquivariantMap, domain: &TriangulatedDomain, mu: &SampledBeltrami) -> Result<f64> {
    Ok(-4.0 * qb_pairing(&hopf_at_nodes(map, domain)?, mu, domain))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondVariation {
    /// 2(∫|du|²|q|²/λ⁴ − ⟨JV, V⟩).
    pub value: f64,
    /// ‖i_μdu‖², half of ∫|du|²|q|²/λ⁴.
    pub form_norm_sq: f64,
    pub jvv: f64,
    /// ⟨JV, V⟩ after adding each numerical-kernel vector to V.
    pub jvv_shifted: Vec<f64>,
    pub harmonic_norm_sq: f64,
    /// 4(‖H(i_μdu)‖² − Re⟨(∇^{0,1})*i_μdu, J⁻¹C(∇^{0,1})*i_μdu⟩).
    pub lower_bound: f64,
    pub solve_residual: f64,
}

pub fn second_variation_formula(
    sys: &JacobiSystem,
    domain: &TriangulatedDomain,
    mu: &SampledBeltrami,
    tol: f64,
    max_iter: usize,
) -> Result<SecondVariation> {
    let (om, rhs) = sys.rhs_from_mu(mu, domain);
    let sol = sys.solve_jacobi(&rhs, tol, max_iter)?;
    let jvv = sys.section_inner(&sys.jacobi_apply(&sol.v), &sol.v).re;
    let jvv_shifted = sys
        .kernel
        .iter()
        .map(|e| {
            let v = sol.v.combine(e, 1.0, 1.0);
            sys.section_inner(&sys.jacobi_apply(&v), &v).re
        })
        .collect();
    let w2 = sys.form_norm(&om).powi(2);
    let h = sys.harmonic_projection(&om, 1e-12, max_iter)?;
    let hn = sys.form_norm(&h).powi(2);
    let a = sys.d01_adjoint(&om);
    let cross = sys.solve_jacobi(&a.conjugate(), tol, max_iter)?;
    let cross = sys.section_inner(&a, &cross.v).re;
    Ok(SecondVariation {
        value: 2.0 * (2.0 * w2 - jvv),
        form_norm_sq: w2,
        jvv,
        jvv_shifted,
        harmonic_norm_sq: hn,
        lower_bound: 4.0 * (hn - cross),
        solve_residual: sol.residual,
    })
}

/// Finite-difference and closed-form derivatives for one μ.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivRow {
    pub mu_id: u32,
    pub fd1: f64,
    pub fd1_err: f64,
    pub formula1: f64,
    pub fd2: f64,
    pub fd2_err: f64,
    pub formula2: f64,
    pub wp4: f64,
    pub hproj4: f64,
    pub lower_bound: f64,
    pub jvv: f64,
    /// max relative change of ⟨JV, V⟩ under adding kernel vectors (0 without kernel).
    pub kernel_shift: f64,
    pub min_excess: f64,
}

pub fn derivs_csv(rows: &[DerivRow]) -> String {
    let mut s = String::from("mu_id,fd1,formula1,fd2,formula2,wp4,hproj4\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            r.mu_id, r.fd1, r.formula1, r.fd2, r.formula2, r.wp4, r.hproj4
        ));
    }
    s
}

/// Tolerances and run parameters shared by the certificates.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub solver: SolverOptions,
    pub q_truncation: usize,
    pub grid_points: usize,
    /// Overrides the automatic t_max.
    pub t_max: Option<f64>,
    pub kernel_kappa: f64,
    /// Hopf sup-norm relative to the mean density below which t = 0 counts as critical.
    pub critical_tol: f64,
    pub density_tol: f64,
    pub area_tol: f64,
    pub jacobi_tol: f64,
    pub jacobi_max_iter: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            solver: SolverOptions::default(),
            q_truncation: 6,
            grid_points: 5,
            t_max: None,
            kernel_kappa: 1e-10,
            critical_tol: 1e-2,
            density_tol: 1e-2,
            area_tol: 1e-2,
            jacobi_tol: 1e-8,
            jacobi_max_iter: 20000,
        }
    }
}

/// Derivative row for μ = `scenario.beltrami(m)`: energy curve, both formulas, the WP
/// norm and the harmonic projection.
pub fn variation_row(
    scenario: &Scenario,
    map0: &EquivariantMap,
    sys: &JacobiSystem,
    m: u32,
    opts: &CertifyOptions,
) -> Result<(DerivRow, EnergyCurve)> {
    let d = &scenario.domain;
    let mu = scenario.beltrami(m, opts.q_truncation)?;
    let family = WolfMetricFamily::build(d, mu.clone(), opts.t_max)?;
    let curve = energy_curve(map0, d, &family, opts.grid_points, opts.solver)?;
    let sv = second_variation_formula(sys, d, &mu, opts.jacobi_tol, opts.jacobi_max_iter)?;
    let kernel_shift = sv
        .jvv_shifted
        .iter()
        .map(|x| (x - sv.jvv).abs() / sv.jvv.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let row = DerivRow {
        mu_id: m,
        fd1: curve.fd_first,
        fd1_err: curve.fd_first_err,
        formula1: first_variation_formula(map0, d, &mu)?,
        fd2: curve.fd_second,
        fd2_err: curve.fd_second_err,
        formula2: sv.value,
        wp4: 4.0 * wp_norm_sq(&mu, d),
        hproj4: 4.0 * sv.harmonic_norm_sq,
        lower_bound: sv.lower_bound,
        jvv: sv.jvv,
        kernel_shift,
        min_excess: curve.min_excess(),
    };
    Ok((row, curve))
}

/// One recorded check; `pass` is recomputable from `value` and the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Check { name: name.into(), value, lower, upper, pass: value >= lower && value <= upper }
    }

    pub fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        Self::new(name, value, f64::NEG_INFINITY, upper)
    }

    pub fn at_least(name: impl Into<String>, value: f64, lower: f64) -> Self {
        Self::new(name, value, lower, f64::INFINITY)
    }
}

#[derive(Clone, Debug)]
pub struct CertificationReport {
    pub scenario: String,
    pub is_critical: bool,
    pub hopf_sup: f64,
    pub mean_density: f64,
    pub density_min: f64,
    pub density_max: f64,
    pub energy: f64,
    pub area: f64,
    pub degree: Option<DegreeReport>,
    /// deg·χ(S) − χ(Σ); zero means no ramification is expected.
    pub ramification_defect: Option<i64>,
    pub kernel_dim: usize,
    pub rows: Vec<DerivRow>,
    /// min formula2 / wp over μ, reported when the density never vanishes.
    pub strict_convexity: Option<f64>,
    pub curves: Vec<EnergyCurve>,
    pub checks: Vec<Check>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}: {v}\n"));
        kv("scenario", self.scenario.clone());
        kv("passed", self.passed().to_string());
        kv("is_critical", self.is_critical.to_string());
        kv("hopf_sup", format!("{:e}", self.hopf_sup));
        kv("mean_density", format!("{:e}", self.mean_density));
        kv("density_min", format!("{:e}", self.density_min));
        kv("density_max", format!("{:e}", self.density_max));
        kv("energy", format!("{:e}", self.energy));
        kv("area", format!("{:e}", self.area));
        if let Some(d) = &self.degree {
            kv("degree", d.degree.to_string());
            kv("degree_value", format!("{:e}", d.value));
        }
        if let Some(r) = self.ramification_defect {
            kv("ramification_defect", r.to_string());
        }
        kv("kernel_dim", self.kernel_dim.to_string());
        if let Some(c) = self.strict_convexity {
            kv("strict_convexity", format!("{c:e}"));
        }
        for r in &self.rows {
            let p = format!("mu{}", r.mu_id);
            for (k, v) in [
                ("fd1", r.fd1),
                ("fd1_err", r.fd1_err),
                ("formula1", r.formula1),
                ("fd2", r.fd2),
                ("fd2_err", r.fd2_err),
                ("formula2", r.formula2),
                ("wp4", r.wp4),
                ("hproj4", r.hproj4),
                ("lower_bound", r.lower_bound),
                ("jvv", r.jvv),
                ("min_excess", r.min_excess),
            ] {
                kv(&format!("{p}.{k}"), format!("{v:e}"));
            }
        }
        for c in &self.checks {
            kv(
                &format!("check.{}", c.name),
                format!("{} value={:e} lower={:e} upper={:e}", if c.pass { "pass" } else { "FAIL" }, c.value, c.lower, c.upper),
            );
        }
        s
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Criticality and convexity checks at a converged map for the μ with seeds `mus`.
pub fn certify_critical(
    scenario: &Scenario,
    map: &EquivariantMap,
    mus: &[u32],
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    let d = &scenario.domain;
    let rep = energy_report(map, d, &WolfMetricFamily::flat(d), 0.0)?;
    let nf = rep.density.len() as f64;
    let mean_density = rep.density.iter().sum::<f64>() / nf;
    let hopf_sup = hopf_differential(map, d)?.iter().map(|h| h.norm()).fold(0.0, f64::max);
    let density_min = rep.density.iter().copied().fold(f64::INFINITY, f64::min);
    let density_max = rep.density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hopf_bound = opts.critical_tol * mean_density;
    let is_critical = hopf_sup <= hopf_bound;
    let mut checks = vec![Check::at_most("hopf_sup", hopf_sup, hopf_bound)];
    let degree = degree(map, d).ok();
    let ramification_defect =
        degree.as_ref().map(|g| g.degree * scenario.target_chi - scenario.domain_chi());
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut kernel_dim = 0;
    let mut strict_convexity = None;
    if !mus.is_empty() {
        let sys = JacobiSystem::new(map, d, opts.kernel_kappa)?;
        kernel_dim = sys.kernel_dimension();
        let tol = 1e-6 * rep.energy;
        let mut c_min = f64::INFINITY;
        for &m in mus {
            let (row, curve) = variation_row(scenario, map, &sys, m, opts)?;
            let p = format!("mu{m}");
            checks.push(Check::at_least(format!("{p}.fd2_nonneg"), row.fd2, -tol));
            checks.push(Check::at_least(format!("{p}.formula2_nonneg"), row.formula2, -tol));
            checks.push(Check::at_least(format!("{p}.convex_sweep"), row.min_excess, -1e-6));
            checks.push(Check::at_most(
                format!("{p}.fd2_vs_formula2"),
                rel(row.fd2, row.formula2),
                (1e-1f64).max(3.0 * row.fd2_err / row.formula2.abs()),
            ));
            checks.push(Check::at_most(format!("{p}.kernel_invariance"), row.kernel_shift, 1e-8));
            if is_critical {
                checks.push(Check::at_least(format!("{p}.lower_bound"), row.formula2 - row.lower_bound, -tol));
            }
            c_min = c_min.min(row.formula2 / (row.wp4 / 4.0));
            rows.push(row);
            curves.push(curve);
        }
        if density_min > 0.0 {
            checks.push(Check::at_least("strict_convexity", c_min, f64::MIN_POSITIVE));
            strict_convexity = Some(c_min);
        }
    }
    Ok(CertificationReport {
        scenario: scenario.id.clone(),
        is_critical,
        hopf_sup,
        mean_density,
        density_min,
        density_max,
        energy: rep.energy,
        area: scenario.area(),
        degree,
        ramification_defect,
        kernel_dim,
        rows,
        strict_convexity,
        curves,
        checks,
    })
}

/// Solves the covering scenario from `start_scale`·(pullback start) and certifies it:
/// density, energy = Area(Σ), degree d, criticality, convexity and second variation
/// = 4‖μ‖²_WP within 10% for every μ.
pub fn covering_certificate(
    genus: usize,
    d: usize,
    level: usize,
    mus: &[u32],
    start_scale: f64,
    opts: &CertifyOptions,
) -> Result<(CertificationReport, EquivariantMap)> {
    let mut sc = Scenario::covering(genus, d, level)?;
    for v in &mut sc.start.values {
        *v *= start_scale;
    }
    let (map, _) = sc.solve(opts.solver)?;
    let mut report = certify_critical(&sc, &map, mus, opts)?;
    let dt = opts.density_tol;
    report.checks.push(Check::new("density_min", report.density_min, 1.0 - dt, 1.0 + dt));
    report.checks.push(Check::at_most("density_max", report.density_max, 1.0 + dt));
    report.checks.push(Check::at_most("energy_vs_area", rel(report.energy, report.area), opts.area_tol));
    match &report.degree {
        Some(g) => {
            report.checks.push(Check::new("degree", g.degree as f64, d as f64, d as f64));
            report.checks.push(Check::at_most("degree_slack", g.distance, 5e-2));
        }
        None => report.checks.push(Check::new("degree", f64::NAN, d as f64, d as f64)),
    }
    if let Some(r) = report.ramification_defect {
        report.checks.push(Check::new("ramification_defect", r as f64, 0.0, 0.0));
    }
    let e0 = report.energy;
    let extra: Vec<Check> = report
        .rows
        .iter()
        .flat_map(|r| {
            let p = format!("mu{}", r.mu_id);
            [
                Check::at_most(format!("{p}.formula1"), r.formula1.abs() / e0, 1e-4),
                Check::at_most(format!("{p}.formula2_vs_wp4"), rel(r.formula2, r.wp4), 0.1),
                Check::at_most(format!("{p}.formula2_vs_hproj4"), rel(r.formula2, r.hproj4), 0.1),
                Check::at_most(format!("{p}.fd2_vs_wp4"), rel(r.fd2, r.wp4), 0.1),
            ]
        })
        .collect();
    report.checks.extend(extra);
    Ok((report, map))
}

/// Hopf holomorphy residual of the harmonic map of `scenario` at each level.
pub fn hopf_refinement(
    make: impl Fn(usize) -> Result<Scenario>,
    levels: &[usize],
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&l| {
            let sc = make(l)?;
            let (map, _) = sc.solve(opts)?;
            Ok(holomorphy_residual(&hopf_differential(&map, &sc.domain)?, &sc.domain))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> CertifyOptions {
        CertifyOptions { q_truncation: 4, solver: SolverOptions { tol: 1e-10, max_iter: 2000 }, ..Default::default() }
    }

    #[test]
    fn checks_record_their_bounds() {
        assert!(Check::new("a", 1.0, 0.0, 1.0).pass);
        assert!(!Check::at_most("b", 1.0 + 1e-12, 1.0).pass);
        assert!(Check::at_least("c", -1e-7, -1e-6).pass);
        assert!(!Check::new("d", f64::NAN, 0.0, 1.0).pass);
    }

    #[test]
    fn zero_beltrami_gives_a_flat_curve_and_zero_formulas() {
        let sc = Scenario::covering(2, 1, 2).unwrap();
        let (map, _) = sc.solve(fast().solver).unwrap();
        let mu = sc.beltrami(0, 0).unwrap();
        let fam = WolfMetricFamily::build(&sc.domain, mu.clone(), None).unwrap();
        let curve = energy_curve(&map, &sc.domain, &fam, 5, fast().solver).unwrap();
        let e0 = curve.energy_at_zero();
        assert!(curve.samples.iter().all(|s| (s.energy - e0).abs() <= 1e-10 * e0));
        assert_eq!(first_variation_formula(&map, &sc.domain, &mu).unwrap(), 0.0);
        let sys = JacobiSystem::new(&map, &sc.domain, 1e-10).unwrap();
        assert_eq!(second_variation_formula(&sys, &sc.domain, &mu, 1e-8, 1000).unwrap().value, 0.0);
        assert!(curve.to_csv().starts_with("t,energy,grad_norm\n"));
        assert_eq!(curve.to_csv().lines().count(), 6);
    }

    #[test]
    fn grid_must_be_odd_and_samples_must_converge() {
        let sc = Scenario::covering(2, 1, 1).unwrap();
        let fam = WolfMetricFamily::flat(&sc.domain);
        assert!(energy_curve(&sc.start, &sc.domain, &fam, 4, SolverOptions::default()).is_err());
        let mut start = sc.start.clone();
        for v in &mut start.values {
            *v *= 0.5;
        }
        let err = energy_curve(&start, &sc.domain, &fam, 5, SolverOptions { tol: 1e-12, max_iter: 1 }).unwrap_err();
        assert!(matches!(err, LabError::Curve { .. }), "{err}");
    }

    #[test]
    fn first_variation_matches_differences_off_critical() {
        let sc = Scenario::perturbed_target(2, 2, 0.05, 1).unwrap();
        let (map, _) = sc.solve(fast().solver).unwrap();
        let mu = sc.beltrami(1, 4).unwrap();
        let fam = WolfMetricFamily::build(&sc.domain, mu.clone(), None).unwrap();
        let curve = energy_curve(&map, &sc.domain, &fam, 5, fast().solver).unwrap();
        let f = first_variation_formula(&map, &sc.domain, &mu).unwrap();
        assert!(f.abs() > 1e-3);
        assert!((curve.fd_first - f).abs() <= 5e-2 * f.abs(), "{} {f}", curve.fd_first);
    }

    #[test]
    fn perturbed_target_is_not_critical() {
        let sc = Scenario::perturbed_target(2, 2, 0.2, 1).unwrap();
        let (map, _) = sc.solve(fast().solver).unwrap();
        let rep = certify_critical(&sc, &map, &[], &fast()).unwrap();
        assert!(!rep.is_critical);
        assert!(rep.hopf_sup > fast().critical_tol);
        assert_eq!(rep.checks.len(), 1);
        assert!(rep.rows.is_empty());
        assert_eq!(rep.ramification_defect, Some(0));
    }

    #[test]
    fn identity_certificate_passes_from_a_scaled_start() {
        let (rep, _) = covering_certificate(2, 1, 2, &[0], 0.9, &fast()).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
        assert!((rep.energy - 4.0 * std::f64::consts::PI).abs() <= 1e-2 * rep.energy);
        let text = rep.to_text();
        assert!(text.contains("scenario: identity-g2\n"));
        assert!(text.lines().all(|l| l.contains(": ")));
        let row = &rep.rows[0];
        assert!(derivs_csv(&rep.rows).starts_with("mu_id,fd1,formula1,fd2,formula2,wp4,hproj4\n"));
        assert!(row.formula2 > 0.0 && row.fd2 > 0.0);
    }

    #[test]
    fn constant_scenario_has_degree_zero_and_ramification() {
        let sc = Scenario::constant(2, 1).unwrap();
        let (map, rep) = sc.solve(SolverOptions::default()).unwrap();
        assert!(rep.energy.abs() < 1e-20);
        let cert = certify_critical(&sc, &map, &[], &fast()).unwrap();
        assert_eq!(cert.degree.as_ref().map(|d| d.degree), Some(0));
        assert_eq!(cert.ramification_defect, Some(2));
    }
}
