//! Piecewise-affine equivariant maps into the target disk, their energy for the metric
//! g(t), the exact discrete gradient, and a preconditioned descent minimizer.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::jet::{geodesic_jet, Jet};
use crate::mesh::{parse_num, FaceGeometry, TriangulatedDomain};
use crate::mobius::{conformal_factor, geodesic_point_and_tangent, Mobius};
use crate::quadrature;
use crate::sparse::{conjugate_gradient, jacobi_preconditioner, Csr};
use crate::surface::eval_word;
use crate::wolf::WolfMetricFamily;

/// Values of u at vertex orbits together with the homomorphism φ on base generators.
/// The value used at a slot with word γ is φ(γ)·v.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantMap {
    pub phi: Vec<Mobius>,
    pub values: Vec<C64>,
}

/// Slot transforms φ(γ_s) and the values they produce.
#[derive(Clone, Debug)]
pub struct MapContext {
    pub slot_transform: Vec<Mobius>,
}

impl MapContext {
    pub fn new(domain: &TriangulatedDomain, phi: &[Mobius]) -> Self {
        MapContext { slot_transform: domain.slot_word.iter().map(|w| eval_word(phi, w)).collect() }
    }

    pub fn slot_values(&self, domain: &TriangulatedDomain, values: &[C64]) -> Result<Vec<C64>> {
        let mut out = Vec::with_capacity(self.slot_transform.len());
        for (s, t) in self.slot_transform.iter().enumerate() {
            let v = t.apply(values[domain.slot_orbit[s]]);
            if !(v.norm() < 1.0) {
                return Err(LabError::MapOutOfRange(v.norm()));
            }
            out.push(v);
        }
        Ok(out)
    }
}

impl EquivariantMap {
    /// The identity of the base in sheet charts: v = representative position, φ = base generators.
    pub fn identity(domain: &TriangulatedDomain) -> Self {
        EquivariantMap {
            phi: domain.base.generators.clone(),
            values: (0..domain.num_orbits()).map(|o| domain.orbit_position(o)).collect(),
        }
    }

    /// v ↦ v̄ with φ conjugated; reverses orientation.
    pub fn conjugated(&self) -> Self {
        EquivariantMap {
            phi: self.phi.iter().map(|m| Mobius { alpha: m.alpha.conj(), beta: m.beta.conj() }).collect(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn target_genus(&self) -> usize {
        self.phi.len() / 2
    }

    /// (u_z, u_z̄) per face.
    pub fn face_derivatives(&self, domain: &TriangulatedDomain) -> Result<Vec<(C64, C64)>> {
        let sv = MapContext::new(domain, &self.phi).slot_values(domain, &self.values)?;
        Ok(derivatives(domain, &sv))
    }

    pub fn to_map_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "WPLAB-MAP v1 orbits={} generators={}", self.values.len(), self.phi.len());
        for g in &self.phi {
            let _ = writeln!(s, "IMAGE {} {} {} {}", g.alpha.re, g.alpha.im, g.beta.re, g.beta.im);
        }
        for (o, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "VALUE {} {} {}", o, v.re, v.im);
        }
        s
    }

    pub fn from_map_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let mut toks = header.split_whitespace();
        if toks.next() != Some("WPLAB-MAP") || toks.next() != Some("v1") {
            return Err(LabError::Parse { line: 1, message: "expected header `WPLAB-MAP v1`".into() });
        }
        let (mut orbits, mut gens) = (None, None);
        for t in toks {
            match t.split_once('=') {
                Some(("orbits", v)) => orbits = Some(parse_num::<usize>(Some(v), 1)?),
                Some(("generators", v)) => gens = Some(parse_num::<usize>(Some(v), 1)?),
                _ => return Err(LabError::Parse { line: 1, message: format!("bad header field {t}") }),
            }
        }
        let mut map = EquivariantMap { phi: Vec::new(), values: Vec::new() };
        for (i, l) in lines {
            let line = i + 1;
            let mut t = l.split_whitespace();
            match t.next() {
                None => {}
                Some("IMAGE") => {
                    let v: Vec<f64> = (0..4).map(|_| parse_num(t.next(), line)).collect::<Result<_>>()?;
                    map.phi.push(Mobius { alpha: C64::new(v[0], v[1]), beta: C64::new(v[2], v[3]) });
                }
                Some("VALUE") => {
                    let o: usize = parse_num(t.next(), line)?;
                    if o != map.values.len() {
                        return Err(LabError::Parse { line, message: format!("orbit {o} out of order") });
                    }
                    map.values.push(C64::new(parse_num(t.next(), line)?, parse_num(t.next(), line)?));
                }
                Some(other) => return Err(LabError::Parse { line, message: format!("unknown record {other}") }),
            }
        }
        if orbits != Some(map.values.len()) || gens != Some(map.phi.len()) {
            return Err(LabError::Parse { line: 1, message: "header counts do not match the records".into() });
        }
        Ok(map)
    }
}

fn derivatives(domain: &TriangulatedDomain, sv: &[C64]) -> Vec<(C64, C64)> {
    domain
        .faces
        .iter()
        .zip(&domain.geometry)
        .map(|(f, g)| {
            let (_, uz, uzb) = centroid_jet(f.map(|s| sv[s]), g);
            (uz, uzb)
        })
        .collect()
}

/// (u_z, u_z̄) of Σ w_k φ_k given ∂_zφ_k.
fn chart_derivatives(w: [C64; 3], grad: [C64; 3]) -> (C64, C64) {
    let mut uz = C64::new(0.0, 0.0);
    let mut uzb = C64::new(0.0, 0.0);
    for k in 0..3 {
        uz += w[k] * grad[k];
        uzb += w[k] * grad[k].conj();
    }
    (uz, uzb)
}

fn rho2(u: C64) -> f64 {
    conformal_factor(u)
}

fn interp(w: [C64; 3], l: [f64; 3]) -> C64 {
    w[0] * l[0] + w[1] * l[1] + w[2] * l[2]
}

/// (u, u_z, u_z̄) at reference coordinates `l` with hat gradients `grad`.
///
/// On a face with a geodesic edge b→c opposite the apex a the map is
/// u = l_a w_a + σ G(w_b, w_c, τ), σ = l_b + l_c, τ = l_c/σ, where G is the point at
/// hyperbolic fraction τ from w_b to w_c. It mirrors the chart blending, so the identity
/// is reproduced and traces on paired arcs agree for any values.
fn point_jet(w: [C64; 3], g: &FaceGeometry, l: [f64; 3], grad: [C64; 3]) -> (C64, C64, C64) {
    match g.arc {
        None => {
            let (uz, uzb) = chart_derivatives(w, grad);
            (interp(w, l), uz, uzb)
        }
        Some([ia, ib, ic]) => {
            let sigma = l[ib] + l[ic];
            let tau = l[ic] / sigma;
            let (gp, gt) = geodesic_point_and_tangent(w[ib], w[ic], tau);
            let u = w[ia] * l[ia] + gp * sigma;
            let u1 = gp - gt * tau - w[ia];
            let u2 = gp + gt * (1.0 - tau) - w[ia];
            (u, u1 * grad[ib] + u2 * grad[ic], u1 * grad[ib].conj() + u2 * grad[ic].conj())
        }
    }
}

fn node_jet(w: [C64; 3], g: &FaceGeometry, q: usize) -> (C64, C64, C64) {
    point_jet(w, g, g.bary[q], g.grad[q])
}

fn centroid_jet(w: [C64; 3], g: &FaceGeometry) -> (C64, C64, C64) {
    point_jet(w, g, [1.0 / 3.0; 3], g.centroid_grad)
}

/// Values and chart derivatives of a map at every quadrature node and face centroid.
#[derive(Clone, Debug)]
pub struct MapJets {
    pub node: Vec<[(C64, C64, C64); quadrature::N]>,
    pub centroid: Vec<(C64, C64, C64)>,
}

impl EquivariantMap {
    pub fn jets(&self, domain: &TriangulatedDomain) -> Result<MapJets> {
        let sv = MapContext::new(domain, &self.phi).slot_values(domain, &self.values)?;
        let mut node = Vec::with_capacity(domain.faces.len());
        let mut centroid = Vec::with_capacity(domain.faces.len());
        for (f, g) in domain.faces.iter().zip(&domain.geometry) {
            let w = f.map(|s| sv[s]);
            node.push(std::array::from_fn(|q| node_jet(w, g, q)));
            centroid.push(centroid_jet(w, g));
        }
        Ok(MapJets { node, centroid })
    }
}

/// Energy contribution of one node of a curved face with derivatives in the six real
/// coordinates of the corner values ordered (apex, arc start, arc end).
fn curved_node_energy(w: [C64; 3], g: &FaceGeometry, q: usize, a: f64, b: C64) -> Jet {
    let [ia, ib, ic] = g.arc.expect("curved face");
    let l = g.bary[q];
    let grad = g.grad[q];
    let wa = Jet::variable(w[ia], 0);
    let wb = Jet::variable(w[ib], 2);
    let wc = Jet::variable(w[ic], 4);
    let sigma = l[ib] + l[ic];
    let tau = l[ic] / sigma;
    let (gp, gt) = geodesic_jet(wb, wc, tau);
    let u = wa * l[ia] + gp * sigma;
    let u1 = gp - gt * tau - wa;
    let u2 = gp + gt * (1.0 - tau) - wa;
    let uz = u1.scale(grad[ib]) + u2.scale(grad[ic]);
    let uzb = u1.scale(grad[ib].conj()) + u2.scale(grad[ic].conj());
    let one = Jet::real(1.0);
    let s = one - u.norm_sqr();
    let r2 = Jet::real(4.0) / (s * s);
    let big_s = uz.norm_sqr() + uzb.norm_sqr();
    let p = (uz.conj() * uzb).scale(b).re();
    r2 * (big_s * a - p * 2.0) * g.weights[q]
}

/// Energy and, if requested, the gradient 2∂E/∂v̄ per orbit.
fn energy_impl(
    domain: &TriangulatedDomain,
    ctx: &MapContext,
    values: &[C64],
    coef: &[[(f64, C64); quadrature::N]],
    want_grad: bool,
) -> Result<(f64, Vec<C64>)> {
    let sv = ctx.slot_values(domain, values)?;
    let mut e = 0.0;
    let mut slot_grad = if want_grad { vec![C64::new(0.0, 0.0); sv.len()] } else { Vec::new() };
    for (fi, (f, g)) in domain.faces.iter().zip(&domain.geometry).enumerate() {
        let w = f.map(|s| sv[s]);
        if let Some(arc) = g.arc {
            for qi in 0..quadrature::N {
                let (a, b) = coef[fi][qi];
                if want_grad {
                    let j = curved_node_energy(w, g, qi, a, b);
                    e += j.v.re;
                    for (slot, k) in arc.iter().enumerate() {
                        // 2∂/∂v̄ = ∂/∂x + i ∂/∂y
                        slot_grad[f[*k]] += C64::new(j.d[2 * slot].re, j.d[2 * slot + 1].re);
                    }
                } else {
                    let (u, uz, uzb) = node_jet(w, g, qi);
                    let bracket = a * (uz.norm_sqr() + uzb.norm_sqr()) - 2.0 * (b * uz.conj() * uzb).re;
                    e += g.weights[qi] * rho2(u) * bracket;
                }
            }
            continue;
        }
        let mut gk = [C64::new(0.0, 0.0); 3];
        for qi in 0..quadrature::N {
            let (uz, uzb) = chart_derivatives(w, g.grad[qi]);
            let s = uz.norm_sqr() + uzb.norm_sqr();
            let p = uz.conj() * uzb;
            let u = interp(w, g.bary[qi]);
            let r2 = rho2(u);
            let (a, b) = coef[fi][qi];
            let bracket = a * s - 2.0 * (b * p).re;
            e += g.weights[qi] * r2 * bracket;
            if want_grad {
                let drho = u * (r2 * 2.0 / (1.0 - u.norm_sqr()));
                for k in 0..3 {
                    let d = g.grad[qi][k];
                    let first = drho * (g.bary[qi][k] * bracket);
                    let second = (uz * d.conj() + uzb * d) * a - (b * d.conj() * uzb + b.conj() * uz * d);
                    // 2∂/∂v̄ of the node term
                    gk[k] += (first + second * r2) * (2.0 * g.weights[qi]);
                }
            }
        }
        if want_grad {
            for k in 0..3 {
                slot_grad[f[k]] += gk[k];
            }
        }
    }
    if !want_grad {
        return Ok((e, Vec::new()));
    }
    let mut grad = vec![C64::new(0.0, 0.0); domain.num_orbits()];
    for (s, gs) in slot_grad.iter().enumerate() {
        let o = domain.slot_orbit[s];
        grad[o] += gs * ctx.slot_transform[s].deriv(values[o]).conj();
    }
    Ok((e, grad))
}

pub fn energy(map: &EquivariantMap, domain: &TriangulatedDomain, family: &WolfMetricFamily, t: f64) -> Result<f64> {
    let coef = family.coefficients(domain, t)?;
    Ok(energy_impl(domain, &MapContext::new(domain, &map.phi), &map.values, &coef, false)?.0)
}

/// Exact gradient g_o = 2∂E/∂v̄_o, so that dE = Re Σ ḡ_o δv_o.
pub fn tension_gradient(
    map: &EquivariantMap,
    domain: &TriangulatedDomain,
    family: &WolfMetricFamily,
    t: f64,
) -> Result<Vec<C64>> {
    let coef = family.coefficients(domain, t)?;
    Ok(energy_impl(domain, &MapContext::new(domain, &map.phi), &map.values, &coef, true)?.1)
}

pub fn sup_norm(g: &[C64]) -> f64 {
    g.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// ½|du|²_{g(t)} per face, evaluated at the centroid.
pub fn energy_density(
    map: &EquivariantMap,
    domain: &TriangulatedDomain,
    family: &WolfMetricFamily,
    t: f64,
) -> Result<Vec<f64>> {
    let jets = map.jets(domain)?;
    let mut out = Vec::with_capacity(domain.faces.len());
    for (fi, &(u, uz, uzb)) in jets.centroid.iter().enumerate() {
        let gm = family.metric_at_centroid(domain, t, fi)?;
        let det = gm.det().abs();
        let s = uz.norm_sqr() + uzb.norm_sqr();
        out.push(rho2(u) * (gm.g_zzbar * s - 2.0 * (gm.g_zz * uz.conj() * uzb).re) / (2.0 * det));
    }
    Ok(out)
}

/// ρ²(u) u_z conj(u_z̄) at each face centroid.
pub fn hopf_differential(map: &EquivariantMap, domain: &TriangulatedDomain) -> Result<Vec<C64>> {
    Ok(map.jets(domain)?.centroid.iter().map(|&(u, uz, uzb)| rho2(u) * uz * uzb.conj()).collect())
}

/// ρ²(u) u_z conj(u_z̄) at every quadrature node.
pub fn hopf_at_nodes(map: &EquivariantMap, domain: &TriangulatedDomain) -> Result<Vec<[C64; quadrature::N]>> {
    Ok(map
        .jets(domain)?
        .node
        .iter()
        .map(|n| n.map(|(u, uz, uzb)| rho2(u) * uz * uzb.conj()))
        .collect())
}

/// Discrete ∂_z̄ of a per-face quadratic differential tested against hat vector fields
/// (ψ(γz) = γ′(z)ψ(z)), as a mass-weighted norm relative to the L² norm of φ.
pub fn holomorphy_residual(phi: &[C64], domain: &TriangulatedDomain) -> f64 {
    let n = domain.num_orbits();
    let mut r = vec![C64::new(0.0, 0.0); n];
    let mut mass = vec![0.0; n];
    let mut norm2 = 0.0;
    for (fi, (f, g)) in domain.faces.iter().zip(&domain.geometry).enumerate() {
        norm2 += g.area * phi[fi].norm_sqr();
        for k in 0..3 {
            let s = f[k];
            let o = domain.slot_orbit[s];
            let deck = eval_word(&domain.base.generators, &domain.slot_word[s]);
            let dbar: C64 = (0..quadrature::N).map(|q| g.grad[q][k].conj() * g.weights[q]).sum();
            r[o] += phi[fi] * dbar * deck.deriv(domain.orbit_position(o));
            mass[o] += g.area / 3.0;
        }
    }
    let res2: f64 = r.iter().zip(&mass).map(|(v, m)| v.norm_sqr() / m).sum();
    if norm2 == 0.0 {
        return 0.0;
    }
    (res2 / norm2).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeReport {
    pub degree: i64,
    pub value: f64,
    pub distance: f64,
}

/// (1/Area(S)) ∫ ρ²(|u_z|² − |u_z̄|²) dA, rounded.
pub fn degree(map: &EquivariantMap, domain: &TriangulatedDomain) -> Result<DegreeReport> {
    let jets = map.jets(domain)?;
    let mut s = 0.0;
    for (n, g) in jets.node.iter().zip(&domain.geometry) {
        for (qi, &(u, uz, uzb)) in n.iter().enumerate() {
            s += g.weights[qi] * rho2(u) * (uz.norm_sqr() - uzb.norm_sqr());
        }
    }
    let area = 4.0 * PI * (map.target_genus() as f64 - 1.0);
    let value = s / area;
    let degree = value.round();
    let distance = (value - degree).abs();
    if distance > 0.2 {
        return Err(LabError::IllResolvedDegree { value, distance });
    }
    Ok(DegreeReport { degree: degree as i64, value, distance })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop when sup|g| ≤ tol·max(1, E).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    pub density: Vec<f64>,
    pub hopf: Vec<C64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Energy after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

pub fn energy_report(
    map: &EquivariantMap,
    domain: &TriangulatedDomain,
    family: &WolfMetricFamily,
    t: f64,
) -> Result<EnergyReport> {
    let coef = family.coefficients(domain, t)?;
    let (e, g) = energy_impl(domain, &MapContext::new(domain, &map.phi), &map.values, &coef, true)?;
    Ok(EnergyReport {
        energy: e,
        density: energy_density(map, domain, family, t)?,
        hopf: hopf_differential(map, domain)?,
        gradient_norm: sup_norm(&g),
        iterations: 0,
        history: vec![e],
    })
}

/// Hermitian model Hessian Σ_f ρ²A_f ∇φ_k·∇φ_l pulled back through the slot transforms,
/// plus a ρ²-weighted mass term.
fn preconditioner(domain: &TriangulatedDomain, ctx: &MapContext, values: &[C64], sv: &[C64]) -> Csr<C64> {
    let n = domain.num_orbits();
    let mut trip = Vec::with_capacity(9 * domain.faces.len() + n);
    let tp: Vec<C64> = (0..sv.len()).map(|s| ctx.slot_transform[s].deriv(values[domain.slot_orbit[s]])).collect();
    let mut diag = vec![0.0; n];
    for (f, g) in domain.faces.iter().zip(&domain.geometry) {
        let u = (sv[f[0]] + sv[f[1]] + sv[f[2]]) / 3.0;
        let r2 = rho2(u);
        let hyp = g.area * conformal_factor(g.centroid);
        for k in 0..3 {
            let (sk, ok) = (f[k], domain.slot_orbit[f[k]]);
            for l in 0..3 {
                let sl = f[l];
                let h: f64 = (0..quadrature::N).map(|q| 4.0 * r2 * g.weights[q] * (g.grad[q][k] * g.grad[q][l].conj()).re).sum();
                trip.push((ok, domain.slot_orbit[sl], tp[sk].conj() * h * tp[sl]));
            }
            diag[ok] += r2 * hyp / 3.0 * tp[sk].norm_sqr();
        }
    }
    for (o, d) in diag.into_iter().enumerate() {
        trip.push((o, o, C64::new(d, 0.0)));
    }
    Csr::from_triplets(n, n, trip)
}

/// Preconditioned descent with Armijo backtracking.
pub fn minimize(
    map0: &EquivariantMap,
    domain: &TriangulatedDomain,
    family: &WolfMetricFamily,
    t: f64,
    opts: SolverOptions,
) -> Result<(EquivariantMap, EnergyReport)> {
    if !(opts.tol > 0.0) {
        return Err(LabError::InvalidArgument("solver tolerance must be positive".into()));
    }
    let coef = family.coefficients(domain, t)?;
    let ctx = MapContext::new(domain, &map0.phi);
    let mut values = map0.values.clone();
    let (mut e, mut g) = energy_impl(domain, &ctx, &values, &coef, true)?;
    let mut history = vec![e];
    let mut it = 0;
    loop {
        let gnorm = sup_norm(&g);
        if gnorm <= opts.tol * e.max(1.0) {
            break;
        }
        if it >= opts.max_iter {
            return Err(LabError::NonConvergence { iterations: it, residual: gnorm });
        }
        let sv = ctx.slot_values(domain, &values)?;
        let p = preconditioner(domain, &ctx, &values, &sv);
        let diag = p.diagonal();
        let dir = conjugate_gradient(|v| p.mul_vec(v), jacobi_preconditioner(&diag), &g, 1e-8, 10 * values.len() + 100, None)
            .map(|o| o.x)
            .unwrap_or_else(|_| jacobi_preconditioner(&diag)(&g));
        let slope: f64 = -g.iter().zip(&dir).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        let trial_at = |step: f64| -> Option<(Vec<C64>, f64, Vec<C64>)> {
            let trial: Vec<C64> = values.iter().zip(&dir).map(|(v, d)| v - d * step).collect();
            energy_impl(domain, &ctx, &trial, &coef, true).ok().map(|(et, gt)| (trial, et, gt))
        };
        // near convergence the Armijo decrease is below rounding in E
        let noise = 1e-13 * e.abs();
        let armijo = |step: f64, et: f64| et <= e + 1e-4 * step * slope;
        let mut accepted = None;
        if let Some((trial, et, gt)) = trial_at(1.0) {
            // a positive slope at the full step means the preconditioner overshot; the
            // secant root of the directional derivative fixes the scale
            let s1: f64 = -gt.iter().zip(&dir).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
            let ok = armijo(1.0, et) || et <= e + noise;
            if s1 > 0.0 && slope < 0.0 {
                let a = (slope / (slope - s1)).clamp(0.05, 0.95);
                if let Some((ta, ea, ga)) = trial_at(a) {
                    if armijo(a, ea) || (ea <= e + noise && sup_norm(&ga) < gnorm) {
                        accepted = Some((ta, ea, ga));
                    }
                }
            }
            if accepted.is_none() && ok {
                accepted = Some((trial, et, gt));
            }
        }
        let mut step = 0.5;
        while accepted.is_none() && step > 1e-18 {
            if let Some((trial, et, gt)) = trial_at(step) {
                if armijo(step, et) {
                    accepted = Some((trial, et, gt));
                }
            }
            step *= 0.5;
        }
        let Some((trial, et, gt)) = accepted else {
            return Err(LabError::NonConvergence { iterations: it, residual: gnorm });
        };
        values = trial;
        e = et;
        g = gt;
        history.push(e);
        it += 1;
    }
    let map = EquivariantMap { phi: map0.phi.clone(), values };
    let mut report = energy_report(&map, domain, family, t)?;
    report.iterations = it;
    report.history = history;
    Ok((map, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangulate;
    use crate::surface::build_surface;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(level: usize) -> (TriangulatedDomain, WolfMetricFamily) {
        let d = triangulate(&build_surface(2).unwrap(), level).unwrap();
        let f = WolfMetricFamily::flat(&d);
        (d, f)
    }

    #[test]
    fn identity_is_reproduced_on_curved_faces() {
        let (d, _) = setup(2);
        let jets = EquivariantMap::identity(&d).jets(&d).unwrap();
        for (n, g) in jets.node.iter().zip(&d.geometry) {
            for (q, &(u, uz, uzb)) in n.iter().enumerate() {
                assert!((u - g.nodes[q]).norm() < 1e-13);
                assert!((uz - 1.0).norm() < 1e-10 && uzb.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_energy_is_area() {
        let (d, fam) = setup(3);
        let e = energy(&EquivariantMap::identity(&d), &d, &fam, 0.0).unwrap();
        assert!((e / (4.0 * PI) - 1.0).abs() < 1e-2, "{e}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (d, fam) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut map = EquivariantMap::identity(&d);
        for v in &mut map.values {
            *v += C64::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
        }
        let g = tension_gradient(&map, &d, &fam, 0.0).unwrap();
        for _ in 0..5 {
            let dir: Vec<C64> = (0..g.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let h = 1e-6;
            let shifted = |s: f64| {
                let mut m = map.clone();
                for (v, d) in m.values.iter_mut().zip(&dir) {
                    *v += d * s;
                }
                energy(&m, &d, &fam, 0.0).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an: f64 = g.iter().zip(&dir).map(|(a, b)| (a.conj() * b).re).sum();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} {an}");
        }
    }

    #[test]
    fn minimizer_is_monotone_and_returns_near_identity() {
        let (d, fam) = setup(2);
        let id = EquivariantMap::identity(&d);
        let (m0, r0) = minimize(&id, &d, &fam, 0.0, SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut start = m0.clone();
        for v in &mut start.values {
            *v += C64::new(rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01));
        }
        let (_, r) = minimize(&start, &d, &fam, 0.0, SolverOptions::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0]));
        assert!((r.energy - r0.energy).abs() <= 1e-4 * r0.energy);
    }

    #[test]
    fn degree_of_identity_and_its_conjugate() {
        let (d, _) = setup(3);
        let id = EquivariantMap::identity(&d);
        assert_eq!(degree(&id, &d).unwrap().degree, 1);
        assert_eq!(degree(&id.conjugated(), &d).unwrap().degree, -1);
    }

    #[test]
    fn map_text_round_trips() {
        let (d, _) = setup(1);
        let m = EquivariantMap::identity(&d);
        let back = EquivariantMap::from_map_text(&m.to_map_text()).unwrap();
        assert_eq!(back, m);
        assert!(EquivariantMap::from_map_text("WPLAB-MAP v2").is_err());
    }
}
