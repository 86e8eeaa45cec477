//! Sections of u*T_ℂS along a harmonic map, the operator ∇^{0,1}, its adjoint, the
//! curvature term and the Jacobi operator J = (∇^{0,1})*∇^{0,1} + R.
//!
//! A section W = f₁∂_v + f₂∂_v̄ is stored per vertex orbit; its value at a slot with
//! target transform T is (T′f₁, conj(T′)f₂). Forms ω dz̄ are stored per face.
//! Inner products: ⟨W, W′⟩ = Σ_o m_o ρ²(v_o)(f₁f̄₁′ + f₂f̄₂′) with the hyperbolic lumped
//! mass m_o, and ⟨ω, ω′⟩ = Σ_f A_f ρ²(u_f)(ω₁ω̄₁′ + ω₂ω̄₂′) with the chart area A_f.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::harmonic::{EquivariantMap, MapContext};
use crate::mesh::TriangulatedDomain;
use crate::mobius::{conformal_factor, connection_coefficient};
use crate::qdiff::SampledBeltrami;
use crate::sparse::{conjugate_gradient, dot, jacobi_preconditioner, Csr};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub f1: Vec<C64>,
    pub f2: Vec<C64>,
}

impl Section {
    pub fn zero(n: usize) -> Self {
        Section { f1: vec![ZERO; n], f2: vec![ZERO; n] }
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        Section { f1: (0..n).map(|_| c()).collect(), f2: (0..n).map(|_| c()).collect() }
    }

    /// The conjugation C(f₁, f₂) = (f̄₂, f̄₁); real sections are its fixed points.
    pub fn conjugate(&self) -> Self {
        Section { f1: self.f2.iter().map(|v| v.conj()).collect(), f2: self.f1.iter().map(|v| v.conj()).collect() }
    }

    /// ½(W + CW).
    pub fn real_part(&self) -> Self {
        let c = self.conjugate();
        self.combine(&c, 0.5, 0.5)
    }

    /// max |f₂ − f̄₁|.
    pub fn reality_defect(&self) -> f64 {
        self.f1.iter().zip(&self.f2).map(|(a, b)| (b - a.conj()).norm()).fold(0.0, f64::max)
    }

    pub fn combine(&self, other: &Section, a: f64, b: f64) -> Self {
        Section {
            f1: self.f1.iter().zip(&other.f1).map(|(x, y)| x * a + y * b).collect(),
            f2: self.f2.iter().zip(&other.f2).map(|(x, y)| x * a + y * b).collect(),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Section { f1: self.f1.iter().map(|x| x * s).collect(), f2: self.f2.iter().map(|x| x * s).collect() }
    }

    fn to_vec(&self) -> Vec<C64> {
        self.f1.iter().zip(&self.f2).flat_map(|(a, b)| [*a, *b]).collect()
    }

    fn from_vec(v: &[C64]) -> Self {
        Section { f1: v.iter().step_by(2).copied().collect(), f2: v.iter().skip(1).step_by(2).copied().collect() }
    }

    /// The section section s·∂u/∂z = s(u_z, conj(u_z̄)), averaged from the faces.
    pub fn along_du(data: &ConnectionData, domain: &TriangulatedDomain, s: C64) -> Self {
        let n = domain.num_orbits();
        let mut w = Section::zero(n);
        let mut count = vec![0.0; n];
        for (fi, f) in domain.faces.iter().enumerate() {
            for &slot in f {
                let o = domain.slot_orbit[slot];
                // back to the representative chart
                let tp = data.slot_deriv[slot];
                w.f1[o] += s * data.uz[fi] / tp;
                w.f2[o] += s * data.uzb[fi].conj() / tp.conj();
                count[o] += 1.0;
            }
        }
        for o in 0..n {
            w.f1[o] /= count[o];
            w.f2[o] /= count[o];
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub w1: Vec<C64>,
    pub w2: Vec<C64>,
}

impl OneForm {
    pub fn zero(n: usize) -> Self {
        OneForm { w1: vec![ZERO; n], w2: vec![ZERO; n] }
    }

    pub fn combine(&self, other: &OneForm, a: f64, b: f64) -> Self {
        OneForm {
            w1: self.w1.iter().zip(&other.w1).map(|(x, y)| x * a + y * b).collect(),
            w2: self.w2.iter().zip(&other.w2).map(|(x, y)| x * a + y * b).collect(),
        }
    }

    fn to_vec(&self) -> Vec<C64> {
        self.w1.iter().zip(&self.w2).flat_map(|(a, b)| [*a, *b]).collect()
    }

    fn from_vec(v: &[C64]) -> Self {
        OneForm { w1: v.iter().step_by(2).copied().collect(), w2: v.iter().skip(1).step_by(2).copied().collect() }
    }
}

/// Map data entering the connection: per face the mapped centroid u_f, the derivatives
/// and c = 2∂_v log ρ at u_f; per slot the derivative of its target transform.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    pub u: Vec<C64>,
    pub uz: Vec<C64>,
    pub uzb: Vec<C64>,
    pub c: Vec<C64>,
    pub slot_deriv: Vec<C64>,
    pub slot_value: Vec<C64>,
}

impl ConnectionData {
    pub fn new(map: &EquivariantMap, domain: &TriangulatedDomain) -> Result<Self> {
        let jets = map.jets(domain)?;
        let ctx = MapContext::new(domain, &map.phi);
        let slot_value = ctx.slot_values(domain, &map.values)?;
        let slot_deriv = (0..slot_value.len())
            .map(|s| ctx.slot_transform[s].deriv(map.values[domain.slot_orbit[s]]))
            .collect();
        Ok(ConnectionData {
            u: jets.centroid.iter().map(|j| j.0).collect(),
            uz: jets.centroid.iter().map(|j| j.1).collect(),
            uzb: jets.centroid.iter().map(|j| j.2).collect(),
            c: jets.centroid.iter().map(|j| connection_coefficient(j.0)).collect(),
            slot_deriv,
            slot_value,
        })
    }
}

/// Assembled operators along one map.
#[derive(Clone, Debug)]
pub struct JacobiSystem {
    pub data: ConnectionData,
    /// ∇^{0,1} as a (2·faces) × (2·orbits) matrix in interleaved (1, 2) components.
    pub d01: Csr<C64>,
    pub section_mass: Vec<f64>,
    pub form_mass: Vec<f64>,
    /// Hermitian form of R per orbit on (f₁, f₂).
    pub r_blocks: Vec<[[C64; 2]; 2]>,
    /// Mass-weighted J before symmetrization: (∇^{0,1})ᴴM_f∇^{0,1} + R.
    pub stiffness_raw: Csr<C64>,
    /// ½(K + CKC), the matrix used for J.
    pub stiffness: Csr<C64>,
    pub kernel: Vec<Section>,
    pub lambda_max: f64,
    pub kernel_threshold: f64,
}

#[derive(Clone, Debug)]
pub struct JacobiSolution {
    pub v: Section,
    pub iterations: usize,
    /// ‖JV − P(rhs)‖ / ‖P(rhs)‖ in the section norm.
    pub residual: f64,
}

impl JacobiSystem {
    /// Assembles the operators and detects the numerical kernel of J: eigenvalues below
    /// `kappa`·λ_max.
    pub fn new(map: &EquivariantMap, domain: &TriangulatedDomain, kappa: f64) -> Result<Self> {
        let data = ConnectionData::new(map, domain)?;
        let n = domain.num_orbits();
        let nf = domain.faces.len();
        let hyp_mass = domain.lumped_mass();
        let section_mass: Vec<f64> = (0..n).map(|o| hyp_mass[o] * conformal_factor(map.values[o])).collect();
        let form_mass: Vec<f64> =
            (0..nf).map(|f| domain.geometry[f].area * conformal_factor(data.u[f])).collect();

        let mut trip = Vec::with_capacity(12 * nf);
        let mut ktrip = Vec::with_capacity(36 * nf);
        let mut r_blocks = vec![[[ZERO; 2]; 2]; n];
        for (fi, f) in domain.faces.iter().enumerate() {
            let g = &domain.geometry[fi];
            let cz = data.c[fi] * data.uzb[fi] / 3.0;
            let czc = (data.c[fi] * data.uz[fi]).conj() / 3.0;
            let mut row1 = [(0usize, ZERO); 3];
            let mut row2 = [(0usize, ZERO); 3];
            for k in 0..3 {
                let s = f[k];
                let o = domain.slot_orbit[s];
                let tp = data.slot_deriv[s];
                let dbar = g.centroid_grad[k].conj();
                row1[k] = (2 * o, tp * (dbar + cz));
                row2[k] = (2 * o + 1, tp.conj() * (dbar + czc));
                // R: (A_f/3)(ρ⁴/2)|f₁ conj(u_z̄) − f₂ u_z|² at the slot
                let rho2 = conformal_factor(data.slot_value[s]);
                let wgt = g.area / 3.0 * rho2 * rho2 / 2.0;
                let r = [tp * data.uzb[fi].conj(), -tp.conj() * data.uz[fi]];
                for i in 0..2 {
                    for j in 0..2 {
                        r_blocks[o][i][j] += r[i].conj() * r[j] * wgt;
                    }
                }
            }
            for (row, entries) in [(2 * fi, row1), (2 * fi + 1, row2)] {
                for &(col, a) in &entries {
                    trip.push((row, col, a));
                    for &(col2, b) in &entries {
                        ktrip.push((col, col2, a.conj() * b * form_mass[fi]));
                    }
                }
            }
        }
        for (o, b) in r_blocks.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    ktrip.push((2 * o + i, 2 * o + j, b[i][j]));
                }
            }
        }
        let d01 = Csr::from_triplets(2 * nf, 2 * n, trip);
        let stiffness_raw = Csr::from_triplets(2 * n, 2 * n, ktrip);
        // CKC: swap components and conjugate
        let swap = |i: usize| i ^ 1;
        let mut sym = Vec::with_capacity(2 * stiffness_raw.vals.len());
        for i in 0..2 * n {
            for k in stiffness_raw.row_ptr[i]..stiffness_raw.row_ptr[i + 1] {
                let j = stiffness_raw.cols[k];
                let v = stiffness_raw.vals[k];
                sym.push((i, j, v * 0.5));
                sym.push((swap(i), swap(j), v.conj() * 0.5));
            }
        }
        let stiffness = Csr::from_triplets(2 * n, 2 * n, sym);
        let mut sys = JacobiSystem {
            data,
            d01,
            section_mass,
            form_mass,
            r_blocks,
            stiffness_raw,
            stiffness,
            kernel: Vec::new(),
            lambda_max: 0.0,
            kernel_threshold: kappa,
        };
        sys.detect_kernel(kappa);
        Ok(sys)
    }

    pub fn num_orbits(&self) -> usize {
        self.section_mass.len()
    }

    pub fn section_inner(&self, a: &Section, b: &Section) -> C64 {
        let mut s = ZERO;
        for o in 0..a.len() {
            s += (a.f1[o] * b.f1[o].conj() + a.f2[o] * b.f2[o].conj()) * self.section_mass[o];
        }
        s
    }

    pub fn section_norm(&self, a: &Section) -> f64 {
        self.section_inner(a, a).re.max(0.0).sqrt()
    }

    pub fn form_inner(&self, a: &OneForm, b: &OneForm) -> C64 {
        let mut s = ZERO;
        for f in 0..a.w1.len() {
            s += (a.w1[f] * b.w1[f].conj() + a.w2[f] * b.w2[f].conj()) * self.form_mass[f];
        }
        s
    }

    pub fn form_norm(&self, a: &OneForm) -> f64 {
        self.form_inner(a, a).re.max(0.0).sqrt()
    }

    pub fn d01(&self, w: &Section) -> OneForm {
        OneForm::from_vec(&self.d01.mul_vec(&w.to_vec()))
    }

    /// Exact adjoint of `d01` for the two inner products.
    pub fn d01_adjoint(&self, w: &OneForm) -> Section {
        let weighted: Vec<C64> = w.to_vec().iter().enumerate().map(|(i, v)| v * self.form_mass[i / 2]).collect();
        let y = self.d01.mul_adjoint_vec(&weighted);
        Section::from_vec(&self.unweight(y))
    }

    fn unweight(&self, mut y: Vec<C64>) -> Vec<C64> {
        for (i, v) in y.iter_mut().enumerate() {
            *v /= self.section_mass[i / 2];
        }
        y
    }

    pub fn curvature_r(&self, w: &Section) -> Section {
        let mut out = Section::zero(w.len());
        for o in 0..w.len() {
            let b = &self.r_blocks[o];
            let x = [w.f1[o], w.f2[o]];
            // the form is Σ conj(x_i) b_ij x_j
            out.f1[o] = (b[0][0] * x[0] + b[0][1] * x[1]) / self.section_mass[o];
            out.f2[o] = (b[1][0] * x[0] + b[1][1] * x[1]) / self.section_mass[o];
        }
        out
    }

    /// J W = M⁻¹ K_sym W, real and symmetric for the section inner product.
    pub fn jacobi_apply(&self, w: &Section) -> Section {
        Section::from_vec(&self.unweight(self.stiffness.mul_vec(&w.to_vec())))
    }

    /// (∇^{0,1})*∇^{0,1} + R without the reality symmetrization.
    pub fn jacobi_apply_raw(&self, w: &Section) -> Section {
        Section::from_vec(&self.unweight(self.stiffness_raw.mul_vec(&w.to_vec())))
    }

    /// i_μdu = μ(u_z, conj(u_z̄)) per face and the real section 2·Re((∇^{0,1})* i_μdu).
    pub fn rhs_from_mu(&self, mu: &SampledBeltrami, domain: &TriangulatedDomain) -> (OneForm, Section) {
        let nf = domain.faces.len();
        let mut w = OneForm::zero(nf);
        for f in 0..nf {
            let m = mu.mu_at_centroid(domain, f);
            w.w1[f] = m * self.data.uz[f];
            w.w2[f] = m * self.data.uzb[f].conj();
        }
        let a = self.d01_adjoint(&w);
        let rhs = a.combine(&a.conjugate(), 1.0, 1.0);
        (w, rhs)
    }

    fn project_out_kernel(&self, w: &Section) -> Section {
        let mut out = w.clone();
        for e in &self.kernel {
            let c = self.section_inner(&out, e);
            out = Section {
                f1: out.f1.iter().zip(&e.f1).map(|(x, y)| x - c * y).collect(),
                f2: out.f2.iter().zip(&e.f2).map(|(x, y)| x - c * y).collect(),
            };
        }
        out
    }

    /// Minimum-norm solution of J V = P(rhs), P the projection off the numerical kernel.
    pub fn solve_jacobi(&self, rhs: &Section, tol: f64, max_iter: usize) -> Result<JacobiSolution> {
        let prhs = self.project_out_kernel(rhs);
        if self.section_norm(&prhs) == 0.0 {
            return Ok(JacobiSolution { v: Section::zero(rhs.len()), iterations: 0, residual: 0.0 });
        }
        let b: Vec<C64> = prhs.to_vec().iter().enumerate().map(|(i, v)| v * self.section_mass[i / 2]).collect();
        let diag = self.stiffness.diagonal();
        let kernel_dual: Vec<Vec<C64>> = self
            .kernel
            .iter()
            .map(|e| e.to_vec().iter().enumerate().map(|(i, v)| v * self.section_mass[i / 2]).collect())
            .collect();
        let kernel_vecs: Vec<Vec<C64>> = self.kernel.iter().map(|e| e.to_vec()).collect();
        let project = |r: &mut [C64]| {
            for (e, me) in kernel_vecs.iter().zip(&kernel_dual) {
                let c = dot(e, r);
                for (ri, mi) in r.iter_mut().zip(me) {
                    *ri -= c * mi;
                }
            }
        };
        let proj: Option<&dyn Fn(&mut [C64])> = if self.kernel.is_empty() { None } else { Some(&project) };
        let out = conjugate_gradient(|v| self.stiffness.mul_vec(v), jacobi_preconditioner(&diag), &b, tol * 1e-2, max_iter, proj)?;
        let v = self.project_out_kernel(&Section::from_vec(&out.x));
        let jv = self.jacobi_apply(&v);
        let res = self.section_norm(&jv.combine(&prhs, 1.0, -1.0)) / self.section_norm(&prhs);
        if res > tol {
            return Err(LabError::NonConvergence { iterations: out.iterations, residual: res });
        }
        Ok(JacobiSolution { v, iterations: out.iterations, residual: res })
    }

    /// Δ^{0,1} = (∇^{0,1})*∇^{0,1} applied in the mass-weighted form.
    fn laplacian_weighted(&self, x: &[C64]) -> Vec<C64> {
        let y = self.d01.mul_vec(x);
        let weighted: Vec<C64> = y.iter().enumerate().map(|(i, v)| v * self.form_mass[i / 2]).collect();
        self.d01.mul_adjoint_vec(&weighted)
    }

    /// H(ω) = ω − ∇^{0,1}s with Δ^{0,1}s = (∇^{0,1})*ω.
    pub fn harmonic_projection(&self, w: &OneForm, tol: f64, max_iter: usize) -> Result<OneForm> {
        let weighted: Vec<C64> = w.to_vec().iter().enumerate().map(|(i, v)| v * self.form_mass[i / 2]).collect();
        let b = self.d01.mul_adjoint_vec(&weighted);
        // the diagonal of Δ^{0,1} in weighted form
        let mut diag = vec![ZERO; b.len()];
        for r in 0..self.d01.n {
            for k in self.d01.row_ptr[r]..self.d01.row_ptr[r + 1] {
                diag[self.d01.cols[k]] += C64::new(self.d01.vals[k].norm_sqr() * self.form_mass[r / 2], 0.0);
            }
        }
        let out = conjugate_gradient(|v| self.laplacian_weighted(v), jacobi_preconditioner(&diag), &b, tol, max_iter, None)?;
        let ds = self.d01(&Section::from_vec(&out.x));
        Ok(w.combine(&ds, 1.0, -1.0))
    }

    /// Extreme eigenvalues of J by Lanczos with full reorthogonalization on
    /// M^{-1/2} K M^{-1/2}; kernel vectors are collected by restarting orthogonally to
    /// those already found.
    fn detect_kernel(&mut self, kappa: f64) {
        let dim = 2 * self.num_orbits();
        let sq: Vec<f64> = (0..dim).map(|i| self.section_mass[i / 2].sqrt()).collect();
        let apply = |x: &[C64]| -> Vec<C64> {
            let y: Vec<C64> = x.iter().zip(&sq).map(|(v, s)| v / s).collect();
            self.stiffness.mul_vec(&y).iter().zip(&sq).map(|(v, s)| v / s).collect()
        };
        let steps = dim.min(600);
        let mut found: Vec<Vec<C64>> = Vec::new();
        let mut lambda_max: f64 = 0.0;
        for restart in 0..8u64 {
            let start: Vec<C64> = (0..dim)
                .map(|i| {
                    let x = ((i as f64 + 1.0) * (0.7548776662 + restart as f64 * 0.1234567)).fract() - 0.5;
                    let y = ((i as f64 + 1.0) * (0.5698402910 + restart as f64 * 0.0987654)).fract() - 0.5;
                    C64::new(x, y)
                })
                .collect();
            let (vals, vecs) = lanczos(&apply, start, steps, &found);
            if let Some(m) = vals.last() {
                lambda_max = lambda_max.max(*m);
            }
            let mut new = 0;
            for (val, vec) in vals.iter().zip(vecs) {
                if *val < kappa * lambda_max {
                    found.push(vec);
                    new += 1;
                }
            }
            if new == 0 {
                break;
            }
        }
        self.lambda_max = lambda_max;
        self.kernel = found
            .iter()
            .map(|v| {
                let x: Vec<C64> = v.iter().zip(&sq).map(|(a, s)| a / s).collect();
                Section::from_vec(&x)
            })
            .collect();
    }

    pub fn kernel_dimension(&self) -> usize {
        self.kernel.len()
    }
}

/// Lanczos on a Hermitian operator with full reorthogonalization (also against `deflate`,
/// assumed orthonormal). Returns ascending Ritz values with converged Ritz vectors for
/// the smallest ones and the largest value last.
fn lanczos<A: Fn(&[C64]) -> Vec<C64>>(
    apply: &A,
    start: Vec<C64>,
    steps: usize,
    deflate: &[Vec<C64>],
) -> (Vec<f64>, Vec<Vec<C64>>) {
    let orth = |v: &mut Vec<C64>, basis: &[Vec<C64>]| {
        for b in basis {
            let c = dot(b, v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    };
    let normalize = |v: &mut Vec<C64>| -> f64 {
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in v.iter_mut() {
                *x /= n;
            }
        }
        n
    };
    let mut q = start;
    orth(&mut q, deflate);
    if normalize(&mut q) == 0.0 {
        return (Vec::new(), Vec::new());
    }
    let mut basis: Vec<Vec<C64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = apply(&basis[j]);
        alpha.push(dot(&basis[j], &w).re);
        for _ in 0..2 {
            orth(&mut w, deflate);
            orth(&mut w, &basis);
        }
        let b = normalize(&mut w);
        if b < 1e-12 * alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300) || j + 1 == steps {
            break;
        }
        beta.push(b);
        basis.push(w);
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].partial_cmp(&eig.eigenvalues[*b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vec<C64>> = order
        .iter()
        .map(|&i| {
            let mut v = vec![ZERO; basis[0].len()];
            for (k, b) in basis.iter().enumerate().take(m) {
                let c = eig.eigenvectors[(k, i)];
                for (x, y) in v.iter_mut().zip(b) {
                    *x += y * c;
                }
            }
            v
        })
        .collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{energy_density, minimize, SolverOptions};
    use crate::mesh::triangulate;
    use crate::mobius::Mobius;
    use crate::qdiff::{beltrami_from_q, poincare_series_on_cover, wp_norm_sq};
    use crate::surface::{build_cyclic_cover, build_surface};
    use crate::wolf::WolfMetricFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    struct Fixture {
        domain: TriangulatedDomain,
        map: EquivariantMap,
        sys: JacobiSystem,
        mu: SampledBeltrami,
    }

    fn covering() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let s = build_surface(2).unwrap();
            let cover = build_cyclic_cover(&s, &[1, 0, 0, 0], 2).unwrap();
            let domain = triangulate(&s, 2).unwrap().lift_to_cover(&cover).unwrap();
            let fam = WolfMetricFamily::flat(&domain);
            let (map, _) =
                minimize(&EquivariantMap::identity(&domain), &domain, &fam, 0.0, SolverOptions::default()).unwrap();
            let sys = JacobiSystem::new(&map, &domain, 1e-10).unwrap();
            let q = poincare_series_on_cover(&cover, 0, 5).unwrap();
            let mu = SampledBeltrami::new(&beltrami_from_q(q), &domain);
            let mu = mu.scaled(1.0 / wp_norm_sq(&mu, &domain).sqrt());
            Fixture { domain, map, sys, mu }
        })
    }

    fn constant_map() -> (TriangulatedDomain, JacobiSystem) {
        let s = build_surface(2).unwrap();
        let domain = triangulate(&s, 1).unwrap();
        let map = EquivariantMap {
            phi: vec![Mobius::new(C64::new(1.0, 0.0), ZERO); s.generators.len()],
            values: vec![C64::new(0.2, -0.1); domain.num_orbits()],
        };
        let sys = JacobiSystem::new(&map, &domain, 1e-10).unwrap();
        (domain, sys)
    }

    fn random_form<R: Rng>(n: usize, rng: &mut R) -> OneForm {
        let s = Section::random(n, rng);
        OneForm { w1: s.f1, w2: s.f2 }
    }

    #[test]
    fn connection_coefficient_matches_log_derivative() {
        let v = C64::new(0.31, -0.42);
        let h = 1e-6;
        let lr = |z: C64| (2.0 / (1.0 - z.norm_sqr())).ln();
        let dx = (lr(v + h) - lr(v - h)) / (2.0 * h);
        let dy = (lr(v + C64::new(0.0, h)) - lr(v - C64::new(0.0, h))) / (2.0 * h);
        let dv = C64::new(dx, -dy) * 0.5;
        assert!((connection_coefficient(v) - dv * 2.0).norm() < 1e-8);
    }

    #[test]
    fn d01_is_linear_and_its_adjoint_is_exact() {
        let fx = covering();
        let sys = &fx.sys;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = sys.num_orbits();
        let nf = fx.domain.faces.len();
        for _ in 0..20 {
            let w = Section::random(n, &mut rng);
            let v = Section::random(n, &mut rng);
            let om = random_form(nf, &mut rng);
            let lhs = sys.form_inner(&sys.d01(&w), &om);
            let rhs = sys.section_inner(&w, &sys.d01_adjoint(&om));
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0), "{lhs} {rhs}");
            let comb = sys.d01(&w.combine(&v, 2.0, -0.5));
            let sep = sys.d01(&w).combine(&sys.d01(&v), 2.0, -0.5);
            assert!(sys.form_norm(&comb.combine(&sep, 1.0, -1.0)) <= 1e-12 * sys.form_norm(&comb));
        }
        assert_eq!(sys.d01(&Section::zero(n)), OneForm::zero(nf));
        assert_eq!(sys.d01_adjoint(&OneForm::zero(nf)), Section::zero(n));
    }

    #[test]
    fn jacobi_operator_is_hermitian_real_and_semipositive() {
        let fx = covering();
        let sys = &fx.sys;
        assert!(sys.stiffness.hermitian_defect() <= 1e-12 * sys.stiffness.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = sys.num_orbits();
        for _ in 0..50 {
            let w = Section::random(n, &mut rng);
            let v = Section::random(n, &mut rng);
            let jw = sys.jacobi_apply(&w);
            let a = sys.section_inner(&jw, &v);
            let b = sys.section_inner(&w, &sys.jacobi_apply(&v));
            assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
            let rq = sys.section_inner(&jw, &w).re;
            assert!(rq >= -1e-10 * sys.section_norm(&w).powi(2));
            let real = w.real_part();
            assert!(real.reality_defect() == 0.0);
            let jr = sys.jacobi_apply(&real);
            let scale = jr.f1.iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(jr.reality_defect() <= 1e-10 * scale);
        }
    }

    #[test]
    fn curvature_matches_closed_form_and_kills_du() {
        let fx = covering();
        let (sys, d) = (&fx.sys, &fx.domain);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Section::random(sys.num_orbits(), &mut rng);
        let got = sys.section_inner(&sys.curvature_r(&w), &w);
        let mut want = 0.0;
        for (fi, f) in d.faces.iter().enumerate() {
            for &s in f {
                let o = d.slot_orbit[s];
                let tp = sys.data.slot_deriv[s];
                let (f1, f2) = (tp * w.f1[o], tp.conj() * w.f2[o]);
                let (uz, uzb) = (sys.data.uz[fi], sys.data.uzb[fi]);
                let r2 = conformal_factor(sys.data.slot_value[s]);
                let closed = f1.norm_sqr() * uzb.norm_sqr() + f2.norm_sqr() * uz.norm_sqr()
                    - 2.0 * (f1.conj() * f2 * uz * uzb).re;
                want += d.geometry[fi].area / 3.0 * r2 * r2 / 2.0 * closed;
            }
        }
        assert!(got.im.abs() <= 1e-12 * want);
        assert!((got.re - want).abs() <= 1e-10 * want, "{} {want}", got.re);
        assert!(want >= 0.0);
        let du = Section::along_du(&sys.data, d, C64::new(0.3, 0.7));
        let ratio = sys.section_norm(&sys.curvature_r(&du)) / sys.section_norm(&du);
        // face-to-vertex averaging error of the coarse mesh
        assert!(ratio < 2e-4, "{ratio}");
        assert_eq!(sys.curvature_r(&Section::zero(3)), Section::zero(3));
    }

    #[test]
    fn form_norm_equals_weighted_energy() {
        let fx = covering();
        let (sys, d) = (&fx.sys, &fx.domain);
        let (om, _) = sys.rhs_from_mu(&fx.mu, d);
        let dens = energy_density(&fx.map, d, &WolfMetricFamily::flat(d), 0.0).unwrap();
        let mut want = 0.0;
        for (f, g) in d.geometry.iter().enumerate() {
            let l2 = conformal_factor(g.centroid);
            want += g.area * l2 * dens[f] * fx.mu.centroid_q[f].norm_sqr() / (l2 * l2);
        }
        let got = sys.form_norm(&om).powi(2);
        assert!((got - want).abs() <= 1e-10 * want, "{got} {want}");
        let (z, r) = sys.rhs_from_mu(&fx.mu.scaled(0.0), d);
        assert_eq!(sys.form_norm(&z), 0.0);
        assert_eq!(sys.section_norm(&r), 0.0);
    }

    #[test]
    fn projection_is_orthogonal_and_kills_exact_forms() {
        let fx = covering();
        let sys = &fx.sys;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ex = sys.d01(&Section::random(sys.num_orbits(), &mut rng));
        let h = sys.harmonic_projection(&ex, 1e-12, 20000).unwrap();
        assert!(sys.form_norm(&h) <= 1e-6 * sys.form_norm(&ex));

        let om = random_form(fx.domain.faces.len(), &mut rng);
        let h = sys.harmonic_projection(&om, 1e-12, 20000).unwrap();
        let (n, nh) = (sys.form_norm(&om), sys.form_norm(&h));
        let rest = sys.form_norm(&om.combine(&h, 1.0, -1.0));
        assert!(nh <= n + 1e-10);
        assert!((n * n - nh * nh - rest * rest).abs() <= 1e-8 * n * n);
        assert!(sys.section_norm(&sys.d01_adjoint(&h)) <= 1e-6 * n);
    }

    #[test]
    fn covering_du_deformation_is_nearly_harmonic() {
        let fx = covering();
        let sys = &fx.sys;
        assert_eq!(sys.kernel_dimension(), 0);
        let (om, rhs) = sys.rhs_from_mu(&fx.mu, &fx.domain);
        let n = sys.form_norm(&om);
        // first-order consistency errors on a level-2 mesh
        assert!(sys.section_norm(&sys.d01_adjoint(&om)) <= 0.15 * n);
        assert!(sys.section_norm(&rhs) <= 0.2 * n);
        let h = sys.harmonic_projection(&om, 1e-12, 20000).unwrap();
        assert!(sys.form_norm(&om.combine(&h, 1.0, -1.0)) <= 0.12 * n);
        assert!((sys.form_norm(&h).powi(2) - 1.0).abs() <= 5e-2);
    }

    #[test]
    fn jacobi_solve_meets_residual_contract() {
        let fx = covering();
        let sys = &fx.sys;
        let (_, rhs) = sys.rhs_from_mu(&fx.mu, &fx.domain);
        let sol = sys.solve_jacobi(&rhs, 1e-8, 20000).unwrap();
        assert!(sol.residual <= 1e-8);
        assert!(sol.v.reality_defect() <= 1e-8 * sys.section_norm(&sol.v));
        let zero = sys.solve_jacobi(&Section::zero(sys.num_orbits()), 1e-8, 100).unwrap();
        assert_eq!(zero.v, Section::zero(sys.num_orbits()));
    }

    #[test]
    fn constant_map_has_constant_kernel_and_kernel_invariant_energy() {
        let (_, sys) = constant_map();
        assert_eq!(sys.kernel_dimension(), 2);
        let n = sys.num_orbits();
        for e in &sys.kernel {
            assert!(sys.section_norm(&sys.jacobi_apply(e)) <= 1e-6 * sys.lambda_max.sqrt() * sys.section_norm(e));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rhs = Section::random(n, &mut rng).real_part();
        let sol = sys.solve_jacobi(&rhs, 1e-8, 20000).unwrap();
        let base = sys.section_inner(&sys.jacobi_apply(&sol.v), &sol.v).re;
        for e in &sys.kernel {
            let v = sol.v.combine(e, 1.0, 0.8);
            let moved = sys.section_inner(&sys.jacobi_apply(&v), &v).re;
            assert!((moved - base).abs() <= 1e-8 * base.abs(), "{moved} {base}");
        }
    }
}
