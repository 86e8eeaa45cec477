//! Compressed sparse rows and preconditioned conjugate gradients over ℝ or ℂ.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};

pub trait Scalar:
    Copy + Default + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> + AddAssign + std::fmt::Debug
{
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn scale(self, x: f64) -> Self;
    fn real(self) -> f64;
}

impl Scalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn real(self) -> f64 {
        self
    }
}

impl Scalar for C64 {
    fn conj(self) -> Self {
        C64::conj(&self)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn from_real(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn real(self) -> f64 {
        self.re
    }
}

#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub n: usize,
    pub m: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Assembles an n×m matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, m: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, m, row_ptr, cols, vals }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::default();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
        y
    }

    /// y = Aᴴ x.
    pub fn mul_adjoint_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.m];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.cols[k]] += self.vals[k].conj() * x[i];
            }
        }
        y
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => T::default(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// max |A_ij − conj(A_ji)|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                worst = worst.max((self.vals[k] - self.get(j, i).conj()).abs2().sqrt());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.abs2().sqrt()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::default(); self.m]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.cols[k]] += self.vals[k];
            }
        }
        d
    }
}

pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut s = T::default();
    for (a, b) in x.iter().zip(y) {
        s += a.conj() * *b;
    }
    s
}

pub fn norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.abs2()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// ‖b − Ax‖ / ‖b‖.
    pub relative_residual: f64,
}

/// Preconditioned CG for a Hermitian positive (semi)definite operator.
/// `project`, when given, is applied to the residual every step (used to stay
/// orthogonal to a known kernel). Starts from zero, so singular consistent systems
/// converge to the minimum-norm solution.
pub fn conjugate_gradient<T, A, P>(
    apply: A,
    precond: P,
    b: &[T],
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [T])>,
) -> Result<CgOutcome<T>>
where
    T: Scalar,
    A: Fn(&[T]) -> Vec<T>,
    P: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![T::default(); n];
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    if let Some(p) = project {
        p(&mut r);
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).real();
    let mut it = 0;
    let mut res = norm(&r) / bnorm;
    while res > tol && it < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap).real();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += p[i].scale(alpha);
            r[i] = r[i] - ap[i].scale(alpha);
        }
        it += 1;
        // refresh the residual periodically to keep rounding drift out of the stopping test
        if it % 50 == 0 {
            let ax = apply(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        if let Some(pr) = project {
            pr(&mut r);
        }
        res = norm(&r) / bnorm;
        z = precond(&r);
        let rz_new = dot(&r, &z).real();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + p[i].scale(beta);
        }
    }
    let ax = apply(&x);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
    if let Some(pr) = project {
        pr(&mut r);
    }
    let true_res = norm(&r) / bnorm;
    if true_res > tol {
        return Err(LabError::NonConvergence { iterations: it, residual: true_res });
    }
    Ok(CgOutcome { x, iterations: it, relative_residual: true_res })
}

pub fn jacobi_preconditioner<T: Scalar>(diag: &[T]) -> impl Fn(&[T]) -> Vec<T> + '_ {
    move |r: &[T]| {
        r.iter()
            .zip(diag)
            .map(|(ri, d)| {
                let dv = d.real();
                if dv > 0.0 {
                    ri.scale(1.0 / dv)
                } else {
                    *ri
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> Csr<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian_1d(50, 0.1);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&xs);
        let d = a.diagonal();
        let out = conjugate_gradient(|v| a.mul_vec(v), jacobi_preconditioner(&d), &b, 1e-12, 500, None).unwrap();
        let err = xs.iter().zip(&out.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn cg_solves_hermitian_system() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, C64::new(3.0, 0.0)));
            if i + 1 < n {
                let c = C64::new(0.5, 0.7);
                t.push((i, i + 1, c));
                t.push((i + 1, i, c.conj()));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        assert!(a.hermitian_defect() < 1e-15);
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let out = conjugate_gradient(|v| a.mul_vec(v), |r: &[C64]| r.to_vec(), &b, 1e-12, 200, None).unwrap();
        let r = a.mul_vec(&out.x);
        let err = r.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = laplacian_1d(100, 0.0);
        let b = vec![1.0; 100];
        let r = conjugate_gradient(|v| a.mul_vec(v), |r: &[f64]| r.to_vec(), &b, 1e-14, 3, None);
        assert!(matches!(r, Err(LabError::NonConvergence { .. })));
    }
}
