//! Small shared linear-algebra helpers: norms, inner products, a classical
//! RK4 driver for non-autonomous linear flows, a truncated-Taylor
//! `exp(A)·v` for sparse anti-Hermitian generators, and a Lanczos
//! exponential stepper for Hermitian sparse matrices.

use nalgebra::{DMatrix, DVector};
use sprs::CsMat;

use crate::{Real, C64};

pub fn norm_slice(v: &[C64]) -> Real {
    v.iter().map(|z| z.norm_sqr()).sum::<Real>().sqrt()
}

pub fn inner_slice(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_vec(v: &DVector<C64>) -> Real {
    norm_slice(v.as_slice())
}

pub fn inner_vec(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    inner_slice(a.as_slice(), b.as_slice())
}

pub fn linf_vec(v: &DVector<C64>) -> Real {
    v.iter().map(|z| z.norm()).fold(0.0, Real::max)
}

pub fn linf_mat(m: &DMatrix<C64>) -> Real {
    m.iter().map(|z| z.norm()).fold(0.0, Real::max)
}

/// Largest singular value (operator norm) of a dense matrix.
pub fn op_norm(m: &DMatrix<C64>) -> Real {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Entrywise max deviation from self-adjointness.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> Real {
    linf_mat(&(m - m.adjoint()))
}

/// `y += c * A x` for a CSR matrix over complex entries.
pub fn spmv_acc(a: &CsMat<C64>, c: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(a.cols(), x.len());
    debug_assert_eq!(a.rows(), y.len());
    for (row, vec) in a.outer_iterator().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] += c * acc;
    }
}

/// `A x` as a fresh vector.
pub fn spmv(a: &CsMat<C64>, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); a.rows()];
    spmv_acc(a, C64::new(1.0, 0.0), x, &mut y);
    y
}

/// Entrywise max |A - B| over the union sparsity pattern.
pub fn sparse_linf_diff(a: &CsMat<C64>, b: &CsMat<C64>) -> Real {
    use std::collections::BTreeMap;
    let mut map: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for (v, (r, c)) in a.iter() {
        *map.entry((r, c)).or_insert(C64::new(0.0, 0.0)) += *v;
    }
    for (v, (r, c)) in b.iter() {
        *map.entry((r, c)).or_insert(C64::new(0.0, 0.0)) -= *v;
    }
    map.values().map(|z| z.norm()).fold(0.0, Real::max)
}

/// Entrywise max deviation of a sparse matrix from self-adjointness.
pub fn sparse_hermiticity_defect(a: &CsMat<C64>) -> Real {
    let mut at = a.clone();
    at.transpose_mut();
    let at = at.to_csr();
    let conj = CsMat::new(
        (at.rows(), at.cols()),
        at.indptr().as_slice().unwrap().to_vec(),
        at.indices().to_vec(),
        at.data().iter().map(|z| z.conj()).collect(),
    );
    sparse_linf_diff(a, &conj)
}

/// Minimal state interface for the RK4 driver.
pub trait FlowState: Clone {
    fn add_scaled(&mut self, c: Real, other: &Self);
    fn rescale(&mut self, c: Real);
}

impl FlowState for DVector<C64> {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        *self += other * C64::new(c, 0.0);
    }
    fn rescale(&mut self, c: Real) {
        *self *= C64::new(c, 0.0);
    }
}

impl FlowState for DMatrix<C64> {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        *self += other * C64::new(c, 0.0);
    }
    fn rescale(&mut self, c: Real) {
        *self *= C64::new(c, 0.0);
    }
}

impl FlowState for Vec<C64> {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b * c;
        }
    }
    fn rescale(&mut self, c: Real) {
        for a in self.iter_mut() {
            *a *= c;
        }
    }
}

impl<A: FlowState, B: FlowState> FlowState for (A, B) {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        self.0.add_scaled(c, &other.0);
        self.1.add_scaled(c, &other.1);
    }
    fn rescale(&mut self, c: Real) {
        self.0.rescale(c);
        self.1.rescale(c);
    }
}

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<S: FlowState>(y: &S, t: Real, dt: Real, f: &mut impl FnMut(Real, &S) -> S) -> S {
    let k1 = f(t, y);
    let mut y2 = y.clone();
    y2.add_scaled(dt / 2.0, &k1);
    let k2 = f(t + dt / 2.0, &y2);
    let mut y3 = y.clone();
    y3.add_scaled(dt / 2.0, &k2);
    let k3 = f(t + dt / 2.0, &y3);
    let mut y4 = y.clone();
    y4.add_scaled(dt, &k3);
    let k4 = f(t + dt, &y4);
    let mut out = y.clone();
    out.add_scaled(dt / 6.0, &k1);
    out.add_scaled(dt / 3.0, &k2);
    out.add_scaled(dt / 3.0, &k3);
    out.add_scaled(dt / 6.0, &k4);
    out
}

/// `exp(c·A) v` for an operator given as an accumulating closure
/// (`apply(x, y)` performs `y += A x`), by scaling-and-squaring with a
/// truncated Taylor series. `norm_est` is any upper bound on ‖A‖.
///
/// Intended for well-conditioned generators (anti-Hermitian `c·A`), where
/// the series of the scaled operator converges fast and the repeated
/// application is stable.
pub fn expm_multiply_op(
    apply: &dyn Fn(&[C64], &mut [C64]),
    norm_est: Real,
    c: C64,
    v: &[C64],
    tol: Real,
) -> Vec<C64> {
    let scale = norm_est * c.norm();
    let squarings: u32 = if scale > 1.0 { scale.log2().ceil() as u32 } else { 0 };
    let cs = c / (2.0_f64).powi(squarings as i32);
    let reps = 1usize << squarings;
    let mut out = v.to_vec();
    for _ in 0..reps {
        out = taylor_apply(apply, cs, &out, tol);
    }
    out
}

/// `exp(c·A) v` for a sparse matrix.
pub fn expm_multiply(a: &CsMat<C64>, c: C64, v: &[C64], tol: Real) -> Vec<C64> {
    // Crude norm bound to choose the scaling.
    let mut row_max: Real = 0.0;
    for row_vec in a.outer_iterator() {
        let s: Real = row_vec.iter().map(|(_, z)| z.norm()).sum();
        row_max = row_max.max(s);
    }
    let apply = |x: &[C64], y: &mut [C64]| spmv_acc(a, C64::new(1.0, 0.0), x, y);
    expm_multiply_op(&apply, row_max, c, v, tol)
}

fn taylor_apply(apply: &dyn Fn(&[C64], &mut [C64]), c: C64, v: &[C64], tol: Real) -> Vec<C64> {
    let mut sum = v.to_vec();
    let mut term = v.to_vec();
    let base = norm_slice(v).max(1e-300);
    for k in 1..200 {
        let mut next = vec![C64::new(0.0, 0.0); term.len()];
        apply(&term, &mut next);
        let ck = c / (k as Real);
        for t in next.iter_mut() {
            *t *= ck;
        }
        term = next;
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        if norm_slice(&term) < tol * base {
            break;
        }
    }
    sum
}

/// Lanczos approximation of `exp(-i dt H) v` for Hermitian sparse `H`.
pub fn lanczos_expmv(h: &CsMat<C64>, dt: Real, v: &[C64], m: usize) -> Vec<C64> {
    let n = v.len();
    let beta0 = norm_slice(v);
    if beta0 == 0.0 {
        return v.to_vec();
    }
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    basis.push(v.iter().map(|z| z / beta0).collect());
    let mut alphas: Vec<Real> = Vec::with_capacity(m);
    let mut betas: Vec<Real> = Vec::with_capacity(m);
    let mut dim = m;
    for j in 0..m {
        let mut w = spmv(h, &basis[j]);
        let alpha = inner_slice(&basis[j], &w).re;
        alphas.push(alpha);
        for i in 0..n {
            w[i] -= basis[j][i] * alpha;
            if j > 0 {
                w[i] -= basis[j - 1][i] * betas[j - 1];
            }
        }
        // full reorthogonalization keeps the small factor accurate
        for prev in basis.iter() {
            let ip = inner_slice(prev, &w);
            for i in 0..n {
                w[i] -= prev[i] * ip;
            }
        }
        let beta = norm_slice(&w);
        if beta < 1e-14 {
            dim = j + 1;
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|z| z / beta).collect());
    }
    let k = dim.min(alphas.len());
    let mut t = DMatrix::<C64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = C64::new(alphas[i], 0.0);
        if i + 1 < k {
            t[(i, i + 1)] = C64::new(betas[i], 0.0);
            t[(i + 1, i)] = C64::new(betas[i], 0.0);
        }
    }
    let e = (t * C64::new(0.0, -dt)).exp();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (j, col) in basis.iter().take(k).enumerate() {
        let coeff = e[(j, 0)] * beta0;
        for i in 0..n {
            out[i] += col[i] * coeff;
        }
    }
    out
}

/// Least squares slope of y against x with the RMS residual of the fit.
pub fn lstsq_slope(xs: &[Real], ys: &[Real]) -> (Real, Real) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as Real;
    let xm = xs.iter().sum::<Real>() / n;
    let ym = ys.iter().sum::<Real>() / n;
    let sxx: Real = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: Real = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<Real>()
        / n;
    (slope, res.sqrt())
}
