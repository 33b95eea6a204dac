//! Discretization: periodic box, plane-wave modes, dispersion and form
//! factor.
//!
//! Momenta live on the lattice `k = n / L` with integer `n`. Two separate
//! index sets are kept: a rectangular block of particle modes and a
//! symmetric block of field modes. The fixed Fourier kernel is
//! `e^{-2πik·x}`, so the Laplacian acts as `(2π|k|)²` while the dispersion
//! `ω(k) = √(|k|² + m²)` uses the bare `|k|`.
//!
//! One-body particle vectors are stored as coefficients in the orthonormal
//! plane-wave basis `|n⟩ = e^{2πin·x/L} / L^{d/2}`, so plain ℓ² inner
//! products are the L² inner products of the functions they represent.
//! Products of functions become truncated convolutions of coefficients; the
//! tables for those convolutions are precomputed here and shared by every
//! other module, which keeps all layers of the simulation on exactly the
//! same finite-mode model.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::{Real, C64};

/// Integer lattice point; unused axes stay zero.
pub type Mode = [i64; 3];

/// Form-factor profile g(k); all variants are real and even in k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GProfile {
    /// g(k) = amplitude on every retained mode.
    Constant,
    /// g(k) = amplitude · exp(-|k|² / (2 cutoff²)).
    Gaussian,
    /// g(k) = amplitude · 1_{|k| ≤ cutoff}.
    Sharp,
}

/// Form factor g together with its parameters.
#[derive(Debug, Clone, Copy)]
pub struct FormFactor {
    pub profile: GProfile,
    pub amplitude: Real,
    pub cutoff: Real,
}

impl FormFactor {
    pub fn constant(amplitude: Real) -> Self {
        FormFactor { profile: GProfile::Constant, amplitude, cutoff: 0.0 }
    }

    /// Evaluate g at squared momentum |k|²; even in k by construction.
    pub fn eval(&self, k_sq: Real) -> Real {
        match self.profile {
            GProfile::Constant => self.amplitude,
            GProfile::Gaussian => {
                if self.cutoff <= 0.0 {
                    0.0
                } else {
                    self.amplitude * (-k_sq / (2.0 * self.cutoff * self.cutoff)).exp()
                }
            }
            GProfile::Sharp => {
                if k_sq.sqrt() <= self.cutoff {
                    self.amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// Static description of the discretized model.
///
/// `particle_range` / `field_range` give per-axis inclusive integer ranges;
/// only the first `dimension` axes are used. The field block must be
/// symmetric around zero so that k ↦ -k is an involution of the set.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub dimension: usize,
    pub box_length: Real,
    pub particle_range: [(i64, i64); 3],
    pub field_range: [(i64, i64); 3],
    /// Drop the k = 0 field mode (needed for massless fields with g(0) ≠ 0).
    pub exclude_zero_mode: bool,
    pub mass: Real,
    pub g: FormFactor,
}

impl ModelConfig {
    /// 1D model with particle modes `p_lo..=p_hi`, field modes `-f..=f`.
    pub fn d1(box_length: Real, p_lo: i64, p_hi: i64, f: i64, mass: Real, g: FormFactor) -> Self {
        ModelConfig {
            dimension: 1,
            box_length,
            particle_range: [(p_lo, p_hi), (0, 0), (0, 0)],
            field_range: [(-f, f), (0, 0), (0, 0)],
            exclude_zero_mode: false,
            mass,
            g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 3 {
            return Err(Error::InvalidModel(format!(
                "dimension must be 1 or 3, got {}",
                self.dimension
            )));
        }
        if !(self.box_length > 0.0) {
            return Err(Error::InvalidModel("box length must be positive".into()));
        }
        if self.mass < 0.0 {
            return Err(Error::InvalidModel("field mass must be nonnegative".into()));
        }
        for axis in 0..self.dimension {
            let (lo, hi) = self.particle_range[axis];
            if lo > hi {
                return Err(Error::InvalidModel(format!(
                    "empty particle mode range on axis {axis}"
                )));
            }
            let (flo, fhi) = self.field_range[axis];
            if flo > fhi {
                return Err(Error::InvalidModel(format!("empty field mode range on axis {axis}")));
            }
            if flo != -fhi {
                return Err(Error::InvalidModel(format!(
                    "field mode range on axis {axis} must be symmetric around 0"
                )));
            }
        }
        if self.mass == 0.0 && !self.exclude_zero_mode && self.g.eval(0.0) != 0.0 {
            return Err(Error::InvalidModel(
                "massless field with g(0) != 0: ω(0) = 0 makes η(0) infinite; \
                 set exclude_zero_mode or use a form factor vanishing at k = 0"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn enumerate_block(dimension: usize, range: &[(i64, i64); 3]) -> Vec<Mode> {
    let mut modes = Vec::new();
    let axis_range = |a: usize| -> (i64, i64) {
        if a < dimension {
            range[a]
        } else {
            (0, 0)
        }
    };
    let (x0, x1) = axis_range(0);
    let (y0, y1) = axis_range(1);
    let (z0, z1) = axis_range(2);
    for nx in x0..=x1 {
        for ny in y0..=y1 {
            for nz in z0..=z1 {
                modes.push([nx, ny, nz]);
            }
        }
    }
    modes
}

fn mode_norm_sq(n: &Mode, box_length: Real) -> Real {
    let s = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as Real;
    s / (box_length * box_length)
}

fn mode_sub(a: &Mode, b: &Mode) -> Mode {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn mode_neg(a: &Mode) -> Mode {
    [-a[0], -a[1], -a[2]]
}

/// Finite plane-wave discretization with all derived per-mode tables.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub dimension: usize,
    pub box_length: Real,
    pub mass: Real,
    pub particle_modes: Vec<Mode>,
    pub field_modes: Vec<Mode>,
    /// Kinetic eigenvalues κ_n = (2π|k|)² on particle modes.
    pub kinetic: Vec<Real>,
    /// Dispersion ω_j = √(|k|² + m²) on field modes.
    pub omega: Vec<Real>,
    /// Coupling η_j = g(k_j) / √(2 ω_j) on field modes.
    pub eta: Vec<Real>,
    /// Index of -k for every field mode.
    pub field_conj: Vec<usize>,
    particle_index: HashMap<Mode, usize>,
    field_index: HashMap<Mode, usize>,
    /// `shift[j][n] = index of (n_modes[n] - field_modes[j])` when retained.
    shift: Vec<Vec<Option<usize>>>,
    /// For each field mode j: list of particle pairs (n, n') with n' - n = j.
    density_pairs: Vec<Vec<(usize, usize)>>,
}

/// Build the basis with all derived arrays from a validated configuration.
pub fn build_basis(config: &ModelConfig) -> Result<ModeBasis> {
    config.validate()?;
    let particle_modes = enumerate_block(config.dimension, &config.particle_range);
    let mut field_modes = enumerate_block(config.dimension, &config.field_range);
    if config.exclude_zero_mode {
        field_modes.retain(|m| *m != [0, 0, 0]);
    }
    if particle_modes.is_empty() || field_modes.is_empty() {
        return Err(Error::InvalidModel("empty mode set".into()));
    }

    let l = config.box_length;
    let kinetic = particle_modes
        .iter()
        .map(|n| {
            let k_sq = mode_norm_sq(n, l);
            (2.0 * std::f64::consts::PI) * (2.0 * std::f64::consts::PI) * k_sq
        })
        .collect();
    let mut omega = Vec::with_capacity(field_modes.len());
    let mut eta = Vec::with_capacity(field_modes.len());
    for m in &field_modes {
        let k_sq = mode_norm_sq(m, l);
        let w = (k_sq + config.mass * config.mass).sqrt();
        let g = config.g.eval(k_sq);
        if w == 0.0 {
            if g != 0.0 {
                return Err(Error::InvalidModel(
                    "ω = 0 on a mode with nonvanishing form factor".into(),
                ));
            }
            omega.push(0.0);
            eta.push(0.0);
        } else {
            omega.push(w);
            eta.push(g / (2.0 * w).sqrt());
        }
    }

    let particle_index: HashMap<Mode, usize> =
        particle_modes.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let field_index: HashMap<Mode, usize> =
        field_modes.iter().enumerate().map(|(i, m)| (*m, i)).collect();

    let field_conj = field_modes
        .iter()
        .map(|m| {
            field_index
                .get(&mode_neg(m))
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("field set not symmetric: -{m:?} missing")))
        })
        .collect::<Result<Vec<_>>>()?;

    let shift = field_modes
        .iter()
        .map(|j| {
            particle_modes
                .iter()
                .map(|n| particle_index.get(&mode_sub(n, j)).copied())
                .collect()
        })
        .collect();

    let density_pairs = field_modes
        .iter()
        .map(|j| {
            let mut pairs = Vec::new();
            for (ni, n) in particle_modes.iter().enumerate() {
                // n' = n + j
                if let Some(&npi) = particle_index.get(&[n[0] + j[0], n[1] + j[1], n[2] + j[2]]) {
                    pairs.push((ni, npi));
                }
            }
            pairs
        })
        .collect();

    Ok(ModeBasis {
        dimension: config.dimension,
        box_length: config.box_length,
        mass: config.mass,
        particle_modes,
        field_modes,
        kinetic,
        omega,
        eta,
        field_conj,
        particle_index,
        field_index,
        shift,
        density_pairs,
    })
}

impl ModeBasis {
    pub fn n_particle_modes(&self) -> usize {
        self.particle_modes.len()
    }

    pub fn n_field_modes(&self) -> usize {
        self.field_modes.len()
    }

    pub fn particle_index(&self, m: &Mode) -> Option<usize> {
        self.particle_index.get(m).copied()
    }

    pub fn field_index(&self, m: &Mode) -> Option<usize> {
        self.field_index.get(m).copied()
    }

    /// ℓ² norm of η over the field modes (enters several operator bounds).
    pub fn eta_norm(&self) -> Real {
        self.eta.iter().map(|e| e * e).sum::<Real>().sqrt()
    }

    /// Coefficients of `e^{-2πik_j·x} u` for a particle-mode vector `u`:
    /// the coefficient at n comes from n + j, entries shifted out of the
    /// retained block are dropped.
    pub fn shifted(&self, j: usize, u: &DVector<C64>) -> DVector<C64> {
        let np = self.n_particle_modes();
        let mut out = DVector::zeros(np);
        let jc = self.field_conj[j]; // shift[-j][n] indexes n + j
        for n in 0..np {
            if let Some(src) = self.shift[jc][n] {
                out[n] = u[src];
            }
        }
        out
    }

    /// One-body matrix of multiplication by the real-field profile
    /// `V(x) = Σ_j v_j e^{-2πik_j·x}` on the particle modes:
    /// `M[n, n'] = v_{j}` where `k_j = (n' - n)/L` when retained.
    pub fn convolution_matrix(&self, v: &DVector<C64>) -> DMatrix<C64> {
        let np = self.n_particle_modes();
        assert_eq!(v.len(), self.n_field_modes(), "field profile length");
        let mut m = DMatrix::zeros(np, np);
        for (j, pairs) in self.density_pairs.iter().enumerate() {
            // pairs hold (n, n') with n' - n = j, i.e. column n', row n.
            for &(n, np_) in pairs {
                m[(n, np_)] += v[j];
            }
        }
        m
    }

    /// `∫ e^{-2πik_j·x} |u(x)|² dx` on every field mode, from mode
    /// coefficients: `ρ_j = Σ_{n' - n = j} conj(u_n) u_{n'}`.
    pub fn density_transform(&self, u: &DVector<C64>) -> DVector<C64> {
        let mut rho = DVector::zeros(self.n_field_modes());
        for (j, pairs) in self.density_pairs.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &(n, npi) in pairs {
                acc += u[n].conj() * u[npi];
            }
            rho[j] = acc;
        }
        rho
    }

    /// Momentum shifted by a field mode: index of `n - k_j`, if retained.
    pub fn particle_shift(&self, j: usize, n: usize) -> Option<usize> {
        self.shift[j][n]
    }
}

/// Square Fourier transform between grid samples and mode coefficients on a
/// rectangular block of consecutive modes.
///
/// Forward: `f̂(k) = ∫ e^{-2πik·x} f(x) dx`, discretized with the uniform
/// quadrature weight `(L/M)^d`; inverse reconstructs the samples. The grid
/// has exactly as many points per axis as there are modes.
#[derive(Debug, Clone)]
pub struct Transform {
    dimension: usize,
    box_length: Real,
    sizes: [usize; 3],
    offsets: [i64; 3],
}

impl Transform {
    /// Transform attached to the particle block of a configuration.
    pub fn particle(config: &ModelConfig) -> Self {
        let mut sizes = [1usize; 3];
        let mut offsets = [0i64; 3];
        for a in 0..config.dimension {
            let (lo, hi) = config.particle_range[a];
            sizes[a] = (hi - lo + 1) as usize;
            offsets[a] = lo;
        }
        Transform { dimension: config.dimension, box_length: config.box_length, sizes, offsets }
    }

    pub fn len(&self) -> usize {
        self.sizes[0] * self.sizes[1] * self.sizes[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points x_m, in the same linear order as grid vectors.
    pub fn grid_points(&self) -> Vec<[Real; 3]> {
        let mut pts = Vec::with_capacity(self.len());
        for mx in 0..self.sizes[0] {
            for my in 0..self.sizes[1] {
                for mz in 0..self.sizes[2] {
                    pts.push([
                        mx as Real * self.box_length / self.sizes[0] as Real,
                        my as Real * self.box_length / self.sizes[1] as Real,
                        mz as Real * self.box_length / self.sizes[2] as Real,
                    ]);
                }
            }
        }
        pts
    }

    /// Modes k = n/L in linear order matching coefficient vectors.
    pub fn modes(&self) -> Vec<Mode> {
        let mut out = Vec::with_capacity(self.len());
        for ax in 0..self.sizes[0] {
            for ay in 0..self.sizes[1] {
                for az in 0..self.sizes[2] {
                    out.push([
                        self.offsets[0] + ax as i64,
                        self.offsets[1] + ay as i64,
                        self.offsets[2] + az as i64,
                    ]);
                }
            }
        }
        out
    }

    fn kernel_1d(&self, axis: usize, conj: bool) -> DMatrix<C64> {
        let m = self.sizes[axis];
        let sign = if conj { 1.0 } else { -1.0 };
        DMatrix::from_fn(m, m, |row, col| {
            // mode index offset + row, grid index col
            let n = self.offsets[axis] + row as i64;
            let phase = sign * 2.0 * std::f64::consts::PI * (n as Real) * (col as Real) / m as Real;
            Complex64::new(phase.cos(), phase.sin())
        })
    }

    fn quadrature_weight(&self) -> Real {
        let mut w = 1.0;
        for a in 0..self.dimension {
            w *= self.box_length / self.sizes[a] as Real;
        }
        w
    }

    /// Forward transform; `values.len()` must equal the mode count.
    pub fn forward(&self, values: &DVector<C64>) -> Result<DVector<C64>> {
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid size {} != mode count {}",
                values.len(),
                self.len()
            )));
        }
        let mut out = values.clone();
        for axis in 0..self.dimension {
            out = self.apply_axis(&out, &self.kernel_1d(axis, false), axis);
        }
        Ok(out * C64::new(self.quadrature_weight(), 0.0))
    }

    /// Inverse transform; exact round trip up to rounding.
    pub fn inverse(&self, coeffs: &DVector<C64>) -> Result<DVector<C64>> {
        if coeffs.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "coefficient size {} != mode count {}",
                coeffs.len(),
                self.len()
            )));
        }
        let mut out = coeffs.clone();
        for axis in 0..self.dimension {
            // The per-axis kernel is unitary up to √M, so its inverse is the
            // conjugate transpose divided by M.
            let k = self.kernel_1d(axis, true).transpose() / C64::new(self.sizes[axis] as Real, 0.0);
            out = self.apply_axis(&out, &k, axis);
        }
        Ok(out / C64::new(self.quadrature_weight(), 0.0))
    }

    fn apply_axis(&self, v: &DVector<C64>, k: &DMatrix<C64>, axis: usize) -> DVector<C64> {
        // View v as a 3D array (s0, s1, s2) in row-major order and contract
        // the chosen axis with the kernel.
        let (s0, s1, s2) = (self.sizes[0], self.sizes[1], self.sizes[2]);
        let mut out = DVector::zeros(v.len());
        let idx = |a: usize, b: usize, c: usize| (a * s1 + b) * s2 + c;
        match axis {
            0 => {
                for b in 0..s1 {
                    for c in 0..s2 {
                        for row in 0..s0 {
                            let mut acc = C64::new(0.0, 0.0);
                            for col in 0..s0 {
                                acc += k[(row, col)] * v[idx(col, b, c)];
                            }
                            out[idx(row, b, c)] = acc;
                        }
                    }
                }
            }
            1 => {
                for a in 0..s0 {
                    for c in 0..s2 {
                        for row in 0..s1 {
                            let mut acc = C64::new(0.0, 0.0);
                            for col in 0..s1 {
                                acc += k[(row, col)] * v[idx(a, col, c)];
                            }
                            out[idx(a, row, c)] = acc;
                        }
                    }
                }
            }
            _ => {
                for a in 0..s0 {
                    for b in 0..s1 {
                        for row in 0..s2 {
                            let mut acc = C64::new(0.0, 0.0);
                            for col in 0..s2 {
                                acc += k[(row, col)] * v[idx(a, b, col)];
                            }
                            out[idx(a, b, row)] = acc;
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{linf_vec, norm_vec};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zero_mode_tables() {
        // k = 0, m = 1, g(0) = 1 → ω = 1, η = 1/√2
        let cfg = ModelConfig::d1(1.0, 0, 0, 0, 1.0, FormFactor::constant(1.0));
        let basis = build_basis(&cfg).unwrap();
        assert_eq!(basis.omega[0], 1.0);
        assert!((basis.eta[0] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_momentum_massless() {
        // |k| = 1, m = 0, g = 1 on that mode → ω = 1, η = 1/√2
        let mut cfg = ModelConfig::d1(1.0, 0, 0, 1, 0.0, FormFactor::constant(1.0));
        cfg.exclude_zero_mode = true;
        let basis = build_basis(&cfg).unwrap();
        let j = basis.field_index(&[1, 0, 0]).unwrap();
        assert!((basis.omega[j] - 1.0).abs() < 1e-15);
        assert!((basis.eta[j] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dispersion_table_matches_scalar_formulas() {
        // d = 1, L = 1, modes {-2..2}, m = 0.5: independently recompute the
        // two defining formulas per mode.
        let cfg = ModelConfig::d1(1.0, -2, 2, 2, 0.5, FormFactor::constant(0.7));
        let basis = build_basis(&cfg).unwrap();
        for (j, m) in basis.field_modes.iter().enumerate() {
            let k = m[0] as f64 / 1.0;
            let omega = (k * k + 0.25).sqrt();
            let eta = 0.7 / (2.0 * omega).sqrt();
            assert!((basis.omega[j] - omega).abs() < 1e-14);
            assert!((basis.eta[j] - eta).abs() < 1e-14);
        }
        for (n, m) in basis.particle_modes.iter().enumerate() {
            let k = m[0] as f64;
            let kin = (2.0 * std::f64::consts::PI * k).powi(2);
            assert!((basis.kinetic[n] - kin).abs() < 1e-11);
        }
    }

    #[test]
    fn eta_and_omega_are_even() {
        let cfg = ModelConfig::d1(2.0, -3, 3, 3, 0.3, FormFactor {
            profile: GProfile::Gaussian,
            amplitude: 1.1,
            cutoff: 2.0,
        });
        let basis = build_basis(&cfg).unwrap();
        for j in 0..basis.n_field_modes() {
            let jc = basis.field_conj[j];
            assert_eq!(basis.eta[j], basis.eta[jc]);
            assert_eq!(basis.omega[j], basis.omega[jc]);
            assert_eq!(basis.field_conj[jc], j);
        }
    }

    #[test]
    fn rejects_massless_with_nonzero_g_at_zero() {
        let cfg = ModelConfig::d1(1.0, -1, 1, 1, 0.0, FormFactor::constant(1.0));
        assert!(build_basis(&cfg).is_err());
        let mut ok = cfg.clone();
        ok.exclude_zero_mode = true;
        assert!(build_basis(&ok).is_ok());
    }

    #[test]
    fn rejects_empty_mode_sets() {
        let mut cfg = ModelConfig::d1(1.0, 0, 0, 0, 1.0, FormFactor::constant(1.0));
        cfg.exclude_zero_mode = true; // removes the only field mode
        assert!(build_basis(&cfg).is_err());
    }

    #[test]
    fn forward_of_constant_is_volume_at_zero() {
        let cfg = ModelConfig::d1(2.0, -2, 2, 2, 1.0, FormFactor::constant(1.0));
        let tf = Transform::particle(&cfg);
        let ones = DVector::from_element(tf.len(), c(1.0, 0.0));
        let f = tf.forward(&ones).unwrap();
        for (i, m) in tf.modes().iter().enumerate() {
            if *m == [0, 0, 0] {
                assert!((f[i] - c(2.0, 0.0)).norm() < 1e-12);
            } else {
                assert!(f[i].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_of_plane_wave_is_delta() {
        let cfg = ModelConfig::d1(1.0, -2, 2, 2, 1.0, FormFactor::constant(1.0));
        let tf = Transform::particle(&cfg);
        let k0 = 1.0; // mode n = 1 on L = 1
        let vals = DVector::from_iterator(
            tf.len(),
            tf.grid_points().iter().map(|x| {
                let ph = 2.0 * std::f64::consts::PI * k0 * x[0];
                c(ph.cos(), ph.sin())
            }),
        );
        let f = tf.forward(&vals).unwrap();
        for (i, m) in tf.modes().iter().enumerate() {
            let expect = if *m == [1, 0, 0] { c(1.0, 0.0) } else { c(0.0, 0.0) };
            assert!((f[i] - expect).norm() < 1e-12, "mode {m:?}");
        }
    }

    #[test]
    fn transform_3d_roundtrip() {
        let cfg = ModelConfig {
            dimension: 3,
            box_length: 1.5,
            particle_range: [(-1, 1), (0, 1), (-1, 0)],
            field_range: [(-1, 1), (-1, 1), (-1, 1)],
            exclude_zero_mode: false,
            mass: 1.0,
            g: FormFactor::constant(1.0),
        };
        let tf = Transform::particle(&cfg);
        let v = DVector::from_fn(tf.len(), |i, _| c((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
        let back = tf.inverse(&tf.forward(&v).unwrap()).unwrap();
        assert!(linf_vec(&(back - v)) < 1e-12);
    }

    #[test]
    fn shift_tables_match_direct_index_arithmetic() {
        let cfg = ModelConfig::d1(1.0, -2, 2, 2, 1.0, FormFactor::constant(1.0));
        let basis = build_basis(&cfg).unwrap();
        for (j, jm) in basis.field_modes.iter().enumerate() {
            for (n, nm) in basis.particle_modes.iter().enumerate() {
                let target = [nm[0] - jm[0], 0, 0];
                assert_eq!(basis.particle_shift(j, n), basis.particle_index(&target));
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip_and_parseval(seed in 0u64..1000) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cfg = ModelConfig::d1(1.7, -3, 3, 3, 1.0, FormFactor::constant(1.0));
            let tf = Transform::particle(&cfg);
            let v = DVector::from_fn(tf.len(), |_, _| {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let f = tf.forward(&v).unwrap();
            let back = tf.inverse(&f).unwrap();
            prop_assert!(linf_vec(&(back - v.clone())) < 1e-12);
            // Parseval with the volume factor: w Σ|v|² = (1/L^d) Σ|f̂|²
            let w = 1.7 / tf.len() as f64;
            let grid_norm = w * norm_vec(&v).powi(2);
            let mode_norm = norm_vec(&f).powi(2) / 1.7;
            prop_assert!((grid_norm - mode_norm).abs() < 1e-12 * grid_norm.max(1.0));
        }
    }
}
