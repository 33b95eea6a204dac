//! Mean-field Schrödinger–Klein–Gordon system.
//!
//! Evolves the condensate wave function `u` (unit ℓ² norm in mode
//! coefficients), the coherent field amplitude `α`, and the accumulated
//! gauge phase `μ(t) = ∫₀ᵗ ½∫Φ|u|² dx ds`. The gauged wave function
//! `φ = e^{iμ} u` then solves `i∂φ = h(t)φ` with
//! `h(t) = -Δ + Φ(t,·) - μ̇(t)`, where the scalar shift is the
//! instantaneous value of `½∫Φ|u|²`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{rk4_step, FlowState};
use crate::model::ModeBasis;
use crate::{Real, C64};

/// Classical degrees of freedom at a fixed time.
#[derive(Debug, Clone)]
pub struct ClassicalState {
    /// Condensate wave function, plane-wave coefficients, ‖u‖ = 1.
    pub u: DVector<C64>,
    /// Coherent field amplitude per field mode.
    pub alpha: DVector<C64>,
    /// Accumulated phase ∫₀ᵗ μ̇ ds.
    pub mu: Real,
    pub t: Real,
}

impl ClassicalState {
    pub fn new(u: DVector<C64>, alpha: DVector<C64>) -> Self {
        ClassicalState { u, alpha, mu: 0.0, t: 0.0 }
    }

    /// Gauged wave function φ = e^{iμ} u.
    pub fn phi(&self) -> DVector<C64> {
        let phase = C64::new(0.0, self.mu).exp();
        &self.u * phase
    }
}

/// Integration scheme for the classical flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Classical RK4 on the joint (u, α, μ) system.
    Rk4,
    /// Strang splitting: exact free flight around an exact interaction step;
    /// preserves ‖u‖ to rounding.
    Strang,
}

/// Mode-space profile of the classical field:
/// `Φ(x) = Σ_j v_j e^{-2πik_j·x}` with `v_j = η_j (conj(α_j) + α_{-j})`.
pub fn field_profile(alpha: &DVector<C64>, basis: &ModeBasis) -> DVector<C64> {
    let nf = basis.n_field_modes();
    assert_eq!(alpha.len(), nf, "alpha length");
    DVector::from_fn(nf, |j, _| {
        C64::new(basis.eta[j], 0.0) * (alpha[j].conj() + alpha[basis.field_conj[j]])
    })
}

/// Φ(t, x) sampled at the given points, with the measured deviation of the
/// imaginary part from zero (guaranteed small by η real and even).
pub fn classical_field(
    alpha: &DVector<C64>,
    basis: &ModeBasis,
    points: &[[Real; 3]],
) -> (Vec<Real>, Real) {
    let v = field_profile(alpha, basis);
    let l = basis.box_length;
    let mut out = Vec::with_capacity(points.len());
    let mut imag: Real = 0.0;
    for x in points {
        let mut acc = C64::new(0.0, 0.0);
        for (j, m) in basis.field_modes.iter().enumerate() {
            let kx = (m[0] as Real * x[0] + m[1] as Real * x[1] + m[2] as Real * x[2]) / l;
            let ph = -2.0 * std::f64::consts::PI * kx;
            acc += v[j] * C64::new(ph.cos(), ph.sin());
        }
        imag = imag.max(acc.im.abs());
        out.push(acc.re);
    }
    (out, imag)
}

/// Instantaneous phase velocity μ̇ = ½∫Φ|u|²dx.
pub fn mu_dot(state: &ClassicalState, basis: &ModeBasis) -> Real {
    let rho = basis.density_transform(&state.u);
    (0..basis.n_field_modes())
        .map(|j| (basis.eta[j] * state.alpha[j].conj() * rho[j]).re)
        .sum()
}

/// One-body matrix of h(t) = -Δ + Φ - μ̇ on the particle modes.
pub fn h_matrix(state: &ClassicalState, basis: &ModeBasis) -> DMatrix<C64> {
    let v = field_profile(&state.alpha, basis);
    let mut h = basis.convolution_matrix(&v);
    let shift = mu_dot(state, basis);
    for n in 0..basis.n_particle_modes() {
        h[(n, n)] += C64::new(basis.kinetic[n] - shift, 0.0);
    }
    h
}

/// Conserved energy E = ⟨u, -Δu⟩ + ⟨α, ωα⟩ + 2 Re ⟨α, η·ρ_u⟩.
pub fn skg_energy(state: &ClassicalState, basis: &ModeBasis) -> Real {
    let kinetic: Real = (0..basis.n_particle_modes())
        .map(|n| basis.kinetic[n] * state.u[n].norm_sqr())
        .sum();
    let field: Real = (0..basis.n_field_modes())
        .map(|j| basis.omega[j] * state.alpha[j].norm_sqr())
        .sum();
    let rho = basis.density_transform(&state.u);
    let coupling: Real = (0..basis.n_field_modes())
        .map(|j| 2.0 * (state.alpha[j].conj() * rho[j] * basis.eta[j]).re)
        .sum();
    kinetic + field + coupling
}

#[derive(Clone)]
struct Packed {
    u: DVector<C64>,
    alpha: DVector<C64>,
    mu: Real,
}

impl FlowState for Packed {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        FlowState::add_scaled(&mut self.u, c, &other.u);
        FlowState::add_scaled(&mut self.alpha, c, &other.alpha);
        self.mu += c * other.mu;
    }
    fn rescale(&mut self, c: Real) {
        FlowState::rescale(&mut self.u, c);
        FlowState::rescale(&mut self.alpha, c);
        self.mu *= c;
    }
}

fn derivative(basis: &ModeBasis, y: &Packed) -> Packed {
    let np = basis.n_particle_modes();
    let nf = basis.n_field_modes();
    let v = field_profile(&y.alpha, basis);
    let rho = basis.density_transform(&y.u);
    let mut du = DVector::zeros(np);
    for n in 0..np {
        du[n] = C64::new(basis.kinetic[n], 0.0) * y.u[n];
    }
    // truncated convolution (Φ u)
    for (j, _) in basis.field_modes.iter().enumerate() {
        for n in 0..np {
            if let Some(src) = basis.particle_shift(basis.field_conj[j], n) {
                du[n] += v[j] * y.u[src];
            }
        }
    }
    let minus_i = C64::new(0.0, -1.0);
    let du = du * minus_i;
    let mut dalpha = DVector::zeros(nf);
    for j in 0..nf {
        dalpha[j] =
            minus_i * (C64::new(basis.omega[j], 0.0) * y.alpha[j] + C64::new(basis.eta[j], 0.0) * rho[j]);
    }
    let dmu = (0..nf).map(|j| (basis.eta[j] * y.alpha[j].conj() * rho[j]).re).sum();
    Packed { u: du, alpha: dalpha, mu: dmu }
}

fn strang_step(basis: &ModeBasis, y: &Packed, dt: Real) -> Packed {
    let free = |p: &mut Packed, h: Real| {
        for n in 0..basis.n_particle_modes() {
            p.u[n] *= C64::new(0.0, -basis.kinetic[n] * h).exp();
        }
        for j in 0..basis.n_field_modes() {
            p.alpha[j] *= C64::new(0.0, -basis.omega[j] * h).exp();
        }
    };
    let mu_rate = |p: &Packed| -> Real {
        let rho = basis.density_transform(&p.u);
        (0..basis.n_field_modes())
            .map(|j| (basis.eta[j] * p.alpha[j].conj() * rho[j]).re)
            .sum()
    };
    let mu0 = mu_rate(y);
    let mut out = y.clone();
    free(&mut out, dt / 2.0);
    // interaction flight: Φ and ρ_u are invariants of this sub-flow
    let v = field_profile(&out.alpha, basis);
    let rho = basis.density_transform(&out.u);
    let conv = basis.convolution_matrix(&v);
    let prop = (conv * C64::new(0.0, -dt)).exp();
    out.u = &prop * &out.u;
    for j in 0..basis.n_field_modes() {
        out.alpha[j] -= C64::new(0.0, dt) * C64::new(basis.eta[j], 0.0) * rho[j];
    }
    free(&mut out, dt / 2.0);
    // trapezoid for the accumulated phase, same order as the splitting
    let mu1 = mu_rate(&out);
    out.mu += dt / 2.0 * (mu0 + mu1);
    out
}

/// Advance the classical state by one step of the chosen scheme.
///
/// Aborts with a diagnostic when the wave-function norm drifts further than
/// `norm_tol` from one.
pub fn skg_step(
    state: &ClassicalState,
    basis: &ModeBasis,
    dt: Real,
    scheme: Scheme,
    norm_tol: Real,
) -> Result<ClassicalState> {
    let y = Packed { u: state.u.clone(), alpha: state.alpha.clone(), mu: state.mu };
    let next = match scheme {
        Scheme::Rk4 => rk4_step(&y, state.t, dt, &mut |_t, s| derivative(basis, s)),
        Scheme::Strang => strang_step(basis, &y, dt),
    };
    let norm = crate::linalg::norm_vec(&next.u);
    if (norm - 1.0).abs() > norm_tol {
        return Err(Error::InvariantViolation(format!(
            "SKG norm drift: ‖u‖ = {norm:.12} at t = {:.6} (tolerance {norm_tol:.2e})",
            state.t + dt
        )));
    }
    Ok(ClassicalState { u: next.u, alpha: next.alpha, mu: next.mu, t: state.t + dt })
}

/// Classical trajectory sampled on the half-step grid `t_0 + i·dt/2`, so
/// that RK4 stages of the fluctuation layers can read exact stage states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: Real,
    /// States at times t0 + i·dt/2 for i = 0..=2·n_steps.
    pub half_states: Vec<ClassicalState>,
}

impl Trajectory {
    /// Integrate from `state0` over `n_steps` macro steps of size `dt`.
    /// Each half step is refined into `substeps` integrator steps.
    pub fn integrate(
        state0: &ClassicalState,
        basis: &ModeBasis,
        dt: Real,
        n_steps: usize,
        substeps: usize,
        scheme: Scheme,
        norm_tol: Real,
    ) -> Result<Self> {
        assert!(substeps >= 1);
        let mut half_states = Vec::with_capacity(2 * n_steps + 1);
        let mut current = state0.clone();
        half_states.push(current.clone());
        let h = dt / 2.0 / substeps as Real;
        for _ in 0..2 * n_steps {
            for _ in 0..substeps {
                current = skg_step(&current, basis, h, scheme, norm_tol)?;
            }
            half_states.push(current.clone());
        }
        Ok(Trajectory { dt, half_states })
    }

    pub fn n_steps(&self) -> usize {
        (self.half_states.len() - 1) / 2
    }

    /// State at `t0 + i·dt/2`.
    pub fn at_half(&self, i: usize) -> &ClassicalState {
        &self.half_states[i]
    }

    pub fn initial(&self) -> &ClassicalState {
        &self.half_states[0]
    }

    pub fn last(&self) -> &ClassicalState {
        self.half_states.last().unwrap()
    }
}

/// Write a trajectory as CSV: t, ‖u‖, E, μ, and Re/Im of selected α modes.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    traj: &Trajectory,
    basis: &ModeBasis,
    alpha_modes: &[usize],
) -> std::io::Result<()> {
    write!(out, "t,norm_u,energy,mu")?;
    for j in alpha_modes {
        write!(out, ",re_alpha_{j},im_alpha_{j}")?;
    }
    writeln!(out)?;
    for s in traj.half_states.iter().step_by(2) {
        write!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e}",
            s.t,
            crate::linalg::norm_vec(&s.u),
            skg_energy(s, basis),
            s.mu
        )?;
        for &j in alpha_modes {
            write!(out, ",{:.12e},{:.12e}", s.alpha[j].re, s.alpha[j].im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
