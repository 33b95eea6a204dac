//! Quadratic (Bogoliubov) fluctuation layer.
//!
//! Works on the doubled one-body space 𝔥₂ ⊕ 𝔥₂ with
//! 𝔥₂ = C^{M_p} ⊕ C^{M_f} (particle modes first). The conjugation J is
//! entrywise coefficient conjugation in this fixed basis, so the block
//! structure `𝒱 = [[u, conj v], [v, conj u]]` is exact by representation:
//! only (u, v) are stored.
//!
//! Conventions, fixed by matching the quadratic Hamiltonian
//! `Σ A[p,q] Z*_p Z_q + ½ Σ (B[p,q] Z*_p Z*_q + conj(B[p,q]) Z_p Z_q)`
//! to the Fock-space generator (cross-checked entrywise in the tests):
//!
//! * `A = [[h, K₋ᵀ], [conj(K₋), diag ω]]`, Hermitian,
//! * `B = [[0, Kᵀ], [K, 0]]`, symmetric,
//! * generator `𝒜 = [[A, -B], [conj B, -conj A]]` with `i∂𝒱 = 𝒜𝒱`,
//! * `Γ` evolves by `i∂Γ = 𝒜*Γ - Γ𝒜`.
//!
//! Here `K` is the matrix whose row k holds the mode coefficients of the
//! projected kernel function `q(t) η_k e^{-2πik·x} φ(t, x)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, rk4_step, FlowState};
use crate::model::ModeBasis;
use crate::skg::{field_profile, h_matrix, mu_dot, ClassicalState, Trajectory};
use crate::{Real, C64};

fn cr(x: Real) -> C64 {
    C64::new(x, 0.0)
}

/// Entrywise complex conjugate.
pub fn conj_mat(m: &DMatrix<C64>) -> DMatrix<C64> {
    m.map(|z| z.conj())
}

/// Coupling kernel K(t) together with the projector and the one-body
/// pieces of the cubic term.
#[derive(Debug, Clone)]
pub struct CouplingKernel {
    /// Normalized gauged wave function φ.
    pub phi: DVector<C64>,
    /// Rows = mode coefficients of q K̃_k, shape M_f × M_p.
    pub kc: DMatrix<C64>,
    /// Rows = kc rows at -k.
    pub kc_minus: DMatrix<C64>,
    /// Projector q = 1 - |φ⟩⟨φ|.
    pub q: DMatrix<C64>,
    /// One-body operators q E_k q with E_k = η_k e^{-2πik·x}, per field mode.
    pub e_ops: Vec<DMatrix<C64>>,
    /// Scalars c_k = ⟨φ, E_k φ⟩ = η_k ρ_φ(k).
    pub ck: Vec<C64>,
}

/// Assemble the coupling kernel for a normalized φ.
pub fn build_coupling(phi: &DVector<C64>, basis: &ModeBasis) -> Result<CouplingKernel> {
    let np = basis.n_particle_modes();
    let nf = basis.n_field_modes();
    if phi.len() != np {
        return Err(Error::ShapeMismatch("phi length != particle mode count".into()));
    }
    let norm = linalg::norm_vec(phi);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvariantViolation(format!("φ not normalized: ‖φ‖ = {norm}")));
    }
    let mut q = DMatrix::identity(np, np);
    for i in 0..np {
        for j in 0..np {
            q[(i, j)] -= phi[i] * phi[j].conj();
        }
    }
    let mut kc = DMatrix::zeros(nf, np);
    let mut e_ops = Vec::with_capacity(nf);
    let mut ck = Vec::with_capacity(nf);
    let rho = basis.density_transform(phi);
    for j in 0..nf {
        let ktilde = basis.shifted(j, phi) * cr(basis.eta[j]);
        let overlap = linalg::inner_vec(phi, &ktilde);
        let kvec = &ktilde - phi * overlap;
        for n in 0..np {
            kc[(j, n)] = kvec[n];
        }
        // E_j = η_j · shift by j; as a matrix: E[n, n'] nonzero for n' = n + j.
        let mut e = DMatrix::zeros(np, np);
        for n in 0..np {
            if let Some(src) = basis.particle_shift(basis.field_conj[j], n) {
                e[(n, src)] = cr(basis.eta[j]);
            }
        }
        let eq = &q * &e * &q;
        e_ops.push(eq);
        ck.push(cr(basis.eta[j]) * rho[j]);
    }
    let mut kc_minus = DMatrix::zeros(nf, np);
    for j in 0..nf {
        let jm = basis.field_conj[j];
        for n in 0..np {
            kc_minus[(j, n)] = kc[(jm, n)];
        }
    }
    Ok(CouplingKernel { phi: phi.clone(), kc, kc_minus, q, e_ops, ck })
}

/// Dense operator on 𝔥₂ with the particle/field split recorded.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub m: DMatrix<C64>,
    pub np: usize,
}

impl BlockOperator {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn hermiticity_defect(&self) -> Real {
        linalg::hermiticity_defect(&self.m)
    }
}

/// Build A(t) = A₁ + A₂(t) and B(t) from the classical state.
/// Returns (A, B, A₂) — the time-dependent part is exposed for bound checks.
pub fn build_blocks(
    state: &ClassicalState,
    basis: &ModeBasis,
    kern: &CouplingKernel,
) -> (BlockOperator, BlockOperator, BlockOperator) {
    let np = basis.n_particle_modes();
    let nf = basis.n_field_modes();
    let d = np + nf;
    let h = h_matrix(state, basis);
    let mut a = DMatrix::zeros(d, d);
    let mut a2 = DMatrix::zeros(d, d);
    for i in 0..np {
        for j in 0..np {
            a[(i, j)] = h[(i, j)];
            a2[(i, j)] = h[(i, j)];
        }
        a2[(i, i)] -= cr(basis.kinetic[i]);
    }
    for k in 0..nf {
        a[(np + k, np + k)] = cr(basis.omega[k]);
        for n in 0..np {
            let lower = kern.kc_minus[(k, n)].conj();
            a[(np + k, n)] = lower;
            a[(n, np + k)] = kern.kc_minus[(k, n)];
            a2[(np + k, n)] = lower;
            a2[(n, np + k)] = kern.kc_minus[(k, n)];
        }
    }
    let mut b = DMatrix::zeros(d, d);
    for k in 0..nf {
        for n in 0..np {
            b[(np + k, n)] = kern.kc[(k, n)];
            b[(n, np + k)] = kern.kc[(k, n)];
        }
    }
    (
        BlockOperator { m: a, np },
        BlockOperator { m: b, np },
        BlockOperator { m: a2, np },
    )
}

/// Generator 𝒜 = [[A, -B], [conj B, -conj A]] on the doubled space.
pub fn generator_matrix(a: &BlockOperator, b: &BlockOperator) -> DMatrix<C64> {
    let d = a.dim();
    let mut g = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = a.m[(i, j)];
            g[(i, d + j)] = -b.m[(i, j)];
            g[(d + i, j)] = b.m[(i, j)].conj();
            g[(d + i, d + j)] = -a.m[(i, j)].conj();
        }
    }
    g
}

/// Bogoliubov map stored through its independent blocks (u, v); the
/// conjugate blocks are structural.
#[derive(Debug, Clone)]
pub struct BogMap {
    pub u: DMatrix<C64>,
    pub v: DMatrix<C64>,
    pub t: Real,
    pub t0: Real,
}

impl BogMap {
    pub fn identity(d: usize, t0: Real) -> Self {
        BogMap { u: DMatrix::identity(d, d), v: DMatrix::zeros(d, d), t: t0, t0 }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Assembled 2D×2D map [[u, conj v], [v, conj u]].
    pub fn full(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.u[(i, j)];
                m[(i, d + j)] = self.v[(i, j)].conj();
                m[(d + i, j)] = self.v[(i, j)];
                m[(d + i, d + j)] = self.u[(i, j)].conj();
            }
        }
        m
    }

    /// Apply the map to a doubled vector.
    pub fn transform(&self, f: &DVector<C64>) -> DVector<C64> {
        assert_eq!(f.len(), 2 * self.dim(), "doubled vector length");
        let d = self.dim();
        let top = f.rows(0, d).into_owned();
        let bot = f.rows(d, d).into_owned();
        let out_top = &self.u * &top + self.v.map(|z| z.conj()) * &bot;
        let out_bot = &self.v * &top + self.u.map(|z| z.conj()) * &bot;
        let mut out = DVector::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&out_top);
        out.rows_mut(d, d).copy_from(&out_bot);
        out
    }

    /// Shale–Stinespring diagnostic ‖v‖²_HS = Tr(v*v).
    pub fn shale_stinespring(&self) -> Real {
        self.v.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Worst defect over the defining relations `𝒱*𝒮𝒱 = 𝒮 = 𝒱𝒮𝒱*` and the
/// derived block identities
/// `u*u = 1 + v*v`, `uu* = 1 + conj(v) vᵀ`, `u*conj(v) = v*conj(u)`,
/// `u v* = conj(v) uᵀ`.
pub fn check_symplectic(map: &BogMap) -> Real {
    let d = map.dim();
    let full = map.full();
    let mut s = DMatrix::<C64>::identity(2 * d, 2 * d);
    for i in d..2 * d {
        s[(i, i)] = cr(-1.0);
    }
    let d1 = linalg::linf_mat(&(full.adjoint() * &s * &full - &s));
    let d2 = linalg::linf_mat(&(&full * &s * full.adjoint() - &s));
    let id = DMatrix::<C64>::identity(d, d);
    let u = &map.u;
    let v = &map.v;
    let vc = conj_mat(v);
    let d3 = linalg::linf_mat(&(u.adjoint() * u - v.adjoint() * v - &id));
    let d4 = linalg::linf_mat(&(u * u.adjoint() - &vc * v.transpose() - &id));
    let d5 = linalg::linf_mat(&(u.adjoint() * &vc - v.adjoint() * conj_mat(u)));
    let d6 = linalg::linf_mat(&(u * v.adjoint() - &vc * u.transpose()));
    d1.max(d2).max(d3).max(d4).max(d5).max(d6)
}

impl FlowState for BogMap {
    fn add_scaled(&mut self, c: Real, other: &Self) {
        self.u += &other.u * cr(c);
        self.v += &other.v * cr(c);
    }
    fn rescale(&mut self, c: Real) {
        self.u *= cr(c);
        self.v *= cr(c);
    }
}

/// Generalized one-particle density matrix on the doubled space.
#[derive(Debug, Clone)]
pub struct GeneralizedDensity {
    pub gamma: DMatrix<C64>,
    pub t: Real,
}

impl GeneralizedDensity {
    /// Fock-vacuum pattern: [[0, 0], [0, 1]].
    pub fn vacuum(d: usize, t: Real) -> Self {
        let mut g = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            g[(d + i, d + i)] = cr(1.0);
        }
        GeneralizedDensity { gamma: g, t }
    }

    /// Assemble from the two-point blocks γ[p,q] = ⟨Z*_q Z_p⟩ and
    /// σ[p,q] = ⟨Z_p Z_q⟩ (σ symmetric).
    pub fn from_blocks(gamma_pq: &DMatrix<C64>, sigma: &DMatrix<C64>, t: Real) -> Self {
        let d = gamma_pq.nrows();
        let mut g = DMatrix::zeros(2 * d, 2 * d);
        for p in 0..d {
            for q in 0..d {
                g[(p, q)] = gamma_pq[(p, q)];
                g[(p, d + q)] = sigma[(p, q)];
                g[(d + p, q)] = sigma[(p, q)].conj();
                g[(d + p, d + q)] = gamma_pq[(q, p)];
            }
        }
        for i in 0..d {
            g[(d + i, d + i)] += cr(1.0);
        }
        GeneralizedDensity { gamma: g, t }
    }

    pub fn half_dim(&self) -> usize {
        self.gamma.nrows() / 2
    }

    /// ⟨Z*_q Z_p⟩ for doubled-basis indices p, q < d.
    pub fn density_block(&self) -> DMatrix<C64> {
        let d = self.half_dim();
        self.gamma.view((0, 0), (d, d)).into_owned()
    }

    /// ⟨Z_p Z_q⟩ (symmetric pair block).
    pub fn pair_block(&self) -> DMatrix<C64> {
        let d = self.half_dim();
        self.gamma.view((0, d), (d, d)).into_owned()
    }

    pub fn hermiticity_defect(&self) -> Real {
        linalg::hermiticity_defect(&self.gamma)
    }

    /// Conjugation form Γ(t) = 𝒮𝒱𝒮 Γ(0) 𝒮𝒱*𝒮.
    pub fn conjugated_from(initial: &GeneralizedDensity, map: &BogMap) -> Self {
        let d = initial.half_dim();
        let mut s = DMatrix::<C64>::identity(2 * d, 2 * d);
        for i in d..2 * d {
            s[(i, i)] = cr(-1.0);
        }
        let v = map.full();
        let m = &s * &v * &s * &initial.gamma * &s * v.adjoint() * &s;
        GeneralizedDensity { gamma: m, t: map.t }
    }
}

/// Next-order one-point functions (particle and field parts).
#[derive(Debug, Clone)]
pub struct OnePointPair {
    pub beta_p: DVector<C64>,
    pub beta_f: DVector<C64>,
    pub t: Real,
}

impl OnePointPair {
    pub fn zero(np: usize, nf: usize, t: Real) -> Self {
        OnePointPair { beta_p: DVector::zeros(np), beta_f: DVector::zeros(nf), t }
    }
}

/// Precomputed per-stage data for the quadratic evolutions.
pub struct StageCoeffs {
    pub h: DMatrix<C64>,
    pub kern: CouplingKernel,
    pub a: BlockOperator,
    pub b: BlockOperator,
    pub a2: BlockOperator,
    pub generator: DMatrix<C64>,
    pub mu_dot: Real,
}

/// Build all stage data from a classical state.
pub fn stage_coeffs(state: &ClassicalState, basis: &ModeBasis) -> Result<StageCoeffs> {
    let phi = state.phi();
    let kern = build_coupling(&phi, basis)?;
    let h = h_matrix(state, basis);
    let (a, b, a2) = build_blocks(state, basis, &kern);
    let generator = generator_matrix(&a, &b);
    Ok(StageCoeffs { h, kern, a, b, a2, generator, mu_dot: mu_dot(state, basis) })
}

/// Driver for the quadratic evolutions along a classical trajectory.
/// Stage data is rebuilt from the half-step trajectory samples, so RK4
/// stages see exact classical states.
pub struct QuadEvolver<'a> {
    pub traj: &'a Trajectory,
    pub basis: &'a ModeBasis,
}

impl<'a> QuadEvolver<'a> {
    pub fn new(traj: &'a Trajectory, basis: &'a ModeBasis) -> Self {
        QuadEvolver { traj, basis }
    }

    fn stages_for_step(&self, step: usize) -> Result<[StageCoeffs; 3]> {
        Ok([
            stage_coeffs(self.traj.at_half(2 * step), self.basis)?,
            stage_coeffs(self.traj.at_half(2 * step + 1), self.basis)?,
            stage_coeffs(self.traj.at_half(2 * step + 2), self.basis)?,
        ])
    }

    /// One RK4 step of i∂𝒱 = 𝒜(t)𝒱; returns the new map and its measured
    /// symplectic defect. Defect above `hard_tol` aborts.
    pub fn step_bog_map(&self, map: &BogMap, step: usize, hard_tol: Real) -> Result<(BogMap, Real)> {
        let stages = self.stages_for_step(step)?;
        let dt = self.traj.dt;
        let d = map.dim();
        let t = map.t;
        let mut deriv = |tau: Real, m: &BogMap| -> BogMap {
            let idx = stage_index(t, tau, dt);
            let g = &stages[idx].generator;
            // i∂[u; v] = [[A, -B], [conj B, -conj A]] [u; v]
            let a = g.view((0, 0), (d, d));
            let mb = g.view((0, d), (d, d));
            let cb = g.view((d, 0), (d, d));
            let ca = g.view((d, d), (d, d));
            let mi = C64::new(0.0, -1.0);
            BogMap {
                u: (&a * &m.u + &mb * &m.v) * mi,
                v: (&cb * &m.u + &ca * &m.v) * mi,
                t: 0.0,
                t0: 0.0,
            }
        };
        let mut next = rk4_step(map, t, dt, &mut deriv);
        next.t = t + dt;
        next.t0 = map.t0;
        let defect = check_symplectic(&next);
        if defect > hard_tol {
            return Err(Error::InvariantViolation(format!(
                "symplectic defect {defect:.3e} exceeds {hard_tol:.1e} at t = {:.6}",
                next.t
            )));
        }
        Ok((next, defect))
    }

    /// One RK4 step of i∂Γ = 𝒜*Γ - Γ𝒜.
    pub fn step_gamma(&self, gamma: &GeneralizedDensity, step: usize, herm_tol: Real) -> Result<GeneralizedDensity> {
        let stages = self.stages_for_step(step)?;
        let dt = self.traj.dt;
        let t = gamma.t;
        let mut deriv = |tau: Real, g: &DMatrix<C64>| -> DMatrix<C64> {
            let idx = stage_index(t, tau, dt);
            let a = &stages[idx].generator;
            (a.adjoint() * g - g * a) * C64::new(0.0, -1.0)
        };
        let next = rk4_step(&gamma.gamma, t, dt, &mut deriv);
        let out = GeneralizedDensity { gamma: next, t: t + dt };
        let defect = out.hermiticity_defect();
        if defect > herm_tol {
            return Err(Error::InvariantViolation(format!(
                "Γ lost self-adjointness: defect {defect:.3e} at t = {:.6}",
                out.t
            )));
        }
        Ok(out)
    }

    /// One RK4 step of the coupled (Γ, β) system: Γ feeds the β sources.
    pub fn step_gamma_beta(
        &self,
        gamma: &GeneralizedDensity,
        beta: &OnePointPair,
        step: usize,
    ) -> Result<(GeneralizedDensity, OnePointPair)> {
        let stages = self.stages_for_step(step)?;
        let dt = self.traj.dt;
        let t = gamma.t;
        let np = self.basis.n_particle_modes();
        let nf = self.basis.n_field_modes();
        type S = (DMatrix<C64>, (DVector<C64>, DVector<C64>));
        let state0: S = (gamma.gamma.clone(), (beta.beta_p.clone(), beta.beta_f.clone()));
        let mut deriv = |tau: Real, s: &S| -> S {
            let idx = stage_index(t, tau, dt);
            let st = &stages[idx];
            let a = &st.generator;
            let g = &s.0;
            let dgamma = (a.adjoint() * g - g * a) * C64::new(0.0, -1.0);
            let (bp, bf) = (&s.1 .0, &s.1 .1);
            let dg = GeneralizedDensity { gamma: g.clone(), t: tau };
            let (dbp, dbf) = beta_derivative(self.basis, st, &dg, bp, bf, np, nf);
            (dgamma, (dbp, dbf))
        };
        let next = rk4_step(&state0, t, dt, &mut deriv);
        Ok((
            GeneralizedDensity { gamma: next.0, t: t + dt },
            OnePointPair { beta_p: next.1 .0, beta_f: next.1 .1, t: t + dt },
        ))
    }
}

fn stage_index(t0: Real, tau: Real, dt: Real) -> usize {
    let frac = (tau - t0) / dt;
    if frac < 0.25 {
        0
    } else if frac < 0.75 {
        1
    } else {
        2
    }
}

/// Right-hand side of the coupled one-point equations, with the two-point
/// sources read off Γ.
fn beta_derivative(
    basis: &ModeBasis,
    st: &StageCoeffs,
    gamma: &GeneralizedDensity,
    beta_p: &DVector<C64>,
    beta_f: &DVector<C64>,
    np: usize,
    nf: usize,
) -> (DVector<C64>, DVector<C64>) {
    let mi = C64::new(0.0, -1.0);
    let dens = gamma.density_block();
    let pair = gamma.pair_block();
    // m_k[n] = ⟨a*_k b_n⟩ + ⟨a_{-k} b_n⟩
    //        = dens[(b n), (a k)] + pair[(a -k), (b n)]
    let mut source_p = DVector::zeros(np);
    for k in 0..nf {
        let km = basis.field_conj[k];
        let mut mk = DVector::zeros(np);
        for n in 0..np {
            mk[n] = dens[(n, np + k)] + pair[(np + km, n)];
        }
        let op = &st.kern.e_ops[k];
        let ckid = st.kern.ck[k];
        source_p += op * &mk - &mk * ckid;
    }
    let dbp = mi
        * (&st.h * beta_p
            + st.kern.kc.transpose() * beta_f.map(|z| z.conj())
            + st.kern.kc_minus.transpose() * beta_f
            + source_p);

    // field part
    let mut dbf = DVector::zeros(nf);
    // b*b two-point block: G[n, m] = ⟨b*_n b_m⟩ = dens[(m, n)]
    for k in 0..nf {
        let op = &st.kern.e_ops[k];
        let ckid = st.kern.ck[k];
        let mut tr = C64::new(0.0, 0.0);
        for n in 0..np {
            for m in 0..np {
                let o = op[(n, m)] - if n == m { ckid } else { C64::new(0.0, 0.0) };
                tr += o * dens[(m, n)];
            }
        }
        let mut acc = cr(basis.omega[k]) * beta_f[k] + tr;
        for n in 0..np {
            acc += st.kern.kc[(k, n)] * beta_p[n].conj()
                + st.kern.kc_minus[(k, n)].conj() * beta_p[n];
        }
        dbf[k] = mi * acc;
    }
    (dbp, dbf)
}

/// Apply the Bogoliubov map to a doubled observable vector.
pub fn transform_observable(map: &BogMap, f: &DVector<C64>) -> DVector<C64> {
    map.transform(f)
}

/// Measured values for the coupling-layer operator bounds:
/// `sup|Φ| ≤ 2‖η‖‖α‖`, `|μ̇| ≤ ‖η‖‖α‖`, `‖K‖_HS ≤ 2‖η‖`.
pub struct CouplingBounds {
    pub sup_phi: Real,
    pub sup_phi_bound: Real,
    pub mu_dot_abs: Real,
    pub mu_dot_bound: Real,
    pub k_hs: Real,
    pub k_hs_bound: Real,
}

impl CouplingBounds {
    pub fn all_hold(&self) -> bool {
        self.sup_phi <= self.sup_phi_bound + 1e-12
            && self.mu_dot_abs <= self.mu_dot_bound + 1e-12
            && self.k_hs <= self.k_hs_bound + 1e-12
    }
}

/// Evaluate the printed bounds on a trajectory snapshot. The field sup-norm
/// is sampled on a uniform grid fine enough for the retained modes.
pub fn coupling_bounds(state: &ClassicalState, basis: &ModeBasis, kern: &CouplingKernel) -> CouplingBounds {
    let eta_norm = basis.eta_norm();
    let alpha_norm = linalg::norm_vec(&state.alpha);
    // dense sampling of |Φ|
    let samples = 8 * basis.n_field_modes().max(4);
    let pts: Vec<[Real; 3]> = (0..samples)
        .map(|i| [i as Real * basis.box_length / samples as Real, 0.0, 0.0])
        .collect();
    let (phi_vals, _) = crate::skg::classical_field(&state.alpha, basis, &pts);
    let sup_phi = phi_vals.iter().map(|v| v.abs()).fold(0.0, Real::max);
    let k_hs = kern.kc.iter().map(|z| z.norm_sqr()).sum::<Real>().sqrt();
    CouplingBounds {
        sup_phi,
        sup_phi_bound: 2.0 * eta_norm * alpha_norm,
        mu_dot_abs: mu_dot(state, basis).abs(),
        mu_dot_bound: eta_norm * alpha_norm,
        k_hs,
        k_hs_bound: 2.0 * eta_norm,
    }
}

/// Orthonormal basis of φ^⊥ in C^{M_p} (columns), by Gram–Schmidt of the
/// coordinate vectors against φ.
pub fn orthonormal_complement(phi: &DVector<C64>) -> DMatrix<C64> {
    let n = phi.len();
    let mut cols: Vec<DVector<C64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        if cols.len() == n - 1 {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = cr(1.0);
        let ip = linalg::inner_vec(phi, &v);
        v -= phi * ip;
        for c in &cols {
            let ip = linalg::inner_vec(c, &v);
            v -= c * ip;
        }
        let norm = linalg::norm_vec(&v);
        if norm > 1e-10 {
            cols.push(v / cr(norm));
        }
    }
    assert_eq!(cols.len(), n - 1, "complement construction failed");
    DMatrix::from_columns(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, FormFactor, ModelConfig};
    use crate::skg::Scheme;
    use rand::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn basis_and_state(g_amp: f64, seed: u64) -> (ModeBasis, ClassicalState) {
        let cfg = ModelConfig::d1(1.0, 0, 1, 1, 1.0, FormFactor::constant(g_amp));
        let basis = build_basis(&cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut u = DVector::from_fn(basis.n_particle_modes(), |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        u /= c(linalg::norm_vec(&u), 0.0);
        let alpha = DVector::from_fn(basis.n_field_modes(), |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.3
        });
        (basis, ClassicalState::new(u, alpha))
    }

    #[test]
    fn coupling_vanishes_without_form_factor() {
        let (basis, state) = basis_and_state(0.0, 1);
        let kern = build_coupling(&state.phi(), &basis).unwrap();
        assert!(kern.kc.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn projected_kernel_is_orthogonal_to_phi() {
        let (basis, state) = basis_and_state(0.8, 2);
        let phi = state.phi();
        let kern = build_coupling(&phi, &basis).unwrap();
        for k in 0..basis.n_field_modes() {
            let row: C64 = (0..basis.n_particle_modes())
                .map(|n| phi[n].conj() * kern.kc[(k, n)])
                .sum();
            assert!(row.norm() < 1e-12, "φ-row of K at mode {k}: {row}");
        }
    }

    #[test]
    fn kernel_matches_double_loop_oracle() {
        let (basis, state) = basis_and_state(0.8, 3);
        let phi = state.phi();
        let kern = build_coupling(&phi, &basis).unwrap();
        let np = basis.n_particle_modes();
        for k in 0..basis.n_field_modes() {
            // brute force: K̃_k = η_k shift, then subtract φ⟨φ, K̃_k⟩
            let mut ktilde = DVector::zeros(np);
            for n in 0..np {
                if let Some(src) = basis.particle_shift(basis.field_conj[k], n) {
                    ktilde[n] = c(basis.eta[k], 0.0) * phi[src];
                }
            }
            let ip: C64 = (0..np).map(|n| phi[n].conj() * ktilde[n]).sum();
            for n in 0..np {
                let expect = ktilde[n] - phi[n] * ip;
                assert!((kern.kc[(k, n)] - expect).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_coupling_blocks_are_free() {
        let (basis, mut state) = basis_and_state(0.0, 4);
        state.alpha *= c(0.0, 0.0);
        let kern = build_coupling(&state.phi(), &basis).unwrap();
        let (a, b, _) = build_blocks(&state, &basis, &kern);
        assert!(b.m.iter().all(|z| z.norm() < 1e-15));
        // A = diag(-Δ, ω)
        for i in 0..a.dim() {
            for j in 0..a.dim() {
                if i != j {
                    assert!(a.m[(i, j)].norm() < 1e-15);
                }
            }
        }
        let np = basis.n_particle_modes();
        for n in 0..np {
            assert!((a.m[(n, n)] - c(basis.kinetic[n], 0.0)).norm() < 1e-15);
        }
        for k in 0..basis.n_field_modes() {
            assert!((a.m[(np + k, np + k)] - c(basis.omega[k], 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn a_block_is_self_adjoint() {
        let (basis, state) = basis_and_state(1.0, 5);
        let kern = build_coupling(&state.phi(), &basis).unwrap();
        let (a, b, a2) = build_blocks(&state, &basis, &kern);
        assert!(a.hermiticity_defect() < 1e-10);
        assert!(a2.hermiticity_defect() < 1e-10);
        // B symmetric with zero diagonal blocks
        assert!(linalg::linf_mat(&(b.m.transpose() - &b.m)) < 1e-14);
        let np = basis.n_particle_modes();
        for i in 0..np {
            for j in 0..np {
                assert!(b.m[(i, j)].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn printed_operator_bounds_hold() {
        let (basis, state) = basis_and_state(1.0, 6);
        let kern = build_coupling(&state.phi(), &basis).unwrap();
        let bounds = coupling_bounds(&state, &basis, &kern);
        assert!(bounds.all_hold(), "sup|Φ| = {} vs {}, |μ̇| = {} vs {}, ‖K‖ = {} vs {}",
            bounds.sup_phi, bounds.sup_phi_bound, bounds.mu_dot_abs, bounds.mu_dot_bound,
            bounds.k_hs, bounds.k_hs_bound);
    }

    #[test]
    fn symplectic_examples() {
        // identity → 0
        let id = BogMap::identity(3, 0.0);
        assert!(check_symplectic(&id) < 1e-15);
        assert!(id.shale_stinespring() < 1e-15);
        // single-mode squeeze → 0, ‖v‖² = sinh²s
        let s = 0.7f64;
        let mut sq = BogMap::identity(1, 0.0);
        sq.u[(0, 0)] = c(s.cosh(), 0.0);
        sq.v[(0, 0)] = c(s.sinh(), 0.0);
        assert!(check_symplectic(&sq) < 1e-14);
        assert!((sq.shale_stinespring() - s.sinh().powi(2)).abs() < 1e-14);
        // u = v = 1 fails with defect 1
        let mut bad = BogMap::identity(1, 0.0);
        bad.v[(0, 0)] = c(1.0, 0.0);
        assert!((check_symplectic(&bad) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_generator_matches_matrix_exponential() {
        // freeze the classical state: generator constant, 𝒱(t) = exp(-i𝒜t).
        let (basis, state) = basis_and_state(0.9, 8);
        let frozen: Vec<ClassicalState> = (0..41)
            .map(|i| {
                let mut s = state.clone();
                s.t = i as f64 * 0.005;
                s
            })
            .collect();
        let traj = Trajectory { dt: 0.01, half_states: frozen };
        let ev = QuadEvolver::new(&traj, &basis);
        let d = basis.n_particle_modes() + basis.n_field_modes();
        let mut map = BogMap::identity(d, 0.0);
        for step in 0..traj.n_steps() {
            let (m, _) = ev.step_bog_map(&map, step, 1e-3).unwrap();
            map = m;
        }
        let st = stage_coeffs(&state, &basis).unwrap();
        let expect = (&st.generator * c(0.0, -0.2)).exp();
        let diff = linalg::linf_mat(&(map.full() - expect));
        assert!(diff < 1e-8, "diff {diff}");
        // B = 0 sub-case: u = exp(-iAt), v = 0
        let (basis0, mut state0) = basis_and_state(0.0, 9);
        state0.alpha *= c(0.3, 0.1); // field still on, but no coupling
        let frozen0: Vec<ClassicalState> = (0..41)
            .map(|i| {
                let mut s = state0.clone();
                s.t = i as f64 * 0.005;
                s
            })
            .collect();
        let traj0 = Trajectory { dt: 0.01, half_states: frozen0 };
        let ev0 = QuadEvolver::new(&traj0, &basis0);
        let d0 = basis0.n_particle_modes() + basis0.n_field_modes();
        let mut map0 = BogMap::identity(d0, 0.0);
        for step in 0..traj0.n_steps() {
            map0 = ev0.step_bog_map(&map0, step, 1e-6).unwrap().0;
        }
        assert!(map0.v.iter().all(|z| z.norm() < 1e-10));
        let st0 = stage_coeffs(&state0, &basis0).unwrap();
        let expect_u = (&st0.a.m * c(0.0, -0.2)).exp();
        assert!(linalg::linf_mat(&(map0.u.clone() - expect_u)) < 1e-8);
    }

    #[test]
    fn evolved_map_stays_symplectic_at_integrator_order() {
        let (basis, state) = basis_and_state(1.0, 10);
        let defect_at = |dt: f64| -> f64 {
            let steps = (0.2 / dt).round() as usize;
            let traj =
                Trajectory::integrate(&state, &basis, dt, steps, 2, Scheme::Rk4, 1e-6).unwrap();
            let ev = QuadEvolver::new(&traj, &basis);
            let d = basis.n_particle_modes() + basis.n_field_modes();
            let mut map = BogMap::identity(d, 0.0);
            let mut worst: f64 = 0.0;
            for step in 0..traj.n_steps() {
                let (m, defect) = ev.step_bog_map(&map, step, 1e-2).unwrap();
                map = m;
                worst = worst.max(defect);
            }
            worst
        };
        let d1 = defect_at(0.01);
        let d2 = defect_at(0.005);
        // fourth-order stepper: halving dt should cut the defect by ~16;
        // allow slack for accumulation effects.
        assert!(d2 < d1 / 8.0, "defects {d1:.3e} vs {d2:.3e}");
    }

    #[test]
    fn shale_stinespring_matches_singular_values() {
        let (basis, state) = basis_and_state(1.0, 11);
        let traj = Trajectory::integrate(&state, &basis, 0.01, 30, 2, Scheme::Rk4, 1e-6).unwrap();
        let ev = QuadEvolver::new(&traj, &basis);
        let d = basis.n_particle_modes() + basis.n_field_modes();
        let mut map = BogMap::identity(d, 0.0);
        for step in 0..traj.n_steps() {
            map = ev.step_bog_map(&map, step, 1e-3).unwrap().0;
        }
        let direct = map.shale_stinespring();
        let sv = map.v.clone().svd(false, false).singular_values;
        let from_svd: f64 = sv.iter().map(|s| s * s).sum();
        assert!((direct - from_svd).abs() < 1e-10);
        assert!(direct > 1e-6, "expect nontrivial pair production");
    }

    #[test]
    fn gamma_vacuum_is_stationary_without_generator() {
        // 𝒜 = 0 (g = 0, α = 0, u in the zero mode so h = 0): Γ stays put.
        let cfg = ModelConfig::d1(1.0, 0, 0, 1, 1.0, FormFactor::constant(0.0));
        let basis = build_basis(&cfg).unwrap();
        let mut u = DVector::zeros(1);
        u[0] = c(1.0, 0.0);
        let state = ClassicalState::new(u, DVector::zeros(basis.n_field_modes()));
        let traj = Trajectory::integrate(&state, &basis, 0.01, 10, 1, Scheme::Rk4, 1e-6).unwrap();
        let ev = QuadEvolver::new(&traj, &basis);
        let d = 1 + basis.n_field_modes();
        let mut gamma = GeneralizedDensity::vacuum(d, 0.0);
        let g0 = gamma.gamma.clone();
        for step in 0..traj.n_steps() {
            gamma = ev.step_gamma(&gamma, step, 1e-10).unwrap();
        }
        // only the field phases act on the BB block diagonal, which is
        // invariant; everything stays in place.
        assert!(linalg::linf_mat(&(gamma.gamma - g0)) < 1e-12);
    }

    #[test]
    fn gamma_matches_conjugation_identity() {
        let (basis, state) = basis_and_state(1.0, 12);
        let traj = Trajectory::integrate(&state, &basis, 0.002, 250, 2, Scheme::Rk4, 1e-6).unwrap();
        let ev = QuadEvolver::new(&traj, &basis);
        let d = basis.n_particle_modes() + basis.n_field_modes();
        let mut map = BogMap::identity(d, 0.0);
        // start from a mildly squeezed Γ to keep the test nontrivial
        let mut sigma = DMatrix::zeros(d, d);
        sigma[(0, d - 1)] = c(0.1, 0.05);
        sigma[(d - 1, 0)] = c(0.1, 0.05);
        let gamma_mat = DMatrix::from_fn(d, d, |i, j| if i == j { c(0.04 * i as f64, 0.0) } else { c(0.0, 0.0) });
        let mut gamma = GeneralizedDensity::from_blocks(&gamma_mat, &sigma, 0.0);
        let gamma0 = gamma.clone();
        assert!(gamma.hermiticity_defect() < 1e-14);
        for step in 0..traj.n_steps() {
            map = ev.step_bog_map(&map, step, 1e-4).unwrap().0;
            gamma = ev.step_gamma(&gamma, step, 1e-8).unwrap();
        }
        let conj_form = GeneralizedDensity::conjugated_from(&gamma0, &map);
        let diff = linalg::linf_mat(&(conj_form.gamma - gamma.gamma.clone()));
        assert!(diff < 1e-6, "conjugation identity defect {diff:.3e}");
    }

    #[test]
    fn beta_free_flow_rotates_phases() {
        // g = 0: β^field_k(t) = e^{-iω_k t} β^field_k(0), β^part free.
        let cfg = ModelConfig::d1(1.0, 0, 1, 1, 1.0, FormFactor::constant(0.0));
        let basis = build_basis(&cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mut u = DVector::from_fn(2, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        u /= c(linalg::norm_vec(&u), 0.0);
        let state = ClassicalState::new(u, DVector::zeros(basis.n_field_modes()));
        let traj = Trajectory::integrate(&state, &basis, 0.001, 200, 2, Scheme::Rk4, 1e-6).unwrap();
        let ev = QuadEvolver::new(&traj, &basis);
        let d = basis.n_particle_modes() + basis.n_field_modes();
        let mut gamma = GeneralizedDensity::vacuum(d, 0.0);
        let beta0 = OnePointPair {
            beta_p: DVector::zeros(2),
            beta_f: DVector::from_fn(basis.n_field_modes(), |k, _| c(0.3 + 0.1 * k as f64, -0.2)),
            t: 0.0,
        };
        let mut beta = beta0.clone();
        for step in 0..traj.n_steps() {
            let (g, b) = ev.step_gamma_beta(&gamma, &beta, step).unwrap();
            gamma = g;
            beta = b;
        }
        let t = 0.2;
        for k in 0..basis.n_field_modes() {
            let expect = beta0.beta_f[k] * c(0.0, -basis.omega[k] * t).exp();
            assert!((beta.beta_f[k] - expect).norm() < 1e-9);
        }
        assert!(linalg::norm_vec(&beta.beta_p) < 1e-12);
    }

    #[test]
    fn zero_beta_with_zero_sources_stays_zero() {
        let (basis, state) = basis_and_state(1.0, 14);
        let traj = Trajectory::integrate(&state, &basis, 0.01, 20, 2, Scheme::Rk4, 1e-6).unwrap();
        let ev = QuadEvolver::new(&traj, &basis);
        let d = basis.n_particle_modes() + basis.n_field_modes();
        // vacuum Γ has no mixed ⟨a b⟩ or ⟨b*b⟩ content… but the evolution
        // builds them up; zero sources means zero Γ entirely, which is not a
        // physical Γ. Use the literal check: β = 0 and Γ ≡ 0 ⇒ β stays 0.
        let gamma = GeneralizedDensity { gamma: DMatrix::zeros(2 * d, 2 * d), t: 0.0 };
        let mut beta = OnePointPair::zero(basis.n_particle_modes(), basis.n_field_modes(), 0.0);
        let mut gamma_state = gamma;
        for step in 0..traj.n_steps() {
            let (g, b) = ev.step_gamma_beta(&gamma_state, &beta, step).unwrap();
            gamma_state = g;
            beta = b;
        }
        assert!(linalg::norm_vec(&beta.beta_p) < 1e-12);
        assert!(linalg::norm_vec(&beta.beta_f) < 1e-12);
    }

    #[test]
    fn transform_observable_identity_and_squeeze() {
        let id = BogMap::identity(2, 0.0);
        let f = DVector::from_vec(vec![c(1.0, 2.0), c(0.0, -1.0), c(0.5, 0.0), c(0.2, 0.2)]);
        assert!(linalg::linf_vec(&(transform_observable(&id, &f) - f.clone())) < 1e-15);
        let s = 0.4f64;
        let mut sq = BogMap::identity(1, 0.0);
        sq.u[(0, 0)] = c(s.cosh(), 0.0);
        sq.v[(0, 0)] = c(s.sinh(), 0.0);
        let e = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let out = transform_observable(&sq, &e);
        assert!((out[0] - c(s.cosh(), 0.0)).norm() < 1e-15);
        assert!((out[1] - c(s.sinh(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn orthonormal_complement_spans_phi_perp() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let mut phi = DVector::from_fn(4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        phi /= c(linalg::norm_vec(&phi), 0.0);
        let frame = orthonormal_complement(&phi);
        assert_eq!(frame.ncols(), 3);
        for j in 0..3 {
            let col = frame.column(j).into_owned();
            assert!(linalg::inner_vec(&phi, &col).norm() < 1e-12);
            for j2 in 0..3 {
                let col2 = frame.column(j2).into_owned();
                let ip = linalg::inner_vec(&col, &col2);
                let expect = if j == j2 { 1.0 } else { 0.0 };
                assert!((ip - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }
}
