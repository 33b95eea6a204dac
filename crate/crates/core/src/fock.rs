//! Occupation-number bases and ladder-operator machinery shared by the
//! correction hierarchy and the exact many-body oracle.
//!
//! A [`SectorBasis`] enumerates occupation multi-indices over a set of
//! modes, either with a fixed total (particle sector of the many-body
//! space) or with a cap on the total (truncated Fock spaces). A
//! [`ProductBasis`] is the tensor product of a "b" (particle-excitation)
//! factor and an "a" (field) factor with joint index `b_idx * a_len + a_idx`.
//!
//! Operators are precomputed as [`MoveTable`]s: flat lists of
//! `(row, col, amplitude)` transitions with real ladder amplitudes; complex
//! coefficients and occupation-diagonal factors are supplied at application
//! time. One table therefore serves an operator, its Hermitian conjugate,
//! and every diagonal-modified variant that appears in the expanded
//! Hamiltonians.

use std::collections::HashMap;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::{Real, C64};

/// Occupation basis over `n_modes` bosonic modes.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub n_modes: usize,
    pub states: Vec<Box<[u8]>>,
    pub totals: Vec<u32>,
    index: HashMap<Box<[u8]>, u32>,
}

fn enumerate_rec(
    n_modes: usize,
    remaining_max: u32,
    exact: Option<u32>,
    current: &mut Vec<u8>,
    out: &mut Vec<Box<[u8]>>,
) {
    if current.len() == n_modes {
        if exact.map_or(true, |e| e == 0) {
            out.push(current.clone().into_boxed_slice());
        }
        return;
    }
    let last = current.len() == n_modes - 1;
    let budget = exact.unwrap_or(remaining_max);
    for occ in 0..=budget.min(remaining_max) {
        if last {
            if let Some(e) = exact {
                if occ != e {
                    continue;
                }
            }
        }
        current.push(occ as u8);
        enumerate_rec(
            n_modes,
            remaining_max - occ,
            exact.map(|e| e - occ),
            current,
            out,
        );
        current.pop();
    }
}

impl SectorBasis {
    fn from_states(n_modes: usize, states: Vec<Box<[u8]>>) -> Self {
        let totals = states.iter().map(|s| s.iter().map(|&o| o as u32).sum()).collect();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        SectorBasis { n_modes, states, totals, index }
    }

    /// All occupations with total exactly `total`.
    pub fn fixed_total(n_modes: usize, total: u32) -> Self {
        assert!(total <= u8::MAX as u32, "occupation exceeds u8");
        let mut out = Vec::new();
        enumerate_rec(n_modes, total, Some(total), &mut Vec::new(), &mut out);
        Self::from_states(n_modes, out)
    }

    /// All occupations with total at most `cap`.
    pub fn capped(n_modes: usize, cap: u32) -> Self {
        assert!(cap <= u8::MAX as u32, "occupation exceeds u8");
        let mut out = Vec::new();
        enumerate_rec(n_modes, cap, None, &mut Vec::new(), &mut out);
        Self::from_states(n_modes, out)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn lookup(&self, occ: &[u8]) -> Option<u32> {
        self.index.get(occ).copied()
    }

    /// Index of the empty occupation, when present.
    pub fn vacuum(&self) -> Option<u32> {
        self.lookup(&vec![0u8; self.n_modes])
    }

    /// Transitions of `a*_mode a_mode'`-type single hops within this basis
    /// (total preserved for `to != from` only when both moves stay inside).
    pub fn hop(&self, to: usize, from: usize) -> Vec<(u32, u32, Real)> {
        let mut moves = Vec::new();
        for (i, occ) in self.states.iter().enumerate() {
            if occ[from] == 0 {
                continue;
            }
            if to == from {
                moves.push((i as u32, i as u32, occ[from] as Real));
                continue;
            }
            let mut tgt = occ.clone();
            tgt[from] -= 1;
            tgt[to] += 1;
            if let Some(j) = self.lookup(&tgt) {
                let amp = (occ[from] as Real).sqrt() * (occ[to] as Real + 1.0).sqrt();
                moves.push((j, i as u32, amp));
            }
        }
        moves
    }

    /// Transitions of the creator on `mode` within this basis (empty for a
    /// fixed-total basis).
    pub fn create(&self, mode: usize) -> Vec<(u32, u32, Real)> {
        let mut moves = Vec::new();
        for (i, occ) in self.states.iter().enumerate() {
            let mut tgt = occ.clone();
            if tgt[mode] == u8::MAX {
                continue;
            }
            tgt[mode] += 1;
            if let Some(j) = self.lookup(&tgt) {
                moves.push((j, i as u32, (occ[mode] as Real + 1.0).sqrt()));
            }
        }
        moves
    }

    /// Transitions of the annihilator on `mode` within this basis.
    pub fn annihilate(&self, mode: usize) -> Vec<(u32, u32, Real)> {
        let mut moves = Vec::new();
        for (i, occ) in self.states.iter().enumerate() {
            if occ[mode] == 0 {
                continue;
            }
            let mut tgt = occ.clone();
            tgt[mode] -= 1;
            if let Some(j) = self.lookup(&tgt) {
                moves.push((j, i as u32, (occ[mode] as Real).sqrt()));
            }
        }
        moves
    }
}

/// Ladder matrix of the annihilator smeared with `f` between two sector
/// bases (`from` has one quantum more than `to` in every retained state):
/// `b(f) = Σ_n conj(f_n) b_n`.
pub fn annihilator_matrix(
    from: &SectorBasis,
    to: &SectorBasis,
    f: &[C64],
) -> nalgebra::DMatrix<C64> {
    let mut m = nalgebra::DMatrix::zeros(to.len(), from.len());
    for (i, occ) in from.states.iter().enumerate() {
        for n in 0..from.n_modes {
            if occ[n] == 0 {
                continue;
            }
            let mut tgt = occ.clone();
            tgt[n] -= 1;
            if let Some(j) = to.lookup(&tgt) {
                m[(j as usize, i)] += f[n].conj() * (occ[n] as Real).sqrt();
            }
        }
    }
    m
}

/// Ladder matrix of the creator smeared with `f`: `b*(f) = Σ_n f_n b*_n`.
pub fn creator_matrix(from: &SectorBasis, to: &SectorBasis, f: &[C64]) -> nalgebra::DMatrix<C64> {
    let mut m = nalgebra::DMatrix::zeros(to.len(), from.len());
    for (i, occ) in from.states.iter().enumerate() {
        for n in 0..from.n_modes {
            let mut tgt = occ.clone();
            if tgt[n] == u8::MAX {
                continue;
            }
            tgt[n] += 1;
            if let Some(j) = to.lookup(&tgt) {
                m[(j as usize, i)] += f[n] * (occ[n] as Real + 1.0).sqrt();
            }
        }
    }
    m
}

/// A factor-level operator passed to [`ProductBasis::combine`].
pub enum FactorOp<'a> {
    Identity,
    Moves(&'a [(u32, u32, Real)]),
}

/// Flat transition list on a product basis.
#[derive(Debug, Clone, Default)]
pub struct MoveTable {
    pub entries: Vec<(u32, u32, Real)>,
}

impl MoveTable {
    /// y += c · T x
    pub fn apply(&self, c: C64, x: &[C64], y: &mut [C64]) {
        for &(r, col, a) in &self.entries {
            y[r as usize] += c * a * x[col as usize];
        }
    }

    /// y += conj(c) · T† x  (adjoint of the same scaled operator)
    pub fn apply_adjoint(&self, c: C64, x: &[C64], y: &mut [C64]) {
        let cc = c.conj();
        for &(r, col, a) in &self.entries {
            y[col as usize] += cc * a * x[r as usize];
        }
    }

    /// y += c · T D x with D diagonal in the occupation basis (values by
    /// column index).
    pub fn apply_with_diag(&self, c: C64, d: &[Real], x: &[C64], y: &mut [C64]) {
        for &(r, col, a) in &self.entries {
            y[r as usize] += c * a * d[col as usize] * x[col as usize];
        }
    }

    /// y += conj(c) · D T† x — adjoint of `c · T D`.
    pub fn apply_adjoint_with_diag(&self, c: C64, d: &[Real], x: &[C64], y: &mut [C64]) {
        let cc = c.conj();
        for &(r, col, a) in &self.entries {
            y[col as usize] += cc * a * d[col as usize] * x[r as usize];
        }
    }

    /// Accumulate `c · T D` into a triplet matrix (D may be `None`).
    pub fn add_to(&self, tri: &mut TriMat<C64>, c: C64, d: Option<&[Real]>) {
        for &(r, col, a) in &self.entries {
            let w = d.map_or(1.0, |dd| dd[col as usize]);
            tri.add_triplet(r as usize, col as usize, c * a * w);
        }
    }

    /// Accumulate the adjoint of `c · T D`.
    pub fn add_adjoint_to(&self, tri: &mut TriMat<C64>, c: C64, d: Option<&[Real]>) {
        let cc = c.conj();
        for &(r, col, a) in &self.entries {
            let w = d.map_or(1.0, |dd| dd[col as usize]);
            tri.add_triplet(col as usize, r as usize, cc * a * w);
        }
    }
}

/// Tensor product of a particle-excitation factor and a field factor.
#[derive(Debug, Clone)]
pub struct ProductBasis {
    pub b: SectorBasis,
    pub a: SectorBasis,
}

impl ProductBasis {
    pub fn new(b: SectorBasis, a: SectorBasis) -> Result<Self> {
        if b.is_empty() || a.is_empty() {
            return Err(Error::InvalidModel("empty factor basis".into()));
        }
        Ok(ProductBasis { b, a })
    }

    pub fn dim(&self) -> usize {
        self.b.len() * self.a.len()
    }

    /// Guard against runaway truncations.
    pub fn check_cap(&self, hard_cap: usize) -> Result<()> {
        if self.dim() > hard_cap {
            return Err(Error::CapOverflow(format!(
                "basis dimension {} exceeds hard cap {}",
                self.dim(),
                hard_cap
            )));
        }
        Ok(())
    }

    pub fn joint(&self, bi: u32, ai: u32) -> u32 {
        bi * self.a.len() as u32 + ai
    }

    pub fn split(&self, i: u32) -> (u32, u32) {
        (i / self.a.len() as u32, i % self.a.len() as u32)
    }

    /// Number of particle excitations per joint basis state.
    pub fn nb_diag(&self) -> Vec<Real> {
        let mut d = Vec::with_capacity(self.dim());
        for bt in &self.b.totals {
            for _ in 0..self.a.len() {
                d.push(*bt as Real);
            }
        }
        d
    }

    /// Number of field quanta per joint basis state.
    pub fn na_diag(&self) -> Vec<Real> {
        let mut d = Vec::with_capacity(self.dim());
        for _ in 0..self.b.len() {
            for at in &self.a.totals {
                d.push(*at as Real);
            }
        }
        d
    }

    /// Lift factor operators to the product: `op_b ⊗ op_a`.
    pub fn combine(&self, op_b: FactorOp, op_a: FactorOp) -> MoveTable {
        let a_len = self.a.len() as u32;
        let mut entries = Vec::new();
        match (op_b, op_a) {
            (FactorOp::Identity, FactorOp::Identity) => {
                for i in 0..self.dim() as u32 {
                    entries.push((i, i, 1.0));
                }
            }
            (FactorOp::Moves(mb), FactorOp::Identity) => {
                entries.reserve(mb.len() * a_len as usize);
                for &(bt, bf, amp) in mb {
                    for ai in 0..a_len {
                        entries.push((bt * a_len + ai, bf * a_len + ai, amp));
                    }
                }
            }
            (FactorOp::Identity, FactorOp::Moves(ma)) => {
                entries.reserve(ma.len() * self.b.len());
                for bi in 0..self.b.len() as u32 {
                    for &(at, af, amp) in ma {
                        entries.push((bi * a_len + at, bi * a_len + af, amp));
                    }
                }
            }
            (FactorOp::Moves(mb), FactorOp::Moves(ma)) => {
                entries.reserve(mb.len() * ma.len());
                for &(bt, bf, bamp) in mb {
                    for &(at, af, aamp) in ma {
                        entries.push((bt * a_len + at, bf * a_len + af, bamp * aamp));
                    }
                }
            }
        }
        MoveTable { entries }
    }

    /// View a joint vector as rows over the b-factor; each row is the
    /// contiguous slice of field coefficients for one particle
    /// configuration.
    pub fn field_rows<'v>(&self, x: &'v [C64]) -> impl Iterator<Item = &'v [C64]> {
        let a_len = self.a.len();
        x.chunks_exact(a_len)
    }
}

/// Assemble a CSR matrix from triplets.
pub fn to_csr(tri: TriMat<C64>) -> CsMat<C64> {
    tri.to_csr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_slice;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sector_counts() {
        // 2 modes, total ≤ 3: Σ_{t=0..3}(t+1) = 10
        assert_eq!(SectorBasis::capped(2, 3).len(), 10);
        // 3 modes, total = 4: C(6,2) = 15
        assert_eq!(SectorBasis::fixed_total(3, 4).len(), 15);
        // 1 mode, cap 5: 6
        assert_eq!(SectorBasis::capped(1, 5).len(), 6);
    }

    #[test]
    fn hop_amplitudes_match_ladder_rules() {
        let basis = SectorBasis::capped(2, 2);
        // b*_0 b_1 on |0,1⟩ → |1,0⟩ with amplitude 1; on |1,1⟩ → |2,0⟩ with √1·√2
        let hops = basis.hop(0, 1);
        let find = |from_occ: &[u8], to_occ: &[u8]| -> Option<f64> {
            let fi = basis.lookup(from_occ).unwrap();
            let ti = basis.lookup(to_occ).unwrap();
            hops.iter().find(|(r, col, _)| *r == ti && *col == fi).map(|(_, _, a)| *a)
        };
        assert!((find(&[0, 1], &[1, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((find(&[1, 1], &[2, 0]).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        // diagonal hop is the occupation
        let diag = basis.hop(1, 1);
        let i = basis.lookup(&[0, 2]).unwrap();
        assert!(diag.iter().any(|&(r, col, a)| r == i && col == i && (a - 2.0).abs() < 1e-15));
    }

    #[test]
    fn number_operator_from_hops() {
        // Σ_n b*_n b_n acts as the total occupation.
        let basis = SectorBasis::capped(3, 3);
        let pb = ProductBasis::new(basis, SectorBasis::capped(1, 0)).unwrap();
        let mut x = vec![c(0.0, 0.0); pb.dim()];
        let i = pb.b.lookup(&[1, 2, 0]).unwrap();
        x[pb.joint(i, 0) as usize] = c(1.0, 0.0);
        let mut y = vec![c(0.0, 0.0); pb.dim()];
        for n in 0..3 {
            let moves = pb.b.hop(n, n);
            pb.combine(FactorOp::Moves(&moves), FactorOp::Identity)
                .apply(c(1.0, 0.0), &x, &mut y);
        }
        assert!((y[pb.joint(i, 0) as usize] - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn create_then_annihilate_is_occupation_plus_one() {
        let basis = SectorBasis::capped(2, 4);
        let pb = ProductBasis::new(SectorBasis::capped(1, 0), basis).unwrap();
        let mut x = vec![c(0.0, 0.0); pb.dim()];
        let i = pb.a.lookup(&[2, 1]).unwrap();
        x[pb.joint(0, i) as usize] = c(1.0, 0.0);
        let cre = pb.a.create(0);
        let ann = pb.a.annihilate(0);
        let mut mid = vec![c(0.0, 0.0); pb.dim()];
        pb.combine(FactorOp::Identity, FactorOp::Moves(&cre)).apply(c(1.0, 0.0), &x, &mut mid);
        let mut out = vec![c(0.0, 0.0); pb.dim()];
        pb.combine(FactorOp::Identity, FactorOp::Moves(&ann)).apply(c(1.0, 0.0), &mid, &mut out);
        // a a* |n=2⟩ = (n+1)|n=2⟩ = 3
        assert!((out[pb.joint(0, i) as usize] - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn adjoint_application_matches_manual_conjugate() {
        let b = SectorBasis::capped(2, 2);
        let a = SectorBasis::capped(2, 2);
        let pb = ProductBasis::new(b, a).unwrap();
        let table = {
            let mb = pb.b.create(0);
            let ma = pb.a.annihilate(1);
            pb.combine(FactorOp::Moves(&mb), FactorOp::Moves(&ma))
        };
        let dim = pb.dim();
        let x: Vec<C64> = (0..dim).map(|i| c((i as f64 * 0.17).sin(), (i as f64 * 0.07).cos())).collect();
        let z = c(0.3, -0.8);
        // ⟨T† y, x⟩ = ⟨y, T x⟩
        let y: Vec<C64> = (0..dim).map(|i| c((i as f64 * 0.05).cos(), (i as f64 * 0.31).sin())).collect();
        let mut tx = vec![c(0.0, 0.0); dim];
        table.apply(z, &x, &mut tx);
        let mut tay = vec![c(0.0, 0.0); dim];
        table.apply_adjoint(z, &y, &mut tay);
        let lhs: C64 = tay.iter().zip(&x).map(|(p, q)| p.conj() * q).sum();
        let rhs: C64 = y.iter().zip(&tx).map(|(p, q)| p.conj() * q).sum();
        assert!((lhs - rhs).norm() < 1e-12 * norm_slice(&x) * norm_slice(&y));
    }

    #[test]
    fn smeared_ladders_between_fixed_sectors() {
        let from = SectorBasis::fixed_total(2, 2);
        let to = SectorBasis::fixed_total(2, 1);
        let f = [c(0.6, 0.0), c(0.0, 0.8)];
        let down = annihilator_matrix(&from, &to, &f);
        let up = creator_matrix(&to, &from, &f);
        // b(f) b*(f) - b*(f) b(f) = ‖f‖² on the lower sector
        let comm = &down * &up;
        let back = creator_matrix(
            &SectorBasis::fixed_total(2, 0),
            &to,
            &f,
        ) * annihilator_matrix(&to, &SectorBasis::fixed_total(2, 0), &f);
        let id = nalgebra::DMatrix::<C64>::identity(to.len(), to.len());
        let defect = (comm - back - id * c(1.0, 0.0)).map(|z| z.norm()).max();
        assert!(defect < 1e-13, "defect {defect}");
    }
}
