//! Process POVMs (testers): a correlated input `ρ^{RA}` plus a POVM on
//! `R ⊗ B`, compiled into effects `E_x` on `A ⊗ B` with `p_x = Tr[E_x J]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{DensityOperator, Povm, QuantumChannel, IDENTITY_TOL};
use crate::entropy::ProbVector;
use crate::error::{dim_err, Error, Result};
use crate::opalg::{
    max_abs_diff, operator_norm, partial_trace, partial_transpose, permute_systems, psd_sqrt, tensor, CMatrix,
    Hermitian, SystemShape, PSD_TOL,
};

/// Slack allowed on individual outcome probabilities before clipping.
pub const PROB_TOL: f64 = 1e-8;

/// A tester `T = (ρ^{RA}, M)` with its compiled effects.
#[derive(Debug, Clone)]
pub struct Tester {
    d_r: usize,
    d_a: usize,
    d_b: usize,
    input_state: DensityOperator,
    povm: Povm,
    effects: Vec<Hermitian>,
    /// `(ρ^A)ᵀ`.
    reduced_input_t: Hermitian,
}

impl Tester {
    /// Compiles `E_x = Tr_R[((ρ^{RA})^{T_A} ⊗ 1_B)(M_x^{RB} ⊗ 1_A)]` in factor
    /// order (R, A, B). A one-factor shape on either input is read as
    /// `d_R = 1`.
    pub fn new(input_state: DensityOperator, povm: Povm) -> Result<Self> {
        let (d_r, d_a) = split_reference(input_state.shape())?;
        let (d_r2, d_b) = split_reference(povm.shape())?;
        if d_r != d_r2 {
            return Err(dim_err(format!("input state has d_R = {d_r} but POVM has d_R = {d_r2}")));
        }
        let ra = SystemShape::new(vec![d_r, d_a])?;
        let rho_ta = partial_transpose(input_state.matrix(), &ra, 1)?;
        let rab = SystemShape::new(vec![d_r, d_a, d_b])?;
        let rho_part = tensor(&rho_ta, &CMatrix::identity(d_b, d_b));
        let rba = SystemShape::new(vec![d_r, d_b, d_a])?;

        let mut effects = Vec::with_capacity(povm.len());
        for m in povm.effects() {
            // M_x ⊗ 1_A lives on (R, B, A); reorder to (R, A, B).
            let m_part = permute_systems(&tensor(m.matrix(), &CMatrix::identity(d_a, d_a)), &rba, &[0, 2, 1])?;
            let e = partial_trace(&(&rho_part * &m_part), &rab, &[1, 2])?;
            effects.push(Hermitian::new(e).map_err(|err| Error::Inconsistent(format!("effect not Hermitian: {err}")))?);
        }

        let rho_a = partial_trace(input_state.matrix(), &ra, &[1])?;
        let reduced_input_t = Hermitian::symmetrize(rho_a.transpose());

        let tester = Self { d_r, d_a, d_b, input_state, povm, effects, reduced_input_t };
        tester.check_invariants()?;
        Ok(tester)
    }

    /// Tester with no reference system: `E_x = ρᵀ ⊗ M_x`.
    pub fn without_reference(state: DensityOperator, povm: Povm) -> Result<Self> {
        let ds = state.dim();
        let db = povm.dim();
        let state = state.reshaped(SystemShape::new(vec![1, ds])?)?;
        let povm = Povm::new(SystemShape::new(vec![1, db])?, povm.effects().to_vec())?;
        Self::new(state, povm)
    }

    /// Random tester: Ginibre input on `R ⊗ A`, random `m`-outcome POVM on `R ⊗ B`.
    pub fn random<R: Rng + ?Sized>(d_r: usize, d_a: usize, d_b: usize, m: usize, rng: &mut R) -> Result<Self> {
        let state = DensityOperator::random(d_r * d_a, rng).reshaped(SystemShape::new(vec![d_r, d_a])?)?;
        let povm = Povm::random(SystemShape::new(vec![d_r, d_b])?, m, rng)?;
        Self::new(state, povm)
    }

    fn check_invariants(&self) -> Result<()> {
        let expected = tensor(self.reduced_input_t.matrix(), &CMatrix::identity(self.d_b, self.d_b));
        let mut sum = CMatrix::zeros(expected.nrows(), expected.ncols());
        for (x, e) in self.effects.iter().enumerate() {
            let lo = e.min_eig();
            if lo < -PSD_TOL {
                return Err(Error::Inconsistent(format!("effect {x} has eigenvalue {lo:.3e}")));
            }
            sum += e.matrix();
        }
        let dev = max_abs_diff(&sum, &expected);
        if dev > IDENTITY_TOL {
            return Err(Error::Inconsistent(format!("Σ E_x deviates from (ρ^A)ᵀ ⊗ 1 by {dev:.3e}")));
        }
        Ok(())
    }

    pub fn d_r(&self) -> usize {
        self.d_r
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn input_state(&self) -> &DensityOperator {
        &self.input_state
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn effects(&self) -> &[Hermitian] {
        &self.effects
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    /// `(ρ^A)ᵀ`.
    pub fn reduced_input_transpose(&self) -> &Hermitian {
        &self.reduced_input_t
    }

    /// `p_x = Tr[E_x J]`, clipped to `[0, 1]` after a 1e-8 range check.
    pub fn probabilities(&self, channel: &QuantumChannel) -> Result<ProbVector> {
        if channel.d_in() != self.d_a || channel.d_out() != self.d_b {
            return Err(dim_err(format!(
                "tester acts on channels {}->{} but channel is {}->{}",
                self.d_a,
                self.d_b,
                channel.d_in(),
                channel.d_out()
            )));
        }
        let j = channel.choi();
        let mut probs = Vec::with_capacity(self.effects.len());
        for (x, e) in self.effects.iter().enumerate() {
            let p = e.inner(j);
            if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
                return Err(Error::Inconsistent(format!("outcome {x} has probability {p}")));
            }
            probs.push(p.clamp(0.0, 1.0));
        }
        ProbVector::new(probs, 1.0)
    }

    /// Appends `1_{AB} - (ρ^A)ᵀ ⊗ 1_B` so the effects sum to the identity.
    pub fn extend(&self) -> Result<ExtendedTester> {
        let n = self.d_a * self.d_b;
        let complement = Hermitian::symmetrize(
            CMatrix::identity(n, n) - tensor(self.reduced_input_t.matrix(), &CMatrix::identity(self.d_b, self.d_b)),
        );
        let lo = complement.min_eig();
        if lo < -PSD_TOL {
            return Err(Error::Inconsistent(format!("complement effect has eigenvalue {lo:.3e}")));
        }
        let mut extended_effects = self.effects.clone();
        extended_effects.push(complement);
        Ok(ExtendedTester { base: self.clone(), extended_effects })
    }
}

fn split_reference(shape: &SystemShape) -> Result<(usize, usize)> {
    match shape.dims() {
        [d] => Ok((1, *d)),
        [r, d] => Ok((*r, *d)),
        other => Err(dim_err(format!("expected a [d_R, d] shape, got {other:?}"))),
    }
}

/// A tester whose effects are completed to a POVM on `A ⊗ B`.
#[derive(Debug, Clone)]
pub struct ExtendedTester {
    base: Tester,
    extended_effects: Vec<Hermitian>,
}

impl ExtendedTester {
    pub fn base(&self) -> &Tester {
        &self.base
    }

    /// `m + 1` effects; the last is the complement.
    pub fn extended_effects(&self) -> &[Hermitian] {
        &self.extended_effects
    }

    pub fn complement(&self) -> &Hermitian {
        self.extended_effects.last().expect("extended set is nonempty")
    }
}

/// `c_xy = ‖Ẽ_x^{1/2} F̃_y^{1/2}‖` over all extended effect pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub entries: Vec<Vec<f64>>,
    pub max_overlap: f64,
    pub argmax: (usize, usize),
    /// Whether the complement row and column were left out of the maximum.
    pub excludes_complement: bool,
}

impl OverlapTable {
    /// All entries, sorted in nonincreasing order.
    pub fn sorted_entries(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().flatten().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// Overlap table between two extended testers. With `exclude_complement`
/// the complement row/column is still tabulated but not maximized over.
pub fn overlap_table(t1: &ExtendedTester, t2: &ExtendedTester, exclude_complement: bool) -> Result<OverlapTable> {
    let (a, b) = (t1.base(), t2.base());
    if a.d_a() != b.d_a() || a.d_b() != b.d_b() {
        return Err(dim_err(format!(
            "testers act on {}->{} and {}->{}",
            a.d_a(),
            a.d_b(),
            b.d_a(),
            b.d_b()
        )));
    }
    let roots1 = t1.extended_effects().iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    let roots2 = t2.extended_effects().iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    let entries: Vec<Vec<f64>> = roots1
        .par_iter()
        .map(|r1| roots2.iter().map(|r2| operator_norm(&(r1.matrix() * r2.matrix()))).collect())
        .collect();

    let (rows, cols) = (roots1.len(), roots2.len());
    let (row_lim, col_lim) = if exclude_complement { (rows - 1, cols - 1) } else { (rows, cols) };
    let mut max_overlap = 0.0;
    let mut argmax = (0, 0);
    for (x, row) in entries.iter().enumerate().take(row_lim) {
        for (y, &c) in row.iter().enumerate().take(col_lim) {
            if c > max_overlap {
                max_overlap = c;
                argmax = (x, y);
            }
        }
    }
    Ok(OverlapTable { entries, max_overlap, argmax, excludes_complement: exclude_complement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_cptp, state_prep_channel};
    use crate::opalg::phi_plus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn shape(d: &[usize]) -> SystemShape {
        SystemShape::new(d.to_vec()).unwrap()
    }

    fn hadamard() -> CMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        crate::opalg::real_matrix(2, 2, &[r, r, r, -r])
    }

    fn trivial_state() -> DensityOperator {
        DensityOperator::new(Hermitian::identity(1)).unwrap()
    }

    #[test]
    fn no_reference_effects_are_products() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rho = DensityOperator::random(2, &mut rng);
        let povm = Povm::random(shape(&[3]), 3, &mut rng).unwrap();
        let t = Tester::without_reference(rho.clone(), povm.clone()).unwrap();
        for (e, m) in t.effects().iter().zip(povm.effects()) {
            let expected = tensor(&rho.matrix().transpose(), m.matrix());
            assert!(max_abs_diff(e.matrix(), &expected) < 1e-14);
        }
        // p_x = Tr[M_x Ψ(ρ)].
        let ch = random_cptp(2, 3, 2, &mut rng).unwrap();
        let p = t.probabilities(&ch).unwrap();
        let out = ch.apply_kraus(&rho).unwrap().unwrap();
        for (px, m) in p.entries().iter().zip(povm.effects()) {
            assert!((px - m.inner(out.operator())).abs() < 1e-12);
        }
    }

    #[test]
    fn maximally_entangled_input_on_identity_channel() {
        let d = 2;
        let input = DensityOperator::with_shape(phi_plus(d).scale(0.5), shape(&[2, 2])).unwrap();
        let basis = hadamard().kronecker(&CMatrix::identity(2, 2));
        let povm = Povm::projective(shape(&[2, 2]), &basis).unwrap();
        let t = Tester::new(input, povm.clone()).unwrap();
        let p = t.probabilities(&QuantumChannel::identity(2)).unwrap();
        for (px, m) in p.entries().iter().zip(povm.effects()) {
            assert!((px - m.inner(&phi_plus(d)) / d as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn effects_sum_to_reduced_transpose() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..10 {
            let t = Tester::random(2, 3, 2, 4, &mut rng).unwrap();
            let sum = t.effects().iter().fold(Hermitian::zeros(6), |acc, e| acc.add(e));
            let expected = tensor(t.reduced_input_transpose().matrix(), &CMatrix::identity(2, 2));
            assert!(max_abs_diff(sum.matrix(), &expected) < 1e-12);
        }
    }

    #[test]
    fn state_prep_channel_reproduces_born_rule() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let povm = Povm::random(shape(&[1, 3]), 4, &mut rng).unwrap();
        let t = Tester::new(trivial_state().reshaped(shape(&[1, 1])).unwrap(), povm.clone()).unwrap();
        let rho = DensityOperator::random(3, &mut rng);
        let p = t.probabilities(&state_prep_channel(&rho)).unwrap();
        for (px, m) in p.entries().iter().zip(povm.effects()) {
            assert!((px - m.inner(rho.operator())).abs() < 1e-14);
        }
    }

    #[test]
    fn trivial_povm_gives_uniform() {
        let half = Hermitian::identity(2).scale(0.5);
        let povm = Povm::new(shape(&[2]), vec![half.clone(), half]).unwrap();
        let t = Tester::without_reference(DensityOperator::maximally_mixed(3), povm).unwrap();
        let ch = crate::channels::random_cptp_seeded(3, 2, 6, 4).unwrap();
        let p = t.probabilities(&ch).unwrap();
        assert!((p.entries()[0] - 0.5).abs() < 1e-12 && (p.entries()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let t = Tester::without_reference(DensityOperator::maximally_mixed(2), Povm::computational(2)).unwrap();
        assert!(t.probabilities(&QuantumChannel::identity(3)).is_err());
        let state = DensityOperator::maximally_mixed(4).reshaped(shape(&[2, 2])).unwrap();
        let povm = Povm::new(shape(&[3, 1]), vec![Hermitian::identity(3)]).unwrap();
        assert!(Tester::new(state, povm).is_err());
    }

    #[test]
    fn extension_state_case_appends_zero() {
        let t = Tester::new(trivial_state(), Povm::computational(2)).unwrap();
        let ext = t.extend().unwrap();
        assert_eq!(ext.extended_effects().len(), 3);
        assert!(ext.complement().matrix().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn extension_maximally_entangled_complement() {
        let d = 3;
        let input = DensityOperator::with_shape(phi_plus(d).scale(1.0 / d as f64), shape(&[d, d])).unwrap();
        let povm = Povm::computational(d * 2);
        let povm = Povm::new(shape(&[d, 2]), povm.effects().to_vec()).unwrap();
        let ext = Tester::new(input, povm).unwrap().extend().unwrap();
        let vals = ext.complement().eigh().values;
        assert!(vals.iter().all(|v| (v - (d as f64 - 1.0) / d as f64).abs() < 1e-12));
        let sum = ext.extended_effects().iter().fold(Hermitian::zeros(d * 2), |acc, e| acc.add(e));
        assert!(max_abs_diff(sum.matrix(), &CMatrix::identity(d * 2, d * 2)) < 1e-12);
    }

    #[test]
    fn overlap_of_identical_projective_testers() {
        let t = Tester::new(trivial_state(), Povm::computational(2)).unwrap().extend().unwrap();
        let table = overlap_table(&t, &t, false).unwrap();
        assert!((table.entries[0][0] - 1.0).abs() < 1e-12);
        assert!((table.entries[1][1] - 1.0).abs() < 1e-12);
        assert!((table.max_overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_of_mutually_unbiased_bases() {
        let z = Tester::new(trivial_state(), Povm::computational(2)).unwrap().extend().unwrap();
        let x_povm = Povm::projective(shape(&[2]), &hadamard()).unwrap();
        let x = Tester::new(trivial_state(), x_povm).unwrap().extend().unwrap();
        let table = overlap_table(&z, &x, false).unwrap();
        assert!((table.max_overlap - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // Complement row and column are zero.
        assert!(table.entries[2].iter().all(|&c| c == 0.0));
        assert!(table.entries.iter().all(|row| row[2] == 0.0));
    }

    #[test]
    fn overlap_entries_bounded_and_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..5 {
            let t1 = Tester::random(2, 2, 2, 3, &mut rng).unwrap().extend().unwrap();
            let t2 = Tester::random(2, 2, 2, 2, &mut rng).unwrap().extend().unwrap();
            let ab = overlap_table(&t1, &t2, false).unwrap();
            let ba = overlap_table(&t2, &t1, false).unwrap();
            for (x, row) in ab.entries.iter().enumerate() {
                for (y, &c) in row.iter().enumerate() {
                    assert!((0.0..=1.0 + 1e-8).contains(&c));
                    assert!((c - ba.entries[y][x]).abs() < 1e-10);
                }
            }
            let excl = overlap_table(&t1, &t2, true).unwrap();
            assert!(excl.max_overlap <= ab.max_overlap);
        }
    }
}
