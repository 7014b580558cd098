//! Dense complex operator algebra.
//!
//! Multi-system operators use row-major Kronecker nesting: for a
//! [`SystemShape`] `[d0, d1, .., dk]` the basis index of `|i0 i1 .. ik>` is
//! `((i0 * d1 + i1) * d2 + i2) ..`, which is exactly the block layout of
//! `tensor(a0, tensor(a1, ..))`. The global factor order is (R, A, B).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

/// Hermiticity tolerance on `max |A - A†|`.
pub const HERM_TOL: f64 = 1e-10;
/// Eigenvalues in `(-PSD_TOL, 0)` are treated as roundoff and clipped.
pub const PSD_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Ordered subsystem dimensions labelling the tensor factors of an operator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemShape(Vec<usize>);

impl SystemShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(dim_err(format!("invalid system shape {dims:?}")));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Product of all subsystem dimensions.
    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    fn check_square(&self, op: &CMatrix) -> Result<()> {
        if op.nrows() != op.ncols() {
            return Err(dim_err(format!("operator is {}x{}, not square", op.nrows(), op.ncols())));
        }
        if op.nrows() != self.total() {
            return Err(dim_err(format!(
                "shape {:?} has total dimension {} but operator is {}x{}",
                self.0,
                self.total(),
                op.nrows(),
                op.ncols()
            )));
        }
        Ok(())
    }

    /// Splits a flat index into per-subsystem digits.
    fn digits(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &d) in out.iter_mut().zip(&self.0).rev() {
            *slot = index % d;
            index /= d;
        }
    }
}

/// A square matrix with `max |A - A†| <= HERM_TOL`, stored exactly Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Validates Hermiticity and stores the symmetrized matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(dim_err(format!("Hermitian operator must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let dev = hermiticity_deviation(&m);
        if dev > HERM_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::symmetrize(m))
    }

    /// Projects onto the Hermitian part without validation.
    pub fn symmetrize(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Self((m + adj) * C64::new(0.5, 0.0))
    }

    pub fn identity(d: usize) -> Self {
        Self(CMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        Self(CMatrix::zeros(d, d))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self(m)
    }

    /// Rank-one operator `|v><v|`.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self(CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scale(&self, f: f64) -> Self {
        Self(&self.0 * C64::new(f, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `Re Tr[self * other]`.
    pub fn inner(&self, other: &Self) -> f64 {
        trace_product(&self.0, &other.0).re
    }

    pub fn eigh(&self) -> Eigh {
        eigh(&self.0)
    }

    pub fn max_eig(&self) -> f64 {
        max_eig(self)
    }

    pub fn min_eig(&self) -> f64 {
        min_eig(self)
    }

    /// Rebuilds `V f(diag) V†` from the spectral decomposition.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let e = self.eigh();
        e.reconstruct(f)
    }
}

/// Spectral decomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> Hermitian {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = C64::new(f(v), 0.0);
            for i in 0..n {
                scaled[(i, j)] *= fv;
            }
        }
        Hermitian::symmetrize(scaled * self.vectors.adjoint())
    }
}

/// Eigendecomposition of a (numerically) Hermitian matrix.
pub fn eigh(m: &CMatrix) -> Eigh {
    let e = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    Eigh { values, vectors }
}

pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product `a ⊗ b` (block `(i, j)` is `a_ij * b`).
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Traces out every subsystem not listed in `keep`; kept factors retain
/// their relative order.
pub fn partial_trace(op: &CMatrix, shape: &SystemShape, keep: &[usize]) -> Result<CMatrix> {
    shape.check_square(op)?;
    let k = shape.len();
    if let Some(&bad) = keep.iter().find(|&&s| s >= k) {
        return Err(dim_err(format!("subsystem index {bad} out of range for {k} subsystems")));
    }
    let mut kept_flags = vec![false; k];
    for &s in keep {
        if kept_flags[s] {
            return Err(dim_err(format!("subsystem {s} listed twice")));
        }
        kept_flags[s] = true;
    }
    let dims = shape.dims();
    let n = shape.total();
    let kept_dim: usize = keep.iter().map(|&s| dims[s]).product();

    let mut digits = vec![0usize; k];
    let split: Vec<(usize, usize)> = (0..n)
        .map(|idx| {
            shape.digits(idx, &mut digits);
            let kept = keep.iter().fold(0, |acc, &s| acc * dims[s] + digits[s]);
            let traced = (0..k).filter(|&s| !kept_flags[s]).fold(0, |acc, s| acc * dims[s] + digits[s]);
            (kept, traced)
        })
        .collect();

    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for i in 0..n {
        let (ki, ti) = split[i];
        for j in 0..n {
            let (kj, tj) = split[j];
            if ti == tj {
                out[(ki, kj)] += op[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Transposes the indices of subsystem `target` only.
pub fn partial_transpose(op: &CMatrix, shape: &SystemShape, target: usize) -> Result<CMatrix> {
    shape.check_square(op)?;
    if target >= shape.len() {
        return Err(dim_err(format!("subsystem index {target} out of range for {} subsystems", shape.len())));
    }
    let n = shape.total();
    let dims = shape.dims();
    let stride: usize = dims[target + 1..].iter().product();
    let d = dims[target];
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        let di = (i / stride) % d;
        for j in 0..n {
            let dj = (j / stride) % d;
            let i2 = i - di * stride + dj * stride;
            let j2 = j - dj * stride + di * stride;
            out[(i2, j2)] = op[(i, j)];
        }
    }
    Ok(out)
}

/// Reorders tensor factors: output factor `k` is input factor `perm[k]`.
pub fn permute_systems(op: &CMatrix, shape: &SystemShape, perm: &[usize]) -> Result<CMatrix> {
    shape.check_square(op)?;
    let k = shape.len();
    let mut seen = vec![false; k];
    if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(dim_err(format!("{perm:?} is not a permutation of {k} subsystems")));
    }
    let dims = shape.dims();
    let n = shape.total();
    let mut digits = vec![0usize; k];
    let map: Vec<usize> = (0..n)
        .map(|idx| {
            shape.digits(idx, &mut digits);
            perm.iter().fold(0, |acc, &p| acc * dims[p] + digits[p])
        })
        .collect();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(map[i], map[j])] = op[(i, j)];
        }
    }
    Ok(out)
}

/// Principal square root of a PSD operator; eigenvalues in `(-PSD_TOL, 0)`
/// are clipped to zero.
pub fn psd_sqrt(op: &Hermitian) -> Result<Hermitian> {
    let e = op.eigh();
    if let Some(&lo) = e.values.first() {
        if lo < -PSD_TOL {
            return Err(Error::NotPsd(lo));
        }
    }
    // Eigenvalues at roundoff level would otherwise contribute sqrt(eps).
    let floor = 64.0 * f64::EPSILON * e.values.last().map_or(0.0, |v| v.abs()).max(1.0);
    Ok(e.reconstruct(|x| if x <= floor { 0.0 } else { x.sqrt() }))
}

/// Largest singular value, computed as `sqrt(max eig(A†A))`.
pub fn operator_norm(op: &CMatrix) -> f64 {
    let gram = Hermitian::symmetrize(op.adjoint() * op);
    gram.max_eig().max(0.0).sqrt()
}

pub fn max_eig(op: &Hermitian) -> f64 {
    op.eigh().values.last().copied().unwrap_or(0.0)
}

pub fn min_eig(op: &Hermitian) -> f64 {
    op.eigh().values.first().copied().unwrap_or(0.0)
}

/// Unnormalized maximally entangled projector `Σ_ij |ii><jj|` on `d ⊗ d`.
pub fn phi_plus(d: usize) -> Hermitian {
    let mut m = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = ONE;
        }
    }
    Hermitian(m)
}

pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn pauli_x() -> CMatrix {
    real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO])
}

pub fn pauli_z() -> CMatrix {
    real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ginibre(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, m, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
    }

    fn shape(d: &[usize]) -> SystemShape {
        SystemShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn tensor_identity_and_projectors() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(tensor(&i2, &i2), CMatrix::identity(4, 4));
        let p0 = real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let t = tensor(&p0, &p1);
        assert_eq!(t, Hermitian::from_real_diagonal(&[0.0, 1.0, 0.0, 0.0]).into_matrix());
    }

    #[test]
    fn tensor_pauli_x_z_by_hand() {
        // X ⊗ Z: off-diagonal 2x2 blocks equal to Z.
        #[rustfmt::skip]
        let expected = real_matrix(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, -1.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
        ]);
        assert_eq!(tensor(&pauli_x(), &pauli_z()), expected);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ginibre(3, 3, &mut rng);
        let rho = &a * a.adjoint();
        let b = ginibre(2, 2, &mut rng);
        let sigma = &b * b.adjoint();
        let out = partial_trace(&tensor(&rho, &sigma), &shape(&[3, 2]), &[0]).unwrap();
        let expected = &rho * trace(&sigma);
        assert!(max_abs_diff(&out, &expected) < 1e-12);
        let out_b = partial_trace(&tensor(&rho, &sigma), &shape(&[3, 2]), &[1]).unwrap();
        assert!(max_abs_diff(&out_b, &(&sigma * trace(&rho))) < 1e-12);
    }

    #[test]
    fn partial_trace_of_phi_plus_is_identity() {
        let out = partial_trace(phi_plus(2).matrix(), &shape(&[2, 2]), &[0]).unwrap();
        assert!(max_abs_diff(&out, &CMatrix::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ginibre(4, 4, &mut rng);
        let h = Hermitian::symmetrize(g).into_matrix();
        let keep_first = partial_trace(&h, &shape(&[2, 2]), &[0]).unwrap();
        let keep_second = partial_trace(&h, &shape(&[2, 2]), &[1]).unwrap();
        for a in 0..2 {
            for a2 in 0..2 {
                let mut s1 = ZERO;
                let mut s2 = ZERO;
                for t in 0..2 {
                    s1 += h[(a * 2 + t, a2 * 2 + t)];
                    s2 += h[(t * 2 + a, t * 2 + a2)];
                }
                assert!((keep_first[(a, a2)] - s1).norm() < 1e-14);
                assert!((keep_second[(a, a2)] - s2).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_three_systems_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ops: Vec<CMatrix> = [2, 3, 2].iter().map(|&d| ginibre(d, d, &mut rng)).collect();
        let full = tensor(&tensor(&ops[0], &ops[1]), &ops[2]);
        let out = partial_trace(&full, &shape(&[2, 3, 2]), &[0, 2]).unwrap();
        let expected = tensor(&ops[0], &ops[2]) * trace(&ops[1]);
        assert!(max_abs_diff(&out, &expected) < 1e-12);
        assert!(partial_trace(&full, &shape(&[2, 2]), &[0]).is_err());
        assert!(partial_trace(&full, &shape(&[2, 3, 2]), &[3]).is_err());
    }

    #[test]
    fn partial_transpose_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = ginibre(2, 2, &mut rng);
        let b = ginibre(3, 3, &mut rng);
        let ab = tensor(&a, &b);
        let s = shape(&[2, 3]);
        assert_eq!(partial_transpose(&ab, &s, 1).unwrap(), tensor(&a, &b.transpose()));
        assert_eq!(partial_transpose(&ab, &s, 0).unwrap(), tensor(&a.transpose(), &b));
        let twice = partial_transpose(&partial_transpose(&ab, &s, 0).unwrap(), &s, 0).unwrap();
        assert_eq!(twice, ab);
        assert!(partial_transpose(&ab, &s, 2).is_err());
    }

    #[test]
    fn partial_transpose_of_phi_plus_is_swap() {
        #[rustfmt::skip]
        let swap = real_matrix(4, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        let s = shape(&[2, 2]);
        assert_eq!(partial_transpose(phi_plus(2).matrix(), &s, 0).unwrap(), swap);
        assert_eq!(partial_transpose(phi_plus(2).matrix(), &s, 1).unwrap(), swap);
    }

    #[test]
    fn permute_systems_swaps_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = ginibre(2, 2, &mut rng);
        let b = ginibre(3, 3, &mut rng);
        let c = ginibre(2, 2, &mut rng);
        let abc = tensor(&tensor(&a, &b), &c);
        let out = permute_systems(&abc, &shape(&[2, 3, 2]), &[2, 0, 1]).unwrap();
        assert!(max_abs_diff(&out, &tensor(&tensor(&c, &a), &b)) < 1e-14);
        assert!(permute_systems(&abc, &shape(&[2, 3, 2]), &[0, 0, 1]).is_err());
    }

    #[test]
    fn psd_sqrt_cases() {
        let i3 = Hermitian::identity(3);
        assert!(max_abs_diff(psd_sqrt(&i3).unwrap().matrix(), i3.matrix()) < 1e-14);

        let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let p = Hermitian::outer(&v);
        let root = psd_sqrt(&p.scale(4.0)).unwrap();
        assert!(max_abs_diff(root.matrix(), p.scale(2.0).matrix()) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = ginibre(6, 6, &mut rng);
        let a = Hermitian::symmetrize(&g * g.adjoint());
        let s = psd_sqrt(&a).unwrap();
        assert!(s.min_eig() >= -1e-12);
        assert!(max_abs_diff(&(s.matrix() * s.matrix()), a.matrix()) < 1e-8);

        let neg = Hermitian::from_real_diagonal(&[1.0, -1e-3]);
        assert!(matches!(psd_sqrt(&neg), Err(Error::NotPsd(_))));
        let tiny = Hermitian::from_real_diagonal(&[1.0, -1e-12]);
        assert!(psd_sqrt(&tiny).is_ok());
    }

    #[test]
    fn operator_norm_cases() {
        let d = Hermitian::from_real_diagonal(&[0.3, -0.7]);
        assert!((operator_norm(d.matrix()) - 0.7).abs() < 1e-14);
        let h = real_matrix(2, 2, &[1.0, 1.0, 1.0, -1.0]) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!((operator_norm(&h) - 1.0).abs() < 1e-14);

        // SVD is an independent route to the largest singular value.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let a = ginibre(5, 3, &mut rng);
            let sv = a.clone().svd(false, false).singular_values;
            let top = sv.iter().cloned().fold(0.0, f64::max);
            assert!((operator_norm(&a) - top).abs() < 1e-10);
        }
    }

    #[test]
    fn max_eig_cases() {
        assert!((max_eig(&Hermitian::from_real_diagonal(&[1.0, 2.0, 3.0])) - 3.0).abs() < 1e-14);
        assert!((max_eig(&phi_plus(2)) - 2.0).abs() < 1e-12);
        assert!(min_eig(&phi_plus(2)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = Hermitian::symmetrize(ginibre(5, 5, &mut rng));
        let top = max_eig(&a);
        for i in 0..5 {
            assert!(top >= a.matrix()[(i, i)].re - 1e-12);
        }
    }

    #[test]
    fn hermitian_validation() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, C64::new(0.0, 1.0), C64::new(0.0, 1.0), ONE]);
        assert!(matches!(Hermitian::new(m), Err(Error::NotHermitian(_))));
        let nan = CMatrix::from_element(2, 2, C64::new(f64::NAN, 0.0));
        assert!(matches!(Hermitian::new(nan), Err(Error::NonFinite)));
        let v = DVector::from_vec(vec![ONE, C64::new(0.0, 1.0)]);
        let h = Hermitian::new(&v * v.adjoint()).unwrap();
        assert!((h.trace() - 2.0).abs() < 1e-15);
    }
}
