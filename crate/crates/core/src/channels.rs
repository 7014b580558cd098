//! Quantum states, POVMs and channels in Kraus and Choi form.
//!
//! Choi convention: `J = Σ_ij |i><j| ⊗ Ψ(|i><j|)` on `A ⊗ B` with the input
//! factor first, so `Tr J = d_A` and `Tr_B J = 1_A` for trace-preserving
//! maps. The action is recovered as `Ψ(X) = Tr_A[(Xᵀ ⊗ 1_B) J]`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_err, Error, Result};
use crate::opalg::{
    max_abs_diff, partial_trace, phi_plus, CMatrix, Hermitian, SystemShape, C64, PSD_TOL, ZERO,
};

/// Trace tolerance for density operators.
pub const TRACE_TOL: f64 = 1e-9;
/// Tolerance for completeness and trace-preservation identities.
pub const IDENTITY_TOL: f64 = 1e-8;

/// A PSD unit-trace operator, optionally labelled with a subsystem shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: Hermitian,
    shape: SystemShape,
}

impl DensityOperator {
    pub fn new(op: Hermitian) -> Result<Self> {
        let shape = SystemShape::new(vec![op.dim()])?;
        Self::with_shape(op, shape)
    }

    pub fn with_shape(op: Hermitian, shape: SystemShape) -> Result<Self> {
        if shape.total() != op.dim() {
            return Err(dim_err(format!("shape {:?} does not label a {}-dim state", shape.dims(), op.dim())));
        }
        let lo = op.min_eig();
        if lo < -PSD_TOL {
            return Err(Error::NotPsd(lo));
        }
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Invalid { what: "density operator", detail: format!("trace {tr} != 1") });
        }
        Ok(Self { op, shape })
    }

    /// Pure state `|ψ><ψ|`; the vector is normalized first.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invalid { what: "state vector", detail: "zero or non-finite norm".into() });
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(Hermitian::outer(&v))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { op: Hermitian::identity(d).scale(1.0 / d as f64), shape: SystemShape::new(vec![d]).expect("d >= 1") }
    }

    /// Normalized Ginibre sample `G G† / Tr(G G†)`.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let g = gaussian_matrix(d, d, rng);
        let h = Hermitian::symmetrize(&g * g.adjoint());
        let tr = h.trace();
        Self { op: h.scale(1.0 / tr), shape: SystemShape::new(vec![d]).expect("d >= 1") }
    }

    pub fn reshaped(mut self, shape: SystemShape) -> Result<Self> {
        if shape.total() != self.op.dim() {
            return Err(dim_err(format!("shape {:?} does not label a {}-dim state", shape.dims(), self.op.dim())));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn operator(&self) -> &Hermitian {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Skips validation; used for channel outputs, whose trace error is
    /// bounded by the channel's trace-preservation tolerance instead.
    pub(crate) fn from_parts_unchecked(op: Hermitian, shape: SystemShape) -> Self {
        Self { op, shape }
    }
}

/// A set of effects on a labelled space summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    shape: SystemShape,
    effects: Vec<Hermitian>,
}

impl Povm {
    pub fn new(shape: SystemShape, effects: Vec<Hermitian>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::Invalid { what: "POVM", detail: "no effects".into() });
        }
        let d = shape.total();
        let mut sum = Hermitian::zeros(d);
        for (x, e) in effects.iter().enumerate() {
            if e.dim() != d {
                return Err(dim_err(format!("effect {x} has dim {} but POVM space has dim {d}", e.dim())));
            }
            let eig = e.eigh();
            let (lo, hi) = (eig.values[0], eig.values[d - 1]);
            if lo < -PSD_TOL || hi > 1.0 + PSD_TOL {
                return Err(Error::Invalid {
                    what: "POVM",
                    detail: format!("effect {x} has spectrum [{lo:.3e}, {hi:.3e}] outside [0, 1]"),
                });
            }
            sum = sum.add(e);
        }
        let dev = max_abs_diff(sum.matrix(), &CMatrix::identity(d, d));
        if dev > IDENTITY_TOL {
            return Err(Error::Invalid { what: "POVM", detail: format!("effects sum to identity only within {dev:.3e}") });
        }
        Ok(Self { shape, effects })
    }

    /// Rank-one projectors onto the columns of a unitary.
    pub fn projective(shape: SystemShape, basis: &CMatrix) -> Result<Self> {
        let d = basis.nrows();
        let effects = (0..basis.ncols())
            .map(|j| {
                let col: Vec<C64> = (0..d).map(|i| basis[(i, j)]).collect();
                Hermitian::outer(&col)
            })
            .collect();
        Self::new(shape, effects)
    }

    pub fn computational(d: usize) -> Self {
        Self::projective(SystemShape::new(vec![d]).expect("d >= 1"), &CMatrix::identity(d, d))
            .expect("computational basis is a POVM")
    }

    /// Random `m`-outcome POVM: `M_x = S^{-1/2} G_x S^{-1/2}` with Wishart
    /// `G_x` and `S = Σ G_x`.
    pub fn random<R: Rng + ?Sized>(shape: SystemShape, m: usize, rng: &mut R) -> Result<Self> {
        let d = shape.total();
        let raw: Vec<Hermitian> = (0..m)
            .map(|_| {
                let g = gaussian_matrix(d, d, rng);
                Hermitian::symmetrize(&g * g.adjoint())
            })
            .collect();
        let total = raw.iter().fold(Hermitian::zeros(d), |acc, g| acc.add(g));
        let inv_sqrt = total.map_spectrum(|x| 1.0 / x.sqrt());
        let effects = raw
            .iter()
            .map(|g| Hermitian::symmetrize(inv_sqrt.matrix() * g.matrix() * inv_sqrt.matrix()))
            .collect();
        Self::new(shape, effects)
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    pub fn effects(&self) -> &[Hermitian] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.total()
    }
}

/// Result of a complete-positivity / trace-preservation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptpReport {
    /// Minimum eigenvalue of the Choi matrix.
    pub cp_residual: f64,
    /// `max |Tr_B J - 1_A|`.
    pub tp_residual: f64,
    pub passes: bool,
}

/// A CPTP map `A -> B` held as a Choi matrix, with Kraus operators when known.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    d_in: usize,
    d_out: usize,
    kraus: Option<Vec<CMatrix>>,
    choi: Hermitian,
}

impl QuantumChannel {
    pub fn from_kraus(kraus: Vec<CMatrix>, d_in: usize, d_out: usize) -> Result<Self> {
        let choi = choi_from_kraus(&kraus, d_in, d_out)?;
        Self::from_parts(Some(kraus), Some(choi), d_in, d_out)
    }

    pub fn from_choi(choi: Hermitian, d_in: usize, d_out: usize) -> Result<Self> {
        Self::from_parts(None, Some(choi), d_in, d_out)
    }

    /// Builds a channel from whichever representations are present; when
    /// both are given their Choi matrices must agree within 1e-8.
    pub fn from_parts(
        kraus: Option<Vec<CMatrix>>,
        choi: Option<Hermitian>,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let choi = match (&kraus, choi) {
            (None, None) => {
                return Err(Error::Invalid { what: "channel", detail: "neither Kraus nor Choi representation given".into() })
            }
            (Some(k), None) => choi_from_kraus(k, d_in, d_out)?,
            (Some(k), Some(j)) => {
                let from_k = choi_from_kraus(k, d_in, d_out)?;
                check_choi_dims(&j, d_in, d_out)?;
                let dev = max_abs_diff(from_k.matrix(), j.matrix());
                if dev > IDENTITY_TOL {
                    return Err(Error::Invalid {
                        what: "channel",
                        detail: format!("Kraus and Choi representations disagree by {dev:.3e}"),
                    });
                }
                j
            }
            (None, Some(j)) => j,
        };
        check_choi_dims(&choi, d_in, d_out)?;
        let channel = Self { d_in, d_out, kraus, choi };
        let report = channel.validate();
        if !report.passes {
            return Err(Error::Invalid {
                what: "channel",
                detail: format!(
                    "not CPTP: min Choi eigenvalue {:.3e}, trace-preservation residual {:.3e}",
                    report.cp_residual, report.tp_residual
                ),
            });
        }
        Ok(channel)
    }

    /// Wraps a Choi matrix without any CPTP validation.
    pub fn from_choi_unchecked(choi: Hermitian, d_in: usize, d_out: usize) -> Result<Self> {
        check_choi_dims(&choi, d_in, d_out)?;
        Ok(Self { d_in, d_out, kraus: None, choi })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_kraus(vec![CMatrix::identity(d, d)], d, d).expect("identity is CPTP")
    }

    /// Completely depolarizing channel `X -> Tr(X) 1/d`.
    pub fn depolarizing(d: usize) -> Self {
        let mut kraus = Vec::with_capacity(d * d);
        let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        for i in 0..d {
            for j in 0..d {
                let mut k = CMatrix::zeros(d, d);
                k[(i, j)] = amp;
                kraus.push(k);
            }
        }
        Self::from_kraus(kraus, d, d).expect("depolarizing channel is CPTP")
    }

    /// Completely dephasing channel in the computational basis.
    pub fn dephasing(d: usize) -> Self {
        let kraus = (0..d)
            .map(|i| {
                let mut k = CMatrix::zeros(d, d);
                k[(i, i)] = C64::new(1.0, 0.0);
                k
            })
            .collect();
        Self::from_kraus(kraus, d, d).expect("dephasing channel is CPTP")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn choi(&self) -> &Hermitian {
        &self.choi
    }

    pub fn kraus(&self) -> Option<&[CMatrix]> {
        self.kraus.as_deref()
    }

    pub fn validate(&self) -> CptpReport {
        validate_cptp(self)
    }

    /// `Ψ(ρ) = Tr_A[(ρᵀ ⊗ 1_B) J]`.
    pub fn apply(&self, state: &DensityOperator) -> Result<DensityOperator> {
        if state.dim() != self.d_in {
            return Err(dim_err(format!("state dim {} but channel input dim {}", state.dim(), self.d_in)));
        }
        let (da, db) = (self.d_in, self.d_out);
        let rho = state.matrix();
        let j = self.choi.matrix();
        let mut out = CMatrix::zeros(db, db);
        for a in 0..da {
            for a2 in 0..da {
                // (ρᵀ)_{a2 a} = ρ_{a a2} multiplies the block J[(a, ·), (a2, ·)].
                let coeff = rho[(a, a2)];
                if coeff == ZERO {
                    continue;
                }
                for b in 0..db {
                    for b2 in 0..db {
                        out[(b, b2)] += coeff * j[(a * db + b, a2 * db + b2)];
                    }
                }
            }
        }
        let shape = SystemShape::new(vec![db])?;
        Ok(DensityOperator::from_parts_unchecked(Hermitian::symmetrize(out), shape))
    }

    /// `Σ_k K ρ K†`, available only when Kraus operators are stored.
    pub fn apply_kraus(&self, state: &DensityOperator) -> Option<Result<DensityOperator>> {
        let kraus = self.kraus.as_ref()?;
        if state.dim() != self.d_in {
            return Some(Err(dim_err(format!("state dim {} but channel input dim {}", state.dim(), self.d_in))));
        }
        let mut out = CMatrix::zeros(self.d_out, self.d_out);
        for k in kraus {
            out += k * state.matrix() * k.adjoint();
        }
        let shape = match SystemShape::new(vec![self.d_out]) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(DensityOperator::from_parts_unchecked(Hermitian::symmetrize(out), shape)))
    }

    /// Kraus operators, reconstructed from the Choi matrix when not stored.
    pub fn kraus_operators(&self) -> Result<Vec<CMatrix>> {
        match &self.kraus {
            Some(k) => Ok(k.clone()),
            None => kraus_from_choi(&self.choi, self.d_in, self.d_out),
        }
    }
}

fn check_choi_dims(choi: &Hermitian, d_in: usize, d_out: usize) -> Result<()> {
    if d_in == 0 || d_out == 0 || choi.dim() != d_in * d_out {
        return Err(dim_err(format!("Choi matrix of dim {} does not match d_in={d_in}, d_out={d_out}", choi.dim())));
    }
    Ok(())
}

/// `J = Σ_ij |i><j| ⊗ Σ_k K_k |i><j| K_k†`. The Kraus set must be trace
/// preserving within 1e-8.
pub fn choi_from_kraus(kraus: &[CMatrix], d_in: usize, d_out: usize) -> Result<Hermitian> {
    check_kraus_dims(kraus, d_in, d_out)?;
    let mut completeness = CMatrix::zeros(d_in, d_in);
    for k in kraus {
        completeness += k.adjoint() * k;
    }
    let dev = max_abs_diff(&completeness, &CMatrix::identity(d_in, d_in));
    if dev > IDENTITY_TOL {
        return Err(Error::Invalid {
            what: "Kraus set",
            detail: format!("Σ K†K deviates from identity by {dev:.3e} (not trace preserving)"),
        });
    }
    choi_from_kraus_unchecked(kraus, d_in, d_out)
}

/// Choi matrix of an arbitrary Kraus set, trace preserving or not.
pub fn choi_from_kraus_unchecked(kraus: &[CMatrix], d_in: usize, d_out: usize) -> Result<Hermitian> {
    check_kraus_dims(kraus, d_in, d_out)?;
    let n = d_in * d_out;
    let mut j = CMatrix::zeros(n, n);
    for k in kraus {
        // Each Kraus operator contributes |v><v| with v[a*d_out + b] = K[b, a].
        let v: Vec<C64> = (0..n).map(|idx| k[(idx % d_out, idx / d_out)]).collect();
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    Ok(Hermitian::symmetrize(j))
}

fn check_kraus_dims(kraus: &[CMatrix], d_in: usize, d_out: usize) -> Result<()> {
    if kraus.is_empty() {
        return Err(Error::Invalid { what: "Kraus set", detail: "empty".into() });
    }
    for (i, k) in kraus.iter().enumerate() {
        if k.nrows() != d_out || k.ncols() != d_in {
            return Err(dim_err(format!("Kraus operator {i} is {}x{}, expected {d_out}x{d_in}", k.nrows(), k.ncols())));
        }
    }
    Ok(())
}

/// Minimal Kraus decomposition from the eigenvectors of `J`.
pub fn kraus_from_choi(choi: &Hermitian, d_in: usize, d_out: usize) -> Result<Vec<CMatrix>> {
    check_choi_dims(choi, d_in, d_out)?;
    let e = choi.eigh();
    let cutoff = PSD_TOL.max(1e-14 * e.values.last().copied().unwrap_or(0.0).abs());
    let mut kraus = Vec::new();
    for (col, &lambda) in e.values.iter().enumerate() {
        if lambda < -PSD_TOL {
            return Err(Error::NotPsd(lambda));
        }
        if lambda <= cutoff {
            continue;
        }
        let amp = lambda.sqrt();
        kraus.push(CMatrix::from_fn(d_out, d_in, |b, a| e.vectors[(a * d_out + b, col)] * amp));
    }
    Ok(kraus)
}

pub fn validate_cptp(channel: &QuantumChannel) -> CptpReport {
    let j = channel.choi();
    let cp_residual = j.min_eig();
    let shape = SystemShape::new(vec![channel.d_in, channel.d_out]).expect("checked dims");
    let reduced = partial_trace(j.matrix(), &shape, &[0]).expect("checked dims");
    let tp_residual = max_abs_diff(&reduced, &CMatrix::identity(channel.d_in, channel.d_in));
    CptpReport { cp_residual, tp_residual, passes: cp_residual >= -PSD_TOL && tp_residual <= IDENTITY_TOL }
}

/// Stinespring sample: a Haar isometry `V: A -> B ⊗ E` (QR of a complex
/// Gaussian matrix with the phases of `R` absorbed) and `Ψ(X) = Tr_E[V X V†]`.
pub fn random_cptp<R: Rng + ?Sized>(d_in: usize, d_out: usize, env_dim: usize, rng: &mut R) -> Result<QuantumChannel> {
    if d_in == 0 || d_out == 0 || env_dim == 0 {
        return Err(dim_err("random channel dimensions must be positive"));
    }
    let rows = d_out * env_dim;
    if rows < d_in {
        return Err(dim_err(format!(
            "no isometry from dim {d_in} into dim {rows} (d_out * env_dim); increase env_dim"
        )));
    }
    let v = haar_isometry(rows, d_in, rng);
    let kraus: Vec<CMatrix> =
        (0..env_dim).map(|e| CMatrix::from_fn(d_out, d_in, |b, a| v[(b * env_dim + e, a)])).collect();
    QuantumChannel::from_kraus(kraus, d_in, d_out)
}

pub fn random_cptp_seeded(d_in: usize, d_out: usize, env_dim: usize, seed: u64) -> Result<QuantumChannel> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    random_cptp(d_in, d_out, env_dim, &mut rng)
}

/// Haar-distributed `rows x cols` isometry (`rows >= cols`).
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// `Γ_ρ: ℂ -> H`, whose Choi matrix is `ρ` itself.
pub fn state_prep_channel(rho: &DensityOperator) -> QuantumChannel {
    let d = rho.dim();
    let kraus = kraus_from_choi(rho.operator(), 1, d).unwrap_or_default();
    QuantumChannel { d_in: 1, d_out: d, kraus: if kraus.is_empty() { None } else { Some(kraus) }, choi: rho.operator().clone() }
}

/// Choi matrix of the identity channel, `φ₊`.
pub fn identity_choi(d: usize) -> Hermitian {
    phi_plus(d)
}
