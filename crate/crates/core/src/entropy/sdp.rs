//! Conditional min-entropy SDP pair on `A ⊗ B`:
//!
//! ```text
//!   primal:  max Tr[W J]   s.t.  Tr_B J = 1_A,  J >= 0
//!   dual:    min Tr[X]     s.t.  X ⊗ 1_B >= W
//! ```
//!
//! Both optima equal `2^{-H_min(B|A)_W}`. The solver is a feasible-start
//! primal-dual interior-point method with the HKM search direction and a
//! Mehrotra predictor-corrector step. On exit both iterates are repaired
//! into exactly feasible points (the dual by an identity shift, the primal
//! by clipping and `Tr_B`-renormalization), so the reported values are a
//! certified bracket `primal_value <= optimum <= dual_value`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::opalg::{max_abs_diff, trace_product, CMatrix, Hermitian, SystemShape, C64, PSD_TOL, ZERO};

/// Certified duality gap required for [`SdpStatus::Solved`].
pub const GAP_TOL: f64 = 1e-6;
/// Dual feasibility (min eigenvalue of `X ⊗ 1 - W`) required for `Solved`.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Solved,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub max_iterations: usize,
    /// Interior-point stopping rule on the relative gap of the iterates.
    pub target_rel_gap: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iterations: 100, target_rel_gap: 1e-13 }
    }
}

/// Both certified sides of one solve.
#[derive(Debug, Clone)]
pub struct MinEntropySolution {
    /// `Tr X` for an exactly feasible `X`; an upper bound on the optimum.
    pub dual_value: f64,
    /// `Tr[W J]` for an exactly feasible Choi matrix; a lower bound.
    pub primal_value: f64,
    pub dual_optimizer: Hermitian,
    pub primal_optimizer: Hermitian,
    pub duality_gap: f64,
    /// Minimum eigenvalue of `X ⊗ 1 - W`.
    pub dual_residual: f64,
    /// `max |Tr_B J - 1_A|`.
    pub primal_residual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

impl MinEntropySolution {
    /// `H_min(B|A)_W = -log2(value)`; `+∞` when the value is zero.
    pub fn hmin(&self) -> f64 {
        hmin_from_value(self.dual_value)
    }
}

/// One side of the SDP pair.
#[derive(Debug, Clone)]
pub struct SdpResult {
    pub value: f64,
    pub optimizer: Hermitian,
    pub duality_gap: f64,
    pub feasibility_residual: f64,
    pub status: SdpStatus,
}

impl SdpResult {
    pub fn hmin(&self) -> f64 {
        hmin_from_value(self.value)
    }
}

pub fn hmin_from_value(value: f64) -> f64 {
    if value <= 0.0 {
        f64::INFINITY
    } else {
        -value.log2()
    }
}

/// Dual form: `min Tr X  s.t.  X ⊗ 1_B >= W`; the optimizer is `X`.
pub fn hmin_exp_dual(w: &Hermitian, shape: &SystemShape) -> Result<SdpResult> {
    let sol = solve_min_entropy(w, shape, &SdpOptions::default())?;
    Ok(SdpResult {
        value: sol.dual_value,
        optimizer: sol.dual_optimizer,
        duality_gap: sol.duality_gap,
        feasibility_residual: sol.dual_residual,
        status: sol.status,
    })
}

/// Primal form: `max Tr[W J]` over Choi matrices of channels `A -> B`; the
/// optimizer is the maximizing Choi matrix.
pub fn hmin_exp_primal(w: &Hermitian, shape: &SystemShape) -> Result<SdpResult> {
    let sol = solve_min_entropy(w, shape, &SdpOptions::default())?;
    Ok(SdpResult {
        value: sol.primal_value,
        optimizer: sol.primal_optimizer,
        duality_gap: sol.duality_gap,
        feasibility_residual: sol.primal_residual,
        status: sol.status,
    })
}

fn bipartite_dims(w: &Hermitian, shape: &SystemShape) -> Result<(usize, usize)> {
    if shape.len() != 2 {
        return Err(dim_err(format!("min-entropy SDP needs a bipartite shape [d_A, d_B], got {:?}", shape.dims())));
    }
    let (da, db) = (shape.dims()[0], shape.dims()[1]);
    if w.dim() != da * db {
        return Err(dim_err(format!("operator dim {} does not match shape {:?}", w.dim(), shape.dims())));
    }
    Ok((da, db))
}

pub fn solve_min_entropy(w: &Hermitian, shape: &SystemShape, opts: &SdpOptions) -> Result<MinEntropySolution> {
    let (da, db) = bipartite_dims(w, shape)?;
    let eig = w.eigh();
    let lo = eig.values[0];
    let hi = *eig.values.last().expect("nonempty");
    if lo < -PSD_TOL {
        return Err(Error::NotPsd(lo));
    }
    let scale = hi.abs().max(lo.abs());
    if scale <= 1e-14 {
        return Ok(zero_solution(da, db));
    }
    let wn = w.scale(1.0 / scale);
    let iterate = Ipm::new(wn.matrix().clone(), da, db).run(opts);
    Ok(certify(w, iterate, scale, da, db))
}

fn zero_solution(da: usize, db: usize) -> MinEntropySolution {
    MinEntropySolution {
        dual_value: 0.0,
        primal_value: 0.0,
        dual_optimizer: Hermitian::zeros(da),
        primal_optimizer: Hermitian::identity(da * db).scale(1.0 / db as f64),
        duality_gap: 0.0,
        dual_residual: 0.0,
        primal_residual: 0.0,
        iterations: 0,
        status: SdpStatus::Solved,
    }
}

struct Iterate {
    x: CMatrix,
    j: CMatrix,
    iterations: usize,
}

struct Ipm {
    w: CMatrix,
    da: usize,
    db: usize,
    basis: Vec<CMatrix>,
    lifted_basis: Vec<CMatrix>,
}

impl Ipm {
    fn new(w: CMatrix, da: usize, db: usize) -> Self {
        let basis = hermitian_basis(da);
        let lifted_basis = basis.iter().map(|b| lift(b, db)).collect();
        Self { w, da, db, basis, lifted_basis }
    }

    fn run(&self, opts: &SdpOptions) -> Iterate {
        let (da, db) = (self.da, self.db);
        let n = da * db;
        let ident_a = CMatrix::identity(da, da);
        let ident_n = CMatrix::identity(n, n);

        // W is scaled to spectral norm 1, so X = 2·1 leaves Z >= 1.
        let mut x = &ident_a * C64::new(2.0, 0.0);
        let mut j = &ident_n * C64::new(1.0 / db as f64, 0.0);
        let mut z = lift(&x, db) - &self.w;
        let mut iterations = 0;
        let mut stalls = 0;
        // Late steps can lose accuracy on degenerate problems; keep the best.
        let mut best: Option<(f64, CMatrix, CMatrix)> = None;

        while iterations < opts.max_iterations {
            let rp = &ident_a - ptrace_b(&j, da, db);
            let rd = lift(&x, db) - &self.w - &z;
            let pobj = trace_product(&self.w, &j).re;
            let dobj = trace_real(&x);
            let gap = dobj - pobj;
            let infeas = max_abs(&rp).max(max_abs(&rd));
            let merit = gap.abs() + n as f64 * infeas;
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, x.clone(), j.clone()));
            }
            if gap.abs() <= opts.target_rel_gap * dobj.abs().max(1.0) && infeas <= 1e-10 {
                break;
            }
            let mu = trace_product(&j, &z).re / n as f64;
            if mu <= 1e-18 {
                break;
            }
            let Some(zinv) = z.clone().cholesky().map(|c| c.inverse()) else { break };
            let Some(schur) = self.schur_matrix(&j, &zinv).cholesky() else { break };

            // Predictor (affine scaling).
            let jz = &j * &z;
            let rc_aff = -&jz;
            let (_, dj_a, dz_a) = self.direction(&rc_aff, &j, &zinv, &rp, &rd, &schur);
            let ap_aff = max_step(&j, &dj_a).min(1.0);
            let ad_aff = max_step(&z, &dz_a).min(1.0);
            let mu_aff = trace_product(
                &(&j + &dj_a * C64::new(ap_aff, 0.0)),
                &(&z + &dz_a * C64::new(ad_aff, 0.0)),
            )
            .re
                / n as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector with centering.
            let rc = &ident_n * C64::new(sigma * mu, 0.0) - &jz - &dj_a * &dz_a;
            let (dx, dj, dz) = self.direction(&rc, &j, &zinv, &rp, &rd, &schur);
            let ap = (0.98 * max_step(&j, &dj)).min(1.0);
            let ad = (0.98 * max_step(&z, &dz)).min(1.0);
            if ap < 1e-12 && ad < 1e-12 {
                stalls += 1;
                if stalls > 2 {
                    break;
                }
            }
            j += &dj * C64::new(ap, 0.0);
            x += &dx * C64::new(ad, 0.0);
            z += &dz * C64::new(ad, 0.0);
            j = herm(&j);
            x = herm(&x);
            z = herm(&z);
            iterations += 1;
        }
        let (x, j) = best.map_or((x, j), |(_, bx, bj)| (bx, bj));
        Iterate { x, j, iterations }
    }

    /// `M_kl = Re Tr[B_k Tr_B(J (B_l ⊗ 1) Z^{-1})]`.
    fn schur_matrix(&self, j: &CMatrix, zinv: &CMatrix) -> DMatrix<f64> {
        let m = self.basis.len();
        let q: Vec<CMatrix> =
            self.lifted_basis.iter().map(|bl| ptrace_b(&(j * bl * zinv), self.da, self.db)).collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            for l in 0..m {
                schur[(k, l)] = trace_product(&self.basis[k], &q[l]).re;
            }
        }
        (&schur + schur.transpose()) * 0.5
    }

    /// Solves the HKM Newton system for complementarity target `rc`
    /// (`J ΔZ + ΔJ Z = rc`, symmetrized).
    fn direction(
        &self,
        rc: &CMatrix,
        j: &CMatrix,
        zinv: &CMatrix,
        rp: &CMatrix,
        rd: &CMatrix,
        schur: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ) -> (CMatrix, CMatrix, CMatrix) {
        let t = herm(&(rc * zinv)) - herm(&(j * rd * zinv));
        let rhs_mat = ptrace_b(&t, self.da, self.db) - rp;
        let rhs = nalgebra::DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|b| trace_product(b, &rhs_mat).re),
        );
        let coeffs = schur.solve(&rhs);
        let mut dx = CMatrix::zeros(self.da, self.da);
        for (b, &c) in self.basis.iter().zip(coeffs.iter()) {
            dx += b * C64::new(c, 0.0);
        }
        let dz = lift(&dx, self.db) + rd;
        let dj = herm(&((rc - j * &dz) * zinv));
        (dx, dj, dz)
    }
}

fn certify(w: &Hermitian, it: Iterate, scale: f64, da: usize, db: usize) -> MinEntropySolution {
    // Dual: shift X by the worst violation of X ⊗ 1 >= W.
    let x = Hermitian::symmetrize(&it.x * C64::new(scale, 0.0));
    let slack = Hermitian::symmetrize(lift(x.matrix(), db) - w.matrix());
    let shift = (-slack.min_eig()).max(0.0);
    let x = x.add(&Hermitian::identity(da).scale(shift));
    let dual_residual = Hermitian::symmetrize(lift(x.matrix(), db) - w.matrix()).min_eig();
    let dual_value = x.trace();

    // Primal: clip to PSD, then conjugate by (Tr_B J)^{-1/2} ⊗ 1.
    let j = Hermitian::symmetrize(it.j).map_spectrum(|v| v.max(0.0));
    let reduced = Hermitian::symmetrize(ptrace_b(j.matrix(), da, db));
    let (j, primal_residual) = if reduced.min_eig() > 1e-300 {
        let inv_sqrt = lift(reduced.map_spectrum(|v| 1.0 / v.sqrt()).matrix(), db);
        let j = Hermitian::symmetrize(&inv_sqrt * j.matrix() * &inv_sqrt);
        let res = max_abs_diff(&ptrace_b(j.matrix(), da, db), &CMatrix::identity(da, da));
        (j, res)
    } else {
        let res = max_abs_diff(reduced.matrix(), &CMatrix::identity(da, da));
        (j, res)
    };
    let primal_value = w.inner(&j);
    let duality_gap = dual_value - primal_value;
    let solved = duality_gap.abs() <= GAP_TOL
        && dual_residual >= -FEAS_TOL
        && primal_residual <= 1e-8
        && j.min_eig() >= -PSD_TOL;
    MinEntropySolution {
        dual_value,
        primal_value,
        dual_optimizer: x,
        primal_optimizer: j,
        duality_gap,
        dual_residual,
        primal_residual,
        iterations: it.iterations,
        status: if solved { SdpStatus::Solved } else { SdpStatus::NumericalFailure },
    }
}

/// Orthonormal basis of Hermitian `d x d` matrices under `Re Tr[A B]`.
fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut e = CMatrix::zeros(d, d);
        e[(i, i)] = C64::new(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..d {
        for k in i + 1..d {
            let mut re = CMatrix::zeros(d, d);
            re[(i, k)] = C64::new(r, 0.0);
            re[(k, i)] = C64::new(r, 0.0);
            basis.push(re);
            let mut im = CMatrix::zeros(d, d);
            im[(i, k)] = C64::new(0.0, r);
            im[(k, i)] = C64::new(0.0, -r);
            basis.push(im);
        }
    }
    basis
}

/// `X ⊗ 1_B`.
fn lift(x: &CMatrix, db: usize) -> CMatrix {
    x.kronecker(&CMatrix::identity(db, db))
}

/// `Tr_B` on `A ⊗ B`.
fn ptrace_b(m: &CMatrix, da: usize, db: usize) -> CMatrix {
    let mut out = CMatrix::zeros(da, da);
    for a in 0..da {
        for a2 in 0..da {
            let mut acc = ZERO;
            for b in 0..db {
                acc += m[(a * db + b, a2 * db + b)];
            }
            out[(a, a2)] = acc;
        }
    }
    out
}

fn herm(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn trace_real(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest `α` with `M + α ΔM >= 0` for positive definite `M`.
fn max_step(m: &CMatrix, dm: &CMatrix) -> f64 {
    let Some(chol) = m.clone().cholesky() else { return 0.0 };
    let l = chol.l();
    let Some(a) = l.solve_lower_triangular(dm) else { return 0.0 };
    let Some(b) = l.solve_lower_triangular(&a.adjoint()) else { return 0.0 };
    let lo = Hermitian::symmetrize(b.adjoint()).min_eig();
    if lo >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lo
    }
}
