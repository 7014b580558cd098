//! Rényi entropies, the overlap-based Rényi uncertainty relation, and the
//! conditional min-entropy SDP.

pub mod sdp;

use serde::{Deserialize, Serialize};

pub use sdp::{
    hmin_exp_dual, hmin_exp_primal, hmin_from_value, solve_min_entropy, MinEntropySolution, SdpOptions, SdpResult,
    SdpStatus, FEAS_TOL, GAP_TOL,
};

use crate::channels::QuantumChannel;
use crate::error::{dim_err, Error, Result};
use crate::opalg::{Hermitian, SystemShape};
use crate::tester::{overlap_table, Tester};

/// Entries below this are treated as roundoff and clipped to zero.
pub const NEG_CLIP: f64 = 1e-10;
/// Allowed deviation of the entry sum from the declared total.
pub const TOTAL_TOL: f64 = 1e-8;
/// Tolerance on `1/α + 1/β = 2`.
pub const HARMONIC_TOL: f64 = 1e-12;

/// A nonnegative vector with a declared total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    entries: Vec<f64>,
    declared_total: f64,
}

impl ProbVector {
    pub fn new(entries: Vec<f64>, declared_total: f64) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) || !declared_total.is_finite() {
            return Err(Error::NonFinite);
        }
        let mut clipped = Vec::with_capacity(entries.len());
        for (i, &x) in entries.iter().enumerate() {
            if x < -NEG_CLIP {
                return Err(Error::Invalid { what: "probability vector", detail: format!("entry {i} is {x}") });
            }
            clipped.push(x.max(0.0));
        }
        let sum: f64 = clipped.iter().sum();
        if (sum - declared_total).abs() > TOTAL_TOL {
            return Err(Error::Invalid {
                what: "probability vector",
                detail: format!("entries sum to {sum}, declared total is {declared_total}"),
            });
        }
        Ok(Self { entries: clipped, declared_total })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.declared_total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `p ⊕ q`: concatenation, totals add.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self { entries, declared_total: self.declared_total + other.declared_total }
    }

    /// `p ⊗ q` with index `x·n + y`.
    pub fn direct_product(&self, other: &Self) -> Self {
        let entries = self.entries.iter().flat_map(|p| other.entries.iter().map(move |q| p * q)).collect();
        Self { entries, declared_total: self.declared_total * other.declared_total }
    }

    /// `(1/d_A) p ⊕ (d_A - 1)/d_A`: the extended-tester distribution on `J/d_A`.
    pub fn padded(&self, d_a: usize) -> Self {
        let d = d_a as f64;
        let mut entries: Vec<f64> = self.entries.iter().map(|p| p / d).collect();
        entries.push((d - 1.0) / d);
        Self { entries, declared_total: 1.0 }
    }
}

/// Base-2 Rényi entropy `(1/(1-α)) log Σ p^α`, with the limits at
/// `α = 0, 1, ∞`. Entries are used as given, so for totals other than 1
/// the Shannon case is `-Σ x log x`.
pub fn renyi_entropy(p: &[f64], alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::NegativeOrder(alpha));
    }
    let support = p.iter().copied().filter(|&x| x > 0.0);
    let h = if alpha == 0.0 {
        (support.count() as f64).log2()
    } else if alpha == 1.0 {
        -support.map(|x| x * x.log2()).sum::<f64>()
    } else if alpha.is_infinite() {
        let max = p.iter().copied().fold(0.0, f64::max);
        -max.log2()
    } else {
        support.map(|x| x.powf(alpha)).sum::<f64>().log2() / (1.0 - alpha)
    };
    Ok(h)
}

pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

fn reciprocal(a: f64) -> f64 {
    if a.is_infinite() {
        0.0
    } else {
        1.0 / a
    }
}

pub fn check_harmonic(alpha: f64, beta: f64) -> Result<()> {
    if alpha.is_nan() || beta.is_nan() || alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::Harmonic { alpha, beta });
    }
    if (reciprocal(alpha) + reciprocal(beta) - 2.0).abs() > HARMONIC_TOL {
        return Err(Error::Harmonic { alpha, beta });
    }
    Ok(())
}

/// One evaluation of `H_α(p') + H_β(q') >= -2 log c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    #[serde(with = "crate::io::extended_float")]
    pub alpha: f64,
    #[serde(with = "crate::io::extended_float")]
    pub beta: f64,
    pub lhs: f64,
    #[serde(with = "crate::io::extended_float")]
    pub rhs: f64,
    #[serde(with = "crate::io::extended_float")]
    pub slack: f64,
}

/// `-2 log2 c`; `+∞` for `c = 0`.
pub fn overlap_bound(c: f64) -> f64 {
    if c <= 0.0 {
        f64::INFINITY
    } else {
        -2.0 * c.log2()
    }
}

/// The relation for already-computed outcome distributions and overlap.
pub fn mu_report(p: &ProbVector, q: &ProbVector, d_a: usize, c: f64, alpha: f64, beta: f64) -> Result<MuReport> {
    check_harmonic(alpha, beta)?;
    if d_a == 0 {
        return Err(dim_err("d_A must be positive"));
    }
    let lhs = renyi_entropy(p.padded(d_a).entries(), alpha)? + renyi_entropy(q.padded(d_a).entries(), beta)?;
    let rhs = overlap_bound(c);
    Ok(MuReport { alpha, beta, lhs, rhs, slack: lhs - rhs })
}

/// Evaluates the relation for one channel, computing the overlap from the
/// extended testers (complements included).
pub fn mu_relation(t1: &Tester, t2: &Tester, channel: &QuantumChannel, alpha: f64, beta: f64) -> Result<MuReport> {
    check_harmonic(alpha, beta)?;
    let report = channel.validate();
    if !report.passes {
        return Err(Error::Invalid {
            what: "channel",
            detail: format!("CP residual {:.3e}, TP residual {:.3e}", report.cp_residual, report.tp_residual),
        });
    }
    let table = overlap_table(&t1.extend()?, &t2.extend()?, false)?;
    let p = t1.probabilities(channel)?;
    let q = t2.probabilities(channel)?;
    mu_report(&p, &q, t1.d_a(), table.max_overlap, alpha, beta)
}

/// Result of checking `2^{-H_min(G)} = Tr G · 2^{-H_min(G / Tr G)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub value: f64,
    pub trace: f64,
    pub normalized_value: f64,
    pub deviation: f64,
    pub holds: bool,
    pub degenerate: bool,
}

pub fn hmin_normalized_identity_check(g: &Hermitian, shape: &SystemShape) -> Result<ScalingReport> {
    let trace = g.trace();
    if trace <= 1e-12 {
        return Ok(ScalingReport {
            value: 0.0,
            trace,
            normalized_value: 0.0,
            deviation: 0.0,
            holds: false,
            degenerate: true,
        });
    }
    let value = hmin_exp_dual(g, shape)?.value;
    let normalized_value = hmin_exp_dual(&g.scale(1.0 / trace), shape)?.value;
    let deviation = (value - trace * normalized_value).abs();
    Ok(ScalingReport {
        value,
        trace,
        normalized_value,
        deviation,
        holds: deviation <= GAP_TOL * value.max(1.0),
        degenerate: false,
    })
}
