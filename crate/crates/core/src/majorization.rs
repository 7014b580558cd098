//! Majorization predicates, the flatness process, lattice bounds, and the
//! process-independent bound vectors `s` (direct sum) and `t` (direct
//! product).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{renyi_entropy, solve_min_entropy, ProbVector, SdpOptions, SdpStatus};
use crate::error::{dim_err, Error, Result};
use crate::opalg::{Hermitian, SystemShape, PSD_TOL};
use crate::tester::Tester;

/// Absolute tolerance on prefix-sum comparisons.
pub const PREFIX_TOL: f64 = 1e-9;
/// Slack allowed when checking measured distributions against bounds.
pub const UUR_TOL: f64 = 1e-8;
/// Default limit on the pool size `m + n` for subset enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Running sums `x_1, x_1 + x_2, ...`.
pub fn prefix_sums(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn padded_pair(y: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len().max(x.len());
    let mut ys = sorted_desc(y);
    let mut xs = sorted_desc(x);
    ys.resize(n, 0.0);
    xs.resize(n, 0.0);
    (ys, xs)
}

/// Smallest value of `prefix_k(y↓) - prefix_k(x↓)` over `k`; nonnegative
/// iff `y` weakly majorizes `x`.
pub fn weak_majorization_slack(y: &[f64], x: &[f64]) -> f64 {
    let (ys, xs) = padded_pair(y, x);
    prefix_sums(&ys)
        .iter()
        .zip(prefix_sums(&xs))
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min)
}

/// `x ≺ y`: sorted prefix sums of `x` below those of `y`, equal totals.
pub fn majorizes(y: &[f64], x: &[f64]) -> bool {
    let total_gap = (y.iter().sum::<f64>() - x.iter().sum::<f64>()).abs();
    total_gap <= PREFIX_TOL && weak_majorizes(y, x)
}

/// `x ≺_w y`: prefix inequalities only.
pub fn weak_majorizes(y: &[f64], x: &[f64]) -> bool {
    weak_majorization_slack(y, x) >= -PREFIX_TOL
}

/// A nonincreasing vector with its total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedVector {
    entries: Vec<f64>,
    total: f64,
}

impl SortedVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(i) = entries.windows(2).position(|w| w[0] < w[1] - 1e-12) {
            return Err(Error::Invalid {
                what: "sorted vector",
                detail: format!("entry {} ({}) is below entry {} ({})", i, entries[i], i + 1, entries[i + 1]),
            });
        }
        let total = entries.iter().sum();
        Ok(Self { entries, total })
    }

    pub fn from_unsorted(entries: &[f64]) -> Result<Self> {
        Self::new(sorted_desc(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prefix_sums(&self) -> Vec<f64> {
        prefix_sums(&self.entries)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }
}

/// One averaging step of the flatness process; indices are 0-based and
/// the block `start..=end` was replaced by `average`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessStep {
    pub start: usize,
    pub end: usize,
    pub average: f64,
    pub result: Vec<f64>,
}

/// Flatness process `F(x)`.
pub fn flatness(x: &[f64]) -> SortedVector {
    flatness_trace(x).0
}

/// `F(x)` together with every intermediate averaging step.
pub fn flatness_trace(x: &[f64]) -> (SortedVector, Vec<FlatnessStep>) {
    let mut v: Vec<f64> = x.iter().map(|&e| if (-1e-12..0.0).contains(&e) { 0.0 } else { e }).collect();
    let mut steps = Vec::new();
    while let Some(j) = (1..v.len()).find(|&j| v[j] > v[j - 1]) {
        let mut start = 0;
        let mut average = 0.0;
        for i in (0..j).rev() {
            let a = v[i..=j].iter().sum::<f64>() / (j - i + 1) as f64;
            if i == 0 || v[i - 1] >= a {
                start = i;
                average = a;
                break;
            }
        }
        v[start..=j].iter_mut().for_each(|e| *e = average);
        steps.push(FlatnessStep { start, end: j, average, result: v.clone() });
    }
    let total = v.iter().sum();
    (SortedVector { entries: v, total }, steps)
}

/// Greatest lower and least upper bound of a set of sorted vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeBounds {
    /// `a_S`, the prefix-minimum vector; equals the GLB.
    pub glb: SortedVector,
    /// `b_S`, the prefix-maximum vector; possibly unsorted.
    pub b: Vec<f64>,
    /// `F(b_S)`.
    pub lub: SortedVector,
    pub flatness_trace: Vec<FlatnessStep>,
}

pub fn lattice_bounds(vectors: &[SortedVector]) -> Result<LatticeBounds> {
    let first = vectors.first().ok_or(Error::EmptySet)?;
    let d = first.len();
    for v in vectors {
        if v.len() != d {
            return Err(dim_err(format!("vectors of lengths {d} and {}", v.len())));
        }
        if (v.total() - first.total()).abs() > PREFIX_TOL {
            return Err(Error::TotalMismatch(first.total(), v.total()));
        }
    }
    let prefixes: Vec<Vec<f64>> = vectors.iter().map(SortedVector::prefix_sums).collect();
    let glb = SortedVector::new(extremal_differences(vectors, &prefixes, |a, b| a < b))
        .map_err(|e| Error::Inconsistent(format!("prefix-minimum vector is not sorted: {e}")))?;
    let b = extremal_differences(vectors, &prefixes, |a, b| a > b);
    let (lub, flatness_trace) = flatness_trace(&b);
    Ok(LatticeBounds { glb, b, lub, flatness_trace })
}

/// Differences of the pointwise extremal prefix sums. Where consecutive
/// extremes come from the same vector its entry is used as is, avoiding
/// cancellation.
fn extremal_differences(vectors: &[SortedVector], prefixes: &[Vec<f64>], better: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let d = prefixes[0].len();
    let mut out = Vec::with_capacity(d);
    let mut prev: Option<(usize, f64)> = None;
    for k in 0..d {
        let mut arg = 0;
        for (i, p) in prefixes.iter().enumerate().skip(1) {
            if better(p[k], prefixes[arg][k]) {
                arg = i;
            }
        }
        let value = prefixes[arg][k];
        out.push(match prev {
            None => vectors[arg].entries()[k],
            Some((j, _)) if j == arg => vectors[arg].entries()[k],
            Some((_, last)) => value - last,
        });
        prev = Some((arg, value));
    }
    out
}

/// `(c_1, c_2 - c_1, c_3 - c_2, ...)`.
pub fn differences(cumulative: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cumulative
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// `G_z`: the effects of both testers, `E`'s first.
#[derive(Debug, Clone)]
pub struct EffectPool {
    effects: Vec<Hermitian>,
    m: usize,
    n: usize,
    shape: SystemShape,
}

impl EffectPool {
    pub fn from_testers(t1: &Tester, t2: &Tester) -> Result<Self> {
        if t1.d_a() != t2.d_a() || t1.d_b() != t2.d_b() {
            return Err(dim_err(format!(
                "testers act on {}->{} and {}->{}",
                t1.d_a(),
                t1.d_b(),
                t2.d_a(),
                t2.d_b()
            )));
        }
        let mut effects = t1.effects().to_vec();
        effects.extend_from_slice(t2.effects());
        let pool = Self {
            effects,
            m: t1.outcomes(),
            n: t2.outcomes(),
            shape: SystemShape::new(vec![t1.d_a(), t1.d_b()])?,
        };
        let tr: f64 = pool.effects.iter().map(Hermitian::trace).sum();
        let expected = 2.0 * t1.d_b() as f64;
        if (tr - expected).abs() > 1e-8 * expected.max(1.0) {
            return Err(Error::Inconsistent(format!("effect pool has trace {tr}, expected {expected}")));
        }
        Ok(pool)
    }

    pub fn effects(&self) -> &[Hermitian] {
        &self.effects
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    /// `G(I) = Σ_{z ∈ I} G_z`.
    pub fn subset_sum(&self, subset: &[usize]) -> Hermitian {
        let mut acc = Hermitian::zeros(self.shape.total());
        for &z in subset {
            acc = acc.add(&self.effects[z]);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub enumeration_cap: usize,
    /// Skip subsets whose certified upper bound cannot reach the best
    /// certified lower bound at the same `k`. Never changes the result.
    pub prune: bool,
    pub sdp: SdpOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { enumeration_cap: DEFAULT_ENUMERATION_CAP, prune: true, sdp: SdpOptions::default() }
    }
}

/// Solver certificate for the argmax subset at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub dual_value: f64,
    pub primal_value: f64,
    pub duality_gap: f64,
    pub dual_residual: f64,
    pub primal_residual: f64,
    pub status: SdpStatus,
    pub iterations: usize,
}

/// The vectors `s`, `F(s)`, `t`, `F(t)` and what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVectors {
    pub m: usize,
    pub n: usize,
    /// `s_1, ..., s_{m+n}`, made nondecreasing.
    pub s_cumulative: Vec<f64>,
    pub s: Vec<f64>,
    pub s_flat: Vec<f64>,
    /// `t_1, ..., t_{mn}`.
    pub t_cumulative: Vec<f64>,
    pub t: Vec<f64>,
    pub t_flat: Vec<f64>,
    /// Pool indices (0-based, `E`'s then `F`'s) of the maximizing subset per `k`.
    pub argmax_subsets: Vec<Vec<usize>>,
    /// `H_min(B|A)_{G(I_k)}` of the argmax subset per `k`.
    #[serde(with = "crate::io::extended_float_vec")]
    pub hmin: Vec<f64>,
    pub certificates: Vec<Certificate>,
    /// Subsets actually solved versus enumerated.
    pub solved_subsets: usize,
    pub enumerated_subsets: usize,
    /// Primal optimizer (a Choi matrix) of the argmax subset per `k`.
    #[serde(skip)]
    pub optimizers: Vec<Hermitian>,
}

impl BoundVectors {
    pub fn optimizer(&self, k: usize) -> Result<&Hermitian> {
        k.checked_sub(1).and_then(|i| self.optimizers.get(i)).ok_or(Error::MissingOptimizer(k))
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else { break };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

fn subset_key(subset: &[usize]) -> u64 {
    subset.iter().fold(0u64, |acc, &z| acc | (1 << z))
}

struct Solved {
    dual: f64,
    primal: f64,
    cert: Certificate,
    optimizer: Hermitian,
}

/// `s_k = max_{|I| = k} 2^{-H_min(B|A)_{G(I)}}` by exhaustive enumeration,
/// plus the derived `t`.
pub fn bound_vectors(pool: &EffectPool, opts: &BoundOptions) -> Result<BoundVectors> {
    let size = pool.len();
    if size > opts.enumeration_cap || size > 63 {
        return Err(Error::EnumerationCap { size, cap: opts.enumeration_cap });
    }
    if size == 0 {
        return Err(Error::EmptySet);
    }
    let shape = pool.shape().clone();
    let solve = |subset: &[usize]| -> Result<Solved> {
        let sol = solve_min_entropy(&pool.subset_sum(subset), &shape, &opts.sdp)
            .map_err(|e| Error::Sdp { subset: subset.to_vec(), detail: e.to_string() })?;
        if sol.status != SdpStatus::Solved {
            return Err(Error::Sdp {
                subset: subset.to_vec(),
                detail: format!("gap {:.3e}, dual residual {:.3e}", sol.duality_gap, sol.dual_residual),
            });
        }
        Ok(Solved {
            dual: sol.dual_value,
            primal: sol.primal_value,
            cert: Certificate {
                dual_value: sol.dual_value,
                primal_value: sol.primal_value,
                duality_gap: sol.duality_gap,
                dual_residual: sol.dual_residual,
                primal_residual: sol.primal_residual,
                status: sol.status,
                iterations: sol.iterations,
            },
            optimizer: sol.primal_optimizer,
        })
    };

    // Certified upper bounds on each subset's value, keyed by bitmask.
    let mut upper: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut singles = vec![0.0; size];
    let mut raw_best = Vec::with_capacity(size);
    let mut argmax_subsets = Vec::with_capacity(size);
    let mut certificates = Vec::with_capacity(size);
    let mut optimizers = Vec::with_capacity(size);
    let (mut solved_subsets, mut enumerated_subsets) = (0, 0);

    for k in 1..=size {
        let subsets = combinations(size, k);
        enumerated_subsets += subsets.len();
        let bounds: Vec<f64> = subsets
            .iter()
            .map(|s| {
                if k == 1 || !opts.prune {
                    return f64::INFINITY;
                }
                let key = subset_key(s);
                s.iter().map(|&z| upper[&(key & !(1 << z))] + singles[z]).fold(f64::INFINITY, f64::min)
            })
            .collect();

        // A certified lower bound from the subset with the largest upper bound.
        let mut floor = f64::NEG_INFINITY;
        let mut seed = None;
        if opts.prune && k > 1 {
            let lead = (0..subsets.len()).fold(0, |b, i| if bounds[i] > bounds[b] { i } else { b });
            let s = solve(&subsets[lead])?;
            floor = s.primal;
            seed = Some((lead, s));
        }
        let todo: Vec<usize> = (0..subsets.len()).filter(|&i| bounds[i] >= floor).collect();
        let results: Vec<(usize, Solved)> = todo
            .par_iter()
            .filter(|&&i| seed.as_ref().is_none_or(|(lead, _)| *lead != i))
            .map(|&i| solve(&subsets[i]).map(|s| (i, s)))
            .collect::<Result<_>>()?;
        let mut solved: Vec<Option<Solved>> = (0..subsets.len()).map(|_| None).collect();
        for (i, s) in results.into_iter().chain(seed) {
            solved[i] = Some(s);
        }
        solved_subsets += solved.iter().filter(|s| s.is_some()).count();

        let mut best: Option<usize> = None;
        for (i, s) in solved.iter().enumerate() {
            if let Some(s) = s {
                if best.is_none_or(|b| s.dual > solved[b].as_ref().expect("solved").dual) {
                    best = Some(i);
                }
            }
        }
        let best = best.expect("at least one subset solved per level");
        for (i, subset) in subsets.iter().enumerate() {
            let ub = solved[i].as_ref().map_or(bounds[i], |s| s.dual);
            upper.insert(subset_key(subset), ub);
            if k == 1 {
                singles[subset[0]] = ub;
            }
        }
        let win = solved[best].take().expect("solved");
        raw_best.push(win.dual);
        argmax_subsets.push(subsets[best].clone());
        certificates.push(win.cert);
        optimizers.push(win.optimizer);
    }

    let mut s_cumulative = Vec::with_capacity(size);
    for &v in &raw_best {
        let prev = s_cumulative.last().copied().unwrap_or(0.0);
        s_cumulative.push(f64::max(v, prev));
    }
    let top = *s_cumulative.last().expect("nonempty");
    if (top - 2.0).abs() > 1e-6 {
        return Err(Error::Inconsistent(format!("s_(m+n) = {top}, expected 2")));
    }
    let hmin = raw_best.iter().map(|&v| crate::entropy::hmin_from_value(v)).collect();
    let s = differences(&s_cumulative);
    let s_flat = flatness(&s).into_vec();
    let t_cumulative = t_cumulative(&s_cumulative, pool.m() * pool.n());
    let t = differences(&t_cumulative);
    let t_flat = flatness(&t).into_vec();
    Ok(BoundVectors {
        m: pool.m(),
        n: pool.n(),
        s_cumulative,
        s,
        s_flat,
        t_cumulative,
        t,
        t_flat,
        argmax_subsets,
        hmin,
        certificates,
        solved_subsets,
        enumerated_subsets,
        optimizers,
    })
}

/// `t_k = min(1, (s_{k+1}/2)²)` while `k + 1 <= m + n`, then 1.
pub fn t_cumulative(s_cumulative: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    for k in 1..=len {
        let v = match s_cumulative.get(k) {
            Some(s) => (s / 2.0).powi(2).min(1.0),
            None => 1.0,
        };
        let prev = out.last().copied().unwrap_or(0.0);
        out.push(f64::max(v, prev));
    }
    out
}

/// Worst slack of one link in a majorization chain, with the prefix index
/// (1-based) where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSlack {
    pub slack: f64,
    pub at: usize,
}

impl LinkSlack {
    fn from_gaps(upper: &[f64], lower: &[f64]) -> Self {
        let mut out = Self { slack: f64::INFINITY, at: 0 };
        for (k, (u, l)) in upper.iter().zip(lower).enumerate() {
            if u - l < out.slack {
                out = Self { slack: u - l, at: k + 1 };
            }
        }
        out
    }
}

/// Slacks of `x ≺ F(b) ≺ b`, where `b` is compared through its
/// construction-order prefix sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    /// `b_k - prefix_k(x↓)`.
    pub vs_bound: LinkSlack,
    /// `prefix_k(F(b)) - prefix_k(x↓)`.
    pub vs_flat: LinkSlack,
    /// `prefix_k(b↓) - prefix_k(F(b))`.
    pub flat_vs_bound: LinkSlack,
}

impl ChainReport {
    fn new(x: &[f64], bound_cumulative: &[f64], flat: &[f64], bound: &[f64]) -> Self {
        let n = x.len().max(bound_cumulative.len());
        let mut xs = sorted_desc(x);
        xs.resize(n, 0.0);
        let px = prefix_sums(&xs);
        let pad = |v: &[f64]| {
            let mut p = prefix_sums(v);
            let last = p.last().copied().unwrap_or(0.0);
            p.resize(n, last);
            p
        };
        let pf = pad(flat);
        let ps = pad(&sorted_desc(bound));
        // `bound_cumulative` is already a prefix sequence.
        let mut pb = bound_cumulative.to_vec();
        pb.resize(n, pb.last().copied().unwrap_or(0.0));
        Self {
            vs_bound: LinkSlack::from_gaps(&pb, &px),
            vs_flat: LinkSlack::from_gaps(&pf, &px),
            flat_vs_bound: LinkSlack::from_gaps(&ps, &pf),
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.vs_bound.slack >= -tol && self.vs_flat.slack >= -tol && self.flat_vs_bound.slack >= -PREFIX_TOL
    }

    pub fn worst(&self) -> f64 {
        self.vs_bound.slack.min(self.vs_flat.slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UurReport {
    pub direct_sum: ChainReport,
    pub direct_product: ChainReport,
    pub holds: bool,
}

/// Checks `p⊕q ≺ F(s) ≺ s` and `p⊗q ≺ F(t) ≺ t`.
pub fn uur_check(p: &ProbVector, q: &ProbVector, bounds: &BoundVectors, tol: f64) -> Result<UurReport> {
    if p.len() != bounds.m || q.len() != bounds.n {
        return Err(dim_err(format!(
            "distributions of lengths {}, {} against bounds for m = {}, n = {}",
            p.len(),
            q.len(),
            bounds.m,
            bounds.n
        )));
    }
    let direct_sum = ChainReport::new(p.direct_sum(q).entries(), &bounds.s_cumulative, &bounds.s_flat, &bounds.s);
    let direct_product =
        ChainReport::new(p.direct_product(q).entries(), &bounds.t_cumulative, &bounds.t_flat, &bounds.t);
    let holds = direct_sum.holds(tol) && direct_product.holds(tol);
    Ok(UurReport { direct_sum, direct_product, holds })
}

/// Schur-concave functionals used to turn a majorization bound into a
/// scalar relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Shannon,
    Renyi(f64),
    MinEntropy,
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shannon" => Ok(Self::Shannon),
            "min-entropy" => Ok(Self::MinEntropy),
            _ => {
                let alpha = s
                    .strip_prefix("renyi:")
                    .and_then(|a| if a == "inf" { Some(f64::INFINITY) } else { a.parse::<f64>().ok() })
                    .filter(|a| *a >= 0.0)
                    .ok_or_else(|| Error::UnknownFunctional(s.to_string()))?;
                Ok(Self::Renyi(alpha))
            }
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shannon => write!(f, "shannon"),
            Self::Renyi(a) if a.is_infinite() => write!(f, "renyi:inf"),
            Self::Renyi(a) => write!(f, "renyi:{a}"),
            Self::MinEntropy => write!(f, "min-entropy"),
        }
    }
}

pub fn schur_concave_eval(f: Functional, x: &[f64]) -> Result<f64> {
    if let Some(v) = x.iter().find(|v| **v < -PSD_TOL) {
        return Err(Error::Invalid { what: "functional argument", detail: format!("negative entry {v}") });
    }
    let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    match f {
        Functional::Shannon => renyi_entropy(&x, 1.0),
        Functional::Renyi(a) => renyi_entropy(&x, a),
        Functional::MinEntropy => renyi_entropy(&x, f64::INFINITY),
    }
}
