//! Monte-Carlo verification campaigns over random channels, tightness
//! probes, the state-case reduction, and the sorted-overlap explorer.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{random_cptp, state_prep_channel, DensityOperator, Povm, QuantumChannel};
use crate::entropy::{check_harmonic, mu_report, overlap_bound, shannon_entropy, ProbVector};
use crate::error::{dim_err, Error, Result};
use crate::io::ChannelJson;
use crate::majorization::{
    bound_vectors, prefix_sums, t_cumulative, BoundOptions, BoundVectors, EffectPool, UUR_TOL,
};
use crate::opalg::{operator_norm, psd_sqrt, Hermitian};
use crate::tester::{overlap_table, OverlapTable, Tester};

/// Stream reserved for drawing random testers, disjoint from sample streams.
const TESTER_STREAM: u64 = u64::MAX;

/// `(1,1)`, `(2, 2/3)`, `(∞, 1/2)`.
pub fn default_order_pairs() -> Vec<(f64, f64)> {
    vec![(1.0, 1.0), (2.0, 2.0 / 3.0), (f64::INFINITY, 0.5)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed negative slack of the overlap relation.
    pub mu: f64,
    /// Allowed excess of measured prefix sums over the bounds.
    pub uur: f64,
    /// Allowed `s_k` minus the mass achieved by its optimizer channel.
    pub tightness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mu: 1e-7, uur: UUR_TOL, tightness: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub seed: u64,
    pub samples: usize,
    /// Stinespring environment dimension; `d_A · d_B` when absent.
    pub env_dim: Option<usize>,
    #[serde(with = "crate::io::extended_float_pairs")]
    pub alpha_beta_pairs: Vec<(f64, f64)>,
    pub tolerances: Tolerances,
    pub enumeration_cap: usize,
    pub exclude_complement: bool,
    pub tightness: bool,
    pub explore: bool,
    /// Keep per-sample records (for CSV export); not part of the report.
    #[serde(skip)]
    pub record_samples: bool,
    /// Measure wall-clock time; off by default so reports are reproducible.
    #[serde(skip)]
    pub timings: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1000,
            env_dim: None,
            alpha_beta_pairs: default_order_pairs(),
            tolerances: Tolerances::default(),
            enumeration_cap: crate::majorization::DEFAULT_ENUMERATION_CAP,
            exclude_complement: false,
            tightness: true,
            explore: false,
            record_samples: false,
            timings: false,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Invalid { what: "campaign", detail: "samples must be at least 1".into() });
        }
        if self.env_dim == Some(0) {
            return Err(Error::Invalid { what: "campaign", detail: "env_dim must be at least 1".into() });
        }
        for &(a, b) in &self.alpha_beta_pairs {
            check_harmonic(a, b)?;
        }
        Ok(())
    }
}

/// Generator for sample `index`: the campaign seed with its own stream.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The random channel used as sample `index` of a campaign.
pub fn sample_channel(seed: u64, index: u64, d_in: usize, d_out: usize, env_dim: usize) -> Result<QuantumChannel> {
    random_cptp(d_in, d_out, env_dim, &mut sample_rng(seed, index))
}

/// Two random testers on `[d_R, d_A, d_B]` drawn from the campaign seed.
pub fn random_tester_pair(dims: [usize; 3], m: usize, n: usize, seed: u64) -> Result<(Tester, Tester)> {
    let mut rng = sample_rng(seed, TESTER_STREAM);
    let [dr, da, db] = dims;
    Ok((Tester::random(dr, da, db, m, &mut rng)?, Tester::random(dr, da, db, n, &mut rng)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSummary {
    #[serde(with = "crate::io::extended_float")]
    pub alpha: f64,
    #[serde(with = "crate::io::extended_float")]
    pub beta: f64,
    pub passed: usize,
    pub failed: usize,
    #[serde(with = "crate::io::extended_float")]
    pub worst_slack: f64,
    pub worst_sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub passed: usize,
    pub failed: usize,
    /// Smallest `bound_k - prefix_k` against the construction prefixes.
    pub worst_vs_bound: f64,
    /// Smallest `F(bound)_k - prefix_k`.
    pub worst_vs_flat: f64,
    pub worst_sample: usize,
    /// Smallest slack of `F(b) ≺ b`; a property of the bound alone.
    pub flat_vs_bound: f64,
}

/// Scalar relations obtained from the Shannon entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurSummary {
    /// `H(F(s))`, a lower bound on `H(p) + H(q)`.
    pub sum_bound: f64,
    /// `H(F(t))`, a lower bound on `H(p) + H(q)`.
    pub product_bound: f64,
    pub worst_sum_slack: f64,
    pub worst_product_slack: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub sample: usize,
    pub seed: u64,
    /// Generator stream; `sample_channel(seed, stream, ..)` reproduces the channel.
    pub stream: u64,
    pub slack: f64,
    pub channel: ChannelJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub bounds_seconds: f64,
    pub sampling_seconds: f64,
    pub total_seconds: f64,
}

/// Per-sample values, kept only when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample: usize,
    pub mu_slacks: Vec<f64>,
    pub sum_slack: f64,
    pub product_slack: f64,
    pub shannon_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    /// Base of every entropy-valued field.
    pub log_base: f64,
    /// `[d_R, d_A, d_B]` of the first tester.
    pub dims: [usize; 3],
    pub m: usize,
    pub n: usize,
    pub overlap: OverlapTable,
    #[serde(with = "crate::io::extended_float")]
    pub overlap_bound: f64,
    pub bounds: BoundVectors,
    pub mu_relation: Vec<MuSummary>,
    pub sum_chain: ChainSummary,
    pub product_chain: ChainSummary,
    pub shannon: SchurSummary,
    pub tightness: Option<TightnessReport>,
    pub conjecture: Option<ConjectureReport>,
    pub total_violations: usize,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    #[serde(skip)]
    pub samples: Vec<SampleRecord>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.total_violations == 0
    }
}

struct SampleOutcome {
    mu: Vec<f64>,
    sum: crate::majorization::ChainReport,
    product: crate::majorization::ChainReport,
    shannon_sum: f64,
}

fn check_pair(t1: &Tester, t2: &Tester) -> Result<()> {
    if t1.d_a() != t2.d_a() || t1.d_b() != t2.d_b() {
        return Err(dim_err(format!(
            "testers act on {}->{} and {}->{}",
            t1.d_a(),
            t1.d_b(),
            t2.d_a(),
            t2.d_b()
        )));
    }
    Ok(())
}

/// Samples random channels and checks every relation on each. Violations
/// are collected, never fatal. `bounds` may be supplied precomputed.
pub fn run_verification(
    config: &CampaignConfig,
    t1: &Tester,
    t2: &Tester,
    bounds: Option<BoundVectors>,
) -> Result<CampaignReport> {
    config.validate()?;
    check_pair(t1, t2)?;
    let start = Instant::now();
    let (da, db) = (t1.d_a(), t1.d_b());
    let env = config.env_dim.unwrap_or(da * db);

    let overlap = overlap_table(&t1.extend()?, &t2.extend()?, config.exclude_complement)?;
    let c = overlap.max_overlap;
    let bounds = match bounds {
        Some(b) => {
            if b.m != t1.outcomes() || b.n != t2.outcomes() {
                return Err(dim_err(format!(
                    "bounds are for m = {}, n = {} but testers have {} and {} outcomes",
                    b.m,
                    b.n,
                    t1.outcomes(),
                    t2.outcomes()
                )));
            }
            b
        }
        None => {
            let pool = EffectPool::from_testers(t1, t2)?;
            bound_vectors(&pool, &BoundOptions { enumeration_cap: config.enumeration_cap, ..Default::default() })?
        }
    };
    let bounds_done = Instant::now();

    let outcomes: Vec<SampleOutcome> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let ch = sample_channel(config.seed, i as u64, da, db, env)?;
            let p = t1.probabilities(&ch)?;
            let q = t2.probabilities(&ch)?;
            let mu = config
                .alpha_beta_pairs
                .iter()
                .map(|&(a, b)| mu_report(&p, &q, da, c, a, b).map(|r| r.slack))
                .collect::<Result<Vec<_>>>()?;
            let uur = crate::majorization::uur_check(&p, &q, &bounds, config.tolerances.uur)?;
            Ok(SampleOutcome {
                mu,
                sum: uur.direct_sum,
                product: uur.direct_product,
                shannon_sum: shannon_entropy(p.entries()) + shannon_entropy(q.entries()),
            })
        })
        .collect::<Result<_>>()?;
    let sampling_done = Instant::now();

    let tol = config.tolerances;
    let mut violations: Vec<(String, usize, f64)> = Vec::new();
    let mut mu_relation: Vec<MuSummary> = config
        .alpha_beta_pairs
        .iter()
        .map(|&(alpha, beta)| MuSummary {
            alpha,
            beta,
            passed: 0,
            failed: 0,
            worst_slack: f64::INFINITY,
            worst_sample: 0,
        })
        .collect();
    let empty_chain = ChainSummary {
        passed: 0,
        failed: 0,
        worst_vs_bound: f64::INFINITY,
        worst_vs_flat: f64::INFINITY,
        worst_sample: 0,
        flat_vs_bound: f64::INFINITY,
    };
    let (mut sum_chain, mut product_chain) = (empty_chain, empty_chain);
    let sum_bound = shannon_entropy(&bounds.s_flat);
    let product_bound = shannon_entropy(&bounds.t_flat);
    let mut shannon = SchurSummary {
        sum_bound,
        product_bound,
        worst_sum_slack: f64::INFINITY,
        worst_product_slack: f64::INFINITY,
        failed: 0,
    };
    let mut records = Vec::new();

    for (i, o) in outcomes.iter().enumerate() {
        for (summary, &slack) in mu_relation.iter_mut().zip(&o.mu) {
            if slack < summary.worst_slack {
                summary.worst_slack = slack;
                summary.worst_sample = i;
            }
            if slack >= -tol.mu {
                summary.passed += 1;
            } else {
                summary.failed += 1;
                violations.push((format!("mu[alpha={}, beta={}]", summary.alpha, summary.beta), i, slack));
            }
        }
        for (name, summary, chain) in [("direct_sum", &mut sum_chain, &o.sum), ("direct_product", &mut product_chain, &o.product)] {
            if chain.worst() < summary.worst_vs_bound.min(summary.worst_vs_flat) {
                summary.worst_sample = i;
            }
            summary.worst_vs_bound = summary.worst_vs_bound.min(chain.vs_bound.slack);
            summary.worst_vs_flat = summary.worst_vs_flat.min(chain.vs_flat.slack);
            summary.flat_vs_bound = summary.flat_vs_bound.min(chain.flat_vs_bound.slack);
            if chain.holds(tol.uur) {
                summary.passed += 1;
            } else {
                summary.failed += 1;
                violations.push((name.to_string(), i, chain.worst().min(chain.flat_vs_bound.slack)));
            }
        }
        // H(p) + H(q) = H(p⊗q) >= H(F(t)), and likewise for p⊕q and F(s).
        let sum_slack = o.shannon_sum - sum_bound;
        let product_slack = o.shannon_sum - product_bound;
        shannon.worst_sum_slack = shannon.worst_sum_slack.min(sum_slack);
        shannon.worst_product_slack = shannon.worst_product_slack.min(product_slack);
        if sum_slack.min(product_slack) < -tol.mu {
            shannon.failed += 1;
            violations.push(("shannon".into(), i, sum_slack.min(product_slack)));
        }
        if config.record_samples {
            records.push(SampleRecord {
                sample: i,
                mu_slacks: o.mu.clone(),
                sum_slack: o.sum.worst(),
                product_slack: o.product.worst(),
                shannon_sum: o.shannon_sum,
            });
        }
    }

    let tightness = if config.tightness && !bounds.optimizers.is_empty() {
        let report = tightness_probe(t1, t2, &bounds)?;
        if report.max_gap > tol.tightness {
            for e in report.entries.iter().filter(|e| e.gap > tol.tightness) {
                violations.push((format!("tightness[k={}]", e.k), 0, -e.gap));
            }
        }
        Some(report)
    } else {
        None
    };
    let conjecture = if config.explore {
        let ec = ExploreConfig { seed: config.seed, samples: config.samples, env_dim: Some(env), terms: None };
        Some(conjecture_explore(t1, t2, &bounds, &overlap, &ec)?)
    } else {
        None
    };

    let total_violations = violations.len();
    let violations = violations
        .into_iter()
        .map(|(check, sample, slack)| {
            let ch = sample_channel(config.seed, sample as u64, da, db, env)?;
            Ok(Violation {
                check,
                sample,
                seed: config.seed,
                stream: sample as u64,
                slack,
                channel: ChannelJson::from_channel(&ch),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let timings = config.timings.then(|| Timings {
        bounds_seconds: (bounds_done - start).as_secs_f64(),
        sampling_seconds: (sampling_done - bounds_done).as_secs_f64(),
        total_seconds: start.elapsed().as_secs_f64(),
    });
    Ok(CampaignReport {
        config: config.clone(),
        log_base: 2.0,
        dims: [t1.d_r(), da, db],
        m: t1.outcomes(),
        n: t2.outcomes(),
        overlap_bound: overlap_bound(c),
        overlap,
        bounds,
        mu_relation,
        sum_chain,
        product_chain,
        shannon,
        tightness,
        conjecture,
        total_violations,
        violations,
        timings,
        samples: records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessEntry {
    pub k: usize,
    pub bound: f64,
    /// Top-`k` mass of `p ⊕ q` under the optimizer channel.
    pub achieved: f64,
    pub gap: f64,
    pub subset: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub entries: Vec<TightnessEntry>,
    pub max_gap: f64,
}

/// Runs each `k`'s primal optimizer channel through both testers and
/// compares the largest `k`-entry mass of `p ⊕ q` with `s_k`.
pub fn tightness_probe(t1: &Tester, t2: &Tester, bounds: &BoundVectors) -> Result<TightnessReport> {
    check_pair(t1, t2)?;
    let mut entries = Vec::with_capacity(bounds.s_cumulative.len());
    for k in 1..=bounds.s_cumulative.len() {
        let j = bounds.optimizer(k)?;
        let ch = QuantumChannel::from_choi(j.clone(), t1.d_a(), t1.d_b())?;
        let pq = t1.probabilities(&ch)?.direct_sum(&t2.probabilities(&ch)?);
        let mut sorted = pq.entries().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let achieved = prefix_sums(&sorted)[k - 1];
        let bound = bounds.s_cumulative[k - 1];
        entries.push(TightnessEntry { k, bound, achieved, gap: bound - achieved, subset: bounds.argmax_subsets[k - 1].clone() });
    }
    let max_gap = entries.iter().map(|e| e.gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(TightnessReport { entries, max_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub seed: u64,
    pub samples: usize,
    pub env_dim: Option<usize>,
    /// Number of terms in the overlap sum; `(m+1)(n+1) - 1` when absent.
    pub terms: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub sorted_overlaps: Vec<f64>,
    /// Right-hand side after `K = 0, 1, 2, ...` terms.
    pub rhs_by_terms: Vec<f64>,
    pub terms: usize,
    pub rhs: f64,
    /// Terms are dropped from the first `c_{k+1} = 0` on.
    pub truncated_at: Option<usize>,
    /// Minimum of `H(p) + H(q)` over the sampled channels.
    pub min_lhs: f64,
    pub argmin_sample: usize,
    pub slack: f64,
    /// Same with the padded distributions of the overlap relation.
    pub min_lhs_padded: f64,
    pub slack_padded: f64,
    pub counterexample_candidate: bool,
    pub argmin_channel: ChannelJson,
    pub note: String,
}

/// `-2 log c_1 + Σ_{k=1}^{K} (2 - s_{2k}) log(c_k / c_{k+1})` for every
/// `K` up to `terms`, with `s_j = 2` for `j > m + n`.
pub fn conjectured_rhs(sorted_overlaps: &[f64], s_cumulative: &[f64], terms: usize) -> (Vec<f64>, Option<usize>) {
    let c = sorted_overlaps;
    let mut out = vec![overlap_bound(c[0])];
    let mut truncated = None;
    for k in 1..=terms.min(c.len().saturating_sub(1)) {
        let s2k = s_cumulative.get(2 * k - 1).copied().unwrap_or(2.0);
        let (ck, cnext) = (c[k - 1], c[k]);
        if cnext <= 0.0 {
            truncated = Some(k);
            break;
        }
        let last = *out.last().expect("nonempty");
        out.push(last + (2.0 - s2k) * (ck / cnext).log2());
    }
    (out, truncated)
}

pub fn conjecture_explore(
    t1: &Tester,
    t2: &Tester,
    bounds: &BoundVectors,
    overlap: &OverlapTable,
    config: &ExploreConfig,
) -> Result<ConjectureReport> {
    check_pair(t1, t2)?;
    let sorted_overlaps = overlap.sorted_entries();
    let terms = config.terms.unwrap_or(sorted_overlaps.len() - 1);
    let (rhs_by_terms, truncated_at) = conjectured_rhs(&sorted_overlaps, &bounds.s_cumulative, terms);
    let rhs = *rhs_by_terms.last().expect("nonempty");
    let (da, db) = (t1.d_a(), t1.d_b());
    let env = config.env_dim.unwrap_or(da * db);

    let lhs: Vec<(f64, f64)> = (0..config.samples.max(1))
        .into_par_iter()
        .map(|i| {
            let ch = sample_channel(config.seed, i as u64, da, db, env)?;
            let p = t1.probabilities(&ch)?;
            let q = t2.probabilities(&ch)?;
            let raw = shannon_entropy(p.entries()) + shannon_entropy(q.entries());
            let padded = shannon_entropy(p.padded(da).entries()) + shannon_entropy(q.padded(da).entries());
            Ok((raw, padded))
        })
        .collect::<Result<_>>()?;
    let (mut argmin_sample, mut min_lhs, mut min_lhs_padded) = (0, f64::INFINITY, f64::INFINITY);
    for (i, &(raw, padded)) in lhs.iter().enumerate() {
        if raw < min_lhs {
            min_lhs = raw;
            argmin_sample = i;
        }
        min_lhs_padded = min_lhs_padded.min(padded);
    }
    let slack = min_lhs - rhs;
    let slack_padded = min_lhs_padded - rhs;
    let argmin_channel = ChannelJson::from_channel(&sample_channel(config.seed, argmin_sample as u64, da, db, env)?);
    Ok(ConjectureReport {
        sorted_overlaps,
        rhs_by_terms,
        terms,
        rhs,
        truncated_at,
        min_lhs,
        argmin_sample,
        slack,
        min_lhs_padded,
        slack_padded,
        counterexample_candidate: slack < -1e-7,
        argmin_channel,
        note: "s_j for j > m+n is read as 2; the sum stops at the first zero overlap c_{k+1}; \
               a negative slack is a candidate only, not a disproof"
            .into(),
    })
}

/// Agreement between the process pipeline on state-preparation channels
/// and the direct state computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCaseReport {
    pub states: usize,
    pub max_probability_deviation: f64,
    pub overlap_process: f64,
    pub overlap_state: f64,
    pub overlap_bound: f64,
    pub s_process: Vec<f64>,
    pub s_state: Vec<f64>,
    pub max_s_deviation: f64,
    pub max_t_deviation: f64,
    pub min_mu_slack: f64,
    pub max_deviation: f64,
    pub consistent: bool,
}

pub fn state_case_regression(povm1: &Povm, povm2: &Povm, states: &[DensityOperator]) -> Result<StateCaseReport> {
    if povm1.dim() != povm2.dim() {
        return Err(dim_err(format!("POVMs act on dims {} and {}", povm1.dim(), povm2.dim())));
    }
    let trivial = DensityOperator::new(Hermitian::identity(1))?;
    let t1 = Tester::without_reference(trivial.clone(), povm1.clone())?;
    let t2 = Tester::without_reference(trivial, povm2.clone())?;

    let mut max_probability_deviation: f64 = 0.0;
    let mut min_mu_slack = f64::INFINITY;
    let overlap = overlap_table(&t1.extend()?, &t2.extend()?, false)?;
    for rho in states {
        let ch = state_prep_channel(rho);
        for (t, povm) in [(&t1, povm1), (&t2, povm2)] {
            let p = t.probabilities(&ch)?;
            for (px, m) in p.entries().iter().zip(povm.effects()) {
                max_probability_deviation = max_probability_deviation.max((px - m.inner(rho.operator())).abs());
            }
        }
        let p = ProbVector::new(povm1.effects().iter().map(|m| m.inner(rho.operator())).collect(), 1.0)?;
        let q = ProbVector::new(povm2.effects().iter().map(|m| m.inner(rho.operator())).collect(), 1.0)?;
        for (a, b) in default_order_pairs() {
            min_mu_slack = min_mu_slack.min(mu_report(&p, &q, 1, overlap.max_overlap, a, b)?.slack);
        }
    }

    let roots1 = povm1.effects().iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    let roots2 = povm2.effects().iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    let overlap_state = roots1
        .iter()
        .flat_map(|a| roots2.iter().map(move |b| operator_norm(&(a.matrix() * b.matrix()))))
        .fold(0.0, f64::max);

    let pool = EffectPool::from_testers(&t1, &t2)?;
    let bounds = bound_vectors(&pool, &BoundOptions::default())?;
    let effects: Vec<&Hermitian> = povm1.effects().iter().chain(povm2.effects()).collect();
    let mut s_state = Vec::with_capacity(effects.len());
    for k in 1..=effects.len() {
        let best = subsets(effects.len(), k)
            .iter()
            .map(|s| s.iter().fold(Hermitian::zeros(povm1.dim()), |acc, &z| acc.add(effects[z])).max_eig())
            .fold(0.0, f64::max);
        let prev = s_state.last().copied().unwrap_or(0.0);
        s_state.push(f64::max(best, prev));
    }
    let t_state = t_cumulative(&s_state, povm1.len() * povm2.len());
    let max_dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max_s_deviation = max_dev(&bounds.s_cumulative, &s_state);
    let max_t_deviation = max_dev(&bounds.t_cumulative, &t_state);
    let overlap_deviation = (overlap.max_overlap - overlap_state).abs();
    let max_deviation = max_probability_deviation.max(max_s_deviation).max(max_t_deviation).max(overlap_deviation);
    Ok(StateCaseReport {
        states: states.len(),
        max_probability_deviation,
        overlap_process: overlap.max_overlap,
        overlap_state,
        overlap_bound: overlap_bound(overlap.max_overlap),
        s_process: bounds.s_cumulative,
        s_state,
        max_s_deviation,
        max_t_deviation,
        min_mu_slack,
        max_deviation,
        consistent: max_deviation <= 1e-9,
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u64..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}
