//! Property checks shared by the `properties` and `acceptance` targets.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use procunc::channels::{choi_from_kraus, kraus_from_choi, random_cptp};
use procunc::entropy::{hmin_exp_dual, hmin_normalized_identity_check, renyi_entropy, solve_min_entropy, SdpOptions};
use procunc::majorization::{flatness, lattice_bounds, majorizes, prefix_sums, SortedVector};
use procunc::opalg::{
    max_abs_diff, operator_norm, partial_transpose, psd_sqrt, tensor, CMatrix, Hermitian, SystemShape, C64,
};

pub type PropResult = Result<(), String>;

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn report<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> PropResult {
    r.map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// Wishart `G G†` with `rank` columns.
pub fn random_psd(d: usize, rank: usize, rng: &mut ChaCha20Rng) -> Hermitian {
    let g = gaussian(d, rank, rng);
    Hermitian::symmetrize(&g * g.adjoint())
}

fn nonneg_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => 0.0..1.0f64, 1 => Just(0.0)], 1..9)
}

fn normalized_vec() -> impl Strategy<Value = Vec<f64>> {
    nonneg_vec().prop_filter_map("zero vector", |v| {
        let t: f64 = v.iter().sum();
        (t > 1e-6).then(|| v.iter().map(|x| x / t).collect())
    })
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Idempotence, prefix domination, total preservation, sorted output.
pub fn flatness_properties(r: &mut TestRunner) -> PropResult {
    report(r.run(&nonneg_vec(), |x| {
        let f = flatness(&x);
        let fx = f.entries().to_vec();
        ensure(fx.windows(2).all(|w| w[0] >= w[1] - 1e-12), || format!("not sorted: {fx:?}"))?;
        let total: f64 = x.iter().sum();
        ensure((fx.iter().sum::<f64>() - total).abs() <= 1e-12, || "total changed".into())?;
        for (a, b) in prefix_sums(&fx).iter().zip(prefix_sums(&x)) {
            ensure(*a >= b - 1e-12, || format!("prefix {a} < {b} for {x:?}"))?;
        }
        let ffx = flatness(&fx);
        ensure(max_diff(ffx.entries(), &fx) <= 1e-12, || format!("not idempotent on {x:?}"))?;
        let sorted = sorted_desc(&x);
        ensure(max_diff(flatness(&sorted).entries(), &sorted) <= 1e-12, || "sorted input moved".into())
    }))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `T`-transform mixing two entries; the result is majorized by the input.
fn t_transform(x: &[f64], i: usize, j: usize, lambda: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    let (a, b) = (x[i], x[j]);
    y[i] = lambda * a + (1.0 - lambda) * b;
    y[j] = lambda * b + (1.0 - lambda) * a;
    y
}

/// Reflexivity, antisymmetry on sorted vectors, transitivity on chains
/// built from `T`-transforms and on arbitrary triples.
pub fn majorization_properties(r: &mut TestRunner) -> PropResult {
    let strat = (normalized_vec(), 0.0..1.0f64, 0.0..1.0f64, any::<(usize, usize, usize, usize)>(), normalized_vec());
    report(r.run(&strat, |(x, l1, l2, (i, j, k, l), w)| {
        let n = x.len();
        ensure(majorizes(&x, &x), || "not reflexive".into())?;
        let y = t_transform(&x, i % n, j % n, l1);
        let z = t_transform(&y, k % n, l % n, l2);
        ensure(majorizes(&x, &y) && majorizes(&y, &z), || format!("T-transform broke order: {x:?} {y:?} {z:?}"))?;
        ensure(majorizes(&x, &z), || "chain not transitive".into())?;
        let (xs, ys) = (sorted_desc(&x), sorted_desc(&y));
        if majorizes(&xs, &ys) && majorizes(&ys, &xs) {
            ensure(max_diff(&xs, &ys) <= 1e-8, || format!("antisymmetry fails: {xs:?} {ys:?}"))?;
        }
        if w.len() == n && majorizes(&w, &x) && majorizes(&x, &z) {
            ensure(majorizes(&w, &z), || "triple not transitive".into())?;
        }
        // lattice bounds sit on either side of every member
        let set = [SortedVector::from_unsorted(&x).unwrap(), SortedVector::from_unsorted(&z).unwrap()];
        let lb = lattice_bounds(&set).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for v in &set {
            ensure(majorizes(lb.lub.entries(), v.entries()) && majorizes(v.entries(), lb.glb.entries()), || {
                format!("lattice bounds misplaced for {x:?}, {z:?}")
            })?;
        }
        Ok(())
    }))
}

/// `H_α` is nonincreasing in `α`.
pub fn renyi_monotonicity(r: &mut TestRunner) -> PropResult {
    let alphas = [0.0, 0.3, 0.5, 0.99, 1.0, 1.01, 2.0, 3.5, 10.0, f64::INFINITY];
    report(r.run(&normalized_vec(), |p| {
        let h: Vec<f64> = alphas.iter().map(|&a| renyi_entropy(&p, a).unwrap()).collect();
        for (w, a) in h.windows(2).zip(alphas.windows(2)) {
            ensure(w[0] >= w[1] - 1e-10, || format!("H_{} = {} < H_{} = {} on {p:?}", a[0], w[0], a[1], w[1]))?;
        }
        Ok(())
    }))
}

/// `(X^{T_k})^{T_k} = X` and `(X^{T_A})^{T_B} = Xᵀ`.
pub fn partial_transpose_involution(r: &mut TestRunner) -> PropResult {
    report(r.run(&(1usize..4, 1usize..4, any::<u64>()), |(a, b, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = gaussian(a * b, a * b, &mut rng);
        let shape = SystemShape::new(vec![a, b]).unwrap();
        for k in 0..2 {
            let back = partial_transpose(&partial_transpose(&x, &shape, k).unwrap(), &shape, k).unwrap();
            ensure(max_abs_diff(&back, &x) == 0.0, || format!("involution fails on factor {k}"))?;
        }
        let full = partial_transpose(&partial_transpose(&x, &shape, 0).unwrap(), &shape, 1).unwrap();
        ensure(max_abs_diff(&full, &x.transpose()) == 0.0, || "T_A T_B is not the transpose".into())
    }))
}

/// `H_min(λW) = H_min(W) - log λ` and `G = Tr(G)·Ĝ` for the normalized operator.
pub fn hmin_scaling(r: &mut TestRunner) -> PropResult {
    report(r.run(&(2usize..4, 2usize..4, 0.05..20.0f64, any::<u64>()), |(da, db, lambda, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rank = 1 + (seed as usize) % (da * db);
        let w = random_psd(da * db, rank, &mut rng);
        let shape = SystemShape::new(vec![da, db]).unwrap();
        let h = hmin_exp_dual(&w, &shape).unwrap().hmin();
        let hl = hmin_exp_dual(&w.scale(lambda), &shape).unwrap().hmin();
        ensure((hl - (h - lambda.log2())).abs() <= 1e-6, || format!("H_min(λW) = {hl}, H_min(W) - log λ = {}", h - lambda.log2()))?;
        let s = hmin_normalized_identity_check(&w, &shape).unwrap();
        ensure(s.holds, || format!("normalized identity fails: {s:?}"))
    }))
}

pub fn tensor_associativity(r: &mut TestRunner) -> PropResult {
    report(r.run(&(1usize..4, 1usize..4, 1usize..3, any::<u64>()), |(a, b, c, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (x, y, z) = (gaussian(a, a, &mut rng), gaussian(b, c, &mut rng), gaussian(c, b, &mut rng));
        let d = max_abs_diff(&tensor(&tensor(&x, &y), &z), &tensor(&x, &tensor(&y, &z)));
        ensure(d <= 1e-12, || format!("associativity off by {d}"))
    }))
}

pub fn psd_sqrt_squares_back(r: &mut TestRunner) -> PropResult {
    report(r.run(&(1usize..7, any::<u64>()), |(d, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = random_psd(d, 1 + (seed as usize) % d, &mut rng);
        let s = psd_sqrt(&p).unwrap();
        ensure(s.min_eig() >= -1e-12, || "square root not PSD".into())?;
        let d = max_abs_diff(&(s.matrix() * s.matrix()), p.matrix());
        ensure(d <= 1e-9 * p.max_eig().max(1.0), || format!("sqrt² off by {d}"))
    }))
}

pub fn norm_submultiplicative(r: &mut TestRunner) -> PropResult {
    report(r.run(&(1usize..6, any::<u64>()), |(d, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (a, b) = (gaussian(d, d, &mut rng), gaussian(d, d, &mut rng));
        let lhs = operator_norm(&(&a * &b));
        let rhs = operator_norm(&a) * operator_norm(&b);
        ensure(lhs <= rhs * (1.0 + 1e-12), || format!("‖AB‖ = {lhs} > {rhs}"))
    }))
}

/// `W ≤ W'` implies `value(W) ≤ value(W')`.
pub fn sdp_monotone(r: &mut TestRunner) -> PropResult {
    report(r.run(&(2usize..4, 2usize..4, any::<u64>()), |(da, db, seed)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = da * db;
        let w = random_psd(n, 1 + (seed as usize) % n, &mut rng);
        let extra = random_psd(n, 1, &mut rng).scale(0.1);
        let shape = SystemShape::new(vec![da, db]).unwrap();
        let opts = SdpOptions::default();
        let lo = solve_min_entropy(&w, &shape, &opts).unwrap();
        let hi = solve_min_entropy(&w.add(&extra), &shape, &opts).unwrap();
        // certified bracket: primal(W + P) >= primal(W) exactly, dual is an upper bound
        ensure(hi.dual_value >= lo.primal_value - 1e-9, || format!("{} < {}", hi.dual_value, lo.primal_value))?;
        ensure(hi.dual_value >= lo.dual_value - 1e-6, || format!("dual value decreased: {} < {}", hi.dual_value, lo.dual_value))
    }))
}

/// Choi → Kraus → Choi is the identity on random channels.
pub fn choi_round_trip(r: &mut TestRunner) -> PropResult {
    report(r.run(&(1usize..4, 1usize..4, 1usize..5, any::<u64>()), |(din, dout, env, seed)| {
        if dout * env < din {
            return Ok(());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ch = random_cptp(din, dout, env, &mut rng).unwrap();
        let kraus = kraus_from_choi(ch.choi(), din, dout).unwrap();
        let back = choi_from_kraus(&kraus, din, dout).unwrap();
        let d = max_abs_diff(back.matrix(), ch.choi().matrix());
        ensure(d <= 1e-10, || format!("round trip off by {d}"))
    }))
}

pub type Property = (&'static str, fn(&mut TestRunner) -> PropResult);

/// The suite required for acceptance.
pub const CORE_PROPERTIES: [Property; 5] = [
    ("flatness", flatness_properties),
    ("majorization", majorization_properties),
    ("renyi-monotonicity", renyi_monotonicity),
    ("partial-transpose-involution", partial_transpose_involution),
    ("hmin-scaling", hmin_scaling),
];
