//! Command-line driver. Exit codes: 0 success, 1 domain failure or
//! violation, 2 input error.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::entropy::overlap_bound;
use crate::error::Error;
use crate::harness::{
    conjecture_explore, random_tester_pair, run_verification, CampaignConfig, CampaignReport, ConjectureReport,
    ExploreConfig, Tolerances,
};
use crate::io::{load, to_json, InputDocument, Loaded, ObjectDiagnostic, OperatorJson, FORMAT_VERSION};
use crate::majorization::{
    bound_vectors, flatness_trace, lattice_bounds, schur_concave_eval, BoundOptions, BoundVectors, EffectPool,
    FlatnessStep, Functional, SortedVector, DEFAULT_ENUMERATION_CAP,
};
use crate::tester::{overlap_table, OverlapTable, Tester};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "procunc", version, about = "Uncertainty relations for quantum processes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Logarithm base for every reported entropy.
    #[arg(long, global = true, default_value_t = 2.0)]
    pub log_base: f64,
    /// Tolerance override, `mu=1e-7`, `uur=1e-8` or `tightness=1e-6`; repeatable.
    #[arg(long = "tol", global = true, value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    /// Largest effect pool `m + n` enumerated exhaustively.
    #[arg(long, global = true)]
    pub enumeration_cap: Option<usize>,
    /// Leave the complement effects out of the overlap maximum.
    #[arg(long, global = true)]
    pub overlap_exclude_complement: bool,
    /// Worker threads; 0 picks automatically.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Campaign seed.
    #[arg(long, global = true, env = "PROCUNC_SEED")]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate every object in a document.
    Validate { file: String },
    /// Overlap bound and majorization bound vectors for two testers.
    Bounds {
        file: String,
        /// Tester names, `A,B`.
        #[arg(long, value_delimiter = ',')]
        testers: Option<Vec<String>>,
        /// Schur-concave functionals to evaluate on the bounds.
        #[arg(long, value_delimiter = ',', default_value = "shannon")]
        functional: Vec<String>,
    },
    /// Monte-Carlo verification over random channels.
    Verify {
        file: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        testers: Option<Vec<String>>,
        /// Use the bound vectors of a previous `bounds` report.
        #[arg(long)]
        bounds: Option<String>,
        /// Per-sample slacks as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Include wall-clock timings (makes the report non-reproducible).
        #[arg(long)]
        timings: bool,
        /// Also run the sorted-overlap explorer.
        #[arg(long)]
        explore: bool,
    },
    /// Lattice bounds and flatness of probability vectors.
    Lattice {
        /// Comma-separated entries; repeat for several vectors.
        #[arg(long = "vector", value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
        vectors: Vec<f64>,
        /// Vector lengths when several `--vector` flags are given (filled in automatically).
        #[arg(skip)]
        lengths: Vec<usize>,
        /// JSON file with `{"vectors": [[...], ...]}`.
        #[arg(long)]
        file: Option<String>,
    },
    /// Evaluate the sorted-overlap Shannon bound against sampled channels.
    Explore {
        file: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        testers: Option<Vec<String>>,
        /// Number of overlap terms; defaults to `(m+1)(n+1) - 1`.
        #[arg(long)]
        terms: Option<usize>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(msg: impl std::fmt::Display) -> Self {
        Self { code: EXIT_INPUT, message: msg.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: EXIT_DOMAIN, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Scalar relations from one Schur-concave functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarRelation {
    pub functional: String,
    /// `Φ(F(s))`, a lower bound on `Φ(p ⊕ q)`.
    pub sum_flat: f64,
    pub sum: f64,
    /// `Φ(F(t))`, a lower bound on `Φ(p ⊗ q)`.
    pub product_flat: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub version: String,
    pub log_base: f64,
    pub testers: [String; 2],
    /// `[d_R, d_A, d_B]`.
    pub dims: [usize; 3],
    pub m: usize,
    pub n: usize,
    pub overlap: OverlapTable,
    /// `-2 log c`.
    #[serde(with = "crate::io::extended_float")]
    pub overlap_bound: f64,
    pub bounds: BoundVectors,
    pub scalar_relations: Vec<ScalarRelation>,
    /// Primal optimizer Choi matrix per `k`.
    pub optimizers: Vec<OperatorJson>,
}

impl BoundReport {
    /// Bound vectors with the optimizers restored.
    pub fn bound_vectors(&self) -> crate::error::Result<BoundVectors> {
        let mut b = self.bounds.clone();
        b.optimizers = self.optimizers.iter().map(OperatorJson::hermitian).collect::<crate::error::Result<_>>()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeInput {
    pub vector: Vec<f64>,
    pub flatness: Vec<f64>,
    pub flatness_trace: Vec<FlatnessStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    pub inputs: Vec<LatticeInput>,
    /// `a_S`, the greatest lower bound.
    pub glb: Vec<f64>,
    /// `b_S`.
    pub b: Vec<f64>,
    /// `F(b_S)`, the least upper bound.
    pub lub: Vec<f64>,
    pub flatness_trace: Vec<FlatnessStep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorFile {
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    valid: bool,
    objects: Vec<ObjectDiagnostic>,
}

fn read_input(path: &str) -> CliResult<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::input(format!("reading stdin: {e}")))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| Failure::input(format!("reading {path}: {e}")))
    }
}

fn read_document(path: &str) -> CliResult<InputDocument> {
    InputDocument::parse(&read_input(path)?).map_err(Failure::input)
}

/// Parses, then requires every object to validate.
fn load_valid(path: &str) -> CliResult<(InputDocument, Loaded)> {
    let doc = read_document(path)?;
    let (loaded, diags) = load(&doc);
    if let Some(bad) = diags.iter().find(|d| !d.ok) {
        return Err(Failure {
            code: EXIT_DOMAIN,
            message: format!(
                "{} {:?} is invalid: {}",
                bad.kind,
                bad.name,
                bad.error.as_deref().unwrap_or("validation failed")
            ),
        });
    }
    Ok((doc, loaded))
}

fn tolerances(global: &GlobalOpts) -> CliResult<Tolerances> {
    let mut tol = Tolerances::default();
    for item in &global.tol {
        let (key, value) = item.split_once('=').ok_or_else(|| Failure::input(format!("--tol expects KEY=VALUE, got {item:?}")))?;
        let v: f64 = value.parse().map_err(|_| Failure::input(format!("--tol value {value:?} is not a number")))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::input(format!("--tol value {v} must be finite and nonnegative")));
        }
        match key {
            "mu" => tol.mu = v,
            "uur" => tol.uur = v,
            "tightness" => tol.tightness = v,
            other => return Err(Failure::input(format!("unknown tolerance {other:?} (expected mu, uur or tightness)"))),
        }
    }
    Ok(tol)
}

/// Factor converting bits to the requested base.
fn log_factor(base: f64) -> CliResult<f64> {
    if !(base > 0.0 && base.is_finite() && base != 1.0) {
        return Err(Failure::input(format!("--log-base must be positive and not 1, got {base}")));
    }
    Ok(1.0 / base.log2())
}

/// Picks two testers: explicit names, the campaign's names, random
/// testers from the campaign, or the only two testers in the document.
fn select_testers(
    names: Option<&[String]>,
    doc: &InputDocument,
    loaded: &Loaded,
    seed: u64,
) -> CliResult<([String; 2], Tester, Tester)> {
    let by_name = |pair: &[String]| -> CliResult<([String; 2], Tester, Tester)> {
        if pair.len() != 2 {
            return Err(Failure::input(format!("expected two tester names, got {}", pair.len())));
        }
        let get = |n: &String| {
            loaded.testers.get(n).cloned().ok_or_else(|| Failure::input(format!("unknown tester {n:?}")))
        };
        Ok(([pair[0].clone(), pair[1].clone()], get(&pair[0])?, get(&pair[1])?))
    };
    if let Some(names) = names {
        return by_name(names);
    }
    if let Some(c) = &doc.campaign {
        if let Some(names) = &c.testers {
            return by_name(names);
        }
        if let Some(r) = &c.random_testers {
            let (t1, t2) = random_tester_pair(r.dims, r.m, r.n, seed)?;
            return Ok((["random-1".into(), "random-2".into()], t1, t2));
        }
    }
    if loaded.testers.len() == 2 {
        let names: Vec<String> = loaded.testers.keys().cloned().collect();
        return by_name(&names);
    }
    Err(Failure::input("choose two testers with --testers A,B"))
}

fn resolve_seed(global: &GlobalOpts, doc: &InputDocument) -> u64 {
    global.seed.or_else(|| doc.campaign.as_ref().and_then(|c| c.seed)).unwrap_or(0)
}

fn enumeration_cap(global: &GlobalOpts, doc: &InputDocument) -> usize {
    global
        .enumeration_cap
        .or_else(|| doc.campaign.as_ref().and_then(|c| c.enumeration_cap))
        .unwrap_or(DEFAULT_ENUMERATION_CAP)
}

fn emit<T: Serialize>(global: &GlobalOpts, value: &T) -> CliResult<()> {
    let text = to_json(value);
    match &global.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::input(format!("writing {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::input(format!("writing stdout: {e}")))
        }
    }
}

fn cmd_validate(global: &GlobalOpts, file: &str) -> CliResult<i32> {
    let doc = read_document(file)?;
    let (_, objects) = load(&doc);
    let valid = objects.iter().all(|d| d.ok);
    for d in objects.iter().filter(|d| !d.ok) {
        eprintln!("{} {:?}: {}", d.kind, d.name, d.error.as_deref().unwrap_or("invalid"));
    }
    emit(global, &ValidationReport { valid, objects })?;
    Ok(if valid { EXIT_OK } else { EXIT_DOMAIN })
}

pub fn compute_bound_report(
    names: [String; 2],
    t1: &Tester,
    t2: &Tester,
    cap: usize,
    exclude_complement: bool,
    functionals: &[Functional],
    log_base: f64,
) -> crate::error::Result<BoundReport> {
    let factor = 1.0 / log_base.log2();
    let overlap = overlap_table(&t1.extend()?, &t2.extend()?, exclude_complement)?;
    let pool = EffectPool::from_testers(t1, t2)?;
    let mut bounds = bound_vectors(&pool, &BoundOptions { enumeration_cap: cap, ..Default::default() })?;
    let optimizers =
        bounds.optimizers.iter().map(|j| OperatorJson::from_hermitian(j, &[t1.d_a(), t1.d_b()])).collect();
    let mut scalar_relations = Vec::with_capacity(functionals.len());
    for &f in functionals {
        scalar_relations.push(ScalarRelation {
            functional: f.to_string(),
            sum_flat: schur_concave_eval(f, &bounds.s_flat)? * factor,
            sum: schur_concave_eval(f, &bounds.s)? * factor,
            product_flat: schur_concave_eval(f, &bounds.t_flat)? * factor,
            product: schur_concave_eval(f, &bounds.t)? * factor,
        });
    }
    bounds.hmin.iter_mut().for_each(|h| *h *= factor);
    Ok(BoundReport {
        version: FORMAT_VERSION.into(),
        log_base,
        testers: names,
        dims: [t1.d_r(), t1.d_a(), t1.d_b()],
        m: t1.outcomes(),
        n: t2.outcomes(),
        overlap_bound: overlap_bound(overlap.max_overlap) * factor,
        overlap,
        bounds,
        scalar_relations,
        optimizers,
    })
}

fn cmd_bounds(global: &GlobalOpts, file: &str, testers: Option<&[String]>, functional: &[String]) -> CliResult<i32> {
    log_factor(global.log_base)?;
    let functionals =
        functional.iter().map(|f| f.parse::<Functional>()).collect::<Result<Vec<_>, _>>().map_err(Failure::input)?;
    let (doc, loaded) = load_valid(file)?;
    let seed = resolve_seed(global, &doc);
    let (names, t1, t2) = select_testers(testers, &doc, &loaded, seed)?;
    let report = compute_bound_report(
        names,
        &t1,
        &t2,
        enumeration_cap(global, &doc),
        global.overlap_exclude_complement,
        &functionals,
        global.log_base,
    )?;
    emit(global, &report)?;
    Ok(EXIT_OK)
}

fn rescale_campaign(report: &mut CampaignReport, factor: f64, base: f64) {
    report.log_base = base;
    report.overlap_bound *= factor;
    report.bounds.hmin.iter_mut().for_each(|h| *h *= factor);
    for t in &mut report.mu_relation {
        t.worst_slack *= factor;
    }
    let s = &mut report.shannon;
    s.sum_bound *= factor;
    s.product_bound *= factor;
    s.worst_sum_slack *= factor;
    s.worst_product_slack *= factor;
    if let Some(c) = &mut report.conjecture {
        rescale_conjecture(c, factor);
    }
}

fn rescale_conjecture(c: &mut ConjectureReport, factor: f64) {
    c.rhs_by_terms.iter_mut().for_each(|v| *v *= factor);
    c.rhs *= factor;
    c.min_lhs *= factor;
    c.slack *= factor;
    c.min_lhs_padded *= factor;
    c.slack_padded *= factor;
}

fn write_csv(path: &Path, report: &CampaignReport) -> CliResult<()> {
    let fail = |e: csv::Error| Failure::input(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    let mut header = vec!["sample".to_string()];
    for (a, b) in &report.config.alpha_beta_pairs {
        header.push(format!("mu_slack_{a}_{b}"));
    }
    header.extend(["sum_slack", "product_slack", "shannon_sum"].map(String::from));
    w.write_record(&header).map_err(fail)?;
    for r in &report.samples {
        let mut row = vec![r.sample.to_string()];
        row.extend(r.mu_slacks.iter().map(|v| format!("{v:.16e}")));
        row.extend([r.sum_slack, r.product_slack, r.shannon_sum].map(|v| format!("{v:.16e}")));
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::input(format!("writing {}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    global: &GlobalOpts,
    file: &str,
    samples: Option<usize>,
    testers: Option<&[String]>,
    bounds_file: Option<&str>,
    csv: Option<&Path>,
    timings: bool,
    explore: bool,
) -> CliResult<i32> {
    let factor = log_factor(global.log_base)?;
    let (doc, loaded) = load_valid(file)?;
    let seed = resolve_seed(global, &doc);
    let campaign = doc.campaign.clone();
    let mut config = CampaignConfig {
        seed,
        enumeration_cap: enumeration_cap(global, &doc),
        exclude_complement: global.overlap_exclude_complement,
        tolerances: tolerances(global)?,
        record_samples: csv.is_some(),
        timings,
        ..Default::default()
    };
    if let Some(c) = &campaign {
        config.samples = c.samples.unwrap_or(config.samples);
        config.env_dim = c.env_dim;
        if let Some(p) = &c.alpha_beta_pairs {
            config.alpha_beta_pairs = p.clone();
        }
        config.explore = c.explore.unwrap_or(false);
    }
    config.samples = samples.unwrap_or(config.samples);
    config.explore |= explore;
    config.validate().map_err(Failure::input)?;

    let (_, t1, t2) = select_testers(testers, &doc, &loaded, seed)?;
    let precomputed = match bounds_file {
        Some(path) => {
            let report: BoundReport = crate::io::from_json(&read_input(path)?)
                .map_err(|e| Failure::input(format!("malformed bound report {path}: {e}")))?;
            Some(report.bound_vectors()?)
        }
        None => None,
    };
    let mut report = run_verification(&config, &t1, &t2, precomputed)?;
    if let Some(path) = csv {
        write_csv(path, &report)?;
    }
    rescale_campaign(&mut report, factor, global.log_base);
    for v in &report.violations {
        eprintln!("violation: {} at sample {} (seed {}, stream {}), slack {:.3e}", v.check, v.sample, v.seed, v.stream, v.slack);
    }
    emit(global, &report)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_DOMAIN })
}

fn lattice_vectors(vectors: &[f64], lengths: &[usize], file: Option<&str>) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let mut rest = vectors;
    for &len in lengths {
        let (head, tail) = rest.split_at(len);
        out.push(head.to_vec());
        rest = tail;
    }
    if let Some(path) = file {
        let f: VectorFile = crate::io::from_json(&read_input(path)?)
            .map_err(|e| Failure::input(format!("malformed vector file {path}: {e}")))?;
        out.extend(f.vectors);
    }
    if out.is_empty() || out.iter().any(Vec::is_empty) {
        return Err(Failure::input("give at least one nonempty vector with --vector or --file"));
    }
    if out.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Failure::input("vector entries must be finite"));
    }
    Ok(out)
}

fn cmd_lattice(global: &GlobalOpts, vectors: Vec<Vec<f64>>) -> CliResult<i32> {
    let inputs: Vec<LatticeInput> = vectors
        .iter()
        .map(|v| {
            let (f, trace) = flatness_trace(v);
            LatticeInput { vector: v.clone(), flatness: f.into_vec(), flatness_trace: trace }
        })
        .collect();
    let sorted = vectors.iter().map(|v| SortedVector::from_unsorted(v)).collect::<Result<Vec<_>, _>>()?;
    let lb = lattice_bounds(&sorted)?;
    emit(
        global,
        &LatticeReport {
            inputs,
            glb: lb.glb.into_vec(),
            b: lb.b,
            lub: lb.lub.into_vec(),
            flatness_trace: lb.flatness_trace,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_explore(
    global: &GlobalOpts,
    file: &str,
    samples: Option<usize>,
    testers: Option<&[String]>,
    terms: Option<usize>,
) -> CliResult<i32> {
    let factor = log_factor(global.log_base)?;
    let (doc, loaded) = load_valid(file)?;
    let seed = resolve_seed(global, &doc);
    let (_, t1, t2) = select_testers(testers, &doc, &loaded, seed)?;
    let campaign = doc.campaign.as_ref();
    let samples = samples.or_else(|| campaign.and_then(|c| c.samples)).unwrap_or(1000);
    if samples == 0 {
        return Err(Failure::input("samples must be at least 1"));
    }
    let overlap = overlap_table(&t1.extend()?, &t2.extend()?, global.overlap_exclude_complement)?;
    let pool = EffectPool::from_testers(&t1, &t2)?;
    let cap = enumeration_cap(global, &doc);
    let bounds = bound_vectors(&pool, &BoundOptions { enumeration_cap: cap, ..Default::default() })?;
    let config = ExploreConfig { seed, samples, env_dim: campaign.and_then(|c| c.env_dim), terms };
    let mut report = conjecture_explore(&t1, &t2, &bounds, &overlap, &config)?;
    rescale_conjecture(&mut report, factor);
    emit(global, &report)?;
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let g = &cli.global;
    tolerances(g)?;
    log_factor(g.log_base)?;
    if g.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(g.threads).build_global();
    }
    match &cli.command {
        Command::Validate { file } => cmd_validate(g, file),
        Command::Bounds { file, testers, functional } => cmd_bounds(g, file, testers.as_deref(), functional),
        Command::Verify { file, samples, testers, bounds, csv, timings, explore } => cmd_verify(
            g,
            file,
            *samples,
            testers.as_deref(),
            bounds.as_deref(),
            csv.as_deref(),
            *timings,
            *explore,
        ),
        Command::Lattice { vectors, lengths, file } => cmd_lattice(g, lattice_vectors(vectors, lengths, file.as_deref())?),
        Command::Explore { file, samples, testers, terms } => cmd_explore(g, file, *samples, testers.as_deref(), *terms),
    }
}

/// Lengths of each `--vector` occurrence, which clap flattens into one list.
fn vector_lengths(args: &[OsString]) -> Vec<usize> {
    let mut lengths = Vec::new();
    let mut iter = args.iter().map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = iter.next() {
        let value = if a == "--vector" {
            iter.next()
        } else {
            a.strip_prefix("--vector=").map(str::to_string)
        };
        if let Some(v) = value {
            lengths.push(v.split(',').count());
        }
    }
    lengths
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let mut cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Command::Lattice { lengths, .. } = &mut cli.command {
        *lengths = vector_lengths(&args);
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
