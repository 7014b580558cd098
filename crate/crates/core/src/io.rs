//! JSON interchange: operator encoding, the input document, and a
//! formatter that writes every float with 17 significant digits.

use std::collections::BTreeMap;
use std::io;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::channels::{validate_cptp, DensityOperator, Povm, QuantumChannel, IDENTITY_TOL, TRACE_TOL};
use crate::error::{Error, Result};
use crate::opalg::{hermiticity_deviation, CMatrix, Hermitian, SystemShape, C64, PSD_TOL};
use crate::tester::Tester;

pub const FORMAT_VERSION: &str = "1";

/// Pretty JSON with floats as `{:.16e}`, which round-trips every `f64`.
struct Float17<'a>(PrettyFormatter<'a>);

impl Formatter for Float17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Float17(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> serde_json::Result<T> {
    serde_json::from_str(text)
}

/// `f64` fields that may be infinite: written as `"inf"` / `"-inf"`.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Num(f64),
        Tag(String),
    }

    pub(crate) fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Tag("nan".into())
        } else if v > 0.0 {
            Repr::Tag("inf".into())
        } else {
            Repr::Tag("-inf".into())
        }
    }

    pub(crate) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Tag(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub mod extended_float_vec {
    use super::extended_float::{from_repr, to_repr, Repr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
    }
}

/// Order pairs such as `(∞, 1/2)`.
pub mod extended_float_pairs {
    use super::extended_float::{from_repr, to_repr, Repr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|(a, b)| (to_repr(*a), to_repr(*b))).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        Vec::<(Repr, Repr)>::deserialize(d)?
            .into_iter()
            .map(|(a, b)| Ok((from_repr(a)?, from_repr(b)?)))
            .collect()
    }
}

/// Row-major complex matrix as nested `[re, im]` arrays.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Invalid { what: "matrix", detail: "empty matrix".into() });
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Invalid { what: "matrix", detail: format!("row {i} has {} columns, expected {c}", rows[i].len()) });
    }
    Ok(CMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

/// An operator with its tensor-factor shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorJson {
    pub dims: Vec<usize>,
    pub matrix: MatrixJson,
}

impl OperatorJson {
    pub fn from_hermitian(op: &Hermitian, dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), matrix: matrix_to_json(op.matrix()) }
    }

    pub fn shape(&self) -> Result<SystemShape> {
        SystemShape::new(self.dims.clone())
    }

    pub fn raw(&self) -> Result<CMatrix> {
        let m = matrix_from_json(&self.matrix)?;
        let total: usize = self.dims.iter().product();
        if m.nrows() != total || m.ncols() != total {
            return Err(Error::Dimension(format!(
                "matrix is {}x{} but dims {:?} multiply to {total}",
                m.nrows(),
                m.ncols(),
                self.dims
            )));
        }
        Ok(m)
    }

    pub fn hermitian(&self) -> Result<Hermitian> {
        Hermitian::new(self.raw()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmJson {
    pub dims: Vec<usize>,
    pub effects: Vec<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choi: Option<OperatorJson>,
}

impl ChannelJson {
    pub fn from_channel(ch: &QuantumChannel) -> Self {
        Self {
            d_in: ch.d_in(),
            d_out: ch.d_out(),
            kraus: ch.kraus().map(|ks| ks.iter().map(matrix_to_json).collect()),
            choi: Some(OperatorJson::from_hermitian(ch.choi(), &[ch.d_in(), ch.d_out()])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TesterJson {
    /// Name of a state on `R ⊗ A` (or `A`).
    pub state: String,
    /// Name of a POVM on `R ⊗ B` (or `B`).
    pub povm: String,
}

/// Randomly drawn testers for a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTestersJson {
    /// `[d_R, d_A, d_B]`.
    pub dims: [usize; 3],
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignJson {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub env_dim: Option<usize>,
    #[serde(default, with = "opt_pairs", skip_serializing_if = "Option::is_none")]
    pub alpha_beta_pairs: Option<Vec<(f64, f64)>>,
    /// Names of the two testers to compare.
    #[serde(default)]
    pub testers: Option<[String; 2]>,
    #[serde(default)]
    pub random_testers: Option<RandomTestersJson>,
    #[serde(default)]
    pub enumeration_cap: Option<usize>,
    #[serde(default)]
    pub explore: Option<bool>,
}

mod opt_pairs {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<(f64, f64)>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::extended_float_pairs::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<(f64, f64)>>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::extended_float_pairs")] Vec<(f64, f64)>);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// The raw document as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDocument {
    pub version: String,
    #[serde(default)]
    pub states: BTreeMap<String, OperatorJson>,
    #[serde(default)]
    pub povms: BTreeMap<String, PovmJson>,
    #[serde(default)]
    pub channels: BTreeMap<String, ChannelJson>,
    #[serde(default)]
    pub testers: BTreeMap<String, TesterJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<CampaignJson>,
}

/// Failure to turn text into a document: malformed JSON, unknown version,
/// or a dangling name.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

impl InputDocument {
    pub fn parse(text: &str) -> std::result::Result<Self, InputError> {
        let doc: Self = from_json(text).map_err(|e| InputError(format!("malformed input: {e}")))?;
        if doc.version != FORMAT_VERSION {
            return Err(InputError(format!("unsupported version {:?} (expected {FORMAT_VERSION:?})", doc.version)));
        }
        for (name, t) in &doc.testers {
            if !doc.states.contains_key(&t.state) {
                return Err(InputError(format!("tester {name:?} refers to unknown state {:?}", t.state)));
            }
            if !doc.povms.contains_key(&t.povm) {
                return Err(InputError(format!("tester {name:?} refers to unknown POVM {:?}", t.povm)));
            }
        }
        if let Some(names) = doc.campaign.as_ref().and_then(|c| c.testers.as_ref()) {
            for n in names {
                if !doc.testers.contains_key(n) {
                    return Err(InputError(format!("campaign refers to unknown tester {n:?}")));
                }
            }
        }
        Ok(doc)
    }
}

/// Per-object validation outcome with the residuals that decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDiagnostic {
    pub kind: String,
    pub name: String,
    pub ok: bool,
    pub residuals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ObjectDiagnostic {
    fn new(kind: &str, name: &str) -> Self {
        Self { kind: kind.into(), name: name.into(), ok: true, residuals: BTreeMap::new(), error: None }
    }

    fn fail(&mut self, err: impl ToString) {
        self.ok = false;
        if self.error.is_none() {
            self.error = Some(err.to_string());
        }
    }
}

/// Validated objects, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub states: BTreeMap<String, DensityOperator>,
    pub povms: BTreeMap<String, Povm>,
    pub channels: BTreeMap<String, QuantumChannel>,
    pub testers: BTreeMap<String, Tester>,
}

fn min_eig_raw(m: &CMatrix) -> f64 {
    Hermitian::symmetrize(m.clone()).min_eig()
}

fn load_state(j: &OperatorJson, d: &mut ObjectDiagnostic) -> Option<DensityOperator> {
    let m = match j.raw() {
        Ok(m) => m,
        Err(e) => {
            d.fail(e);
            return None;
        }
    };
    let herm = hermiticity_deviation(&m);
    let lo = min_eig_raw(&m);
    let tr = (0..m.nrows()).map(|i| m[(i, i)].re).sum::<f64>();
    d.residuals.insert("hermiticity".into(), herm);
    d.residuals.insert("min_eigenvalue".into(), lo);
    d.residuals.insert("trace_deviation".into(), (tr - 1.0).abs());
    if lo < -PSD_TOL {
        d.fail(format!("state is not positive semidefinite (min eigenvalue {lo:.3e})"));
    }
    if (tr - 1.0).abs() > TRACE_TOL {
        d.fail(format!("state has trace {tr}"));
    }
    let built = j
        .shape()
        .and_then(|shape| DensityOperator::with_shape(Hermitian::new(m)?, shape));
    match built {
        Ok(s) => Some(s),
        Err(e) => {
            d.fail(e);
            None
        }
    }
}

fn load_povm(j: &PovmJson, d: &mut ObjectDiagnostic) -> Option<Povm> {
    let shape = match SystemShape::new(j.dims.clone()) {
        Ok(s) => s,
        Err(e) => {
            d.fail(e);
            return None;
        }
    };
    let mut effects = Vec::with_capacity(j.effects.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = shape.total();
    let mut sum = CMatrix::zeros(n, n);
    for (x, e) in j.effects.iter().enumerate() {
        let m = match (OperatorJson { dims: j.dims.clone(), matrix: e.clone() }).raw() {
            Ok(m) => m,
            Err(err) => {
                d.fail(format!("effect {x}: {err}"));
                return None;
            }
        };
        let h = Hermitian::symmetrize(m.clone());
        lo = lo.min(h.min_eig());
        hi = hi.max(h.max_eig());
        sum += &m;
        match Hermitian::new(m) {
            Ok(h) => effects.push(h),
            Err(err) => d.fail(format!("effect {x}: {err}")),
        }
    }
    let completeness = crate::opalg::max_abs_diff(&sum, &CMatrix::identity(n, n));
    d.residuals.insert("min_eigenvalue".into(), lo);
    d.residuals.insert("max_eigenvalue".into(), hi);
    d.residuals.insert("completeness".into(), completeness);
    if !d.ok {
        return None;
    }
    match Povm::new(shape, effects) {
        Ok(p) => Some(p),
        Err(e) => {
            if completeness > IDENTITY_TOL {
                d.fail(format!("effects sum to identity only within {completeness:.3e}: {e}"));
            } else {
                d.fail(e);
            }
            None
        }
    }
}

fn load_channel(j: &ChannelJson, d: &mut ObjectDiagnostic) -> Option<QuantumChannel> {
    let kraus = match &j.kraus {
        Some(ks) => match ks.iter().map(matrix_from_json).collect::<Result<Vec<_>>>() {
            Ok(k) => Some(k),
            Err(e) => {
                d.fail(e);
                return None;
            }
        },
        None => None,
    };
    let choi = match &j.choi {
        Some(c) => {
            if c.dims != [j.d_in, j.d_out] {
                d.fail(format!("choi dims {:?} do not match [d_in, d_out] = [{}, {}]", c.dims, j.d_in, j.d_out));
                return None;
            }
            match c.hermitian() {
                Ok(h) => Some(h),
                Err(e) => {
                    d.fail(e);
                    return None;
                }
            }
        }
        None => None,
    };
    // Residuals are computed before validation so failures can be reported.
    let unchecked = match (&kraus, &choi) {
        (_, Some(c)) => QuantumChannel::from_choi_unchecked(c.clone(), j.d_in, j.d_out),
        (Some(k), None) => crate::channels::choi_from_kraus_unchecked(k, j.d_in, j.d_out)
            .and_then(|c| QuantumChannel::from_choi_unchecked(c, j.d_in, j.d_out)),
        (None, None) => {
            d.fail("channel needs `kraus` or `choi`");
            return None;
        }
    };
    match unchecked {
        Ok(ch) => {
            let r = validate_cptp(&ch);
            d.residuals.insert("cp_residual".into(), r.cp_residual);
            d.residuals.insert("tp_residual".into(), r.tp_residual);
        }
        Err(e) => {
            d.fail(e);
            return None;
        }
    }
    let built = match (kraus, choi) {
        (Some(k), Some(c)) => QuantumChannel::from_parts(Some(k), Some(c), j.d_in, j.d_out),
        (Some(k), None) => QuantumChannel::from_kraus(k, j.d_in, j.d_out),
        (None, Some(c)) => QuantumChannel::from_choi(c, j.d_in, j.d_out),
        (None, None) => unreachable!(),
    };
    match built {
        Ok(ch) => Some(ch),
        Err(e) => {
            d.fail(e);
            None
        }
    }
}

/// Validates every object; a failing object is reported and left out.
pub fn load(doc: &InputDocument) -> (Loaded, Vec<ObjectDiagnostic>) {
    let mut out = Loaded::default();
    let mut diags = Vec::new();
    for (name, j) in &doc.states {
        let mut d = ObjectDiagnostic::new("state", name);
        if let Some(s) = load_state(j, &mut d) {
            out.states.insert(name.clone(), s);
        }
        diags.push(d);
    }
    for (name, j) in &doc.povms {
        let mut d = ObjectDiagnostic::new("povm", name);
        if let Some(p) = load_povm(j, &mut d) {
            out.povms.insert(name.clone(), p);
        }
        diags.push(d);
    }
    for (name, j) in &doc.channels {
        let mut d = ObjectDiagnostic::new("channel", name);
        if let Some(c) = load_channel(j, &mut d) {
            out.channels.insert(name.clone(), c);
        }
        diags.push(d);
    }
    for (name, j) in &doc.testers {
        let mut d = ObjectDiagnostic::new("tester", name);
        match (out.states.get(&j.state), out.povms.get(&j.povm)) {
            (Some(s), Some(p)) => match Tester::new(s.clone(), p.clone()) {
                Ok(t) => {
                    d.residuals.insert("outcomes".into(), t.outcomes() as f64);
                    out.testers.insert(name.clone(), t);
                }
                Err(e) => d.fail(e),
            },
            _ => d.fail("depends on an invalid state or POVM"),
        }
        diags.push(d);
    }
    (out, diags)
}
