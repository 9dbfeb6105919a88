//! Model declarations for discrete-instrument potential-outcomes problems:
//! treatments, instruments, the admissible set of response types, the base
//! measure over instrument values, and the target functionals. Everything
//! downstream (identification, estimation, simulation) consumes the finite
//! response matrices built here.
//!
//! Values are immutable after construction and safe to share across threads.

use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is invalid: {0}")]
    Invalid(String),
    #[error("operation requires discrete instrument mode")]
    UnsupportedMode,
    #[error("unknown treatment label `{0}`")]
    UnknownTreatment(String),
    #[error("unknown instrument value `{0}`")]
    UnknownInstrument(String),
    #[error("model file error: {0}")]
    File(String),
}

/// Ordered set of treatment labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentSpace {
    pub labels: Vec<String>,
}

impl TreatmentSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Instrument support: a finite list of values, optionally paired with a
/// continuous component for the binary-plus-scalar extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpace {
    pub values: Vec<String>,
    pub mode: InstrumentMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentMode {
    Discrete,
    /// Binary component with labels in `values` plus a scalar component
    /// supported on `[w_lo, w_hi]`.
    ContinuousPair { w_lo: f64, w_hi: f64 },
}

impl InstrumentSpace {
    pub fn discrete(values: Vec<String>) -> Self {
        InstrumentSpace { values, mode: InstrumentMode::Discrete }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.mode, InstrumentMode::Discrete)
    }
}

/// A response type: the treatment label induced at each instrument value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseType {
    pub assignment: Vec<String>,
}

impl ResponseType {
    pub fn new(assignment: Vec<String>) -> Self {
        ResponseType { assignment }
    }
}

/// The admissible set of response types, with optional per-type masses used
/// only by the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportRestriction {
    pub types: Vec<ResponseType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

/// Weights over instrument values, strictly positive and summing to one,
/// constant in the covariates. Defaults to uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    pub mu_z: Vec<f64>,
}

impl BaseMeasure {
    pub fn uniform(q: usize) -> Self {
        BaseMeasure { mu_z: vec![1.0 / q as f64; q] }
    }
}

/// Outcome transform. Identity is clipped to keep it bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSpec {
    Identity { lo: f64, hi: f64 },
    Indicator { y: f64 },
    One,
}

impl RhoSpec {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            RhoSpec::Identity { lo, hi } => y.clamp(lo, hi),
            RhoSpec::Indicator { y: cut } => {
                if y <= cut {
                    1.0
                } else {
                    0.0
                }
            }
            RhoSpec::One => 1.0,
        }
    }

    pub fn is_bounded(&self) -> bool {
        match *self {
            RhoSpec::Identity { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            RhoSpec::Indicator { .. } | RhoSpec::One => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Type,
    Outcome,
    Derived,
}

/// Smooth combination of previously declared functionals, referenced by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineSpec {
    Component(String),
    Const(f64),
    Ratio(Box<CombineSpec>, Box<CombineSpec>),
    Difference(Box<CombineSpec>, Box<CombineSpec>),
    Sum(Vec<CombineSpec>),
    Scale { by: f64, of: Box<CombineSpec> },
}

impl CombineSpec {
    /// Names of the components referenced anywhere in the expression.
    pub fn components(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_components(&mut out);
        out
    }

    fn collect_components(&self, out: &mut Vec<String>) {
        match self {
            CombineSpec::Component(name) => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            CombineSpec::Const(_) => {}
            CombineSpec::Ratio(a, b) | CombineSpec::Difference(a, b) => {
                a.collect_components(out);
                b.collect_components(out);
            }
            CombineSpec::Sum(terms) => {
                for t in terms {
                    t.collect_components(out);
                }
            }
            CombineSpec::Scale { of, .. } => of.collect_components(out),
        }
    }

    /// Evaluates the expression against named component values. `on_ratio`
    /// receives each denominator value so callers can enforce a floor.
    pub fn eval(
        &self,
        lookup: &dyn Fn(&str) -> Option<f64>,
        on_ratio: &mut dyn FnMut(f64) -> Result<(), String>,
    ) -> Result<f64, String> {
        match self {
            CombineSpec::Component(name) => {
                lookup(name).ok_or_else(|| format!("unknown component `{name}`"))
            }
            CombineSpec::Const(c) => Ok(*c),
            CombineSpec::Ratio(a, b) => {
                let num = a.eval(lookup, on_ratio)?;
                let den = b.eval(lookup, on_ratio)?;
                on_ratio(den)?;
                Ok(num / den)
            }
            CombineSpec::Difference(a, b) => {
                Ok(a.eval(lookup, on_ratio)? - b.eval(lookup, on_ratio)?)
            }
            CombineSpec::Sum(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(lookup, on_ratio)?;
                }
                Ok(acc)
            }
            CombineSpec::Scale { by, of } => Ok(by * of.eval(lookup, on_ratio)?),
        }
    }
}

/// A declared target functional. `ell` is a finite table over the admissible
/// types, optionally multiplied by one covariate coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub name: String,
    pub kind: FunctionalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combine: Option<CombineSpec>,
}

impl FunctionalSpec {
    pub fn type_indicator(name: &str, r: usize, type_idx: usize) -> Self {
        let mut ell = vec![0.0; r];
        ell[type_idx] = 1.0;
        FunctionalSpec {
            name: name.to_string(),
            kind: FunctionalKind::Type,
            ell: Some(ell),
            covariate_index: None,
            rho: None,
            target_treatment: None,
            combine: None,
        }
    }
}

/// Basis construction rule for `b(Z, X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    /// For each instrument value, interact its indicator with `[1, X₁, …, X_m]`.
    /// Dimension is `q · (m + 1)`.
    DiscreteInteracted { q: usize, m: usize },
    /// For each arm of the binary component, interact its indicator with
    /// `[1, w̃, …, w̃^degree, X₁, …, X_m]`, where `w̃` rescales the continuous
    /// component to `[-1, 1]`.
    ContinuousPair { degree: usize, m: usize, w_lo: f64, w_hi: f64 },
}

impl BasisSpec {
    pub fn for_model(model: &ModelSpec, m: usize) -> Self {
        match model.instruments.mode {
            InstrumentMode::Discrete => {
                BasisSpec::DiscreteInteracted { q: model.instruments.len(), m }
            }
            InstrumentMode::ContinuousPair { w_lo, w_hi } => {
                BasisSpec::ContinuousPair { degree: 3, m, w_lo, w_hi }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            BasisSpec::DiscreteInteracted { q, m } => q * (m + 1),
            BasisSpec::ContinuousPair { degree, m, .. } => 2 * (degree + 1 + m),
        }
    }

    /// Evaluation at a discrete instrument index and covariate row.
    pub fn eval_discrete(&self, z_idx: usize, x: &[f64]) -> Vec<f64> {
        match *self {
            BasisSpec::DiscreteInteracted { q, m } => {
                assert_eq!(x.len(), m);
                let mut out = vec![0.0; self.dim()];
                let base = z_idx * (m + 1);
                out[base] = 1.0;
                out[base + 1..base + 1 + m].copy_from_slice(x);
                assert!(z_idx < q);
                out
            }
            BasisSpec::ContinuousPair { .. } => {
                panic!("discrete evaluation on a continuous-pair basis")
            }
        }
    }

    /// Evaluation at a continuous-pair instrument `(c, w)` and covariate row.
    pub fn eval_continuous(&self, c: usize, w: f64, x: &[f64]) -> Vec<f64> {
        match *self {
            BasisSpec::ContinuousPair { degree, m, w_lo, w_hi } => {
                assert_eq!(x.len(), m);
                assert!(c < 2);
                let block = degree + 1 + m;
                let mut out = vec![0.0; 2 * block];
                let wt = (2.0 * w - (w_lo + w_hi)) / (w_hi - w_lo);
                let base = c * block;
                let mut pw = 1.0;
                for k in 0..=degree {
                    out[base + k] = pw;
                    pw *= wt;
                }
                out[base + degree + 1..base + block].copy_from_slice(x);
                out
            }
            BasisSpec::DiscreteInteracted { .. } => {
                panic!("continuous evaluation on a discrete basis")
            }
        }
    }
}

/// A full model declaration.
///
/// The JSON form is flat: `treatments` and `instruments` are label arrays,
/// `types` is an array of per-instrument label arrays, `mu` (optional)
/// defaults to uniform, `instrument_mode` (optional) defaults to discrete,
/// and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct ModelSpec {
    pub treatments: TreatmentSpace,
    pub instruments: InstrumentSpace,
    pub support: SupportRestriction,
    pub mu: BaseMeasure,
    pub functionals: Vec<FunctionalSpec>,
    pub type_names: Option<Vec<String>>,
    /// Whether the "exogeneity of irrelevant mediator choices" assumption is
    /// declared, enabling the mediation scores for otherwise unidentified
    /// outcome targets on the relocation/mediator model shape.
    pub eimc: bool,
}

/// Wire format of a model file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    treatments: Vec<String>,
    instruments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instrument_mode: Option<InstrumentMode>,
    types: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    type_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    type_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    functionals: Vec<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    eimc: bool,
}

impl From<ModelSpec> for ModelFile {
    fn from(model: ModelSpec) -> Self {
        ModelFile {
            treatments: model.treatments.labels,
            instruments: model.instruments.values,
            instrument_mode: match model.instruments.mode {
                InstrumentMode::Discrete => None,
                mode => Some(mode),
            },
            types: model.support.types.into_iter().map(|t| t.assignment).collect(),
            type_probs: model.support.probabilities,
            type_names: model.type_names,
            mu: Some(model.mu.mu_z),
            functionals: model.functionals,
            eimc: model.eimc,
        }
    }
}

impl TryFrom<ModelFile> for ModelSpec {
    type Error = String;

    fn try_from(file: ModelFile) -> Result<Self, String> {
        let q = file.instruments.len();
        let mu = match file.mu {
            Some(mu_z) => BaseMeasure { mu_z },
            None if q > 0 => BaseMeasure::uniform(q),
            None => BaseMeasure { mu_z: Vec::new() },
        };
        Ok(ModelSpec {
            treatments: TreatmentSpace { labels: file.treatments },
            instruments: InstrumentSpace {
                values: file.instruments,
                mode: file.instrument_mode.unwrap_or(InstrumentMode::Discrete),
            },
            support: SupportRestriction {
                types: file.types.into_iter().map(ResponseType::new).collect(),
                probabilities: file.type_probs,
            },
            mu,
            functionals: file.functionals,
            type_names: file.type_names,
            eimc: file.eimc,
        })
    }
}

impl ModelSpec {
    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn n_types(&self) -> usize {
        self.support.types.len()
    }

    /// Dense index form of type `i`: treatment index induced at each instrument value.
    pub fn type_assignment_indices(&self, i: usize) -> Vec<usize> {
        self.support.types[i]
            .assignment
            .iter()
            .map(|l| self.treatments.index_of(l).expect("validated model"))
            .collect()
    }

    pub fn type_name(&self, i: usize) -> String {
        match &self.type_names {
            Some(names) if i < names.len() => names[i].clone(),
            _ => format!("type{i}"),
        }
    }

    pub fn type_index_by_name(&self, name: &str) -> Option<usize> {
        self.type_names.as_ref()?.iter().position(|n| n == name)
    }

    /// Indicator table `1{T* ∈ set}` over the admissible types, by type name.
    pub fn ell_indicator(&self, names: &[&str]) -> Result<Vec<f64>, ModelError> {
        let mut ell = vec![0.0; self.n_types()];
        for name in names {
            let idx = self
                .type_index_by_name(name)
                .ok_or_else(|| ModelError::Invalid(format!("unknown type name `{name}`")))?;
            ell[idx] = 1.0;
        }
        Ok(ell)
    }

    pub fn functional(&self, name: &str) -> Option<&FunctionalSpec> {
        self.functionals.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::File(e.to_string()))
    }
}

/// Checks every structural invariant and returns one diagnostic per violation.
/// An empty list means the model is well formed.
pub fn validate_model(model: &ModelSpec) -> Vec<String> {
    let mut diags = Vec::new();
    let d = model.treatments.len();
    let q = model.instruments.len();

    if d < 2 {
        diags.push(format!("treatments: need at least 2 labels, got {d}"));
    }
    for (i, a) in model.treatments.labels.iter().enumerate() {
        for b in &model.treatments.labels[i + 1..] {
            if a == b {
                diags.push(format!("treatments: duplicate label `{a}`"));
            }
        }
    }

    if q < 1 {
        diags.push("instruments: need at least 1 value".to_string());
    }
    for (i, a) in model.instruments.values.iter().enumerate() {
        for b in &model.instruments.values[i + 1..] {
            if a == b {
                diags.push(format!("instruments: duplicate value `{a}`"));
            }
        }
    }
    if let InstrumentMode::ContinuousPair { w_lo, w_hi } = model.instruments.mode {
        if !(w_lo < w_hi) {
            diags.push(format!("instruments: continuous interval requires w_lo < w_hi, got [{w_lo}, {w_hi}]"));
        }
        if q != 2 {
            diags.push(format!("instruments: continuous-pair mode requires 2 binary-component labels, got {q}"));
        }
    }

    let r = model.support.types.len();
    if model.instruments.is_discrete() && r < 1 {
        diags.push("support: need at least 1 response type".to_string());
    }
    for (i, ty) in model.support.types.iter().enumerate() {
        if ty.assignment.len() != q {
            diags.push(format!(
                "support: type {i} assigns {} values but there are {q} instrument values",
                ty.assignment.len()
            ));
            continue;
        }
        for label in &ty.assignment {
            if model.treatments.index_of(label).is_none() {
                diags.push(format!("support: type {i} uses unknown treatment label `{label}`"));
            }
        }
    }
    for i in 0..r {
        for j in (i + 1)..r {
            if model.support.types[i] == model.support.types[j] {
                diags.push(format!("support: types {i} and {j} are identical"));
            }
        }
    }
    if let Some(probs) = &model.support.probabilities {
        if probs.len() != r {
            diags.push(format!("support: {} masses for {r} types", probs.len()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            diags.push("support: type masses must be nonnegative and finite".to_string());
        } else {
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                diags.push(format!("support: type masses sum to {total}, expected 1"));
            }
        }
    }

    if model.mu.mu_z.len() != q {
        diags.push(format!("mu: {} weights for {q} instrument values", model.mu.mu_z.len()));
    } else {
        if model.mu.mu_z.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            diags.push("mu: weights must be strictly positive".to_string());
        }
        let total: f64 = model.mu.mu_z.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            diags.push(format!("mu: weights sum to {total}, expected 1"));
        }
    }

    if let Some(names) = &model.type_names {
        if names.len() != r {
            diags.push(format!("type_names: {} names for {r} types", names.len()));
        }
    }

    let mut seen = Vec::new();
    for f in &model.functionals {
        if seen.contains(&&f.name) {
            diags.push(format!("functionals: duplicate name `{}`", f.name));
        }
        seen.push(&f.name);
        match f.kind {
            FunctionalKind::Type | FunctionalKind::Outcome => {
                match &f.ell {
                    None => diags.push(format!("functional `{}`: missing ell table", f.name)),
                    Some(ell) if ell.len() != r => diags.push(format!(
                        "functional `{}`: ell has {} entries for {r} types",
                        f.name,
                        ell.len()
                    )),
                    _ => {}
                }
                if f.kind == FunctionalKind::Outcome {
                    match &f.target_treatment {
                        None => diags.push(format!(
                            "functional `{}`: outcome kind requires target_treatment",
                            f.name
                        )),
                        Some(t) if model.treatments.index_of(t).is_none() => diags.push(format!(
                            "functional `{}`: unknown target treatment `{t}`",
                            f.name
                        )),
                        _ => {}
                    }
                    match &f.rho {
                        None => diags.push(format!(
                            "functional `{}`: outcome kind requires rho",
                            f.name
                        )),
                        Some(rho) if !rho.is_bounded() => diags.push(format!(
                            "functional `{}`: rho must be bounded",
                            f.name
                        )),
                        _ => {}
                    }
                }
            }
            FunctionalKind::Derived => match &f.combine {
                None => diags.push(format!("functional `{}`: derived kind requires combine", f.name)),
                Some(c) => {
                    for comp in c.components() {
                        let declared_earlier = model
                            .functionals
                            .iter()
                            .take_while(|g| g.name != f.name)
                            .any(|g| g.name == comp);
                        if !declared_earlier {
                            diags.push(format!(
                                "functional `{}`: references undeclared component `{comp}`",
                                f.name
                            ));
                        }
                    }
                }
            },
        }
    }

    diags
}

fn require_valid_discrete(model: &ModelSpec) -> Result<(), ModelError> {
    if !model.instruments.is_discrete() {
        return Err(ModelError::UnsupportedMode);
    }
    let diags = validate_model(model);
    if !diags.is_empty() {
        return Err(ModelError::Invalid(diags.join("; ")));
    }
    Ok(())
}

/// Response matrix for type functionals: r × (q·d), row i concatenating per
/// instrument value the one-hot encoding of the treatment induced by type i.
pub fn response_matrix_types(model: &ModelSpec) -> Result<Mat, ModelError> {
    require_valid_discrete(model)?;
    let r = model.n_types();
    let q = model.n_instruments();
    let d = model.n_treatments();
    let mut omega = Mat::zeros(r, q * d);
    for i in 0..r {
        let assign = model.type_assignment_indices(i);
        for (j, &t_idx) in assign.iter().enumerate() {
            omega.set(i, j * d + t_idx, 1.0);
        }
    }
    Ok(omega)
}

/// Response matrix for outcome functionals at treatment `t`: r × q with entry
/// (i, j) = 1 iff type i induces `t` at instrument value j.
pub fn response_matrix_outcome(model: &ModelSpec, t: &str) -> Result<Mat, ModelError> {
    require_valid_discrete(model)?;
    let t_idx = model
        .treatments
        .index_of(t)
        .ok_or_else(|| ModelError::UnknownTreatment(t.to_string()))?;
    let r = model.n_types();
    let q = model.n_instruments();
    let mut omega = Mat::zeros(r, q);
    for i in 0..r {
        let assign = model.type_assignment_indices(i);
        for (j, &idx) in assign.iter().enumerate() {
            if idx == t_idx {
                omega.set(i, j, 1.0);
            }
        }
    }
    Ok(omega)
}

/// Structural layout of a relocation/mediator model: binary instrument,
/// treatments coded `"dm"` over `d, m ∈ {0,1}`, and the seven admissible
/// types. Detection is by type assignments, so instrument ordering is free.
#[derive(Clone, Debug)]
pub struct MtoLayout {
    /// Instrument index playing the "no offer" role.
    pub z0: usize,
    /// Instrument index playing the "offer" role.
    pub z1: usize,
    /// Treatment indices for (d, m) = (0,0), (0,1), (1,0), (1,1).
    pub t00: usize,
    pub t01: usize,
    pub t10: usize,
    pub t11: usize,
    /// Type indices in the order NN, NA, CN, CC, CA, AN, AA.
    pub types: [usize; 7],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MediationPattern {
    /// `E[ρ(Y*(0,0)) 1{T* = CN}]`.
    Cn,
    /// `E[ρ(Y*(1,1)) 1{T* = CA}]`.
    Ca,
}

impl MtoLayout {
    pub fn detect(model: &ModelSpec) -> Option<Self> {
        if !model.instruments.is_discrete()
            || model.n_instruments() != 2
            || model.n_treatments() != 4
            || model.n_types() != 7
        {
            return None;
        }
        let t00 = model.treatments.index_of("00")?;
        let t01 = model.treatments.index_of("01")?;
        let t10 = model.treatments.index_of("10")?;
        let t11 = model.treatments.index_of("11")?;
        let assignments: Vec<Vec<usize>> =
            (0..7).map(|i| model.type_assignment_indices(i)).collect();
        for (z0, z1) in [(0usize, 1usize), (1, 0)] {
            // Expected (no offer, offer) treatments per type.
            let patterns = [
                (t00, t00), // NN
                (t01, t01), // NA
                (t00, t10), // CN
                (t00, t11), // CC
                (t01, t11), // CA
                (t10, t10), // AN
                (t11, t11), // AA
            ];
            let mut types = [0usize; 7];
            let mut ok = true;
            for (slot, &(a0, a1)) in patterns.iter().enumerate() {
                match assignments.iter().position(|a| a[z0] == a0 && a[z1] == a1) {
                    Some(idx) => types[slot] = idx,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Some(MtoLayout { z0, z1, t00, t01, t10, t11, types });
            }
        }
        None
    }

    pub fn type_idx(&self, name: MtoType) -> usize {
        self.types[name as usize]
    }

    /// Whether an outcome functional matches one of the two targets that are
    /// estimable only through the mediation orthogonal scores.
    pub fn mediation_pattern(
        &self,
        model: &ModelSpec,
        f: &FunctionalSpec,
    ) -> Option<MediationPattern> {
        if f.kind != FunctionalKind::Outcome {
            return None;
        }
        let t_idx = model.treatments.index_of(f.target_treatment.as_deref()?)?;
        let ell = f.ell.as_ref()?;
        let is_indicator_of = |type_idx: usize| {
            ell.iter().enumerate().all(|(i, &v)| v == if i == type_idx { 1.0 } else { 0.0 })
        };
        if t_idx == self.t00 && is_indicator_of(self.type_idx(MtoType::Cn)) {
            Some(MediationPattern::Cn)
        } else if t_idx == self.t11 && is_indicator_of(self.type_idx(MtoType::Ca)) {
            Some(MediationPattern::Ca)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtoType {
    Nn = 0,
    Na = 1,
    Cn = 2,
    Cc = 3,
    Ca = 4,
    An = 5,
    Aa = 6,
}

fn rt(assignment: &[&str]) -> ResponseType {
    ResponseType::new(assignment.iter().map(|s| s.to_string()).collect())
}

/// Relocation/mediator model with binary instrument, treatments coded as
/// `dm` strings, and the seven admissible types. Type masses are benchmark
/// point estimates, retained for simulation presets.
pub fn preset_mto7() -> ModelSpec {
    ModelSpec {
        treatments: TreatmentSpace {
            labels: vec!["00".into(), "01".into(), "10".into(), "11".into()],
        },
        instruments: InstrumentSpace::discrete(vec!["0".into(), "1".into()]),
        support: SupportRestriction {
            types: vec![
                rt(&["00", "00"]), // NN
                rt(&["01", "01"]), // NA
                rt(&["00", "10"]), // CN
                rt(&["00", "11"]), // CC
                rt(&["01", "11"]), // CA
                rt(&["10", "10"]), // AN
                rt(&["11", "11"]), // AA
            ],
            probabilities: Some(vec![0.258, 0.253, 0.194, 0.065, 0.203, 0.014, 0.013]),
        },
        mu: BaseMeasure::uniform(2),
        functionals: Vec::new(),
        type_names: Some(
            ["NN", "NA", "CN", "CC", "CA", "AN", "AA"].iter().map(|s| s.to_string()).collect(),
        ),
        eimc: false,
    }
}

/// Three-treatment preschool-offer model: the offer can only induce entry
/// into the offered program, giving five admissible types.
pub fn preset_headstart5() -> ModelSpec {
    ModelSpec {
        treatments: TreatmentSpace { labels: vec!["n".into(), "c".into(), "h".into()] },
        instruments: InstrumentSpace::discrete(vec!["0".into(), "1".into()]),
        support: SupportRestriction {
            types: vec![
                rt(&["n", "h"]),
                rt(&["c", "h"]),
                rt(&["n", "n"]),
                rt(&["c", "c"]),
                rt(&["h", "h"]),
            ],
            probabilities: None,
        },
        mu: BaseMeasure::uniform(2),
        functionals: Vec::new(),
        type_names: Some(
            ["NH", "CH", "NN", "CC", "HH"].iter().map(|s| s.to_string()).collect(),
        ),
        eimc: false,
    }
}

/// Binary-instrument binary-treatment model excluding defiers.
pub fn preset_late3() -> ModelSpec {
    ModelSpec {
        treatments: TreatmentSpace { labels: vec!["0".into(), "1".into()] },
        instruments: InstrumentSpace::discrete(vec!["0".into(), "1".into()]),
        support: SupportRestriction {
            types: vec![rt(&["0", "0"]), rt(&["0", "1"]), rt(&["1", "1"])],
            probabilities: None,
        },
        mu: BaseMeasure::uniform(2),
        functionals: Vec::new(),
        type_names: Some(["NT", "C", "AT"].iter().map(|s| s.to_string()).collect()),
        eimc: false,
    }
}

/// Named built-in models. Each entry passes `validate_model`.
pub fn preset_models() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("mto7", preset_mto7()),
        ("headstart5", preset_headstart5()),
        ("late3", preset_late3()),
    ]
}

pub fn preset_by_name(name: &str) -> Option<ModelSpec> {
    preset_models().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
}
