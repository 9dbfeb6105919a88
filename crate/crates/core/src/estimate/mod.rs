//! Cross-fitted double-robust estimation of identified functionals, the
//! survey-weighted no-split variants, the mediation orthogonal scores, the
//! derived mediation effects, quantile treatment effects, and the smoothed
//! moment targets for the continuous-instrument extension.
//!
//! Every estimator shares one score engine: per treatment arm it pairs a
//! Lasso regression of the arm's target on the basis with a Riesz-representer
//! fit whose linear target encodes the identifying weights, then averages
//!
//! `b(Z,X)ᵀγ̂ · (target − b(Z,X)ᵀβ̂) + M(X)ᵀβ̂`
//!
//! over held-out observations.

mod continuous;
mod effects;
mod mediation;
mod qte;

pub use continuous::{
    continuous_moment_target, estimate_continuous_interval, gauss_legendre, KernelCdf,
};
pub use effects::{derived_mediation_effects, implied_late, MediationBlocks, MediationEffects};
pub use mediation::{mediation_ca, mediation_cn, mediation_batch};
pub use qte::{estimate_qte, invert_cdf, monotonize_cdf, CdfArm, QteResult, QteSpec};

use crate::identify::{IdentificationSolution, SolutionKind};
use crate::lasso::{
    cross_validate_penalty, fit_lasso_warm_grid, fit_riesz, penalty_grid, take_rows, FitSettings,
    LassoError,LassoFit, PenaltyProblem,
};
use crate::linalg::{dot, Mat};
use crate::model::{BasisSpec, ModelSpec, RhoSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("functional is not identified (residual {residual:.3e}); run identification first")]
    NotIdentified { residual: f64 },
    #[error("rho must be bounded")]
    UnboundedRho,
    #[error("unknown treatment label `{0}`")]
    UnknownTreatment(String),
    #[error("row {row}: unknown {column} label `{label}`")]
    UnknownLabel { row: usize, column: &'static str, label: String },
    #[error("dataset error: {0}")]
    Data(String),
    #[error("fold count {k} out of range for n = {n}")]
    BadFolds { k: usize, n: usize },
    #[error("{0}")]
    Lasso(#[from] LassoError),
    #[error("covariate multiplier index {0} out of range")]
    BadMultiplier(usize),
    #[error("model is not shaped for the mediation scores (need binary instrument and the four `dm` treatments with the seven admissible types)")]
    MediationShape,
    #[error("estimated probability for `{name}` is {value:.4}, below the {floor:.4} floor")]
    SmallDenominator { name: String, value: f64, floor: f64 },
    #[error("nuisance corruption is only supported for discrete binary-instrument designs")]
    UnsupportedCorruption,
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error("quantile grid error: {0}")]
    BadGrid(String),
    #[error("smoothed target error: {0}")]
    Continuous(String),
    #[error("{0}")]
    Inference(String),
}

/// Instrument observations: discrete indices into the model's value list, or
/// binary-component indices paired with the scalar component.
#[derive(Clone, Debug)]
pub enum InstrumentData {
    Discrete(Vec<usize>),
    ContinuousPair { c: Vec<usize>, w: Vec<f64> },
}

/// Observations resolved against a model: outcomes, treatment indices,
/// instrument data, covariates, and normalized survey weights.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<usize>,
    pub z: InstrumentData,
    pub x: Mat,
    pub omega: Vec<f64>,
}

impl Dataset {
    /// Resolves label-coded observations against the model. Weights default
    /// to uniform and are normalized to sum one.
    pub fn from_labels(
        model: &ModelSpec,
        y: Vec<f64>,
        t_labels: &[String],
        z_labels: &[String],
        x: Mat,
        omega: Option<Vec<f64>>,
    ) -> Result<Self, EstimateError> {
        let n = y.len();
        let mut t = Vec::with_capacity(n);
        for (row, label) in t_labels.iter().enumerate() {
            t.push(model.treatments.index_of(label).ok_or(EstimateError::UnknownLabel {
                row,
                column: "treatment",
                label: label.clone(),
            })?);
        }
        let mut z = Vec::with_capacity(n);
        for (row, label) in z_labels.iter().enumerate() {
            z.push(model.instruments.index_of(label).ok_or(EstimateError::UnknownLabel {
                row,
                column: "instrument",
                label: label.clone(),
            })?);
        }
        Self::new(y, t, InstrumentData::Discrete(z), x, omega)
    }

    /// Continuous-pair variant: binary-component labels plus the scalar.
    pub fn from_continuous_labels(
        model: &ModelSpec,
        y: Vec<f64>,
        t_labels: &[String],
        c_labels: &[String],
        w: Vec<f64>,
        x: Mat,
        omega: Option<Vec<f64>>,
    ) -> Result<Self, EstimateError> {
        let n = y.len();
        let mut t = Vec::with_capacity(n);
        for (row, label) in t_labels.iter().enumerate() {
            t.push(model.treatments.index_of(label).ok_or(EstimateError::UnknownLabel {
                row,
                column: "treatment",
                label: label.clone(),
            })?);
        }
        let mut c = Vec::with_capacity(n);
        for (row, label) in c_labels.iter().enumerate() {
            c.push(model.instruments.index_of(label).ok_or(EstimateError::UnknownLabel {
                row,
                column: "instrument",
                label: label.clone(),
            })?);
        }
        Self::new(y, t, InstrumentData::ContinuousPair { c, w }, x, omega)
    }

    pub fn new(
        y: Vec<f64>,
        t: Vec<usize>,
        z: InstrumentData,
        x: Mat,
        omega: Option<Vec<f64>>,
    ) -> Result<Self, EstimateError> {
        let n = y.len();
        if n == 0 {
            return Err(EstimateError::Data("dataset is empty".into()));
        }
        if t.len() != n || x.rows() != n {
            return Err(EstimateError::Data("column lengths disagree".into()));
        }
        match &z {
            InstrumentData::Discrete(zd) => {
                if zd.len() != n {
                    return Err(EstimateError::Data("column lengths disagree".into()));
                }
            }
            InstrumentData::ContinuousPair { c, w } => {
                if c.len() != n || w.len() != n {
                    return Err(EstimateError::Data("column lengths disagree".into()));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(EstimateError::Data("non-finite scalar instrument".into()));
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) || x.data().iter().any(|v| !v.is_finite()) {
            return Err(EstimateError::Data("non-finite entries".into()));
        }
        let mut omega = omega.unwrap_or_else(|| vec![1.0; n]);
        if omega.len() != n {
            return Err(EstimateError::Data("weight column length disagrees".into()));
        }
        if omega.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EstimateError::Data("weights must be nonnegative and finite".into()));
        }
        let total: f64 = omega.iter().sum();
        if total <= 0.0 {
            return Err(EstimateError::Data("weights sum to zero".into()));
        }
        for v in omega.iter_mut() {
            *v /= total;
        }
        Ok(Dataset { y, t, z, x, omega })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn z_discrete(&self) -> Result<&[usize], EstimateError> {
        match &self.z {
            InstrumentData::Discrete(z) => Ok(z),
            _ => Err(EstimateError::Data("expected discrete instrument data".into())),
        }
    }
}

/// Deterministic uniform partition of `0..n` into `k` folds of near-equal size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub assignment: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EstimateError> {
    if k < 2 || k > n {
        return Err(EstimateError::BadFolds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { assignment, k, seed })
}

/// Penalty selection policy for the nuisance fits.
#[derive(Clone, Debug)]
pub enum PenaltyPolicy {
    /// K-fold cross-validation on the training subset.
    CrossValidate { folds: usize, grid_size: usize },
    /// Exact leave-one-out (gated to n ≤ 2000).
    LeaveOneOut { grid_size: usize },
    /// Fixed penalty, no selection.
    Fixed(f64),
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        PenaltyPolicy::CrossValidate { folds: 10, grid_size: crate::lasso::GRID_SIZE }
    }
}

/// Deliberate nuisance corruption used by the double-robustness
/// falsification experiments: adds a fixed bounded instrument-keyed shift to
/// the named fitted function wherever it is evaluated. Discrete binary
/// instruments only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Corruption {
    None,
    Regression(f64),
    Representer(f64),
    Both(f64, f64),
}

impl Corruption {
    fn beta_shift(&self) -> f64 {
        match *self {
            Corruption::Regression(c) | Corruption::Both(c, _) => c,
            _ => 0.0,
        }
    }

    fn gamma_shift(&self) -> f64 {
        match *self {
            Corruption::Representer(c) | Corruption::Both(_, c) => c,
            _ => 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Corruption::None)
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorSettings {
    /// Number of cross-fitting folds (ignored by the no-split path).
    pub folds: usize,
    /// Skip sample splitting: fit nuisances on the full sample, as in the
    /// survey-weighted variant.
    pub no_split: bool,
    /// Seed for the fold plan.
    pub seed: u64,
    pub penalty: PenaltyPolicy,
    /// Floor applied to estimated conditional group probabilities before division.
    pub u_min: f64,
    /// Floor applied to estimated group probabilities before division.
    pub p_min: f64,
    pub corruption: Corruption,
    pub fit: FitSettings,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            folds: 5,
            no_split: false,
            seed: 0,
            penalty: PenaltyPolicy::default(),
            u_min: 0.01,
            p_min: 0.005,
            corruption: Corruption::None,
            fit: FitSettings::default(),
        }
    }
}

/// One fitted nuisance: which fold, which target, which penalty.
#[derive(Clone, Debug)]
pub struct NuisanceEntry {
    pub fold: usize,
    pub label: String,
    pub alpha: f64,
    pub coefficients: Vec<f64>,
}

/// Per-fold nuisance fits on the shared basis. Fold `k` entries are computed
/// only from observations outside fold `k`.
#[derive(Clone, Debug, Default)]
pub struct NuisanceFits {
    pub entries: Vec<NuisanceEntry>,
}

/// Point estimate with centered influence values and analytic standard error.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub lambda_hat: f64,
    /// Influence values centered so the weighted sum is zero.
    pub psi: Vec<f64>,
    pub se: f64,
    /// Estimation weights (sum one); uniform unless survey weights were given.
    pub weights: Vec<f64>,
    pub n: usize,
    pub nuisances: NuisanceFits,
    pub fold_plan: Option<FoldPlan>,
    pub warnings: Vec<String>,
    /// Filled by the inference layer when a bootstrap run covers this result.
    pub bootstrap_draws: Option<Vec<f64>>,
}

impl EstimateResult {
    pub(crate) fn from_scores(
        scores: Vec<f64>,
        weights: &[f64],
        nuisances: NuisanceFits,
        fold_plan: Option<FoldPlan>,
        warnings: Vec<String>,
    ) -> Self {
        let lambda_hat: f64 = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
        let mut psi: Vec<f64> = scores.iter().map(|s| s - lambda_hat).collect();
        let drift: f64 = psi.iter().zip(weights).map(|(p, w)| p * w).sum();
        for p in psi.iter_mut() {
            *p -= drift;
        }
        let se = weighted_se(&psi, weights);
        EstimateResult {
            lambda_hat,
            psi,
            se,
            weights: weights.to_vec(),
            n: scores.len(),
            nuisances,
            fold_plan,
            warnings,
            bootstrap_draws: None,
        }
    }
}

/// `sqrt(Σ ωᵢ² ψᵢ²)`; с uniform weights this is the population standard
/// deviation of ψ divided by √n.
pub(crate) fn weighted_se(psi: &[f64], weights: &[f64]) -> f64 {
    psi.iter().zip(weights).map(|(p, w)| (w * p) * (w * p)).sum::<f64>().sqrt()
}

/// A type-functional estimation request.
#[derive(Clone)]
pub struct TypeRequest<'a> {
    pub solution: &'a IdentificationSolution,
    pub covariate_multiplier: Option<usize>,
}

/// An outcome-functional estimation request.
#[derive(Clone)]
pub struct OutcomeRequest<'a> {
    pub solution: &'a IdentificationSolution,
    pub rho: &'a RhoSpec,
    pub target_treatment: &'a str,
    pub covariate_multiplier: Option<usize>,
}

#[derive(Clone)]
pub enum DrRequest<'a> {
    Type(TypeRequest<'a>),
    Outcome(OutcomeRequest<'a>),
}

/// Regression target identifier, used to share fits across problems.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) enum RegKey {
    Indicator(usize),
    Rho { t: usize, bits: (u8, u64, u64) },
}

pub(crate) fn rho_key(rho: &RhoSpec) -> (u8, u64, u64) {
    match *rho {
        RhoSpec::Identity { lo, hi } => (0, lo.to_bits(), hi.to_bits()),
        RhoSpec::Indicator { y } => (1, y.to_bits(), 0),
        RhoSpec::One => (2, 0, 0),
    }
}

/// One additive term of a double-robust score.
pub(crate) struct EngineTerm {
    pub t_idx: usize,
    pub reg: RegKey,
    pub rho: Option<RhoSpec>,
    /// Per-observation moment-target rows (n×p), multiplier already applied.
    pub targets: Arc<Mat>,
    /// Multiplier column (for the corruption shift of the μ-term).
    pub mult: Option<usize>,
    /// `Σ_j s_j(t) ε(z_j)` with ε = (−1, +1) over a binary instrument;
    /// `None` when the corruption shift is not defined for this term.
    pub mu_corruption: Option<f64>,
}

pub(crate) struct EngineProblem {
    pub label: String,
    pub terms: Vec<EngineTerm>,
}

pub(crate) enum Split {
    CrossFit(FoldPlan),
    None,
}

fn corruption_sign(z_idx: usize) -> f64 {
    if z_idx == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Builds the n×p design matrix for the dataset under the basis rule.
pub fn build_design(data: &Dataset, basis: &BasisSpec) -> Result<Mat, EstimateError> {
    let n = data.n();
    let mut out = Mat::zeros(n, basis.dim());
    match (&data.z, basis) {
        (InstrumentData::Discrete(z), BasisSpec::DiscreteInteracted { .. }) => {
            for i in 0..n {
                let row = basis.eval_discrete(z[i], data.x.row(i));
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        (InstrumentData::ContinuousPair { c, w }, BasisSpec::ContinuousPair { .. }) => {
            for i in 0..n {
                let row = basis.eval_continuous(c[i], w[i], data.x.row(i));
                out.row_mut(i).copy_from_slice(&row);
            }
        }
        _ => return Err(EstimateError::Data("basis mode does not match instrument data".into())),
    }
    Ok(out)
}

fn multiplier_column(data: &Dataset, mult: Option<usize>) -> Result<Vec<f64>, EstimateError> {
    match mult {
        None => Ok(vec![1.0; data.n()]),
        Some(j) => {
            if j >= data.x.cols() {
                return Err(EstimateError::BadMultiplier(j));
            }
            Ok(data.x.col(j))
        }
    }
}

/// Moment-target rows for one treatment block of a type solution.
fn type_targets(
    model: &ModelSpec,
    solution: &IdentificationSolution,
    basis: &BasisSpec,
    data: &Dataset,
    t_idx: usize,
    mult: &[f64],
) -> Mat {
    let d = model.n_treatments();
    let q = model.n_instruments();
    let n = data.n();
    let mut out = Mat::zeros(n, basis.dim());
    for i in 0..n {
        let x = data.x.row(i);
        let row = out.row_mut(i);
        for j in 0..q {
            let coef = solution.s[j * d + t_idx] * mult[i];
            if coef == 0.0 {
                continue;
            }
            let b = basis.eval_discrete(j, x);
            for (acc, v) in row.iter_mut().zip(&b) {
                *acc += coef * v;
            }
        }
    }
    out
}

/// Moment-target rows for an outcome solution.
fn outcome_targets(
    model: &ModelSpec,
    solution: &IdentificationSolution,
    basis: &BasisSpec,
    data: &Dataset,
    mult: &[f64],
) -> Mat {
    let q = model.n_instruments();
    let n = data.n();
    let mut out = Mat::zeros(n, basis.dim());
    for i in 0..n {
        let x = data.x.row(i);
        let row = out.row_mut(i);
        for j in 0..q {
            let coef = solution.s[j] * mult[i];
            if coef == 0.0 {
                continue;
            }
            let b = basis.eval_discrete(j, x);
            for (acc, v) in row.iter_mut().zip(&b) {
                *acc += coef * v;
            }
        }
    }
    out
}

/// Cache for moment-target matrices keyed exactly by what defines them, so
/// problems sharing a solution block (the quantile grids especially) also
/// share one representer fit per fold.
#[derive(Default)]
struct TargetCache {
    entries: Vec<(Vec<u64>, Arc<Mat>)>,
}

impl TargetCache {
    fn get_or_insert(&mut self, key: Vec<u64>, build: impl FnOnce() -> Mat) -> Arc<Mat> {
        if let Some((_, m)) = self.entries.iter().find(|(k, _)| *k == key) {
            return m.clone();
        }
        let m = Arc::new(build());
        self.entries.push((key, m.clone()));
        m
    }
}

fn target_key(kind: u8, t_idx: usize, mult: Option<usize>, s: &[f64]) -> Vec<u64> {
    let mut key = Vec::with_capacity(s.len() + 3);
    key.push(kind as u64);
    key.push(t_idx as u64);
    key.push(mult.map(|m| m as u64 + 1).unwrap_or(0));
    key.extend(s.iter().map(|v| v.to_bits()));
    key
}

fn build_problem(
    data: &Dataset,
    model: &ModelSpec,
    basis: &BasisSpec,
    request: &DrRequest,
    label: String,
    cache: &mut TargetCache,
) -> Result<EngineProblem, EstimateError> {
    match request {
        DrRequest::Type(req) => {
            let sol = req.solution;
            if sol.kind != SolutionKind::Type {
                return Err(EstimateError::Data("expected a type solution".into()));
            }
            if !sol.identified {
                return Err(EstimateError::NotIdentified { residual: sol.residual });
            }
            let d = model.n_treatments();
            let q = model.n_instruments();
            let mult = multiplier_column(data, req.covariate_multiplier)?;
            let mut terms = Vec::new();
            for t_idx in 0..d {
                let block: Vec<f64> = (0..q).map(|j| sol.s[j * d + t_idx]).collect();
                if block.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let mu_corruption =
                    Some(block.iter().enumerate().map(|(j, s)| s * corruption_sign(j)).sum());
                let key = target_key(0, t_idx, req.covariate_multiplier, &sol.s);
                let targets = cache
                    .get_or_insert(key, || type_targets(model, sol, basis, data, t_idx, &mult));
                terms.push(EngineTerm {
                    t_idx,
                    reg: RegKey::Indicator(t_idx),
                    rho: None,
                    targets,
                    mult: req.covariate_multiplier,
                    mu_corruption,
                });
            }
            Ok(EngineProblem { label, terms })
        }
        DrRequest::Outcome(req) => {
            let sol = req.solution;
            if sol.kind != SolutionKind::Outcome {
                return Err(EstimateError::Data("expected an outcome solution".into()));
            }
            if !sol.identified {
                return Err(EstimateError::NotIdentified { residual: sol.residual });
            }
            if !req.rho.is_bounded() {
                return Err(EstimateError::UnboundedRho);
            }
            let t_idx = model
                .treatments
                .index_of(req.target_treatment)
                .ok_or_else(|| EstimateError::UnknownTreatment(req.target_treatment.into()))?;
            let mult = multiplier_column(data, req.covariate_multiplier)?;
            let mu_corruption =
                Some(sol.s.iter().enumerate().map(|(j, s)| s * corruption_sign(j)).sum());
            let key = target_key(1, t_idx, req.covariate_multiplier, &sol.s);
            let targets =
                cache.get_or_insert(key, || outcome_targets(model, sol, basis, data, &mult));
            let terms = vec![EngineTerm {
                t_idx,
                reg: RegKey::Rho { t: t_idx, bits: rho_key(req.rho) },
                rho: Some(req.rho.clone()),
                targets,
                mult: req.covariate_multiplier,
                mu_corruption,
            }];
            Ok(EngineProblem { label, terms })
        }
    }
}

fn regression_response(data: &Dataset, key: &RegKey, rho: Option<&RhoSpec>) -> Vec<f64> {
    match key {
        RegKey::Indicator(t) => {
            data.t.iter().map(|&ti| if ti == *t { 1.0 } else { 0.0 }).collect()
        }
        RegKey::Rho { t, .. } => {
            let rho = rho.expect("rho present for outcome targets");
            data.y
                .iter()
                .zip(&data.t)
                .map(|(&y, &ti)| if ti == *t { rho.apply(y) } else { 0.0 })
                .collect()
        }
    }
}

/// Fits a regression nuisance on the training subset under the penalty policy.
fn fit_regression(
    design: &Mat,
    response: &[f64],
    weights: &[f64],
    policy: &PenaltyPolicy,
    fit: &FitSettings,
) -> Result<LassoFit, LassoError> {
    let problem = PenaltyProblem::Regression { response };
    match policy {
        PenaltyPolicy::Fixed(alpha) => {
            let grid = penalty_grid(design, &problem, weights, crate::lasso::GRID_SIZE)?;
            fit_lasso_warm_grid(design, response, weights, &grid, *alpha, fit)
        }
        PenaltyPolicy::CrossValidate { folds, grid_size } => {
            let grid = penalty_grid(design, &problem, weights, *grid_size)?;
            let alpha = cross_validate_penalty(design, &problem, weights, &grid, *folds)?;
            fit_lasso_warm_grid(design, response, weights, &grid, alpha, fit)
        }
        PenaltyPolicy::LeaveOneOut { grid_size } => {
            let grid = penalty_grid(design, &problem, weights, *grid_size)?;
            let alpha =
                cross_validate_penalty(design, &problem, weights, &grid, design.rows())?;
            fit_lasso_warm_grid(design, response, weights, &grid, alpha, fit)
        }
    }
}

/// Fits a representer nuisance on the training subset under the penalty policy.
fn fit_representer(
    design: &Mat,
    targets: &Mat,
    weights: &[f64],
    policy: &PenaltyPolicy,
    fit: &FitSettings,
) -> Result<LassoFit, LassoError> {
    let problem = PenaltyProblem::Riesz { targets };
    match policy {
        PenaltyPolicy::Fixed(alpha) => fit_riesz(design, targets, weights, *alpha, fit),
        PenaltyPolicy::CrossValidate { folds, grid_size } => {
            let grid = penalty_grid(design, &problem, weights, *grid_size)?;
            let alpha = cross_validate_penalty(design, &problem, weights, &grid, *folds)?;
            fit_riesz(design, targets, weights, alpha, fit)
        }
        PenaltyPolicy::LeaveOneOut { grid_size } => {
            let grid = penalty_grid(design, &problem, weights, *grid_size)?;
            let alpha =
                cross_validate_penalty(design, &problem, weights, &grid, design.rows())?;
            fit_riesz(design, targets, weights, alpha, fit)
        }
    }
}

/// Runs a batch of double-robust problems over a shared split, sharing
/// regression fits across problems with identical targets and representer
/// fits across problems sharing a target matrix.
pub(crate) fn run_engine(
    data: &Dataset,
    design: &Mat,
    problems: &[EngineProblem],
    split: Split,
    settings: &EstimatorSettings,
) -> Result<Vec<EstimateResult>, EstimateError> {
    let n = data.n();
    if !settings.corruption.is_none() {
        let z = data.z_discrete().map_err(|_| EstimateError::UnsupportedCorruption)?;
        if z.iter().any(|&zi| zi > 1) {
            return Err(EstimateError::UnsupportedCorruption);
        }
        if problems.iter().any(|p| p.terms.iter().any(|t| t.mu_corruption.is_none())) {
            return Err(EstimateError::UnsupportedCorruption);
        }
    }
    let c_beta = settings.corruption.beta_shift();
    let c_gamma = settings.corruption.gamma_shift();
    let eps: Vec<f64> = match (&data.z, settings.corruption.is_none()) {
        (InstrumentData::Discrete(z), false) => z.iter().map(|&j| corruption_sign(j)).collect(),
        _ => vec![0.0; n],
    };

    let fold_sets: Vec<(Vec<usize>, Vec<usize>)> = match &split {
        Split::CrossFit(plan) => (0..plan.k)
            .map(|k| (plan.complement_indices(k), plan.fold_indices(k)))
            .collect(),
        Split::None => {
            let all: Vec<usize> = (0..n).collect();
            vec![(all.clone(), all)]
        }
    };

    let mut scores: Vec<Vec<f64>> = vec![vec![0.0; n]; problems.len()];
    let mut nuisances: Vec<NuisanceFits> = vec![NuisanceFits::default(); problems.len()];

    for (fold_id, (train, hold)) in fold_sets.iter().enumerate() {
        let sub_design = take_rows(design, train);
        let sub_w: Vec<f64> = train.iter().map(|&i| data.omega[i]).collect();

        let mut reg_fits: HashMap<RegKey, Arc<LassoFit>> = HashMap::new();
        let mut riesz_fits: HashMap<usize, Arc<LassoFit>> = HashMap::new();

        for (p_idx, problem) in problems.iter().enumerate() {
            for term in &problem.terms {
                if !reg_fits.contains_key(&term.reg) {
                    let response = regression_response(data, &term.reg, term.rho.as_ref());
                    let sub_y: Vec<f64> = train.iter().map(|&i| response[i]).collect();
                    let fit =
                        fit_regression(&sub_design, &sub_y, &sub_w, &settings.penalty, &settings.fit)?;
                    nuisances[p_idx].entries.push(NuisanceEntry {
                        fold: fold_id,
                        label: format!("beta[{:?}]", term.reg),
                        alpha: fit.penalty,
                        coefficients: fit.coefficients.clone(),
                    });
                    reg_fits.insert(term.reg.clone(), Arc::new(fit));
                }
                let key = Arc::as_ptr(&term.targets) as usize;
                if !riesz_fits.contains_key(&key) {
                    let sub_t = take_rows(&term.targets, train);
                    let fit = fit_representer(
                        &sub_design,
                        &sub_t,
                        &sub_w,
                        &settings.penalty,
                        &settings.fit,
                    )?;
                    nuisances[p_idx].entries.push(NuisanceEntry {
                        fold: fold_id,
                        label: format!("gamma[{} t={}]", problem.label, term.t_idx),
                        alpha: fit.penalty,
                        coefficients: fit.coefficients.clone(),
                    });
                    riesz_fits.insert(key, Arc::new(fit));
                }
            }
        }

        for (p_idx, problem) in problems.iter().enumerate() {
            for term in &problem.terms {
                let beta = &reg_fits[&term.reg].coefficients;
                let gamma =
                    &riesz_fits[&(Arc::as_ptr(&term.targets) as usize)].coefficients;
                let response = regression_response(data, &term.reg, term.rho.as_ref());
                let mult = multiplier_column(data, term.mult)?;
                let mu_corr = term.mu_corruption.unwrap_or(0.0);
                for &i in hold {
                    let b = design.row(i);
                    let beta_pred = dot(b, beta) + c_beta * eps[i];
                    let gamma_pred = dot(b, gamma) + c_gamma * eps[i];
                    let mu_term =
                        dot(term.targets.row(i), beta) + c_beta * mult[i] * mu_corr;
                    scores[p_idx][i] +=
                        gamma_pred * (response[i] - beta_pred) + mu_term;
                }
            }
        }
    }

    let fold_plan = match split {
        Split::CrossFit(plan) => Some(plan),
        Split::None => None,
    };
    Ok(scores
        .into_iter()
        .zip(nuisances)
        .map(|(s, nf)| {
            EstimateResult::from_scores(s, &data.omega, nf, fold_plan.clone(), Vec::new())
        })
        .collect())
}

/// Cross-fitted double-robust estimator for a type functional.
pub fn estimate_type_functional(
    data: &Dataset,
    model: &ModelSpec,
    request: &TypeRequest,
    basis: &BasisSpec,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let design = build_design(data, basis)?;
    let plan = make_folds(data.n(), settings.folds, settings.seed)?;
    let problem = build_problem(
        data,
        model,
        basis,
        &DrRequest::Type(request.clone()),
        "type".into(),
        &mut TargetCache::default(),
    )?;
    let mut out = run_engine(data, &design, &[problem], Split::CrossFit(plan), settings)?;
    Ok(out.remove(0))
}

/// Cross-fitted double-robust estimator for an outcome functional.
pub fn estimate_outcome_functional(
    data: &Dataset,
    model: &ModelSpec,
    request: &OutcomeRequest,
    basis: &BasisSpec,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let design = build_design(data, basis)?;
    let plan = make_folds(data.n(), settings.folds, settings.seed)?;
    let problem = build_problem(
        data,
        model,
        basis,
        &DrRequest::Outcome(request.clone()),
        "outcome".into(),
        &mut TargetCache::default(),
    )?;
    let mut out = run_engine(data, &design, &[problem], Split::CrossFit(plan), settings)?;
    Ok(out.remove(0))
}

/// Survey-weighted single-fit estimator: nuisances fit on the full sample,
/// scores aggregated with the person-level weights.
pub fn estimate_weighted_no_split(
    data: &Dataset,
    model: &ModelSpec,
    request: &DrRequest,
    basis: &BasisSpec,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let design = build_design(data, basis)?;
    let label = match request {
        DrRequest::Type(_) => "type",
        DrRequest::Outcome(_) => "outcome",
    };
    let problem =
        build_problem(data, model, basis, request, label.into(), &mut TargetCache::default())?;
    let mut out = run_engine(data, &design, &[problem], Split::None, settings)?;
    Ok(out.remove(0))
}

/// Batched variant sharing folds and regression fits across requests; the
/// results are suitable for a joint bootstrap registry.
pub fn estimate_batch(
    data: &Dataset,
    model: &ModelSpec,
    requests: &[(String, DrRequest)],
    basis: &BasisSpec,
    settings: &EstimatorSettings,
    no_split: bool,
) -> Result<Vec<EstimateResult>, EstimateError> {
    let design = build_design(data, basis)?;
    let mut problems = Vec::with_capacity(requests.len());
    let mut cache = TargetCache::default();
    for (name, req) in requests {
        problems.push(build_problem(data, model, basis, req, name.clone(), &mut cache)?);
    }
    let split = if no_split {
        Split::None
    } else {
        Split::CrossFit(make_folds(data.n(), settings.folds, settings.seed)?)
    };
    run_engine(data, &design, &problems, split, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::solve_type_functional;
    use crate::model::{preset_late3, response_matrix_types};

    #[test]
    fn folds_partition_and_are_deterministic() {
        let plan = make_folds(10, 5, 3).unwrap();
        for k in 0..5 {
            assert_eq!(plan.fold_indices(k).len(), 2);
        }
        let plan11 = make_folds(11, 5, 9).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|k| plan11.fold_indices(k).len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert_eq!(make_folds(200, 7, 42).unwrap(), make_folds(200, 7, 42).unwrap());
        assert_ne!(
            make_folds(200, 7, 42).unwrap().assignment,
            make_folds(200, 7, 43).unwrap().assignment
        );
        assert!(make_folds(3, 5, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn dataset_validation() {
        let model = preset_late3();
        let x = Mat::from_rows(&[vec![1.0], vec![0.0]]);
        let data = Dataset::from_labels(
            &model,
            vec![0.5, 1.5],
            &["0".into(), "1".into()],
            &["0".into(), "1".into()],
            x.clone(),
            Some(vec![2.0, 6.0]),
        )
        .unwrap();
        assert_eq!(data.omega, vec![0.25, 0.75]);

        let err = Dataset::from_labels(
            &model,
            vec![0.5, 1.5],
            &["0".into(), "7".into()],
            &["0".into(), "1".into()],
            x,
            None,
        )
        .unwrap_err();
        match err {
            EstimateError::UnknownLabel { row, label, .. } => {
                assert_eq!(row, 1);
                assert_eq!(label, "7");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    /// A 4-cell finite population where T is deterministic in Z and the basis
    /// saturates Z: the estimator at alpha = 0 reproduces the plug-in
    /// frequency exactly.
    #[test]
    fn saturated_unpenalized_fit_is_plug_in() {
        let model = preset_late3();
        // All units are compliers or always-takers depending on Z arm counts.
        // Build data where T = Z (every unit a complier).
        let n = 40;
        let mut y = Vec::new();
        let mut t_labels = Vec::new();
        let mut z_labels = Vec::new();
        let mut xs = Vec::new();
        for i in 0..n {
            let z = i % 2;
            y.push(0.0);
            t_labels.push(z.to_string());
            z_labels.push(z.to_string());
            xs.push(vec![]);
        }
        let data = Dataset::from_labels(
            &model,
            y,
            &t_labels,
            &z_labels,
            Mat::from_rows(&xs),
            None,
        )
        .unwrap();
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 0 };
        let omega = response_matrix_types(&model).unwrap();
        let ell = model.ell_indicator(&["C"]).unwrap();
        let sol = solve_type_functional(&omega, &ell).unwrap();
        let settings = EstimatorSettings {
            folds: 2,
            penalty: PenaltyPolicy::Fixed(0.0),
            ..EstimatorSettings::default()
        };
        let req = TypeRequest { solution: &sol, covariate_multiplier: None };
        let result = estimate_type_functional(&data, &model, &req, &basis, &settings).unwrap();
        // Hand computation: within each Z cell P(T = t | Z) is exact 0/1, so
        // the plug-in functional is s-weighted cell frequencies:
        // λ = Σ_j Σ_t s[j,t] P̂(T = t | z_j) = s[0,0] + s[1,1] = 0.5 + 0.5 = 1.
        assert!((result.lambda_hat - 1.0).abs() < 1e-10, "{}", result.lambda_hat);
        assert!(result.psi.iter().all(|p| p.abs() < 1e-10));
    }

    #[test]
    fn zero_functional_estimates_zero() {
        let model = preset_late3();
        let n = 30;
        let mut y = Vec::new();
        let mut t_labels = Vec::new();
        let mut z_labels = Vec::new();
        let mut xs = Vec::new();
        for i in 0..n {
            let z = i % 2;
            y.push(i as f64);
            t_labels.push((i % 2).to_string());
            z_labels.push(z.to_string());
            xs.push(vec![(i % 3) as f64]);
        }
        let data =
            Dataset::from_labels(&model, y, &t_labels, &z_labels, Mat::from_rows(&xs), None)
                .unwrap();
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 1 };
        let omega = response_matrix_types(&model).unwrap();
        let sol = solve_type_functional(&omega, &[0.0; 3]).unwrap();
        let settings = EstimatorSettings {
            folds: 3,
            penalty: PenaltyPolicy::Fixed(0.01),
            ..EstimatorSettings::default()
        };
        let req = TypeRequest { solution: &sol, covariate_multiplier: None };
        let result = estimate_type_functional(&data, &model, &req, &basis, &settings).unwrap();
        assert_eq!(result.lambda_hat, 0.0);
        assert!(result.psi.iter().all(|&p| p == 0.0));
        assert_eq!(result.se, 0.0);
    }

    #[test]
    fn refuses_unidentified_solutions() {
        let model = crate::model::preset_mto7();
        let omega_t = crate::model::response_matrix_outcome(&model, "00").unwrap();
        let ell = model.ell_indicator(&["CN"]).unwrap();
        let sol = crate::identify::solve_outcome_functional(&omega_t, &ell).unwrap();
        assert!(!sol.identified);
        let n = 8;
        let data = Dataset::from_labels(
            &model,
            vec![0.0; n],
            &vec!["00".to_string(); n],
            &(0..n).map(|i| (i % 2).to_string()).collect::<Vec<_>>(),
            Mat::from_rows(&vec![vec![]; n]),
            None,
        )
        .unwrap();
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 0 };
        let rho = RhoSpec::Identity { lo: -1.0, hi: 1.0 };
        let req = OutcomeRequest {
            solution: &sol,
            rho: &rho,
            target_treatment: "00",
            covariate_multiplier: None,
        };
        let err = estimate_outcome_functional(
            &data,
            &model,
            &req,
            &basis,
            &EstimatorSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EstimateError::NotIdentified { .. }));
    }

    #[test]
    fn unbounded_rho_is_rejected() {
        let model = preset_late3();
        let omega_t = crate::model::response_matrix_outcome(&model, "1").unwrap();
        let sol =
            crate::identify::solve_outcome_functional(&omega_t, &model.ell_indicator(&["C"]).unwrap())
                .unwrap();
        let data = Dataset::from_labels(
            &model,
            vec![0.0; 6],
            &vec!["1".to_string(); 6],
            &(0..6).map(|i| (i % 2).to_string()).collect::<Vec<_>>(),
            Mat::from_rows(&vec![vec![]; 6]),
            None,
        )
        .unwrap();
        let rho = RhoSpec::Identity { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
        let req = OutcomeRequest {
            solution: &sol,
            rho: &rho,
            target_treatment: "1",
            covariate_multiplier: None,
        };
        let err = estimate_outcome_functional(
            &data,
            &model,
            &req,
            &BasisSpec::DiscreteInteracted { q: 2, m: 0 },
            &EstimatorSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EstimateError::UnboundedRho));
    }

    #[test]
    fn weight_concentrated_on_one_observation() {
        // Degenerate weights: the no-split estimate equals that observation's
        // score. With a saturated basis and T deterministic in Z the score is
        // the plug-in functional, so check λ̂ against the score directly.
        let model = preset_late3();
        let n = 12;
        let mut omega = vec![1e-12; n];
        omega[4] = 1.0;
        let data = Dataset::from_labels(
            &model,
            (0..n).map(|i| i as f64).collect(),
            &(0..n).map(|i| (i % 2).to_string()).collect::<Vec<_>>(),
            &(0..n).map(|i| (i % 2).to_string()).collect::<Vec<_>>(),
            Mat::from_rows(&vec![vec![]; n]),
            Some(omega),
        )
        .unwrap();
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 0 };
        let omega_m = response_matrix_types(&model).unwrap();
        let sol = solve_type_functional(&omega_m, &model.ell_indicator(&["C"]).unwrap()).unwrap();
        let settings = EstimatorSettings {
            penalty: PenaltyPolicy::Fixed(0.0),
            ..EstimatorSettings::default()
        };
        let req = DrRequest::Type(TypeRequest { solution: &sol, covariate_multiplier: None });
        let result =
            estimate_weighted_no_split(&data, &model, &req, &basis, &settings).unwrap();
        // Everyone is a complier here, so every score is 1; the weighted sum
        // equals observation 4's score.
        assert!((result.lambda_hat - 1.0).abs() < 1e-9);
    }

    #[test]
    fn centering_is_exact() {
        let model = preset_late3();
        let n = 50;
        let mut y = Vec::new();
        let mut t_labels = Vec::new();
        let mut z_labels = Vec::new();
        for i in 0..n {
            let z = i % 2;
            let t = if i % 5 == 0 { 1 - z } else { z };
            y.push((i as f64).sin());
            t_labels.push(t.to_string());
            z_labels.push(z.to_string());
        }
        let data = Dataset::from_labels(
            &model,
            y,
            &t_labels,
            &z_labels,
            Mat::from_rows(&vec![vec![]; n]),
            None,
        )
        .unwrap();
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 0 };
        let omega = response_matrix_types(&model).unwrap();
        let sol = solve_type_functional(&omega, &model.ell_indicator(&["C"]).unwrap()).unwrap();
        let settings = EstimatorSettings {
            folds: 5,
            penalty: PenaltyPolicy::Fixed(0.001),
            ..EstimatorSettings::default()
        };
        let req = TypeRequest { solution: &sol, covariate_multiplier: None };
        let result = estimate_type_functional(&data, &model, &req, &basis, &settings).unwrap();
        let total: f64 =
            result.psi.iter().zip(&result.weights).map(|(p, w)| p * w).sum();
        assert!(total.abs() < 1e-14, "centering drift {total}");
    }

    #[test]
    fn fold_exclusion_audited_by_recomputation() {
        // Perturbing an observation inside fold k must not change fold-k fits.
        let model = preset_late3();
        let n = 60;
        let build = |bump: bool| {
            let mut y = Vec::new();
            let mut t_labels = Vec::new();
            let mut z_labels = Vec::new();
            for i in 0..n {
                let z = i % 2;
                let t = if i % 7 == 0 { 0 } else { z };
                let mut yi = (i as f64 * 0.37).cos();
                if bump && i == 13 {
                    yi += 100.0;
                }
                y.push(yi);
                t_labels.push(t.to_string());
                z_labels.push(z.to_string());
            }
            Dataset::from_labels(
                &model,
                y,
                &t_labels,
                &z_labels,
                Mat::from_rows(&vec![vec![]; n]),
                None,
            )
            .unwrap()
        };
        let basis = BasisSpec::DiscreteInteracted { q: 2, m: 0 };
        let omega_t = crate::model::response_matrix_outcome(&model, "1").unwrap();
        let sol = crate::identify::solve_outcome_functional(
            &omega_t,
            &model.ell_indicator(&["C"]).unwrap(),
        )
        .unwrap();
        let rho = RhoSpec::Identity { lo: -200.0, hi: 200.0 };
        let settings = EstimatorSettings {
            folds: 3,
            seed: 5,
            penalty: PenaltyPolicy::Fixed(0.001),
            ..EstimatorSettings::default()
        };
        let req = OutcomeRequest {
            solution: &sol,
            rho: &rho,
            target_treatment: "1",
            covariate_multiplier: None,
        };
        let base =
            estimate_outcome_functional(&build(false), &model, &req, &basis, &settings).unwrap();
        let bumped =
            estimate_outcome_functional(&build(true), &model, &req, &basis, &settings).unwrap();
        let plan = base.fold_plan.as_ref().unwrap();
        let bumped_fold = plan.assignment[13];
        for (a, b) in base.nuisances.entries.iter().zip(&bumped.nuisances.entries) {
            assert_eq!(a.fold, b.fold);
            if a.fold == bumped_fold && a.label.starts_with("beta") {
                // Fit excludes observation 13, so it is unchanged.
                assert_eq!(a.coefficients, b.coefficients, "{}", a.label);
            }
        }
    }
}
