//! Identification of target functionals by finite linear systems on the
//! response matrices: minimum-norm least-squares coefficients, the induced
//! observable weights, the moment targets consumed by estimation, and the
//! rank / null-space efficiency checks.

use crate::linalg::{norm2, svd, Mat};
use crate::model::{
    response_matrix_outcome, response_matrix_types, validate_model, BasisSpec, FunctionalKind,
    FunctionalSpec, ModelSpec, MtoLayout,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative residual below which a system counts as solved exactly.
pub const TOL_ID: f64 = 1e-8;
/// Singular values below `TOL_RANK * s_max` are treated as zero.
pub const TOL_RANK: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("functional is not identified (residual {residual:.3e})")]
    NotIdentified { residual: f64 },
    #[error("instrument probability must be strictly positive, got {0}")]
    Positivity(f64),
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error("functional `{0}` is malformed: {1}")]
    BadFunctional(String, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    Type,
    Outcome,
}

/// Solution of the identification system `Ω s = ℓ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentificationSolution {
    /// Minimum-Euclidean-norm least-squares coefficients. Length q·d for type
    /// functionals (instrument-major blocks of d entries) and q for outcome
    /// functionals.
    pub s: Vec<f64>,
    /// Euclidean norm of `Ω s − ℓ`.
    pub residual: f64,
    pub identified: bool,
    pub kind: SolutionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_treatment: Option<String>,
}

fn solve(omega: &Mat, ell: &[f64], kind: SolutionKind) -> Result<IdentificationSolution, IdentifyError> {
    if ell.len() != omega.rows() {
        return Err(IdentifyError::Dimension(format!(
            "ell has {} entries but the response matrix has {} rows",
            ell.len(),
            omega.rows()
        )));
    }
    let dec = svd(omega);
    let s = dec.min_norm_solve(ell, TOL_RANK);
    let fitted = omega.matvec(&s);
    let residual = norm2(
        &fitted.iter().zip(ell).map(|(f, l)| f - l).collect::<Vec<_>>(),
    );
    let identified = residual <= TOL_ID * norm2(ell).max(1.0);
    Ok(IdentificationSolution { s, residual, identified, kind, target_treatment: None })
}

/// Minimum-norm solution of the type-functional system on the r×(q·d)
/// response matrix.
pub fn solve_type_functional(
    omega: &Mat,
    ell: &[f64],
) -> Result<IdentificationSolution, IdentifyError> {
    solve(omega, ell, SolutionKind::Type)
}

/// Minimum-norm solution of the outcome-functional system on the r×q
/// treatment-specific response matrix.
pub fn solve_outcome_functional(
    omega_t: &Mat,
    ell: &[f64],
) -> Result<IdentificationSolution, IdentifyError> {
    solve(omega_t, ell, SolutionKind::Outcome)
}

/// Solves a declared type or outcome functional against its model.
pub fn solve_functional(
    model: &ModelSpec,
    spec: &FunctionalSpec,
) -> Result<IdentificationSolution, IdentifyError> {
    let ell = spec.ell.as_ref().ok_or_else(|| {
        IdentifyError::BadFunctional(spec.name.clone(), "missing ell table".into())
    })?;
    match spec.kind {
        FunctionalKind::Type => solve_type_functional(&response_matrix_types(model)?, ell),
        FunctionalKind::Outcome => {
            let t = spec.target_treatment.as_ref().ok_or_else(|| {
                IdentifyError::BadFunctional(spec.name.clone(), "missing target_treatment".into())
            })?;
            let mut sol = solve_outcome_functional(&response_matrix_outcome(model, t)?, ell)?;
            sol.target_treatment = Some(t.clone());
            Ok(sol)
        }
        FunctionalKind::Derived => Err(IdentifyError::BadFunctional(
            spec.name.clone(),
            "derived functionals are combinations, not systems".into(),
        )),
    }
}

/// Identifying weights over observables for one covariate stratum.
#[derive(Clone, Debug)]
pub enum KappaWeights {
    /// `values[t][z] = s[z·d + t] / P(Z = z | X)`.
    Type { values: Mat },
    /// Weight per instrument value, applied to observations with `T = t`.
    Outcome { values: Vec<f64>, target_treatment: Option<String> },
}

impl KappaWeights {
    /// Weight attached to an observation with treatment index `t` and
    /// instrument index `z`.
    pub fn at(&self, t: usize, z: usize, obs_matches_target: bool) -> f64 {
        match self {
            KappaWeights::Type { values } => values.get(t, z),
            KappaWeights::Outcome { values, .. } => {
                if obs_matches_target {
                    values[z]
                } else {
                    0.0
                }
            }
        }
    }
}

/// Converts an identification solution into κ-weights given strictly positive
/// instrument probabilities for the stratum. Exact on finite populations;
/// used as an oracle rather than by the double-robust estimator.
pub fn kappa_weights(
    solution: &IdentificationSolution,
    pz_given_x: &[f64],
) -> Result<KappaWeights, IdentifyError> {
    if !solution.identified {
        return Err(IdentifyError::NotIdentified { residual: solution.residual });
    }
    for &p in pz_given_x {
        if !(p > 0.0) {
            return Err(IdentifyError::Positivity(p));
        }
    }
    let q = pz_given_x.len();
    match solution.kind {
        SolutionKind::Type => {
            if solution.s.len() % q != 0 {
                return Err(IdentifyError::Dimension(format!(
                    "solution length {} is not a multiple of q = {q}",
                    solution.s.len()
                )));
            }
            let d = solution.s.len() / q;
            let mut values = Mat::zeros(d, q);
            for j in 0..q {
                for t in 0..d {
                    values.set(t, j, solution.s[j * d + t] / pz_given_x[j]);
                }
            }
            Ok(KappaWeights::Type { values })
        }
        SolutionKind::Outcome => {
            if solution.s.len() != q {
                return Err(IdentifyError::Dimension(format!(
                    "solution length {} does not match q = {q}",
                    solution.s.len()
                )));
            }
            let values = solution.s.iter().zip(pz_given_x).map(|(s, p)| s / p).collect();
            Ok(KappaWeights::Outcome {
                values,
                target_treatment: solution.target_treatment.clone(),
            })
        }
    }
}

/// Moment target `M(x) = Σ_j s_j b(z_j, x)` for an outcome solution.
pub fn moment_target_outcome(
    solution: &IdentificationSolution,
    basis: &BasisSpec,
    x: &[f64],
) -> Result<Vec<f64>, IdentifyError> {
    if solution.kind != SolutionKind::Outcome {
        return Err(IdentifyError::Dimension("expected an outcome solution".into()));
    }
    if !solution.identified {
        return Err(IdentifyError::NotIdentified { residual: solution.residual });
    }
    let q = solution.s.len();
    let mut m = vec![0.0; basis.dim()];
    for j in 0..q {
        let b = basis.eval_discrete(j, x);
        for (acc, v) in m.iter_mut().zip(&b) {
            *acc += solution.s[j] * v;
        }
    }
    Ok(m)
}

/// Moment target for one treatment block of a type solution:
/// `M_t(x) = Σ_j s[j·d + t] b(z_j, x)`.
pub fn moment_target_type(
    solution: &IdentificationSolution,
    basis: &BasisSpec,
    x: &[f64],
    treatment_idx: usize,
    n_treatments: usize,
) -> Result<Vec<f64>, IdentifyError> {
    if solution.kind != SolutionKind::Type {
        return Err(IdentifyError::Dimension("expected a type solution".into()));
    }
    if !solution.identified {
        return Err(IdentifyError::NotIdentified { residual: solution.residual });
    }
    let d = n_treatments;
    if solution.s.len() % d != 0 {
        return Err(IdentifyError::Dimension("solution length is not a multiple of d".into()));
    }
    let q = solution.s.len() / d;
    let mut m = vec![0.0; basis.dim()];
    for j in 0..q {
        let coef = solution.s[j * d + treatment_idx];
        if coef == 0.0 {
            continue;
        }
        let b = basis.eval_discrete(j, x);
        for (acc, v) in m.iter_mut().zip(&b) {
            *acc += coef * v;
        }
    }
    Ok(m)
}

/// `true` for treatment `t` iff the r×q matrix `[1{t_i*(z_j) = t}]` has
/// numerical rank q.
pub fn check_rank_condition(model: &ModelSpec) -> Result<Vec<(String, bool)>, IdentifyError> {
    let q = model.n_instruments();
    let mut out = Vec::with_capacity(model.n_treatments());
    for t in &model.treatments.labels {
        let omega_t = response_matrix_outcome(model, t)?;
        let rank = svd(&omega_t).rank(TOL_RANK);
        out.push((t.clone(), rank == q));
    }
    Ok(out)
}

/// `true` iff every null-space element of the type response matrix is
/// constant across treatments within each instrument block, tested by
/// computing an orthonormal null basis and projecting out the block-constant
/// span.
pub fn check_nullspace_condition(model: &ModelSpec) -> Result<bool, IdentifyError> {
    let omega = response_matrix_types(model)?;
    let q = model.n_instruments();
    let d = model.n_treatments();
    let dec = svd(&omega);
    let basis = dec.null_basis(q * d, TOL_RANK);
    for v in &basis {
        let mut resid = v.clone();
        for j in 0..q {
            let block = &mut resid[j * d..(j + 1) * d];
            let mean: f64 = block.iter().sum::<f64>() / d as f64;
            for e in block.iter_mut() {
                *e -= mean;
            }
        }
        if norm2(&resid) > TOL_RANK.max(1e-12) * 1.0f64.max(norm2(v)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Per-functional identification verdict.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalVerdict {
    pub name: String,
    pub kind: FunctionalKind,
    pub identified: bool,
    /// Whether the target, while not identified by the support restriction
    /// alone, is estimable through the mediation score when the model
    /// declares the mediator-exogeneity assumption.
    pub eimc_route: bool,
    pub estimable: bool,
    pub residual: Option<f64>,
    pub s: Option<Vec<f64>>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentificationReport {
    pub model_diagnostics: Vec<String>,
    pub functionals: Vec<FunctionalVerdict>,
    pub rank_condition: Vec<(String, bool)>,
    pub nullspace_condition: bool,
}

/// Runs identification plus the efficiency checks for a list of declared
/// functionals. Derived functionals count as identified exactly when all of
/// their components are estimable.
pub fn identification_report(
    model: &ModelSpec,
    functionals: &[FunctionalSpec],
) -> Result<IdentificationReport, IdentifyError> {
    let model_diagnostics = validate_model(model);
    if !model_diagnostics.is_empty() {
        return Ok(IdentificationReport {
            model_diagnostics,
            functionals: Vec::new(),
            rank_condition: Vec::new(),
            nullspace_condition: false,
        });
    }
    let layout = MtoLayout::detect(model);
    let mut verdicts: Vec<FunctionalVerdict> = Vec::with_capacity(functionals.len());
    for f in functionals {
        let verdict = match f.kind {
            FunctionalKind::Type | FunctionalKind::Outcome => {
                let sol = solve_functional(model, f)?;
                let eimc_route = f.kind == FunctionalKind::Outcome
                    && !sol.identified
                    && layout.as_ref().map(|l| l.mediation_pattern(model, f).is_some()).unwrap_or(false);
                let estimable = sol.identified || (eimc_route && model.eimc);
                let note = if eimc_route {
                    Some(if model.eimc {
                        "not identified by the support restriction; estimated via the mediation orthogonal score under the declared mediator-exogeneity assumption".to_string()
                    } else {
                        "not identified by the support restriction; would require the mediator-exogeneity assumption".to_string()
                    })
                } else {
                    None
                };
                FunctionalVerdict {
                    name: f.name.clone(),
                    kind: f.kind.clone(),
                    identified: sol.identified,
                    eimc_route,
                    estimable,
                    residual: Some(sol.residual),
                    s: Some(sol.s),
                    note,
                }
            }
            FunctionalKind::Derived => {
                let combine = f.combine.as_ref().ok_or_else(|| {
                    IdentifyError::BadFunctional(f.name.clone(), "missing combine".into())
                })?;
                let comps = combine.components();
                let mut all = true;
                let mut missing = Vec::new();
                for c in &comps {
                    match verdicts.iter().find(|v| &v.name == c) {
                        Some(v) if v.estimable => {}
                        Some(_) => all = false,
                        None => {
                            all = false;
                            missing.push(c.clone());
                        }
                    }
                }
                FunctionalVerdict {
                    name: f.name.clone(),
                    kind: FunctionalKind::Derived,
                    identified: all,
                    eimc_route: false,
                    estimable: all,
                    residual: None,
                    s: None,
                    note: if missing.is_empty() {
                        None
                    } else {
                        Some(format!("components not declared before use: {}", missing.join(", ")))
                    },
                }
            }
        };
        verdicts.push(verdict);
    }
    Ok(IdentificationReport {
        model_diagnostics,
        functionals: verdicts,
        rank_condition: check_rank_condition(model)?,
        nullspace_condition: check_nullspace_condition(model)?,
    })
}
