//! Orchestration shared by the command-line interface and the Monte Carlo
//! harness: solve identification for every requested functional, route
//! unidentified outcome targets through the mediation scores when the model
//! declares the mediator-exogeneity assumption, estimate everything on a
//! shared fold plan, run one joint multiplier bootstrap, and evaluate derived
//! combinations and quantile effects.

use crate::estimate::{
    estimate_batch, mediation_batch, CdfArm, Dataset, DrRequest, EstimateError, EstimateResult,
    EstimatorSettings, OutcomeRequest, QteResult, QteSpec, TypeRequest,
};
use crate::identify::{solve_functional, IdentificationSolution, IdentifyError};
use crate::inference::{
    bootstrap_ci, delta_method, multiplier_bootstrap, BootstrapSettings, Ci, InferenceError,
};
use crate::model::{
    BasisSpec, CombineSpec, FunctionalKind, FunctionalSpec, MediationPattern, ModelSpec,
    MtoLayout, MtoType, RhoSpec,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("functional `{name}` is not identified (residual {residual:.3e}); see the identification report")]
    NotIdentified { name: String, residual: f64 },
    #[error("functional `{name}`: {source}")]
    Identify { name: String, source: IdentifyError },
    #[error("functional `{name}`: {source}")]
    Estimate { name: String, source: EstimateError },
    #[error("{0}")]
    EstimateGeneral(#[from] EstimateError),
    #[error("{0}")]
    Inference(#[from] InferenceError),
    #[error("functional `{name}` is malformed: {message}")]
    BadFunctional { name: String, message: String },
    #[error("quantile block `{name}`: {message}")]
    BadQte { name: String, message: String },
}

/// One arm of a quantile-effect construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmPlan {
    Outcome { target_treatment: String, ell: Vec<f64> },
    MediationCn,
    MediationCa,
}

/// A named quantile-treatment-effect request.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QtePlan {
    pub name: String,
    pub hi: ArmPlan,
    pub lo: ArmPlan,
    /// Indicator table of the conditioning group over the admissible types.
    pub group_ell: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
}

/// Everything one analysis run estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub functionals: Vec<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qte: Vec<QtePlan>,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for AnalysisPlan {
    fn default() -> Self {
        AnalysisPlan { functionals: Vec::new(), qte: Vec::new(), level: default_level() }
    }
}

fn default_level() -> f64 {
    0.95
}

impl AnalysisPlan {
    pub fn from_functionals(functionals: Vec<FunctionalSpec>) -> Self {
        AnalysisPlan { functionals, ..AnalysisPlan::default() }
    }
}

#[derive(Clone, Debug)]
pub struct NamedEstimate {
    pub name: String,
    pub kind: FunctionalKind,
    pub routed_via_mediation: bool,
    pub result: EstimateResult,
    pub ci: Option<Ci>,
}

#[derive(Clone, Debug)]
pub struct DerivedEstimate {
    pub name: String,
    pub point: f64,
    pub ci: Option<Ci>,
}

#[derive(Clone, Debug)]
pub struct NamedQte {
    pub name: String,
    pub result: QteResult,
    /// Per-τ symmetric bootstrap intervals when a bootstrap ran.
    pub cis: Option<Vec<Ci>>,
}

#[derive(Clone, Debug)]
pub struct AnalysisOutput {
    pub estimates: Vec<NamedEstimate>,
    pub derived: Vec<DerivedEstimate>,
    pub qte: Vec<NamedQte>,
}

enum Resolved {
    /// Index into the solved-system list.
    Dr(usize),
    Mediation(MediationPattern, RhoSpec),
    Derived,
}

fn solve_for(
    model: &ModelSpec,
    f: &FunctionalSpec,
) -> Result<IdentificationSolution, DriverError> {
    solve_functional(model, f)
        .map_err(|source| DriverError::Identify { name: f.name.clone(), source })
}

/// Runs the full plan. Returns an error naming the first functional that is
/// neither identified nor routable through the mediation scores.
pub fn run_analysis(
    model: &ModelSpec,
    data: &Dataset,
    plan: &AnalysisPlan,
    settings: &EstimatorSettings,
    bootstrap: Option<&BootstrapSettings>,
) -> Result<AnalysisOutput, DriverError> {
    let layout = MtoLayout::detect(model);
    let basis = BasisSpec::for_model(model, data.x.cols());

    // Pass 1: solve identification and classify every functional.
    let mut solutions: Vec<IdentificationSolution> = Vec::new();
    let mut resolved: Vec<Resolved> = Vec::with_capacity(plan.functionals.len());
    for f in &plan.functionals {
        match f.kind {
            FunctionalKind::Type => {
                let sol = solve_for(model, f)?;
                if !sol.identified {
                    return Err(DriverError::NotIdentified {
                        name: f.name.clone(),
                        residual: sol.residual,
                    });
                }
                solutions.push(sol);
                resolved.push(Resolved::Dr(solutions.len() - 1));
            }
            FunctionalKind::Outcome => {
                let sol = solve_for(model, f)?;
                if sol.identified {
                    solutions.push(sol);
                    resolved.push(Resolved::Dr(solutions.len() - 1));
                } else {
                    let pattern = layout
                        .as_ref()
                        .and_then(|l| l.mediation_pattern(model, f))
                        .filter(|_| model.eimc);
                    match pattern {
                        Some(p) => {
                            let rho = f.rho.clone().ok_or_else(|| DriverError::BadFunctional {
                                name: f.name.clone(),
                                message: "outcome functional requires rho".into(),
                            })?;
                            resolved.push(Resolved::Mediation(p, rho));
                        }
                        None => {
                            return Err(DriverError::NotIdentified {
                                name: f.name.clone(),
                                residual: sol.residual,
                            })
                        }
                    }
                }
            }
            FunctionalKind::Derived => {
                if f.combine.is_none() {
                    return Err(DriverError::BadFunctional {
                        name: f.name.clone(),
                        message: "derived functional requires combine".into(),
                    });
                }
                resolved.push(Resolved::Derived);
            }
        }
    }

    // Pass 2: build the double-robust requests against the stable solutions.
    let mut dr_jobs: Vec<(String, DrRequest)> = Vec::new();
    for (f, res) in plan.functionals.iter().zip(&resolved) {
        let Resolved::Dr(idx) = res else { continue };
        let sol = &solutions[*idx];
        let request = match f.kind {
            FunctionalKind::Type => DrRequest::Type(TypeRequest {
                solution: sol,
                covariate_multiplier: f.covariate_index,
            }),
            FunctionalKind::Outcome => {
                let rho = f.rho.as_ref().ok_or_else(|| DriverError::BadFunctional {
                    name: f.name.clone(),
                    message: "outcome functional requires rho".into(),
                })?;
                let t = f.target_treatment.as_ref().ok_or_else(|| {
                    DriverError::BadFunctional {
                        name: f.name.clone(),
                        message: "outcome functional requires target_treatment".into(),
                    }
                })?;
                DrRequest::Outcome(OutcomeRequest {
                    solution: sol,
                    rho,
                    target_treatment: t,
                    covariate_multiplier: f.covariate_index,
                })
            }
            FunctionalKind::Derived => unreachable!(),
        };
        dr_jobs.push((f.name.clone(), request));
    }
    let dr_names: Vec<String> = dr_jobs.iter().map(|(n, _)| n.clone()).collect();
    let dr_results = if dr_jobs.is_empty() {
        Vec::new()
    } else {
        estimate_batch(data, model, &dr_jobs, &basis, settings, settings.no_split)
            .map_err(DriverError::EstimateGeneral)?
    };

    // Mediation jobs, grouped by pattern to share nuisances.
    let mut med_results: Vec<(String, EstimateResult)> = Vec::new();
    for pattern in [MediationPattern::Cn, MediationPattern::Ca] {
        let group: Vec<(String, RhoSpec)> = plan
            .functionals
            .iter()
            .zip(&resolved)
            .filter_map(|(f, res)| match res {
                Resolved::Mediation(p, rho) if *p == pattern => {
                    Some((f.name.clone(), rho.clone()))
                }
                _ => None,
            })
            .collect();
        if group.is_empty() {
            continue;
        }
        let rhos: Vec<RhoSpec> = group.iter().map(|(_, r)| r.clone()).collect();
        let results = mediation_batch(data, model, pattern, &rhos, settings)
            .map_err(|e| DriverError::Estimate { name: group[0].0.clone(), source: e })?;
        for ((name, _), result) in group.into_iter().zip(results) {
            med_results.push((name, result));
        }
    }

    // Assemble named estimates in plan order.
    let mut estimates: Vec<NamedEstimate> = Vec::new();
    for f in &plan.functionals {
        if let Some(pos) = dr_names.iter().position(|n| n == &f.name) {
            estimates.push(NamedEstimate {
                name: f.name.clone(),
                kind: f.kind.clone(),
                routed_via_mediation: false,
                result: dr_results[pos].clone(),
                ci: None,
            });
        } else if let Some((_, result)) = med_results.iter().find(|(n, _)| n == &f.name) {
            estimates.push(NamedEstimate {
                name: f.name.clone(),
                kind: f.kind.clone(),
                routed_via_mediation: true,
                result: result.clone(),
                ci: None,
            });
        }
    }

    // One joint bootstrap over every estimate.
    let draws = match bootstrap {
        Some(bs) if !estimates.is_empty() => {
            let registry: Vec<(&str, &EstimateResult)> =
                estimates.iter().map(|e| (e.name.as_str(), &e.result)).collect();
            let draws = multiplier_bootstrap(&registry, bs.b, bs.law, bs.seed)?;
            for e in estimates.iter_mut() {
                let col = draws.column(&e.name)?;
                e.ci = Some(bootstrap_ci(&col, e.result.lambda_hat, plan.level)?);
                e.result.bootstrap_draws = Some(col);
            }
            Some(draws)
        }
        _ => None,
    };

    // Derived combinations.
    let points: Vec<(String, f64)> =
        estimates.iter().map(|e| (e.name.clone(), e.result.lambda_hat)).collect();
    let mut derived = Vec::new();
    for (f, res) in plan.functionals.iter().zip(&resolved) {
        let Resolved::Derived = res else { continue };
        let combine = f.combine.as_ref().unwrap();
        match &draws {
            Some(d) => {
                let delta = delta_method(combine, &points, d, plan.level, settings.p_min)?;
                derived.push(DerivedEstimate {
                    name: f.name.clone(),
                    point: delta.point,
                    ci: Some(delta.ci),
                });
            }
            None => {
                let lookup = |n: &str| points.iter().find(|(pn, _)| pn == n).map(|(_, v)| *v);
                let mut guard = |den: f64| {
                    if den.abs() < settings.p_min {
                        Err(format!(
                            "denominator {den:.4e} below floor {:.4e}",
                            settings.p_min
                        ))
                    } else {
                        Ok(())
                    }
                };
                let point = combine.eval(&lookup, &mut guard).map_err(|message| {
                    DriverError::BadFunctional { name: f.name.clone(), message }
                })?;
                derived.push(DerivedEstimate { name: f.name.clone(), point, ci: None });
            }
        }
    }

    // Quantile effects.
    let mut qte_out = Vec::new();
    for qplan in &plan.qte {
        qte_out.push(run_qte_plan(model, data, plan, qplan, &basis, settings, bootstrap)?);
    }

    Ok(AnalysisOutput { estimates, derived, qte: qte_out })
}

fn run_qte_plan(
    model: &ModelSpec,
    data: &Dataset,
    plan: &AnalysisPlan,
    qplan: &QtePlan,
    basis: &BasisSpec,
    settings: &EstimatorSettings,
    bootstrap: Option<&BootstrapSettings>,
) -> Result<NamedQte, DriverError> {
    let bad = |message: String| DriverError::BadQte { name: qplan.name.clone(), message };
    let omega =
        crate::model::response_matrix_types(model).map_err(|e| bad(e.to_string()))?;
    let group_sol = crate::identify::solve_type_functional(&omega, &qplan.group_ell)
        .map_err(|e| bad(e.to_string()))?;
    if !group_sol.identified {
        return Err(DriverError::NotIdentified {
            name: format!("{}::group", qplan.name),
            residual: group_sol.residual,
        });
    }
    let solve_arm = |arm: &ArmPlan| -> Result<Option<IdentificationSolution>, DriverError> {
        match arm {
            ArmPlan::Outcome { target_treatment, ell } => {
                let omega_t = crate::model::response_matrix_outcome(model, target_treatment)
                    .map_err(|e| bad(e.to_string()))?;
                let mut sol = crate::identify::solve_outcome_functional(&omega_t, ell)
                    .map_err(|e| bad(e.to_string()))?;
                sol.target_treatment = Some(target_treatment.clone());
                if !sol.identified {
                    return Err(DriverError::NotIdentified {
                        name: format!("{}::arm", qplan.name),
                        residual: sol.residual,
                    });
                }
                Ok(Some(sol))
            }
            ArmPlan::MediationCn | ArmPlan::MediationCa => {
                if !model.eimc {
                    return Err(bad(
                        "mediation arm requires the model to declare eimc".into(),
                    ));
                }
                Ok(None)
            }
        }
    };
    let hi_sol = solve_arm(&qplan.hi)?;
    let lo_sol = solve_arm(&qplan.lo)?;
    fn to_arm<'a>(arm: &'a QtePlanArm<'a>) -> CdfArm<'a> {
        match arm {
            QtePlanArm::Outcome { sol, target_treatment } => {
                CdfArm::Outcome { solution: sol, target_treatment }
            }
            QtePlanArm::Cn => CdfArm::MediationCn,
            QtePlanArm::Ca => CdfArm::MediationCa,
        }
    }
    let hi_arm = lower_arm(&qplan.hi, &hi_sol);
    let lo_arm = lower_arm(&qplan.lo, &lo_sol);
    let spec = QteSpec {
        hi: to_arm(&hi_arm),
        lo: to_arm(&lo_arm),
        group_solution: &group_sol,
        y_grid: &qplan.y_grid,
        tau_grid: &qplan.tau_grid,
    };
    let result = crate::estimate::estimate_qte(data, model, &spec, basis, settings, bootstrap)
        .map_err(|e| DriverError::Estimate { name: qplan.name.clone(), source: e })?;
    let cis = match (&result.draws, bootstrap) {
        (Some(all), Some(_)) => {
            let mut cis = Vec::with_capacity(result.taus.len());
            for ti in 0..result.taus.len() {
                let col: Vec<f64> = all.iter().map(|row| row[ti]).collect();
                cis.push(bootstrap_ci(&col, result.qte[ti], plan.level)?);
            }
            Some(cis)
        }
        _ => None,
    };
    Ok(NamedQte { name: qplan.name.clone(), result, cis })
}

enum QtePlanArm<'a> {
    Outcome { sol: &'a IdentificationSolution, target_treatment: &'a str },
    Cn,
    Ca,
}

fn lower_arm<'a>(arm: &'a ArmPlan, sol: &'a Option<IdentificationSolution>) -> QtePlanArm<'a> {
    match arm {
        ArmPlan::Outcome { target_treatment, .. } => QtePlanArm::Outcome {
            sol: sol.as_ref().expect("solved outcome arm"),
            target_treatment,
        },
        ArmPlan::MediationCn => QtePlanArm::Cn,
        ArmPlan::MediationCa => QtePlanArm::Ca,
    }
}

/// The full mediation panel for a relocation/mediator model: complier-type
/// probabilities, the six outcome moments (two routed through the mediation
/// scores), and the derived effects. The implied complier effect is the
/// probability-weighted average of the controlled effects, which over these
/// shared building blocks reduces algebraically to the same expression as
/// the complier effect itself.
pub fn mto_mediation_plan(model: &ModelSpec, rho: RhoSpec) -> Option<AnalysisPlan> {
    let layout = MtoLayout::detect(model)?;
    let r = model.n_types();
    let ind = |ty: MtoType| {
        let mut ell = vec![0.0; r];
        ell[layout.type_idx(ty)] = 1.0;
        ell
    };
    let union = |a: MtoType, b: MtoType| {
        let mut ell = vec![0.0; r];
        ell[layout.type_idx(a)] = 1.0;
        ell[layout.type_idx(b)] = 1.0;
        ell
    };
    let type_f = |name: &str, ell: Vec<f64>| FunctionalSpec {
        name: name.into(),
        kind: FunctionalKind::Type,
        ell: Some(ell),
        covariate_index: None,
        rho: None,
        target_treatment: None,
        combine: None,
    };
    let out_f = |name: &str, t: &str, ell: Vec<f64>| FunctionalSpec {
        name: name.into(),
        kind: FunctionalKind::Outcome,
        ell: Some(ell),
        covariate_index: None,
        rho: Some(rho.clone()),
        target_treatment: Some(t.into()),
        combine: None,
    };
    let comp = |n: &str| Box::new(CombineSpec::Component(n.into()));
    let diff = |a: Box<CombineSpec>, b: Box<CombineSpec>| Box::new(CombineSpec::Difference(a, b));
    let derived = |name: &str, c: CombineSpec| FunctionalSpec {
        name: name.into(),
        kind: FunctionalKind::Derived,
        ell: None,
        covariate_index: None,
        rho: None,
        target_treatment: None,
        combine: Some(c),
    };
    let t00 = model.treatments.labels[layout.t00].clone();
    let t01 = model.treatments.labels[layout.t01].clone();
    let t10 = model.treatments.labels[layout.t10].clone();
    let t11 = model.treatments.labels[layout.t11].clone();
    let late_expr = CombineSpec::Ratio(
        diff(
            Box::new(CombineSpec::Sum(vec![
                CombineSpec::Component("y10_cn".into()),
                CombineSpec::Component("y11_ca_cc".into()),
            ])),
            Box::new(CombineSpec::Sum(vec![
                CombineSpec::Component("y00_cn_cc".into()),
                CombineSpec::Component("y01_ca".into()),
            ])),
        ),
        Box::new(CombineSpec::Sum(vec![
            CombineSpec::Component("p_cn".into()),
            CombineSpec::Component("p_ca".into()),
            CombineSpec::Component("p_cc".into()),
        ])),
    );
    let functionals = vec![
        type_f("p_cn", ind(MtoType::Cn)),
        type_f("p_ca", ind(MtoType::Ca)),
        type_f("p_cc", ind(MtoType::Cc)),
        out_f("y10_cn", &t10, ind(MtoType::Cn)),
        out_f("y00_cn", &t00, ind(MtoType::Cn)),
        out_f("y11_ca", &t11, ind(MtoType::Ca)),
        out_f("y01_ca", &t01, ind(MtoType::Ca)),
        out_f("y11_ca_cc", &t11, union(MtoType::Ca, MtoType::Cc)),
        out_f("y00_cn_cc", &t00, union(MtoType::Cn, MtoType::Cc)),
        derived(
            "cde0",
            CombineSpec::Ratio(diff(comp("y10_cn"), comp("y00_cn")), comp("p_cn")),
        ),
        derived(
            "cde1",
            CombineSpec::Ratio(diff(comp("y11_ca"), comp("y01_ca")), comp("p_ca")),
        ),
        derived(
            "cte",
            CombineSpec::Ratio(
                diff(
                    diff(comp("y11_ca_cc"), comp("y11_ca")),
                    diff(comp("y00_cn_cc"), comp("y00_cn")),
                ),
                comp("p_cc"),
            ),
        ),
        derived("late", late_expr.clone()),
        derived("implied_late", late_expr),
    ];
    Some(AnalysisPlan::from_functionals(functionals))
}
