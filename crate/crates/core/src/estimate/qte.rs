//! Quantile treatment effects: estimate the scaled distribution functions
//! `F(y) = λ(1{Y ≤ y}·group) / P(group)` of two potential-outcome arms on a
//! grid, monotonize, invert, and difference the quantiles. Pointwise
//! uncertainty comes from the joint multiplier bootstrap over every grid
//! moment and the group probability.

use super::{
    estimate_batch, mediation_batch, Dataset, DrRequest, EstimateError, EstimateResult,
    EstimatorSettings, OutcomeRequest, TypeRequest,
};
use crate::identify::IdentificationSolution;
use crate::inference::{multiplier_bootstrap, BootstrapSettings};
use crate::model::{BasisSpec, MediationPattern, ModelSpec, RhoSpec};

/// How to estimate one arm's sub-distribution moments `E[1{Y*(t) ≤ y}·1{group}]`.
#[derive(Clone)]
pub enum CdfArm<'a> {
    /// Identified outcome functional at `target_treatment`.
    Outcome { solution: &'a IdentificationSolution, target_treatment: &'a str },
    /// Mediation score for the `(0,0)`/`CN` target.
    MediationCn,
    /// Mediation score for the `(1,1)`/`CA` target.
    MediationCa,
}

#[derive(Clone)]
pub struct QteSpec<'a> {
    pub hi: CdfArm<'a>,
    pub lo: CdfArm<'a>,
    /// Type solution for the group indicator (the conditioning event).
    pub group_solution: &'a IdentificationSolution,
    pub y_grid: &'a [f64],
    pub tau_grid: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct QteResult {
    pub taus: Vec<f64>,
    pub qte: Vec<f64>,
    pub hi_quantiles: Vec<f64>,
    pub lo_quantiles: Vec<f64>,
    pub cdf_hi: Vec<f64>,
    pub cdf_lo: Vec<f64>,
    pub group_prob: f64,
    /// Bootstrap draws of the per-τ effects (replicates × τ), when requested.
    pub draws: Option<Vec<Vec<f64>>>,
    pub se: Option<Vec<f64>>,
}

/// Running maximum followed by a clip to [0, 1]. Idempotent on inputs that
/// are already monotone within bounds.
pub fn monotonize_cdf(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut running = f64::NEG_INFINITY;
    for &v in values {
        running = running.max(v);
        out.push(running.clamp(0.0, 1.0));
    }
    out
}

/// Left-continuous generalized inverse on the grid: the first grid point
/// whose CDF value reaches τ, or the last grid point when none does.
pub fn invert_cdf(y_grid: &[f64], cdf: &[f64], tau: f64) -> f64 {
    for (y, f) in y_grid.iter().zip(cdf) {
        if *f >= tau {
            return *y;
        }
    }
    *y_grid.last().expect("nonempty grid")
}

fn arm_estimates(
    data: &Dataset,
    model: &ModelSpec,
    arm: &CdfArm,
    y_grid: &[f64],
    basis: &BasisSpec,
    settings: &EstimatorSettings,
) -> Result<Vec<EstimateResult>, EstimateError> {
    match arm {
        CdfArm::Outcome { solution, target_treatment } => {
            let rhos: Vec<RhoSpec> =
                y_grid.iter().map(|&y| RhoSpec::Indicator { y }).collect();
            let requests: Vec<(String, DrRequest)> = rhos
                .iter()
                .enumerate()
                .map(|(i, rho)| {
                    (
                        format!("cdf[{i}]"),
                        DrRequest::Outcome(OutcomeRequest {
                            solution,
                            rho,
                            target_treatment,
                            covariate_multiplier: None,
                        }),
                    )
                })
                .collect();
            estimate_batch(data, model, &requests, basis, settings, settings.no_split)
        }
        CdfArm::MediationCn => {
            let rhos: Vec<RhoSpec> =
                y_grid.iter().map(|&y| RhoSpec::Indicator { y }).collect();
            mediation_batch(data, model, MediationPattern::Cn, &rhos, settings)
        }
        CdfArm::MediationCa => {
            let rhos: Vec<RhoSpec> =
                y_grid.iter().map(|&y| RhoSpec::Indicator { y }).collect();
            mediation_batch(data, model, MediationPattern::Ca, &rhos, settings)
        }
    }
}

fn qte_from_lambdas(
    y_grid: &[f64],
    tau_grid: &[f64],
    hi: &[f64],
    lo: &[f64],
    group: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let cdf_hi = monotonize_cdf(&hi.iter().map(|l| l / group).collect::<Vec<_>>());
    let cdf_lo = monotonize_cdf(&lo.iter().map(|l| l / group).collect::<Vec<_>>());
    let hi_q: Vec<f64> = tau_grid.iter().map(|&t| invert_cdf(y_grid, &cdf_hi, t)).collect();
    let lo_q: Vec<f64> = tau_grid.iter().map(|&t| invert_cdf(y_grid, &cdf_lo, t)).collect();
    let qte: Vec<f64> = hi_q.iter().zip(&lo_q).map(|(h, l)| h - l).collect();
    (qte, hi_q, lo_q, cdf_hi, cdf_lo)
}

pub fn estimate_qte(
    data: &Dataset,
    model: &ModelSpec,
    spec: &QteSpec,
    basis: &BasisSpec,
    settings: &EstimatorSettings,
    bootstrap: Option<&BootstrapSettings>,
) -> Result<QteResult, EstimateError> {
    if spec.y_grid.is_empty() || spec.y_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(EstimateError::BadGrid("y grid must be strictly increasing".into()));
    }
    if spec.tau_grid.iter().any(|&t| !(0.0 < t && t < 1.0)) {
        return Err(EstimateError::BadGrid("tau grid must lie strictly inside (0, 1)".into()));
    }
    let group_req = (
        "group".to_string(),
        DrRequest::Type(TypeRequest {
            solution: spec.group_solution,
            covariate_multiplier: None,
        }),
    );
    let group_res =
        estimate_batch(data, model, &[group_req], basis, settings, settings.no_split)?.remove(0);
    let group = group_res.lambda_hat;
    if group < settings.p_min {
        return Err(EstimateError::SmallDenominator {
            name: "P(group)".into(),
            value: group,
            floor: settings.p_min,
        });
    }
    let hi = arm_estimates(data, model, &spec.hi, spec.y_grid, basis, settings)?;
    let lo = arm_estimates(data, model, &spec.lo, spec.y_grid, basis, settings)?;
    let hi_l: Vec<f64> = hi.iter().map(|r| r.lambda_hat).collect();
    let lo_l: Vec<f64> = lo.iter().map(|r| r.lambda_hat).collect();
    let (qte, hi_q, lo_q, cdf_hi, cdf_lo) =
        qte_from_lambdas(spec.y_grid, spec.tau_grid, &hi_l, &lo_l, group);

    let (draws, se) = match bootstrap {
        None => (None, None),
        Some(bs) => {
            let mut registry: Vec<(&str, &EstimateResult)> = vec![("group", &group_res)];
            let hi_names: Vec<String> =
                (0..hi.len()).map(|i| format!("hi[{i}]")).collect();
            let lo_names: Vec<String> =
                (0..lo.len()).map(|i| format!("lo[{i}]")).collect();
            for (name, r) in hi_names.iter().zip(&hi) {
                registry.push((name, r));
            }
            for (name, r) in lo_names.iter().zip(&lo) {
                registry.push((name, r));
            }
            let boot = multiplier_bootstrap(&registry, bs.b, bs.law, bs.seed)
                .map_err(|e| EstimateError::Inference(e.to_string()))?;
            let g = spec.y_grid.len();
            let mut all_draws = Vec::with_capacity(bs.b);
            for rep in 0..bs.b {
                let row = boot.draws.row(rep);
                let group_star = row[0].max(settings.p_min);
                let hi_star = &row[1..1 + g];
                let lo_star = &row[1 + g..1 + 2 * g];
                let (qte_star, _, _, _, _) =
                    qte_from_lambdas(spec.y_grid, spec.tau_grid, hi_star, lo_star, group_star);
                all_draws.push(qte_star);
            }
            let mut ses = Vec::with_capacity(spec.tau_grid.len());
            for ti in 0..spec.tau_grid.len() {
                let mean: f64 =
                    all_draws.iter().map(|d| d[ti]).sum::<f64>() / bs.b as f64;
                let var: f64 = all_draws.iter().map(|d| (d[ti] - mean).powi(2)).sum::<f64>()
                    / bs.b as f64;
                ses.push(var.sqrt());
            }
            (Some(all_draws), Some(ses))
        }
    };

    Ok(QteResult {
        taus: spec.tau_grid.to_vec(),
        qte,
        hi_quantiles: hi_q,
        lo_quantiles: lo_q,
        cdf_hi,
        cdf_lo,
        group_prob: group,
        draws,
        se,
    })
}
