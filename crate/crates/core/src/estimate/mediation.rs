//! Orthogonal-score estimators for the two outcome targets that the support
//! restriction alone does not identify on the relocation/mediator model:
//! the mean of `ρ(Y*(0,0))` among types whose relocation changes nothing for
//! the mediator (`CN`), and of `ρ(Y*(1,1))` among `CA`. Both are estimable
//! under the mediator-exogeneity assumption, via a six-term score assembled
//! from full-sample weighted Lasso nuisances.

use super::{
    build_design, fit_regression, fit_representer, weighted_se, Dataset, EstimateError,
    EstimateResult, EstimatorSettings, NuisanceEntry, NuisanceFits,
};
use crate::linalg::{dot, Mat};
use crate::model::{BasisSpec, MediationPattern, ModelSpec, MtoLayout, RhoSpec};

struct MediationRoles {
    /// Instrument index whose arm anchors the positive side of every
    /// first difference.
    z_a: usize,
    z_b: usize,
    /// Treatment receiving the outcome regression.
    t_main: usize,
    /// Treatment whose share corrects the group-composition nuisance.
    t_other: usize,
}

fn roles(layout: &MtoLayout, pattern: MediationPattern) -> MediationRoles {
    match pattern {
        MediationPattern::Cn => MediationRoles {
            z_a: layout.z0,
            z_b: layout.z1,
            t_main: layout.t00,
            t_other: layout.t10,
        },
        MediationPattern::Ca => MediationRoles {
            z_a: layout.z1,
            z_b: layout.z0,
            t_main: layout.t11,
            t_other: layout.t01,
        },
    }
}

/// Covariate basis `f(X) = [1, X]` used for the group-composition fits.
fn covariate_design(data: &Dataset) -> Mat {
    let n = data.n();
    let m = data.x.cols();
    let mut f = Mat::zeros(n, m + 1);
    for i in 0..n {
        f.set(i, 0, 1.0);
        for j in 0..m {
            f.set(i, j + 1, data.x.get(i, j));
        }
    }
    f
}

/// Estimates `E[ρ(Y*(0,0)) 1{T* = CN}]` by the six-term orthogonal score.
pub fn mediation_cn(
    data: &Dataset,
    model: &ModelSpec,
    rho: &RhoSpec,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let mut out = mediation_batch(data, model, MediationPattern::Cn, &[rho.clone()], settings)?;
    Ok(out.remove(0))
}

/// Estimates `E[ρ(Y*(1,1)) 1{T* = CA}]`: the mirrored score.
pub fn mediation_ca(
    data: &Dataset,
    model: &ModelSpec,
    rho: &RhoSpec,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let mut out = mediation_batch(data, model, MediationPattern::Ca, &[rho.clone()], settings)?;
    Ok(out.remove(0))
}

/// Shared-nuisance batch over outcome transforms: the treatment-share and
/// group-composition nuisances do not depend on ρ, so only the outcome
/// regression refits per entry. Used heavily by the quantile construction.
pub fn mediation_batch(
    data: &Dataset,
    model: &ModelSpec,
    pattern: MediationPattern,
    rhos: &[RhoSpec],
    settings: &EstimatorSettings,
) -> Result<Vec<EstimateResult>, EstimateError> {
    let layout = MtoLayout::detect(model).ok_or(EstimateError::MediationShape)?;
    if !settings.corruption.is_none() {
        return Err(EstimateError::UnsupportedCorruption);
    }
    for rho in rhos {
        if !rho.is_bounded() {
            return Err(EstimateError::UnboundedRho);
        }
    }
    let r = roles(&layout, pattern);
    let n = data.n();
    let m = data.x.cols();
    let basis = BasisSpec::DiscreteInteracted { q: model.n_instruments(), m };
    let design = build_design(data, &basis)?;
    let w = &data.omega;
    let _ = data.z_discrete()?;

    let mut nuisances = NuisanceFits::default();
    let push = |label: &str, fit: &crate::lasso::LassoFit, nf: &mut NuisanceFits| {
        nf.entries.push(NuisanceEntry {
            fold: 0,
            label: label.to_string(),
            alpha: fit.penalty,
            coefficients: fit.coefficients.clone(),
        });
    };

    // Treatment-share regressions.
    let ind_main: Vec<f64> =
        data.t.iter().map(|&t| if t == r.t_main { 1.0 } else { 0.0 }).collect();
    let ind_other: Vec<f64> =
        data.t.iter().map(|&t| if t == r.t_other { 1.0 } else { 0.0 }).collect();
    let fit_p_main = fit_regression(&design, &ind_main, w, &settings.penalty, &settings.fit)?;
    push("beta[p_main]", &fit_p_main, &mut nuisances);
    let fit_p_other = fit_regression(&design, &ind_other, w, &settings.penalty, &settings.fit)?;
    push("beta[p_other]", &fit_p_other, &mut nuisances);

    // Representer of the first-difference functional f ↦ E[f(z_a,X) − f(z_b,X)].
    let mut kappa_targets = Mat::zeros(n, basis.dim());
    for i in 0..n {
        let xa = basis.eval_discrete(r.z_a, data.x.row(i));
        let xb = basis.eval_discrete(r.z_b, data.x.row(i));
        let row = kappa_targets.row_mut(i);
        for j in 0..row.len() {
            row[j] = xa[j] - xb[j];
        }
    }
    let fit_kappa = fit_representer(&design, &kappa_targets, w, &settings.penalty, &settings.fit)?;
    push("gamma[kappa_c]", &fit_kappa, &mut nuisances);
    let kappa_c: Vec<f64> = (0..n).map(|i| dot(design.row(i), &fit_kappa.coefficients)).collect();

    // Group-composition fits on f(X): the weighted first differences of the
    // "mediator unchanged" and single-type shares recover the group mass u(X)
    // and the conditional split c(X).
    let f_design = covariate_design(data);
    let m0_set: Vec<f64> = data
        .t
        .iter()
        .map(|&t| if t == layout.t00 || t == layout.t10 { 1.0 } else { 0.0 })
        .collect();
    // Both patterns read the double-complier mass off the same first
    // difference of the mediator-unchanged share; the sign tracks the
    // direction built into kappa_c.
    let resp_cc: Vec<f64> = match pattern {
        MediationPattern::Cn => (0..n).map(|i| m0_set[i] * kappa_c[i]).collect(),
        MediationPattern::Ca => (0..n).map(|i| -m0_set[i] * kappa_c[i]).collect(),
    };
    let resp_single: Vec<f64> =
        (0..n).map(|i| -ind_other[i] * kappa_c[i]).collect();
    let fit_pi_cc = fit_regression(&f_design, &resp_cc, w, &settings.penalty, &settings.fit)?;
    push("pi[cc]", &fit_pi_cc, &mut nuisances);
    let fit_pi_single =
        fit_regression(&f_design, &resp_single, w, &settings.penalty, &settings.fit)?;
    push("pi[single]", &fit_pi_single, &mut nuisances);

    let mut warnings = Vec::new();
    let mut u_hat = vec![0.0; n];
    let mut c_hat = vec![0.0; n];
    let mut floored = 0usize;
    let mut clipped = 0usize;
    for i in 0..n {
        let frow = f_design.row(i);
        let cc = dot(frow, &fit_pi_cc.coefficients);
        let single = dot(frow, &fit_pi_single.coefficients);
        let mut u = cc + single;
        if u < settings.u_min {
            u = settings.u_min;
            floored += 1;
        }
        let mut c = single / u;
        if !(0.0..=1.0).contains(&c) {
            c = c.clamp(0.0, 1.0);
            clipped += 1;
        }
        u_hat[i] = u;
        c_hat[i] = c;
    }
    if floored * 20 > n {
        warnings.push(format!(
            "group-mass floor {:.3} applied to {floored} of {n} observations",
            settings.u_min
        ));
    }
    if clipped > 0 {
        warnings.push(format!(
            "conditional split clipped to [0, 1] on {clipped} of {n} observations"
        ));
    }

    // Per-observation pieces that do not depend on rho.
    let p_other_obs: Vec<f64> =
        (0..n).map(|i| dot(design.row(i), &fit_p_other.coefficients)).collect();
    let p_main_obs: Vec<f64> =
        (0..n).map(|i| dot(design.row(i), &fit_p_main.coefficients)).collect();
    let mut d_p_other = vec![0.0; n];
    let mut d_p_main = vec![0.0; n];
    for i in 0..n {
        let ba = basis.eval_discrete(r.z_a, data.x.row(i));
        let bb = basis.eval_discrete(r.z_b, data.x.row(i));
        d_p_other[i] =
            dot(&ba, &fit_p_other.coefficients) - dot(&bb, &fit_p_other.coefficients);
        d_p_main[i] = dot(&ba, &fit_p_main.coefficients) - dot(&bb, &fit_p_main.coefficients);
    }

    let mut results = Vec::with_capacity(rhos.len());
    for rho in rhos {
        let reg_y: Vec<f64> = (0..n)
            .map(|i| if data.t[i] == r.t_main { rho.apply(data.y[i]) } else { 0.0 })
            .collect();
        let fit_m = fit_regression(&design, &reg_y, w, &settings.penalty, &settings.fit)?;
        let mut nf = nuisances.clone();
        push("beta[m]", &fit_m, &mut nf);
        let mut scores = vec![0.0; n];
        for i in 0..n {
            let m_obs = dot(design.row(i), &fit_m.coefficients);
            let ba = basis.eval_discrete(r.z_a, data.x.row(i));
            let bb = basis.eval_discrete(r.z_b, data.x.row(i));
            let d_m = dot(&ba, &fit_m.coefficients) - dot(&bb, &fit_m.coefficients);
            let u = u_hat[i];
            let c = c_hat[i];
            let k = kappa_c[i];
            scores[i] = (reg_y[i] - m_obs) * c * k
                + d_m * c
                - (d_m / u) * (ind_other[i] - p_other_obs[i]) * k
                - (d_m / u) * d_p_other[i]
                - (d_m * c / u) * (ind_main[i] - p_main_obs[i]) * k
                - (d_m * c / u) * d_p_main[i];
        }
        let lambda_hat: f64 = scores.iter().zip(w).map(|(s, wi)| s * wi).sum();
        let mut psi: Vec<f64> = scores.iter().map(|s| s - lambda_hat).collect();
        let drift: f64 = psi.iter().zip(w).map(|(p, wi)| p * wi).sum();
        for p in psi.iter_mut() {
            *p -= drift;
        }
        let se = weighted_se(&psi, w);
        results.push(EstimateResult {
            lambda_hat,
            psi,
            se,
            weights: w.clone(),
            n,
            nuisances: nf,
            fold_plan: None,
            warnings: warnings.clone(),
            bootstrap_draws: None,
        });
    }
    Ok(results)
}
