//! Inference on estimated functionals: analytic standard errors from the
//! influence values, the multiplier bootstrap (one shared weight draw per
//! replicate across every registered functional, so joint transformations
//! remain valid), symmetric bootstrap confidence intervals, and the delta
//! method for smooth combinations.

use crate::estimate::EstimateResult;
use crate::linalg::Mat;
use crate::model::CombineSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("registered results disagree on n: {0} vs {1}")]
    MismatchedN(usize, usize),
    #[error("registered results disagree on the fold plan")]
    MismatchedFolds,
    #[error("no functionals registered")]
    EmptyRegistry,
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("unknown component `{0}` in combination")]
    UnknownComponent(String),
    #[error("ratio denominator {value:.4e} is below the {floor:.4e} floor")]
    SmallDenominator { value: f64, floor: f64 },
    #[error("combination error: {0}")]
    Combine(String),
    #[error("functional `{0}` missing from the bootstrap registry")]
    MissingDraws(String),
}

/// Multiplier laws: mean zero, unit variance — plus the degenerate constant
/// law used to audit the centering identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    Normal,
    Rademacher,
    /// W ≡ 1; every draw reproduces the point estimate exactly.
    ConstantOne,
}

#[derive(Clone, Debug)]
pub struct BootstrapSettings {
    pub b: usize,
    pub law: WeightLaw,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings { b: 1000, law: WeightLaw::Normal, seed: 0 }
    }
}

/// Bootstrap draws for a registry of functionals: `draws` is replicates ×
/// functionals, columns aligned with `names`.
#[derive(Clone, Debug)]
pub struct BootstrapDraws {
    pub draws: Mat,
    pub names: Vec<String>,
    pub law: WeightLaw,
    pub seed: u64,
    pub b: usize,
}

impl BootstrapDraws {
    pub fn column(&self, name: &str) -> Result<Vec<f64>, InferenceError> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| InferenceError::MissingDraws(name.to_string()))?;
        Ok(self.draws.col(j))
    }
}

/// Analytic standard error: `sqrt(Σ ωᵢ² ψ̂ᵢ²)`. With uniform weights this is
/// the population standard deviation of ψ̂ over √n.
pub fn analytic_se(result: &EstimateResult, weights: &[f64]) -> Result<f64, InferenceError> {
    if result.psi.len() < 2 {
        return Err(InferenceError::TooFewObservations(result.psi.len()));
    }
    Ok(result
        .psi
        .iter()
        .zip(weights)
        .map(|(p, w)| (w * p) * (w * p))
        .sum::<f64>()
        .sqrt())
}

/// SplitMix-style stream derivation so replicates are order-independent.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_weights(law: WeightLaw, rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    match law {
        WeightLaw::Normal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        WeightLaw::Rademacher => {
            (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
        }
        WeightLaw::ConstantOne => vec![1.0; n],
    }
}

/// Perturbs every registered estimate with the same per-observation weight
/// draw within each replicate:
/// `λ* = λ̂ + Σᵢ ωᵢ Wᵢ ψ̂ᵢ`. Deterministic in the seed, with per-replicate
/// streams so the replicate order is irrelevant.
pub fn multiplier_bootstrap(
    registry: &[(&str, &EstimateResult)],
    b: usize,
    law: WeightLaw,
    seed: u64,
) -> Result<BootstrapDraws, InferenceError> {
    if registry.is_empty() {
        return Err(InferenceError::EmptyRegistry);
    }
    let n = registry[0].1.n;
    for (_, r) in registry {
        if r.n != n {
            return Err(InferenceError::MismatchedN(n, r.n));
        }
    }
    for (_, r) in registry {
        if let (Some(a), Some(bp)) = (&registry[0].1.fold_plan, &r.fold_plan) {
            if a.assignment != bp.assignment {
                return Err(InferenceError::MismatchedFolds);
            }
        }
    }
    let g = registry.len();
    let mut draws = Mat::zeros(b.max(1), g);
    for rep in 0..b {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, rep as u64));
        let w = draw_weights(law, &mut rng, n);
        for (j, (_, r)) in registry.iter().enumerate() {
            let mut bump = 0.0;
            for i in 0..n {
                bump += r.weights[i] * w[i] * r.psi[i];
            }
            draws.set(rep, j, r.lambda_hat + bump);
        }
    }
    Ok(BootstrapDraws {
        draws,
        names: registry.iter().map(|(n, _)| n.to_string()).collect(),
        law,
        seed,
        b,
    })
}

/// Type-7 (linear interpolation) empirical quantile of an unsorted sample.
pub fn quantile_type7(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// A symmetric confidence interval centered at the point estimate.
#[derive(Clone, Debug, Serialize)]
pub struct Ci {
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
    pub level: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Symmetric bootstrap interval: the `level` quantile of `|λ* − λ̂|` around
/// the point estimate.
pub fn bootstrap_ci(
    draws: &[f64],
    lambda_hat: f64,
    level: f64,
) -> Result<Ci, InferenceError> {
    if !(0.0 < level && level < 1.0) {
        return Err(InferenceError::BadLevel(level));
    }
    let mut warnings = Vec::new();
    if draws.len() < 20 {
        warnings.push(format!(
            "only {} bootstrap replicates; interval is unreliable",
            draws.len()
        ));
    }
    let abs_dev: Vec<f64> = draws.iter().map(|d| (d - lambda_hat).abs()).collect();
    let half_width = quantile_type7(&abs_dev, level);
    Ok(Ci {
        lo: lambda_hat - half_width,
        hi: lambda_hat + half_width,
        half_width,
        level,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaResult {
    pub point: f64,
    pub ci: Ci,
}

/// Delta-method inference for a smooth combination of registered
/// functionals: evaluate the combination on the point estimates and on every
/// joint bootstrap replicate, then form the symmetric interval from the
/// deviations. Ratio denominators are floored at `p_min` in absolute value
/// at the point estimate.
pub fn delta_method(
    combine: &CombineSpec,
    points: &[(String, f64)],
    draws: &BootstrapDraws,
    level: f64,
    p_min: f64,
) -> Result<DeltaResult, InferenceError> {
    let lookup_point = |name: &str| points.iter().find(|(n, _)| n == name).map(|(_, v)| *v);
    let mut guard = |den: f64| -> Result<(), String> {
        if den.abs() < p_min {
            Err(format!("denominator {den:.4e} below floor {p_min:.4e}"))
        } else {
            Ok(())
        }
    };
    let point = combine
        .eval(&lookup_point, &mut guard)
        .map_err(|e| {
            if e.contains("below floor") {
                InferenceError::SmallDenominator { value: 0.0, floor: p_min }
            } else {
                InferenceError::Combine(e)
            }
        })?;

    let needed = combine.components();
    let mut cols = Vec::with_capacity(needed.len());
    for name in &needed {
        cols.push((name.clone(), draws.column(name)?));
    }
    let mut devs = Vec::with_capacity(draws.b);
    for rep in 0..draws.b {
        let lookup_rep = |name: &str| {
            cols.iter().find(|(n, _)| n == name).map(|(_, c)| c[rep])
        };
        // Replicate-level denominators are evaluated as-is.
        let mut no_guard = |_: f64| Ok(());
        let val = combine
            .eval(&lookup_rep, &mut no_guard)
            .map_err(InferenceError::Combine)?;
        devs.push((val - point).abs());
    }
    let ci = bootstrap_ci(
        &devs.iter().map(|d| point + d).collect::<Vec<_>>(),
        point,
        level,
    )?;
    Ok(DeltaResult { point, ci })
}
