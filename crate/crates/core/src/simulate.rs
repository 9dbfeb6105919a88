//! Synthetic data exactly obeying the observational data contract — types and
//! potential outcomes drawn jointly given covariates, independent of the
//! instrument given covariates — plus closed-form oracle values of any
//! declared functional and a replication harness for bias, standard-error
//! accuracy, and coverage experiments.
//!
//! Covariates are discrete cells so every oracle is exact rather than Monte
//! Carlo.

use crate::driver::{run_analysis, AnalysisPlan, ArmPlan, DriverError};
use crate::estimate::{Dataset, EstimatorSettings, InstrumentData};
use crate::inference::{derive_seed, BootstrapSettings};
use crate::linalg::Mat;
use crate::model::{
    FunctionalKind, FunctionalSpec, InstrumentMode, InstrumentSpace, ModelSpec, MtoLayout,
    MtoType, RhoSpec, SupportRestriction, TreatmentSpace,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("functional `{0}` is not expressible under this spec: {1}")]
    Oracle(String, String),
    #[error("{0}")]
    Driver(#[from] DriverError),
    #[error("{0}")]
    Estimate(#[from] crate::estimate::EstimateError),
}

/// Outcome law for one (type, treatment) pair. Means shift additively by
/// covariate cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLaw {
    Gaussian { mean: f64, sd: f64 },
    Mixture(Vec<MixComponent>),
    Point(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Laws indexed by (type, treatment), row-major over types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub laws: Vec<Vec<OutcomeLaw>>,
    /// Additive mean shift per covariate cell.
    pub cell_shift: Vec<f64>,
}

impl OutcomeTable {
    pub fn constant(r: usize, d: usize, law: OutcomeLaw, n_cells: usize) -> Self {
        OutcomeTable {
            laws: vec![vec![law; d]; r],
            cell_shift: vec![0.0; n_cells],
        }
    }
}

/// One covariate cell: its mass, covariate values, instrument law, and an
/// optional cell-specific type distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateCell {
    pub prob: f64,
    pub x: Vec<f64>,
    pub pz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_probs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLawSim {
    Uniform { lo: f64, hi: f64 },
}

/// A fully specified structural law for the discrete-instrument model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: ModelSpec,
    pub cells: Vec<CovariateCell>,
    pub outcomes: OutcomeTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_law: Option<WeightLawSim>,
    pub seed: u64,
}

/// Hidden truth retained for audits: sampled cell, type, and the full
/// potential-outcome vector per row.
#[derive(Clone, Debug)]
pub struct TruthRecord {
    pub cell: Vec<usize>,
    pub type_idx: Vec<usize>,
    pub potential: Mat,
}

pub fn validate_dgp(spec: &DgpSpec) -> Vec<String> {
    let mut diags = crate::model::validate_model(&spec.model);
    let r = spec.model.n_types();
    let d = spec.model.n_treatments();
    let q = spec.model.n_instruments();
    if spec.cells.is_empty() {
        diags.push("cells: need at least one covariate cell".into());
    }
    let total: f64 = spec.cells.iter().map(|c| c.prob).sum();
    if (total - 1.0).abs() > 1e-9 {
        diags.push(format!("cells: masses sum to {total}, expected 1"));
    }
    let m = spec.cells.first().map(|c| c.x.len()).unwrap_or(0);
    for (i, cell) in spec.cells.iter().enumerate() {
        if cell.prob < 0.0 {
            diags.push(format!("cell {i}: negative mass"));
        }
        if cell.x.len() != m {
            diags.push(format!("cell {i}: covariate length differs"));
        }
        if cell.pz.len() != q {
            diags.push(format!("cell {i}: {} instrument probabilities for {q} values", cell.pz.len()));
        } else {
            if cell.pz.iter().any(|&p| !(p > 0.0)) {
                diags.push(format!("cell {i}: instrument probabilities must be strictly positive"));
            }
            let s: f64 = cell.pz.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                diags.push(format!("cell {i}: instrument probabilities sum to {s}"));
            }
        }
        let tp = cell.type_probs.as_ref().or(spec.model.support.probabilities.as_ref());
        match tp {
            None => diags.push(format!("cell {i}: no type distribution (neither cell nor model provides one)")),
            Some(tp) => {
                if tp.len() != r {
                    diags.push(format!("cell {i}: {} type masses for {r} types", tp.len()));
                } else {
                    if tp.iter().any(|&p| p < 0.0) {
                        diags.push(format!("cell {i}: negative type mass"));
                    }
                    let s: f64 = tp.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        diags.push(format!("cell {i}: type masses sum to {s}"));
                    }
                }
            }
        }
    }
    if spec.outcomes.laws.len() != r {
        diags.push(format!("outcomes: {} law rows for {r} types", spec.outcomes.laws.len()));
    }
    for (i, row) in spec.outcomes.laws.iter().enumerate() {
        if row.len() != d {
            diags.push(format!("outcomes: type {i} has {} laws for {d} treatments", row.len()));
        }
        for law in row {
            match law {
                OutcomeLaw::Gaussian { sd, .. } if *sd < 0.0 => {
                    diags.push(format!("outcomes: type {i} has negative sd"));
                }
                OutcomeLaw::Mixture(components) => {
                    let s: f64 = components.iter().map(|c| c.weight).sum();
                    if (s - 1.0).abs() > 1e-9 {
                        diags.push(format!("outcomes: type {i} mixture weights sum to {s}"));
                    }
                    if components.iter().any(|c| c.sd < 0.0 || c.weight < 0.0) {
                        diags.push(format!("outcomes: type {i} mixture has negative parameters"));
                    }
                }
                _ => {}
            }
        }
    }
    if spec.outcomes.cell_shift.len() != spec.cells.len() {
        diags.push(format!(
            "outcomes: {} cell shifts for {} cells",
            spec.outcomes.cell_shift.len(),
            spec.cells.len()
        ));
    }
    // The mediator-exogeneity assumption constrains the joint law: the
    // counterfactual outcome under the unchanged-mediator treatment must not
    // depend on what the mediator would have been.
    if spec.model.eimc {
        if let Some(layout) = MtoLayout::detect(&spec.model) {
            let cn = layout.type_idx(MtoType::Cn);
            let cc = layout.type_idx(MtoType::Cc);
            let ca = layout.type_idx(MtoType::Ca);
            if spec.outcomes.laws.len() == r && r > 0 {
                if spec.outcomes.laws[cn][layout.t00] != spec.outcomes.laws[cc][layout.t00] {
                    diags.push("outcomes: eimc requires identical laws for Y*(0,0) across CN and CC".into());
                }
                if spec.outcomes.laws[ca][layout.t11] != spec.outcomes.laws[cc][layout.t11] {
                    diags.push("outcomes: eimc requires identical laws for Y*(1,1) across CA and CC".into());
                }
            }
        }
    }
    diags
}

fn require_valid(spec: &DgpSpec) -> Result<(), SimulateError> {
    let diags = validate_dgp(spec);
    if diags.is_empty() {
        Ok(())
    } else {
        Err(SimulateError::InvalidSpec(diags.join("; ")))
    }
}

fn categorical(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_law(rng: &mut ChaCha12Rng, law: &OutcomeLaw, shift: f64) -> f64 {
    match law {
        OutcomeLaw::Gaussian { mean, sd } => {
            let z: f64 = rng.sample(StandardNormal);
            mean + shift + sd * z
        }
        OutcomeLaw::Point(v) => v + shift,
        OutcomeLaw::Mixture(components) => {
            let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
            let k = categorical(rng, &weights);
            let z: f64 = rng.sample(StandardNormal);
            components[k].mean + shift + components[k].sd * z
        }
    }
}

/// Draws a dataset of size `n`: covariate cell, then (type, potential
/// outcomes) jointly given the cell, then the instrument given the cell, then
/// the induced observables. The hidden truth is returned for audits only.
pub fn generate_data(spec: &DgpSpec, n: usize) -> Result<(Dataset, TruthRecord), SimulateError> {
    require_valid(spec)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let d = spec.model.n_treatments();
    let m = spec.cells[0].x.len();
    let cell_probs: Vec<f64> = spec.cells.iter().map(|c| c.prob).collect();
    let assignments: Vec<Vec<usize>> =
        (0..spec.model.n_types()).map(|i| spec.model.type_assignment_indices(i)).collect();

    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut x = Mat::zeros(n, m);
    let mut omega: Option<Vec<f64>> = spec.weight_law.as_ref().map(|_| Vec::with_capacity(n));
    let mut cell_rec = Vec::with_capacity(n);
    let mut type_rec = Vec::with_capacity(n);
    let mut potential = Mat::zeros(n, d);

    for i in 0..n {
        let cell_idx = categorical(&mut rng, &cell_probs);
        let cell = &spec.cells[cell_idx];
        let tp = cell
            .type_probs
            .as_ref()
            .or(spec.model.support.probabilities.as_ref())
            .expect("validated");
        let ty = categorical(&mut rng, tp);
        let shift = spec.outcomes.cell_shift[cell_idx];
        for ti in 0..d {
            let v = sample_law(&mut rng, &spec.outcomes.laws[ty][ti], shift);
            potential.set(i, ti, v);
        }
        let zi = categorical(&mut rng, &cell.pz);
        let ti = assignments[ty][zi];
        x.row_mut(i).copy_from_slice(&cell.x);
        y.push(potential.get(i, ti));
        t.push(ti);
        z.push(zi);
        cell_rec.push(cell_idx);
        type_rec.push(ty);
        if let Some(w) = omega.as_mut() {
            match spec.weight_law.as_ref().unwrap() {
                WeightLawSim::Uniform { lo, hi } => {
                    w.push(lo + (hi - lo) * rng.random::<f64>());
                }
            }
        }
    }
    let data = Dataset::new(y, t, InstrumentData::Discrete(z), x, omega)?;
    Ok((data, TruthRecord { cell: cell_rec, type_idx: type_rec, potential }))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn gaussian_rho_mean(rho: &RhoSpec, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return rho.apply(mean);
    }
    match *rho {
        RhoSpec::One => 1.0,
        RhoSpec::Indicator { y } => normal_cdf((y - mean) / sd),
        RhoSpec::Identity { lo, hi } => {
            let a = (lo - mean) / sd;
            let b = (hi - mean) / sd;
            lo * normal_cdf(a) + hi * (1.0 - normal_cdf(b))
                + mean * (normal_cdf(b) - normal_cdf(a))
                + sd * (normal_pdf(a) - normal_pdf(b))
        }
    }
}

fn law_rho_mean(rho: &RhoSpec, law: &OutcomeLaw, shift: f64) -> f64 {
    match law {
        OutcomeLaw::Gaussian { mean, sd } => gaussian_rho_mean(rho, mean + shift, *sd),
        OutcomeLaw::Point(v) => rho.apply(v + shift),
        OutcomeLaw::Mixture(components) => components
            .iter()
            .map(|c| c.weight * gaussian_rho_mean(rho, c.mean + shift, c.sd))
            .sum(),
    }
}

fn cell_type_probs<'a>(spec: &'a DgpSpec, cell: &'a CovariateCell) -> &'a [f64] {
    cell.type_probs
        .as_ref()
        .or(spec.model.support.probabilities.as_ref())
        .expect("validated")
}

/// Exact population value of a type or outcome functional under the
/// structural law.
pub fn oracle_value(spec: &DgpSpec, f: &FunctionalSpec) -> Result<f64, SimulateError> {
    require_valid(spec)?;
    let ell = f
        .ell
        .as_ref()
        .ok_or_else(|| SimulateError::Oracle(f.name.clone(), "missing ell".into()))?;
    if ell.len() != spec.model.n_types() {
        return Err(SimulateError::Oracle(f.name.clone(), "ell length mismatch".into()));
    }
    let mult = |cell: &CovariateCell| -> Result<f64, SimulateError> {
        match f.covariate_index {
            None => Ok(1.0),
            Some(j) => cell.x.get(j).copied().ok_or_else(|| {
                SimulateError::Oracle(f.name.clone(), format!("covariate index {j} out of range"))
            }),
        }
    };
    match f.kind {
        FunctionalKind::Type => {
            let mut total = 0.0;
            for cell in &spec.cells {
                let tp = cell_type_probs(spec, cell);
                let mv = mult(cell)?;
                for (ty, &p) in tp.iter().enumerate() {
                    total += cell.prob * p * ell[ty] * mv;
                }
            }
            Ok(total)
        }
        FunctionalKind::Outcome => {
            let rho = f
                .rho
                .as_ref()
                .ok_or_else(|| SimulateError::Oracle(f.name.clone(), "missing rho".into()))?;
            let t_idx = f
                .target_treatment
                .as_ref()
                .and_then(|t| spec.model.treatments.index_of(t))
                .ok_or_else(|| {
                    SimulateError::Oracle(f.name.clone(), "missing or unknown target treatment".into())
                })?;
            let mut total = 0.0;
            for (ci, cell) in spec.cells.iter().enumerate() {
                let tp = cell_type_probs(spec, cell);
                let mv = mult(cell)?;
                let shift = spec.outcomes.cell_shift[ci];
                for (ty, &p) in tp.iter().enumerate() {
                    if ell[ty] == 0.0 {
                        continue;
                    }
                    let mean = law_rho_mean(rho, &spec.outcomes.laws[ty][t_idx], shift);
                    total += cell.prob * p * ell[ty] * mv * mean;
                }
            }
            Ok(total)
        }
        FunctionalKind::Derived => Err(SimulateError::Oracle(
            f.name.clone(),
            "derived functionals are combinations; use oracle_values".into(),
        )),
    }
}

/// Oracle values for a whole plan, resolving derived combinations against
/// previously computed components.
pub fn oracle_values(
    spec: &DgpSpec,
    functionals: &[FunctionalSpec],
) -> Result<Vec<(String, f64)>, SimulateError> {
    let mut out: Vec<(String, f64)> = Vec::with_capacity(functionals.len());
    for f in functionals {
        let value = match f.kind {
            FunctionalKind::Derived => {
                let combine = f.combine.as_ref().ok_or_else(|| {
                    SimulateError::Oracle(f.name.clone(), "missing combine".into())
                })?;
                let lookup =
                    |n: &str| out.iter().find(|(pn, _)| pn == n).map(|(_, v)| *v);
                let mut no_guard = |_: f64| Ok(());
                combine
                    .eval(&lookup, &mut no_guard)
                    .map_err(|e| SimulateError::Oracle(f.name.clone(), e))?
            }
            _ => oracle_value(spec, f)?,
        };
        out.push((f.name.clone(), value));
    }
    Ok(out)
}

/// Population moment of the identifying weights on the exact finite
/// population: `Σ_cells Σ_types Σ_z P(cell) p(type|cell) P(z|cell) κ(t*(z), z)`.
/// Used as the anti-hallucination cross-check against `oracle_value`.
pub fn kappa_type_moment(
    spec: &DgpSpec,
    solution: &crate::identify::IdentificationSolution,
) -> Result<f64, SimulateError> {
    require_valid(spec)?;
    let mut total = 0.0;
    for cell in &spec.cells {
        let kappa = crate::identify::kappa_weights(solution, &cell.pz)
            .map_err(|e| SimulateError::Oracle("kappa".into(), e.to_string()))?;
        let tp = cell_type_probs(spec, cell);
        for (ty, &p) in tp.iter().enumerate() {
            let assign = spec.model.type_assignment_indices(ty);
            for (zi, &t_idx) in assign.iter().enumerate() {
                total += cell.prob * p * cell.pz[zi] * kappa.at(t_idx, zi, true);
            }
        }
    }
    Ok(total)
}

/// Grid-snapped oracle for a quantile-effect plan: population CDF values on
/// the same y-grid, monotonized and inverted by the same left-continuous
/// convention the estimator uses (reimplemented locally).
pub fn oracle_qte(
    spec: &DgpSpec,
    plan: &crate::driver::QtePlan,
) -> Result<Vec<f64>, SimulateError> {
    let layout = MtoLayout::detect(&spec.model);
    let arm_lambda = |arm: &ArmPlan, y: f64| -> Result<f64, SimulateError> {
        let (t_label, ell): (String, Vec<f64>) = match arm {
            ArmPlan::Outcome { target_treatment, ell } => {
                (target_treatment.clone(), ell.clone())
            }
            ArmPlan::MediationCn => {
                let l = layout.as_ref().ok_or_else(|| {
                    SimulateError::Oracle(plan.name.clone(), "not a mediation-shaped model".into())
                })?;
                let mut ell = vec![0.0; spec.model.n_types()];
                ell[l.type_idx(MtoType::Cn)] = 1.0;
                (spec.model.treatments.labels[l.t00].clone(), ell)
            }
            ArmPlan::MediationCa => {
                let l = layout.as_ref().ok_or_else(|| {
                    SimulateError::Oracle(plan.name.clone(), "not a mediation-shaped model".into())
                })?;
                let mut ell = vec![0.0; spec.model.n_types()];
                ell[l.type_idx(MtoType::Ca)] = 1.0;
                (spec.model.treatments.labels[l.t11].clone(), ell)
            }
        };
        let f = FunctionalSpec {
            name: format!("{}::cdf", plan.name),
            kind: FunctionalKind::Outcome,
            ell: Some(ell),
            covariate_index: None,
            rho: Some(RhoSpec::Indicator { y }),
            target_treatment: Some(t_label),
            combine: None,
        };
        oracle_value(spec, &f)
    };
    let group = FunctionalSpec {
        name: format!("{}::group", plan.name),
        kind: FunctionalKind::Type,
        ell: Some(plan.group_ell.clone()),
        covariate_index: None,
        rho: None,
        target_treatment: None,
        combine: None,
    };
    let p_group = oracle_value(spec, &group)?;
    // Local monotonize/invert so the oracle does not share the estimator's code.
    let snap = |lambdas: &[f64]| -> Vec<f64> {
        let mut run = f64::NEG_INFINITY;
        lambdas
            .iter()
            .map(|l| {
                run = run.max(l / p_group);
                run.clamp(0.0, 1.0)
            })
            .collect()
    };
    let invert = |cdf: &[f64], tau: f64| -> f64 {
        for (y, f) in plan.y_grid.iter().zip(cdf) {
            if *f >= tau {
                return *y;
            }
        }
        *plan.y_grid.last().unwrap()
    };
    let hi: Vec<f64> = plan
        .y_grid
        .iter()
        .map(|&y| arm_lambda(&plan.hi, y))
        .collect::<Result<_, _>>()?;
    let lo: Vec<f64> = plan
        .y_grid
        .iter()
        .map(|&y| arm_lambda(&plan.lo, y))
        .collect::<Result<_, _>>()?;
    let cdf_hi = snap(&hi);
    let cdf_lo = snap(&lo);
    Ok(plan
        .tau_grid
        .iter()
        .map(|&tau| invert(&cdf_hi, tau) - invert(&cdf_lo, tau))
        .collect())
}

/// Continuous-instrument structural law for the threshold model: the
/// binary component is an independent coin, the scalar component is uniform
/// on the interval, the arm-1 threshold is uniform with optional atoms at the
/// boundary ("never") and at infinity ("always"), and the arm-0 threshold
/// sits at the lower boundary so arm 0 never treats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDgpSpec {
    pub w_lo: f64,
    pub w_hi: f64,
    pub p_c1: f64,
    pub k1_never_mass: f64,
    pub k1_always_mass: f64,
    pub seed: u64,
}

impl ContinuousDgpSpec {
    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            treatments: TreatmentSpace { labels: vec!["0".into(), "1".into()] },
            instruments: InstrumentSpace {
                values: vec!["0".into(), "1".into()],
                mode: InstrumentMode::ContinuousPair { w_lo: self.w_lo, w_hi: self.w_hi },
            },
            support: SupportRestriction { types: Vec::new(), probabilities: None },
            mu: crate::model::BaseMeasure::uniform(2),
            functionals: Vec::new(),
            type_names: None,
            eimc: false,
        }
    }

    /// Exact `P(a ≤ K₁ ≤ b)` for interior endpoints.
    pub fn interval_probability(&self, a: f64, b: f64) -> f64 {
        let cont = 1.0 - self.k1_never_mass - self.k1_always_mass;
        cont * (b - a) / (self.w_hi - self.w_lo)
    }
}

/// Hidden truth for the continuous model: the sampled thresholds.
#[derive(Clone, Debug)]
pub struct ContinuousTruth {
    pub k1: Vec<f64>,
}

pub fn generate_continuous(
    spec: &ContinuousDgpSpec,
    n: usize,
) -> Result<(Dataset, ContinuousTruth), SimulateError> {
    if !(spec.w_lo < spec.w_hi) {
        return Err(SimulateError::InvalidSpec("w_lo must be below w_hi".into()));
    }
    if !(0.0 < spec.p_c1 && spec.p_c1 < 1.0) {
        return Err(SimulateError::InvalidSpec("p_c1 must lie in (0, 1)".into()));
    }
    if spec.k1_never_mass < 0.0
        || spec.k1_always_mass < 0.0
        || spec.k1_never_mass + spec.k1_always_mass >= 1.0
    {
        return Err(SimulateError::InvalidSpec("threshold atom masses are invalid".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut k1s = Vec::with_capacity(n);
    for _ in 0..n {
        let ci = usize::from(rng.random::<f64>() < spec.p_c1);
        let wi = spec.w_lo + (spec.w_hi - spec.w_lo) * rng.random::<f64>();
        let u: f64 = rng.random();
        let k1 = if u < spec.k1_never_mass {
            spec.w_lo
        } else if u < spec.k1_never_mass + spec.k1_always_mass {
            f64::INFINITY
        } else {
            spec.w_lo + (spec.w_hi - spec.w_lo) * rng.random::<f64>()
        };
        let ti = usize::from(ci == 1 && k1 > wi);
        y.push(0.0);
        t.push(ti);
        c.push(ci);
        w.push(wi);
        k1s.push(k1);
    }
    let data = Dataset::new(
        y,
        t,
        InstrumentData::ContinuousPair { c, w },
        Mat::zeros(n, 0),
        None,
    )?;
    Ok((data, ContinuousTruth { k1: k1s }))
}

/// Built-in structural law for the no-defiers binary model: two covariate
/// cells with distinct instrument and type distributions, Gaussian outcomes
/// with a complier effect of one, and a cell-level mean shift.
pub fn preset_dgp_late3() -> DgpSpec {
    DgpSpec {
        model: crate::model::preset_late3(),
        cells: vec![
            CovariateCell {
                prob: 0.5,
                x: vec![0.0],
                pz: vec![0.5, 0.5],
                type_probs: Some(vec![0.3, 0.5, 0.2]),
            },
            CovariateCell {
                prob: 0.5,
                x: vec![1.0],
                pz: vec![0.4, 0.6],
                type_probs: Some(vec![0.25, 0.5, 0.25]),
            },
        ],
        outcomes: OutcomeTable {
            laws: vec![
                vec![
                    OutcomeLaw::Gaussian { mean: 0.0, sd: 1.0 },
                    OutcomeLaw::Gaussian { mean: 0.4, sd: 1.0 },
                ],
                vec![
                    OutcomeLaw::Gaussian { mean: 0.2, sd: 1.0 },
                    OutcomeLaw::Gaussian { mean: 1.2, sd: 1.0 },
                ],
                vec![
                    OutcomeLaw::Gaussian { mean: 0.5, sd: 1.0 },
                    OutcomeLaw::Gaussian { mean: 0.9, sd: 1.0 },
                ],
            ],
            cell_shift: vec![0.0, 0.3],
        },
        weight_law: None,
        seed: 0,
    }
}

/// Built-in structural law for the relocation/mediator model satisfying the
/// mediator-exogeneity constraint: the `Y*(0,0)` law is shared by CN and CC,
/// and the `Y*(1,1)` law by CA and CC. Controlled effects are 0.5, 0.3, 0.8.
pub fn preset_dgp_mto_eimc() -> DgpSpec {
    let mut model = crate::model::preset_mto7();
    model.eimc = true;
    let g = |mean: f64| OutcomeLaw::Gaussian { mean, sd: 1.0 };
    // Treatment order: 00, 01, 10, 11. Type order: NN NA CN CC CA AN AA.
    let laws = vec![
        vec![g(0.1), g(0.2), g(0.3), g(0.4)], // NN
        vec![g(0.2), g(0.4), g(0.3), g(0.5)], // NA
        vec![g(0.3), g(0.5), g(0.8), g(0.9)], // CN: Y*(1,0) − Y*(0,0) = 0.5
        vec![g(0.3), g(0.6), g(0.7), g(1.1)], // CC: Y*(1,1) − Y*(0,0) = 0.8
        vec![g(0.4), g(0.8), g(0.6), g(1.1)], // CA: Y*(1,1) − Y*(0,1) = 0.3
        vec![g(0.2), g(0.3), g(0.5), g(0.6)], // AN
        vec![g(0.3), g(0.4), g(0.5), g(0.7)], // AA
    ];
    DgpSpec {
        model,
        cells: vec![
            CovariateCell {
                prob: 0.5,
                x: vec![0.0],
                pz: vec![0.5, 0.5],
                type_probs: Some(vec![0.20, 0.18, 0.22, 0.12, 0.22, 0.03, 0.03]),
            },
            CovariateCell {
                prob: 0.5,
                x: vec![1.0],
                pz: vec![0.45, 0.55],
                type_probs: Some(vec![0.16, 0.16, 0.24, 0.14, 0.24, 0.03, 0.03]),
            },
        ],
        outcomes: OutcomeTable { laws, cell_shift: vec![0.0, 0.25] },
        weight_law: None,
        seed: 0,
    }
}

/// Built-in continuous-instrument law.
pub fn preset_dgp_continuous() -> ContinuousDgpSpec {
    ContinuousDgpSpec {
        w_lo: 0.0,
        w_hi: 1.0,
        p_c1: 0.5,
        k1_never_mass: 0.15,
        k1_always_mass: 0.15,
        seed: 0,
    }
}

pub fn preset_dgp(name: &str) -> Option<DgpSpec> {
    match name {
        "late3_default" => Some(preset_dgp_late3()),
        "mto_eimc_default" => Some(preset_dgp_mto_eimc()),
        _ => None,
    }
}

/// Replication settings for the verification harness.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub n: usize,
    pub reps: usize,
    pub estimator: EstimatorSettings,
    pub bootstrap: Option<BootstrapSettings>,
    pub master_seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McRow {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mc_sd: f64,
    /// Monte Carlo standard error of the bias: `mc_sd / sqrt(reps)`.
    pub mc_se: f64,
    pub mean_analytic_se: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub reps: usize,
    pub n: usize,
}

impl McReport {
    pub fn row(&self, name: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

struct RepValue {
    estimate: f64,
    se: Option<f64>,
    covered: Option<bool>,
}

/// Runs the full analysis plan on `reps` independently generated datasets and
/// aggregates bias, spread, standard-error accuracy, and interval coverage
/// per functional (including derived combinations and quantile points).
/// Deterministic in the master seed regardless of thread count.
pub fn monte_carlo(
    spec: &DgpSpec,
    plan: &AnalysisPlan,
    config: &McConfig,
) -> Result<McReport, SimulateError> {
    require_valid(spec)?;
    let truths = oracle_values(spec, &plan.functionals)?;
    let mut names: Vec<String> = truths.iter().map(|(n, _)| n.clone()).collect();
    let mut truth_vals: Vec<f64> = truths.iter().map(|(_, v)| *v).collect();
    for qplan in &plan.qte {
        let q_truth = oracle_qte(spec, qplan)?;
        for (tau, tv) in qplan.tau_grid.iter().zip(q_truth) {
            names.push(format!("{}@{tau}", qplan.name));
            truth_vals.push(tv);
        }
    }

    let rep_outputs: Vec<Result<Vec<RepValue>, SimulateError>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_seed(config.master_seed, rep as u64);
            let mut dgp = spec.clone();
            dgp.seed = rep_seed;
            let (data, _) = generate_data(&dgp, config.n)?;
            let mut settings = config.estimator.clone();
            settings.seed = derive_seed(rep_seed, 1);
            let bootstrap = config.bootstrap.clone().map(|mut b| {
                b.seed = derive_seed(rep_seed, 2);
                b
            });
            let out = run_analysis(&spec.model, &data, plan, &settings, bootstrap.as_ref())?;
            let mut values = Vec::with_capacity(names.len());
            for (slot, name) in names.iter().enumerate() {
                let truth = truth_vals[slot];
                if let Some(e) = out.estimates.iter().find(|e| &e.name == name) {
                    let covered = e.ci.as_ref().map(|ci| ci.lo <= truth && truth <= ci.hi);
                    values.push(RepValue {
                        estimate: e.result.lambda_hat,
                        se: Some(e.result.se),
                        covered,
                    });
                } else if let Some(d) = out.derived.iter().find(|d| &d.name == name) {
                    let covered = d.ci.as_ref().map(|ci| ci.lo <= truth && truth <= ci.hi);
                    values.push(RepValue { estimate: d.point, se: None, covered });
                } else if let Some((qname, tau)) = name.rsplit_once('@') {
                    let q = out
                        .qte
                        .iter()
                        .find(|q| q.name == qname)
                        .ok_or_else(|| {
                            SimulateError::Oracle(name.clone(), "missing qte output".into())
                        })?;
                    let ti = q
                        .result
                        .taus
                        .iter()
                        .position(|t| format!("{t}") == tau)
                        .ok_or_else(|| {
                            SimulateError::Oracle(name.clone(), "tau not found".into())
                        })?;
                    let covered = q
                        .cis
                        .as_ref()
                        .map(|cis| cis[ti].lo <= truth && truth <= cis[ti].hi);
                    values.push(RepValue {
                        estimate: q.result.qte[ti],
                        se: q.result.se.as_ref().map(|s| s[ti]),
                        covered,
                    });
                } else {
                    return Err(SimulateError::Oracle(
                        name.clone(),
                        "missing from analysis output".into(),
                    ));
                }
            }
            Ok(values)
        })
        .collect();

    let mut reps_values: Vec<Vec<RepValue>> = Vec::with_capacity(config.reps);
    for r in rep_outputs {
        reps_values.push(r?);
    }

    let mut rows = Vec::with_capacity(names.len());
    for (slot, name) in names.iter().enumerate() {
        let estimates: Vec<f64> = reps_values.iter().map(|r| r[slot].estimate).collect();
        let reps = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / reps;
        let var = if estimates.len() > 1 {
            estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1.0)
        } else {
            0.0
        };
        let mc_sd = var.sqrt();
        let ses: Vec<f64> = reps_values.iter().filter_map(|r| r[slot].se).collect();
        let mean_analytic_se = if ses.is_empty() {
            None
        } else {
            Some(ses.iter().sum::<f64>() / ses.len() as f64)
        };
        let covers: Vec<bool> = reps_values.iter().filter_map(|r| r[slot].covered).collect();
        let coverage = if covers.is_empty() {
            None
        } else {
            Some(covers.iter().filter(|&&c| c).count() as f64 / covers.len() as f64)
        };
        rows.push(McRow {
            name: name.clone(),
            truth: truth_vals[slot],
            mean_estimate: mean,
            bias: mean - truth_vals[slot],
            mc_sd,
            mc_se: mc_sd / reps.sqrt(),
            mean_analytic_se,
            coverage,
        });
    }
    Ok(McReport { rows, reps: config.reps, n: config.n })
}
