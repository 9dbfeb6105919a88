//! Run configuration files (JSON). Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use po_forge_core::driver::{AnalysisPlan, QtePlan};
use po_forge_core::estimate::{EstimatorSettings, PenaltyPolicy};
use po_forge_core::inference::{BootstrapSettings, WeightLaw};
use po_forge_core::model::{ModelSpec, RhoSpec};
use po_forge_core::simulate::DgpSpec;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub folds: Option<usize>,
    pub no_split: Option<bool>,
    pub seed: Option<u64>,
    pub cv_folds: Option<usize>,
    pub grid_size: Option<usize>,
    pub fixed_alpha: Option<f64>,
    pub leave_one_out: Option<bool>,
    pub u_min: Option<f64>,
    pub p_min: Option<f64>,
}

impl EstimatorConfig {
    pub fn build(&self, base_seed: u64) -> Result<EstimatorSettings> {
        let mut settings = EstimatorSettings::default();
        if let Some(k) = self.folds {
            settings.folds = k;
        }
        settings.no_split = self.no_split.unwrap_or(false);
        settings.seed = self.seed.unwrap_or(base_seed);
        let grid = self.grid_size.unwrap_or(po_forge_core::lasso::GRID_SIZE);
        settings.penalty = match (self.fixed_alpha, self.leave_one_out.unwrap_or(false)) {
            (Some(alpha), false) => PenaltyPolicy::Fixed(alpha),
            (None, true) => PenaltyPolicy::LeaveOneOut { grid_size: grid },
            (None, false) => {
                PenaltyPolicy::CrossValidate { folds: self.cv_folds.unwrap_or(10), grid_size: grid }
            }
            (Some(_), true) => bail!("fixed_alpha and leave_one_out are mutually exclusive"),
        };
        if let Some(v) = self.u_min {
            settings.u_min = v;
        }
        if let Some(v) = self.p_min {
            settings.p_min = v;
        }
        Ok(settings)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub b: usize,
    #[serde(default)]
    pub law: Option<WeightLaw>,
    pub seed: Option<u64>,
}

impl BootstrapConfig {
    pub fn build(&self, base_seed: u64) -> Option<BootstrapSettings> {
        if self.b == 0 {
            return None;
        }
        Some(BootstrapSettings {
            b: self.b,
            law: self.law.unwrap_or(WeightLaw::Normal),
            seed: self.seed.unwrap_or(base_seed.wrapping_add(1)),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousIntervalConfig {
    pub a: f64,
    pub b: f64,
    /// Defaults to n^{-1/4} · (w_hi − w_lo) / 2.
    pub h: Option<f64>,
    #[serde(default = "default_arm")]
    pub arm: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_w_degree")]
    pub w_degree: usize,
}

fn default_arm() -> usize {
    1
}

fn default_order() -> usize {
    32
}

fn default_w_degree() -> usize {
    3
}

/// Configuration for `estimate`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Names of declared functionals to run; default: all declared.
    pub functionals: Option<Vec<String>>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub bootstrap: Option<BootstrapConfig>,
    pub level: Option<f64>,
    #[serde(default)]
    pub qte: Vec<QtePlan>,
    /// Adds the full mediation panel (type probabilities, outcome moments,
    /// controlled effects) with this outcome transform.
    pub mediation_panel: Option<RhoSpec>,
    pub continuous_interval: Option<ContinuousIntervalConfig>,
    /// Persist bootstrap draws as columnar CSV.
    pub draws_csv: Option<String>,
}

impl EstimateConfig {
    pub fn plan(&self, model: &ModelSpec) -> Result<AnalysisPlan> {
        let mut functionals = Vec::new();
        match &self.functionals {
            None => functionals.extend(model.functionals.iter().cloned()),
            Some(names) => {
                for name in names {
                    let f = model
                        .functional(name)
                        .with_context(|| format!("model declares no functional named `{name}`"))?;
                    functionals.push(f.clone());
                }
            }
        }
        if let Some(rho) = &self.mediation_panel {
            let panel = po_forge_core::driver::mto_mediation_plan(model, rho.clone())
                .context("mediation_panel requires the relocation/mediator model shape")?;
            for f in panel.functionals {
                if !functionals.iter().any(|g| g.name == f.name) {
                    functionals.push(f);
                }
            }
        }
        Ok(AnalysisPlan {
            functionals,
            qte: self.qte.clone(),
            level: self.level.unwrap_or(0.95),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub reps: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub bootstrap: Option<BootstrapConfig>,
    pub level: Option<f64>,
    /// Functional names from the model to track; default: all declared.
    pub functionals: Option<Vec<String>>,
    #[serde(default)]
    pub qte: Vec<QtePlan>,
}

/// Configuration for `simulate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Inline structural law, or the name of a built-in one.
    pub dgp: Option<DgpSpec>,
    pub preset: Option<String>,
    pub n: usize,
    pub seed: Option<u64>,
    /// Path for the generated dataset CSV.
    pub data_out: Option<String>,
    pub mc: Option<McBlock>,
}

impl SimulateConfig {
    pub fn dgp(&self, base_seed: u64) -> Result<DgpSpec> {
        let mut spec = match (&self.dgp, &self.preset) {
            (Some(spec), None) => spec.clone(),
            (None, Some(name)) => po_forge_core::simulate::preset_dgp(name)
                .with_context(|| format!("unknown simulation preset `{name}`"))?,
            (Some(_), Some(_)) => bail!("config sets both `dgp` and `preset`"),
            (None, None) => bail!("config needs either `dgp` or `preset`"),
        };
        spec.seed = self.seed.unwrap_or(base_seed);
        Ok(spec)
    }
}

pub fn read_json_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
