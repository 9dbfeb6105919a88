//! JSON report types. Every floating-point number is serialized with 17
//! significant digits as a raw JSON number, so reports round-trip bit-exactly
//! and goldens stay stable across runs.

use po_forge_core::driver::{AnalysisOutput, NamedQte};
use po_forge_core::identify::IdentificationReport;
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

pub const SCHEMA: &str = "po-forge/1";

/// An `f64` serialized as a raw JSON number with 17 significant digits.
/// Non-finite values become null.
#[derive(Clone, Copy, Debug)]
pub struct J(pub f64);

impl Serialize for J {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(format!("{:.16e}", self.0))
                .map_err(serde::ser::Error::custom)?;
            raw.serialize(serializer)
        } else {
            serializer.serialize_none()
        }
    }
}

pub fn jvec(values: &[f64]) -> Vec<J> {
    values.iter().map(|&v| J(v)).collect()
}

#[derive(Clone, Debug)]
pub struct JSeq(pub Vec<J>);

impl Serialize for JSeq {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for v in &self.0 {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
pub struct CiReport {
    pub level: J,
    pub lo: J,
    pub hi: J,
    pub half_width: J,
}

#[derive(Serialize)]
pub struct EstimateRow {
    pub name: String,
    pub kind: String,
    pub lambda_hat: J,
    pub se: J,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiReport>,
    pub n: usize,
    pub folds: Option<usize>,
    pub routed_via_mediation: bool,
    /// Selected penalties per nuisance fit, labeled.
    pub penalties: Vec<(String, J)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct DerivedRow {
    pub name: String,
    pub point: J,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiReport>,
}

#[derive(Serialize)]
pub struct QteRow {
    pub name: String,
    pub tau: J,
    pub qte: J,
    pub hi_quantile: J,
    pub lo_quantile: J,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<J>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiReport>,
}

#[derive(Serialize)]
pub struct SettingsEcho {
    pub seed: u64,
    pub folds: usize,
    pub no_split: bool,
    pub penalty: String,
    pub bootstrap_b: usize,
    pub bootstrap_law: String,
    pub level: J,
}

#[derive(Serialize)]
pub struct DataDiagnostics {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub n: usize,
}

#[derive(Serialize)]
pub struct EstimateReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub settings: SettingsEcho,
    pub data: DataDiagnostics,
    pub estimates: Vec<EstimateRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub derived: Vec<DerivedRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub qte: Vec<QteRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn ci_report(ci: &po_forge_core::inference::Ci) -> CiReport {
    CiReport { level: J(ci.level), lo: J(ci.lo), hi: J(ci.hi), half_width: J(ci.half_width) }
}

pub fn estimate_rows(output: &AnalysisOutput) -> (Vec<EstimateRow>, Vec<DerivedRow>, Vec<QteRow>) {
    let estimates = output
        .estimates
        .iter()
        .map(|e| EstimateRow {
            name: e.name.clone(),
            kind: format!("{:?}", e.kind).to_lowercase(),
            lambda_hat: J(e.result.lambda_hat),
            se: J(e.result.se),
            ci: e.ci.as_ref().map(ci_report),
            n: e.result.n,
            folds: e.result.fold_plan.as_ref().map(|p| p.k),
            routed_via_mediation: e.routed_via_mediation,
            penalties: e
                .result
                .nuisances
                .entries
                .iter()
                .map(|n| (format!("fold{}:{}", n.fold, n.label), J(n.alpha)))
                .collect(),
            warnings: e.result.warnings.clone(),
        })
        .collect();
    let derived = output
        .derived
        .iter()
        .map(|d| DerivedRow {
            name: d.name.clone(),
            point: J(d.point),
            ci: d.ci.as_ref().map(ci_report),
        })
        .collect();
    let qte = output.qte.iter().flat_map(qte_rows).collect();
    (estimates, derived, qte)
}

fn qte_rows(q: &NamedQte) -> Vec<QteRow> {
    q.result
        .taus
        .iter()
        .enumerate()
        .map(|(ti, &tau)| QteRow {
            name: q.name.clone(),
            tau: J(tau),
            qte: J(q.result.qte[ti]),
            hi_quantile: J(q.result.hi_quantiles[ti]),
            lo_quantile: J(q.result.lo_quantiles[ti]),
            se: q.result.se.as_ref().map(|s| J(s[ti])),
            ci: q.cis.as_ref().map(|cis| ci_report(&cis[ti])),
        })
        .collect()
}

#[derive(Serialize)]
pub struct FunctionalVerdictRow {
    pub name: String,
    pub kind: String,
    pub identified: bool,
    pub estimable: bool,
    pub eimc_route: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<J>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<JSeq>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Serialize)]
pub struct IdentifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub model_diagnostics: Vec<String>,
    pub functionals: Vec<FunctionalVerdictRow>,
    pub rank_condition: Vec<(String, bool)>,
    pub nullspace_condition: bool,
}

pub fn identify_report(report: &IdentificationReport, seed: u64) -> IdentifyReport {
    IdentifyReport {
        schema: SCHEMA,
        command: "identify",
        seed,
        model_diagnostics: report.model_diagnostics.clone(),
        functionals: report
            .functionals
            .iter()
            .map(|f| FunctionalVerdictRow {
                name: f.name.clone(),
                kind: format!("{:?}", f.kind).to_lowercase(),
                identified: f.identified,
                estimable: f.estimable,
                eimc_route: f.eimc_route,
                residual: f.residual.map(J),
                s: f.s.as_ref().map(|s| JSeq(jvec(s))),
                note: f.note.clone(),
            })
            .collect(),
        rank_condition: report.rank_condition.clone(),
        nullspace_condition: report.nullspace_condition,
    }
}

#[derive(Serialize)]
pub struct McRowReport {
    pub name: String,
    pub truth: J,
    pub mean_estimate: J,
    pub bias: J,
    pub mc_sd: J,
    pub mc_se: J,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_analytic_se: Option<J>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<J>,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub monte_carlo: Vec<McRowReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&std::path::Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
