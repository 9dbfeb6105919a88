//! Batch entry point: load a model and data, decide identifiability, run the
//! estimation pipeline or a simulation study, and emit machine-readable JSON
//! reports. Identical seeds produce identical reports at any thread count.

mod config;
mod csvio;
mod report;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{EstimateConfig, SimulateConfig};
use po_forge_core::driver::{run_analysis, AnalysisPlan};
use po_forge_core::estimate::{estimate_continuous_interval, EstimatorSettings, KernelCdf};
use po_forge_core::identify::identification_report;
use po_forge_core::inference::{analytic_se, bootstrap_ci, multiplier_bootstrap};
use po_forge_core::model::{BasisSpec, InstrumentMode, ModelSpec};
use po_forge_core::simulate::{generate_data, monte_carlo, validate_dgp, McConfig};
use report::{J, SCHEMA};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "po-forge", version, about = "Identification and double-robust estimation for discrete-instrument potential-outcomes models")]
struct Cli {
    /// Random seed; falls back to the PO_FORGE_SEED environment variable.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (affects wall time only, never results).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct IoArgs {
    /// Model file (JSON), or `preset:<name>` for a built-in model.
    #[arg(long)]
    model: String,
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Decide identifiability of the declared functionals and run the
    /// efficiency checks.
    Identify {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Estimate identified functionals from a dataset.
    Estimate {
        #[command(flatten)]
        io: IoArgs,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate synthetic data and/or run a replication study.
    Simulate {
        /// Simulation configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Report output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_model(spec: &str) -> Result<ModelSpec> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return po_forge_core::model::preset_by_name(name)
            .with_context(|| format!("unknown preset `{name}`"));
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
    Ok(ModelSpec::from_json(&text)?)
}

fn base_seed(cli_seed: Option<u64>) -> u64 {
    cli_seed
        .or_else(|| std::env::var("PO_FORGE_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .expect("thread pool");
    }
    let seed = base_seed(cli.seed);
    let outcome = match cli.command {
        Command::Identify { io } => cmd_identify(&io, seed),
        Command::Estimate { io, data } => cmd_estimate(&io, &data, seed),
        Command::Simulate { config, out } => cmd_simulate(&config, out.as_deref(), seed),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn cmd_identify(io: &IoArgs, seed: u64) -> Result<()> {
    let model = load_model(&io.model)?;
    let report = identification_report(&model, &model.functionals)?;
    if !report.model_diagnostics.is_empty() {
        // Still write the report so the diagnostics are machine-readable,
        // then fail the run.
        report::write_json(&report::identify_report(&report, seed), io.out.as_deref())?;
        bail!("model is invalid: {}", report.model_diagnostics.join("; "));
    }
    report::write_json(&report::identify_report(&report, seed), io.out.as_deref())?;
    Ok(())
}

fn cmd_estimate(io: &IoArgs, data_path: &Path, seed: u64) -> Result<()> {
    let model = load_model(&io.model)?;
    let diags = po_forge_core::model::validate_model(&model);
    if !diags.is_empty() {
        bail!("model is invalid: {}", diags.join("; "));
    }
    let cfg: EstimateConfig = match &io.config {
        Some(path) => config::read_json_config(path)?,
        None => EstimateConfig::default(),
    };
    let loaded = csvio::load_dataset(data_path, &model)?;
    let settings = cfg.estimator.build(seed)?;
    let bootstrap = cfg.bootstrap.as_ref().and_then(|b| b.build(seed));
    let plan = cfg.plan(&model)?;
    let mut warnings = loaded.diagnostics.clone();

    let mut estimates;
    let derived;
    let qte;
    match model.instruments.mode {
        InstrumentMode::Discrete => {
            let output =
                run_analysis(&model, &loaded.dataset, &plan, &settings, bootstrap.as_ref())?;
            if let Some(path) = &cfg.draws_csv {
                let names: Vec<String> =
                    output.estimates.iter().map(|e| e.name.clone()).collect();
                let cols: Vec<Vec<f64>> = output
                    .estimates
                    .iter()
                    .filter_map(|e| e.result.bootstrap_draws.clone())
                    .collect();
                if cols.len() == names.len() && !cols.is_empty() {
                    csvio::write_draws_csv(Path::new(path), &names, &cols)?;
                }
            }
            for e in &output.estimates {
                for w in &e.result.warnings {
                    warnings.push(format!("{}: {w}", e.name));
                }
            }
            (estimates, derived, qte) = report::estimate_rows(&output);
        }
        InstrumentMode::ContinuousPair { w_lo, w_hi } => {
            let Some(ci_cfg) = &cfg.continuous_interval else {
                bail!("continuous-pair models require a `continuous_interval` config block");
            };
            let n = loaded.dataset.n();
            let h = ci_cfg
                .h
                .unwrap_or_else(|| (n as f64).powf(-0.25) * (w_hi - w_lo) / 2.0);
            let basis = BasisSpec::ContinuousPair {
                degree: ci_cfg.w_degree,
                m: loaded.dataset.x.cols(),
                w_lo,
                w_hi,
            };
            let result = estimate_continuous_interval(
                &loaded.dataset,
                &model,
                &basis,
                ci_cfg.arm,
                ci_cfg.a,
                ci_cfg.b,
                h,
                KernelCdf::Biweight,
                ci_cfg.order,
                &settings,
            )?;
            let name = format!("interval[{}, {}]", ci_cfg.a, ci_cfg.b);
            let se = analytic_se(&result, &result.weights)?;
            let ci = match &bootstrap {
                Some(bs) => {
                    let draws =
                        multiplier_bootstrap(&[(&name, &result)], bs.b, bs.law, bs.seed)?;
                    Some(bootstrap_ci(
                        &draws.column(&name)?,
                        result.lambda_hat,
                        plan.level,
                    )?)
                }
                None => None,
            };
            estimates = Vec::new();
            estimates.push(report::EstimateRow {
                name,
                kind: "continuous_interval".into(),
                lambda_hat: J(result.lambda_hat),
                se: J(se),
                ci: ci.map(|c| report::CiReport {
                    level: J(c.level),
                    lo: J(c.lo),
                    hi: J(c.hi),
                    half_width: J(c.half_width),
                }),
                n: result.n,
                folds: result.fold_plan.as_ref().map(|p| p.k),
                routed_via_mediation: false,
                penalties: result
                    .nuisances
                    .entries
                    .iter()
                    .map(|nu| (format!("fold{}:{}", nu.fold, nu.label), J(nu.alpha)))
                    .collect(),
                warnings: result.warnings.clone(),
            });
            derived = Vec::new();
            qte = Vec::new();
        }
    }

    let out = report::EstimateReport {
        schema: SCHEMA,
        command: "estimate",
        settings: report::SettingsEcho {
            seed,
            folds: settings.folds,
            no_split: settings.no_split,
            penalty: penalty_echo(&settings),
            bootstrap_b: bootstrap.as_ref().map(|b| b.b).unwrap_or(0),
            bootstrap_law: bootstrap
                .as_ref()
                .map(|b| format!("{:?}", b.law).to_lowercase())
                .unwrap_or_else(|| "none".into()),
            level: J(plan.level),
        },
        data: report::DataDiagnostics {
            rows_read: loaded.rows_read,
            rows_dropped: loaded.rows_dropped,
            n: loaded.dataset.n(),
        },
        estimates,
        derived,
        qte,
        warnings,
    };
    report::write_json(&out, io.out.as_deref())?;
    Ok(())
}

fn penalty_echo(settings: &EstimatorSettings) -> String {
    match settings.penalty {
        po_forge_core::estimate::PenaltyPolicy::Fixed(a) => format!("fixed({a})"),
        po_forge_core::estimate::PenaltyPolicy::CrossValidate { folds, grid_size } => {
            format!("cv(folds {folds}, grid {grid_size})")
        }
        po_forge_core::estimate::PenaltyPolicy::LeaveOneOut { grid_size } => {
            format!("loo(grid {grid_size})")
        }
    }
}

fn cmd_simulate(config_path: &Path, out: Option<&Path>, seed: u64) -> Result<()> {
    let cfg: SimulateConfig = config::read_json_config(config_path)?;
    let dgp = cfg.dgp(seed)?;
    let diags = validate_dgp(&dgp);
    if !diags.is_empty() {
        bail!("invalid simulation spec: {}", diags.join("; "));
    }
    let mut warnings = Vec::new();
    if let Some(path) = &cfg.data_out {
        let (data, _) = generate_data(&dgp, cfg.n)?;
        csvio::write_dataset(Path::new(path), &dgp.model, &data)?;
    }
    let mut rows = Vec::new();
    let mut reps = None;
    if let Some(mc) = &cfg.mc {
        let mut functionals = Vec::new();
        match &mc.functionals {
            None => functionals.extend(dgp.model.functionals.iter().cloned()),
            Some(names) => {
                for name in names {
                    let f = dgp.model.functional(name).with_context(|| {
                        format!("model declares no functional named `{name}`")
                    })?;
                    functionals.push(f.clone());
                }
            }
        }
        if functionals.is_empty() && mc.qte.is_empty() {
            warnings.push("replication block has no functionals to track".into());
        }
        let plan = AnalysisPlan {
            functionals,
            qte: mc.qte.clone(),
            level: mc.level.unwrap_or(0.95),
        };
        let mc_config = McConfig {
            n: cfg.n,
            reps: mc.reps,
            estimator: mc.estimator.build(seed)?,
            bootstrap: mc.bootstrap.as_ref().and_then(|b| b.build(seed)),
            master_seed: seed,
        };
        let mc_report = monte_carlo(&dgp, &plan, &mc_config)?;
        reps = Some(mc_report.reps);
        rows = mc_report
            .rows
            .iter()
            .map(|r| report::McRowReport {
                name: r.name.clone(),
                truth: J(r.truth),
                mean_estimate: J(r.mean_estimate),
                bias: J(r.bias),
                mc_sd: J(r.mc_sd),
                mc_se: J(r.mc_se),
                mean_analytic_se: r.mean_analytic_se.map(J),
                coverage: r.coverage.map(J),
            })
            .collect();
    }
    let out_report = report::SimulateReport {
        schema: SCHEMA,
        command: "simulate",
        seed,
        n: cfg.n,
        data_out: cfg.data_out.clone(),
        reps,
        monte_carlo: rows,
        warnings,
    };
    report::write_json(&out_report, out)?;
    Ok(())
}
