//! Cross-module checks of the estimation pipeline against the simulator's
//! exact oracles: single-run sanity at pinned seeds, exact algebraic
//! identities at zero penalty, and agreement between estimator variants.

use po_forge_core::driver::{mto_mediation_plan, run_analysis, AnalysisPlan, ArmPlan, QtePlan};
use po_forge_core::estimate::{
    estimate_type_functional, estimate_weighted_no_split, mediation_cn, DrRequest,
    EstimatorSettings, OutcomeRequest, PenaltyPolicy, TypeRequest,
};
use po_forge_core::identify::{solve_outcome_functional, solve_type_functional};
use po_forge_core::inference::BootstrapSettings;
use po_forge_core::model::{
    response_matrix_outcome, response_matrix_types, BasisSpec, FunctionalKind, FunctionalSpec,
    RhoSpec,
};
use po_forge_core::simulate::{
    generate_data, oracle_value, oracle_values, preset_dgp_late3, preset_dgp_mto_eimc,
    WeightLawSim,
};

fn fast_settings(seed: u64) -> EstimatorSettings {
    EstimatorSettings {
        folds: 5,
        seed,
        penalty: PenaltyPolicy::CrossValidate { folds: 5, grid_size: 12 },
        ..EstimatorSettings::default()
    }
}

fn type_functional(name: &str, _r: usize, ell: Vec<f64>) -> FunctionalSpec {
    FunctionalSpec {
        name: name.into(),
        kind: FunctionalKind::Type,
        ell: Some(ell),
        covariate_index: None,
        rho: None,
        target_treatment: None,
        combine: None,
    }
}

#[test]
fn late3_type_probability_within_three_ses_of_truth() {
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4001;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let ell = model.ell_indicator(&["C"]).unwrap();
    let sol = solve_type_functional(&omega, &ell).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    let req = TypeRequest { solution: &sol, covariate_multiplier: None };
    let result =
        estimate_type_functional(&data, model, &req, &basis, &fast_settings(1)).unwrap();
    let truth =
        oracle_value(&dgp, &type_functional("p_c", 3, ell.clone())).unwrap();
    assert!((truth - 0.5).abs() < 1e-12);
    assert!(
        (result.lambda_hat - truth).abs() < 3.0 * result.se,
        "estimate {} vs truth {truth} (se {})",
        result.lambda_hat,
        result.se
    );
}

#[test]
fn covariate_multiplier_recovers_conditional_mean_block() {
    // E[X1 · 1{complier}] = 0.25 under the built-in law.
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4003;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let ell = model.ell_indicator(&["C"]).unwrap();
    let sol = solve_type_functional(&omega, &ell).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    let req = TypeRequest { solution: &sol, covariate_multiplier: Some(0) };
    let result =
        estimate_type_functional(&data, model, &req, &basis, &fast_settings(3)).unwrap();
    let mut f = type_functional("x_c", 3, ell);
    f.covariate_index = Some(0);
    let truth = oracle_value(&dgp, &f).unwrap();
    assert!((truth - 0.25).abs() < 1e-12);
    assert!((result.lambda_hat - truth).abs() < 3.0 * result.se);
}

#[test]
fn weighted_no_split_agrees_with_cross_fit_and_handles_survey_weights() {
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4005;
    dgp.weight_law = Some(WeightLawSim::Uniform { lo: 0.5, hi: 1.5 });
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let ell = model.ell_indicator(&["C"]).unwrap();
    let sol = solve_type_functional(&omega, &ell).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    let req = TypeRequest { solution: &sol, covariate_multiplier: None };
    let split =
        estimate_type_functional(&data, model, &req, &basis, &fast_settings(5)).unwrap();
    let no_split = estimate_weighted_no_split(
        &data,
        model,
        &DrRequest::Type(req.clone()),
        &basis,
        &fast_settings(5),
    )
    .unwrap();
    // Asymptotically equivalent estimators on the same sample.
    let gap = (split.lambda_hat - no_split.lambda_hat).abs();
    assert!(gap < 3.0 * (split.se + no_split.se), "gap {gap}");
    // Weights drawn independently of everything leave the estimand at the
    // unweighted truth.
    let truth = 0.5;
    assert!((no_split.lambda_hat - truth).abs() < 3.0 * no_split.se);
}

#[test]
fn rho_one_outcome_estimator_equals_embedded_type_estimator_exactly() {
    // With rho ≡ 1 and the outcome solution embedded into a type solution
    // supported on the target treatment only, the two estimators assemble
    // identical scores at any penalty.
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4007;
    let (data, _) = generate_data(&dgp, 600).unwrap();
    let model = &dgp.model;
    let ell = model.ell_indicator(&["C"]).unwrap();
    let omega_t = response_matrix_outcome(model, "1").unwrap();
    let out_sol = solve_outcome_functional(&omega_t, &ell).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    let settings = EstimatorSettings {
        folds: 3,
        seed: 11,
        penalty: PenaltyPolicy::Fixed(0.02),
        ..EstimatorSettings::default()
    };
    let rho = RhoSpec::One;
    let out_req = OutcomeRequest {
        solution: &out_sol,
        rho: &rho,
        target_treatment: "1",
        covariate_multiplier: None,
    };
    let outcome = po_forge_core::estimate::estimate_outcome_functional(
        &data, model, &out_req, &basis, &settings,
    )
    .unwrap();

    // Embed: s_type[j·d + t1] = s_out[j], zero elsewhere.
    let d = model.n_treatments();
    let t1 = model.treatments.index_of("1").unwrap();
    let mut s = vec![0.0; 2 * d];
    for j in 0..2 {
        s[j * d + t1] = out_sol.s[j];
    }
    let embedded = po_forge_core::identify::IdentificationSolution {
        s,
        residual: 0.0,
        identified: true,
        kind: po_forge_core::identify::SolutionKind::Type,
        target_treatment: None,
    };
    let type_req = TypeRequest { solution: &embedded, covariate_multiplier: None };
    let typed =
        estimate_type_functional(&data, model, &type_req, &basis, &settings).unwrap();
    assert!(
        (outcome.lambda_hat - typed.lambda_hat).abs() < 1e-12,
        "{} vs {}",
        outcome.lambda_hat,
        typed.lambda_hat
    );
}

#[test]
fn unpenalized_saturated_type_estimates_are_linear_and_sum_to_one() {
    let mut dgp = preset_dgp_mto_eimc();
    dgp.seed = 4011;
    let (data, _) = generate_data(&dgp, 800).unwrap();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    // Drive the unpenalized coordinate descent close to machine precision so
    // the algebraic identities are visible beneath the solver tolerance.
    let settings = EstimatorSettings {
        folds: 2,
        seed: 17,
        penalty: PenaltyPolicy::Fixed(0.0),
        fit: po_forge_core::lasso::FitSettings {
            tol_cd: 1e-13,
            tol_kkt: 1e-11,
            max_sweeps: 100_000,
        },
        ..EstimatorSettings::default()
    };
    let mut total = 0.0;
    let mut estimates = Vec::new();
    for ty in 0..7 {
        let mut ell = vec![0.0; 7];
        ell[ty] = 1.0;
        let sol = solve_type_functional(&omega, &ell).unwrap();
        let req = TypeRequest { solution: &sol, covariate_multiplier: None };
        let r = estimate_type_functional(&data, model, &req, &basis, &settings).unwrap();
        total += r.lambda_hat;
        estimates.push(r.lambda_hat);
    }
    assert!((total - 1.0).abs() < 1e-10, "sum {total}");

    // Exact linearity: a·1{CN} + b·1{CC}.
    let (a, b) = (2.5, -0.75);
    let mut combo = vec![0.0; 7];
    combo[2] = a;
    combo[3] = b;
    let sol = solve_type_functional(&omega, &combo).unwrap();
    let req = TypeRequest { solution: &sol, covariate_multiplier: None };
    let r = estimate_type_functional(&data, model, &req, &basis, &settings).unwrap();
    assert!((r.lambda_hat - (a * estimates[2] + b * estimates[3])).abs() < 1e-10);
}

#[test]
fn mediation_scores_recover_truth_and_collapse_without_double_compliers() {
    let mut dgp = preset_dgp_mto_eimc();
    dgp.seed = 4013;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let rho = RhoSpec::Identity { lo: -30.0, hi: 30.0 };
    let result = mediation_cn(&data, model, &rho, &fast_settings(23)).unwrap();
    let truth_f = FunctionalSpec {
        name: "y00_cn".into(),
        kind: FunctionalKind::Outcome,
        ell: Some(model.ell_indicator(&["CN"]).unwrap()),
        covariate_index: None,
        rho: Some(rho.clone()),
        target_treatment: Some("00".into()),
        combine: None,
    };
    let truth = oracle_value(&dgp, &truth_f).unwrap();
    assert!(
        (result.lambda_hat - truth).abs() < 3.0 * result.se,
        "mediation {} vs truth {truth} (se {})",
        result.lambda_hat,
        result.se
    );

    // Collapse: with no CC mass, the mediation target coincides with the
    // identified {CN, CC} outcome moment.
    let mut no_cc = preset_dgp_mto_eimc();
    no_cc.seed = 4015;
    for cell in no_cc.cells.iter_mut() {
        let mut tp = cell.type_probs.clone().unwrap();
        tp[2] += tp[3]; // move CC mass into CN
        tp[3] = 0.0;
        cell.type_probs = Some(tp);
    }
    let (data2, _) = generate_data(&no_cc, 4000).unwrap();
    let med = mediation_cn(&data2, &no_cc.model, &rho, &fast_settings(29)).unwrap();
    let omega_t = response_matrix_outcome(&no_cc.model, "00").unwrap();
    let ell = no_cc.model.ell_indicator(&["CN", "CC"]).unwrap();
    let sol = solve_outcome_functional(&omega_t, &ell).unwrap();
    let out_req = OutcomeRequest {
        solution: &sol,
        rho: &rho,
        target_treatment: "00",
        covariate_multiplier: None,
    };
    let direct = po_forge_core::estimate::estimate_outcome_functional(
        &data2,
        &no_cc.model,
        &out_req,
        &BasisSpec::for_model(&no_cc.model, 1),
        &fast_settings(29),
    )
    .unwrap();
    let gap = (med.lambda_hat - direct.lambda_hat).abs();
    assert!(gap < 3.0 * (med.se + direct.se), "gap {gap}");
}

#[test]
fn full_mediation_panel_matches_oracles_on_one_run() {
    let mut dgp = preset_dgp_mto_eimc();
    dgp.seed = 4021;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let rho = RhoSpec::Identity { lo: -30.0, hi: 30.0 };
    let plan = mto_mediation_plan(&dgp.model, rho).unwrap();
    let bootstrap = BootstrapSettings { b: 400, seed: 9, ..BootstrapSettings::default() };
    let output =
        run_analysis(&dgp.model, &data, &plan, &fast_settings(31), Some(&bootstrap)).unwrap();
    let truths = oracle_values(&dgp, &plan.functionals).unwrap();
    let lookup = |name: &str| truths.iter().find(|(n, _)| n == name).map(|(_, v)| *v).unwrap();
    // Derived effect truths designed into the law.
    assert!((lookup("cde0") - 0.5).abs() < 1e-12);
    assert!((lookup("cde1") - 0.3).abs() < 1e-12);
    assert!((lookup("cte") - 0.8).abs() < 1e-12);
    for e in &output.estimates {
        let truth = lookup(&e.name);
        assert!(
            (e.result.lambda_hat - truth).abs() < 4.0 * e.result.se,
            "{}: {} vs {truth} (se {})",
            e.name,
            e.result.lambda_hat,
            e.result.se
        );
    }
    for dv in &output.derived {
        let truth = lookup(&dv.name);
        let ci = dv.ci.as_ref().unwrap();
        let half = ci.half_width.max(1e-6);
        assert!(
            (dv.point - truth).abs() < 2.0 * half,
            "{}: {} vs {truth} (ci half-width {half})",
            dv.name,
            dv.point
        );
    }
}

#[test]
fn qte_recovers_location_shift() {
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4031;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let ell = model.ell_indicator(&["C"]).unwrap();
    let y_grid: Vec<f64> = (0..23).map(|k| -2.5 + 0.25 * k as f64).collect();
    let plan = AnalysisPlan {
        functionals: Vec::new(),
        qte: vec![QtePlan {
            name: "qte_c".into(),
            hi: ArmPlan::Outcome { target_treatment: "1".into(), ell: ell.clone() },
            lo: ArmPlan::Outcome { target_treatment: "0".into(), ell: ell.clone() },
            group_ell: ell,
            y_grid,
            tau_grid: vec![0.25, 0.75],
        }],
        level: 0.95,
    };
    let bootstrap = BootstrapSettings { b: 300, seed: 3, ..BootstrapSettings::default() };
    let output =
        run_analysis(model, &data, &plan, &fast_settings(37), Some(&bootstrap)).unwrap();
    let q = &output.qte[0];
    let oracle =
        po_forge_core::simulate::oracle_qte(&dgp, &plan.qte[0]).unwrap();
    for ti in 0..2 {
        let se = q.result.se.as_ref().unwrap()[ti].max(0.05);
        assert!(
            (q.result.qte[ti] - oracle[ti]).abs() <= 3.0 * se + 0.25 + 1e-12,
            "tau {}: {} vs snapped truth {} (se {se})",
            q.result.taus[ti],
            q.result.qte[ti],
            oracle[ti]
        );
        // The unsnapped truth is a pure unit shift; the grid resolution is
        // 0.25, so the snapped oracle must sit within one grid step of it.
        assert!((oracle[ti] - 1.0).abs() <= 0.25 + 1e-12);
    }
}

#[test]
fn qte_refuses_tiny_group_probabilities() {
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4045;
    // Drain the complier mass so the conditioning group is (nearly) empty.
    for cell in dgp.cells.iter_mut() {
        cell.type_probs = Some(vec![0.68, 0.02, 0.30]);
    }
    let (data, _) = generate_data(&dgp, 1500).unwrap();
    let model = &dgp.model;
    let ell_c = model.ell_indicator(&["C"]).unwrap();
    let plan = AnalysisPlan {
        functionals: Vec::new(),
        qte: vec![QtePlan {
            name: "qte_c_small".into(),
            hi: ArmPlan::Outcome { target_treatment: "1".into(), ell: ell_c.clone() },
            lo: ArmPlan::Outcome { target_treatment: "0".into(), ell: ell_c.clone() },
            group_ell: ell_c,
            y_grid: vec![-1.0, 0.0, 1.0],
            tau_grid: vec![0.5],
        }],
        level: 0.95,
    };
    let mut settings = fast_settings(45);
    settings.p_min = 0.05;
    let err = run_analysis(model, &data, &plan, &settings, None).unwrap_err();
    assert!(err.to_string().contains("P(group)"), "{err}");
}

#[test]
fn identical_outcome_laws_give_zero_qte() {
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4041;
    // Same law for both arms of the complier row.
    dgp.outcomes.laws[1][1] = dgp.outcomes.laws[1][0].clone();
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let ell = model.ell_indicator(&["C"]).unwrap();
    let y_grid: Vec<f64> = (0..23).map(|k| -2.5 + 0.25 * k as f64).collect();
    let plan = AnalysisPlan {
        functionals: Vec::new(),
        qte: vec![QtePlan {
            name: "qte_null".into(),
            hi: ArmPlan::Outcome { target_treatment: "1".into(), ell: ell.clone() },
            lo: ArmPlan::Outcome { target_treatment: "0".into(), ell: ell.clone() },
            group_ell: ell,
            y_grid,
            tau_grid: vec![0.5],
        }],
        level: 0.95,
    };
    let bootstrap = BootstrapSettings { b: 300, seed: 5, ..BootstrapSettings::default() };
    let output =
        run_analysis(model, &data, &plan, &fast_settings(41), Some(&bootstrap)).unwrap();
    let q = &output.qte[0];
    let se = q.result.se.as_ref().unwrap()[0].max(0.05);
    assert!(q.result.qte[0].abs() <= 3.0 * se + 0.25 + 1e-12, "{}", q.result.qte[0]);
}

#[test]
fn double_robustness_identity_on_enumerated_population() {
    // For any bounded perturbation a(t,z,x), replacing the regression
    // nuisance leaves the population moment unchanged:
    // E[Σ_t κ(t,Z,X)(1{T=t} − a)] + E_X[Σ_t Σ_z μ_z ν(t,z,X) a] = E[κ(T,Z,X)].
    use rand::Rng;
    use rand::SeedableRng;
    let dgp = preset_dgp_late3();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let ell = model.ell_indicator(&["C"]).unwrap();
    let sol = solve_type_functional(&omega, &ell).unwrap();
    let d = 2;
    let mu = [0.5, 0.5];
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
    for _ in 0..25 {
        let a: Vec<f64> = (0..(d * 2 * dgp.cells.len()))
            .map(|_| rng.random::<f64>() * 4.0 - 2.0)
            .collect();
        let a_at = |t: usize, z: usize, cell: usize| a[(cell * 2 + z) * d + t];
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (ci, cell) in dgp.cells.iter().enumerate() {
            let kappa = |t: usize, z: usize| {
                let nu = sol.s[z * d + t] / mu[z];
                nu / (cell.pz[z] / mu[z])
            };
            let tp = cell.type_probs.as_ref().unwrap();
            for (ty, &pt) in tp.iter().enumerate() {
                let assign = model.type_assignment_indices(ty);
                for z in 0..2 {
                    let mass = cell.prob * pt * cell.pz[z];
                    let t_obs = assign[z];
                    rhs += mass * kappa(t_obs, z);
                    for t in 0..d {
                        let ind = if t == t_obs { 1.0 } else { 0.0 };
                        lhs += mass * kappa(t, z) * (ind - a_at(t, z, ci));
                    }
                }
            }
            for t in 0..d {
                for z in 0..2 {
                    let nu = sol.s[z * d + t] / mu[z];
                    lhs += cell.prob * mu[z] * nu * a_at(t, z, ci);
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn corruption_knobs_shift_the_estimate_only_when_both_nuisances_break() {
    use po_forge_core::estimate::Corruption;
    let mut dgp = preset_dgp_late3();
    dgp.seed = 4051;
    let (data, _) = generate_data(&dgp, 4000).unwrap();
    let model = &dgp.model;
    let omega = response_matrix_types(model).unwrap();
    let ell = model.ell_indicator(&["C"]).unwrap();
    let sol = solve_type_functional(&omega, &ell).unwrap();
    let basis = BasisSpec::for_model(model, 1);
    let req = TypeRequest { solution: &sol, covariate_multiplier: None };
    let run = |corruption: Corruption| {
        let settings = EstimatorSettings { corruption, ..fast_settings(53) };
        estimate_type_functional(&data, model, &req, &basis, &settings).unwrap()
    };
    let clean = run(Corruption::None);
    let beta_only = run(Corruption::Regression(0.4));
    let gamma_only = run(Corruption::Representer(0.4));
    let both = run(Corruption::Both(0.4, 0.4));
    assert!((beta_only.lambda_hat - 0.5).abs() < 4.0 * beta_only.se);
    assert!((gamma_only.lambda_hat - 0.5).abs() < 4.0 * gamma_only.se);
    // Population bias from breaking both sides is −d·c² = −0.32 here.
    assert!(
        (both.lambda_hat - 0.5).abs() > 10.0 * clean.se,
        "dual corruption bias {} too small",
        both.lambda_hat - 0.5
    );
}

#[test]
fn analytic_se_tracks_mc_sd_over_repetitions() {
    // 60 replications at n = 1500: the mean analytic SE should sit within a
    // loose band of the Monte Carlo spread (acceptance tightens this).
    let dgp = preset_dgp_late3();
    let plan = AnalysisPlan::from_functionals(vec![type_functional(
        "p_c",
        3,
        dgp.model.ell_indicator(&["C"]).unwrap(),
    )]);
    let config = po_forge_core::simulate::McConfig {
        n: 1500,
        reps: 60,
        estimator: fast_settings(0),
        bootstrap: None,
        master_seed: 606,
    };
    let report = po_forge_core::simulate::monte_carlo(&dgp, &plan, &config).unwrap();
    let row = report.row("p_c").unwrap();
    assert!(row.bias.abs() < 4.0 * row.mc_se, "bias {}", row.bias);
    let ratio = row.mean_analytic_se.unwrap() / row.mc_sd;
    assert!((0.7..1.4).contains(&ratio), "se ratio {ratio}");
}

#[test]
fn derived_effect_errors_name_the_small_denominator() {
    let blocks = po_forge_core::estimate::MediationBlocks {
        p_cn: 0.0,
        p_ca: 0.2,
        p_cc: 0.1,
        y10_cn: 0.1,
        y00_cn: 0.0,
        y11_ca: 0.0,
        y01_ca: 0.0,
        y11_ca_cc: 0.0,
        y00_cn_cc: 0.0,
    };
    let err = po_forge_core::estimate::derived_mediation_effects(&blocks, 0.005).unwrap_err();
    assert!(err.to_string().contains("P(CN)"));
}

#[test]
fn benchmark_arithmetic_row_checks() {
    // The remaining two implied-average benchmark rows.
    let implied =
        po_forge_core::estimate::implied_late(0.194, 0.203, 0.065, -0.042, -0.074, -0.412, 0.005)
            .unwrap();
    assert!((implied - (-0.106)).abs() < 0.005, "{implied}");
    let implied =
        po_forge_core::estimate::implied_late(0.194, 0.203, 0.065, 0.498, 2.928, 2.479, 0.005)
            .unwrap();
    assert!((implied - 1.840).abs() < 0.005, "{implied}");
}

#[test]
fn dgp_validation_rejects_bad_specs() {
    let mut bad = preset_dgp_late3();
    bad.cells[0].pz = vec![0.0, 1.0];
    assert!(!po_forge_core::simulate::validate_dgp(&bad).is_empty());
    let err = generate_data(&bad, 10).unwrap_err();
    assert!(matches!(err, po_forge_core::simulate::SimulateError::InvalidSpec(_)));
}

#[test]
fn run_analysis_refuses_unidentified_targets() {
    let mut dgp = preset_dgp_mto_eimc();
    dgp.seed = 4061;
    dgp.model.eimc = false; // support restriction only
    let (data, _) = generate_data(&dgp, 500).unwrap();
    let rho = RhoSpec::Identity { lo: -30.0, hi: 30.0 };
    let f = FunctionalSpec {
        name: "y00_cn".into(),
        kind: FunctionalKind::Outcome,
        ell: Some(dgp.model.ell_indicator(&["CN"]).unwrap()),
        covariate_index: None,
        rho: Some(rho),
        target_treatment: Some("00".into()),
        combine: None,
    };
    let plan = AnalysisPlan::from_functionals(vec![f]);
    let err =
        run_analysis(&dgp.model, &data, &plan, &fast_settings(61), None).unwrap_err();
    match err {
        po_forge_core::driver::DriverError::NotIdentified { name, .. } => {
            assert_eq!(name, "y00_cn")
        }
        other => panic!("unexpected {other}"),
    }
}
