use ordsae::estimator::{generate_and_aggregate, summarize_cells, FittedModel};
use ordsae::gibbs::{fit_ordinal_long, FitConfig};
use ordsae::rng::stream_rng;
use ordsae::simulation::{
    run_simulation, synth_population, EstimatorKind, PopulationSpec, PpsDesign, ScenarioConfig,
};
use ordsae::survey::{build_design, DesignOptions, TimeStructure};
use ordsae::vb::{draw_variational, fit_vb_ordinal_long};

fn non_informative(n_households: usize, fraction: f64) -> ScenarioConfig {
    ScenarioConfig {
        population: PopulationSpec {
            n_households,
            ..PopulationSpec::default()
        },
        design: PpsDesign {
            expected_fraction: fraction,
            coef_weight: 0.0,
            coef_response: 0.0,
        },
        fit: FitConfig {
            n_draws: 500,
            burn_in: 200,
            ..FitConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

#[test]
fn correctly_specified_model_is_nearly_unbiased_without_informative_sampling() {
    let cfg = ScenarioConfig {
        estimators: vec![EstimatorKind::VbLon],
        ..non_informative(20_000, 0.05)
    };
    let out = run_simulation(&cfg, 10, 5).unwrap();
    let m = &out.metrics[0];
    assert_eq!(m.n_failed, 0);
    assert!(m.abs_bias < 0.02, "mean absolute cell bias {}", m.abs_bias);
}

#[test]
fn direct_coverage_is_nominal_with_large_cells() {
    // About 120 respondents per area and week.
    let cfg = ScenarioConfig {
        estimators: vec![EstimatorKind::Direct],
        ..non_informative(20_000, 0.3)
    };
    let out = run_simulation(&cfg, 20, 9).unwrap();
    let c = out.metrics[0].coverage;
    assert!((0.90..=0.99).contains(&c), "direct coverage {c}");
}

#[test]
fn gibbs_and_vb_agree_on_a_synthetic_panel() {
    let spec = PopulationSpec {
        n_households: 1000,
        grid_rows: 4,
        grid_cols: 4,
        n_basis: Some(5),
        ..PopulationSpec::default()
    };
    let pop = synth_population(&spec, &mut stream_rng(42, 0)).unwrap();
    let opts = DesignOptions::new(
        4,
        TimeStructure::Longitudinal {
            n_times: spec.n_times,
        },
    );
    let design = build_design(&pop.records, &pop.basis, &opts).unwrap();
    let cfg = FitConfig {
        n_draws: 1000,
        burn_in: 300,
        seed: 3,
        ..FitConfig::default()
    };
    let gibbs = fit_ordinal_long(&design, &cfg).unwrap();
    let (state, report) = fit_vb_ordinal_long(&design, &cfg).unwrap();
    assert!(report.converged);
    for (j, vb) in state.mu_beta().iter().enumerate() {
        let g = gibbs.beta.column(j).mean();
        assert!((g - vb).abs() < 0.1, "beta_{}: gibbs {g} vb {vb}", j + 1);
        assert!(
            (g - spec.beta[j]).abs() < 0.3,
            "beta_{} far from truth: {g}",
            j + 1
        );
    }
    let vb_draws = draw_variational(&state, cfg.n_draws, &mut stream_rng(3, 0)).unwrap();
    let cells = |model| {
        let draws = generate_and_aggregate(&FittedModel::Ordinal(model), &pop.frame, &pop.basis, 11).unwrap();
        summarize_cells(&draws, 0.05).unwrap()
    };
    let a = cells(gibbs);
    let b = cells(vb_draws);
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().map(|e| e.point).sum::<f64>() / n,
        b.iter().map(|e| e.point).sum::<f64>() / n,
    );
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.key, y.key);
        sab += (x.point - ma) * (y.point - mb);
        saa += (x.point - ma).powi(2);
        sbb += (y.point - mb).powi(2);
    }
    let r = sab / (saa * sbb).sqrt();
    assert!(r >= 0.95, "cell estimate correlation {r}");
}
