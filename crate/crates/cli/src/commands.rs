use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use ordsae::estimator::{
    direct_estimates, generate_and_aggregate, summarize_cells, weighted_cell_sizes, write_cell_estimates,
    CellEstimate, DirectVariance, FittedModel, PopulationFrame, DEFAULT_ALPHA,
};
use ordsae::gibbs::{fit_nominal, fit_ordinal_cs, fit_ordinal_long, FitConfig};
use ordsae::persist::{write_draws_csv, write_trajectory_csv};
use ordsae::rng::{child_seed, stream_rng};
use ordsae::simulation::{
    run_simulation, write_cell_ratio_csv, write_metrics_csv, write_per_week_csv, EstimatorKind,
    ScenarioConfig,
};
use ordsae::spatial::{moran_basis, read_edge_list, write_basis_csv, write_eigenvalues_csv};
use ordsae::survey::{
    build_design, build_nominal_designs, ingest_csv, DesignOptions, NominalCovariates, TimeStructure,
};
use ordsae::vb::{
    draw_variational, fit_vb_nominal, fit_vb_ordinal_cs, fit_vb_ordinal_long, nominal_draw_seed,
};
use ordsae::{Basis, Estimate, Record};

use crate::config::{
    config_hash, merge, output_dir, require_file, BasisArgs, DirectArgs, FamilyArg, FitArgs, MethodArg,
    SimulateArgs, TimeArg, VarianceArg,
};
use crate::output::{metadata_line, write_all, OutputFile};

/// One week (cross-sectional) or the whole panel (longitudinal).
struct FitGroup {
    tag: String,
    records: Vec<Record>,
    frame: PopulationFrame<f64>,
    seed: u64,
}

struct FitOutcome {
    model: FittedModel<f64>,
    files: Vec<OutputFile>,
    sweeps: Vec<(usize, bool)>,
}

fn fit_group(
    group: &FitGroup,
    basis: &Basis,
    options: &DesignOptions,
    family: FamilyArg,
    method: MethodArg,
    extra: NominalCovariates,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    let cfg = FitConfig {
        seed: group.seed,
        ..cfg.clone()
    };
    let long = matches!(options.time, TimeStructure::Longitudinal { .. });
    let tag = &group.tag;
    let mut files = Vec::new();
    let mut sweeps = Vec::new();
    let model = match family {
        FamilyArg::Ordinal => {
            let design = build_design(&group.records, basis, options)?;
            let draws = match method {
                MethodArg::Gibbs if long => fit_ordinal_long(&design, &cfg)?,
                MethodArg::Gibbs => fit_ordinal_cs(&design, &cfg)?,
                MethodArg::Vb => {
                    let (state, report) = if long {
                        fit_vb_ordinal_long(&design, &cfg)?
                    } else {
                        fit_vb_ordinal_cs(&design, &cfg)?
                    };
                    sweeps.push((report.iterations, report.converged));
                    files.push(OutputFile::render(format!("trajectory{tag}.csv"), |w| {
                        write_trajectory_csv(w, &report)
                    })?);
                    draw_variational(&state, cfg.n_draws, &mut stream_rng(cfg.seed, 0))?
                }
            };
            files.push(OutputFile::render(format!("draws{tag}.csv"), |w| {
                write_draws_csv(w, &draws)
            })?);
            FittedModel::Ordinal(draws)
        }
        FamilyArg::Nominal => {
            let designs = build_nominal_designs(&group.records, basis, options, extra)?;
            let levels = match method {
                MethodArg::Gibbs => fit_nominal(&designs, &cfg, long)?,
                MethodArg::Vb => {
                    let fits = fit_vb_nominal(&designs, &cfg, long)?;
                    let mut levels = Vec::with_capacity(fits.len());
                    for (i, (state, report)) in fits.iter().enumerate() {
                        sweeps.push((report.iterations, report.converged));
                        files.push(OutputFile::render(
                            format!("trajectory{tag}_level{}.csv", i + 1),
                            |w| write_trajectory_csv(w, report),
                        )?);
                        let mut rng = stream_rng(nominal_draw_seed(cfg.seed, i + 1), 0);
                        levels.push(draw_variational(state, cfg.n_draws, &mut rng)?);
                    }
                    levels
                }
            };
            for (i, d) in levels.iter().enumerate() {
                files.push(OutputFile::render(
                    format!("draws{tag}_level{}.csv", i + 1),
                    |w| write_draws_csv(w, d),
                )?);
            }
            FittedModel::Nominal {
                levels,
                covariates: extra,
            }
        }
    };
    Ok(FitOutcome { model, files, sweeps })
}

fn read_frame(path: &Path, n_categories: usize) -> Result<PopulationFrame<f64>> {
    let file = File::open(path).with_context(|| format!("opening frame {}", path.display()))?;
    PopulationFrame::read_csv(file, n_categories).with_context(|| format!("reading frame {}", path.display()))
}

pub fn fit(args: &FitArgs) -> Result<String> {
    let started = Instant::now();
    let (cfg, table) = merge(args, args.config.as_deref())?;
    let data = require_file(cfg.data.as_deref(), "data file")?;
    let adjacency = require_file(cfg.adjacency.as_deref(), "adjacency file")?;
    let frame_path = cfg
        .frame
        .as_deref()
        .map(|p| require_file(Some(p), "frame file"))
        .transpose()?;
    let kk = cfg.categories.context("`categories` must be set")?;
    let family = cfg.family.unwrap_or(FamilyArg::Ordinal);
    let time = cfg.time.unwrap_or(TimeArg::Longitudinal);
    let method = cfg.method.unwrap_or(MethodArg::Vb);
    match family {
        FamilyArg::Ordinal if kk < 3 => bail!("ordinal models need at least 3 categories, got {kk}"),
        FamilyArg::Nominal if kk < 2 => bail!("nominal models need at least 2 categories, got {kk}"),
        _ => {}
    }
    let fit_cfg = cfg.fit_config();
    fit_cfg.validate()?;
    let alpha = cfg.alpha.unwrap_or(DEFAULT_ALPHA);

    let records: Vec<Record> =
        ingest_csv(&data, kk).with_context(|| format!("reading data {}", data.display()))?;
    let graph = read_edge_list(&adjacency, cfg.n_areas)?;
    let basis: Basis = moran_basis(&graph, cfg.n_basis)?;
    let frame = match &frame_path {
        Some(p) => read_frame(p, kk)?,
        None => PopulationFrame::from_records(&records, kk)?,
    };
    let n_times = records.iter().map(|r| r.t).max().unwrap_or(1);
    let long = time == TimeArg::Longitudinal;
    let time_structure = if long {
        TimeStructure::Longitudinal { n_times }
    } else {
        TimeStructure::CrossSectional
    };
    let options = DesignOptions::new(kk, time_structure)
        .weighted(cfg.weighted.unwrap_or(true))
        .grouping(cfg.grouping());
    let extra = NominalCovariates {
        intercept: cfg.intercept.unwrap_or(true),
        previous_response: cfg.previous_response.unwrap_or(long),
    };

    let groups: Vec<FitGroup> = if long {
        vec![FitGroup {
            tag: String::new(),
            records: records.clone(),
            frame: frame.clone(),
            seed: fit_cfg.seed,
        }]
    } else {
        (1..=n_times)
            .filter(|&t| records.iter().any(|r| r.t == t))
            .map(|t| FitGroup {
                tag: format!("_t{t}"),
                records: records.iter().filter(|r| r.t == t).cloned().collect(),
                frame: frame.restrict_to_time(t),
                seed: child_seed(fit_cfg.seed, t as u64),
            })
            .collect()
    };

    let mut files = Vec::new();
    let mut estimates: Vec<Estimate> = Vec::new();
    let mut sweeps = Vec::new();
    for g in &groups {
        let outcome = fit_group(g, &basis, &options, family, method, extra, &fit_cfg)?;
        if !g.frame.is_empty() {
            let draws = generate_and_aggregate(&outcome.model, &g.frame, &basis, child_seed(g.seed, 7))?;
            estimates.extend(summarize_cells(&draws, alpha)?);
        }
        files.extend(outcome.files);
        sweeps.extend(outcome.sweeps);
    }
    let method_tag = format!(
        "{}{}-{}",
        match method {
            MethodArg::Gibbs => "gibbs",
            MethodArg::Vb => "vb",
        },
        if family == FamilyArg::Nominal {
            "-nominal"
        } else {
            ""
        },
        if long { "lon" } else { "cs" }
    );
    files.push(OutputFile::render("estimates.csv", |w| {
        write_cell_estimates(w, &method_tag, &estimates)
    })?);
    let dir = output_dir(cfg.out.as_deref());
    write_all(&dir, &metadata_line(fit_cfg.seed, &config_hash(&table)), &files)?;

    let work = if sweeps.is_empty() {
        format!("{} draws after {} burn-in", fit_cfg.n_draws, fit_cfg.burn_in)
    } else {
        let total: usize = sweeps.iter().map(|s| s.0).sum();
        let unconverged = sweeps.iter().filter(|s| !s.1).count();
        format!(
            "{total} CAVI sweeps ({unconverged} unconverged), {} variational draws",
            fit_cfg.n_draws
        )
    };
    Ok(format!(
        "fit {method_tag}: {} fit(s), {work}, {} cell estimates, {:.2} s; wrote {} files to {}",
        groups.len(),
        estimates.len(),
        started.elapsed().as_secs_f64(),
        files.len(),
        dir.display()
    ))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let started = Instant::now();
    let path = require_file(args.scenario.as_deref(), "scenario file")?;
    let mut sc = ScenarioConfig::read(&path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    if let Some(adj) = sc.population.adjacency.as_mut() {
        resolve(&base, adj);
    }
    if let Some(src) = sc.microdata.as_mut() {
        resolve(&base, &mut src.path);
        resolve(&base, &mut src.adjacency);
    }
    if let Some(list) = &args.estimators {
        sc.estimators = list
            .iter()
            .map(|s| s.parse::<EstimatorKind>())
            .collect::<ordsae::Result<_>>()?;
    }
    if let Some(r) = args.reps {
        sc.n_reps = r;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if sc.n_reps == 0 {
        bail!("reps must be at least 1");
    }
    sc.validate()?;
    let out = run_simulation(&sc, sc.n_reps, sc.seed)?;
    let table = toml::Table::try_from(&sc).context("serialising scenario")?;

    let failures = out.failures.clone();
    let files = vec![
        OutputFile::render("metrics.csv", |w| {
            write_metrics_csv(w, &out.metrics, args.timings)
        })?,
        OutputFile::render("per_week.csv", |w| write_per_week_csv(w, &out.per_week))?,
        OutputFile::render("cell_ratios.csv", |w| write_cell_ratio_csv(w, &out.cell_ratios))?,
        OutputFile::render("failures.csv", |w| {
            let mut text = String::from("rep,method,message\n");
            for (rep, kind, msg) in &failures {
                text.push_str(&format!("{},{kind},\"{}\"\n", rep + 1, msg.replace('"', "'")));
            }
            w.extend_from_slice(text.as_bytes());
            Ok(())
        })?,
    ];
    let dir = output_dir(args.out.as_deref());
    write_all(&dir, &metadata_line(sc.seed, &config_hash(&table)), &files)?;
    Ok(format!(
        "simulate: {} reps, {} estimators, {} failed fits, {:.1} s; wrote {} files to {}",
        sc.n_reps,
        out.metrics.len(),
        failures.len(),
        started.elapsed().as_secs_f64(),
        files.len(),
        dir.display()
    ))
}

pub fn direct(args: &DirectArgs) -> Result<String> {
    let (cfg, table) = merge(args, args.config.as_deref())?;
    let data = require_file(cfg.data.as_deref(), "data file")?;
    let kk = cfg.categories.context("`categories` must be set")?;
    if kk < 2 {
        bail!("need at least 2 categories, got {kk}");
    }
    let records: Vec<Record> =
        ingest_csv(&data, kk).with_context(|| format!("reading data {}", data.display()))?;
    let sizes = match cfg.frame.as_deref() {
        Some(p) => read_frame(&require_file(Some(p), "frame file")?, kk)?.cell_sizes(),
        None => weighted_cell_sizes(&records),
    };
    let variance = match cfg.variance {
        Some(VarianceArg::Poisson) => DirectVariance::Poisson,
        _ => DirectVariance::WithReplacement,
    };
    let estimates: Vec<CellEstimate<f64>> =
        direct_estimates(&records, &sizes, kk, cfg.alpha.unwrap_or(DEFAULT_ALPHA), variance)?;
    let degenerate = estimates.iter().filter(|e| e.degenerate).count() / kk;
    let files = vec![OutputFile::render("direct.csv", |w| {
        write_cell_estimates(w, "direct", &estimates)
    })?];
    let dir = output_dir(cfg.out.as_deref());
    write_all(&dir, &metadata_line(0, &config_hash(&table)), &files)?;
    Ok(format!(
        "direct: {} cells with respondents, {degenerate} with degenerate variance; wrote {}",
        estimates.len() / kk,
        dir.join("direct.csv").display()
    ))
}

pub fn basis(args: &BasisArgs) -> Result<String> {
    let adjacency = require_file(args.adjacency.as_deref(), "adjacency file")?;
    let graph = read_edge_list(&adjacency, args.n_areas)?;
    let basis: Basis = moran_basis(&graph, args.n_basis)?;
    let table = toml::Table::try_from(args).context("serialising settings")?;
    let files = vec![
        OutputFile::render("basis.csv", |w| write_basis_csv(w, &basis))?,
        OutputFile::render("eigenvalues.csv", |w| write_eigenvalues_csv(w, &basis))?,
    ];
    let dir = output_dir(args.out.as_deref());
    write_all(&dir, &metadata_line(0, &config_hash(&table)), &files)?;
    Ok(format!(
        "basis: {} areas, {} columns; wrote {}",
        basis.n_areas(),
        basis.n_columns(),
        dir.display()
    ))
}
