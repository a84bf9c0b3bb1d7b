use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use distmc::experiments::{
    run_band_coverage, run_denoising, run_quantity_eval, run_scaling, verify_appendix_d, verify_barycenter_rate,
    CoverageSpec, EtaPolicy, ExperimentSpec, Quantity, Sweep, SweepVariable,
};
use distmc::rng::derive_seed;
use distmc::{
    asymptotic_band, bootstrap_band, check_brute_force, tune_eta, BaseFamily, BootstrapConfig, DgpSpec, DistNn,
    DistributionalMatrix, Error, Estimate, ImputationResult, NeighborPolicy, Panel, SearchStrategy, SigmaFunction,
    Summaries, TuneConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::Failure;
use crate::{
    BandKind, BandsArgs, CellArgs, CliResult, ImputeArgs, NeighborArgs, OutputArgs, SimulateArgs, StudyKind, TuneArgs,
    VerifyArgs, VerifyCheck,
};

const DEFAULT_BUDGET: usize = 50;

#[derive(Serialize)]
struct Envelope<'a, C, R> {
    command: &'static str,
    config: &'a C,
    seed: u64,
    result: R,
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum Threshold {
    Fixed {
        #[serde(with = "distmc::serde_float")]
        eta: f64,
    },
    Tuned {
        budget: usize,
        search: SearchStrategy,
        #[serde(skip_serializing_if = "Option::is_none")]
        eta_range: Option<(f64, f64)>,
    },
}

#[derive(Serialize)]
struct BandSettings {
    method: &'static str,
    alpha: f64,
    levels: Vec<f64>,
    simultaneous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapConfig>,
}

/// Resolved settings of a data command.
#[derive(Serialize)]
struct RunConfig {
    input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<(String, String)>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    all_missing: bool,
    threshold: Threshold,
    policy: NeighborPolicy,
    fallback_nearest: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    var_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band: Option<BandSettings>,
    seed: u64,
}

#[derive(Serialize)]
struct NeighborOut {
    row: String,
    distance: f64,
    overlap: usize,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EstimateOut {
    Samples { values: Vec<f64> },
    QuantileGrid { levels: Vec<f64>, values: Vec<f64> },
}

#[derive(Serialize)]
struct CellOut {
    row: String,
    col: String,
    observed: bool,
    eta: f64,
    tuned: bool,
    fallback_used: bool,
    neighbors: Vec<NeighborOut>,
    summaries: Summaries<f64>,
    estimate: EstimateOut,
}

#[derive(Serialize)]
struct BatchOut {
    cells: Vec<CellOut>,
    failures: Vec<Failure>,
}

fn emit<C: Serialize, R: Serialize>(out: &OutputArgs, envelope: &Envelope<'_, C, R>) -> CliResult {
    let write = |w: &mut dyn Write| -> io::Result<()> {
        serde_json::to_writer_pretty(&mut *w, envelope)?;
        writeln!(w)?;
        w.flush()
    };
    match &out.output {
        Some(path) => write(&mut BufWriter::new(File::create(path)?))?,
        None => write(&mut io::stdout().lock())?,
    }
    Ok(())
}

fn load_panel(path: &Path) -> CliResult<Panel<f64>> {
    let file = BufReader::new(File::open(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?);
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if is_json {
        Panel::read_json(file)?
    } else {
        Panel::read_csv(file)?
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn resolve_cell(panel: &Panel<f64>, cell: &CellArgs) -> CliResult<(usize, usize)> {
    let (Some(row), Some(col)) = (&cell.row, &cell.col) else {
        return Err(Failure::new("bad_target", "both --row and --col are required"));
    };
    let i = panel
        .row_index(row)
        .ok_or_else(|| Failure::new("bad_target", format!("unknown row key {row:?}")).at(row, col))?;
    let j = panel
        .col_index(col)
        .ok_or_else(|| Failure::new("bad_target", format!("unknown column key {col:?}")).at(row, col))?;
    Ok((i, j))
}

fn policy_of(args: &NeighborArgs) -> NeighborPolicy {
    NeighborPolicy {
        min_overlap: args.min_overlap,
        max_neighbors: args.max_neighbors,
        min_neighbors: args.fallback_nearest.then_some(1),
    }
}

fn threshold_of(args: &NeighborArgs) -> Threshold {
    match args.eta {
        Some(eta) => Threshold::Fixed { eta },
        None => Threshold::Tuned {
            budget: args.budget.unwrap_or(DEFAULT_BUDGET),
            search: args.search.map_or(SearchStrategy::LogGrid, Into::into),
            eta_range: None,
        },
    }
}

fn run_config(input: &Path, target: Option<(String, String)>, args: &NeighborArgs) -> RunConfig {
    RunConfig {
        input: input.display().to_string(),
        target,
        all_missing: false,
        threshold: threshold_of(args),
        policy: policy_of(args),
        fallback_nearest: args.fallback_nearest,
        var_alpha: None,
        band: None,
        seed: args.seed,
    }
}

/// The estimator for `(i, j)`, tuning the threshold when none was given.
/// When tuning finds nothing and the fallback is enabled, the threshold is
/// zero so the nearest row is used.
fn estimator_for(
    m: &DistributionalMatrix<f64>,
    i: usize,
    j: usize,
    cfg: &RunConfig,
    var_alpha: f64,
) -> distmc::Result<(DistNn<f64>, bool)> {
    let (eta, tuned) = match cfg.threshold {
        Threshold::Fixed { eta } => (eta, false),
        Threshold::Tuned { budget, search, .. } => {
            let tune = TuneConfig {
                budget,
                search,
                eta_range: None,
                seed: derive_seed(cfg.seed, &[i as u64, j as u64]),
                policy: cfg.policy,
            };
            match tune_eta(m, i, j, &tune) {
                Ok(report) => (report.best_eta, true),
                Err(Error::AllTrialsFailed | Error::NoObservedCells { .. }) if cfg.fallback_nearest => (0.0, false),
                Err(e) => return Err(e),
            }
        }
    };
    Ok((
        DistNn::new(eta)?.with_policy(cfg.policy).with_var_alpha(var_alpha)?,
        tuned,
    ))
}

fn cell_output(panel: &Panel<f64>, i: usize, j: usize, tuned: bool, r: ImputationResult<f64>) -> CellOut {
    let eta = r.neighbors.eta;
    CellOut {
        row: panel.row_keys()[i].clone(),
        col: panel.col_keys()[j].clone(),
        observed: panel.matrix().is_observed(i, j),
        eta,
        tuned,
        fallback_used: r.neighbors.members.iter().any(|n| n.distance > eta),
        neighbors: r
            .neighbors
            .members
            .iter()
            .map(|n| NeighborOut {
                row: panel.row_keys()[n.row].clone(),
                distance: n.distance,
                overlap: n.overlap,
            })
            .collect(),
        summaries: r.summaries,
        estimate: match r.estimate {
            Estimate::OrderStatistics(d) => EstimateOut::Samples {
                values: d.into_samples(),
            },
            Estimate::Grid(g) => EstimateOut::QuantileGrid {
                levels: g.levels().to_vec(),
                values: g.values().to_vec(),
            },
        },
    }
}

fn impute_cell(panel: &Panel<f64>, i: usize, j: usize, cfg: &RunConfig, var_alpha: f64) -> CliResult<CellOut> {
    let m = panel.matrix();
    let at = |e: Error| Failure::from(e).at(&panel.row_keys()[i], &panel.col_keys()[j]);
    let (est, tuned) = estimator_for(m, i, j, cfg, var_alpha).map_err(at)?;
    let result = est.impute(m, i, j).map_err(at)?;
    Ok(cell_output(panel, i, j, tuned, result))
}

pub fn impute(args: ImputeArgs) -> CliResult {
    let panel = load_panel(&args.panel.input)?;
    let mut cfg = run_config(&args.panel.input, None, &args.neighbors);
    cfg.var_alpha = Some(args.var_alpha);
    if args.all_missing {
        cfg.all_missing = true;
        let m = panel.matrix();
        let mut batch = BatchOut {
            cells: Vec::new(),
            failures: Vec::new(),
        };
        for i in 0..m.n_rows() {
            for j in (0..m.n_cols()).filter(|&j| !m.is_observed(i, j)) {
                match impute_cell(&panel, i, j, &cfg, args.var_alpha) {
                    Ok(c) => batch.cells.push(c),
                    Err(f) if f.error == "no_neighbors" || f.error == "cannot_tune" => batch.failures.push(f),
                    Err(f) => return Err(f),
                }
            }
        }
        let failed = batch.failures.len();
        let no_neighbors = batch.failures.iter().any(|f| f.error == "no_neighbors");
        let total = failed + batch.cells.len();
        emit(
            &args.output,
            &Envelope {
                command: "impute",
                config: &cfg,
                seed: cfg.seed,
                result: batch,
            },
        )?;
        return match failed {
            0 => Ok(()),
            _ => Err(Failure::new(
                if no_neighbors { "no_neighbors" } else { "cannot_tune" },
                format!("{failed} of {total} missing cells could not be imputed"),
            )),
        };
    }
    let (i, j) = resolve_cell(&panel, &args.cell)?;
    cfg.target = Some((panel.row_keys()[i].clone(), panel.col_keys()[j].clone()));
    let cell = impute_cell(&panel, i, j, &cfg, args.var_alpha)?;
    emit(
        &args.output,
        &Envelope {
            command: "impute",
            config: &cfg,
            seed: cfg.seed,
            result: cell,
        },
    )
}

pub fn tune(args: TuneArgs) -> CliResult {
    let panel = load_panel(&args.panel.input)?;
    let (i, j) = resolve_cell(&panel, &args.cell)?;
    let eta_range = args.eta_min.zip(args.eta_max);
    let policy = NeighborPolicy {
        min_overlap: args.min_overlap,
        max_neighbors: args.max_neighbors,
        min_neighbors: None,
    };
    let cfg = RunConfig {
        input: args.panel.input.display().to_string(),
        target: Some((panel.row_keys()[i].clone(), panel.col_keys()[j].clone())),
        all_missing: false,
        threshold: Threshold::Tuned {
            budget: args.budget,
            search: args.search.into(),
            eta_range,
        },
        policy,
        fallback_nearest: false,
        var_alpha: None,
        band: None,
        seed: args.seed,
    };
    let tune = TuneConfig {
        budget: args.budget,
        search: args.search.into(),
        eta_range,
        seed: args.seed,
        policy,
    };
    let report = tune_eta(panel.matrix(), i, j, &tune).map_err(|e| {
        let (r, c) = cfg.target.clone().expect("target resolved");
        Failure::from(e).at(&r, &c)
    })?;
    emit(
        &args.output,
        &Envelope {
            command: "tune",
            config: &cfg,
            seed: args.seed,
            result: report,
        },
    )
}

fn parse_levels(text: &str) -> CliResult<Vec<f64>> {
    if let Ok(k) = text.trim().parse::<usize>() {
        if k == 0 {
            return Err(Failure::new("invalid", "at least one level is required"));
        }
        return Ok((1..=k).map(|l| l as f64 / (k + 1) as f64).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::new("invalid", format!("cannot parse level {s:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct BandsOut {
    cell: CellOut,
    band: distmc::ConfidenceBand,
}

pub fn bands(args: BandsArgs) -> CliResult {
    let panel = load_panel(&args.panel.input)?;
    let (i, j) = resolve_cell(&panel, &args.cell)?;
    let levels = parse_levels(&args.levels)?;
    let boot = BootstrapConfig {
        reps_samples: args.reps_samples,
        reps_neighbors: args.reps_neighbors,
        seed: args.neighbors.seed,
    };
    let mut cfg = run_config(
        &args.panel.input,
        Some((panel.row_keys()[i].clone(), panel.col_keys()[j].clone())),
        &args.neighbors,
    );
    cfg.band = Some(BandSettings {
        method: match args.method {
            BandKind::Kde => "kde",
            BandKind::Bootstrap => "bootstrap",
        },
        alpha: args.alpha,
        levels: levels.clone(),
        simultaneous: args.simultaneous,
        bootstrap: matches!(args.method, BandKind::Bootstrap).then_some(boot),
    });
    let m = panel.matrix();
    let at = |e: Error| Failure::from(e).at(&panel.row_keys()[i], &panel.col_keys()[j]);
    let (est, tuned) = estimator_for(m, i, j, &cfg, 0.05).map_err(at)?;
    let result = est.impute(m, i, j).map_err(at)?;
    let band = match args.method {
        BandKind::Kde => {
            let sigma = SigmaFunction::kde(m, &result.neighbors);
            let total: usize = result
                .neighbors
                .members
                .iter()
                .map(|n| m.get(n.row, j).map_or(0, |d| d.n()))
                .sum();
            let n_j = (total as f64 / result.neighbors.len() as f64).round().max(1.0) as usize;
            asymptotic_band(&result, &sigma, n_j, args.alpha, &levels, args.simultaneous)
        }
        BandKind::Bootstrap => bootstrap_band(m, i, j, &est, args.alpha, &levels, args.simultaneous, &boot),
    }
    .map_err(at)?;
    let seed = cfg.seed;
    emit(
        &args.output,
        &Envelope {
            command: "bands",
            config: &cfg,
            seed,
            result: BandsOut {
                cell: cell_output(&panel, i, j, tuned, result),
                band,
            },
        },
    )
}

/// Heteroscedastic uniform matrices with locations on (-5, 5) and scales
/// on (1, 5), 30 columns and 50 trials per sweep value.
pub fn default_experiment(study: StudyKind) -> ExperimentSpec {
    let (sweep, n) = match study {
        StudyKind::Quantities => (vec![500], 500),
        _ => (vec![50, 100, 200, 500, 1000], 100),
    };
    ExperimentSpec {
        dgp: DgpSpec::heteroscedastic(BaseFamily::Uniform, n, 0),
        n_rows: 100,
        n_cols: 30,
        observe_p: 1.0,
        sweep: Sweep {
            variable: SweepVariable::NSamples,
            values: sweep,
        },
        trials: 50,
        eta: EtaPolicy::Tuned {
            budget: DEFAULT_BUDGET,
            search: SearchStrategy::LogGrid,
        },
        policy: NeighborPolicy {
            min_neighbors: Some(2),
            ..NeighborPolicy::default()
        },
        baseline_resamples: 100,
        target: (0, 0),
        seed: 0,
    }
}

pub fn default_coverage() -> CoverageSpec {
    CoverageSpec {
        base: BaseFamily::Uniform,
        n_rows: 400,
        n_cols: 3,
        n_target: 2000,
        n_other: 20_000,
        eta: f64::INFINITY,
        max_neighbors: Some(1),
        alpha: 0.05,
        levels: vec![0.5],
        simultaneous: false,
        trials: 500,
        seed: 0,
    }
}

fn study_name(study: StudyKind) -> &'static str {
    match study {
        StudyKind::Scaling => "scaling",
        StudyKind::Denoising => "denoising",
        StudyKind::Quantities => "quantities",
        StudyKind::Coverage => "coverage",
    }
}

#[derive(Serialize)]
struct StudyOut<R> {
    study: &'static str,
    #[serde(flatten)]
    result: R,
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let name = study_name(args.study);
    if let StudyKind::Coverage = args.study {
        let mut spec: CoverageSpec = match &args.config {
            Some(p) => read_json(p)?,
            None => default_coverage(),
        };
        spec.trials = args.trials.unwrap_or(spec.trials);
        spec.seed = args.seed.unwrap_or(spec.seed);
        let result = run_band_coverage(&spec)?;
        return emit(
            &args.output,
            &Envelope {
                command: "simulate",
                config: &spec,
                seed: spec.seed,
                result: StudyOut { study: name, result },
            },
        );
    }
    let mut spec: ExperimentSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => default_experiment(args.study),
    };
    spec.trials = args.trials.unwrap_or(spec.trials);
    spec.seed = args.seed.unwrap_or(spec.seed);
    let envelope = |result| Envelope {
        command: "simulate",
        config: &spec,
        seed: spec.seed,
        result,
    };
    match args.study {
        StudyKind::Scaling => {
            let result = run_scaling(&spec)?;
            if let Some(path) = &args.csv {
                result.write_csv(BufWriter::new(File::create(path)?))?;
            }
            emit(
                &args.output,
                &envelope(serde_json::to_value(StudyOut { study: name, result })?),
            )
        }
        StudyKind::Denoising => {
            let result = run_denoising(&spec)?;
            emit(
                &args.output,
                &envelope(serde_json::to_value(StudyOut { study: name, result })?),
            )
        }
        StudyKind::Quantities => {
            let result = run_quantity_eval(&spec, &Quantity::ALL, 0.05)?;
            emit(
                &args.output,
                &envelope(serde_json::to_value(StudyOut { study: name, result })?),
            )
        }
        StudyKind::Coverage => unreachable!("handled above"),
    }
}

#[derive(Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
enum VerifyConfig {
    AppendixD {
        m: Vec<usize>,
        n: Vec<usize>,
        trials: usize,
    },
    Rate {
        k: Vec<usize>,
        n: Vec<usize>,
        trials: usize,
    },
    BruteForce {
        instances: usize,
    },
}

pub fn verify(args: VerifyArgs) -> CliResult {
    let seed = args.seed;
    let (config, result) = match args.check {
        VerifyCheck::AppendixD { m, n, trials } => {
            let rows = verify_appendix_d(&m, &n, trials, seed)?;
            let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
            (
                VerifyConfig::AppendixD { m, n, trials },
                serde_json::json!({ "rows": rows, "max_abs_z": max_abs_z }),
            )
        }
        VerifyCheck::Rate { k, n, trials } => {
            let surface = verify_barycenter_rate(&k, &n, trials, seed)?;
            let n_max = n.iter().copied().max().unwrap_or(0);
            let k_max = k.iter().copied().max().unwrap_or(0);
            let n_fit = surface.n_fit(k_max).ok();
            (
                VerifyConfig::Rate { k, n, trials },
                serde_json::json!({
                    "surface": surface,
                    "k_ratios_at_largest_n": surface.k_ratios(n_max),
                    "n_fit_at_largest_k": n_fit,
                }),
            )
        }
        VerifyCheck::BruteForce { instances } => {
            let check = check_brute_force(instances, seed)?;
            (VerifyConfig::BruteForce { instances }, serde_json::to_value(check)?)
        }
    };
    emit(
        &args.output,
        &Envelope {
            command: "verify",
            config: &config,
            seed,
            result,
        },
    )
}
