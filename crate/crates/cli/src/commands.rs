//! Command implementations.
//!
//! Output schemas (CSV columns; JSON mirrors the same fields):
//!
//! * `stream`: `series,tau,averaged,raw`; with `--infer`,
//!   `series,tau,lo,estimate,hi,statistic,critical_value,alpha,reject`.
//! * `bands`: `series,tau,lo,estimate,hi`; JSON adds `n`, `alpha`,
//!   `critical_value` and `sparsity`.
//! * `reproduce` (tables): `preset,dgp,sparsity,n,beta,alpha,rejections,rate,mc_se,published`,
//!   with `published` empty where no reference value exists.
//! * `reproduce qq` and `qq`: `empirical,reference`.
//! * `tail`: `dgp,n,tau,x,averaged,raw,mc_se`.

use std::path::Path;

use quantstream::density::Bandwidth;
use quantstream::dist::Law;
use quantstream::experiments::{self, published, Dgp, ExperimentPlan, QqPoint, TailCurve};
use quantstream::inference::{
    independent_bridges_spec, run_test, simulate_critical_value, uniform_bands, Band, InferenceReport,
};
use quantstream::reservoir::Reservoir;
use quantstream::rng::derive_seed;
use quantstream::{
    EstimateMode, QuantileGrid, QuantileState, ScheduleConfig, Snapshot, SparsityEstimate, SparsityMode,
};
use serde::Serialize;

use crate::args::{BandsArgs, Format, OutputArgs, QqArgs, ReproduceArgs, ScheduleArgs, StreamArgs, TailArgs};
use crate::error::{CliError, CliResult};
use crate::io::{emit, fmt6, parse_number, read_rows, read_text, to_json, write_text, Csv};

/// Salt separating the reference draws from the reservoir draws.
const REFERENCE_SALT: u64 = 0xB4D5;

enum Sparsity {
    Known(Law),
    Kde,
}

fn parse_sparsity(text: &str) -> CliResult<Sparsity> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("kde") {
        return Ok(Sparsity::Kde);
    }
    let law = t
        .strip_prefix("known:")
        .ok_or_else(|| CliError::usage("sparsity", format!("expected `known:<dist>` or `kde`, got `{t}`")))?;
    Ok(Sparsity::Known(
        Law::parse(law).map_err(|e| CliError::usage("sparsity", e.to_string()))?,
    ))
}

fn parse_mode(text: &str) -> CliResult<SparsityMode> {
    match text.trim().to_ascii_lowercase().as_str() {
        "known" => Ok(SparsityMode::Known),
        "kde" => Ok(SparsityMode::Kde),
        other => Err(CliError::usage(
            "sparsity",
            format!("expected `known` or `kde`, got `{other}`"),
        )),
    }
}

fn mode_name(mode: SparsityMode) -> &'static str {
    match mode {
        SparsityMode::Known => "known",
        SparsityMode::Kde => "kde",
    }
}

fn parse_list(field: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| parse_number(s).ok_or_else(|| CliError::usage(field, format!("`{}` is not a number", s.trim()))))
        .collect()
}

fn parse_sizes(field: &str, text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::usage(field, format!("`{}` is not a positive integer", s.trim())))
        })
        .collect()
}

fn parse_grid(text: &str) -> CliResult<QuantileGrid> {
    QuantileGrid::new(parse_list("grid", text)?).map_err(CliError::from)
}

fn schedule(args: &ScheduleArgs) -> CliResult<ScheduleConfig> {
    ScheduleConfig::new(args.c_gamma, args.beta, args.a).map_err(CliError::from)
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(
            "alpha",
            format!("must lie strictly between 0 and 1, got {alpha}"),
        ))
    }
}

fn check_reps(field: &str, reps: usize, min: usize) -> CliResult<()> {
    if reps >= min {
        Ok(())
    } else {
        Err(CliError::usage(field, format!("need at least {min}, got {reps}")))
    }
}

/// Estimator fed from a CSV file, with per-series reservoirs for kernel estimates.
struct Fed {
    state: QuantileState,
    reservoirs: Vec<Reservoir<f64>>,
}

fn feed(
    input: &str,
    resumed: Option<QuantileState>,
    grid: QuantileGrid,
    schedule: ScheduleConfig,
    init: f64,
    reservoir: Option<(usize, u64)>,
) -> CliResult<Fed> {
    let rows = read_rows(input, resumed.as_ref().map(QuantileState::series_count))?;
    if rows.is_empty() && resumed.as_ref().is_none_or(|s| s.step() == 0) {
        return Err(CliError::Input("no observations".into()));
    }
    let mut state = match resumed {
        Some(s) => s,
        None => {
            let p = rows[0].values.len();
            QuantileState::init(p, grid, schedule, vec![init; p])?
        }
    };
    let mut reservoirs: Vec<Reservoir<f64>> = match reservoir {
        Some((cap, seed)) => (0..state.series_count())
            .map(|i| Reservoir::new(cap, derive_seed(seed, i as u64)))
            .collect(),
        None => Vec::new(),
    };
    for row in &rows {
        state.update(&row.values).map_err(|e| CliError::Line {
            line: row.line,
            message: e.to_string(),
        })?;
        for (r, &v) in reservoirs.iter_mut().zip(&row.values) {
            r.push(v);
        }
    }
    Ok(Fed { state, reservoirs })
}

fn sparsity_estimate(source: &Sparsity, fed: &Fed) -> CliResult<SparsityEstimate> {
    let state = &fed.state;
    match source {
        Sparsity::Known(law) => Ok(SparsityEstimate::known(
            &vec![*law; state.series_count()],
            state.grid(),
        )?),
        Sparsity::Kde => {
            let samples: Vec<Vec<f64>> = fed.reservoirs.iter().map(|r| r.items().to_vec()).collect();
            Ok(SparsityEstimate::kde(
                &samples,
                &state.estimates(EstimateMode::Averaged),
                Bandwidth::Silverman,
            )?)
        }
    }
}

fn reservoir_for(source: &Sparsity, capacity: usize, seed: u64) -> CliResult<Option<(usize, u64)>> {
    match source {
        Sparsity::Kde if capacity < 2 => Err(CliError::usage("reservoir", "need at least 2 points")),
        Sparsity::Kde => Ok(Some((capacity, seed))),
        Sparsity::Known(_) => Ok(None),
    }
}

fn write(out: &OutputArgs, text: &str) -> CliResult<()> {
    emit(out.output.as_ref(), text)
}

#[derive(Serialize)]
struct EstimateRow {
    series: usize,
    tau: f64,
    averaged: f64,
    raw: f64,
}

#[derive(Serialize)]
struct StreamOutput {
    n: u64,
    schedule: ScheduleConfig,
    estimates: Vec<EstimateRow>,
}

pub fn stream(args: StreamArgs) -> CliResult<()> {
    let sparsity = parse_sparsity(&args.sparsity)?;
    let grid = parse_grid(&args.grid)?;
    let sched = schedule(&args.schedule)?;
    if !args.init.is_finite() {
        return Err(CliError::usage("init", "must be finite"));
    }
    if args.infer {
        check_alpha(args.alpha)?;
        check_reps("reps", args.reps, quantstream::inference::MIN_REPLICATIONS)?;
    }
    let resumed = match &args.resume {
        Some(path) => Some(QuantileState::from_snapshot(Snapshot::from_json(&read_text(path)?)?)?),
        None => None,
    };
    let null = match (&args.null, args.infer) {
        (Some(path), true) => Some(read_matrix(path)?),
        _ => None,
    };
    let reservoir = if args.infer {
        reservoir_for(&sparsity, args.reservoir, args.seed.seed)?
    } else {
        None
    };

    let fed = feed(&args.input, resumed, grid, sched, args.init, reservoir)?;
    if let Some(path) = &args.checkpoint {
        write_text(path, &fed.state.snapshot().to_json())?;
    }

    let text = match null {
        Some(null) => {
            let state = &fed.state;
            let est = sparsity_estimate(&sparsity, &fed)?;
            let spec = independent_bridges_spec(
                state.grid().clone(),
                state.series_count(),
                args.reps,
                derive_seed(args.seed.seed, REFERENCE_SALT),
            );
            let report = run_test(state, &null, &est, &spec, args.alpha)?;
            render_report(&report, args.output.format)
        }
        None => render_estimates(&fed.state, args.output.format),
    };
    write(&args.output, &text)
}

fn read_matrix(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let name = path.to_string_lossy();
    let rows = read_rows(&name, None)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{name}: no rows")));
    }
    Ok(rows.into_iter().map(|r| r.values).collect())
}

fn render_estimates(state: &QuantileState, format: Format) -> String {
    let rows: Vec<EstimateRow> = state
        .averaged()
        .iter()
        .zip(state.raw())
        .enumerate()
        .flat_map(|(i, (avg, raw))| {
            state
                .grid()
                .levels()
                .iter()
                .zip(avg.iter().zip(raw))
                .map(move |(&tau, (&a, &r))| EstimateRow {
                    series: i,
                    tau,
                    averaged: a,
                    raw: r,
                })
        })
        .collect();
    match format {
        Format::Json => to_json(&StreamOutput {
            n: state.step(),
            schedule: *state.schedule(),
            estimates: rows,
        }),
        Format::Csv => {
            let mut csv = Csv::new(&["series", "tau", "averaged", "raw"]);
            for r in rows {
                csv.row(&[r.series.to_string(), fmt6(r.tau), fmt6(r.averaged), fmt6(r.raw)]);
            }
            csv.finish()
        }
    }
}

fn band_fields(b: &Band) -> Vec<String> {
    vec![
        b.series.to_string(),
        fmt6(b.tau),
        fmt6(b.lo),
        fmt6(b.estimate),
        fmt6(b.hi),
    ]
}

fn render_report(report: &InferenceReport, format: Format) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Csv => {
            let mut csv = Csv::new(&[
                "series",
                "tau",
                "lo",
                "estimate",
                "hi",
                "statistic",
                "critical_value",
                "alpha",
                "reject",
            ]);
            for b in &report.bands {
                let mut fields = band_fields(b);
                fields.extend([
                    fmt6(report.statistic),
                    fmt6(report.critical_value),
                    fmt6(report.alpha),
                    report.reject.to_string(),
                ]);
                csv.row(&fields);
            }
            csv.finish()
        }
    }
}

#[derive(Serialize)]
struct BandsOutput {
    n: u64,
    alpha: f64,
    critical_value: f64,
    sparsity: SparsityMode,
    bands: Vec<Band>,
}

pub fn bands(args: BandsArgs) -> CliResult<()> {
    let sparsity = parse_sparsity(&args.sparsity)?;
    let grid = parse_grid(&args.grid)?;
    let sched = schedule(&args.schedule)?;
    check_alpha(args.alpha)?;
    check_reps("reps", args.reps, quantstream::inference::MIN_REPLICATIONS)?;
    if !args.init.is_finite() {
        return Err(CliError::usage("init", "must be finite"));
    }
    let reservoir = reservoir_for(&sparsity, args.reservoir, args.seed.seed)?;

    let fed = feed(&args.input, None, grid, sched, args.init, reservoir)?;
    let state = &fed.state;
    let est = sparsity_estimate(&sparsity, &fed)?;
    let spec = independent_bridges_spec(
        state.grid().clone(),
        state.series_count(),
        args.reps,
        derive_seed(args.seed.seed, REFERENCE_SALT),
    );
    let critical_value = simulate_critical_value(&spec, args.alpha)?;
    let out = BandsOutput {
        n: state.step(),
        alpha: args.alpha,
        critical_value,
        sparsity: est.mode,
        bands: uniform_bands(state, &est, critical_value)?,
    };
    let text = match args.output.format {
        Format::Json => to_json(&out),
        Format::Csv => {
            let mut csv = Csv::new(&["series", "tau", "lo", "estimate", "hi"]);
            for b in &out.bands {
                csv.row(&band_fields(b));
            }
            csv.finish()
        }
    };
    write(&args.output, &text)
}

#[derive(Debug, Serialize)]
struct Cell {
    preset: String,
    dgp: String,
    sparsity: SparsityMode,
    n: usize,
    beta: f64,
    alpha: f64,
    rejections: usize,
    rate: f64,
    mc_se: f64,
    published: Option<f64>,
}

#[derive(Serialize)]
struct ReproduceOutput {
    preset: String,
    seed: u64,
    replications: usize,
    reference_replications: usize,
    c_gamma: f64,
    a: f64,
    cells: Vec<Cell>,
}

#[derive(Serialize)]
struct QqOutput {
    dgp: String,
    n: usize,
    beta: f64,
    sparsity: SparsityMode,
    replications: usize,
    reference_replications: usize,
    points: Vec<QqPoint>,
}

/// A study cell before it is run: plan plus the published sizes for its alphas.
struct Job {
    plan: ExperimentPlan,
    published: Option<[f64; 4]>,
}

const CONDITIONAL_SIZES: [usize; 3] = [1000, 4000, 8000];

fn keep(filter: &Option<Vec<f64>>, v: f64) -> bool {
    filter.as_ref().is_none_or(|f| f.iter().any(|&x| (x - v).abs() < 1e-12))
}

fn keep_n(filter: &Option<Vec<usize>>, n: usize) -> bool {
    filter.as_ref().is_none_or(|f| f.contains(&n))
}

fn configure(plan: &mut ExperimentPlan, args: &ReproduceArgs, beta: f64) -> CliResult<()> {
    plan.schedule = ScheduleConfig::new(args.c_gamma, beta, args.a)?;
    plan.replications = args.reps;
    plan.reference_replications = args.ref_reps;
    plan.resimulate_reference = args.resimulate;
    Ok(())
}

pub fn reproduce(args: ReproduceArgs) -> CliResult<()> {
    let preset = args.preset.trim().to_ascii_lowercase();
    if !matches!(preset.as_str(), "table1" | "table2" | "conditional" | "qq") {
        return Err(CliError::UnknownPreset(args.preset.clone()));
    }
    let n_filter = args.n.as_deref().map(|t| parse_sizes("n", t)).transpose()?;
    let beta_filter = args.beta.as_deref().map(|t| parse_list("beta", t)).transpose()?;
    let mode_override = args.sparsity.as_deref().map(parse_mode).transpose()?;
    check_reps("reps", args.reps, 1)?;
    check_reps("ref-reps", args.ref_reps, quantstream::inference::MIN_REPLICATIONS)?;
    let seed = args.seed.seed;

    if preset == "qq" {
        let n = n_filter.as_ref().map_or(4000, |v| v[0]);
        let beta = beta_filter.as_ref().map_or(0.7, |v| v[0]);
        let mode = mode_override.unwrap_or(SparsityMode::Known);
        let mut plan = ExperimentPlan::size_study(Dgp::StandardNormal, n, beta, mode, seed)?;
        configure(&mut plan, &args, beta)?;
        return write(&args.output, &render_qq(&plan, args.output.format)?);
    }

    let mut jobs = Vec::new();
    match preset.as_str() {
        "table1" => {
            let mode = mode_override.unwrap_or(SparsityMode::Known);
            for &(n, beta, sizes) in published::GAUSSIAN_KNOWN.iter() {
                if keep_n(&n_filter, n) && keep(&beta_filter, beta) {
                    let mut plan = ExperimentPlan::size_study(Dgp::StandardNormal, n, beta, mode, seed)?;
                    configure(&mut plan, &args, beta)?;
                    jobs.push(Job {
                        plan,
                        published: (mode == SparsityMode::Known).then_some(sizes),
                    });
                }
            }
        }
        "table2" => {
            let mode = mode_override.unwrap_or(SparsityMode::Kde);
            for &(dgp, n, sizes) in published::KDE.iter() {
                if keep_n(&n_filter, n) && keep(&beta_filter, 0.7) {
                    let mut plan = ExperimentPlan::size_study(Dgp::parse(dgp)?, n, 0.7, mode, seed)?;
                    configure(&mut plan, &args, 0.7)?;
                    jobs.push(Job {
                        plan,
                        published: (mode == SparsityMode::Kde).then_some(sizes),
                    });
                }
            }
        }
        _ => {
            let mode = mode_override.unwrap_or(SparsityMode::Kde);
            let sizes = n_filter.clone().unwrap_or_else(|| CONDITIONAL_SIZES.to_vec());
            let betas = beta_filter.clone().unwrap_or_else(|| vec![0.7]);
            for &n in &sizes {
                for &beta in &betas {
                    let mut plan = ExperimentPlan::conditional_study(n, mode, seed)?;
                    configure(&mut plan, &args, beta)?;
                    jobs.push(Job { plan, published: None });
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::usage(
            "n",
            "no cells of the preset match the --n/--beta filters",
        ));
    }

    let mut cells = Vec::new();
    for job in &jobs {
        let table = if job.plan.dgp == Dgp::CondNormalVarianceX {
            experiments::run_conditional_coverage(&job.plan)?
        } else {
            experiments::run_coverage(&job.plan)?
        };
        for row in &table.rows {
            for (j, &alpha) in table.alphas.iter().enumerate() {
                cells.push(Cell {
                    preset: preset.clone(),
                    dgp: row.dgp.clone(),
                    sparsity: row.sparsity,
                    n: row.n,
                    beta: row.beta,
                    alpha,
                    rejections: row.rejections[j],
                    rate: row.rates[j],
                    mc_se: row.mc_se[j],
                    published: job.published.map(|p| p[j]),
                });
            }
        }
    }
    let out = ReproduceOutput {
        preset,
        seed,
        replications: args.reps,
        reference_replications: args.ref_reps,
        c_gamma: args.c_gamma,
        a: args.a,
        cells,
    };
    let text = match args.output.format {
        Format::Json => to_json(&out),
        Format::Csv => {
            let mut csv = Csv::new(&[
                "preset",
                "dgp",
                "sparsity",
                "n",
                "beta",
                "alpha",
                "rejections",
                "rate",
                "mc_se",
                "published",
            ]);
            for c in &out.cells {
                csv.row(&[
                    c.preset.clone(),
                    c.dgp.clone(),
                    mode_name(c.sparsity).into(),
                    c.n.to_string(),
                    fmt6(c.beta),
                    fmt6(c.alpha),
                    c.rejections.to_string(),
                    fmt6(c.rate),
                    fmt6(c.mc_se),
                    c.published.map(fmt6).unwrap_or_default(),
                ]);
            }
            csv.finish()
        }
    };
    write(&args.output, &text)
}

fn render_qq(plan: &ExperimentPlan, format: Format) -> CliResult<String> {
    let points = experiments::run_qq(plan)?;
    Ok(match format {
        Format::Json => to_json(&QqOutput {
            dgp: plan.dgp.name(),
            n: plan.n,
            beta: plan.schedule.beta,
            sparsity: plan.sparsity_mode,
            replications: plan.replications,
            reference_replications: plan.reference_replications,
            points,
        }),
        Format::Csv => {
            let mut csv = Csv::new(&["empirical", "reference"]);
            for p in &points {
                csv.row(&[fmt6(p.empirical), fmt6(p.reference)]);
            }
            csv.finish()
        }
    })
}

pub fn qq(args: QqArgs) -> CliResult<()> {
    let dgp = Dgp::parse(&args.dist).map_err(|e| CliError::usage("dist", e.to_string()))?;
    let mode = parse_mode(&args.sparsity)?;
    let sched = schedule(&args.schedule)?;
    let grid = parse_grid(&args.grid)?;
    check_reps("reps", args.reps, 1)?;
    check_reps("ref-reps", args.ref_reps, quantstream::inference::MIN_REPLICATIONS)?;
    let mut plan = match dgp {
        Dgp::CondNormalVarianceX => ExperimentPlan::conditional_study(args.n, mode, args.seed.seed)?,
        other => ExperimentPlan::size_study(other, args.n, sched.beta, mode, args.seed.seed)?,
    };
    plan.schedule = sched;
    plan.grid = grid;
    plan.replications = args.reps;
    plan.reference_replications = args.ref_reps;
    write(&args.output, &render_qq(&plan, args.output.format)?)
}

pub fn tail(args: TailArgs) -> CliResult<()> {
    let dgp = Dgp::parse(&args.dist).map_err(|e| CliError::usage("dist", e.to_string()))?;
    if dgp == Dgp::CondNormalVarianceX {
        return Err(CliError::usage("dist", "tail curves need a univariate law"));
    }
    let sched = schedule(&args.schedule)?;
    let sizes = parse_sizes("n", &args.n)?;
    let xs = parse_list("x", &args.x)?;
    if !(args.tau > 0.0 && args.tau < 1.0) {
        return Err(CliError::usage(
            "tau",
            format!("must lie strictly between 0 and 1, got {}", args.tau),
        ));
    }
    check_reps("reps", args.reps, 1)?;
    let curves = sizes
        .iter()
        .map(|&n| experiments::run_tail_curve(dgp, n, args.tau, &xs, args.reps, &sched, args.seed.seed))
        .collect::<quantstream::Result<Vec<TailCurve>>>()?;
    let text = match args.output.format {
        Format::Json => to_json(&curves),
        Format::Csv => {
            let mut csv = Csv::new(&["dgp", "n", "tau", "x", "averaged", "raw", "mc_se"]);
            for c in &curves {
                for p in &c.points {
                    csv.row(&[
                        c.dgp.clone(),
                        c.n.to_string(),
                        fmt6(c.tau),
                        fmt6(p.x),
                        fmt6(p.averaged),
                        fmt6(p.raw),
                        fmt6(c.mc_se(p.averaged)),
                    ]);
                }
            }
            csv.finish()
        }
    };
    write(&args.output, &text)
}
