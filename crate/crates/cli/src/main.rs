//! Command-line front end for worst-case planning on the bundled
//! grid-world environments.
//!
//! Every command reads one JSON configuration (`--config`), writes its
//! artifacts into one directory (`--out`), and is deterministic given the
//! configuration and seed; only reported runtimes vary between runs.
//!
//! Exit codes: `0` success, `2` configuration or schema error, `3`
//! enumeration budget exceeded, `4` a measured tolerance exceeded its
//! closed-form bound, `1` anything else.
//!
//! Artifacts per command:
//! * `solve` — `solve.json` (values, strategy, realization counts).
//! * `verify-bounds` — `bounds.json`, `bounds.csv` (formula vs measured
//!   tolerances and suboptimality radii).
//! * `compare` — `compare.csv`, `compare.json`: one row per initial
//!   condition with columns `init, value_a, value_b, worst_a, worst_b,
//!   count_a, count_b, runtime_a_ms, runtime_b_ms, alpha0, gap,
//!   within_2alpha0`.
//! * `simulate` — `rollouts.csv` (per-step traces), `simulate.json`.
//! * `learn-ranges` — `dataset.ndjson`, `ranges.json`, `learn.json`.
//! * `report` — `report.csv` summarizing the artifacts found in `--out`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nonstoch_core::datadriven::{
    build_empirical_ranges, generate_dataset, generate_exhaustive_dataset, solve_dp_from_data,
    ExplorationPolicy, TrajectoryDataset, WindowKey,
};
use nonstoch_core::dp::{
    alpha_bound, evaluate_strategy_worst_case, make_artifact, simulate_rollouts,
    solve_abstraction_dp, solve_memory_dp, Compressor, SolveArtifact, Strategy, ValueTable,
};
use nonstoch_core::envs::{
    initial_observation_point, pursuit_evasion, pursuit_evasion_reduced, rollout_trace_csv,
    wall_composite_compressor, wall_defense, wall_defense_strip, GridEnvConfig, WallGrid,
};
use nonstoch_core::model::{EnumerationOptions, SystemModel};
use nonstoch_core::quantize::{
    bound_report, empirical_eps_delta, grids_for_system, verify_value_lipschitz, BoundReport,
};
use nonstoch_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nonstoch-ais",
    version,
    about = "Worst-case planning with approximate information states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (required by every command except `report`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory the artifacts are written into.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on enumerated histories/trajectories.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Worker threads; `NONSTOCH_AIS_JOBS` is the fallback, then all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured dynamic program and write its artifact.
    Solve,
    /// Measure the quantized abstraction's tolerances and check them
    /// against the closed-form bounds.
    VerifyBounds,
    /// Solve the main and baseline abstractions and tabulate values, worst
    /// cases, sizes and optimality gaps per initial condition.
    Compare,
    /// Roll the solved strategy out and write traces plus a summary.
    Simulate,
    /// Collect trajectories, estimate observation ranges and worst costs,
    /// and write the learned model.
    LearnRanges,
    /// Summarize the artifacts already present in the output directory.
    Report,
}

/// One run configuration. `env` picks the system; the other sections are
/// read by the commands that need them.
#[derive(Clone, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    env: EnvConfig,
    /// Abstraction the dynamic program runs on.
    #[serde(default)]
    abstraction: AbstractionChoice,
    /// Second abstraction for `compare` (the `_b` columns).
    #[serde(default)]
    baseline: Option<AbstractionChoice>,
    /// Grid resolution for `verify-bounds` and for `quantized` abstractions
    /// on environments without a bespoke grid.
    #[serde(default = "default_gamma")]
    gamma: f64,
    /// Dataset shape for data-driven abstractions and `learn-ranges`.
    #[serde(default)]
    data: DataConfig,
    /// Observed opponent cells `compare` conditions its rows on; all
    /// feasible cells when omitted.
    #[serde(default)]
    initial_conditions: Option<Vec<(i64, i64)>>,
    /// Test fixture: replaces the measured per-time cost tolerances before
    /// the bound check in `verify-bounds`.
    #[serde(default)]
    override_measured_eps: Option<Vec<f64>>,
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Clone, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct EnvConfig {
    kind: EnvKind,
    grid: GridEnvConfig,
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
enum EnvKind {
    WallDefense,
    WallStrip,
    Pursuit,
    PursuitReduced,
}

impl EnvKind {
    fn name(self) -> &'static str {
        match self {
            EnvKind::WallDefense => "wall-defense",
            EnvKind::WallStrip => "wall-strip",
            EnvKind::Pursuit => "pursuit",
            EnvKind::PursuitReduced => "pursuit-reduced",
        }
    }

    fn wall_grid(self) -> Option<WallGrid> {
        match self {
            EnvKind::WallDefense => Some(WallGrid::full()),
            EnvKind::WallStrip => Some(WallGrid::strip()),
            EnvKind::Pursuit | EnvKind::PursuitReduced => None,
        }
    }
}

#[derive(Clone, Default, PartialEq, Deserialize, Debug)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum AbstractionChoice {
    /// Raw memory dynamic program.
    Memory,
    /// Conditional-range information state (exact).
    #[default]
    InfoState,
    /// The environment's quantization-based approximate information state.
    Quantized,
    /// Plan on ranges estimated from data over a history window of
    /// `window` observations.
    DataDriven { window: usize },
}

impl AbstractionChoice {
    fn describe(&self) -> String {
        match self {
            AbstractionChoice::Memory => "memory".into(),
            AbstractionChoice::InfoState => "info-state".into(),
            AbstractionChoice::Quantized => "quantized".into(),
            AbstractionChoice::DataDriven { window } => format!("data-driven(k={window})"),
        }
    }
}

#[derive(Clone, Default, PartialEq, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct DataConfig {
    #[serde(default)]
    source: DataSource,
    /// Number of sampled trajectories when `source` is `sampled`.
    #[serde(default = "default_trajectories")]
    trajectories: u64,
    #[serde(default)]
    policy: PolicyKind,
}

fn default_trajectories() -> u64 {
    100
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
enum DataSource {
    /// Every initial state, disturbance, noise and action sequence.
    #[default]
    Exhaustive,
    Sampled,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Deserialize, Debug)]
#[serde(rename_all = "kebab-case")]
enum PolicyKind {
    #[default]
    UniformRandom,
    RoundRobin,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_jobs(cli.jobs);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Schema(_) | Error::Json(_) => 2,
                Error::ModelTooLarge { .. } => 3,
                _ => 1,
            })
        }
    }
}

fn configure_jobs(jobs: Option<usize>) {
    let jobs = jobs.or_else(|| {
        std::env::var("NONSTOCH_AIS_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = jobs {
        // Ignored if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match cli.command {
        Command::Solve => cmd_solve(cli, &load_config(cli)?),
        Command::VerifyBounds => cmd_verify_bounds(cli, &load_config(cli)?),
        Command::Compare => cmd_compare(cli, &load_config(cli)?),
        Command::Simulate => cmd_simulate(cli, &load_config(cli)?),
        Command::LearnRanges => cmd_learn_ranges(cli, &load_config(cli)?),
        Command::Report => cmd_report(cli),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Schema("this command requires --config".into()))?;
    let text = fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.env.grid.validate()?;
    if !(cfg.gamma >= 0.0) {
        return Err(Error::Schema(format!(
            "gamma must be nonnegative, got {}",
            cfg.gamma
        )));
    }
    Ok(cfg)
}

fn build_system(cfg: &RunConfig) -> Result<SystemModel> {
    match cfg.env.kind {
        EnvKind::WallDefense => wall_defense(&cfg.env.grid),
        EnvKind::WallStrip => wall_defense_strip(&cfg.env.grid),
        EnvKind::Pursuit => pursuit_evasion(&cfg.env.grid),
        EnvKind::PursuitReduced => pursuit_evasion_reduced(&cfg.env.grid),
    }
}

fn seed_of(cli: &Cli, cfg: &RunConfig) -> u64 {
    cli.seed.unwrap_or(cfg.env.grid.seed)
}

fn options(cli: &Cli, sys: &SystemModel, cfg: &RunConfig) -> Result<EnumerationOptions> {
    let mut opts = EnumerationOptions::default();
    if let Some(budget) = cli.budget {
        opts.budget = budget;
    }
    if let Some(cell) = cfg.env.grid.initial_observation {
        opts.initial_observation = Some(initial_observation_point(sys, cell)?);
    }
    Ok(opts)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let dir = dir.unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn quantized_compressor(sys: &SystemModel, cfg: &RunConfig) -> Result<Compressor> {
    match cfg.env.kind.wall_grid() {
        Some(grid) => wall_composite_compressor(&cfg.env.grid, &grid),
        None => Ok(Compressor::QuantizedRange {
            grids: grids_for_system(sys, &vec![cfg.gamma; sys.horizon() + 1])?,
        }),
    }
}

fn collect_dataset(
    sys: &SystemModel,
    cfg: &RunConfig,
    opts: &EnumerationOptions,
    seed: u64,
) -> Result<TrajectoryDataset> {
    match cfg.data.source {
        DataSource::Exhaustive => generate_exhaustive_dataset(sys, opts),
        DataSource::Sampled => {
            let policy = match cfg.data.policy {
                PolicyKind::UniformRandom => ExplorationPolicy::UniformRandom,
                PolicyKind::RoundRobin => ExplorationPolicy::RoundRobin,
            };
            generate_dataset(sys, policy, cfg.data.trajectories, seed)
        }
    }
}

/// Solves one abstraction choice. Returns the table, the strategy and the
/// solve runtime in milliseconds.
fn solve_choice(
    sys: &SystemModel,
    cfg: &RunConfig,
    choice: &AbstractionChoice,
    opts: &EnumerationOptions,
    seed: u64,
) -> Result<(ValueTable, Strategy, f64)> {
    let start = Instant::now();
    let (table, strategy) = match choice {
        AbstractionChoice::Memory => solve_memory_dp(sys, opts)?,
        AbstractionChoice::InfoState => {
            let a = Compressor::ConditionalRange.build(sys, opts)?;
            solve_abstraction_dp(sys, a)?
        }
        AbstractionChoice::Quantized => {
            let a = quantized_compressor(sys, cfg)?.build(sys, opts)?;
            solve_abstraction_dp(sys, a)?
        }
        AbstractionChoice::DataDriven { window } => {
            let dataset = collect_dataset(sys, cfg, opts, seed)?;
            let model = build_empirical_ranges(&dataset, *window)?;
            solve_dp_from_data(&model, sys)?
        }
    };
    Ok((table, strategy, ms(start)))
}

/// Suboptimality radii from the abstraction's measured tolerances.
fn measured_alpha(
    sys: &SystemModel,
    table: &ValueTable,
    opts: &EnumerationOptions,
) -> Result<Vec<f64>> {
    let (eps, delta) = empirical_eps_delta(sys, table.abstraction(), opts)?;
    let lips = verify_value_lipschitz(table)?;
    alpha_bound(sys.criterion(), &eps, &delta, &lips)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
struct SolveOutput {
    env: String,
    abstraction: String,
    seed: u64,
    artifact: SolveArtifact,
}

fn cmd_solve(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let sys = build_system(cfg)?;
    let opts = options(cli, &sys, cfg)?;
    let seed = seed_of(cli, cfg);
    let (table, strategy, runtime) = solve_choice(&sys, cfg, &cfg.abstraction, &opts, seed)?;
    let alpha = match cfg.abstraction {
        // Exact compressions have zero tolerances by construction.
        AbstractionChoice::Memory | AbstractionChoice::InfoState => None,
        _ => match measured_alpha(&sys, &table, &opts) {
            Ok(alpha) => Some(alpha),
            Err(e) => {
                eprintln!("note: suboptimality radii unavailable: {e}");
                None
            }
        },
    };
    let output = SolveOutput {
        env: cfg.env.kind.name().into(),
        abstraction: cfg.abstraction.describe(),
        seed,
        artifact: make_artifact(&table, &strategy, alpha, runtime),
    };
    write_atomic(
        &cli.out.join("solve.json"),
        &serde_json::to_string_pretty(&output)?,
    )?;
    println!(
        "solved {} on {}: guaranteed worst case {}",
        output.abstraction, output.env, output.artifact.value
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// verify-bounds
// ---------------------------------------------------------------------------

fn cmd_verify_bounds(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let sys = build_system(cfg)?;
    let opts = options(cli, &sys, cfg)?;
    let grids = grids_for_system(&sys, &vec![cfg.gamma; sys.horizon() + 1])?;
    let mut report: BoundReport = bound_report(&sys, &grids, &opts)?;
    if let Some(eps) = &cfg.override_measured_eps {
        if eps.len() != sys.horizon() + 1 {
            return Err(Error::DimensionMismatch {
                expected: sys.horizon() + 1,
                got: eps.len(),
            });
        }
        report.eps_measured = eps.clone();
    }
    write_atomic(
        &cli.out.join("bounds.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_atomic(&cli.out.join("bounds.csv"), &report.to_csv())?;
    let violations = report.violations(1e-9);
    if violations.is_empty() {
        println!(
            "bounds hold on {} at gamma {}: alpha_0 = {}",
            cfg.env.kind.name(),
            cfg.gamma,
            report.alpha[0]
        );
        Ok(0)
    } else {
        for v in &violations {
            eprintln!("bound violation: {v}");
        }
        Ok(4)
    }
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
struct CompareRow {
    /// Observed opponent cell the row conditions on.
    init: String,
    value_a: f64,
    value_b: f64,
    worst_a: f64,
    worst_b: f64,
    count_a: usize,
    count_b: usize,
    runtime_a_ms: f64,
    runtime_b_ms: f64,
    alpha0: f64,
    gap: f64,
    within_2alpha0: bool,
}

#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
struct CompareOutput {
    env: String,
    abstraction_a: String,
    abstraction_b: String,
    rows: Vec<CompareRow>,
}

/// One side of a comparison row: the guaranteed value conditioned on the
/// initial observation, the strategy's exhaustively evaluated worst case,
/// the realization count and the solve runtime.
struct SideEval {
    value: f64,
    worst: f64,
    count: usize,
    runtime_ms: f64,
    alpha0: f64,
}

fn eval_side(
    sys: &SystemModel,
    cfg: &RunConfig,
    choice: &AbstractionChoice,
    global: Option<&(ValueTable, Strategy, f64)>,
    opts: &EnumerationOptions,
    seed: u64,
) -> Result<SideEval> {
    if let Some((table, strategy, runtime)) = global {
        // Data-driven strategies are learned once from the full dataset;
        // rows look its values up under their pinned initial observation.
        let y0 = opts
            .initial_observation
            .clone()
            .expect("compare rows always pin an initial observation");
        let key = WindowKey {
            observations: vec![y0],
            actions: vec![],
        };
        let value = table.value_of(0, &key.realization())?;
        let worst = evaluate_strategy_worst_case(sys, strategy, opts)?;
        let (eps, delta) = empirical_eps_delta(sys, table.abstraction(), opts)?;
        let lips = verify_value_lipschitz(table)?;
        let alpha = alpha_bound(sys.criterion(), &eps, &delta, &lips)?;
        return Ok(SideEval {
            value,
            worst,
            count: table.abstraction().realization_count(),
            runtime_ms: *runtime,
            alpha0: alpha[0],
        });
    }
    let (table, strategy, runtime_ms) = solve_choice(sys, cfg, choice, opts, seed)?;
    let worst = evaluate_strategy_worst_case(sys, &strategy, opts)?;
    let alpha = measured_alpha(sys, &table, opts)?;
    Ok(SideEval {
        value: table.initial_value(),
        worst,
        count: table.abstraction().realization_count(),
        runtime_ms,
        alpha0: alpha[0],
    })
}

/// Distinct observed opponent cells at time zero (the trailing coordinate
/// pair of every initial observation).
fn feasible_initial_cells(sys: &SystemModel) -> Vec<(i64, i64)> {
    let mut cells = BTreeSet::new();
    for y in sys.observations(0) {
        let d = y.dims();
        cells.insert((y.coord(d - 2) as i64, y.coord(d - 1) as i64));
    }
    cells.into_iter().collect()
}

fn cmd_compare(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    if cfg.env.grid.initial_observation.is_some() {
        return Err(Error::Schema(
            "compare conditions each row on its own initial observation; \
             leave env.grid.initial_observation unset and use initial_conditions"
                .into(),
        ));
    }
    let choice_b = cfg
        .baseline
        .clone()
        .ok_or_else(|| Error::Schema("compare requires a `baseline` abstraction".into()))?;
    let sys = build_system(cfg)?;
    let base_opts = options(cli, &sys, cfg)?;
    let seed = seed_of(cli, cfg);
    let cells = match &cfg.initial_conditions {
        Some(cells) if cells.is_empty() => {
            return Err(Error::Schema("initial_conditions must not be empty".into()))
        }
        Some(cells) => cells.clone(),
        None => feasible_initial_cells(&sys),
    };

    // Data-driven sides are trained once on the unconditioned dataset.
    let solve_global = |choice: &AbstractionChoice| -> Result<Option<(ValueTable, Strategy, f64)>> {
        if matches!(choice, AbstractionChoice::DataDriven { .. }) {
            Ok(Some(solve_choice(&sys, cfg, choice, &base_opts, seed)?))
        } else {
            Ok(None)
        }
    };
    let global_a = solve_global(&cfg.abstraction)?;
    let global_b = solve_global(&choice_b)?;

    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let y0 = initial_observation_point(&sys, cell)?;
        let opts = EnumerationOptions {
            budget: base_opts.budget,
            initial_observation: Some(y0),
        };
        let a = eval_side(&sys, cfg, &cfg.abstraction, global_a.as_ref(), &opts, seed)?;
        let b = eval_side(&sys, cfg, &choice_b, global_b.as_ref(), &opts, seed)?;
        let gap = b.worst - a.worst;
        rows.push(CompareRow {
            init: format!("({},{})", cell.0, cell.1),
            value_a: a.value,
            value_b: b.value,
            worst_a: a.worst,
            worst_b: b.worst,
            count_a: a.count,
            count_b: b.count,
            runtime_a_ms: a.runtime_ms,
            runtime_b_ms: b.runtime_ms,
            alpha0: b.alpha0,
            gap,
            within_2alpha0: gap <= 2.0 * b.alpha0 + 1e-9,
        });
    }

    let output = CompareOutput {
        env: cfg.env.kind.name().into(),
        abstraction_a: cfg.abstraction.describe(),
        abstraction_b: choice_b.describe(),
        rows,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &output.rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    let csv_text = String::from_utf8(writer.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    write_atomic(&cli.out.join("compare.csv"), &csv_text)?;
    write_atomic(
        &cli.out.join("compare.json"),
        &serde_json::to_string_pretty(&output)?,
    )?;
    println!(
        "compared {} (a) against {} (b) on {} over {} initial conditions",
        output.abstraction_a,
        output.abstraction_b,
        output.env,
        output.rows.len()
    );
    Ok(0)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Schema(format!("csv serialization failed: {e}"))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
struct SimulateOutput {
    env: String,
    abstraction: String,
    replicates: u64,
    seed: u64,
    /// Worst case the dynamic program guarantees.
    guaranteed_value: f64,
    /// Worst cost realized across the rollouts; never exceeds the
    /// guarantee.
    worst_realized: f64,
    mean_realized: f64,
    within_guarantee: bool,
    runtime_ms: f64,
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    if cfg.env.grid.initial_observation.is_some() {
        return Err(Error::Schema(
            "simulate samples every start; pin the opponent with initial_true instead".into(),
        ));
    }
    let sys = build_system(cfg)?;
    let opts = options(cli, &sys, cfg)?;
    let seed = seed_of(cli, cfg);
    let (table, strategy, _) = solve_choice(&sys, cfg, &cfg.abstraction, &opts, seed)?;
    let report = simulate_rollouts(&sys, &strategy, cfg.env.grid.replicates, seed)?;
    let mean = report.costs.iter().sum::<f64>() / report.costs.len() as f64;
    let output = SimulateOutput {
        env: cfg.env.kind.name().into(),
        abstraction: cfg.abstraction.describe(),
        replicates: cfg.env.grid.replicates,
        seed,
        guaranteed_value: table.initial_value(),
        worst_realized: report.max_cost,
        mean_realized: mean,
        within_guarantee: report.max_cost <= table.initial_value() + 1e-9,
        runtime_ms: report.runtime_ms,
    };
    write_atomic(&cli.out.join("rollouts.csv"), &rollout_trace_csv(&report)?)?;
    write_atomic(
        &cli.out.join("simulate.json"),
        &serde_json::to_string_pretty(&output)?,
    )?;
    println!(
        "simulated {} replicates: worst realized {} against guarantee {}",
        output.replicates, output.worst_realized, output.guaranteed_value
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// learn-ranges
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Serialize, Deserialize, Debug)]
struct LearnOutput {
    env: String,
    window: usize,
    policy: String,
    seed: u64,
    trajectories: usize,
    /// Estimated history keys per time.
    keys_per_level: Vec<usize>,
    /// Distinct actions observed per time.
    action_coverage: Vec<usize>,
}

fn cmd_learn_ranges(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    if cfg.env.grid.initial_observation.is_some() {
        return Err(Error::Schema(
            "learn-ranges samples every start; pin the opponent with initial_true instead".into(),
        ));
    }
    let sys = build_system(cfg)?;
    let opts = options(cli, &sys, cfg)?;
    let seed = seed_of(cli, cfg);
    let window = match cfg.abstraction {
        AbstractionChoice::DataDriven { window } => window,
        _ => 1,
    };
    let dataset = collect_dataset(&sys, cfg, &opts, seed)?;
    let model = build_empirical_ranges(&dataset, window)?;
    let output = LearnOutput {
        env: cfg.env.kind.name().into(),
        window,
        policy: dataset.policy.clone(),
        seed,
        trajectories: dataset.trajectories.len(),
        keys_per_level: model.levels.iter().map(Vec::len).collect(),
        action_coverage: dataset.action_coverage()?,
    };
    write_atomic(&cli.out.join("dataset.ndjson"), &dataset.to_ndjson()?)?;
    write_atomic(&cli.out.join("ranges.json"), &model.to_json()?)?;
    write_atomic(
        &cli.out.join("learn.json"),
        &serde_json::to_string_pretty(&output)?,
    )?;
    println!(
        "learned {} history keys from {} trajectories (window {})",
        model.key_count(),
        output.trajectories,
        window
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(cli: &Cli) -> Result<u8> {
    let mut rows: Vec<(String, String, String)> = Vec::new();
    let mut push = |artifact: &str, metric: &str, value: String| {
        rows.push((artifact.into(), metric.into(), value));
    };

    let solve_path = cli.out.join("solve.json");
    if solve_path.exists() {
        let output: SolveOutput = serde_json::from_str(&fs::read_to_string(&solve_path)?)?;
        push("solve.json", "env", output.env);
        push("solve.json", "abstraction", output.abstraction);
        push("solve.json", "value", output.artifact.value.to_string());
        push(
            "solve.json",
            "realizations",
            output.artifact.realization_counts.iter().sum::<usize>().to_string(),
        );
    }
    let bounds_path = cli.out.join("bounds.json");
    if bounds_path.exists() {
        let report: BoundReport = serde_json::from_str(&fs::read_to_string(&bounds_path)?)?;
        push("bounds.json", "criterion", report.criterion.clone());
        push("bounds.json", "alpha_0", report.alpha[0].to_string());
        push(
            "bounds.json",
            "violations",
            report.violations(1e-9).len().to_string(),
        );
    }
    let compare_path = cli.out.join("compare.json");
    if compare_path.exists() {
        let output: CompareOutput = serde_json::from_str(&fs::read_to_string(&compare_path)?)?;
        let max_gap = output.rows.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
        let all_within = output.rows.iter().all(|r| r.within_2alpha0);
        push("compare.json", "rows", output.rows.len().to_string());
        push("compare.json", "max_gap", max_gap.to_string());
        push("compare.json", "all_within_2alpha0", all_within.to_string());
    }
    let simulate_path = cli.out.join("simulate.json");
    if simulate_path.exists() {
        let output: SimulateOutput = serde_json::from_str(&fs::read_to_string(&simulate_path)?)?;
        push("simulate.json", "worst_realized", output.worst_realized.to_string());
        push(
            "simulate.json",
            "within_guarantee",
            output.within_guarantee.to_string(),
        );
    }
    let learn_path = cli.out.join("learn.json");
    if learn_path.exists() {
        let output: LearnOutput = serde_json::from_str(&fs::read_to_string(&learn_path)?)?;
        push("learn.json", "trajectories", output.trajectories.to_string());
        push(
            "learn.json",
            "keys",
            output.keys_per_level.iter().sum::<usize>().to_string(),
        );
    }

    if rows.is_empty() {
        return Err(Error::Schema(format!(
            "no artifacts found in {}",
            cli.out.display()
        )));
    }
    let mut text = String::from("artifact,metric,value\n");
    for (artifact, metric, value) in &rows {
        text.push_str(&format!("{artifact},{metric},{value}\n"));
    }
    write_atomic(&cli.out.join("report.csv"), &text)?;
    println!("summarized {} metrics into report.csv", rows.len());
    Ok(0)
}
