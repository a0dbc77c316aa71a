//! Subcommand dispatch for the `coopsense` binary.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage, config or
//! I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AnalyzeOptions, Command, RunConfig, SimulateOptions, Sweep, ThresholdOptions};
use crate::direct::{
    direct_csv_record, direct_threshold, direct_threshold_hetero, hetero_cp_bounds, hetero_csv_record,
    DirectThreshold, HeteroDirectThreshold, DIRECT_CSV_HEADER, HETERO_CSV_HEADER,
};
use crate::error::Error;
use crate::fusion::{condition_i_bounds, CpRegion};
use crate::indirect::{delta_threshold, indirect_csv_record, lr_dishonest, DeltaThreshold, LongTermRewards, INDIRECT_CSV_HEADER};
use crate::model::{
    a4_bound, check_a4, classify_cooperation_case, classify_transmission_case, CooperationCase, HeteroParams,
    ScenarioParams, TransmissionCase,
};
use crate::oneshot::{behavior_csv_record, behavior_table, BEHAVIOR_CSV_HEADER};
use crate::posterior::{posterior_idle, Posterior};
use crate::report::{fmt_f64, write_csv_file};
use crate::sim::{run_experiment, stats_json, trace_csv_record, SimStats, TRACE_CSV_HEADER};
use crate::verify::{run_checks, validate_options, CheckResult, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "coopsense", version, about = "Collaborative sensing under cooperative SSDF attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: SubCommand,
}

#[derive(Debug, Subcommand)]
pub enum SubCommand {
    /// Condition I bounds, regime classification and posterior table.
    Analyze(CommonArgs),
    /// Punishment-threshold sweeps as CSV.
    Thresholds(CommonArgs),
    /// Monte Carlo simulation.
    Simulate(CommonArgs),
    /// Closed forms against their oracles.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, env = "COOPSENSE_WORKERS", default_value_t = 0)]
    pub workers: usize,
}

/// Failure of one invocation, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    ChecksFailed(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(v) => Failure::Usage(
                std::iter::once("invalid parameters:".to_string())
                    .chain(v.iter().map(|x| format!("  {x}")))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::ChecksFailed(names)) => {
            eprintln!("failed checks: {}", names.join(", "));
            EXIT_CHECK_FAILED
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let (name, args) = match &cli.command {
        SubCommand::Analyze(a) => ("analyze", a),
        SubCommand::Thresholds(a) => ("thresholds", a),
        SubCommand::Simulate(a) => ("simulate", a),
        SubCommand::Verify(a) => ("verify", a),
    };
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let config = RunConfig::from_json(&text)?;
    config.validate()?;
    let command = config.command_for(name)?;
    let out = args.out.clone().unwrap_or_else(|| config.output.directory.clone());
    let ctx = Context {
        config: &config,
        out,
        seed: args.seed,
        workers: args.workers,
    };
    match command {
        Command::Analyze(o) => cmd_analyze(&ctx, &o),
        Command::Thresholds(o) => cmd_thresholds(&ctx, &o),
        Command::Simulate(o) => cmd_simulate(&ctx, &o),
        Command::Verify(o) => cmd_verify(&ctx, o),
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    seed: Option<u64>,
    workers: usize,
}

impl Context<'_> {
    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(&self.out)
    }

    fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<PathBuf, Failure> {
        let path = self.out_dir()?.join(file);
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn write_csv(&self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, Failure> {
        let path = self.out_dir()?.join(file);
        write_csv_file(&path, header, rows).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Serialize)]
struct PosteriorRow {
    busy_reports: usize,
    #[serde(flatten)]
    posterior: Posterior,
}

#[derive(Debug, Serialize)]
struct A4Status {
    bound: f64,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct HeteroReport {
    threshold: HeteroDirectThreshold,
    collision_penalty_bounds: [f64; 2],
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    schema_version: u32,
    scenario: ScenarioParams,
    condition_i: CpRegion,
    a4: A4Status,
    transmission_case: TransmissionCase,
    cooperation_case: CooperationCase,
    posterior: Vec<PosteriorRow>,
    direct_threshold: DirectThreshold,
    long_term_rewards: LongTermRewards,
    /// Absent in Case.AT, where no discount factor prevents the attack.
    delta_threshold: Option<DeltaThreshold>,
    hetero: Option<HeteroReport>,
}

fn analysis(p: &ScenarioParams, hetero: Option<&HeteroParams>) -> Result<AnalysisReport, Failure> {
    let posterior = (0..=p.n_total)
        .map(|k| {
            Ok(PosteriorRow {
                busy_reports: k,
                posterior: posterior_idle(p.n_total, k, p)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let hetero = match hetero {
        Some(h) => {
            let (lo, hi) = hetero_cp_bounds(h);
            Some(HeteroReport {
                threshold: direct_threshold_hetero(h)?,
                collision_penalty_bounds: [lo, hi],
            })
        }
        None => None,
    };
    let transmission_case = classify_transmission_case(p);
    Ok(AnalysisReport {
        schema_version: crate::config::CONFIG_SCHEMA_VERSION,
        scenario: *p,
        condition_i: condition_i_bounds(p),
        a4: A4Status {
            bound: a4_bound(p),
            holds: check_a4(p),
        },
        transmission_case,
        cooperation_case: classify_cooperation_case(p),
        posterior,
        direct_threshold: direct_threshold(p.n_attackers, p)?,
        long_term_rewards: lr_dishonest(p),
        delta_threshold: match transmission_case {
            TransmissionCase::NT => Some(delta_threshold(p)?),
            TransmissionCase::AT => None,
        },
        hetero,
    })
}

pub const BOUNDS_CSV_HEADER: [&str; 3] = ["N", "lower", "upper"];

fn cmd_analyze(ctx: &Context, o: &AnalyzeOptions) -> Result<(), Failure> {
    let p = ctx.config.scenario.params();
    let h = ctx.config.scenario.hetero_params();
    let report = analysis(&p, h.as_ref())?;
    println!(
        "Condition I: [{}, {}] -> {:?}; A4 {}; {:?}/{:?}",
        fmt_f64(report.condition_i.lower_bound),
        fmt_f64(report.condition_i.upper_bound),
        report.condition_i.region,
        if report.a4.holds { "holds" } else { "fails" },
        report.transmission_case,
        report.cooperation_case
    );
    let output = &ctx.config.output;
    if output.json() {
        let path = ctx.write_json("analysis.json", &report)?;
        println!("wrote {}", path.display());
    }
    if output.csv() {
        if let Some([lo, hi]) = o.n_sweep {
            if lo < 1 || hi < lo {
                return Err(Failure::Usage(format!("n_sweep [{lo}, {hi}] is empty")));
            }
            let rows: Vec<Vec<String>> = (lo..=hi)
                .map(|n| {
                    let b = condition_i_bounds(&p.with_total(n));
                    vec![n.to_string(), fmt_f64(b.lower_bound), fmt_f64(b.upper_bound)]
                })
                .collect();
            let path = ctx.write_csv("bounds.csv", &BOUNDS_CSV_HEADER, &rows)?;
            println!("wrote {}", path.display());
        }
        if o.behavior_table {
            let rows: Vec<Vec<String>> = behavior_table(&p, o.include_direct_punishment)
                .iter()
                .map(behavior_csv_record)
                .collect();
            let path = ctx.write_csv("behavior.csv", &BEHAVIOR_CSV_HEADER, &rows)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Parameter sets of one sweep, in output order.
fn sweep_points(base: &ScenarioParams, sweep: &Sweep) -> Vec<ScenarioParams> {
    let all_m = |p: ScenarioParams| (1..p.n_total).map(move |m| p.with_attackers(m));
    match sweep {
        Sweep::DirectVsM { n_values } | Sweep::DeltaVsM { n_values } => {
            n_values.iter().flat_map(|&n| all_m(base.with_total(n))).collect()
        }
        Sweep::DirectVsPIdle { p_idle_values } => {
            p_idle_values.iter().flat_map(|&x| all_m(base.with_p_idle(x))).collect()
        }
        Sweep::DirectVsCp { collision_penalties } => collision_penalties
            .iter()
            .flat_map(|&x| all_m(base.with_collision_penalty(x)))
            .collect(),
        Sweep::HeteroDirect { .. } => vec![],
    }
}

fn sweep_rows(base: &ScenarioParams, sweep: &Sweep) -> Result<(Vec<&'static str>, Vec<Vec<String>>), Failure> {
    if sweep.is_empty() {
        return Err(Failure::Usage(format!("sweep {} has an empty axis", sweep.file_stem())));
    }
    if let Sweep::HeteroDirect {
        p_false_alarm_attacker,
        p_missed_detection_attacker,
        rate_attacker,
    } = sweep
    {
        let mut grid = Vec::new();
        for &pf in p_false_alarm_attacker {
            for &pm in p_missed_detection_attacker {
                let h = HeteroParams::new(base.with_attackers(1), pf, pm, *rate_attacker);
                h.validate()?;
                grid.push(h);
            }
        }
        let rows = grid
            .par_iter()
            .map(|h| Ok(hetero_csv_record(h, &direct_threshold_hetero(h)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        return Ok((HETERO_CSV_HEADER.to_vec(), rows));
    }
    let points = sweep_points(base, sweep);
    if points.is_empty() {
        return Err(Failure::Usage(format!("sweep {} has no valid M", sweep.file_stem())));
    }
    for p in &points {
        p.validate()?;
    }
    if let Sweep::DeltaVsM { .. } = sweep {
        let rows = points.par_iter().map(indirect_csv_record).collect();
        return Ok((INDIRECT_CSV_HEADER.to_vec(), rows));
    }
    let rows = points
        .par_iter()
        .map(|p| Ok(direct_csv_record(p, p.n_attackers, &direct_threshold(p.n_attackers, p)?)))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((DIRECT_CSV_HEADER.to_vec(), rows))
}

fn cmd_thresholds(ctx: &Context, o: &ThresholdOptions) -> Result<(), Failure> {
    if o.sweeps.is_empty() {
        return Err(Failure::Usage("thresholds needs at least one sweep".into()));
    }
    if !ctx.config.output.csv() {
        return Err(Failure::Usage("thresholds writes CSV; add \"csv\" to output.formats".into()));
    }
    let base = ctx.config.scenario.params();
    let pool = ctx.pool()?;
    // Compute everything before writing anything.
    let tables = pool.install(|| o.sweeps.iter().map(|s| sweep_rows(&base, s)).collect::<Result<Vec<_>, _>>())?;
    for (sweep, (header, rows)) in o.sweeps.iter().zip(&tables) {
        let path = ctx.write_csv(&format!("{}.csv", sweep.file_stem()), header, rows)?;
        println!("wrote {} ({} rows)", path.display(), rows.len());
    }
    Ok(())
}

fn print_comparison(label: &str, empirical: &crate::sim::Estimate, reference: Option<f64>) {
    match reference {
        Some(r) => println!(
            "{label:<28} {} +/- {}  (analytic {}, z = {:.2})",
            fmt_f64(empirical.mean),
            fmt_f64(empirical.ci_half_width),
            fmt_f64(r),
            empirical.z_score(r)
        ),
        None => println!("{label:<28} {} +/- {}", fmt_f64(empirical.mean), fmt_f64(empirical.ci_half_width)),
    }
}

fn cmd_simulate(ctx: &Context, o: &SimulateOptions) -> Result<(), Failure> {
    let c = o.sim_config(&ctx.config.scenario, ctx.seed);
    let stats: SimStats = run_experiment(&c, ctx.workers)?;
    let a = &stats.analytic;
    print_comparison("attacker reward per slot", &stats.attacker_reward_per_slot, a.attacker_per_slot);
    print_comparison("honest reward per slot", &stats.honest_reward_per_slot, a.honest_per_slot);
    print_comparison(
        "attacker discounted reward",
        &stats.conditional.attacker_reward_discounted,
        a.attacker_discounted,
    );
    println!(
        "collisions {}, attack actions {}, gamma {} (honest {})",
        stats.collision_count,
        stats.attack_actions,
        fmt_f64(stats.pu.empirical_gamma),
        fmt_f64(stats.pu.honest_gamma)
    );
    if ctx.config.output.json() {
        let path = ctx.out_dir()?.join("stats.json");
        fs::write(&path, stats_json(&stats) + "\n").map_err(|e| io_err(&path, e))?;
        println!("wrote {}", path.display());
    }
    if ctx.config.output.csv() && o.trace_slots > 0 {
        let rows: Vec<Vec<String>> = stats.trace.iter().map(trace_csv_record).collect();
        let path = ctx.write_csv("trace.csv", &TRACE_CSV_HEADER, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    schema_version: u32,
    passed: bool,
    checks: &'a [CheckResult],
}

fn cmd_verify(ctx: &Context, mut o: VerifyOptions) -> Result<(), Failure> {
    if let Some(seed) = ctx.seed {
        o.seed = seed;
    }
    validate_options(&o)?;
    let results = ctx.pool()?.install(|| run_checks(&o))?;
    for r in &results {
        println!("{}", r.summary_line());
        for d in &r.details {
            println!("       {d}");
        }
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.to_string()).collect();
    if ctx.config.output.json() {
        let report = VerifyReport {
            schema_version: crate::config::CONFIG_SCHEMA_VERSION,
            passed: failed.is_empty(),
            checks: &results,
        };
        let path = ctx.write_json("verify.json", &report)?;
        println!("wrote {}", path.display());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::ChecksFailed(failed))
    }
}
