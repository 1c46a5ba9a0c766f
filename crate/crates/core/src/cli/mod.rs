//! Command-line front end. Exit codes: 0 success, 1 input error,
//! 2 infeasible instance, 3 tolerance failure.

mod output;
pub mod scenario;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{baseline_power, baseline_quality, BaselineKind};
use crate::error::Error;
use crate::grouping::{partition, required_tiles, GroupPartition, SystemViewState};
use crate::powermin::{solve, Allocation, ChannelState, PowerMinResult};
use crate::qualitymax::{solve_quality, GreedyMetric, QualityResult, StateSpaceOptions};
use crate::sim::{run_power_experiment, run_quality_experiment, write_csv, ExperimentSpec, Mode, Row, Scheme};

use output::OutputSet;
use scenario::{ScenarioFile, StateFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tilecast", version, about = "Multicast resource allocation for tiled 360-degree video over OFDMA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum transmit power for one drawn view state and channel.
    PowerMin(PowerMinArgs),
    /// Largest common tile rate under a power budget, over all view states.
    QualityMax(QualityMaxArgs),
    /// Monte-Carlo sweep over Zipf exponents.
    Experiment(ExperimentArgs),
    /// Randomized comparison of the solvers against brute force.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PowerMinArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "proposed")]
    pub scheme: Scheme,
    /// JSON file with fixed `directions` and/or `gains`.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualityMaxArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "proposed")]
    pub scheme: Scheme,
    /// Sample this many view states when full enumeration exceeds the cap.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Skip the per-state table.
    #[arg(long)]
    pub summary_only: bool,
    /// Rule for handing out leftover subcarriers.
    #[arg(long, value_enum, default_value = "rate-free")]
    pub greedy_metric: GreedyMetric,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Comma-separated Zipf exponents.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Repeat to select several schemes; all by default.
    #[arg(long, value_enum)]
    pub scheme: Vec<Scheme>,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, value_enum, default_value = "rate-free")]
    pub greedy_metric: GreedyMetric,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 6)]
    pub max_n: usize,
    #[arg(long, default_value_t = 3)]
    pub max_groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes the report as JSON into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: format!("i/o error: {e}"),
        }
    }
}

/// Parses `args`, runs the command, prints diagnostics, and returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::PowerMin(a) => power_min(&a),
        Command::QualityMax(a) => quality_max(&a),
        Command::Experiment(a) => experiment(&a),
        Command::Verify(a) => verify_cmd(&a),
    }
}

fn load(common: &Common, mode: Mode) -> Result<(ScenarioFile, u64), Failure> {
    let scn = ScenarioFile::load(&common.scenario)?;
    scn.validate(mode)?;
    let seed = common.seed.unwrap_or(scn.seed);
    Ok((scn, seed))
}

#[derive(Serialize)]
struct PowerMinOutput<'a> {
    scheme: Scheme,
    seed: u64,
    state: &'a SystemViewState,
    partition: &'a GroupPartition,
    allocation: &'a Allocation,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<&'a PowerMinResult>,
}

fn power_min(a: &PowerMinArgs) -> Result<String, Failure> {
    let (scn, seed) = load(&a.common, Mode::Power)?;
    let d = scn.encoding_rate_bps.expect("validated");
    let spec = scn.experiment(Mode::Power, Some(vec![scn.zipf_gamma]), vec![a.scheme], seed);
    let fixed = a.state.as_deref().map(StateFile::load).transpose()?;
    let state = match fixed.as_ref().and_then(StateFile::view_state) {
        Some(s) => s,
        None => spec.view_state(scn.zipf_gamma, 0),
    };
    if state.n_users() != scn.users {
        return Err(Error::invalid("directions", format!("{} users, scenario says {}", state.n_users(), scn.users)).into());
    }
    let ch: ChannelState = match fixed.as_ref().map(StateFile::channel).transpose()?.flatten() {
        Some(c) => c,
        None => spec.channels().swap_remove(0),
    };
    let per_user = required_tiles(&state, &scn.video)?;

    let (part, allocation, solver) = match a.scheme {
        Scheme::Proposed => {
            let part = partition(&per_user)?;
            let res = solve(&part, &ch, d, &scn.ofdma)?;
            (part, res.allocation.clone(), Some(res))
        }
        other => {
            let kind = if other == Scheme::Unicast {
                BaselineKind::Unicast
            } else {
                BaselineKind::EqualSubcarrier
            };
            let b = baseline_power(kind, &state, &scn.video, &ch, d, &scn.ofdma)?;
            (b.partition, b.allocation, None)
        }
    };
    if let Err(e) = allocation.verify(&part, &ch, d, &scn.ofdma, 1e-6) {
        return Err(Failure {
            code: EXIT_TOLERANCE,
            message: format!("allocation check failed: {e}"),
        });
    }

    let row = |metric: &str, value: f64| Row {
        gamma: scn.zipf_gamma,
        scheme: a.scheme.name().into(),
        metric: metric.into(),
        value,
        stderr: 0.0,
        n_samples: 1,
        seed,
    };
    let mut rows = vec![row("total_power_w", allocation.total_power_w)];
    if let Some(r) = &solver {
        rows.push(row("dual_power_w", r.dual_power_w));
        rows.push(row("lower_bound_w", r.lower_bound_w));
        rows.push(row("upper_bound_w", r.upper_bound_w));
    }
    let json = PowerMinOutput {
        scheme: a.scheme,
        seed,
        state: &state,
        partition: &part,
        allocation: &allocation,
        solver: solver.as_ref(),
    };
    let mut out = OutputSet::new();
    out.json("power_min.json", &json)?;
    out.csv("power_min.csv", &rows)?;
    out.commit(&a.common.out)?;
    Ok(format!(
        "{}: total power {:.6e} W over {} groups",
        a.scheme.name(),
        allocation.total_power_w,
        part.n_groups()
    ))
}

fn quality_max(a: &QualityMaxArgs) -> Result<String, Failure> {
    let (scn, seed) = load(&a.common, Mode::Quality)?;
    let spec = scn.experiment(Mode::Quality, None, vec![a.scheme], seed);
    let qs = spec.quality_scenario()?;
    let opts = StateSpaceOptions {
        sample: a.sample,
        seed,
        keep_states: !a.summary_only,
        metric: a.greedy_metric,
        ..StateSpaceOptions::default()
    };
    let res = match a.scheme {
        Scheme::Proposed => solve_quality(&qs, &opts),
        Scheme::Unicast => baseline_quality(BaselineKind::Unicast, &qs, &opts),
        Scheme::Equal => baseline_quality(BaselineKind::EqualSubcarrier, &qs, &opts),
    };
    let mut res = match res {
        Err(Error::BudgetExceeded { required, cap }) => {
            return Err(Failure {
                code: EXIT_INPUT,
                message: format!("{required} view states exceed the enumeration cap {cap}; pass --sample M"),
            })
        }
        r => r?,
    };

    let row = |metric: &str, value: f64| Row {
        gamma: scn.zipf_gamma,
        scheme: a.scheme.name().into(),
        metric: metric.into(),
        value,
        stderr: 0.0,
        n_samples: res.n_states,
        seed,
    };
    let rows = vec![
        row("rate_bps", res.rate_bps),
        row("relaxed_rate_bps", res.relaxed_rate_bps),
        row("lower_bound_bps", res.lower_bound_bps),
        row("upper_bound_bps", res.upper_bound_bps),
    ];
    let mut out = OutputSet::new();
    out.csv("quality_max.csv", &rows)?;
    if !a.summary_only {
        let mut table = String::from("state,counts,rate_bps\n");
        for s in &res.per_state {
            let dirs: Vec<String> = s.state.directions.iter().map(|d| format!("{}:{}", d.row, d.col)).collect();
            let counts: Vec<String> = s.counts.iter().map(usize::to_string).collect();
            table.push_str(&format!("{},{},{}\n", dirs.join(" "), counts.join(" "), s.rate_bps));
        }
        out.text("quality_states.csv", table);
    }
    res.per_state.clear();
    out.json("quality_max.json", &QualityOutput {
        scheme: a.scheme,
        greedy_metric: a.greedy_metric,
        seed,
        min_gain: qs.min_gain,
        result: &res,
    })?;
    out.commit(&a.common.out)?;
    let tag = if res.sampled { " (sampled estimate)" } else { "" };
    Ok(format!(
        "{}: rate {:.6e} bit/s per tile over {} view states{tag}",
        a.scheme.name(),
        res.rate_bps,
        res.n_states
    ))
}

#[derive(Serialize)]
struct QualityOutput<'a> {
    scheme: Scheme,
    greedy_metric: GreedyMetric,
    seed: u64,
    min_gain: f64,
    result: &'a QualityResult,
}

fn experiment(a: &ExperimentArgs) -> Result<String, Failure> {
    let scn = ScenarioFile::load(&a.common.scenario)?;
    let mode = match (a.mode, scn.implied_mode()) {
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => {
            return Err(Error::invalid("mode", "give --mode or exactly one of encoding_rate_bps / budget_w").into())
        }
    };
    scn.validate(mode)?;
    let seed = a.common.seed.unwrap_or(scn.seed);
    let mut spec: ExperimentSpec = scn.experiment(mode, a.gammas.clone(), a.scheme.clone(), seed);
    spec.sample = a.sample;
    spec.greedy_metric = a.greedy_metric;
    spec.validate()?;
    let rows = match mode {
        Mode::Power => run_power_experiment(&spec)?.rows,
        Mode::Quality => run_quality_experiment(&spec)?,
    };
    let mut out = OutputSet::new();
    out.csv("experiment.csv", &rows)?;
    out.json("experiment_spec.json", &spec)?;
    out.commit(&a.common.out)?;
    Ok(format!("{} rows written", rows.len()))
}

fn verify_cmd(a: &VerifyArgs) -> Result<String, Failure> {
    let rep = verify::run(&verify::Campaign {
        trials: a.trials,
        max_n: a.max_n,
        max_groups: a.max_groups,
        seed: a.seed,
        inject_fault: a.inject_fault,
    })?;
    if let Some(dir) = &a.out {
        let mut out = OutputSet::new();
        out.json("verify.json", &rep)?;
        out.commit(dir)?;
    }
    let summary = format!(
        "trials {} passed {} failed {} skipped {} certified {}\n\
         worst certified gap {:.3e}, worst uncertified gap {:.3e}, worst duality gap {:.3e}, worst greedy gap {:.3e}",
        rep.trials,
        rep.passed,
        rep.failed,
        rep.skipped,
        rep.certified,
        rep.worst_certified_gap,
        rep.worst_uncertified_gap,
        rep.worst_duality_gap,
        rep.worst_quality_gap
    );
    if rep.ok() {
        Ok(summary)
    } else {
        Err(Failure {
            code: EXIT_TOLERANCE,
            message: format!("{summary}\n{}", rep.failures.join("\n")),
        })
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: format!("csv error: {e}"),
        }
    }
}

/// Rows rendered with the experiment CSV header.
pub fn rows_to_csv(rows: &[Row]) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(buf)
}
