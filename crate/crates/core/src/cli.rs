//! The `run` command: resolves an experiment configuration from defaults, a
//! TOML file, the `CFFG_SEED` variable and flags (in that order of
//! precedence), runs it and writes a results table, a manifest and plot data.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::engine::{enumerate_policies, EngineConfig};
use crate::error::{Error, Result};
use crate::graph::StateMessageRule;
use crate::tmaze::{
    run_aggregate, run_bargaining, run_experiment, run_goal_learning, AgentKind, BargainRecord,
    Outcome, Position, TmazeSettings, TrialRecord, HORIZON, OFFER_LEVELS, OUTCOMES, POSITIONS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Single,
    Aggregate,
    Goals,
    Bargain,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Single => "single",
            Experiment::Aggregate => "aggregate",
            Experiment::Goals => "goals",
            Experiment::Bargain => "bargain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Gfe,
    Bfe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Direct,
    Indirect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Trials S per run.
    pub trials: usize,
    /// Runs R (aggregate only).
    pub runs: usize,
    pub alpha: f64,
    pub utility: f64,
    pub epsilon: f64,
    pub agent: AgentKind,
    pub sweeps: usize,
    pub burn_in: usize,
    pub importance_samples: usize,
    pub state_rule: StateMessageRule,
    /// Offer levels (bargain only).
    pub levels: Vec<f64>,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            experiment: Experiment::Single,
            trials: 100,
            runs: 20,
            alpha: 0.9,
            utility: 2.0,
            epsilon: 0.1,
            agent: AgentKind::Gfe,
            sweeps: engine.sweeps,
            burn_in: engine.burn_in,
            importance_samples: engine.importance_samples,
            state_rule: engine.state_rule,
            levels: OFFER_LEVELS.to_vec(),
            seed: 42,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            importance_samples: self.importance_samples,
            state_rule: self.state_rule,
            ..EngineConfig::default()
        }
    }

    pub fn settings(&self) -> TmazeSettings {
        TmazeSettings {
            alpha: self.alpha,
            utility: self.utility,
            epsilon: self.epsilon,
            engine: self.engine(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::Config(
                "offer levels must be non-empty and lie in (0, 1]".into(),
            ));
        }
        self.settings().validate()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cffg",
    version,
    about = "Generalised free energy agents on the T-maze"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its artifacts.
    Run(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub utility: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub agent: Option<AgentArg>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub importance_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub state_rule: Option<RuleArg>,
    /// Comma-separated offer levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, env = "CFFG_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fill the timing column (makes outputs run-dependent).
    #[arg(long)]
    pub timing: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_toml(
                &fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            )?,
            None => ExperimentConfig::default(),
        };
        macro_rules! overlay {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        overlay!(
            experiment,
            trials,
            runs,
            alpha,
            utility,
            epsilon,
            sweeps,
            burn_in,
            importance_samples,
            levels,
            seed,
            output
        );
        if let Some(a) = self.agent {
            c.agent = match a {
                AgentArg::Gfe => AgentKind::Gfe,
                AgentArg::Bfe => AgentKind::Bfe,
            };
        }
        if let Some(r) = self.state_rule {
            c.state_rule = match r {
                RuleArg::Direct => StateMessageRule::Direct,
                RuleArg::Indirect => StateMessageRule::Indirect,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

/// One row of `results.csv`. The schema is shared by all experiments;
/// fields an experiment does not produce are left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub run: usize,
    pub trial: usize,
    pub agent: String,
    pub reward_arm: String,
    pub action_1: String,
    pub action_2: String,
    pub outcome_1: String,
    pub outcome_2: String,
    pub win: bool,
    pub gfe_1: Option<f64>,
    pub gfe_2: Option<f64>,
    pub f_learn: Option<f64>,
    pub offer: Option<f64>,
    pub accepted: Option<bool>,
    pub timing_ms: Option<f64>,
}

impl ResultRow {
    fn from_trial(
        experiment: Experiment,
        run: usize,
        agent: &str,
        r: &TrialRecord,
        timing: bool,
    ) -> Self {
        let action = |t: usize| {
            r.actions
                .get(t)
                .map(|p| p.label().to_string())
                .unwrap_or_default()
        };
        let outcome = |t: usize| r.observations.get(t).map(|o| o.label()).unwrap_or_default();
        Self {
            experiment: experiment.label().into(),
            run,
            trial: r.trial,
            agent: agent.into(),
            reward_arm: r.reward_arm.clone(),
            action_1: action(0),
            action_2: action(1),
            outcome_1: outcome(0),
            outcome_2: outcome(1),
            win: r.win,
            gfe_1: r.min_gfe.first().copied(),
            gfe_2: r.min_gfe.get(1).copied(),
            f_learn: r.min_gfe.get(HORIZON).copied(),
            offer: None,
            accepted: None,
            timing_ms: timing.then_some(r.elapsed_ms),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub status: String,
    pub error: Option<String>,
    pub package: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rows: usize,
    pub files: Vec<String>,
}

/// Collects rows and plot tables, then writes them in a fixed order.
struct Artifacts {
    dir: PathBuf,
    rows: Vec<ResultRow>,
    tables: Vec<(String, Vec<String>, Vec<Vec<String>>)>,
}

impl Artifacts {
    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        self.tables.push((
            name.into(),
            header.iter().map(|s| s.to_string()).collect(),
            rows,
        ));
    }

    fn write(self, config: &ExperimentConfig, failure: Option<&Error>) -> Result<Manifest> {
        fs::create_dir_all(&self.dir)?;
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        let mut files = vec!["results.csv".to_string()];
        let mut w = csv::Writer::from_path(self.dir.join("results.csv")).map_err(csv_err)?;
        if self.rows.is_empty() {
            w.serialize(ResultRow::default()).map_err(csv_err)?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        drop(w);
        if self.rows.is_empty() {
            // header only
            let text = fs::read_to_string(self.dir.join("results.csv"))?;
            let header = text.lines().next().unwrap_or_default();
            fs::write(self.dir.join("results.csv"), format!("{header}\n"))?;
        }
        for (name, header, rows) in &self.tables {
            let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(csv_err)?;
            w.write_record(header).map_err(csv_err)?;
            for r in rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
            files.push(name.clone());
        }
        files.push("manifest.json".into());
        let manifest = Manifest {
            status: if failure.is_some() {
                "failed"
            } else {
                "complete"
            }
            .into(),
            error: failure.map(|e| e.to_string()),
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seed: config.seed,
            rows: self.rows.len(),
            files,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), json + "\n")?;
        Ok(manifest)
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn policy_label(controls: &[usize]) -> String {
    controls
        .iter()
        .map(|&u| Position::ALL[u].label())
        .collect::<Vec<_>>()
        .join("-")
}

fn observation_label(i: usize) -> String {
    format!(
        "{}@{}",
        Outcome::ALL[i % OUTCOMES].label(),
        Position::ALL[i / OUTCOMES].label()
    )
}

/// Scores of every policy at every decision time.
fn gfe_trace_rows(run: usize, records: &[TrialRecord]) -> Vec<Vec<String>> {
    let mut out = vec![];
    for r in records {
        for (t, scores) in r.policy_scores.iter().enumerate() {
            let policies = enumerate_policies(&vec![POSITIONS; HORIZON - t]);
            for (p, s) in policies.iter().zip(scores) {
                out.push(vec![
                    run.to_string(),
                    r.trial.to_string(),
                    (t + 1).to_string(),
                    policy_label(&p.controls),
                    num(*s),
                ]);
            }
        }
    }
    out
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<String>> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = vec![observation_label(i)];
            r.extend(row.iter().map(|&v| num(v)));
            r
        })
        .collect()
}

fn state_header() -> Vec<String> {
    let mut h = vec!["observation".to_string()];
    for p in Position::ALL {
        for arm in ["RL", "RR"] {
            h.push(format!("{}/{arm}", p.label()));
        }
    }
    h
}

const TRACE_HEADER: [&str; 5] = ["run", "trial", "time", "policy", "gfe_bits"];

fn single(config: &ExperimentConfig, art: &mut Artifacts, timing: bool) -> Option<Error> {
    let (records, reinforced, err) =
        match run_experiment(&config.settings(), config.trials, config.agent, config.seed) {
            Ok(r) => {
                let d = r.reinforced();
                (r.records, Some(d), None)
            }
            Err((records, e)) => (records, None, Some(e)),
        };
    let agent = config.agent.label();
    art.rows.extend(
        records
            .iter()
            .map(|r| ResultRow::from_trial(Experiment::Single, 1, agent, r, timing)),
    );
    art.table("gfe_traces.csv", &TRACE_HEADER, gfe_trace_rows(1, &records));
    if let Some(d) = reinforced {
        let header = state_header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        art.table("reinforced_a.csv", &header, matrix_rows(&d));
    }
    err
}

fn aggregate(config: &ExperimentConfig, art: &mut Artifacts, timing: bool) -> Option<Error> {
    let (res, err) =
        match run_aggregate(&config.settings(), config.runs, config.trials, config.seed) {
            Ok(r) => (r, None),
            Err((r, e)) => (r, Some(e)),
        };
    for (i, (learner, ideal)) in res.learner.iter().zip(&res.ideal).enumerate() {
        art.rows.extend(
            learner
                .iter()
                .map(|r| ResultRow::from_trial(Experiment::Aggregate, i + 1, "gfe", r, timing)),
        );
        art.rows.extend(
            ideal
                .iter()
                .map(|r| ResultRow::from_trial(Experiment::Aggregate, i + 1, "ideal", r, timing)),
        );
    }
    let (wins, ideal_wins) = (res.wins_per_run(), res.ideal_wins_per_run());
    let hist = (0..=config.trials)
        .map(|k| {
            vec![
                k.to_string(),
                wins.iter().filter(|&&w| w == k).count().to_string(),
                ideal_wins.iter().filter(|&&w| w == k).count().to_string(),
            ]
        })
        .collect();
    art.table("win_histogram.csv", &["wins", "runs", "ideal_runs"], hist);
    let mean = res
        .win_mean()
        .iter()
        .zip(res.ideal_win_mean())
        .enumerate()
        .map(|(s, (m, i))| vec![(s + 1).to_string(), num(*m), num(i)])
        .collect();
    art.table(
        "win_mean.csv",
        &["trial", "win_mean", "ideal_win_mean"],
        mean,
    );
    err
}

fn goals(config: &ExperimentConfig, art: &mut Artifacts, timing: bool) -> Option<Error> {
    let (records, reinforced, err) =
        match run_goal_learning(&config.settings(), config.trials, config.seed) {
            Ok(r) => (r.records, r.reinforced, None),
            Err((records, e)) => (records, vec![], Some(e)),
        };
    art.rows.extend(
        records
            .iter()
            .map(|r| ResultRow::from_trial(Experiment::Goals, 1, "gfe", r, timing)),
    );
    art.table("gfe_traces.csv", &TRACE_HEADER, gfe_trace_rows(1, &records));
    let mut rows = vec![];
    for (s, per_time) in reinforced.iter().enumerate() {
        for (k, diff) in per_time.iter().enumerate() {
            for (i, v) in diff.iter().enumerate() {
                rows.push(vec![
                    (s + 1).to_string(),
                    (k + 1).to_string(),
                    observation_label(i),
                    num(*v),
                ]);
            }
        }
    }
    art.table(
        "reinforced_c.csv",
        &["trial", "time", "observation", "value"],
        rows,
    );
    err
}

fn bargain(config: &ExperimentConfig, art: &mut Artifacts, timing: bool) -> Option<Error> {
    let (records, err): (Vec<BargainRecord>, _) = match run_bargaining(
        &config.levels,
        config.utility,
        config.epsilon,
        config.engine(),
        config.trials,
        config.seed,
    ) {
        Ok(r) => (r.records, None),
        Err((records, e)) => (records, Some(e)),
    };
    let mut grid = vec![];
    for r in &records {
        let mut row = ResultRow::from_trial(Experiment::Bargain, 1, "buyer", &r.buyer, timing);
        row.offer = Some(r.state.offer);
        row.accepted = Some(r.state.accepted);
        art.rows.push(row);
        for (l, (&level, &g)) in config.levels.iter().zip(&r.offer_gfe).enumerate() {
            let offered = l == r.state.offer_index;
            grid.push(vec![
                r.trial.to_string(),
                l.to_string(),
                num(level),
                num(g),
                offered.to_string(),
                if offered {
                    r.state.accepted.to_string()
                } else {
                    String::new()
                },
            ]);
        }
    }
    art.table(
        "offer_grid.csv",
        &["trial", "level", "offer", "gfe_bits", "offered", "accepted"],
        grid,
    );
    err
}

/// Runs a resolved configuration and writes its artifacts into
/// `config.output`. On an engine error the partial results are still written,
/// the manifest is marked failed, and the error is returned.
pub fn run(config: &ExperimentConfig, timing: bool) -> Result<Manifest> {
    config.validate()?;
    let mut art = Artifacts {
        dir: config.output.clone(),
        rows: vec![],
        tables: vec![],
    };
    let failure = match config.experiment {
        Experiment::Single => single(config, &mut art, timing),
        Experiment::Aggregate => aggregate(config, &mut art, timing),
        Experiment::Goals => goals(config, &mut art, timing),
        Experiment::Bargain => bargain(config, &mut art, timing),
    };
    let manifest = art.write(config, failure.as_ref())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => {
            let config = match args.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            match run(&config, args.timing) {
                Ok(m) => {
                    println!("{} rows written to {}", m.rows, config.output.display());
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    eprintln!("partial results in {}", config.output.display());
                    1
                }
            }
        }
    }
}
