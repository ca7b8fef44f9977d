//! Command-line front end: experiment commands, training commands, replay
//! and the play server.
//!
//! Exit codes are 0 on success, 2 for usage errors and 3 for runtime errors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use infochess_core::{replay, GameConfig, Team};
use serde::{Deserialize, Serialize};

use crate::agents::rl::{train_rl, RlTrainConfig};
use crate::agents::{AgentFactory, AgentKind, AgentSpec};
use crate::beliefs::{generate_training_games, train_belief_models, BeliefModel, BeliefTrainingConfig, Dataset};
use crate::harness::output::{matchup_rows, win_rows, write_csv, RecordsError};
use crate::harness::{
    default_curve_matchups, read_records, run_matchup_matrix, run_movement_allocation, run_per_turn_curves, write_records, RecordHeader,
};
use crate::service::{serve, ServiceConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Parser)]
#[command(name = "infochess", version, about = "InfoChess experiments, training and play server")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON experiment configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Experiment seed (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of games (per cell, per matchup or per agent, by command).
    #[arg(long, global = true)]
    pub games: Option<usize>,
    /// Format of aggregate tables; game records are always JSONL.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Trained belief model file.
    #[arg(long, global = true)]
    pub belief_model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pairwise matchup matrix with raw score pairs and win percentages.
    Simulate {
        /// Comma-separated agent specs.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<AgentSpec>,
    },
    /// Per-turn metric curves.
    Curves {
        /// A matchup as `agent_a,agent_b`; repeatable.
        #[arg(long = "matchup")]
        matchups: Vec<String>,
        /// Agents paired with VisMax (and `--rl`) when no matchup is given.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<AgentSpec>,
        /// RL checkpoint to include in the default matchups.
        #[arg(long)]
        rl: Option<PathBuf>,
    },
    /// Non-king movement allocation by piece kind.
    Movement {
        #[arg(long, value_delimiter = ',')]
        agents: Vec<AgentSpec>,
    },
    /// Generates belief-model training data.
    GenData,
    /// Trains the belief model.
    TrainBelief {
        /// Dataset JSONL; generated on the fly when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Trains the RL move policy on top of a belief model.
    TrainRl {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Replays a records file and prints each game's final scores.
    Replay { records: PathBuf },
    /// Runs the play server.
    Serve {
        /// Listen address (default 127.0.0.1:8080).
        #[arg(long)]
        addr: Option<String>,
        /// Withhold per-turn scores until the game ends.
        #[arg(long)]
        blind: bool,
        /// Seconds of inactivity before a session expires (default 1800).
        #[arg(long)]
        idle_timeout_secs: Option<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Curves { .. } => "curves",
            Command::Movement { .. } => "movement",
            Command::GenData => "gen-data",
            Command::TrainBelief { .. } => "train-belief",
            Command::TrainRl { .. } => "train-rl",
            Command::Replay { .. } => "replay",
            Command::Serve { .. } => "serve",
        }
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub games: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub belief_model: Option<PathBuf>,
    pub agents: Option<Vec<AgentSpec>>,
    pub matchups: Option<Vec<(AgentSpec, AgentSpec)>>,
    pub game: GameConfig,
    pub belief_training: BeliefTrainingConfig,
    pub rl: Option<RlTrainConfig>,
    pub service: Option<ServiceConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_err(context: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { context: context.display().to_string(), source }
}

/// Settings after merging the config file with command-line flags.
#[derive(Debug, Clone, Serialize)]
struct Resolved {
    command: String,
    seed: u64,
    games: Option<usize>,
    out: PathBuf,
    format: Format,
    belief_model: Option<PathBuf>,
    config: ExperimentConfig,
}

impl Resolved {
    fn new(global: &GlobalArgs, command: &str) -> Result<Resolved, CliError> {
        let config = match &global.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        config.game.validate().map_err(|e| CliError::Usage(format!("game configuration: {e}")))?;
        Ok(Resolved {
            command: command.into(),
            seed: global.seed.or(config.seed).unwrap_or(0),
            games: global.games.or(config.games),
            out: global.out.clone().or(config.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            format: global.format.or(config.format).unwrap_or_default(),
            belief_model: global.belief_model.clone().or(config.belief_model.clone()),
            config,
        })
    }

    fn games(&self, default: usize) -> Result<usize, CliError> {
        match self.games.unwrap_or(default) {
            0 => Err(CliError::Usage("--games must be at least 1".into())),
            n => Ok(n),
        }
    }

    fn load_model(&self) -> Result<Option<Arc<BeliefModel>>, CliError> {
        self.belief_model
            .as_ref()
            .map(|p| BeliefModel::load(p).map(Arc::new).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))))
            .transpose()
    }

    fn require_model(&self) -> Result<Arc<BeliefModel>, CliError> {
        self.load_model()?.ok_or_else(|| CliError::Usage("this command needs --belief-model".into()))
    }

    fn factory(&self) -> Result<AgentFactory, CliError> {
        Ok(AgentFactory::new(self.load_model()?))
    }

    fn agents(&self, given: &[AgentSpec]) -> Vec<AgentSpec> {
        if !given.is_empty() {
            return given.to_vec();
        }
        self.config.agents.clone().unwrap_or_else(|| AgentKind::HEURISTICS.map(AgentSpec::Heuristic).to_vec())
    }

    /// Header whose hash covers everything but the output location.
    fn header(&self) -> RecordHeader {
        let mut hashed = self.clone();
        hashed.out = PathBuf::new();
        hashed.config.out = None;
        RecordHeader::for_config(&hashed)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let path = self.out.join(name);
        File::create(&path).map(BufWriter::new).map_err(io_err(&path))
    }

    /// Writes an aggregate table in the selected format.
    fn table<T: Serialize>(&self, stem: &str, rows: impl IntoIterator<Item = T>) -> Result<PathBuf, CliError> {
        let name = match self.format {
            Format::Csv => format!("{stem}.csv"),
            Format::Jsonl => format!("{stem}.jsonl"),
        };
        let mut w = self.create(&name)?;
        match self.format {
            Format::Csv => write_csv(&mut w, rows).map_err(runtime)?,
            Format::Jsonl => {
                for row in rows {
                    serde_json::to_writer(&mut w, &row).map_err(runtime)?;
                    w.write_all(b"\n").map_err(runtime)?;
                }
                w.flush().map_err(runtime)?;
            }
        }
        Ok(self.out.join(name))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(runtime)?;
        w.write_all(b"\n").map_err(runtime)?;
        w.flush().map_err(runtime)
    }
}

fn parse_matchup(s: &str) -> Result<(AgentSpec, AgentSpec), CliError> {
    let (a, b) = s.split_once(',').ok_or_else(|| CliError::Usage(format!("matchup {s:?} is not `agent_a,agent_b`")))?;
    let parse = |x: &str| x.parse::<AgentSpec>().map_err(|e| CliError::Usage(e.to_string()));
    Ok((parse(a)?, parse(b)?))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let r = Resolved::new(&cli.global, cli.command.name())?;
    let game = r.config.game.clone();
    match cli.command {
        Command::Simulate { agents } => {
            let agents = r.agents(&agents);
            let n = r.games(100)?;
            let mut factory = r.factory()?;
            let matrix = run_matchup_matrix(&agents, n, r.seed, &mut factory, &game).map_err(runtime)?;
            for (_, cell) in &matrix.cells {
                for (id, why) in &cell.invalid {
                    eprintln!("warning: {} vs {} game {id} aborted: {why}", cell.agent_a, cell.agent_b);
                }
            }
            r.table("matchups", matrix.cells.iter().flat_map(|(_, c)| matchup_rows(c)))?;
            let wins = r.table("win_matrix", win_rows(&matrix))?;
            let records = matrix.cells.iter().flat_map(|(_, c)| c.records());
            write_records(r.create("records.jsonl")?, &r.header(), records).map_err(runtime)?;
            println!("wrote {}", wins.display());
            for row in win_rows(&matrix) {
                println!("{:>16} vs {:<16} {:6.1}%", row.row_agent, row.column_agent, row.win_percent);
            }
        }
        Command::Curves { matchups, agents, rl } => {
            let mut list: Vec<(AgentSpec, AgentSpec)> = matchups.iter().map(|m| parse_matchup(m)).collect::<Result<_, _>>()?;
            if list.is_empty() {
                list = r.config.matchups.clone().unwrap_or_default();
            }
            if list.is_empty() {
                list = default_curve_matchups(&r.agents(&agents), rl.map(AgentSpec::Rl).as_ref());
            }
            let mut factory = r.factory()?;
            let curves = run_per_turn_curves(&list, r.games(250)?, r.seed, &mut factory, &game).map_err(runtime)?;
            let path = r.table("curves", &curves.rows)?;
            println!("wrote {} ({} rows)", path.display(), curves.rows.len());
        }
        Command::Movement { agents } => {
            let agents = r.agents(&agents);
            let mut factory = r.factory()?;
            let alloc = run_movement_allocation(&agents, r.games(1000)?, r.seed, &mut factory, &game).map_err(runtime)?;
            let path = r.table("movement", alloc.rows())?;
            println!("wrote {}", path.display());
            for row in alloc.rows() {
                println!("{:>20} {:<7} {:.3}", row.agent, row.piece_kind, row.fraction);
            }
        }
        Command::GenData => {
            let n = r.games(1000)?;
            let ds = generate_training_games(n as u64, r.seed, &game).map_err(runtime)?;
            ds.write_jsonl(r.create("dataset.jsonl")?).map_err(runtime)?;
            println!("wrote {} examples from {n} games", ds.example_count());
        }
        Command::TrainBelief { data, epochs } => {
            let ds = match data {
                Some(path) => {
                    let file = File::open(&path).map_err(io_err(&path))?;
                    Dataset::read_jsonl(BufReader::new(file)).map_err(runtime)?
                }
                None => generate_training_games(r.games(1000)? as u64, r.seed, &game).map_err(runtime)?,
            };
            let mut config = r.config.belief_training.clone();
            config.seed = r.seed;
            if let Some(e) = epochs {
                config.epochs = e;
            }
            let trained = train_belief_models(&ds, &config).map_err(runtime)?;
            let path = r.out.join("belief_model.bin");
            std::fs::create_dir_all(&r.out).map_err(io_err(&r.out))?;
            trained.model.save(&path).map_err(runtime)?;
            r.table("belief_training", &trained.epochs)?;
            if let Some(v) = &trained.validation {
                r.json("belief_validation.json", v)?;
                println!("validation oracle CE {:.4} vs uniform {:.4} (gain {:.4} nat)", v.model_ce, v.uniform_ce, v.gain());
            }
            println!("wrote {}", path.display());
        }
        Command::TrainRl { episodes } => {
            let model = r.require_model()?;
            let mut config = r.config.rl.clone().unwrap_or_default();
            config.seed = r.seed;
            config.game = game;
            if let Some(e) = episodes {
                config.episodes = e;
            }
            if let Some(n) = r.games {
                config.eval_games = n;
            }
            let out = train_rl(&config, model).map_err(runtime)?;
            std::fs::create_dir_all(&r.out).map_err(io_err(&r.out))?;
            let path = r.out.join("rl_policy.bin");
            out.policy.save(&path).map_err(runtime)?;
            r.table("rl_games", &out.games)?;
            r.table("rl_episodes", &out.episodes)?;
            r.json("rl_eval.json", &(out.eval_before, out.eval_after))?;
            if let (Some(b), Some(a)) = (out.eval_before, out.eval_after) {
                println!("win rate vs VisMax: {:.3} before, {:.3} after", b.win_rate(), a.win_rate());
            }
            println!("wrote {}", path.display());
        }
        Command::Replay { records } => {
            let file = File::open(&records).map_err(io_err(&records))?;
            let (_, games) = read_records(BufReader::new(file)).map_err(|e: RecordsError| runtime(e))?;
            for (i, record) in games.iter().enumerate() {
                let state = replay(record).map_err(|e| CliError::Runtime(format!("game {i}: {e}")))?;
                for team in Team::BOTH {
                    if state.score(team) != record.final_scores.get(team) {
                        return Err(CliError::Runtime(format!("game {i}: replayed {team} score differs from the file")));
                    }
                }
                println!("game {i}: white {} black {}", record.final_scores.white, record.final_scores.black);
            }
        }
        Command::Serve { addr, blind, idle_timeout_secs } => {
            let mut config = r.config.service.clone().unwrap_or_default();
            if let Some(a) = addr {
                config.addr = a;
            }
            config.blind |= blind;
            if let Some(t) = idle_timeout_secs {
                config.idle_timeout_secs = t;
            }
            config.game = r.config.game.clone();
            let factory = r.factory()?;
            let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
            rt.block_on(serve(config, factory)).map_err(runtime)?;
        }
    }
    Ok(())
}
