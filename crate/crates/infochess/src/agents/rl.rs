//! Move-scoring policy on top of the frozen belief-model trunk, trained with
//! REINFORCE on per-turn score differentials.
//!
//! Each candidate move is described by the trunk representation of the
//! player's history concatenated with an 8-value move vector: canonical
//! `(from file, from rank, to file, to rank)` scaled to `[0, 1]`, then a
//! one-hot over pawn, rook, bishop, king. One scalar MLP scores candidates
//! for both movement phases; a softmax over a phase's legal moves gives the
//! sampling distribution.

use std::path::Path;
use std::sync::Arc;

use infochess_core::encode::canonical_square;
use infochess_core::rng::{derive_seed, rng_from_seed, stream_rng, GameRng, Stream};
use infochess_core::{Belief, GameConfig, MoveAction, PlayerObservation, Team};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heuristic::learned_or_seen;
use super::play::{play_game, PlayError, PlayedGame};
use super::{ensure_legal, Agent, AgentError, AgentKind, Blueprint};
use crate::beliefs::BeliefModel;
use crate::nn::bundle::{check_shapes, read_bundle, write_bundle, BundleError, Manifest};
use crate::nn::mlp::ScalarMlp;
use crate::nn::transformer::{TensorSpec, TrunkCache};
use crate::nn::Adam;

pub const MOVE_FEATURES: usize = 8;
const BUNDLE_KIND: &str = "rl-policy";

/// The 8-value description of a move in `viewer`'s canonical frame.
pub fn move_vector(mv: &MoveAction, viewer: Team, board_size: u8) -> [f32; MOVE_FEATURES] {
    let mut v = [0.0f32; MOVE_FEATURES];
    if let MoveAction::Move { piece, from, to } = *mv {
        let scale = (board_size.max(2) - 1) as f32;
        let (f, t) = (canonical_square(from, viewer, board_size), canonical_square(to, viewer, board_size));
        v[0] = f.file() as f32 / scale;
        v[1] = f.rank() as f32 / scale;
        v[2] = t.file() as f32 / scale;
        v[3] = t.rank() as f32 / scale;
        v[4 + piece.index()] = 1.0;
    }
    v
}

#[derive(Debug, thiserror::Error)]
pub enum RlCheckpointError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("checkpoint was trained on trunk {expected}, but the loaded belief model has trunk {found}")]
    TrunkMismatch { expected: String, found: String },
    #[error("checkpoint metadata is malformed: {0}")]
    Meta(String),
}

/// Scorer parameters plus the frozen belief model they were trained against.
#[derive(Debug, Clone)]
pub struct RlPolicy {
    pub model: Arc<BeliefModel>,
    pub scorer: ScalarMlp,
    /// Training configuration echoed into checkpoints.
    pub config_echo: serde_json::Value,
}

impl RlPolicy {
    pub fn init(model: Arc<BeliefModel>, hidden: usize, seed: u64) -> RlPolicy {
        let input = model.dims().width + MOVE_FEATURES;
        RlPolicy { model, scorer: ScalarMlp::init(input, hidden, seed), config_echo: serde_json::Value::Null }
    }

    /// Row-major scorer inputs, one row per move.
    pub fn features(&self, representation: &[f32], viewer: Team, board_size: u8, moves: &[MoveAction]) -> Vec<f32> {
        let mut x = Vec::with_capacity(moves.len() * self.scorer.input);
        for mv in moves {
            x.extend_from_slice(representation);
            x.extend_from_slice(&move_vector(mv, viewer, board_size));
        }
        x
    }

    /// Sampling probabilities over `moves`.
    pub fn distribution(&self, representation: &[f32], viewer: Team, board_size: u8, moves: &[MoveAction]) -> Vec<f64> {
        let x = self.features(representation, viewer, board_size, moves);
        softmax(&self.scorer.forward(&x, moves.len()).scores)
    }

    fn tensor_specs(&self) -> Vec<TensorSpec> {
        let (i, h) = (self.scorer.input, self.scorer.hidden);
        vec![
            TensorSpec { name: "scorer.1.w".into(), shape: vec![h, i], offset: 0 },
            TensorSpec { name: "scorer.1.b".into(), shape: vec![h], offset: h * i },
            TensorSpec { name: "scorer.2.w".into(), shape: vec![h], offset: h * i + h },
            TensorSpec { name: "scorer.2.b".into(), shape: vec![1], offset: h * i + 2 * h },
        ]
    }

    pub fn save(&self, path: &Path) -> Result<(), RlCheckpointError> {
        let manifest = Manifest {
            kind: BUNDLE_KIND.into(),
            engine_version: infochess_core::ENGINE_VERSION.into(),
            tensors: self.tensor_specs(),
            meta: serde_json::json!({
                "trunk_sha256": self.model.trunk_hash(),
                "input": self.scorer.input,
                "hidden": self.scorer.hidden,
                "config": self.config_echo,
            }),
        };
        let file = std::fs::File::create(path).map_err(BundleError::Io)?;
        write_bundle(std::io::BufWriter::new(file), &manifest, &self.scorer.data)?;
        Ok(())
    }

    /// Loads a checkpoint, refusing one trained against a different trunk.
    pub fn load(path: &Path, model: Arc<BeliefModel>) -> Result<RlPolicy, RlCheckpointError> {
        let file = std::fs::File::open(path).map_err(BundleError::Io)?;
        let (manifest, data) = read_bundle(std::io::BufReader::new(file), BUNDLE_KIND)?;
        let meta = &manifest.meta;
        let field = |k: &str| meta.get(k).ok_or_else(|| RlCheckpointError::Meta(format!("missing {k}")));
        let expected = field("trunk_sha256")?.as_str().unwrap_or_default().to_string();
        let found = model.trunk_hash();
        if expected != found {
            return Err(RlCheckpointError::TrunkMismatch { expected, found });
        }
        let input = field("input")?.as_u64().ok_or_else(|| RlCheckpointError::Meta("input".into()))? as usize;
        let hidden = field("hidden")?.as_u64().ok_or_else(|| RlCheckpointError::Meta("hidden".into()))? as usize;
        if input != model.dims().width + MOVE_FEATURES {
            return Err(RlCheckpointError::Meta(format!("scorer input {input} does not fit the trunk width")));
        }
        let policy =
            RlPolicy { model, scorer: ScalarMlp { input, hidden, data }, config_echo: meta.get("config").cloned().unwrap_or_default() };
        check_shapes(&policy.tensor_specs(), &manifest.tensors)?;
        Ok(policy)
    }
}

fn softmax(scores: &[f32]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = scores.iter().map(|&s| (s as f64 - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Inverse-CDF sample from `probs`.
fn sample_index(probs: &[f64], rng: &mut GameRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One sampled decision, kept for the policy-gradient update.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub features: Vec<f32>,
    pub rows: usize,
    pub chosen: usize,
    pub probs: Vec<f64>,
}

impl StepTrace {
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Both movement decisions of one half-turn; forced single options are not traced.
#[derive(Debug, Clone, Default)]
pub struct HalfTurnTrace {
    pub non_king: Option<StepTrace>,
    pub king: Option<StepTrace>,
}

/// Agent that samples moves from an [`RlPolicy`] and submits the learned belief.
#[derive(Debug, Clone)]
pub struct RlAgent {
    policy: Arc<RlPolicy>,
    label: String,
    team: Option<Team>,
    cache: TrunkCache,
    representation: Option<Vec<f32>>,
    tracing: bool,
    traces: Vec<HalfTurnTrace>,
}

impl RlAgent {
    pub fn new(policy: Arc<RlPolicy>, label: String) -> RlAgent {
        let cache = policy.model.new_cache();
        RlAgent { policy, label, team: None, cache, representation: None, tracing: false, traces: Vec::new() }
    }

    /// Records every sampled decision for training.
    pub fn with_tracing(mut self) -> RlAgent {
        self.tracing = true;
        self
    }

    pub fn take_traces(&mut self) -> Vec<HalfTurnTrace> {
        std::mem::take(&mut self.traces)
    }

    fn decide(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng, king: bool) -> Result<MoveAction, AgentError> {
        let chosen = match legal.len() {
            0 => return Err(AgentError::NoMoves),
            1 => legal[0],
            n => {
                let z = self.representation.as_deref().ok_or(AgentError::NotStarted)?;
                let features = self.policy.features(z, obs.viewer, obs.board_size, legal);
                let probs = softmax(&self.policy.scorer.forward(&features, n).scores);
                let i = sample_index(&probs, rng);
                if self.tracing {
                    let trace = StepTrace { features, rows: n, chosen: i, probs };
                    let slot = self.traces.last_mut().ok_or(AgentError::NotStarted)?;
                    if king {
                        slot.king = Some(trace);
                    } else {
                        slot.non_king = Some(trace);
                    }
                }
                legal[i]
            }
        };
        ensure_legal(chosen, legal)
    }
}

impl Agent for RlAgent {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn begin(&mut self, team: Team, initial: &PlayerObservation) -> Result<(), AgentError> {
        self.team = Some(team);
        self.cache = self.policy.model.new_cache();
        let out = self.policy.model.step(&self.cache, initial)?;
        self.policy.model.commit(&mut self.cache, &out);
        self.representation = None;
        self.traces.clear();
        Ok(())
    }

    fn start_half_turn(&mut self, obs: &PlayerObservation) -> Result<Belief, AgentError> {
        self.team.ok_or(AgentError::NotStarted)?;
        let out = self.policy.model.step(&self.cache, obs)?;
        let prior = learned_or_seen(&self.policy.model, &out.representation, obs)?;
        self.representation = Some(out.representation);
        if self.tracing {
            self.traces.push(HalfTurnTrace::default());
        }
        Ok(prior)
    }

    fn choose_non_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        self.decide(obs, legal, rng, false)
    }

    fn choose_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        self.decide(obs, legal, rng, true)
    }

    fn infer(&mut self, obs: &PlayerObservation, _rng: &mut GameRng) -> Result<Belief, AgentError> {
        let out = self.policy.model.step(&self.cache, obs)?;
        self.policy.model.commit(&mut self.cache, &out);
        self.representation = None;
        learned_or_seen(&self.policy.model, &out.representation, obs)
    }
}

/// Opponent slot of the training mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Opponent {
    SelfPlay,
    Random,
    VisMax,
    BeliefMax,
    HidingVisMax,
    HidingBeliefMax,
}

impl Opponent {
    pub fn name(self) -> &'static str {
        match self {
            Opponent::SelfPlay => "self",
            Opponent::Random => "random",
            Opponent::VisMax => "vismax",
            Opponent::BeliefMax => "beliefmax",
            Opponent::HidingVisMax => "hidingvismax",
            Opponent::HidingBeliefMax => "hidingbeliefmax",
        }
    }

    fn kind(self) -> Option<AgentKind> {
        match self {
            Opponent::SelfPlay => None,
            Opponent::Random => Some(AgentKind::Random),
            Opponent::VisMax => Some(AgentKind::VisMax),
            Opponent::BeliefMax => Some(AgentKind::BeliefMax),
            Opponent::HidingVisMax => Some(AgentKind::HidingVisMax),
            Opponent::HidingBeliefMax => Some(AgentKind::HidingBeliefMax),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlTrainConfig {
    /// Number of policy updates.
    pub episodes: usize,
    /// Games played per episode.
    pub batch_games: usize,
    pub mixture: Vec<(Opponent, f64)>,
    pub lr: f32,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Games against VisMax played before and after training for evaluation.
    pub eval_games: usize,
    pub game: GameConfig,
}

impl Default for RlTrainConfig {
    fn default() -> Self {
        RlTrainConfig {
            episodes: 2000,
            batch_games: 10,
            mixture: vec![
                (Opponent::SelfPlay, 0.30),
                (Opponent::Random, 0.05),
                (Opponent::VisMax, 0.15),
                (Opponent::BeliefMax, 0.15),
                (Opponent::HidingVisMax, 0.15),
                (Opponent::HidingBeliefMax, 0.20),
            ],
            lr: 3e-4,
            entropy_start: 5e-2,
            entropy_end: 5e-3,
            hidden: 128,
            seed: 0,
            eval_games: 200,
            game: GameConfig::default(),
        }
    }
}

impl RlTrainConfig {
    /// Entropy-bonus coefficient for a 0-based episode index.
    pub fn entropy_coef(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.entropy_start;
        }
        let frac = episode.min(self.episodes - 1) as f64 / (self.episodes - 1) as f64;
        self.entropy_start + (self.entropy_end - self.entropy_start) * frac
    }

    pub fn validate(&self) -> Result<(), RlTrainError> {
        let total: f64 = self.mixture.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 || self.mixture.iter().any(|(_, w)| *w < 0.0) {
            return Err(RlTrainError::Config(format!("mixture weights must be non-negative and sum to 1, got {total}")));
        }
        if self.batch_games == 0 || self.episodes == 0 {
            return Err(RlTrainError::Config("episodes and batch_games must be positive".into()));
        }
        Ok(())
    }

    fn sample_opponent(&self, rng: &mut GameRng) -> Opponent {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (o, w) in &self.mixture {
            acc += w;
            if u < acc {
                return *o;
            }
        }
        self.mixture.last().map(|(o, _)| *o).unwrap_or(Opponent::SelfPlay)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RlTrainError {
    #[error("invalid RL configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error("non-finite policy loss at episode {episode}")]
    NonFinite { episode: usize },
}

/// Outcome of one training game from the learner's side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameLog {
    /// Running index over all training games.
    pub game: usize,
    pub episode: usize,
    pub opponent: Opponent,
    pub team: Team,
    pub own_score: f64,
    pub opponent_score: f64,
}

impl GameLog {
    pub fn won(&self) -> bool {
        self.own_score > self.opponent_score
    }
}

/// One policy update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub opponent: Opponent,
    pub entropy_coef: f64,
    pub loss: f64,
    pub mean_entropy: f64,
    pub mean_score_diff: f64,
}

/// Win/draw/loss summary of an evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub games: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    pub mean_own: f64,
    pub mean_opponent: f64,
}

impl EvalSummary {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.games.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct RlTrainOutput {
    pub policy: RlPolicy,
    pub games: Vec<GameLog>,
    pub episodes: Vec<EpisodeLog>,
    pub eval_before: Option<EvalSummary>,
    pub eval_after: Option<EvalSummary>,
}

/// Win rate against `opponent` over trailing windows of `window` games,
/// reported at each such game (by running index) once the window is full.
pub fn trailing_win_rate(logs: &[GameLog], opponent: Opponent, window: usize) -> Vec<(usize, f64)> {
    let games: Vec<&GameLog> = logs.iter().filter(|l| l.opponent == opponent).collect();
    if window == 0 || games.len() < window {
        return Vec::new();
    }
    (window..=games.len())
        .map(|end| {
            let wins = games[end - window..end].iter().filter(|l| l.won()).count();
            (games[end - 1].game, wins as f64 / window as f64)
        })
        .collect()
}

fn learner_team(game_seed: u64) -> Team {
    if stream_rng(game_seed, Stream::ColorAssignment).gen::<bool>() {
        Team::White
    } else {
        Team::Black
    }
}

struct Trajectory {
    traces: Vec<HalfTurnTrace>,
    rewards: Vec<f64>,
    coef: f64,
}

/// Per-side-turn score differential `own(t) - opponent(t)` for `team`.
fn rewards(game: &PlayedGame, team: Team) -> Vec<f64> {
    let own: Vec<f64> = game.record.turns.iter().filter(|t| t.team == team).map(|t| t.score_delta).collect();
    let opp: Vec<f64> = game.record.turns.iter().filter(|t| t.team != team).map(|t| t.score_delta).collect();
    own.iter().zip(&opp).map(|(a, b)| a - b).collect()
}

/// Plays `n` games of `policy` against `opponent`, colors drawn per game.
pub fn evaluate_policy(
    policy: &Arc<RlPolicy>,
    opponent: &Blueprint,
    n: usize,
    seed: u64,
    game: &GameConfig,
) -> Result<EvalSummary, RlTrainError> {
    let results: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let game_seed = derive_seed(seed, i as u64);
            let cfg = game.clone().with_seed(game_seed);
            let team = learner_team(game_seed);
            let mut me = RlAgent::new(policy.clone(), "rl".into());
            let mut other = opponent.build();
            let played = match team {
                Team::White => play_game(&cfg, &mut me, other.as_mut())?,
                Team::Black => play_game(&cfg, other.as_mut(), &mut me)?,
            };
            let f = played.record.final_scores;
            Ok((f.get(team), f.get(team.opponent())))
        })
        .collect::<Result<_, RlTrainError>>()?;
    let mut s = EvalSummary { games: n, wins: 0, draws: 0, losses: 0, mean_own: 0.0, mean_opponent: 0.0 };
    for (own, opp) in &results {
        match own.partial_cmp(opp) {
            Some(std::cmp::Ordering::Greater) => s.wins += 1,
            Some(std::cmp::Ordering::Less) => s.losses += 1,
            _ => s.draws += 1,
        }
        s.mean_own += own / n.max(1) as f64;
        s.mean_opponent += opp / n.max(1) as f64;
    }
    Ok(s)
}

/// REINFORCE with an entropy bonus. The belief model (and so the trunk) is
/// only read; the scorer is the sole trained component.
pub fn train_rl(config: &RlTrainConfig, model: Arc<BeliefModel>) -> Result<RlTrainOutput, RlTrainError> {
    config.validate()?;
    let mut policy = RlPolicy::init(model.clone(), config.hidden, derive_seed(config.seed, 0x5C0E));
    policy.config_echo = serde_json::to_value(config).unwrap_or_default();
    let heuristic = |kind: AgentKind| super::compose_heuristic(kind, Some(&model));
    let vismax = heuristic(AgentKind::VisMax)?;
    let eval_seed = derive_seed(config.seed, 0xE7A1);
    let eval_before = if config.eval_games > 0 {
        Some(evaluate_policy(&Arc::new(policy.clone()), &vismax, config.eval_games, eval_seed, &config.game)?)
    } else {
        None
    };

    let mut adam = Adam::new(policy.scorer.len(), config.lr);
    let mut games_log = Vec::with_capacity(config.episodes * config.batch_games);
    let mut episodes = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let first = episode * config.batch_games;
        let last = first + config.batch_games;
        let coef = config.entropy_coef(episode);
        let mut batch_rng = rng_from_seed(derive_seed(config.seed, 0xBA7C_0000 + episode as u64));
        let opponent = config.sample_opponent(&mut batch_rng);
        let snapshot = Arc::new(policy.clone());
        let opponent_blueprint = match opponent.kind() {
            Some(kind) => Some(heuristic(kind)?),
            None => None,
        };

        let games: Vec<(Vec<Trajectory>, GameLog)> = (first..last)
            .into_par_iter()
            .map(|game| {
                let game_seed = derive_seed(config.seed, (1u64 << 32) | game as u64);
                let cfg = config.game.clone().with_seed(game_seed);
                let team = learner_team(game_seed);
                let mut me = RlAgent::new(snapshot.clone(), "rl".into()).with_tracing();
                let mut trajectories = Vec::new();
                let played = match &opponent_blueprint {
                    Some(bp) => {
                        let mut other = bp.build();
                        match team {
                            Team::White => play_game(&cfg, &mut me, other.as_mut())?,
                            Team::Black => play_game(&cfg, other.as_mut(), &mut me)?,
                        }
                    }
                    None => {
                        let mut twin = RlAgent::new(snapshot.clone(), "rl".into()).with_tracing();
                        let played = match team {
                            Team::White => play_game(&cfg, &mut me, &mut twin)?,
                            Team::Black => play_game(&cfg, &mut twin, &mut me)?,
                        };
                        let other = team.opponent();
                        trajectories.push(Trajectory { traces: twin.take_traces(), rewards: rewards(&played, other), coef });
                        played
                    }
                };
                trajectories.insert(0, Trajectory { traces: me.take_traces(), rewards: rewards(&played, team), coef });
                let f = played.record.final_scores;
                let log = GameLog { game, episode, opponent, team, own_score: f.get(team), opponent_score: f.get(team.opponent()) };
                Ok((trajectories, log))
            })
            .collect::<Result<_, RlTrainError>>()?;

        let trajectories: Vec<&Trajectory> = games.iter().flat_map(|(t, _)| t.iter()).collect();
        let stats = policy_gradient(&policy.scorer, &trajectories);
        if !stats.loss.is_finite() || stats.grad.iter().any(|g| !g.is_finite()) {
            return Err(RlTrainError::NonFinite { episode });
        }
        adam.step(&mut policy.scorer.data, &stats.grad);
        let diffs: Vec<f64> = games.iter().map(|(_, l)| l.own_score - l.opponent_score).collect();
        episodes.push(EpisodeLog {
            episode,
            opponent,
            entropy_coef: coef,
            loss: stats.loss,
            mean_entropy: stats.mean_entropy,
            mean_score_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
        });
        games_log.extend(games.into_iter().map(|(_, l)| l));
    }

    let eval_after = if config.eval_games > 0 {
        Some(evaluate_policy(&Arc::new(policy.clone()), &vismax, config.eval_games, eval_seed, &config.game)?)
    } else {
        None
    };
    Ok(RlTrainOutput { policy, games: games_log, episodes, eval_before, eval_after })
}

struct GradientStats {
    grad: Vec<f32>,
    loss: f64,
    mean_entropy: f64,
}

/// Gradient of `-(1/N) sum_traj sum_t [A_t log pi(a_t) + beta H(pi_t)]`
/// where `A_t` is the return-to-go minus its per-turn batch mean.
fn policy_gradient(scorer: &ScalarMlp, trajectories: &[&Trajectory]) -> GradientStats {
    let n = trajectories.len().max(1) as f64;
    let horizon = trajectories.iter().map(|t| t.rewards.len()).max().unwrap_or(0);
    let returns: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| {
            let mut g = vec![0.0; t.rewards.len()];
            let mut acc = 0.0;
            for i in (0..t.rewards.len()).rev() {
                acc += t.rewards[i];
                g[i] = acc;
            }
            g
        })
        .collect();
    let mut baseline = vec![0.0; horizon];
    let mut counts = vec![0usize; horizon];
    for g in &returns {
        for (i, v) in g.iter().enumerate() {
            baseline[i] += v;
            counts[i] += 1;
        }
    }
    for (b, c) in baseline.iter_mut().zip(&counts) {
        *b /= (*c).max(1) as f64;
    }

    let mut grad = vec![0.0f32; scorer.len()];
    let mut loss = 0.0;
    let mut entropy_sum = 0.0;
    let mut decisions = 0usize;
    for (traj, g) in trajectories.iter().zip(&returns) {
        for (t, half) in traj.traces.iter().enumerate() {
            let advantage = g.get(t).copied().unwrap_or(0.0) - baseline.get(t).copied().unwrap_or(0.0);
            for step in [&half.non_king, &half.king].into_iter().flatten() {
                let h = step.entropy();
                entropy_sum += h;
                decisions += 1;
                loss -= (advantage * step.probs[step.chosen].max(1e-300).ln() + traj.coef * h) / n;
                let d_scores: Vec<f32> = step
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let indicator = if i == step.chosen { 1.0 } else { 0.0 };
                        let d_logp = indicator - p;
                        let d_entropy = if p > 0.0 { -p * (p.ln() + h) } else { 0.0 };
                        (-(advantage * d_logp + traj.coef * d_entropy) / n) as f32
                    })
                    .collect();
                let fwd = scorer.forward(&step.features, step.rows);
                scorer.backward(&fwd, &d_scores, &mut grad);
            }
        }
    }
    GradientStats { grad, loss, mean_entropy: entropy_sum / decisions.max(1) as f64 }
}
