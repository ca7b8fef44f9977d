//! Players: the heuristic agent family, the learned move-scoring policy, and
//! the loop that plays one game between two agents.
//!
//! An agent sees only its own [`PlayerObservation`]s. Each half-turn the
//! driver calls [`Agent::start_half_turn`], then asks for a non-king move, a
//! king move and finally a belief over the opponent king's square.

pub mod heuristic;
pub mod play;
pub mod rl;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use infochess_core::rng::GameRng;
use infochess_core::{Belief, BeliefError, MoveAction, PlayerObservation, RulesError, Team};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{BeliefModel, ModelError};

pub use heuristic::{greedy_infogain_nonking, hiding_king_move, HeuristicAgent, MixtureAgent};
pub use play::{play_game, play_half_turn, PlayError, PlayedGame, TurnDecision};
pub use rl::{train_rl, RlAgent, RlCheckpointError, RlPolicy, RlTrainConfig, RlTrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Random,
    VisMax,
    BeliefMax,
    HidingVisMax,
    HidingBeliefMax,
    Rl,
}

impl AgentKind {
    pub const HEURISTICS: [AgentKind; 5] =
        [AgentKind::Random, AgentKind::VisMax, AgentKind::BeliefMax, AgentKind::HidingVisMax, AgentKind::HidingBeliefMax];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::VisMax => "vismax",
            AgentKind::BeliefMax => "beliefmax",
            AgentKind::HidingVisMax => "hidingvismax",
            AgentKind::HidingBeliefMax => "hidingbeliefmax",
            AgentKind::Rl => "rl",
        }
    }

    /// Whether the agent needs the learned king-belief or visibility head.
    pub fn needs_model(self) -> bool {
        !matches!(self, AgentKind::Random | AgentKind::VisMax)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An agent as named on the command line: a heuristic kind or `rl:<checkpoint>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentSpec {
    Heuristic(AgentKind),
    Rl(PathBuf),
}

impl AgentSpec {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentSpec::Heuristic(k) => *k,
            AgentSpec::Rl(_) => AgentKind::Rl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown agent {0:?}; expected random, vismax, beliefmax, hidingvismax, hidingbeliefmax or rl:<file>")]
pub struct ParseAgentError(pub String);

impl FromStr for AgentSpec {
    type Err = ParseAgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(path) = t.strip_prefix("rl:") {
            if path.is_empty() {
                return Err(ParseAgentError(s.into()));
            }
            return Ok(AgentSpec::Rl(PathBuf::from(path)));
        }
        let kind = match t.to_ascii_lowercase().as_str() {
            "random" => AgentKind::Random,
            "vismax" => AgentKind::VisMax,
            "beliefmax" => AgentKind::BeliefMax,
            "hidingvismax" => AgentKind::HidingVisMax,
            "hidingbeliefmax" => AgentKind::HidingBeliefMax,
            _ => return Err(ParseAgentError(s.into())),
        };
        Ok(AgentSpec::Heuristic(kind))
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Heuristic(k) => f.write_str(k.name()),
            AgentSpec::Rl(p) => write!(f, "rl:{}", p.display()),
        }
    }
}

impl Serialize for AgentSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("agent {agent} requires a trained belief model")]
    MissingModel { agent: AgentKind },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("agent chose {chosen:?}, which is not among the legal moves")]
    IllegalChoice { chosen: MoveAction },
    #[error("no legal moves offered")]
    NoMoves,
    #[error("agent used before the game started")]
    NotStarted,
    #[error(transparent)]
    Checkpoint(#[from] RlCheckpointError),
}

/// A player. Implementations must only use the observations they are given.
pub trait Agent: Send {
    fn label(&self) -> String;

    /// Resets per-game state; `initial` is the turn-0 observation.
    fn begin(&mut self, team: Team, initial: &PlayerObservation) -> Result<(), AgentError>;

    /// Prepares a half-turn from the observation at its start and returns the
    /// belief held before moving.
    fn start_half_turn(&mut self, obs: &PlayerObservation) -> Result<Belief, AgentError>;

    fn choose_non_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError>;

    fn choose_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError>;

    /// The belief submitted at the inference point; `obs` is the post-king-move view.
    fn infer(&mut self, obs: &PlayerObservation, rng: &mut GameRng) -> Result<Belief, AgentError>;
}

/// A resolved agent specification that can spawn fresh agents cheaply.
#[derive(Debug, Clone)]
pub enum Blueprint {
    Heuristic { kind: AgentKind, model: Option<Arc<BeliefModel>> },
    Rl { policy: Arc<RlPolicy>, label: String },
}

impl Blueprint {
    pub fn build(&self) -> Box<dyn Agent> {
        match self {
            Blueprint::Heuristic { kind, model } => {
                Box::new(HeuristicAgent::new(*kind, model.clone()).expect("blueprint checked its model requirement"))
            }
            Blueprint::Rl { policy, label } => Box::new(RlAgent::new(policy.clone(), label.clone())),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Blueprint::Heuristic { kind, .. } => *kind,
            Blueprint::Rl { .. } => AgentKind::Rl,
        }
    }
}

/// Wires a heuristic row of the agent table to the available models.
pub fn compose_heuristic(kind: AgentKind, model: Option<&Arc<BeliefModel>>) -> Result<Blueprint, AgentError> {
    if kind == AgentKind::Rl {
        return Err(AgentError::MissingModel { agent: kind });
    }
    if kind.needs_model() && model.is_none() {
        return Err(AgentError::MissingModel { agent: kind });
    }
    Ok(Blueprint::Heuristic { kind, model: if kind.needs_model() { model.cloned() } else { None } })
}

/// Resolves agent specs, loading each RL checkpoint once.
#[derive(Debug, Default)]
pub struct AgentFactory {
    model: Option<Arc<BeliefModel>>,
    policies: BTreeMap<PathBuf, Arc<RlPolicy>>,
}

impl AgentFactory {
    pub fn new(model: Option<Arc<BeliefModel>>) -> AgentFactory {
        AgentFactory { model, policies: BTreeMap::new() }
    }

    pub fn model(&self) -> Option<&Arc<BeliefModel>> {
        self.model.as_ref()
    }

    /// Registers an in-memory policy under a checkpoint path.
    pub fn insert_policy(&mut self, path: &Path, policy: Arc<RlPolicy>) {
        self.policies.insert(path.to_path_buf(), policy);
    }

    pub fn resolve(&mut self, spec: &AgentSpec) -> Result<Blueprint, AgentError> {
        match spec {
            AgentSpec::Heuristic(kind) => compose_heuristic(*kind, self.model.as_ref()),
            AgentSpec::Rl(path) => {
                let model = self.model.clone().ok_or(AgentError::MissingModel { agent: AgentKind::Rl })?;
                let policy = match self.policies.get(path) {
                    Some(p) => p.clone(),
                    None => {
                        let p = Arc::new(RlPolicy::load(path, model)?);
                        self.policies.insert(path.clone(), p.clone());
                        p
                    }
                };
                Ok(Blueprint::Rl { policy, label: spec.to_string() })
            }
        }
    }
}

/// Uniform choice among `items`.
pub(crate) fn choose_uniform<T: Copy>(items: &[T], rng: &mut GameRng) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0]),
        n => Some(items[rng.gen_range(0..n)]),
    }
}

pub(crate) fn ensure_legal(chosen: MoveAction, legal: &[MoveAction]) -> Result<MoveAction, AgentError> {
    if legal.contains(&chosen) {
        Ok(chosen)
    } else {
        Err(AgentError::IllegalChoice { chosen })
    }
}
