//! JSON frames exchanged with play clients.
//!
//! Every frame is an object with a `type` tag and a `protocol_version`
//! field. Clients send [`ClientMessage`]s and receive [`ServerMessage`]s.

use infochess_core::{GameRecord, MoveAction, PerTeam, PlayerObservation, Square, Team, TurnPhase};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Which side the human plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamChoice {
    White,
    Black,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    /// Agent spec such as `vismax` or `rl:<checkpoint>`.
    pub agent: String,
    #[serde(default)]
    pub human_team: TeamChoice,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A movement submission. Omitting `from` and `to` submits a pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitMove {
    pub phase: TurnPhase,
    #[serde(default)]
    pub from: Option<Square>,
    #[serde(default)]
    pub to: Option<Square>,
}

/// A belief over the 64 squares, indexed `rank * 8 + file`, or a single
/// square that expands to a one-hot belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmitInference {
    Belief { belief: Vec<f64> },
    SingleSquare { single_square: Square },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientMessage {
    GetState,
    GetLegalMoves,
    GetRecord,
    SubmitMove(SubmitMove),
    SubmitInference(SubmitInference),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnknownAgent,
    NotFound,
    Gone,
    WrongPhase,
    IllegalMove,
    InvalidBelief,
    GameOver,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::BadRequest | ErrorCode::UnknownAgent | ErrorCode::InvalidBelief => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::Gone => 410,
            ErrorCode::WrongPhase | ErrorCode::IllegalMove | ErrorCode::GameOver => 409,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    StateUpdate {
        session: String,
        /// Half-turns completed by both sides.
        turn: u32,
        phase: TurnPhase,
        to_move: Team,
        your_team: Team,
        your_view: PlayerObservation,
        /// Absent when the server withholds scores until the game ends.
        your_score: Option<f64>,
        opponent_score_visible: bool,
    },
    LegalMoves {
        session: String,
        phase: TurnPhase,
        moves: Vec<MoveAction>,
    },
    TurnResult {
        session: String,
        /// Absent when the server withholds scores until the game ends.
        score_delta: Option<f64>,
    },
    GameOver {
        session: String,
        seed: u64,
        final_scores: PerTeam<f64>,
        winner: Option<Team>,
        record: GameRecord,
    },
    Error {
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        legal_moves: Option<Vec<MoveAction>>,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error { code, message: message.into(), legal_moves: None }
    }
}

/// A message with its protocol version, as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame<M> {
    pub protocol_version: u32,
    #[serde(flatten)]
    pub message: M,
}

impl<M> Frame<M> {
    pub fn new(message: M) -> Frame<M> {
        Frame { protocol_version: PROTOCOL_VERSION, message }
    }
}

/// Resolves a submitted move against the legal moves of the current phase.
/// The piece kind is taken from the legal move with the same squares.
pub fn resolve_move(submit: &SubmitMove, legal: &[MoveAction]) -> Option<MoveAction> {
    match (submit.from, submit.to) {
        (None, None) => legal.iter().copied().find(|m| *m == MoveAction::Pass),
        (Some(from), Some(to)) => {
            legal.iter().copied().find(|m| matches!(*m, MoveAction::Move { from: f, to: t, .. } if f == from && t == to))
        }
        _ => None,
    }
}
