//! Turn phases, move actions and move generation.

use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::piece::{Piece, PieceKind, Team};
use crate::square::{Square, SquareSet};

/// Phases of one half-turn, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnPhase {
    NonKingMove,
    KingMove,
    Inference,
}

impl TurnPhase {
    pub fn is_movement(self) -> bool {
        !matches!(self, TurnPhase::Inference)
    }
}

/// One movement-phase action. A pass is only legal when nothing can move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveAction {
    Move { piece: PieceKind, from: Square, to: Square },
    Pass,
}

impl MoveAction {
    pub fn new(piece: PieceKind, from: Square, to: Square) -> MoveAction {
        MoveAction::Move { piece, from, to }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, MoveAction::Pass)
    }

    pub fn piece(&self) -> Option<PieceKind> {
        match *self {
            MoveAction::Move { piece, .. } => Some(piece),
            MoveAction::Pass => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WireMove {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    piece: Option<PieceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<Square>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<Square>,
    #[serde(default)]
    pass: bool,
}

impl Serialize for MoveAction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = match *self {
            MoveAction::Move { piece, from, to } => WireMove { piece: Some(piece), from: Some(from), to: Some(to), pass: false },
            MoveAction::Pass => WireMove { piece: None, from: None, to: None, pass: true },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MoveAction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireMove::deserialize(deserializer)?;
        if wire.pass {
            return Ok(MoveAction::Pass);
        }
        match (wire.piece, wire.from, wire.to) {
            (Some(piece), Some(from), Some(to)) => Ok(MoveAction::Move { piece, from, to }),
            _ => Err(serde::de::Error::custom("a move needs piece, from and to unless pass is true")),
        }
    }
}

/// Every single-step move for `team` in a movement `phase`, given the pieces
/// occupying the board. Falls back to a lone pass when nothing can move.
pub fn generate_moves(pieces: &[Piece], team: Team, phase: TurnPhase, board_size: u8) -> Vec<MoveAction> {
    let occupied: SquareSet = pieces.iter().map(|p| p.square).collect();
    let wants_king = phase == TurnPhase::KingMove;
    let mut moves = Vec::new();
    for p in pieces.iter().filter(|p| p.team == team && (p.kind == PieceKind::King) == wants_king) {
        for to in p.square.neighbors(board_size) {
            if !occupied.contains(to) {
                moves.push(MoveAction::new(p.kind, p.square, to));
            }
        }
    }
    if moves.is_empty() {
        moves.push(MoveAction::Pass);
    }
    moves
}
