//! A player's fog-masked view of the board.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::moves::{generate_moves, MoveAction, TurnPhase};
use crate::piece::{Piece, PieceKind, Team};
use crate::square::{Square, SquareSet, MAX_BOARD};
use crate::visibility::visibility_mask;

fn default_board_size() -> u8 {
    MAX_BOARD
}

/// What `viewer` knows: all own pieces, plus opponent pieces on visible squares.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerObservation {
    pub viewer: Team,
    pub visible: SquareSet,
    pub seen_pieces: Vec<Piece>,
    pub turn_index: u32,
    #[serde(default = "default_board_size")]
    pub board_size: u8,
}

impl PlayerObservation {
    /// Builds the observation of `viewer` from the full piece list.
    pub fn from_pieces(pieces: &[Piece], viewer: Team, turn_index: u32, board_size: u8) -> Self {
        let visible = visibility_mask(pieces, viewer, board_size);
        let seen_pieces = pieces.iter().filter(|p| p.team == viewer || visible.contains(p.square)).copied().collect();
        PlayerObservation { viewer, visible, seen_pieces, turn_index, board_size }
    }

    pub fn board(&self) -> SquareSet {
        SquareSet::board(self.board_size)
    }

    /// On-board squares the viewer cannot see.
    pub fn fog(&self) -> SquareSet {
        self.board().difference(self.visible)
    }

    pub fn own_pieces(&self) -> impl Iterator<Item = &Piece> {
        self.seen_pieces.iter().filter(move |p| p.team == self.viewer)
    }

    pub fn opponent_pieces(&self) -> impl Iterator<Item = &Piece> {
        self.seen_pieces.iter().filter(move |p| p.team != self.viewer)
    }

    pub fn own_king(&self) -> Option<Square> {
        self.own_pieces().find(|p| p.kind == PieceKind::King).map(|p| p.square)
    }

    pub fn opponent_king(&self) -> Option<Square> {
        self.opponent_pieces().find(|p| p.kind == PieceKind::King).map(|p| p.square)
    }

    /// Legal moves derived from this view alone. Adjacent squares are always
    /// visible, so this matches the ground-truth move list.
    pub fn legal_moves(&self, phase: TurnPhase) -> Vec<MoveAction> {
        generate_moves(&self.seen_pieces, self.viewer, phase, self.board_size)
    }

    /// Known pieces after hypothetically applying one of the viewer's moves.
    /// Seen opponent pieces stay where they were; unseen ones are absent.
    pub fn pieces_after(&self, action: &MoveAction) -> Vec<Piece> {
        let mut pieces = self.seen_pieces.clone();
        if let MoveAction::Move { from, to, .. } = *action {
            if let Some(p) = pieces.iter_mut().find(|p| p.team == self.viewer && p.square == from) {
                p.square = to;
            }
        }
        pieces
    }

    /// The visible set predicted after `action`, from the viewer's knowledge.
    pub fn visibility_after(&self, action: &MoveAction) -> SquareSet {
        visibility_mask(&self.pieces_after(action), self.viewer, self.board_size)
    }
}
