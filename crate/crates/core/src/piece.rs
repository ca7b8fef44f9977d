use serde::{Deserialize, Serialize};

use crate::square::Square;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    White,
    Black,
}

impl Team {
    pub const BOTH: [Team; 2] = [Team::White, Team::Black];

    #[inline]
    pub fn opponent(self) -> Team {
        match self {
            Team::White => Team::Black,
            Team::Black => Team::White,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

impl core::fmt::Display for Team {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Team::White => "white",
            Team::Black => "black",
        })
    }
}

/// Piece kinds. The discriminant order is the one-hot order used by encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Pawn,
    Rook,
    Bishop,
    King,
}

impl PieceKind {
    pub const ALL: [PieceKind; 4] = [PieceKind::Pawn, PieceKind::Rook, PieceKind::Bishop, PieceKind::King];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PieceKind::Pawn => "pawn",
            PieceKind::Rook => "rook",
            PieceKind::Bishop => "bishop",
            PieceKind::King => "king",
        }
    }
}

impl core::fmt::Display for PieceKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A piece on the board. Pieces are never captured, so every piece is alive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Piece {
    pub kind: PieceKind,
    pub team: Team,
    pub square: Square,
}

impl Piece {
    pub fn new(kind: PieceKind, team: Team, square: Square) -> Piece {
        Piece { kind, team, square }
    }
}
