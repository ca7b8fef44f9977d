//! Game configuration: board size, horizon, rosters and king start candidates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::piece::{PieceKind, Team};
use crate::square::{Square, SquareSet, MAX_BOARD};

pub const DEFAULT_TURNS_PER_SIDE: u32 = 25;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("board size {0} is outside 1..=8")]
    BoardSize(u8),
    #[error("turns_per_side must be at least 1")]
    ZeroTurns,
    #[error("{team} roster square {square} is off the board")]
    OffBoard { team: Team, square: Square },
    #[error("square {0} is used by more than one piece or king candidate")]
    Overlap(Square),
    #[error("rosters may not contain kings; kings come from the start candidates")]
    KingInRoster,
    #[error("{0} has no king start candidates")]
    NoKingCandidates(Team),
    #[error("{team} king candidate {square} is not on its back row")]
    CandidateNotBackRow { team: Team, square: Square },
}

/// Configuration of a single game. Omitted JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub board_size: u8,
    pub turns_per_side: u32,
    pub white_roster: Vec<(PieceKind, Square)>,
    pub black_roster: Vec<(PieceKind, Square)>,
    pub white_king_candidates: Vec<Square>,
    pub black_king_candidates: Vec<Square>,
    pub seed: u64,
}

fn sq(name: &str) -> Square {
    name.parse().expect("static square name")
}

impl Default for GameConfig {
    /// One rook, one bishop and three pawns per side; kings start on one of
    /// the c..f back-row squares.
    fn default() -> Self {
        let white_roster = alloc::vec![
            (PieceKind::Rook, sq("a1")),
            (PieceKind::Bishop, sq("h1")),
            (PieceKind::Pawn, sq("c2")),
            (PieceKind::Pawn, sq("e2")),
            (PieceKind::Pawn, sq("g2")),
        ];
        let black_roster = white_roster.iter().map(|&(k, s)| (k, s.mirror_rank(MAX_BOARD))).collect();
        let white_king_candidates: Vec<Square> = ["c1", "d1", "e1", "f1"].iter().map(|s| sq(s)).collect();
        let black_king_candidates = white_king_candidates.iter().map(|s| s.mirror_rank(MAX_BOARD)).collect();
        GameConfig {
            board_size: MAX_BOARD,
            turns_per_side: DEFAULT_TURNS_PER_SIDE,
            white_roster,
            black_roster,
            white_king_candidates,
            black_king_candidates,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn roster(&self, team: Team) -> &[(PieceKind, Square)] {
        match team {
            Team::White => &self.white_roster,
            Team::Black => &self.black_roster,
        }
    }

    pub fn king_candidates(&self, team: Team) -> &[Square] {
        match team {
            Team::White => &self.white_king_candidates,
            Team::Black => &self.black_king_candidates,
        }
    }

    pub fn back_rank(&self, team: Team) -> u8 {
        match team {
            Team::White => 0,
            Team::Black => self.board_size - 1,
        }
    }

    /// Total half-turns in a game.
    pub fn half_turns(&self) -> u32 {
        2 * self.turns_per_side
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.board_size == 0 || self.board_size > MAX_BOARD {
            return Err(ConfigError::BoardSize(self.board_size));
        }
        if self.turns_per_side == 0 {
            return Err(ConfigError::ZeroTurns);
        }
        let mut used = SquareSet::EMPTY;
        for team in Team::BOTH {
            for &(kind, square) in self.roster(team) {
                if kind == PieceKind::King {
                    return Err(ConfigError::KingInRoster);
                }
                if !square.is_on_board(self.board_size) {
                    return Err(ConfigError::OffBoard { team, square });
                }
                if used.contains(square) {
                    return Err(ConfigError::Overlap(square));
                }
                used.insert(square);
            }
            let candidates = self.king_candidates(team);
            if candidates.is_empty() {
                return Err(ConfigError::NoKingCandidates(team));
            }
            for &square in candidates {
                if !square.is_on_board(self.board_size) {
                    return Err(ConfigError::OffBoard { team, square });
                }
                if square.rank() != self.back_rank(team) {
                    return Err(ConfigError::CandidateNotBackRow { team, square });
                }
                if used.contains(square) {
                    return Err(ConfigError::Overlap(square));
                }
                used.insert(square);
            }
        }
        Ok(())
    }
}
