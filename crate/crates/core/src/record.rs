//! Game records and bit-exact replay.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::config::{ConfigError, GameConfig};
use crate::moves::MoveAction;
use crate::piece::Team;
use crate::square::Square;
use crate::state::{GameState, RulesError};

/// A value per team, serialized as `{"white": .., "black": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerTeam<T> {
    pub white: T,
    pub black: T,
}

impl<T: Copy> PerTeam<T> {
    pub fn from_array(values: [T; 2]) -> Self {
        PerTeam { white: values[0], black: values[1] }
    }

    pub fn get(&self, team: Team) -> T {
        match team {
            Team::White => self.white,
            Team::Black => self.black,
        }
    }
}

/// One half-turn: both moves, the submitted belief and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub team: Team,
    pub non_king_move: MoveAction,
    pub king_move: MoveAction,
    pub belief: Belief,
    pub true_opponent_king: Square,
    pub score_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub config: GameConfig,
    pub king_starts: PerTeam<Square>,
    pub turns: Vec<TurnRecord>,
    pub final_scores: PerTeam<f64>,
}

impl GameRecord {
    /// An empty record for a freshly created game.
    pub fn start(state: &GameState) -> GameRecord {
        GameRecord {
            config: state.config().clone(),
            king_starts: PerTeam::from_array(state.king_starts()),
            turns: Vec::new(),
            final_scores: PerTeam { white: 0.0, black: 0.0 },
        }
    }

    pub fn push(&mut self, turn: TurnRecord) {
        match turn.team {
            Team::White => self.final_scores.white += turn.score_delta,
            Team::Black => self.final_scores.black += turn.score_delta,
        }
        self.turns.push(turn);
    }

    pub fn is_complete(&self) -> bool {
        self.turns.len() as u32 == self.config.half_turns()
    }

    /// `Some(team)` for the higher final score, `None` for a draw.
    pub fn winner(&self) -> Option<Team> {
        outcome(self.final_scores.white, self.final_scores.black)
    }
}

/// Higher cumulative score wins; exact ties are draws.
pub fn outcome(white: f64, black: f64) -> Option<Team> {
    if white > black {
        Some(Team::White)
    } else if black > white {
        Some(Team::Black)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("recorded king starts do not match the configured seed")]
    KingStarts,
    #[error("replay diverged at half-turn {half_turn}: {reason}")]
    Diverged { half_turn: usize, reason: Divergence },
    #[error("final scores differ from the replayed totals")]
    FinalScores,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Divergence {
    #[error("recorded team {0} is not the side to move")]
    Team(Team),
    #[error("rules rejected the recorded action: {0}")]
    Rules(RulesError),
    #[error("recorded opponent king square {0} differs from the replayed position")]
    KingSquare(Square),
    #[error("recorded score delta {recorded} differs from replayed {replayed}")]
    Score { recorded: f64, replayed: f64 },
    #[error("{0}")]
    Other(String),
}

/// Re-executes a record against the rules, checking every logged value.
pub fn replay(record: &GameRecord) -> Result<GameState, ReplayError> {
    let mut state = GameState::new_game(record.config.clone())?;
    if PerTeam::from_array(state.king_starts()) != record.king_starts {
        return Err(ReplayError::KingStarts);
    }
    for (half_turn, turn) in record.turns.iter().enumerate() {
        let diverged = |reason| ReplayError::Diverged { half_turn, reason };
        if state.is_over() {
            return Err(diverged(Divergence::Other("record continues after the game ended".into())));
        }
        if turn.team != state.to_move() {
            return Err(diverged(Divergence::Team(turn.team)));
        }
        state.apply_move(turn.non_king_move).map_err(|e| diverged(Divergence::Rules(e)))?;
        state.apply_move(turn.king_move).map_err(|e| diverged(Divergence::Rules(e)))?;
        if state.king_square(turn.team.opponent()) != turn.true_opponent_king {
            return Err(diverged(Divergence::KingSquare(turn.true_opponent_king)));
        }
        let replayed = state.record_inference(turn.team, &turn.belief).map_err(|e| diverged(Divergence::Rules(e)))?;
        if replayed.to_bits() != turn.score_delta.to_bits() {
            return Err(diverged(Divergence::Score { recorded: turn.score_delta, replayed }));
        }
    }
    let [white, black] = state.scores();
    if white.to_bits() != record.final_scores.white.to_bits() || black.to_bits() != record.final_scores.black.to_bits() {
        return Err(ReplayError::FinalScores);
    }
    Ok(state)
}
