//! Ground-truth game state and turn sequencing.
//!
//! A half-turn is: non-king move, king move, inference. White moves first.
//! The game ends after `2 * turns_per_side` half-turns.

use alloc::vec::Vec;

use rand::Rng;

use crate::belief::{Belief, BeliefError};
use crate::config::{ConfigError, GameConfig};
use crate::moves::{generate_moves, MoveAction, TurnPhase};
use crate::observation::PlayerObservation;
use crate::piece::{Piece, PieceKind, Team};
use crate::rng::{stream_rng, GameRng, Stream};
use crate::square::{Square, SquareSet};
use crate::visibility::visibility_mask;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RulesError {
    #[error("game is over")]
    GameOver,
    #[error("it is {expected}'s half-turn, not {got}'s")]
    WrongTeam { expected: Team, got: Team },
    #[error("expected phase {expected:?}, got {got:?}")]
    WrongPhase { expected: TurnPhase, got: TurnPhase },
    #[error("illegal move {0:?}")]
    IllegalMove(MoveAction),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("position must contain exactly one king per team on distinct squares")]
    BadPosition,
}

#[derive(Debug, Clone)]
pub struct GameState {
    config: GameConfig,
    pieces: Vec<Piece>,
    turn_index: u32,
    phase: TurnPhase,
    scores: [f64; 2],
    rng: GameRng,
    history: [Vec<PlayerObservation>; 2],
    king_starts: [Square; 2],
}

impl GameState {
    /// Places the rosters and draws each king uniformly from its candidates.
    pub fn new_game(config: GameConfig) -> Result<GameState, ConfigError> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, Stream::KingPlacement);
        let mut pieces = Vec::new();
        let mut king_starts = [config.white_king_candidates[0]; 2];
        for team in Team::BOTH {
            let candidates = config.king_candidates(team);
            let king = candidates[rng.gen_range(0..candidates.len())];
            king_starts[team.index()] = king;
            pieces.push(Piece::new(PieceKind::King, team, king));
            pieces.extend(config.roster(team).iter().map(|&(kind, sq)| Piece::new(kind, team, sq)));
        }
        Ok(Self::assemble(config, pieces, king_starts, rng))
    }

    /// A game starting from an explicit placement (White to move, turn 0).
    pub fn from_position(config: GameConfig, pieces: Vec<Piece>) -> Result<GameState, RulesError> {
        if config.board_size == 0 || config.board_size > 8 {
            return Err(ConfigError::BoardSize(config.board_size).into());
        }
        if config.turns_per_side == 0 {
            return Err(ConfigError::ZeroTurns.into());
        }
        let occupied: SquareSet = pieces.iter().map(|p| p.square).collect();
        if occupied.len() != pieces.len() || pieces.iter().any(|p| !p.square.is_on_board(config.board_size)) {
            return Err(RulesError::BadPosition);
        }
        let mut king_starts = [None; 2];
        for p in pieces.iter().filter(|p| p.kind == PieceKind::King) {
            if king_starts[p.team.index()].replace(p.square).is_some() {
                return Err(RulesError::BadPosition);
            }
        }
        let [Some(w), Some(b)] = king_starts else {
            return Err(RulesError::BadPosition);
        };
        let rng = stream_rng(config.seed, Stream::KingPlacement);
        Ok(Self::assemble(config, pieces, [w, b], rng))
    }

    fn assemble(config: GameConfig, pieces: Vec<Piece>, king_starts: [Square; 2], rng: GameRng) -> GameState {
        let mut state = GameState {
            config,
            pieces,
            turn_index: 0,
            phase: TurnPhase::NonKingMove,
            scores: [0.0; 2],
            rng,
            history: [Vec::new(), Vec::new()],
            king_starts,
        };
        for team in Team::BOTH {
            let obs = state.observe(team);
            state.history[team.index()].push(obs);
        }
        state
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn turn_index(&self) -> u32 {
        self.turn_index
    }

    pub fn phase(&self) -> TurnPhase {
        self.phase
    }

    pub fn score(&self, team: Team) -> f64 {
        self.scores[team.index()]
    }

    pub fn scores(&self) -> [f64; 2] {
        self.scores
    }

    pub fn king_starts(&self) -> [Square; 2] {
        self.king_starts
    }

    pub fn rng(&mut self) -> &mut GameRng {
        &mut self.rng
    }

    /// Observations at turn 0 and after each of `team`'s king moves.
    pub fn history(&self, team: Team) -> &[PlayerObservation] {
        &self.history[team.index()]
    }

    pub fn is_over(&self) -> bool {
        self.turn_index >= self.config.half_turns()
    }

    /// The team whose half-turn it is.
    pub fn to_move(&self) -> Team {
        if self.turn_index.is_multiple_of(2) {
            Team::White
        } else {
            Team::Black
        }
    }

    /// 1-based turn number of the side to move.
    pub fn side_turn(&self) -> u32 {
        self.turn_index / 2 + 1
    }

    pub fn king_square(&self, team: Team) -> Square {
        self.pieces.iter().find(|p| p.team == team && p.kind == PieceKind::King).map(|p| p.square).expect("exactly one king per team")
    }

    pub fn piece_at(&self, square: Square) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.square == square)
    }

    pub fn visibility_mask(&self, team: Team) -> SquareSet {
        visibility_mask(&self.pieces, team, self.config.board_size)
    }

    pub fn observe(&self, team: Team) -> PlayerObservation {
        PlayerObservation::from_pieces(&self.pieces, team, self.turn_index, self.config.board_size)
    }

    fn check_turn(&self, team: Team, phase: TurnPhase) -> Result<(), RulesError> {
        if self.is_over() {
            return Err(RulesError::GameOver);
        }
        if team != self.to_move() {
            return Err(RulesError::WrongTeam { expected: self.to_move(), got: team });
        }
        if phase != self.phase {
            return Err(RulesError::WrongPhase { expected: self.phase, got: phase });
        }
        Ok(())
    }

    pub fn legal_moves(&self, team: Team, phase: TurnPhase) -> Result<Vec<MoveAction>, RulesError> {
        self.check_turn(team, phase)?;
        if !phase.is_movement() {
            return Err(RulesError::WrongPhase { expected: TurnPhase::NonKingMove, got: phase });
        }
        Ok(generate_moves(&self.pieces, team, phase, self.config.board_size))
    }

    /// Applies a movement action for the side to move and advances the phase.
    /// After the king move the mover's observation is appended to its history.
    pub fn apply_move(&mut self, action: MoveAction) -> Result<(), RulesError> {
        let team = self.to_move();
        let phase = self.phase;
        let legal = self.legal_moves(team, phase)?;
        if !legal.contains(&action) {
            return Err(RulesError::IllegalMove(action));
        }
        if let MoveAction::Move { from, to, .. } = action {
            let piece = self.pieces.iter_mut().find(|p| p.square == from).ok_or(RulesError::IllegalMove(action))?;
            piece.square = to;
        }
        self.phase = match phase {
            TurnPhase::NonKingMove => TurnPhase::KingMove,
            _ => {
                let obs = self.observe(team);
                self.history[team.index()].push(obs);
                TurnPhase::Inference
            }
        };
        Ok(())
    }

    /// Scores `belief` against the true opponent king and ends the half-turn.
    pub fn record_inference(&mut self, team: Team, belief: &Belief) -> Result<f64, RulesError> {
        self.check_turn(team, TurnPhase::Inference)?;
        // Belief is valid by construction; revalidate in case it was built unchecked upstream.
        Belief::new(*belief.probs())?;
        let delta = belief.prob(self.king_square(team.opponent()));
        self.scores[team.index()] += delta;
        self.turn_index += 1;
        self.phase = TurnPhase::NonKingMove;
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    fn kings_only() -> GameState {
        GameState::from_position(
            GameConfig::default(),
            vec![
                Piece::new(PieceKind::King, Team::White, sq("a1")),
                Piece::new(PieceKind::Rook, Team::White, sq("d4")),
                Piece::new(PieceKind::King, Team::Black, sq("h8")),
            ],
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_game() {
        let a = GameState::new_game(GameConfig::default().with_seed(11)).unwrap();
        let b = GameState::new_game(GameConfig::default().with_seed(11)).unwrap();
        assert_eq!(a.pieces(), b.pieces());
        assert_eq!(a.history(Team::White), b.history(Team::White));
    }

    #[test]
    fn zero_turns_is_config_error() {
        let cfg = GameConfig { turns_per_side: 0, ..GameConfig::default() };
        assert_eq!(GameState::new_game(cfg).unwrap_err(), ConfigError::ZeroTurns);
    }

    #[test]
    fn phases_advance_in_order() {
        let mut g = kings_only();
        assert_eq!(g.phase(), TurnPhase::NonKingMove);
        g.apply_move(MoveAction::new(PieceKind::Rook, sq("d4"), sq("d5"))).unwrap();
        assert_eq!(g.piece_at(sq("d5")).map(|p| p.kind), Some(PieceKind::Rook));
        assert!(g.piece_at(sq("d4")).is_none());
        assert_eq!(g.phase(), TurnPhase::KingMove);
        assert_eq!(g.history(Team::White).len(), 1);
        g.apply_move(MoveAction::new(PieceKind::King, sq("a1"), sq("b2"))).unwrap();
        assert_eq!(g.phase(), TurnPhase::Inference);
        assert_eq!(g.history(Team::White).len(), 2);
        let delta = g.record_inference(Team::White, &Belief::one_hot(sq("h8"))).unwrap();
        assert_eq!(delta, 1.0);
        assert_eq!(g.to_move(), Team::Black);
        assert_eq!(g.turn_index(), 1);
    }

    #[test]
    fn pass_leaves_board_unchanged() {
        let mut g = GameState::from_position(
            GameConfig::default(),
            vec![Piece::new(PieceKind::King, Team::White, sq("a1")), Piece::new(PieceKind::King, Team::Black, sq("h8"))],
        )
        .unwrap();
        let before = g.pieces().to_vec();
        assert_eq!(g.legal_moves(Team::White, TurnPhase::NonKingMove).unwrap(), vec![MoveAction::Pass]);
        g.apply_move(MoveAction::Pass).unwrap();
        assert_eq!(g.pieces(), &before[..]);
        assert_eq!(g.phase(), TurnPhase::KingMove);
        assert_eq!(g.apply_move(MoveAction::Pass), Err(RulesError::IllegalMove(MoveAction::Pass)));
    }

    #[test]
    fn occupied_destination_is_rejected() {
        let mut g = kings_only();
        let bad = MoveAction::new(PieceKind::Rook, sq("d4"), sq("d4"));
        assert!(matches!(g.apply_move(bad), Err(RulesError::IllegalMove(_))));
        let mut g = GameState::from_position(
            GameConfig::default(),
            vec![
                Piece::new(PieceKind::King, Team::White, sq("a1")),
                Piece::new(PieceKind::Rook, Team::White, sq("d4")),
                Piece::new(PieceKind::Pawn, Team::Black, sq("d5")),
                Piece::new(PieceKind::King, Team::Black, sq("h8")),
            ],
        )
        .unwrap();
        let onto_pawn = MoveAction::new(PieceKind::Rook, sq("d4"), sq("d5"));
        assert_eq!(g.apply_move(onto_pawn), Err(RulesError::IllegalMove(onto_pawn)));
        assert_eq!(g.phase(), TurnPhase::NonKingMove);
    }

    #[test]
    fn sequencing_errors() {
        let g = kings_only();
        assert!(matches!(g.legal_moves(Team::Black, TurnPhase::NonKingMove), Err(RulesError::WrongTeam { .. })));
        assert!(matches!(g.legal_moves(Team::White, TurnPhase::KingMove), Err(RulesError::WrongPhase { .. })));
        let mut g = g;
        assert!(matches!(g.record_inference(Team::White, &Belief::one_hot(sq("h8"))), Err(RulesError::WrongPhase { .. })));
    }

    #[test]
    fn inference_scores_probability_on_true_square() {
        let mut g = kings_only();
        g.apply_move(MoveAction::new(PieceKind::Rook, sq("d4"), sq("d5"))).unwrap();
        g.apply_move(MoveAction::new(PieceKind::King, sq("a1"), sq("a2"))).unwrap();
        let obs = g.observe(Team::White);
        let fog = obs.fog();
        assert!(fog.contains(sq("h8")));
        let b = Belief::uniform_over(fog).unwrap();
        let delta = g.record_inference(Team::White, &b).unwrap();
        assert_eq!(delta, 1.0 / fog.len() as f64);
    }

    #[test]
    fn zero_mass_on_king_scores_zero() {
        let mut g = kings_only();
        g.apply_move(MoveAction::new(PieceKind::Rook, sq("d4"), sq("d5"))).unwrap();
        g.apply_move(MoveAction::new(PieceKind::King, sq("a1"), sq("a2"))).unwrap();
        assert_eq!(g.record_inference(Team::White, &Belief::one_hot(sq("a8"))).unwrap(), 0.0);
        assert_eq!(g.score(Team::White), 0.0);
    }

    #[test]
    fn game_ends_after_all_half_turns() {
        let cfg = GameConfig { turns_per_side: 1, ..GameConfig::default() };
        let mut g = GameState::new_game(cfg).unwrap();
        for _ in 0..2 {
            let team = g.to_move();
            for phase in [TurnPhase::NonKingMove, TurnPhase::KingMove] {
                let m = g.legal_moves(team, phase).unwrap()[0];
                g.apply_move(m).unwrap();
            }
            let b = Belief::one_hot(g.king_square(team.opponent()));
            g.record_inference(team, &b).unwrap();
        }
        assert!(g.is_over());
        assert_eq!(g.scores(), [1.0, 1.0]);
        assert_eq!(g.legal_moves(Team::White, TurnPhase::NonKingMove), Err(RulesError::GameOver));
    }
}
