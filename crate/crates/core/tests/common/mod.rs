//! Shared helpers: random reachable positions and brute-force rule oracles.

#![allow(dead_code)]

use infochess_core::moves::MoveAction;
use infochess_core::rng::rng_from_seed;
use infochess_core::{uniform_belief, GameConfig, GameState, Piece, PieceKind, Square, SquareSet, Team, TurnPhase};
use rand::seq::SliceRandom;
use rand::Rng;

/// Plays uniformly random moves (and uniform beliefs) from a seeded start,
/// stopping at a random phase somewhere in the game.
pub fn random_reachable_state(seed: u64) -> GameState {
    let mut rng = rng_from_seed(seed ^ 0xA5A5);
    let mut state = GameState::new_game(GameConfig::default().with_seed(seed)).unwrap();
    let stop = rng.gen_range(0..(3 * state.config().half_turns()));
    for _ in 0..stop {
        if state.is_over() {
            break;
        }
        step_random(&mut state, &mut rng);
    }
    state
}

/// Advances exactly one phase with random choices.
pub fn step_random<R: Rng>(state: &mut GameState, rng: &mut R) {
    let team = state.to_move();
    match state.phase() {
        TurnPhase::Inference => {
            let b = uniform_belief(&state.observe(team)).unwrap();
            state.record_inference(team, &b).unwrap();
        }
        phase => {
            let moves = state.legal_moves(team, phase).unwrap();
            let m = *moves.choose(rng).unwrap();
            state.apply_move(m).unwrap();
        }
    }
}

pub fn between(a: Square, b: Square) -> Vec<Square> {
    let df = (b.file() as i8 - a.file() as i8).signum();
    let dr = (b.rank() as i8 - a.rank() as i8).signum();
    let mut out = Vec::new();
    let (mut f, mut r) = (a.file() as i8 + df, a.rank() as i8 + dr);
    while (f, r) != (b.file() as i8, b.rank() as i8) {
        out.push(Square::new(f as u8, r as u8).unwrap());
        f += df;
        r += dr;
    }
    out
}

/// Square-by-square visibility from the rule text, without ray walking.
pub fn brute_visibility(pieces: &[Piece], team: Team) -> SquareSet {
    let enemy_pawn = |s: Square| pieces.iter().any(|p| p.square == s && p.team != team && p.kind == PieceKind::Pawn);
    let mut out = SquareSet::EMPTY;
    for target in Square::all() {
        for p in pieces.iter().filter(|p| p.team == team) {
            let df = (target.file() as i8 - p.square.file() as i8).abs();
            let dr = (target.rank() as i8 - p.square.rank() as i8).abs();
            let near = df.max(dr) <= 1;
            let aligned = match p.kind {
                PieceKind::Rook => (df == 0) != (dr == 0),
                PieceKind::Bishop => df == dr && df > 0,
                _ => false,
            };
            if near || (aligned && between(p.square, target).into_iter().all(|s| !enemy_pawn(s))) {
                out.insert(target);
            }
        }
    }
    out
}

pub fn brute_moves(pieces: &[Piece], team: Team, phase: TurnPhase) -> Vec<MoveAction> {
    let mut out = Vec::new();
    for p in pieces.iter().filter(|p| p.team == team) {
        if (p.kind == PieceKind::King) != (phase == TurnPhase::KingMove) {
            continue;
        }
        for to in Square::all() {
            if p.square.chebyshev(to) == 1 && pieces.iter().all(|q| q.square != to) {
                out.push(MoveAction::new(p.kind, p.square, to));
            }
        }
    }
    if out.is_empty() {
        out.push(MoveAction::Pass);
    }
    out
}

pub fn sorted(mut moves: Vec<MoveAction>) -> Vec<String> {
    let mut v: Vec<String> = moves.drain(..).map(|m| format!("{m:?}")).collect();
    v.sort();
    v
}
