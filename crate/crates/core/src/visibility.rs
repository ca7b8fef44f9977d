//! Fog-of-war visibility.
//!
//! Every piece sees its own square and the adjacent squares. Rooks add the
//! four rank/file rays and bishops the four diagonals. A ray includes the
//! first square holding an enemy pawn and stops there; friendly pawns and
//! all non-pawn pieces do not occlude.

use crate::piece::{Piece, PieceKind, Team};
use crate::square::{Square, SquareSet, DIAGONAL, ORTHOGONAL};

/// Squares visible to `team` given the full list of pieces it knows about.
///
/// Only the positions of `team`'s pieces and of enemy pawns matter, so this
/// works equally on ground truth and on a player's partial view.
pub fn visibility_mask(pieces: &[Piece], team: Team, board_size: u8) -> SquareSet {
    let blockers: SquareSet = pieces.iter().filter(|p| p.team != team && p.kind == PieceKind::Pawn).map(|p| p.square).collect();
    let mut visible = SquareSet::EMPTY;
    for piece in pieces.iter().filter(|p| p.team == team) {
        visible = visible.union(piece_visibility(piece.kind, piece.square, blockers, board_size));
    }
    visible
}

/// Squares seen by one piece of `kind` at `from`, with `blockers` the enemy pawns.
pub fn piece_visibility(kind: PieceKind, from: Square, blockers: SquareSet, board_size: u8) -> SquareSet {
    let mut visible = from.vicinity(board_size);
    let dirs: &[(i8, i8)] = match kind {
        PieceKind::Rook => &ORTHOGONAL,
        PieceKind::Bishop => &DIAGONAL,
        PieceKind::Pawn | PieceKind::King => &[],
    };
    for &(df, dr) in dirs {
        visible = visible.union(ray(from, df, dr, blockers, board_size));
    }
    visible
}

fn ray(from: Square, df: i8, dr: i8, blockers: SquareSet, board_size: u8) -> SquareSet {
    let mut out = SquareSet::EMPTY;
    let mut cur = from;
    while let Some(next) = cur.offset(df, dr, board_size) {
        out.insert(next);
        if blockers.contains(next) {
            break;
        }
        cur = next;
    }
    out
}
