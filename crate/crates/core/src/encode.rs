//! Fixed-size tensor encoding of observations for the learned models.
//!
//! Observations are canonicalized so the viewer always plays White: for a
//! Black viewer ranks are mirrored and teams swapped. Six channels per
//! square, stored square-major (`square * 6 + channel`):
//!
//! | channel | meaning                                  |
//! |---------|------------------------------------------|
//! | 0..4    | one-hot kind: pawn, rook, bishop, king   |
//! | 4       | +1 own piece, -1 opponent piece, 0 empty |
//! | 5       | 1 visible, 0 fogged                      |

use crate::observation::PlayerObservation;
use crate::piece::Team;
use crate::square::Square;

pub const CHANNELS: usize = 6;
pub const ENCODED_LEN: usize = 64 * CHANNELS;

pub const TEAM_CHANNEL: usize = 4;
pub const VISIBILITY_CHANNEL: usize = 5;

#[derive(Clone, PartialEq)]
pub struct EncodedObservation(pub [f32; ENCODED_LEN]);

impl core::fmt::Debug for EncodedObservation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let nonzero = self.0.iter().filter(|v| **v != 0.0).count();
        write!(f, "EncodedObservation({nonzero} non-zero)")
    }
}

impl EncodedObservation {
    #[inline]
    pub fn get(&self, square: Square, channel: usize) -> f32 {
        self.0[square.index() * CHANNELS + channel]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Maps an absolute square into `viewer`'s canonical frame. Involutive.
#[inline]
pub fn canonical_square(square: Square, viewer: Team, board_size: u8) -> Square {
    match viewer {
        Team::White => square,
        Team::Black => square.mirror_rank(board_size),
    }
}

pub fn encode_observation(obs: &PlayerObservation) -> EncodedObservation {
    let mut out = [0.0f32; ENCODED_LEN];
    for sq in obs.visible {
        let c = canonical_square(sq, obs.viewer, obs.board_size);
        out[c.index() * CHANNELS + VISIBILITY_CHANNEL] = 1.0;
    }
    for p in &obs.seen_pieces {
        let c = canonical_square(p.square, obs.viewer, obs.board_size);
        let base = c.index() * CHANNELS;
        out[base + p.kind.index()] = 1.0;
        out[base + TEAM_CHANNEL] = if p.team == obs.viewer { 1.0 } else { -1.0 };
    }
    EncodedObservation(out)
}

/// The same observation seen from the other side of a mirrored board.
pub fn mirror_observation(obs: &PlayerObservation) -> PlayerObservation {
    let size = obs.board_size;
    PlayerObservation {
        viewer: obs.viewer.opponent(),
        visible: obs.visible.iter().map(|s| s.mirror_rank(size)).collect(),
        seen_pieces: obs
            .seen_pieces
            .iter()
            .map(|p| crate::piece::Piece::new(p.kind, p.team.opponent(), p.square.mirror_rank(size)))
            .collect(),
        turn_index: obs.turn_index,
        board_size: size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piece::{Piece, PieceKind};
    use alloc::vec;

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    #[test]
    fn channels_for_white_viewer() {
        let pieces = vec![
            Piece::new(PieceKind::Rook, Team::White, sq("d1")),
            Piece::new(PieceKind::King, Team::White, sq("a1")),
            Piece::new(PieceKind::King, Team::Black, sq("h8")),
        ];
        let obs = PlayerObservation::from_pieces(&pieces, Team::White, 0, 8);
        let enc = encode_observation(&obs);
        assert_eq!(enc.get(sq("d1"), PieceKind::Rook.index()), 1.0);
        assert_eq!(enc.get(sq("d1"), TEAM_CHANNEL), 1.0);
        // d5 is visible along the file and empty.
        for c in 0..5 {
            assert_eq!(enc.get(sq("d5"), c), 0.0);
        }
        assert_eq!(enc.get(sq("d5"), VISIBILITY_CHANNEL), 1.0);
        assert_eq!(enc.get(sq("h8"), VISIBILITY_CHANNEL), 0.0);
        assert_eq!(enc.get(sq("h8"), TEAM_CHANNEL), 0.0);
    }

    #[test]
    fn black_viewer_is_mirrored() {
        let pieces = vec![
            Piece::new(PieceKind::Rook, Team::Black, sq("d8")),
            Piece::new(PieceKind::King, Team::Black, sq("e8")),
            Piece::new(PieceKind::King, Team::White, sq("e7")),
        ];
        let obs = PlayerObservation::from_pieces(&pieces, Team::Black, 0, 8);
        let enc = encode_observation(&obs);
        assert_eq!(enc.get(sq("d1"), PieceKind::Rook.index()), 1.0);
        assert_eq!(enc.get(sq("d1"), TEAM_CHANNEL), 1.0);
        assert_eq!(enc.get(sq("e2"), PieceKind::King.index()), 1.0);
        assert_eq!(enc.get(sq("e2"), TEAM_CHANNEL), -1.0);
    }
}
