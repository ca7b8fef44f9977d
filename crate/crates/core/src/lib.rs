//! Rules engine and information measures for InfoChess, a chess variant in
//! which each side scores by inferring where the hidden opponent king is.
//!
//! All pieces step one square in any direction; there are no captures. Each
//! half-turn a player moves one non-king piece, moves the king, then submits
//! a probability distribution over the opponent king's square and scores the
//! mass placed on the true square.
//!
//! The crate is `no_std` (it needs `alloc`). IO, learned models, agents and
//! the CLI live in the `infochess` crate.

#![no_std]

extern crate alloc;

pub mod belief;
pub mod config;
pub mod encode;
pub mod infotheory;
pub mod moves;
pub mod observation;
pub mod piece;
pub mod record;
pub mod rng;
pub mod square;
pub mod state;
pub mod visibility;

pub use belief::{uniform_belief, Belief, BeliefError};
pub use config::{ConfigError, GameConfig};
pub use encode::{encode_observation, EncodedObservation};
pub use moves::{MoveAction, TurnPhase};
pub use observation::PlayerObservation;
pub use piece::{Piece, PieceKind, Team};
pub use record::{replay, GameRecord, PerTeam, ReplayError, TurnRecord};
pub use square::{Square, SquareSet};
pub use state::{GameState, RulesError};
pub use visibility::visibility_mask;

/// Version string written into record headers and model manifests.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
