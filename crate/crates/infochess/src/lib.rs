//! Learned belief models, agents, match harness, CLI support and the game
//! service for InfoChess. The rules engine itself lives in `infochess-core`.

pub mod agents;
pub mod beliefs;
pub mod cli;
pub mod harness;
pub mod nn;
pub mod service;
