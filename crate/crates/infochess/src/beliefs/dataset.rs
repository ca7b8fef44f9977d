//! Supervised data for the belief model, generated from self-play between
//! Random/VisMax mixtures with full-state labels.
//!
//! A [`TrainingSequence`] holds one player's whole game: the turn-0
//! observation, the observation at each inference point, and the labels at
//! those points. Each inference point is one [`TrainingExample`] whose
//! history is the sequence prefix ending there.

use std::io::{BufRead, Write};

use infochess_core::encode::canonical_square;
use infochess_core::rng::{derive_seed, rng_from_seed};
use infochess_core::{GameConfig, PlayerObservation, Square, SquareSet, Team};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::play::{play_game_observed, PlayError};
use crate::agents::MixtureAgent;

const MIXTURE_LABEL: u64 = 0xDA7A;

/// One player's observations and labels for a whole game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub game: u64,
    pub team: Team,
    /// Per-half-turn probability that this player moved at random.
    pub p_random: f64,
    /// Turn-0 observation followed by one observation per inference point.
    pub observations: Vec<PlayerObservation>,
    /// Opponent king square at each inference point.
    pub true_king: Vec<Square>,
    /// Squares the opponent sees at each inference point (absolute frame).
    pub true_visibility: Vec<SquareSet>,
}

/// The inference point `index` (0-based) of a sequence.
#[derive(Debug, Clone, Copy)]
pub struct TrainingExample<'a> {
    pub history: &'a [PlayerObservation],
    pub true_king: Square,
    pub true_visibility: SquareSet,
}

impl TrainingExample<'_> {
    /// Observation at the inference point itself.
    pub fn current(&self) -> &PlayerObservation {
        self.history.last().expect("histories hold the turn-0 observation")
    }

    /// Label index of the king square in the viewer's canonical frame.
    pub fn king_label(&self) -> usize {
        let obs = self.current();
        canonical_square(self.true_king, obs.viewer, obs.board_size).index()
    }

    /// Visibility labels indexed by canonical square.
    pub fn visibility_labels(&self) -> [f32; 64] {
        let obs = self.current();
        let mut y = [0.0f32; 64];
        for s in self.true_visibility.iter() {
            y[canonical_square(s, obs.viewer, obs.board_size).index()] = 1.0;
        }
        y
    }
}

impl TrainingSequence {
    /// Number of labelled examples.
    pub fn len(&self) -> usize {
        self.true_king.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_king.is_empty()
    }

    pub fn example(&self, index: usize) -> TrainingExample<'_> {
        TrainingExample {
            history: &self.observations[..index + 2],
            true_king: self.true_king[index],
            true_visibility: self.true_visibility[index],
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = TrainingExample<'_>> {
        (0..self.len()).map(|i| self.example(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub engine_version: String,
    pub games: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub sequences: Vec<TrainingSequence>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Play(#[from] PlayError),
}

impl Dataset {
    pub fn example_count(&self) -> usize {
        self.sequences.iter().map(TrainingSequence::len).sum()
    }

    pub fn examples(&self) -> impl Iterator<Item = TrainingExample<'_>> {
        self.sequences.iter().flat_map(TrainingSequence::examples)
    }

    /// Splits by game: games with index below `ceil((1 - validation) * games)`
    /// train, the rest validate.
    pub fn split(&self, validation: f64) -> (Vec<&TrainingSequence>, Vec<&TrainingSequence>) {
        let cut = ((1.0 - validation.clamp(0.0, 1.0)) * self.header.games as f64).ceil() as u64;
        self.sequences.iter().partition(|s| s.game < cut)
    }

    /// Header line, then one line per sequence.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        serde_json::to_writer(&mut w, &self.header).map_err(|e| DatasetError::Parse { line: 1, source: e })?;
        w.write_all(b"\n")?;
        for (i, s) in self.sequences.iter().enumerate() {
            serde_json::to_writer(&mut w, s).map_err(|e| DatasetError::Parse { line: i + 2, source: e })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset, DatasetError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(DatasetError::Empty)?;
        let header: DatasetHeader = serde_json::from_str(&first?).map_err(|e| DatasetError::Parse { line: 1, source: e })?;
        let mut sequences = Vec::new();
        for (i, line) in lines {
            let seq = serde_json::from_str(&line?).map_err(|e| DatasetError::Parse { line: i + 1, source: e })?;
            sequences.push(seq);
        }
        Ok(Dataset { header, sequences })
    }
}

/// Plays `n_games` games between mixture agents. For each game and side a
/// random-move probability is drawn uniformly from `[0, 1]`; the side then
/// plays each half-turn as Random with that probability and as VisMax
/// otherwise. Games are independent and generated in parallel.
pub fn generate_training_games(n_games: u64, seed: u64, config: &GameConfig) -> Result<Dataset, DatasetError> {
    let sequences: Vec<[TrainingSequence; 2]> =
        (0..n_games).into_par_iter().map(|g| generate_game(g, seed, config)).collect::<Result<_, DatasetError>>()?;
    Ok(Dataset {
        header: DatasetHeader { engine_version: infochess_core::ENGINE_VERSION.into(), games: n_games, seed },
        sequences: sequences.into_iter().flatten().collect(),
    })
}

fn generate_game(game: u64, seed: u64, config: &GameConfig) -> Result<[TrainingSequence; 2], DatasetError> {
    let game_seed = derive_seed(seed, game);
    let cfg = config.clone().with_seed(game_seed);
    let mut mix = rng_from_seed(derive_seed(game_seed, MIXTURE_LABEL));
    let p: [f64; 2] = [mix.gen(), mix.gen()];
    let mut seqs = Team::BOTH.map(|team| TrainingSequence {
        game,
        team,
        p_random: p[team.index()],
        observations: Vec::new(),
        true_king: Vec::new(),
        true_visibility: Vec::new(),
    });
    play_game_observed(&cfg, &mut MixtureAgent::new(p[0]), &mut MixtureAgent::new(p[1]), |state, team| {
        let seq = &mut seqs[team.index()];
        if seq.observations.is_empty() {
            seq.observations.push(state.history(team)[0].clone());
        }
        seq.observations.push(state.observe(team));
        seq.true_king.push(state.king_square(team.opponent()));
        seq.true_visibility.push(state.visibility_mask(team.opponent()));
    })?;
    Ok(seqs)
}
