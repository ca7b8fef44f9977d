//! Learned beliefs over the opponent king's square and over own-king exposure.
//!
//! A [`BeliefModel`] reads a player's observation history (the turn-0
//! observation plus one observation per inference point) and predicts a
//! distribution over the opponent king's square and, per square, the
//! probability that the opponent currently sees it. Both heads share one
//! transformer trunk; everything is computed in the viewer's canonical frame.

pub mod dataset;
pub mod train;

use std::io::{Read, Write};
use std::path::Path;

use infochess_core::encode::{canonical_square, encode_observation, EncodedObservation};
use infochess_core::{Belief, BeliefError, PlayerObservation, Square, SquareSet, Team};
use sha2::{Digest, Sha256};

use crate::nn::bundle::{check_shapes, read_bundle, write_bundle, BundleError, Manifest};
use crate::nn::transformer::{Head, Layout, ModelDims, SequenceError, StepOutput, TransformerParams, TrunkCache};

pub use dataset::{generate_training_games, Dataset, DatasetError, DatasetHeader, TrainingExample, TrainingSequence};
pub use train::{
    evaluate_belief_model, train_belief_models, BeliefTrainingConfig, EpochStats, TrainError, TrainedBeliefModel, ValidationReport,
};

const BUNDLE_KIND: &str = "belief-model";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history token for {found} cannot follow tokens for {expected}")]
    WrongViewer { expected: Team, found: Team },
    #[error("history turn indices must strictly increase ({previous} then {next})")]
    TurnOrder { previous: u32, next: u32 },
    #[error("learned models require an 8x8 board, got {0}x{0}")]
    BoardSize(u8),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("model produced non-finite logits")]
    NonFinite,
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("observation leaves no square where the opponent king can be")]
    EmptySupport,
}

/// Canonical squares where the opponent king can stand given `obs`: only the
/// seen king's square if it is visible, otherwise every fogged square.
pub fn king_support(obs: &PlayerObservation) -> [bool; 64] {
    let mut allowed = [false; 64];
    let squares = match obs.opponent_king() {
        Some(k) => std::iter::once(k).collect::<SquareSet>(),
        None => obs.fog(),
    };
    for s in squares.iter() {
        allowed[canonical_square(s, obs.viewer, obs.board_size).index()] = true;
    }
    allowed
}

/// Log-softmax of `logits` restricted to `allowed`; excluded entries are `-inf`.
pub fn masked_log_softmax(logits: &[f32], allowed: &[bool; 64]) -> Result<Vec<f64>, ModelError> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let max = logits.iter().zip(allowed).filter(|(_, a)| **a).map(|(l, _)| *l as f64).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ModelError::EmptySupport);
    }
    let lse = logits.iter().zip(allowed).filter(|(_, a)| **a).map(|(&l, _)| (l as f64 - max).exp()).sum::<f64>().ln() + max;
    Ok(logits.iter().zip(allowed).map(|(&l, &a)| if a { l as f64 - lse } else { f64::NEG_INFINITY }).collect())
}

/// Encoded observation history of one player, oldest first.
#[derive(Debug, Clone)]
pub struct HistoryEncoding {
    viewer: Team,
    tokens: Vec<EncodedObservation>,
    turns: Vec<u32>,
    support: [bool; 64],
}

impl HistoryEncoding {
    pub fn new(viewer: Team) -> HistoryEncoding {
        HistoryEncoding { viewer, tokens: Vec::new(), turns: Vec::new(), support: [false; 64] }
    }

    pub fn from_observations(viewer: Team, observations: &[PlayerObservation]) -> Result<HistoryEncoding, ModelError> {
        let mut h = HistoryEncoding::new(viewer);
        for obs in observations {
            h.push(obs)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, obs: &PlayerObservation) -> Result<(), ModelError> {
        if obs.viewer != self.viewer {
            return Err(ModelError::WrongViewer { expected: self.viewer, found: obs.viewer });
        }
        if obs.board_size != 8 {
            return Err(ModelError::BoardSize(obs.board_size));
        }
        if let Some(&previous) = self.turns.last() {
            // The turn-0 observation precedes White's first half-turn, which
            // shares its index.
            let after_pregame = self.turns.len() == 1 && previous == 0 && obs.turn_index == 0;
            if obs.turn_index <= previous && !after_pregame {
                return Err(ModelError::TurnOrder { previous, next: obs.turn_index });
            }
        }
        self.tokens.push(encode_observation(obs));
        self.turns.push(obs.turn_index);
        self.support = king_support(obs);
        Ok(())
    }

    pub fn viewer(&self) -> Team {
        self.viewer
    }

    pub fn tokens(&self) -> &[EncodedObservation] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Shared trunk with a king head and a visibility head.
#[derive(Debug, Clone)]
pub struct BeliefModel {
    params: TransformerParams,
}

impl BeliefModel {
    pub fn init(dims: ModelDims, seed: u64) -> BeliefModel {
        BeliefModel { params: TransformerParams::init(dims, seed) }
    }

    pub fn from_params(params: TransformerParams) -> BeliefModel {
        BeliefModel { params }
    }

    pub fn params(&self) -> &TransformerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut TransformerParams {
        &mut self.params
    }

    pub fn dims(&self) -> &ModelDims {
        self.params.dims()
    }

    /// Hex SHA-256 of the trunk parameters' little-endian bytes.
    pub fn trunk_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.params.trunk() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn new_cache(&self) -> TrunkCache {
        self.params.new_cache()
    }

    /// Runs the trunk on one more observation after the cached history.
    pub fn step(&self, cache: &TrunkCache, obs: &PlayerObservation) -> Result<StepOutput, ModelError> {
        if obs.board_size != 8 {
            return Err(ModelError::BoardSize(obs.board_size));
        }
        Ok(self.params.step(cache, encode_observation(obs).as_slice())?)
    }

    pub fn commit(&self, cache: &mut TrunkCache, out: &StepOutput) {
        self.params.commit(cache, out)
    }

    /// Trunk representation of the whole history (its last position).
    pub fn representation(&self, history: &HistoryEncoding) -> Result<Vec<f32>, ModelError> {
        if history.is_empty() {
            return Err(ModelError::EmptyHistory);
        }
        let refs: Vec<&[f32]> = history.tokens.iter().map(|t| t.as_slice()).collect();
        Ok(self.params.encode_last(&refs)?)
    }

    /// Softmax of the king head over the squares `obs` leaves possible,
    /// mapped back to absolute squares. `obs` is the observation the
    /// representation ends with.
    pub fn king_belief_from(&self, representation: &[f32], obs: &PlayerObservation) -> Result<Belief, ModelError> {
        self.king_belief_masked(representation, obs.viewer, &king_support(obs))
    }

    fn king_belief_masked(&self, representation: &[f32], viewer: Team, allowed: &[bool; 64]) -> Result<Belief, ModelError> {
        let logits = self.params.head_logits(Head::King, representation);
        let lp = masked_log_softmax(&logits, allowed)?;
        let mut probs = [0.0f64; 64];
        for (c, l) in lp.iter().enumerate() {
            let absolute = canonical_square(Square::from_index(c).expect("64 logits"), viewer, 8);
            probs[absolute.index()] = l.exp();
        }
        Ok(Belief::normalized(&probs)?)
    }

    /// Per-square sigmoid of the visibility head, in the viewer's canonical frame.
    pub fn visibility_from(&self, representation: &[f32]) -> Result<[f64; 64], ModelError> {
        let logits = self.params.head_logits(Head::Visibility, representation);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let mut out = [0.0f64; 64];
        for (o, &l) in out.iter_mut().zip(&logits) {
            *o = 1.0 / (1.0 + (-(l as f64)).exp());
        }
        Ok(out)
    }

    pub fn predict_king_belief(&self, history: &HistoryEncoding) -> Result<Belief, ModelError> {
        let z = self.representation(history)?;
        self.king_belief_masked(&z, history.viewer(), &history.support)
    }

    /// Probability that the opponent sees each square, in the viewer's canonical frame.
    pub fn predict_visibility(&self, history: &HistoryEncoding) -> Result<[f64; 64], ModelError> {
        let z = self.representation(history)?;
        self.visibility_from(&z)
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            kind: BUNDLE_KIND.into(),
            engine_version: infochess_core::ENGINE_VERSION.into(),
            tensors: self.params.layout.specs.clone(),
            meta: serde_json::json!({ "dims": self.dims(), "trunk_sha256": self.trunk_hash() }),
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), ModelError> {
        Ok(write_bundle(w, &self.manifest(), &self.params.data)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<BeliefModel, ModelError> {
        let (manifest, data) = read_bundle(r, BUNDLE_KIND)?;
        let dims: ModelDims =
            serde_json::from_value(manifest.meta.get("dims").cloned().unwrap_or_default()).map_err(BundleError::Manifest)?;
        let layout = Layout::new(dims);
        check_shapes(&layout.specs, &manifest.tensors)?;
        Ok(BeliefModel { params: TransformerParams { layout, data } })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path).map_err(BundleError::Io)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<BeliefModel, ModelError> {
        let file = std::fs::File::open(path).map_err(BundleError::Io)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use infochess_core::{GameConfig, GameState, TurnPhase};

    fn small() -> ModelDims {
        ModelDims { width: 16, heads: 2, layers: 1, ffn: 24, head_hidden: 12, ..ModelDims::default() }
    }

    fn played_history(half_turns: u32) -> (GameState, HistoryEncoding) {
        let mut state = GameState::new_game(GameConfig::default().with_seed(3)).unwrap();
        for _ in 0..half_turns {
            let team = state.to_move();
            for phase in [TurnPhase::NonKingMove, TurnPhase::KingMove] {
                let moves = state.legal_moves(team, phase).unwrap();
                state.apply_move(moves[moves.len() / 2]).unwrap();
            }
            let belief = infochess_core::uniform_belief(&state.observe(team)).unwrap();
            state.record_inference(team, &belief).unwrap();
        }
        let h = HistoryEncoding::from_observations(Team::White, state.history(Team::White)).unwrap();
        (state, h)
    }

    #[test]
    fn zero_heads_give_uniform_over_fog_and_half() {
        let mut model = BeliefModel::init(small(), 1);
        model.params_mut().zero_head(Head::King);
        model.params_mut().zero_head(Head::Visibility);
        let (state, h) = played_history(6);
        let z = model.representation(&h).unwrap();
        let logits = model.params().head_logits(Head::King, &z);
        assert!(logits.iter().all(|l| *l == 0.0));
        // Equal logits over the possible squares reproduce the uniform belief.
        let last = state.history(Team::White).last().unwrap();
        let b = model.predict_king_belief(&h).unwrap();
        let u = infochess_core::uniform_belief(last).unwrap();
        for (p, q) in b.probs().iter().zip(u.probs()) {
            assert!((p - q).abs() < 1e-15);
        }
        assert!(model.predict_visibility(&h).unwrap().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn predictions_are_normalized_and_pure() {
        let model = BeliefModel::init(small(), 2);
        let (_, h) = played_history(8);
        let a = model.predict_king_belief(&h).unwrap();
        let b = model.predict_king_belief(&h).unwrap();
        assert_eq!(a, b);
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let v = model.predict_visibility(&h).unwrap();
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn cached_steps_match_from_scratch_bitwise() {
        let model = BeliefModel::init(small(), 4);
        let (state, h) = played_history(10);
        let mut cache = model.new_cache();
        let mut last = None;
        for obs in state.history(Team::White) {
            let out = model.step(&cache, obs).unwrap();
            model.commit(&mut cache, &out);
            last = Some(out.representation);
        }
        let last_obs = state.history(Team::White).last().unwrap();
        let cached = model.king_belief_from(&last.unwrap(), last_obs).unwrap();
        assert_eq!(cached, model.predict_king_belief(&h).unwrap());
    }

    #[test]
    fn history_validation() {
        let model = BeliefModel::init(small(), 5);
        assert!(matches!(model.predict_king_belief(&HistoryEncoding::new(Team::White)), Err(ModelError::EmptyHistory)));
        let state = GameState::new_game(GameConfig::default()).unwrap();
        let obs = state.observe(Team::Black);
        let mut h = HistoryEncoding::new(Team::White);
        assert!(matches!(h.push(&obs), Err(ModelError::WrongViewer { .. })));
        let mut h = HistoryEncoding::new(Team::Black);
        h.push(&obs).unwrap();
        h.push(&obs).unwrap();
        assert!(matches!(h.push(&obs), Err(ModelError::TurnOrder { .. })));
    }

    #[test]
    fn bundle_round_trip_and_shape_check() {
        let model = BeliefModel::init(small(), 6);
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let loaded = BeliefModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(loaded.params().data, model.params().data);
        assert_eq!(loaded.trunk_hash(), model.trunk_hash());
        assert_eq!(model.trunk_hash().len(), 64);
    }
}
