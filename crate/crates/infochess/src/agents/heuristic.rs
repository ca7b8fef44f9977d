//! The heuristic agent table: Random, VisMax, BeliefMax, HidingVisMax and
//! HidingBeliefMax, each a combination of a non-king policy, a king policy
//! and a belief source.
//!
//! | agent           | non-king move      | king move | king belief |
//! |-----------------|--------------------|-----------|-------------|
//! | Random          | uniform            | uniform   | uniform     |
//! | VisMax          | greedy (uniform)   | uniform   | uniform     |
//! | BeliefMax       | greedy (learned)   | uniform   | learned     |
//! | HidingVisMax    | greedy (uniform)   | hiding    | uniform     |
//! | HidingBeliefMax | greedy (learned)   | hiding    | learned     |
//!
//! Learned agents query the model with their stored history plus the
//! observation at the start of the current half-turn.

use std::sync::Arc;

use infochess_core::encode::canonical_square;
use infochess_core::infotheory::{information_gain, FogPartition};
use infochess_core::rng::GameRng;
use infochess_core::{uniform_belief, Belief, MoveAction, PlayerObservation, Team};
use rand::Rng;

use super::{choose_uniform, ensure_legal, Agent, AgentError, AgentKind};
use crate::beliefs::BeliefModel;
use crate::nn::transformer::TrunkCache;

/// Greedy information-gain move: evaluates ΔH of every legal move under its
/// hypothetical fog partition and picks uniformly among the exact maximizers.
pub fn greedy_infogain_nonking(
    belief: Option<&Belief>,
    obs: &PlayerObservation,
    legal: &[MoveAction],
    rng: &mut GameRng,
) -> Option<MoveAction> {
    let Some(belief) = belief else {
        return choose_uniform(legal, rng);
    };
    let gains: Vec<f64> =
        legal.iter().map(|mv| information_gain(belief, &FogPartition::from_visible(obs.visibility_after(mv), obs.board_size))).collect();
    let best = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<MoveAction> = legal.iter().zip(&gains).filter(|(_, g)| **g == best).map(|(m, _)| *m).collect();
    choose_uniform(&argmax, rng)
}

/// King move to the destination with the lowest predicted opponent
/// visibility, ties broken uniformly. `visibility` is in `viewer`'s
/// canonical frame.
pub fn hiding_king_move(
    visibility: &[f64; 64],
    viewer: Team,
    board_size: u8,
    legal: &[MoveAction],
    rng: &mut GameRng,
) -> Option<MoveAction> {
    let score = |mv: &MoveAction| match *mv {
        MoveAction::Move { to, .. } => visibility[canonical_square(to, viewer, board_size).index()],
        MoveAction::Pass => f64::INFINITY,
    };
    let scores: Vec<f64> = legal.iter().map(score).collect();
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin: Vec<MoveAction> = legal.iter().zip(&scores).filter(|(_, s)| **s == best).map(|(m, _)| *m).collect();
    if argmin.is_empty() {
        // Only reachable when every option is a pass.
        return choose_uniform(legal, rng);
    }
    choose_uniform(&argmin, rng)
}

/// Uniform belief over the fog, ignoring whether the king is in view. Under
/// this belief ΔH ranks moves by the number of newly visible fogged squares.
fn fog_uniform(obs: &PlayerObservation) -> Option<Belief> {
    Belief::uniform_over(obs.fog()).ok()
}

/// Learned-model state carried across a game.
#[derive(Debug, Clone)]
struct ModelTrack {
    model: Arc<BeliefModel>,
    cache: TrunkCache,
    /// Representation of history plus the current half-turn's start view.
    provisional: Option<Vec<f32>>,
}

impl ModelTrack {
    fn new(model: Arc<BeliefModel>) -> ModelTrack {
        let cache = model.new_cache();
        ModelTrack { model, cache, provisional: None }
    }

    fn begin(&mut self, initial: &PlayerObservation) -> Result<(), AgentError> {
        self.cache = self.model.new_cache();
        let out = self.model.step(&self.cache, initial)?;
        self.model.commit(&mut self.cache, &out);
        self.provisional = None;
        Ok(())
    }

    fn start(&mut self, obs: &PlayerObservation) -> Result<(), AgentError> {
        let out = self.model.step(&self.cache, obs)?;
        self.provisional = Some(out.representation);
        Ok(())
    }

    fn provisional(&self) -> Result<&[f32], AgentError> {
        self.provisional.as_deref().ok_or(AgentError::NotStarted)
    }

    /// Appends the inference-point observation and returns its representation.
    fn commit(&mut self, obs: &PlayerObservation) -> Result<Vec<f32>, AgentError> {
        let out = self.model.step(&self.cache, obs)?;
        self.model.commit(&mut self.cache, &out);
        self.provisional = None;
        Ok(out.representation)
    }
}

/// One of the heuristic agents.
#[derive(Debug, Clone)]
pub struct HeuristicAgent {
    kind: AgentKind,
    team: Option<Team>,
    track: Option<ModelTrack>,
}

impl HeuristicAgent {
    pub fn new(kind: AgentKind, model: Option<Arc<BeliefModel>>) -> Result<HeuristicAgent, AgentError> {
        if kind == AgentKind::Rl {
            return Err(AgentError::MissingModel { agent: kind });
        }
        let track = if kind.needs_model() { Some(ModelTrack::new(model.ok_or(AgentError::MissingModel { agent: kind })?)) } else { None };
        Ok(HeuristicAgent { kind, team: None, track })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    fn learned_belief(&self) -> bool {
        matches!(self.kind, AgentKind::BeliefMax | AgentKind::HidingBeliefMax)
    }

    fn hides(&self) -> bool {
        matches!(self.kind, AgentKind::HidingVisMax | AgentKind::HidingBeliefMax)
    }

    fn team(&self) -> Result<Team, AgentError> {
        self.team.ok_or(AgentError::NotStarted)
    }

    fn track(&self) -> Result<&ModelTrack, AgentError> {
        self.track.as_ref().ok_or(AgentError::MissingModel { agent: self.kind })
    }
}

/// The learned belief with a visible king overriding the model.
pub(crate) fn learned_or_seen(model: &BeliefModel, z: &[f32], obs: &PlayerObservation) -> Result<Belief, AgentError> {
    match obs.opponent_king() {
        Some(king) => Ok(Belief::one_hot(king)),
        None => Ok(model.king_belief_from(z, obs)?),
    }
}

impl Agent for HeuristicAgent {
    fn label(&self) -> String {
        self.kind.name().into()
    }

    fn begin(&mut self, team: Team, initial: &PlayerObservation) -> Result<(), AgentError> {
        self.team = Some(team);
        if let Some(track) = self.track.as_mut() {
            track.begin(initial)?;
        }
        Ok(())
    }

    fn start_half_turn(&mut self, obs: &PlayerObservation) -> Result<Belief, AgentError> {
        self.team()?;
        if let Some(track) = self.track.as_mut() {
            track.start(obs)?;
        }
        if self.learned_belief() {
            let track = self.track()?;
            learned_or_seen(&track.model, track.provisional()?, obs)
        } else {
            Ok(uniform_belief(obs)?)
        }
    }

    fn choose_non_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        let choice = match self.kind {
            AgentKind::Random => choose_uniform(legal, rng),
            AgentKind::VisMax | AgentKind::HidingVisMax => greedy_infogain_nonking(fog_uniform(obs).as_ref(), obs, legal, rng),
            _ => {
                let track = self.track()?;
                let belief = track.model.king_belief_from(track.provisional()?, obs)?;
                greedy_infogain_nonking(Some(&belief), obs, legal, rng)
            }
        };
        ensure_legal(choice.ok_or(AgentError::NoMoves)?, legal)
    }

    fn choose_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        let choice = if self.hides() {
            let track = self.track()?;
            let visibility = track.model.visibility_from(track.provisional()?)?;
            hiding_king_move(&visibility, self.team()?, obs.board_size, legal, rng)
        } else {
            choose_uniform(legal, rng)
        };
        ensure_legal(choice.ok_or(AgentError::NoMoves)?, legal)
    }

    fn infer(&mut self, obs: &PlayerObservation, _rng: &mut GameRng) -> Result<Belief, AgentError> {
        let z = match self.track.as_mut() {
            Some(track) => Some(track.commit(obs)?),
            None => None,
        };
        match (self.learned_belief(), z) {
            (true, Some(z)) => learned_or_seen(&self.track()?.model, &z, obs),
            _ => Ok(uniform_belief(obs)?),
        }
    }
}

/// Plays each half-turn as Random with probability `p_random`, otherwise as
/// VisMax; always submits the uniform belief. Used to generate training data.
#[derive(Debug, Clone)]
pub struct MixtureAgent {
    p_random: f64,
    random_now: bool,
}

impl MixtureAgent {
    pub fn new(p_random: f64) -> MixtureAgent {
        MixtureAgent { p_random, random_now: false }
    }
}

impl Agent for MixtureAgent {
    fn label(&self) -> String {
        format!("mixture(p_random={:.3})", self.p_random)
    }

    fn begin(&mut self, _team: Team, _initial: &PlayerObservation) -> Result<(), AgentError> {
        Ok(())
    }

    fn start_half_turn(&mut self, obs: &PlayerObservation) -> Result<Belief, AgentError> {
        Ok(uniform_belief(obs)?)
    }

    fn choose_non_king(&mut self, obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        self.random_now = rng.gen::<f64>() < self.p_random;
        let choice =
            if self.random_now { choose_uniform(legal, rng) } else { greedy_infogain_nonking(fog_uniform(obs).as_ref(), obs, legal, rng) };
        ensure_legal(choice.ok_or(AgentError::NoMoves)?, legal)
    }

    fn choose_king(&mut self, _obs: &PlayerObservation, legal: &[MoveAction], rng: &mut GameRng) -> Result<MoveAction, AgentError> {
        ensure_legal(choose_uniform(legal, rng).ok_or(AgentError::NoMoves)?, legal)
    }

    fn infer(&mut self, obs: &PlayerObservation, _rng: &mut GameRng) -> Result<Belief, AgentError> {
        Ok(uniform_belief(obs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use infochess_core::rng::rng_from_seed;
    use infochess_core::{GameConfig, GameState, Piece, PieceKind, Square, TurnPhase};

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    /// Chi-square statistic of `counts` against a uniform expectation.
    fn chi_square(counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let e = n as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn greedy_prefers_the_revealing_move() {
        // The rook can step onto the open file; every other move reveals nothing new.
        let pieces = vec![
            Piece::new(PieceKind::King, Team::White, sq("a1")),
            Piece::new(PieceKind::Pawn, Team::White, sq("a2")),
            Piece::new(PieceKind::Pawn, Team::White, sq("b2")),
            Piece::new(PieceKind::Rook, Team::White, sq("b1")),
            Piece::new(PieceKind::King, Team::Black, sq("h8")),
        ];
        let state = GameState::from_position(GameConfig::default(), pieces).unwrap();
        let obs = state.observe(Team::White);
        let legal = state.legal_moves(Team::White, TurnPhase::NonKingMove).unwrap();
        let belief = fog_uniform(&obs).unwrap();
        let counts: Vec<usize> = legal.iter().map(|m| obs.visibility_after(m).difference(obs.visible).len() as usize).collect();
        let best = *counts.iter().max().unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            let mv = greedy_infogain_nonking(Some(&belief), &obs, &legal, &mut rng).unwrap();
            let i = legal.iter().position(|m| *m == mv).unwrap();
            assert_eq!(counts[i], best);
        }
    }

    #[test]
    fn greedy_ties_are_uniform() {
        // A one-hot belief gives zero gain for every move: all moves tie.
        let state = GameState::new_game(GameConfig::default()).unwrap();
        let obs = state.observe(Team::White);
        let legal = state.legal_moves(Team::White, TurnPhase::NonKingMove).unwrap();
        let belief = Belief::one_hot(sq("h8"));
        let mut rng = rng_from_seed(2);
        let mut counts = vec![0usize; legal.len()];
        for _ in 0..10_000 {
            let mv = greedy_infogain_nonking(Some(&belief), &obs, &legal, &mut rng).unwrap();
            counts[legal.iter().position(|m| *m == mv).unwrap()] += 1;
        }
        // 99.9th percentile of chi-square with k-1 degrees of freedom is below 3k for these sizes.
        assert!(chi_square(&counts) < 3.0 * legal.len() as f64, "{counts:?}");
        let expected = 10_000.0 / legal.len() as f64;
        let sigma = (expected * (1.0 - 1.0 / legal.len() as f64)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 4.0 * sigma));
    }

    #[test]
    fn hiding_picks_minimum_and_ties_uniformly() {
        let state = GameState::new_game(GameConfig::default()).unwrap();
        let king = state.king_square(Team::White);
        let mut s = state.clone();
        let nk = s.legal_moves(Team::White, TurnPhase::NonKingMove).unwrap()[0];
        s.apply_move(nk).unwrap();
        let kings = s.legal_moves(Team::White, TurnPhase::KingMove).unwrap();
        assert!(kings.len() >= 2, "king at {king} has {kings:?}");
        let mut vis = [0.9f64; 64];
        let target = match kings[1] {
            MoveAction::Move { to, .. } => to,
            MoveAction::Pass => unreachable!(),
        };
        vis[target.index()] = 0.1;
        let mut rng = rng_from_seed(3);
        assert_eq!(hiding_king_move(&vis, Team::White, 8, &kings, &mut rng), Some(kings[1]));

        let flat = [0.5f64; 64];
        let mut counts = vec![0usize; kings.len()];
        for _ in 0..10_000 {
            let mv = hiding_king_move(&flat, Team::White, 8, &kings, &mut rng).unwrap();
            counts[kings.iter().position(|m| *m == mv).unwrap()] += 1;
        }
        let expected = 10_000.0 / kings.len() as f64;
        let sigma = (expected * (1.0 - 1.0 / kings.len() as f64)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 4.0 * sigma), "{counts:?}");
        assert_eq!(hiding_king_move(&flat, Team::White, 8, &[MoveAction::Pass], &mut rng), Some(MoveAction::Pass));
    }

    #[test]
    fn hiding_uses_black_canonical_frame() {
        let kings = [MoveAction::new(PieceKind::King, sq("d8"), sq("d7")), MoveAction::new(PieceKind::King, sq("d8"), sq("e8"))];
        let mut vis = [0.9f64; 64];
        // d7 for Black is d2 in the canonical frame.
        vis[sq("d2").index()] = 0.0;
        let mut rng = rng_from_seed(4);
        assert_eq!(hiding_king_move(&vis, Team::Black, 8, &kings, &mut rng), Some(kings[0]));
    }

    #[test]
    fn random_agent_is_uniform_and_submits_uniform_belief() {
        let state = GameState::new_game(GameConfig::default()).unwrap();
        let obs = state.observe(Team::White);
        let legal = state.legal_moves(Team::White, TurnPhase::NonKingMove).unwrap();
        let mut agent = HeuristicAgent::new(AgentKind::Random, None).unwrap();
        agent.begin(Team::White, &obs).unwrap();
        let mut rng = rng_from_seed(5);
        let mut counts = vec![0usize; legal.len()];
        for _ in 0..10_000 {
            let mv = agent.choose_non_king(&obs, &legal, &mut rng).unwrap();
            counts[legal.iter().position(|m| *m == mv).unwrap()] += 1;
        }
        let expected = 10_000.0 / legal.len() as f64;
        let sigma = (expected * (1.0 - 1.0 / legal.len() as f64)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 4.0 * sigma), "{counts:?}");
        assert_eq!(agent.infer(&obs, &mut rng).unwrap(), uniform_belief(&obs).unwrap());
        let single = [legal[0]];
        assert_eq!(agent.choose_non_king(&obs, &single, &mut rng).unwrap(), legal[0]);
    }
}
