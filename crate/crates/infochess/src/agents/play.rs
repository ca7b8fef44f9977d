//! Drives one game between two agents and logs per-turn metrics.

use infochess_core::infotheory::{
    belief_entropy, observer_cross_entropy_sample, oracle_cross_entropy_sample, FogPartition, MetricSample, Observation,
};
use infochess_core::rng::{stream_rng, GameRng, Stream};
use infochess_core::{Belief, ConfigError, GameConfig, GameRecord, GameState, MoveAction, RulesError, Team, TurnPhase, TurnRecord};
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError};

/// Everything one player decided in a half-turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDecision {
    pub non_king: MoveAction,
    pub king: MoveAction,
    pub belief: Belief,
}

#[derive(Debug, Clone)]
pub struct PlayedGame {
    pub record: GameRecord,
    /// One sample per half-turn, in play order.
    pub samples: Vec<MetricSample>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{team} agent failed at half-turn {half_turn}: {source}")]
    Agent { team: Team, half_turn: u32, source: AgentError },
    #[error(transparent)]
    Rules(#[from] RulesError),
}

/// Plays a full game. Agent randomness comes from per-team streams of the
/// configuration seed, so the outcome is a pure function of the inputs.
pub fn play_game(config: &GameConfig, white: &mut dyn Agent, black: &mut dyn Agent) -> Result<PlayedGame, PlayError> {
    play_game_observed(config, white, black, |_, _| {})
}

/// Like [`play_game`], calling `at_inference(state, team)` at every
/// inference point before the belief is scored.
pub fn play_game_observed(
    config: &GameConfig,
    white: &mut dyn Agent,
    black: &mut dyn Agent,
    mut at_inference: impl FnMut(&GameState, Team),
) -> Result<PlayedGame, PlayError> {
    let mut state = GameState::new_game(config.clone())?;
    let mut record = GameRecord::start(&state);
    let mut rngs = [stream_rng(config.seed, Stream::WhiteAgent), stream_rng(config.seed, Stream::BlackAgent)];
    let agents: [&mut dyn Agent; 2] = [white, black];
    for team in Team::BOTH {
        let initial = &state.history(team)[0];
        agents[team.index()].begin(team, initial).map_err(|source| PlayError::Agent { team, half_turn: 0, source })?;
    }
    let mut samples = Vec::with_capacity(config.half_turns() as usize);
    while !state.is_over() {
        let team = state.to_move();
        let agent = &mut *agents[team.index()];
        let (turn, sample) = play_half_turn(&mut state, agent, &mut rngs[team.index()], &mut at_inference)?;
        samples.push(sample);
        record.push(turn);
    }
    // Per-turn deltas and the rules engine accumulate in the same order, so
    // the record totals equal the state scores exactly.
    debug_assert_eq!(record.final_scores.white, state.score(Team::White));
    debug_assert_eq!(record.final_scores.black, state.score(Team::Black));
    Ok(PlayedGame { record, samples })
}

/// Plays the half-turn of the side to move with `agent` and scores its
/// belief.
pub fn play_half_turn(
    state: &mut GameState,
    agent: &mut dyn Agent,
    rng: &mut GameRng,
    mut at_inference: impl FnMut(&GameState, Team),
) -> Result<(TurnRecord, MetricSample), PlayError> {
    let team = state.to_move();
    let half_turn = state.turn_index();
    let fail = |source| PlayError::Agent { team, half_turn, source };

    let start = state.observe(team);
    let prior = agent.start_half_turn(&start).map_err(fail)?;
    let legal = state.legal_moves(team, TurnPhase::NonKingMove)?;
    let non_king = agent.choose_non_king(&start, &legal, rng).map_err(fail)?;
    state.apply_move(non_king).map_err(|e| fail(e.into()))?;

    let mid = state.observe(team);
    let legal = state.legal_moves(team, TurnPhase::KingMove)?;
    let king = agent.choose_king(&mid, &legal, rng).map_err(fail)?;
    state.apply_move(king).map_err(|e| fail(e.into()))?;

    let view = state.observe(team);
    at_inference(state, team);
    let belief = agent.infer(&view, rng).map_err(fail)?;
    let true_king = state.king_square(team.opponent());
    let turn = state.side_turn();
    let score_delta = state.record_inference(team, &belief).map_err(|e| fail(e.into()))?;

    let part = FogPartition::from_visible(view.visible, state.config().board_size);
    let observer_ce = observer_cross_entropy_sample(&prior, &part, Observation::of_king(true_king, &part))
        .expect("the realized observation is consistent with its own partition");
    let sample = MetricSample {
        turn,
        team,
        score_delta,
        belief_entropy: belief_entropy(&belief),
        oracle_ce: oracle_cross_entropy_sample(&belief, true_king),
        observer_ce,
    };
    let record = TurnRecord { team, non_king_move: non_king, king_move: king, belief, true_opponent_king: true_king, score_delta };
    Ok((record, sample))
}
