//! Session state and the synchronous game logic behind every endpoint.
//!
//! Each session owns its game, its agent and the agent's random stream.
//! Requests that fail validation return an error and leave the session
//! exactly as it was.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use infochess_core::record::outcome;
use infochess_core::rng::{stream_rng, GameRng, Stream};
use infochess_core::{Belief, GameConfig, GameRecord, GameState, MoveAction, Team, TurnPhase, TurnRecord};
use rand::Rng;

use super::wire::{resolve_move, CreateSession, ErrorCode, ServerMessage, SubmitInference, SubmitMove, TeamChoice};
use super::ServiceConfig;
use crate::agents::{play_half_turn, Agent, AgentFactory, AgentSpec};

/// Source of the current time, measured from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Monotonic wall-clock time.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    millis: AtomicU64,
}

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        self.millis.fetch_add(by.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_millis(self.millis.load(Ordering::SeqCst))
    }
}

/// A rejected request.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ServiceError {
    pub code: ErrorCode,
    pub message: String,
    pub legal_moves: Option<Vec<MoveAction>>,
}

impl ServiceError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> ServiceError {
        ServiceError { code, message: message.into(), legal_moves: None }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Error { code: self.code, message: self.message.clone(), legal_moves: self.legal_moves.clone() }
    }
}

type Reply = Result<Vec<ServerMessage>, ServiceError>;

struct Session {
    id: String,
    seed: u64,
    state: GameState,
    human: Team,
    agent: Box<dyn Agent>,
    agent_rng: GameRng,
    record: GameRecord,
    /// Human moves of the current half-turn.
    pending: Vec<MoveAction>,
    last_active: Duration,
}

impl Session {
    fn agent_team(&self) -> Team {
        self.human.opponent()
    }

    fn human_to_move(&self) -> bool {
        !self.state.is_over() && self.state.to_move() == self.human
    }

    /// Plays agent half-turns until the human is to move or the game ends.
    fn advance_agent(&mut self) -> Result<(), ServiceError> {
        while !self.state.is_over() && self.state.to_move() == self.agent_team() {
            let (turn, _) = play_half_turn(&mut self.state, self.agent.as_mut(), &mut self.agent_rng, |_, _| {})
                .map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
            self.record.push(turn);
        }
        Ok(())
    }

    fn state_update(&self, blind: bool) -> ServerMessage {
        if self.state.is_over() {
            return self.game_over();
        }
        ServerMessage::StateUpdate {
            session: self.id.clone(),
            turn: self.state.turn_index(),
            phase: self.state.phase(),
            to_move: self.state.to_move(),
            your_team: self.human,
            your_view: self.state.observe(self.human),
            your_score: (!blind).then(|| self.state.score(self.human)),
            opponent_score_visible: false,
        }
    }

    fn legal_moves(&self) -> Result<ServerMessage, ServiceError> {
        let phase = self.state.phase();
        if !self.human_to_move() || phase == TurnPhase::Inference {
            return Err(self.wrong_phase("no move is expected from you now"));
        }
        let moves = self.state.legal_moves(self.human, phase).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
        Ok(ServerMessage::LegalMoves { session: self.id.clone(), phase, moves })
    }

    /// State update, followed by the legal moves when a move is expected.
    fn prompt(&self, blind: bool) -> Vec<ServerMessage> {
        let mut out = vec![self.state_update(blind)];
        if let Ok(moves) = self.legal_moves() {
            out.push(moves);
        }
        out
    }

    fn game_over(&self) -> ServerMessage {
        let f = self.record.final_scores;
        ServerMessage::GameOver {
            session: self.id.clone(),
            seed: self.seed,
            final_scores: f,
            winner: outcome(f.white, f.black),
            record: self.record.clone(),
        }
    }

    fn wrong_phase(&self, message: &str) -> ServiceError {
        if self.state.is_over() {
            ServiceError::new(ErrorCode::GameOver, "the game is over")
        } else {
            ServiceError::new(
                ErrorCode::WrongPhase,
                format!("{message} (phase {:?}, {} to move)", self.state.phase(), self.state.to_move()),
            )
        }
    }

    fn submit_move(&mut self, submit: &SubmitMove, blind: bool) -> Reply {
        let phase = self.state.phase();
        if !self.human_to_move() || phase == TurnPhase::Inference || submit.phase != phase {
            return Err(self.wrong_phase("unexpected move"));
        }
        let legal = self.state.legal_moves(self.human, phase).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
        let Some(mv) = resolve_move(submit, &legal) else {
            return Err(ServiceError { code: ErrorCode::IllegalMove, message: "move is not legal".into(), legal_moves: Some(legal) });
        };
        self.state.apply_move(mv).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
        self.pending.push(mv);
        Ok(self.prompt(blind))
    }

    fn submit_inference(&mut self, submit: &SubmitInference, blind: bool) -> Reply {
        if !self.human_to_move() || self.state.phase() != TurnPhase::Inference {
            return Err(self.wrong_phase("unexpected inference"));
        }
        let belief = match submit {
            SubmitInference::SingleSquare { single_square } => {
                if single_square.file() >= self.state.config().board_size || single_square.rank() >= self.state.config().board_size {
                    return Err(ServiceError::new(ErrorCode::InvalidBelief, "square is off the board"));
                }
                Belief::one_hot(*single_square)
            }
            SubmitInference::Belief { belief } => {
                Belief::from_slice(belief).map_err(|e| ServiceError::new(ErrorCode::InvalidBelief, e.to_string()))?
            }
        };
        let true_king = self.state.king_square(self.agent_team());
        let score_delta =
            self.state.record_inference(self.human, &belief).map_err(|e| ServiceError::new(ErrorCode::InvalidBelief, e.to_string()))?;
        let [non_king, king] = [self.pending[0], self.pending[1]];
        self.pending.clear();
        self.record.push(TurnRecord {
            team: self.human,
            non_king_move: non_king,
            king_move: king,
            belief,
            true_opponent_king: true_king,
            score_delta,
        });
        self.advance_agent()?;
        let mut out = vec![ServerMessage::TurnResult { session: self.id.clone(), score_delta: (!blind).then_some(score_delta) }];
        out.extend(self.prompt(blind));
        Ok(out)
    }
}

/// All live sessions.
pub struct SessionManager {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    factory: Mutex<AgentFactory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    expired: Mutex<HashSet<String>>,
}

impl SessionManager {
    pub fn new(config: ServiceConfig, factory: AgentFactory, clock: Arc<dyn Clock>) -> SessionManager {
        SessionManager {
            config,
            clock,
            factory: Mutex::new(factory),
            sessions: Mutex::new(HashMap::new()),
            expired: Mutex::new(HashSet::new()),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.config.idle_timeout_secs)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    /// Starts a game. When the agent plays White its first half-turn is
    /// resolved before the initial state update.
    pub fn create(&self, req: &CreateSession) -> Result<(String, Vec<ServerMessage>), ServiceError> {
        let spec: AgentSpec =
            req.agent.parse().map_err(|e: crate::agents::ParseAgentError| ServiceError::new(ErrorCode::UnknownAgent, e.to_string()))?;
        let blueprint = self
            .factory
            .lock()
            .expect("factory lock")
            .resolve(&spec)
            .map_err(|e| ServiceError::new(ErrorCode::UnknownAgent, e.to_string()))?;
        let seed = req.seed.unwrap_or_else(|| rand::thread_rng().gen());
        let human = match req.human_team {
            TeamChoice::White => Team::White,
            TeamChoice::Black => Team::Black,
            TeamChoice::Random => {
                if stream_rng(seed, Stream::ColorAssignment).gen::<bool>() {
                    Team::White
                } else {
                    Team::Black
                }
            }
        };
        let game: GameConfig = self.config.game.clone().with_seed(seed);
        let state = GameState::new_game(game).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
        let agent_team = human.opponent();
        let mut agent = blueprint.build();
        agent.begin(agent_team, &state.history(agent_team)[0]).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))?;
        let stream = if agent_team == Team::White { Stream::WhiteAgent } else { Stream::BlackAgent };
        let id = uuid::Uuid::new_v4().to_string();
        let mut session = Session {
            id: id.clone(),
            seed,
            record: GameRecord::start(&state),
            state,
            human,
            agent,
            agent_rng: stream_rng(seed, stream),
            pending: Vec::new(),
            last_active: self.clock.now(),
        };
        session.advance_agent()?;
        let messages = session.prompt(self.config.blind);
        self.sessions.lock().expect("session map lock").insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok((id, messages))
    }

    /// Runs `f` on a live session, expiring it first if it has been idle
    /// longer than the timeout.
    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session, bool) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let now = self.clock.now();
        let session = {
            let mut sessions = self.sessions.lock().expect("session map lock");
            let Some(s) = sessions.get(id).cloned() else {
                let code = if self.expired.lock().expect("expired lock").contains(id) { ErrorCode::Gone } else { ErrorCode::NotFound };
                return Err(ServiceError::new(code, format!("no live session {id}")));
            };
            let idle = now.saturating_sub(s.lock().expect("session lock").last_active);
            if idle > self.timeout() {
                sessions.remove(id);
                self.expired.lock().expect("expired lock").insert(id.to_string());
                return Err(ServiceError::new(ErrorCode::Gone, format!("session {id} expired")));
            }
            s
        };
        let mut guard = session.lock().expect("session lock");
        guard.last_active = now;
        f(&mut guard, self.config.blind)
    }

    pub fn state(&self, id: &str) -> Result<ServerMessage, ServiceError> {
        self.with_session(id, |s, blind| Ok(s.state_update(blind)))
    }

    pub fn legal_moves(&self, id: &str) -> Result<ServerMessage, ServiceError> {
        self.with_session(id, |s, _| s.legal_moves())
    }

    pub fn submit_move(&self, id: &str, submit: &SubmitMove) -> Reply {
        self.with_session(id, |s, blind| s.submit_move(submit, blind))
    }

    pub fn submit_inference(&self, id: &str, submit: &SubmitInference) -> Reply {
        self.with_session(id, |s, blind| s.submit_inference(submit, blind))
    }

    /// The full record, available once the game is over.
    pub fn record(&self, id: &str) -> Result<ServerMessage, ServiceError> {
        self.with_session(id, |s, _| {
            if s.state.is_over() {
                Ok(s.game_over())
            } else {
                Err(ServiceError::new(ErrorCode::WrongPhase, "the record is available when the game is over"))
            }
        })
    }

    /// Drops every session idle longer than the timeout; returns how many.
    pub fn sweep(&self) -> usize {
        let now = self.clock.now();
        let mut sessions = self.sessions.lock().expect("session map lock");
        let stale: Vec<String> = sessions
            .iter()
            .filter(|(_, s)| now.saturating_sub(s.lock().expect("session lock").last_active) > self.timeout())
            .map(|(id, _)| id.clone())
            .collect();
        let mut expired = self.expired.lock().expect("expired lock");
        for id in &stale {
            sessions.remove(id);
            expired.insert(id.clone());
        }
        stale.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manager(blind: bool) -> (SessionManager, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::default());
        let config = ServiceConfig { blind, ..ServiceConfig::default() };
        (SessionManager::new(config, AgentFactory::new(None), clock.clone()), clock)
    }

    fn create(m: &SessionManager, team: TeamChoice, seed: Option<u64>) -> (String, Vec<ServerMessage>) {
        m.create(&CreateSession { agent: "vismax".into(), human_team: team, seed }).unwrap()
    }

    fn first_legal(messages: &[ServerMessage]) -> MoveAction {
        messages
            .iter()
            .find_map(|m| match m {
                ServerMessage::LegalMoves { moves, .. } => Some(moves[0]),
                _ => None,
            })
            .unwrap()
    }

    fn submit(mv: MoveAction, phase: TurnPhase) -> SubmitMove {
        match mv {
            MoveAction::Move { from, to, .. } => SubmitMove { phase, from: Some(from), to: Some(to) },
            MoveAction::Pass => SubmitMove { phase, from: None, to: None },
        }
    }

    #[test]
    fn human_white_starts_at_turn_zero() {
        let (m, _) = manager(false);
        let (_, msgs) = create(&m, TeamChoice::White, Some(1));
        match &msgs[0] {
            ServerMessage::StateUpdate { turn, phase, your_team, .. } => {
                assert_eq!((*turn, *phase, *your_team), (0, TurnPhase::NonKingMove, Team::White));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(msgs[1], ServerMessage::LegalMoves { .. }));
    }

    #[test]
    fn human_black_sees_agent_move_resolved() {
        let (m, _) = manager(false);
        let (_, msgs) = create(&m, TeamChoice::Black, Some(1));
        assert!(matches!(msgs[0], ServerMessage::StateUpdate { turn: 1, to_move: Team::Black, .. }));
    }

    #[test]
    fn wrong_phase_and_illegal_moves_leave_state_unchanged() {
        let (m, _) = manager(false);
        let (id, msgs) = create(&m, TeamChoice::White, Some(2));
        let before = m.state(&id).unwrap();
        let err = m.submit_inference(&id, &SubmitInference::SingleSquare { single_square: "e8".parse().unwrap() }).unwrap_err();
        assert_eq!(err.code, ErrorCode::WrongPhase);
        let mv = first_legal(&msgs);
        let err = m.submit_move(&id, &submit(mv, TurnPhase::KingMove)).unwrap_err();
        assert_eq!(err.code, ErrorCode::WrongPhase);
        let far = SubmitMove { phase: TurnPhase::NonKingMove, from: Some("a1".parse().unwrap()), to: Some("a5".parse().unwrap()) };
        let err = m.submit_move(&id, &far).unwrap_err();
        assert_eq!(err.code, ErrorCode::IllegalMove);
        assert!(err.legal_moves.is_some());
        let pass = SubmitMove { phase: TurnPhase::NonKingMove, from: None, to: None };
        assert_eq!(m.submit_move(&id, &pass).unwrap_err().code, ErrorCode::IllegalMove);
        assert_eq!(m.state(&id).unwrap(), before);
        let next = m.submit_move(&id, &submit(mv, TurnPhase::NonKingMove)).unwrap();
        assert!(matches!(next[0], ServerMessage::StateUpdate { phase: TurnPhase::KingMove, .. }));
    }

    #[test]
    fn inference_validation_and_scoring() {
        let (m, _) = manager(false);
        let (id, msgs) = create(&m, TeamChoice::White, Some(3));
        let msgs = m.submit_move(&id, &submit(first_legal(&msgs), TurnPhase::NonKingMove)).unwrap();
        m.submit_move(&id, &submit(first_legal(&msgs), TurnPhase::KingMove)).unwrap();
        let short = SubmitInference::Belief { belief: vec![0.8 / 64.0; 64] };
        assert_eq!(m.submit_inference(&id, &short).unwrap_err().code, ErrorCode::InvalidBelief);
        let out = m.submit_inference(&id, &SubmitInference::Belief { belief: vec![1.0 / 64.0; 64] }).unwrap();
        assert_eq!(out[0], ServerMessage::TurnResult { session: id.clone(), score_delta: Some(1.0 / 64.0) });
        assert!(matches!(out[1], ServerMessage::StateUpdate { turn: 2, phase: TurnPhase::NonKingMove, .. }));
    }

    #[test]
    fn blind_mode_withholds_scores() {
        let (m, _) = manager(true);
        let (id, msgs) = create(&m, TeamChoice::White, Some(3));
        assert!(matches!(msgs[0], ServerMessage::StateUpdate { your_score: None, .. }));
        let msgs = m.submit_move(&id, &submit(first_legal(&msgs), TurnPhase::NonKingMove)).unwrap();
        m.submit_move(&id, &submit(first_legal(&msgs), TurnPhase::KingMove)).unwrap();
        let out = m.submit_inference(&id, &SubmitInference::SingleSquare { single_square: "d8".parse().unwrap() }).unwrap();
        assert!(matches!(out[0], ServerMessage::TurnResult { score_delta: None, .. }));
    }

    #[test]
    fn idle_sessions_expire() {
        let (m, clock) = manager(false);
        let (id, _) = create(&m, TeamChoice::White, Some(4));
        clock.advance(Duration::from_secs(29 * 60));
        assert!(m.state(&id).is_ok());
        clock.advance(Duration::from_secs(29 * 60));
        assert!(m.state(&id).is_ok());
        clock.advance(Duration::from_secs(31 * 60));
        assert_eq!(m.state(&id).unwrap_err().code, ErrorCode::Gone);
        assert_eq!(m.state(&id).unwrap_err().code, ErrorCode::Gone);
        assert_eq!(m.state("nope").unwrap_err().code, ErrorCode::NotFound);
        let (other, _) = create(&m, TeamChoice::White, Some(5));
        clock.advance(Duration::from_secs(31 * 60));
        assert_eq!(m.sweep(), 1);
        assert_eq!(m.record(&other).unwrap_err().code, ErrorCode::Gone);
    }

    #[test]
    fn unknown_agent_is_rejected() {
        let (m, _) = manager(false);
        let err = m.create(&CreateSession { agent: "grandmaster".into(), human_team: TeamChoice::White, seed: None }).unwrap_err();
        assert_eq!(err.code, ErrorCode::UnknownAgent);
        let err = m.create(&CreateSession { agent: "beliefmax".into(), human_team: TeamChoice::White, seed: None }).unwrap_err();
        assert_eq!(err.code, ErrorCode::UnknownAgent);
    }
}
