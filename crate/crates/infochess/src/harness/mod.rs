//! Experiment orchestration: matchups and matchup matrices, per-turn metric
//! curves, movement allocation, and game-record files.
//!
//! Every game gets its own seed derived from the experiment seed and the
//! game's index, so results do not depend on how games are scheduled across
//! threads.

pub mod output;

use std::collections::BTreeMap;

use infochess_core::infotheory::{aggregate_by, Metric, MetricSample};
use infochess_core::rng::{derive_seed, stream_rng, Stream};
use infochess_core::{GameConfig, GameRecord, MoveAction, PieceKind, Team};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{play_game, AgentError, AgentFactory, AgentSpec, Blueprint, PlayError, PlayedGame};

pub use output::{read_records, write_records, RecordHeader, RecordsError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Config(String),
    #[error("every game of {0} failed")]
    AllGamesFailed(String),
}

/// Who plays White in a matchup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorPolicy {
    /// Each game draws agent A's color from the game seed.
    RandomSplit,
    /// Agent A is always White.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchupSpec {
    pub agent_a: AgentSpec,
    pub agent_b: AgentSpec,
    pub n_games: usize,
    pub seed: u64,
    pub color: ColorPolicy,
}

/// Per-game outcome from agent A's point of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub game_id: u64,
    pub color_a: Team,
    pub score_a: f64,
    pub score_b: f64,
}

impl GameResult {
    /// `Some(true)` if A won, `Some(false)` if B won, `None` for a draw.
    pub fn a_won(&self) -> Option<bool> {
        if self.score_a > self.score_b {
            Some(true)
        } else if self.score_b > self.score_a {
            Some(false)
        } else {
            None
        }
    }
}

/// One played game with its metadata, kept for curves and movement counts.
#[derive(Debug, Clone)]
pub struct MatchGame {
    pub result: GameResult,
    pub played: PlayedGame,
}

#[derive(Debug, Clone)]
pub struct MatchupResult {
    pub agent_a: String,
    pub agent_b: String,
    pub games: Vec<MatchGame>,
    /// Games aborted by an agent error; excluded from every aggregate.
    pub invalid: Vec<(u64, String)>,
}

impl MatchupResult {
    fn count(&self, want: Option<bool>) -> usize {
        self.games.iter().filter(|g| g.result.a_won() == want).count()
    }

    fn fraction(&self, n: usize) -> f64 {
        n as f64 / self.games.len().max(1) as f64
    }

    pub fn wins_a(&self) -> usize {
        self.count(Some(true))
    }

    pub fn wins_b(&self) -> usize {
        self.count(Some(false))
    }

    pub fn draws(&self) -> usize {
        self.count(None)
    }

    pub fn win_fraction_a(&self) -> f64 {
        self.fraction(self.wins_a())
    }

    pub fn win_fraction_b(&self) -> f64 {
        self.fraction(self.wins_b())
    }

    pub fn draw_fraction(&self) -> f64 {
        self.fraction(self.draws())
    }

    pub fn mean_score_a(&self) -> f64 {
        self.games.iter().map(|g| g.result.score_a).sum::<f64>() / self.games.len().max(1) as f64
    }

    pub fn mean_score_b(&self) -> f64 {
        self.games.iter().map(|g| g.result.score_b).sum::<f64>() / self.games.len().max(1) as f64
    }

    pub fn records(&self) -> impl Iterator<Item = &GameRecord> {
        self.games.iter().map(|g| &g.played.record)
    }

    /// Metric samples of agent A (`true`) or B (`false`).
    pub fn samples_of(&self, a: bool) -> Vec<MetricSample> {
        self.games
            .iter()
            .flat_map(|g| {
                let team = if a { g.result.color_a } else { g.result.color_a.opponent() };
                g.played.samples.iter().filter(move |s| s.team == team).cloned()
            })
            .collect()
    }
}

/// Seed of game `game_id` in an experiment.
pub fn game_seed(seed: u64, game_id: u64) -> u64 {
    derive_seed(seed, game_id)
}

/// Agent A's color in a random-split game.
pub fn random_split_color(game_seed: u64) -> Team {
    if stream_rng(game_seed, Stream::ColorAssignment).gen::<bool>() {
        Team::White
    } else {
        Team::Black
    }
}

/// Plays one full game between two resolved agents.
pub fn run_match(white: &Blueprint, black: &Blueprint, game_seed: u64, game: &GameConfig) -> Result<PlayedGame, PlayError> {
    let cfg = game.clone().with_seed(game_seed);
    let (mut w, mut b) = (white.build(), black.build());
    play_game(&cfg, w.as_mut(), b.as_mut())
}

/// Plays games `game_ids` of a matchup in parallel. `color_of` gives agent
/// A's color for a game seed.
fn play_games(
    a: &Blueprint,
    b: &Blueprint,
    labels: (String, String),
    seed: u64,
    game_ids: impl IntoParallelIterator<Item = u64>,
    color_of: impl Fn(u64) -> Team + Sync,
    game: &GameConfig,
) -> MatchupResult {
    let outcomes: Vec<(u64, Result<MatchGame, PlayError>)> = game_ids
        .into_par_iter()
        .map(|game_id| {
            let gs = game_seed(seed, game_id);
            let color_a = color_of(gs);
            let (white, black) = if color_a == Team::White { (a, b) } else { (b, a) };
            let played = run_match(white, black, gs, game).map(|played| {
                let f = played.record.final_scores;
                let result = GameResult { game_id, color_a, score_a: f.get(color_a), score_b: f.get(color_a.opponent()) };
                MatchGame { result, played }
            });
            (game_id, played)
        })
        .collect();
    let mut games = Vec::with_capacity(outcomes.len());
    let mut invalid = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(g) => games.push(g),
            Err(e) => invalid.push((id, e.to_string())),
        }
    }
    MatchupResult { agent_a: labels.0, agent_b: labels.1, games, invalid }
}

fn fixed_or_split(policy: ColorPolicy) -> impl Fn(u64) -> Team + Sync {
    move |gs| match policy {
        ColorPolicy::Fixed => Team::White,
        ColorPolicy::RandomSplit => random_split_color(gs),
    }
}

/// Plays a matchup. Games whose agents fail are recorded as invalid.
pub fn run_matchup(spec: &MatchupSpec, factory: &mut AgentFactory, game: &GameConfig) -> Result<MatchupResult, HarnessError> {
    if spec.n_games == 0 {
        return Err(HarnessError::Config("a matchup needs at least one game".into()));
    }
    let a = factory.resolve(&spec.agent_a)?;
    let b = factory.resolve(&spec.agent_b)?;
    let labels = (spec.agent_a.to_string(), spec.agent_b.to_string());
    Ok(play_games(&a, &b, labels, spec.seed, 0..spec.n_games as u64, fixed_or_split(spec.color), game))
}

/// All unordered pairs of `agents`, including self-play.
#[derive(Debug, Clone)]
pub struct MatchupMatrix {
    pub agents: Vec<String>,
    /// Cells `(i, j)` with `i <= j`, row-major.
    pub cells: Vec<((usize, usize), MatchupResult)>,
}

impl MatchupMatrix {
    pub fn cell(&self, i: usize, j: usize) -> Option<&MatchupResult> {
        self.cells.iter().find(|(ij, _)| *ij == (i.min(j), i.max(j))).map(|(_, r)| r)
    }

    /// Percentage of games the row agent won against the column agent. In
    /// self-play cells this is the share won by side A, which plays White.
    pub fn win_percentages(&self) -> Vec<Vec<f64>> {
        let n = self.agents.len();
        let mut m = vec![vec![0.0; n]; n];
        for ((i, j), r) in &self.cells {
            if i != j {
                m[*j][*i] = 100.0 * r.win_fraction_b();
            }
            m[*i][*j] = 100.0 * r.win_fraction_a();
        }
        m
    }
}

/// Diagonal cells play `n` self-play games with agent A as White.
/// Off-diagonal cells play each of the `n` game seeds twice, once with each
/// agent as White. Game ids and seeds are shared across
/// cells so every cell faces the same king placements.
pub fn run_matchup_matrix(
    agents: &[AgentSpec],
    n: usize,
    seed: u64,
    factory: &mut AgentFactory,
    game: &GameConfig,
) -> Result<MatchupMatrix, HarnessError> {
    if agents.is_empty() || n == 0 {
        return Err(HarnessError::Config("need at least one agent and one game per cell".into()));
    }
    let blueprints: Vec<Blueprint> = agents.iter().map(|s| factory.resolve(s)).collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for i in 0..agents.len() {
        for j in i..agents.len() {
            let labels = (agents[i].to_string(), agents[j].to_string());
            let (a, b) = (&blueprints[i], &blueprints[j]);
            let n = n as u64;
            let mut result = play_games(a, b, labels.clone(), seed, 0..n, |_| Team::White, game);
            if i != j {
                let swapped = play_games(a, b, labels, seed, 0..n, |_| Team::Black, game);
                append_swapped(&mut result, swapped, n);
            }
            cells.push(((i, j), result));
        }
    }
    Ok(MatchupMatrix { agents: agents.iter().map(ToString::to_string).collect(), cells })
}

/// Appends the color-swapped replays of an off-diagonal cell as games
/// `n..2n`.
fn append_swapped(r: &mut MatchupResult, swapped: MatchupResult, n: u64) {
    r.games.extend(swapped.games.into_iter().map(|mut g| {
        g.result.game_id += n;
        g
    }));
    r.invalid.extend(swapped.invalid.into_iter().map(|(id, e)| (id + n, e)));
}

/// One row of a per-turn curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub matchup: String,
    pub agent: String,
    pub metric: String,
    pub turn: u32,
    pub mean: f64,
    pub std: f64,
}

/// Per-turn metric curves for each matchup and agent side.
#[derive(Debug, Clone)]
pub struct Curves {
    pub rows: Vec<CurveRow>,
    pub matchups: Vec<MatchupResult>,
}

impl Curves {
    pub fn get(&self, matchup: &str, agent: &str, metric: Metric, turn: u32) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.matchup == matchup && r.agent == agent && r.metric == metric.name() && r.turn == turn)
    }
}

pub fn matchup_name(a: &AgentSpec, b: &AgentSpec) -> String {
    format!("{a}_vs_{b}")
}

/// Plays each matchup `n_games` times with random-split colors and
/// aggregates every metric per turn for each side. In self-play both sides
/// pool under the one agent name.
pub fn run_per_turn_curves(
    matchups: &[(AgentSpec, AgentSpec)],
    n_games: usize,
    seed: u64,
    factory: &mut AgentFactory,
    game: &GameConfig,
) -> Result<Curves, HarnessError> {
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for (a, b) in matchups {
        let spec = MatchupSpec { agent_a: a.clone(), agent_b: b.clone(), n_games, seed, color: ColorPolicy::RandomSplit };
        let result = run_matchup(&spec, factory, game)?;
        let name = matchup_name(a, b);
        let sides: Vec<(String, Vec<MetricSample>)> = if a == b {
            let mut all = result.samples_of(true);
            all.extend(result.samples_of(false));
            vec![(a.to_string(), all)]
        } else {
            vec![(a.to_string(), result.samples_of(true)), (b.to_string(), result.samples_of(false))]
        };
        for (agent, samples) in sides {
            let aggregates = aggregate_by(&samples, |s| s.turn);
            for metric in Metric::ALL {
                for agg in &aggregates {
                    let stat = agg.stat(metric);
                    rows.push(CurveRow {
                        matchup: name.clone(),
                        agent: agent.clone(),
                        metric: metric.name().into(),
                        turn: agg.turn,
                        mean: stat.mean,
                        std: stat.std,
                    });
                }
            }
        }
        results.push(result);
    }
    Ok(Curves { rows, matchups: results })
}

/// Default curve matchups: every pairing that involves VisMax or, when a
/// checkpoint is given, the RL agent.
pub fn default_curve_matchups(agents: &[AgentSpec], rl: Option<&AgentSpec>) -> Vec<(AgentSpec, AgentSpec)> {
    let vismax: AgentSpec = AgentSpec::Heuristic(crate::agents::AgentKind::VisMax);
    let mut hubs = vec![vismax];
    hubs.extend(rl.cloned());
    let mut all: Vec<AgentSpec> = agents.to_vec();
    for h in &hubs {
        if !all.contains(h) {
            all.push(h.clone());
        }
    }
    let mut out = Vec::new();
    for h in &hubs {
        for a in &all {
            let pair = (h.clone(), a.clone());
            let mirrored = (a.clone(), h.clone());
            if !out.contains(&pair) && !out.contains(&mirrored) {
                out.push(pair);
            }
        }
    }
    out
}

/// Non-king move counts for one agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MovementCounts {
    pub by_kind: BTreeMap<PieceKind, usize>,
    pub passes: usize,
    pub matches: usize,
}

impl MovementCounts {
    pub fn moves(&self) -> usize {
        self.by_kind.values().sum()
    }

    /// Fraction of (non-pass) non-king moves made with `kind`.
    pub fn fraction(&self, kind: PieceKind) -> f64 {
        *self.by_kind.get(&kind).unwrap_or(&0) as f64 / self.moves().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRow {
    pub agent: String,
    pub piece_kind: String,
    pub fraction: f64,
    pub n_moves: usize,
}

#[derive(Debug, Clone)]
pub struct MovementAllocation {
    pub agents: Vec<String>,
    pub counts: Vec<MovementCounts>,
}

impl MovementAllocation {
    pub fn of(&self, agent: &str) -> Option<&MovementCounts> {
        self.agents.iter().position(|a| a == agent).map(|i| &self.counts[i])
    }

    /// Pawn, rook and bishop rows per agent, then a `pass` row whose
    /// fraction is relative to all non-king decisions.
    pub fn rows(&self) -> Vec<MovementRow> {
        let mut rows = Vec::new();
        for (agent, c) in self.agents.iter().zip(&self.counts) {
            for kind in [PieceKind::Pawn, PieceKind::Rook, PieceKind::Bishop] {
                rows.push(MovementRow {
                    agent: agent.clone(),
                    piece_kind: kind.name().into(),
                    fraction: c.fraction(kind),
                    n_moves: *c.by_kind.get(&kind).unwrap_or(&0),
                });
            }
            let decisions = c.moves() + c.passes;
            rows.push(MovementRow {
                agent: agent.clone(),
                piece_kind: "pass".into(),
                fraction: c.passes as f64 / decisions.max(1) as f64,
                n_moves: c.passes,
            });
        }
        rows
    }
}

/// For each agent, plays `n_matches` games against opponents drawn
/// uniformly from `agents` (itself included) and counts which piece kinds
/// its non-king moves used.
pub fn run_movement_allocation(
    agents: &[AgentSpec],
    n_matches: usize,
    seed: u64,
    factory: &mut AgentFactory,
    game: &GameConfig,
) -> Result<MovementAllocation, HarnessError> {
    if agents.is_empty() {
        return Err(HarnessError::Config("need at least one agent".into()));
    }
    let blueprints: Vec<Blueprint> = agents.iter().map(|s| factory.resolve(s)).collect::<Result<_, _>>()?;
    let mut counts = Vec::with_capacity(agents.len());
    for (i, subject) in blueprints.iter().enumerate() {
        let agent_seed = derive_seed(seed, i as u64);
        let per_game: Vec<Option<(MovementCounts, Team)>> = (0..n_matches as u64)
            .into_par_iter()
            .map(|game_id| {
                let gs = game_seed(agent_seed, game_id);
                let mut pick = stream_rng(gs, Stream::ColorAssignment);
                let color = if pick.gen::<bool>() { Team::White } else { Team::Black };
                let opponent = &blueprints[pick.gen_range(0..blueprints.len())];
                let (white, black) = if color == Team::White { (subject, opponent) } else { (opponent, subject) };
                let played = run_match(white, black, gs, game).ok()?;
                let mut c = MovementCounts { matches: 1, ..MovementCounts::default() };
                for turn in played.record.turns.iter().filter(|t| t.team == color) {
                    match turn.non_king_move {
                        MoveAction::Move { piece, .. } => *c.by_kind.entry(piece).or_default() += 1,
                        MoveAction::Pass => c.passes += 1,
                    }
                }
                Some((c, color))
            })
            .collect();
        let mut total = MovementCounts::default();
        for (c, _) in per_game.into_iter().flatten() {
            for (k, n) in c.by_kind {
                *total.by_kind.entry(k).or_default() += n;
            }
            total.passes += c.passes;
            total.matches += c.matches;
        }
        if total.matches == 0 {
            return Err(HarnessError::AllGamesFailed(agents[i].to_string()));
        }
        counts.push(total);
    }
    Ok(MovementAllocation { agents: agents.iter().map(ToString::to_string).collect(), counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> AgentSpec {
        s.parse().unwrap()
    }

    #[test]
    fn matchup_accounting_and_determinism() {
        let mut factory = AgentFactory::new(None);
        let m = MatchupSpec { agent_a: spec("vismax"), agent_b: spec("random"), n_games: 6, seed: 3, color: ColorPolicy::RandomSplit };
        let r = run_matchup(&m, &mut factory, &GameConfig::default()).unwrap();
        assert_eq!(r.games.len(), 6);
        assert!(r.invalid.is_empty());
        assert!((r.win_fraction_a() + r.win_fraction_b() + r.draw_fraction() - 1.0).abs() < 1e-12);
        for g in &r.games {
            assert_eq!(g.played.samples.len(), 50);
            for team in Team::BOTH {
                let sum: f64 = g.played.samples.iter().filter(|s| s.team == team).map(|s| s.score_delta).sum();
                assert!((sum - g.played.record.final_scores.get(team)).abs() < 1e-9);
            }
            assert_eq!(g.result.score_a, g.played.record.final_scores.get(g.result.color_a));
        }
        let again = run_matchup(&m, &mut factory, &GameConfig::default()).unwrap();
        let scores = |r: &MatchupResult| r.games.iter().map(|g| (g.result.score_a, g.result.score_b)).collect::<Vec<_>>();
        assert_eq!(scores(&r), scores(&again));
    }

    #[test]
    fn matrix_orients_off_diagonal_games() {
        let mut factory = AgentFactory::new(None);
        let m = run_matchup_matrix(&[spec("random"), spec("vismax")], 3, 1, &mut factory, &GameConfig::default()).unwrap();
        assert_eq!(m.cells.len(), 3);
        let off = m.cell(0, 1).unwrap();
        assert_eq!(off.games.len(), 6);
        assert_eq!(off.games.iter().filter(|g| g.result.color_a == Team::White).count(), 3);
        assert_eq!(m.cell(0, 0).unwrap().games.len(), 3);
        let pct = m.win_percentages();
        assert!((pct[0][1] - 100.0 * off.win_fraction_a()).abs() < 1e-12);
    }

    #[test]
    fn random_curves_match_recomputed_fog_entropy() {
        let mut factory = AgentFactory::new(None);
        let pair = (spec("random"), spec("random"));
        let curves = run_per_turn_curves(&[pair], 4, 2, &mut factory, &GameConfig::default()).unwrap();
        // Recompute from the records: uniform beliefs have entropy ln |support|.
        let result = &curves.matchups[0];
        for turn in 1..=25u32 {
            let mut values = Vec::new();
            for record in result.records() {
                for team in Team::BOTH {
                    let t = record.turns.iter().filter(|t| t.team == team).nth(turn as usize - 1).unwrap();
                    values.push((t.belief.support().len() as f64).ln());
                }
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let row = curves.get("random_vs_random", "random", Metric::BeliefEntropy, turn).unwrap();
            assert!((row.mean - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn movement_fractions_sum_to_one() {
        let mut factory = AgentFactory::new(None);
        let alloc = run_movement_allocation(&[spec("random"), spec("vismax")], 5, 9, &mut factory, &GameConfig::default()).unwrap();
        for c in &alloc.counts {
            let total: f64 = [PieceKind::Pawn, PieceKind::Rook, PieceKind::Bishop].iter().map(|k| c.fraction(*k)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(c.matches, 5);
            assert_eq!(c.moves() + c.passes, 5 * 25);
        }
        assert_eq!(alloc.rows().len(), 8);
    }

    #[test]
    fn default_curve_matchups_pair_with_vismax() {
        let agents = [spec("random"), spec("vismax"), spec("beliefmax")];
        let m = default_curve_matchups(&agents, None);
        assert_eq!(m, vec![(spec("vismax"), spec("random")), (spec("vismax"), spec("vismax")), (spec("vismax"), spec("beliefmax"))]);
    }
}
