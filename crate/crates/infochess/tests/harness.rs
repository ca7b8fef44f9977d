//! Experiment-harness statistics and bookkeeping on heuristic agents.

use infochess::agents::{AgentFactory, AgentSpec};
use infochess::harness::{
    random_split_color, run_matchup, run_matchup_matrix, run_movement_allocation, run_per_turn_curves, ColorPolicy, MatchupSpec,
};
use infochess::service::{ClientMessage, Frame, SubmitInference, SubmitMove};
use infochess_core::infotheory::Metric;
use infochess_core::{GameConfig, PieceKind, Square, Team, TurnPhase};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn spec(name: &str) -> AgentSpec {
    name.parse().unwrap()
}

fn matchup(a: &str, b: &str, n_games: usize, seed: u64) -> infochess::harness::MatchupResult {
    let spec = MatchupSpec { agent_a: spec(a), agent_b: spec(b), n_games, seed, color: ColorPolicy::RandomSplit };
    run_matchup(&spec, &mut AgentFactory::new(None), &GameConfig::default()).unwrap()
}

/// Upper-tail probability of at least `k` successes in `n` fair trials.
fn fair_coin_tail(k: u64, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    1.0 - Binomial::new(0.5, n).unwrap().cdf(k - 1)
}

#[test]
fn random_split_gives_each_color_half_the_games() {
    let n = 2000u64;
    let white = (0..n).filter(|&s| random_split_color(infochess::harness::game_seed(17, s)) == Team::White).count() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((white - n as f64 / 2.0).abs() <= 3.0 * sigma, "agent A was White in {white} of {n} games");
}

#[test]
fn self_play_is_even() {
    let r = matchup("random", "random", 300, 3);
    let decisive = (r.wins_a() + r.wins_b()) as f64;
    let sigma = (decisive * 0.25).sqrt();
    assert!((r.wins_a() as f64 - decisive / 2.0).abs() <= 3.0 * sigma, "{} vs {}", r.wins_a(), r.wins_b());
    assert_eq!(r.wins_a() + r.wins_b() + r.draws(), r.games.len());
    assert!((r.win_fraction_a() + r.win_fraction_b() + r.draw_fraction() - 1.0).abs() < 1e-12);
}

#[test]
fn vismax_beats_random_significantly() {
    let r = matchup("vismax", "random", 200, 8);
    assert!(r.invalid.is_empty());
    let p = fair_coin_tail(r.wins_a() as u64, (r.wins_a() + r.wins_b()) as u64);
    assert!(p < 0.05, "VisMax won {} of {} decisive games (p = {p})", r.wins_a(), r.wins_a() + r.wins_b());
    assert!(r.mean_score_a() > r.mean_score_b());
}

#[test]
fn uniform_fog_beliefs_have_cross_entropy_equal_to_entropy() {
    // A belief uniform over the fogged squares, or a point mass on a seen
    // king, puts mass 1/|support| on the true square.
    let r = matchup("vismax", "random", 20, 21);
    for side in [true, false] {
        for s in r.samples_of(side) {
            assert!((s.oracle_ce - s.belief_entropy).abs() < 1e-9, "{s:?}");
            assert!(s.oracle_ce >= 0.0 && s.belief_entropy <= 64f64.ln() + 1e-12);
        }
    }
}

#[test]
fn scores_and_samples_account_for_every_turn() {
    let r = matchup("vismax", "random", 12, 5);
    let config = GameConfig::default();
    for g in &r.games {
        assert_eq!(g.played.samples.len(), config.half_turns() as usize);
        assert_eq!(g.played.record.turns.len(), config.half_turns() as usize);
        for team in Team::BOTH {
            let total: f64 = g.played.samples.iter().filter(|s| s.team == team).map(|s| s.score_delta).sum();
            assert!((total - g.played.record.final_scores.get(team)).abs() < 1e-9);
        }
        assert_eq!(g.result.score_a, g.played.record.final_scores.get(g.result.color_a));
        assert_eq!(g.result.score_b, g.played.record.final_scores.get(g.result.color_a.opponent()));
    }
}

#[test]
fn matrix_cells_orient_both_ways() {
    let agents = [spec("random"), spec("vismax")];
    let m = run_matchup_matrix(&agents, 6, 4, &mut AgentFactory::new(None), &GameConfig::default()).unwrap();
    assert_eq!(m.cells.len(), 3);
    let cross = m.cell(0, 1).unwrap();
    assert_eq!(cross.games.len(), 12);
    let white_a = cross.games.iter().filter(|g| g.result.color_a == Team::White).count();
    assert_eq!(white_a, 6);
    // Swapped games reuse the seeds of the first half.
    for (first, second) in cross.games[..6].iter().zip(&cross.games[6..]) {
        assert_eq!(first.played.record.king_starts, second.played.record.king_starts);
    }
    let pct = m.win_percentages();
    assert!((pct[0][1] + pct[1][0] + 100.0 * cross.draw_fraction() - 100.0).abs() < 1e-9);
}

#[test]
fn curves_cover_every_turn_metric_and_side() {
    let pairs = [(spec("vismax"), spec("random")), (spec("random"), spec("random"))];
    let curves = run_per_turn_curves(&pairs, 8, 2, &mut AgentFactory::new(None), &GameConfig::default()).unwrap();
    let turns = GameConfig::default().turns_per_side as usize;
    // Two sides in the cross matchup, one pooled side in self-play.
    assert_eq!(curves.rows.len(), 3 * Metric::ALL.len() * turns);
    let row = curves.get("random_vs_random", "random", Metric::ScoreDelta, 1).unwrap();
    let pooled = curves.matchups[1].samples_of(true).len() + curves.matchups[1].samples_of(false).len();
    assert_eq!(pooled, 2 * 8 * turns);
    assert!(row.std >= 0.0);
}

#[test]
fn movement_counts_every_non_king_decision() {
    let agents = [spec("random"), spec("vismax")];
    let alloc = run_movement_allocation(&agents, 10, 6, &mut AgentFactory::new(None), &GameConfig::default()).unwrap();
    let per_side = GameConfig::default().turns_per_side as usize;
    for c in &alloc.counts {
        assert_eq!(c.matches, 10);
        assert_eq!(c.moves() + c.passes, 10 * per_side);
        let sum: f64 = [PieceKind::Pawn, PieceKind::Rook, PieceKind::Bishop].iter().map(|&k| c.fraction(k)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

fn square() -> impl Strategy<Value = Square> {
    (0u8..8, 0u8..8).prop_map(|(f, r)| Square::new(f, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn game_results_partition_into_wins_and_draws(seed in any::<u64>()) {
        let r = matchup("random", "random", 4, seed);
        prop_assert_eq!(r.wins_a() + r.wins_b() + r.draws(), 4);
        for g in &r.games {
            prop_assert_eq!(g.result.color_a, random_split_color(infochess::harness::game_seed(seed, g.result.game_id)));
        }
    }

    #[test]
    fn client_frames_round_trip(from in square(), to in square(), belief in prop::collection::vec(0.0f64..1.0, 64)) {
        let messages = [
            ClientMessage::SubmitMove(SubmitMove { phase: TurnPhase::KingMove, from: Some(from), to: Some(to) }),
            ClientMessage::SubmitMove(SubmitMove { phase: TurnPhase::NonKingMove, from: None, to: None }),
            ClientMessage::SubmitInference(SubmitInference::SingleSquare { single_square: to }),
            ClientMessage::SubmitInference(SubmitInference::Belief { belief }),
        ];
        for m in messages {
            let frame = Frame::new(m);
            let back: Frame<ClientMessage> = serde_json::from_str(&serde_json::to_string(&frame).unwrap()).unwrap();
            prop_assert_eq!(back, frame);
        }
    }
}
