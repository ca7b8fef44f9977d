//! Information measures over king-location beliefs, in nats.
//!
//! Entropy and information gain drive the greedy agents. Belief entropy,
//! oracle cross entropy and observer cross entropy characterize play. The
//! observer quantities use the pushforward of a belief through an action's
//! visible/fogged partition, where every fogged square collapses into a
//! single "hidden" outcome.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, NORMALIZATION_TOLERANCE};
use crate::piece::Team;
use crate::square::{Square, SquareSet};

/// Probabilities are floored here inside logarithms only, never in scoring.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("entry {index} is {value}, expected finite and non-negative")]
    InvalidEntry { index: usize, value: f64 },
    #[error("distribution sums to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("distributions have different lengths")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("square {0} was reported as revealed but lies in the fog")]
pub struct InconsistentObservation(pub Square);

#[inline]
fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
fn floored_ln(x: f64) -> f64 {
    ln(x.max(LOG_FLOOR))
}

/// `-sum p ln p` over the entries, treating `0 ln 0` as 0. No validation.
pub fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * ln(x);
        }
    }
    h
}

pub fn validate_distribution(p: &[f64]) -> Result<(), DistributionError> {
    let mut sum = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(DistributionError::InvalidEntry { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DistributionError::NotNormalized(sum));
    }
    Ok(())
}

pub fn shannon_entropy(p: &[f64]) -> Result<f64, DistributionError> {
    validate_distribution(p)?;
    Ok(entropy_unchecked(p))
}

/// `sum p ln(p / q)` with `q` floored at [`LOG_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, DistributionError> {
    if p.len() != q.len() {
        return Err(DistributionError::LengthMismatch);
    }
    validate_distribution(p)?;
    validate_distribution(q)?;
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            d += pi * (ln(pi) - floored_ln(qi));
        }
    }
    Ok(d)
}

/// `-sum p ln q` with `q` floored at [`LOG_FLOOR`].
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64, DistributionError> {
    if p.len() != q.len() {
        return Err(DistributionError::LengthMismatch);
    }
    validate_distribution(p)?;
    validate_distribution(q)?;
    Ok(p.iter().zip(q).filter(|(&pi, _)| pi > 0.0).map(|(&pi, &qi)| -pi * floored_ln(qi)).sum())
}

/// Split of the board into squares fogged after an action and the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FogPartition {
    fog: SquareSet,
    board: SquareSet,
}

impl FogPartition {
    pub fn new(fog: SquareSet, board_size: u8) -> FogPartition {
        let board = SquareSet::board(board_size);
        FogPartition { fog: fog.intersection(board), board }
    }

    pub fn from_visible(visible: SquareSet, board_size: u8) -> FogPartition {
        let board = SquareSet::board(board_size);
        FogPartition { fog: board.difference(visible), board }
    }

    pub fn fog(&self) -> SquareSet {
        self.fog
    }

    pub fn visible(&self) -> SquareSet {
        self.board.difference(self.fog)
    }
}

/// Total belief mass left in the fog.
pub fn fog_mass(belief: &Belief, part: &FogPartition) -> f64 {
    part.fog.iter().map(|s| belief.prob(s)).sum()
}

/// Fog mass times the entropy of the renormalized in-fog belief; zero when
/// no mass remains fogged.
pub fn expected_posterior_entropy(belief: &Belief, part: &FogPartition) -> f64 {
    let qf = fog_mass(belief, part);
    if qf <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for s in part.fog {
        let p = belief.prob(s) / qf;
        if p > 0.0 {
            h -= p * ln(p);
        }
    }
    qf * h
}

pub fn information_gain(belief: &Belief, part: &FogPartition) -> f64 {
    belief_entropy(belief) - expected_posterior_entropy(belief, part)
}

pub fn belief_entropy(belief: &Belief) -> f64 {
    entropy_unchecked(belief.probs())
}

/// Surprisal of the true king square under the belief.
pub fn oracle_cross_entropy_sample(belief: &Belief, true_square: Square) -> f64 {
    -floored_ln(belief.prob(true_square))
}

/// What a player learns about the king after an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    Revealed(Square),
    Hidden,
}

impl Observation {
    /// The observation produced by the king standing on `king` under `part`.
    pub fn of_king(king: Square, part: &FogPartition) -> Observation {
        if part.fog.contains(king) {
            Observation::Hidden
        } else {
            Observation::Revealed(king)
        }
    }
}

/// Pushforward of a belief: one atom per visible square plus a hidden atom.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDistribution {
    pub revealed: Vec<(Square, f64)>,
    pub hidden: f64,
}

impl ObservationDistribution {
    pub fn total(&self) -> f64 {
        self.revealed.iter().map(|(_, p)| p).sum::<f64>() + self.hidden
    }

    pub fn prob(&self, obs: Observation) -> f64 {
        match obs {
            Observation::Hidden => self.hidden,
            Observation::Revealed(s) => self.revealed.iter().find(|(sq, _)| *sq == s).map_or(0.0, |(_, p)| *p),
        }
    }

    /// Atoms in a fixed order: visible squares ascending, then hidden.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.revealed.iter().map(|(_, p)| *p).collect();
        v.push(self.hidden);
        v
    }
}

pub fn pushforward_observation(belief: &Belief, part: &FogPartition) -> ObservationDistribution {
    ObservationDistribution { revealed: part.visible().iter().map(|s| (s, belief.prob(s))).collect(), hidden: fog_mass(belief, part) }
}

/// Surprisal of a realized observation under the pushforward belief.
pub fn observer_cross_entropy_sample(belief: &Belief, part: &FogPartition, realized: Observation) -> Result<f64, InconsistentObservation> {
    let q = match realized {
        Observation::Revealed(s) if part.fog.contains(s) => return Err(InconsistentObservation(s)),
        Observation::Revealed(s) => belief.prob(s),
        Observation::Hidden => fog_mass(belief, part),
    };
    Ok(-floored_ln(q))
}

/// Per-turn quantities logged for one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub turn: u32,
    pub team: Team,
    pub score_delta: f64,
    pub belief_entropy: f64,
    pub oracle_ce: f64,
    pub observer_ce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ScoreDelta,
    BeliefEntropy,
    OracleCe,
    ObserverCe,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::ScoreDelta, Metric::BeliefEntropy, Metric::OracleCe, Metric::ObserverCe];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ScoreDelta => "score_delta",
            Metric::BeliefEntropy => "belief_entropy",
            Metric::OracleCe => "oracle_ce",
            Metric::ObserverCe => "observer_ce",
        }
    }
}

impl MetricSample {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::ScoreDelta => self.score_delta,
            Metric::BeliefEntropy => self.belief_entropy,
            Metric::OracleCe => self.oracle_ce,
            Metric::ObserverCe => self.observer_ce,
        }
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: libm::sqrt(var) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnAggregate<K> {
    pub key: K,
    pub turn: u32,
    pub count: usize,
    pub stats: [MeanStd; 4],
}

impl<K> TurnAggregate<K> {
    pub fn stat(&self, metric: Metric) -> MeanStd {
        self.stats[metric as usize]
    }
}

/// Per-(key, turn) mean and standard deviation of every metric, ordered by key then turn.
pub fn aggregate_by<K: Ord + Clone, F: Fn(&MetricSample) -> K>(samples: &[MetricSample], key: F) -> Vec<TurnAggregate<K>> {
    let mut groups: BTreeMap<(K, u32), Vec<&MetricSample>> = BTreeMap::new();
    for s in samples {
        groups.entry((key(s), s.turn)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|((k, turn), group)| {
            let stats = Metric::ALL.map(|m| {
                let values: Vec<f64> = group.iter().map(|s| s.get(m)).collect();
                MeanStd::of(&values)
            });
            TurnAggregate { key: k, turn, count: group.len(), stats }
        })
        .collect()
}

/// Per-(team, turn) aggregation.
pub fn aggregate_per_turn(samples: &[MetricSample]) -> Vec<TurnAggregate<Team>> {
    aggregate_by(samples, |s| s.team)
}
