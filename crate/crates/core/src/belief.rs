//! Beliefs over the opponent king's square and the uniform baseline.

use core::fmt;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::observation::PlayerObservation;
use crate::square::{Square, SquareSet};

/// Absolute tolerance on the total mass of a belief.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum BeliefError {
    #[error("belief must have 64 entries, got {0}")]
    Length(usize),
    #[error("belief entry {index} is {value}, expected a finite non-negative number")]
    InvalidEntry { index: usize, value: f64 },
    #[error("belief sums to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("cannot normalize weights with zero total mass")]
    ZeroMass,
    #[error("opponent king is hidden but no square is fogged")]
    ImpossibleState,
}

/// Probability distribution over the 64 squares. Always valid once built.
#[derive(Clone, PartialEq)]
pub struct Belief([f64; 64]);

impl Belief {
    /// Validates non-negativity, finiteness and unit mass.
    pub fn new(probs: [f64; 64]) -> Result<Belief, BeliefError> {
        let mut sum = 0.0;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::InvalidEntry { index, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(BeliefError::NotNormalized(sum));
        }
        Ok(Belief(probs))
    }

    pub fn from_slice(probs: &[f64]) -> Result<Belief, BeliefError> {
        let arr: [f64; 64] = probs.try_into().map_err(|_| BeliefError::Length(probs.len()))?;
        Belief::new(arr)
    }

    /// Explicit renormalization of non-negative weights.
    pub fn normalized(weights: &[f64]) -> Result<Belief, BeliefError> {
        if weights.len() != 64 {
            return Err(BeliefError::Length(weights.len()));
        }
        let mut probs = [0.0; 64];
        let mut total = 0.0;
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::InvalidEntry { index, value });
            }
            total += value;
        }
        if total <= 0.0 {
            return Err(BeliefError::ZeroMass);
        }
        for (p, &w) in probs.iter_mut().zip(weights) {
            *p = w / total;
        }
        Belief::new(probs)
    }

    pub fn one_hot(square: Square) -> Belief {
        let mut probs = [0.0; 64];
        probs[square.index()] = 1.0;
        Belief(probs)
    }

    /// Uniform over a non-empty set of squares.
    pub fn uniform_over(squares: SquareSet) -> Result<Belief, BeliefError> {
        let n = squares.len();
        if n == 0 {
            return Err(BeliefError::ZeroMass);
        }
        let mut probs = [0.0; 64];
        let p = 1.0 / n as f64;
        for sq in squares {
            probs[sq.index()] = p;
        }
        Ok(Belief(probs))
    }

    #[inline]
    pub fn prob(&self, square: Square) -> f64 {
        self.0[square.index()]
    }

    pub fn probs(&self) -> &[f64; 64] {
        &self.0
    }

    pub fn support(&self) -> SquareSet {
        Square::all().filter(|&s| self.0[s.index()] > 0.0).collect()
    }
}

impl fmt::Debug for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(Square::all().filter(|s| self.0[s.index()] > 0.0).map(|s| (s, self.0[s.index()]))).finish()
    }
}

impl Serialize for Belief {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(64))?;
        for p in &self.0 {
            seq.serialize_element(p)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Belief {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BeliefVisitor;
        impl<'de> Visitor<'de> for BeliefVisitor {
            type Value = Belief;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of 64 probabilities")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Belief, A::Error> {
                let mut probs = [0.0; 64];
                let mut n = 0;
                while let Some(p) = seq.next_element::<f64>()? {
                    if n < 64 {
                        probs[n] = p;
                    }
                    n += 1;
                }
                if n != 64 {
                    return Err(serde::de::Error::custom(BeliefError::Length(n)));
                }
                Belief::new(probs).map_err(serde::de::Error::custom)
            }
        }
        deserializer.deserialize_seq(BeliefVisitor)
    }
}

/// One-hot on the opponent king when it is visible, otherwise uniform over
/// every fogged square regardless of history.
pub fn uniform_belief(obs: &PlayerObservation) -> Result<Belief, BeliefError> {
    if let Some(king) = obs.opponent_king() {
        return Ok(Belief::one_hot(king));
    }
    let fog = obs.fog();
    if fog.is_empty() {
        return Err(BeliefError::ImpossibleState);
    }
    Belief::uniform_over(fog)
}
