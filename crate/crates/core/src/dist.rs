use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum allowed deviation of a distribution's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Converts plain indices into a token sequence.
pub fn tokens(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().copied().map(TokenId).collect()
}

/// A normalized probability vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist {
    weights: Vec<f64>,
}

impl ProbDist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDist("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDist(format!("weight {i} is {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDist(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes non-negative weights with positive total mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidDist(format!("cannot normalize mass {sum}")));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    /// Softmax with the max logit subtracted first.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidDist("non-finite logits".into()));
        }
        Self::normalized(logits.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn one_hot(vocab_size: usize, token: TokenId) -> Result<Self> {
        if token.index() >= vocab_size {
            return Err(Error::range(
                "token",
                format!("{token} >= vocab {vocab_size}"),
            ));
        }
        let mut w = vec![0.0; vocab_size];
        w[token.index()] = 1.0;
        Ok(Self { weights: w })
    }

    pub fn uniform(vocab_size: usize) -> Result<Self> {
        Self::normalized(vec![1.0; vocab_size])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.len()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.weights.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn total_variation(&self, other: &ProbDist) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        ProbDist::new(weights)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(d: ProbDist) -> Self {
        d.weights
    }
}

/// Inverse-CDF selection: the smallest index whose cumulative weight exceeds `u`.
pub fn sample_token(dist: &ProbDist, u: f64) -> Result<TokenId> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::range("u", format!("{u} not in [0, 1)")));
    }
    let mut cumulative = 0.0;
    for (i, w) in dist.weights.iter().enumerate() {
        cumulative += w;
        if cumulative > u {
            return Ok(TokenId::from(i));
        }
    }
    // Rounding left the total mass at or below u: fall back to the last
    // token that carries any mass.
    let last = dist
        .weights
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("validated distribution has positive mass");
    Ok(TokenId::from(last))
}

/// Greedy selection; ties go to the lowest index.
pub fn argmax_token(dist: &ProbDist) -> TokenId {
    let mut best = 0;
    for (i, w) in dist.weights.iter().enumerate().skip(1) {
        if *w > dist.weights[best] {
            best = i;
        }
    }
    TokenId::from(best)
}
