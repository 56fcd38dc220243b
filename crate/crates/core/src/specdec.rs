//! Draft/verify/rollback speculative decoding with exact verification.
//!
//! Each iteration drafts `gamma` tokens from the draft model, evaluates the
//! target at the `gamma + 1` positions they open up, then verifies left to
//! right. In sampling mode a drafted token `x` is kept iff `r < min(1, q(x)/p(x))`
//! for a fresh uniform `r`; the first rejection emits one token from
//! `norm(max(0, q - p))` and discards the rest. If every draft survives, a bonus
//! token is drawn from the last target distribution. Greedy mode keeps a draft
//! iff it equals the target argmax. Either way an iteration emits
//! `accept_count + 1` tokens.
//!
//! Uniforms are consumed per iteration in this order: one per drafted token
//! (sampling only), one `r` per verified position, then one for the
//! residual or bonus token.

use serde::{Deserialize, Serialize};

use crate::dist::{argmax_token, sample_token, ProbDist, TokenId};
use crate::error::{Error, Result};
use crate::model::{ModelPair, TableModel};
use crate::rng::{SeededStream, UniformSource, STREAM_DECODE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Sampling,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "sampling" => Ok(DecodeMode::Sampling),
            other => Err(Error::Usage(format!("unknown decode mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    pub gamma: usize,
    pub max_new_tokens: usize,
    pub mode: DecodeMode,
    pub seed: u64,
}

impl SpecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens < 1 {
            return Err(Error::range("max_new_tokens", "must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of one draft/verify iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub mode: DecodeMode,
    pub drafted: Vec<TokenId>,
    pub draft_dists: Vec<ProbDist>,
    /// `drafted.len() + 1` entries; the last one feeds the bonus token.
    pub target_dists: Vec<ProbDist>,
    pub accept_count: usize,
    pub rejected_at: Option<usize>,
    pub emitted: Vec<TokenId>,
    /// The verification uniforms `r`, one per examined position.
    pub uniform_draws: Vec<f64>,
}

impl IterationRecord {
    pub fn gamma(&self) -> usize {
        self.drafted.len()
    }

    /// Accept/reject bits for every position that was decided, i.e. up to and
    /// including the first rejection.
    pub fn decisions(&self) -> Vec<bool> {
        let mut bits = vec![true; self.accept_count];
        if self.rejected_at.is_some() {
            bits.push(false);
        }
        bits
    }

    pub fn check_invariants(&self) -> Result<()> {
        let gamma = self.gamma();
        if self.emitted.len() != self.accept_count + 1 {
            return Err(Error::Shape(format!(
                "emitted {} tokens with accept_count {}",
                self.emitted.len(),
                self.accept_count
            )));
        }
        if self.accept_count > gamma {
            return Err(Error::Shape(format!(
                "accept_count {} exceeds gamma {gamma}",
                self.accept_count
            )));
        }
        if self.rejected_at.is_some() != (self.accept_count < gamma) {
            return Err(Error::Shape(format!(
                "rejected_at {:?} inconsistent with accept_count {} of {gamma}",
                self.rejected_at, self.accept_count
            )));
        }
        if let Some(pos) = self.rejected_at {
            if pos != self.accept_count {
                return Err(Error::Shape(format!(
                    "rejected_at {pos} but accept_count {}",
                    self.accept_count
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub prompt: Vec<TokenId>,
    pub iterations: Vec<IterationRecord>,
    pub output: Vec<TokenId>,
    /// Sequence length reached before truncation to the token budget.
    pub n_final: usize,
}

impl DecodeTrace {
    pub fn tokens_generated(&self) -> usize {
        self.output.len() - self.prompt.len()
    }

    pub fn total_drafted(&self) -> usize {
        self.iterations.iter().map(IterationRecord::gamma).sum()
    }

    pub fn total_accepted(&self) -> usize {
        self.iterations.iter().map(|it| it.accept_count).sum()
    }
}

fn select(dist: &ProbDist, mode: DecodeMode, rng: &mut impl UniformSource) -> Result<TokenId> {
    match mode {
        DecodeMode::Greedy => Ok(argmax_token(dist)),
        DecodeMode::Sampling => sample_token(dist, rng.next_uniform()),
    }
}

/// Target-only decoding; the baseline every speedup is measured against.
pub fn autoregressive_decode(
    model: &TableModel,
    prompt: &[TokenId],
    max_new_tokens: usize,
    mode: DecodeMode,
    seed: u64,
) -> Result<Vec<TokenId>> {
    if prompt.len() < model.context_order() {
        return Err(Error::Context {
            len: prompt.len(),
            order: model.context_order(),
        });
    }
    let mut rng = SeededStream::new(seed, STREAM_DECODE);
    let mut seq = prompt.to_vec();
    seq.reserve(max_new_tokens);
    for _ in 0..max_new_tokens {
        let token = select(model.next_dist(&seq)?, mode, &mut rng)?;
        seq.push(token);
    }
    Ok(seq)
}

pub fn draft_phase(
    draft: &TableModel,
    context: &[TokenId],
    gamma: usize,
    mode: DecodeMode,
    rng: &mut impl UniformSource,
) -> Result<(Vec<TokenId>, Vec<ProbDist>)> {
    let mut seq = context.to_vec();
    let mut drafted = Vec::with_capacity(gamma);
    let mut dists = Vec::with_capacity(gamma);
    for _ in 0..gamma {
        let dist = draft.next_dist(&seq)?;
        let token = select(dist, mode, rng)?;
        seq.push(token);
        drafted.push(token);
        dists.push(dist.clone());
    }
    Ok((drafted, dists))
}

/// `norm(max(0, q - p))`, the distribution sampled after a rejection.
pub fn residual_dist(q: &ProbDist, p: &ProbDist) -> Result<ProbDist> {
    if q.vocab_size() != p.vocab_size() {
        return Err(Error::Shape(format!(
            "q has {} entries, p has {}",
            q.vocab_size(),
            p.vocab_size()
        )));
    }
    let residual: Vec<f64> = q
        .weights()
        .iter()
        .zip(p.weights())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    if residual.iter().all(|w| *w <= 0.0) {
        return Err(Error::DegenerateResidual);
    }
    ProbDist::normalized(residual)
}

/// [`residual_dist`] as raw weights; the reference residual for
/// [`exact_emission_weights_with`].
pub fn residual_weights(q: &ProbDist, p: &ProbDist) -> Result<Vec<f64>> {
    residual_dist(q, p).map(ProbDist::into_weights)
}

pub type ResidualFn = fn(&ProbDist, &ProbDist) -> Result<Vec<f64>>;

fn acceptance_prob(q: f64, p: f64) -> f64 {
    (q / p).min(1.0)
}

pub fn verify_phase(
    drafted: Vec<TokenId>,
    draft_dists: Vec<ProbDist>,
    target_dists: Vec<ProbDist>,
    mode: DecodeMode,
    rng: &mut impl UniformSource,
) -> Result<IterationRecord> {
    let gamma = drafted.len();
    if draft_dists.len() != gamma || target_dists.len() != gamma + 1 {
        return Err(Error::Shape(format!(
            "{gamma} drafted tokens need {gamma} draft and {} target distributions, got {} and {}",
            gamma + 1,
            draft_dists.len(),
            target_dists.len()
        )));
    }

    let mut uniform_draws = Vec::new();
    let mut emitted = Vec::with_capacity(gamma + 1);
    let mut rejected_at = None;
    for (t, &token) in drafted.iter().enumerate() {
        let p = &draft_dists[t];
        let q = &target_dists[t];
        let accepted = match mode {
            DecodeMode::Greedy => token == argmax_token(q),
            DecodeMode::Sampling => {
                let p_x = p.prob(token);
                if p_x <= 0.0 {
                    return Err(Error::InvalidDist(format!(
                        "drafted token {token} has zero draft probability at position {t}"
                    )));
                }
                let r = rng.next_uniform();
                uniform_draws.push(r);
                r < acceptance_prob(q.prob(token), p_x)
            }
        };
        if accepted {
            emitted.push(token);
        } else {
            let corrected = match mode {
                DecodeMode::Greedy => argmax_token(q),
                DecodeMode::Sampling => sample_token(&residual_dist(q, p)?, rng.next_uniform())?,
            };
            emitted.push(corrected);
            rejected_at = Some(t);
            break;
        }
    }
    let accept_count = rejected_at.unwrap_or(gamma);
    if rejected_at.is_none() {
        emitted.push(select(&target_dists[gamma], mode, rng)?);
    }

    Ok(IterationRecord {
        mode,
        drafted,
        draft_dists,
        target_dists,
        accept_count,
        rejected_at,
        emitted,
        uniform_draws,
    })
}

pub fn speculative_decode(
    pair: &ModelPair,
    prompt: &[TokenId],
    config: &SpecConfig,
) -> Result<(Vec<TokenId>, DecodeTrace)> {
    config.validate()?;
    if prompt.len() < pair.context_order() {
        return Err(Error::Context {
            len: prompt.len(),
            order: pair.context_order(),
        });
    }
    let mut rng = SeededStream::new(config.seed, STREAM_DECODE);
    let budget = prompt.len() + config.max_new_tokens;
    let mut seq = prompt.to_vec();
    let mut iterations = Vec::new();

    while seq.len() < budget {
        let (drafted, draft_dists) =
            draft_phase(&pair.draft, &seq, config.gamma, config.mode, &mut rng)?;

        let mut extended = seq.clone();
        let mut target_dists = Vec::with_capacity(drafted.len() + 1);
        target_dists.push(pair.target.next_dist(&extended)?.clone());
        for &token in &drafted {
            extended.push(token);
            target_dists.push(pair.target.next_dist(&extended)?.clone());
        }

        let record = verify_phase(drafted, draft_dists, target_dists, config.mode, &mut rng)?;
        seq.extend_from_slice(&record.emitted);
        iterations.push(record);
    }

    let n_final = seq.len();
    seq.truncate(budget);
    let trace = DecodeTrace {
        prompt: prompt.to_vec(),
        iterations,
        output: seq.clone(),
        n_final,
    };
    Ok((seq, trace))
}

/// Closed-form marginal of the first emitted token of one draft/verify step:
/// `m(x) = p(x) min(1, q(x)/p(x)) + rejection_mass * residual(x)`.
///
/// Exact speculative sampling has `m == q`.
pub fn exact_emission_distribution(p: &ProbDist, q: &ProbDist) -> Result<ProbDist> {
    ProbDist::normalized(exact_emission_weights_with(p, q, residual_weights)?)
}

/// Unnormalized form of [`exact_emission_distribution`] with a pluggable
/// residual, used to check alternative residual constructions.
pub fn exact_emission_weights_with(
    p: &ProbDist,
    q: &ProbDist,
    residual: ResidualFn,
) -> Result<Vec<f64>> {
    if p.vocab_size() != q.vocab_size() {
        return Err(Error::Shape(format!(
            "p has {} entries, q has {}",
            p.vocab_size(),
            q.vocab_size()
        )));
    }
    let mut m: Vec<f64> = p
        .weights()
        .iter()
        .zip(q.weights())
        .map(|(&px, &qx)| {
            if px > 0.0 {
                px * acceptance_prob(qx, px)
            } else {
                0.0
            }
        })
        .collect();
    let rejection_mass: f64 = p
        .weights()
        .iter()
        .zip(q.weights())
        .filter(|(px, _)| **px > 0.0)
        .map(|(&px, &qx)| px * (1.0 - acceptance_prob(qx, px)))
        .sum();
    if rejection_mass > 0.0 {
        for (mx, rx) in m.iter_mut().zip(residual(q, p)?) {
            *mx += rejection_mass * rx;
        }
    }
    Ok(m)
}
