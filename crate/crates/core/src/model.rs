//! Seeded table-driven autoregressive models.
//!
//! A [`TableModel`] maps each of the `vocab_size^context_order` trailing
//! contexts to a next-token distribution. Logits are standard normals drawn
//! context-major, token-minor from the model seed (see [`crate::rng`]), then
//! softmax-normalized.

use serde::{Deserialize, Serialize};

use crate::dist::{ProbDist, TokenId};
use crate::error::{Error, Result};
use crate::rng::{SeededStream, STREAM_DRAFT_NOISE, STREAM_TARGET_LOGITS};

/// Default upper bound on the number of enumerated contexts.
pub const DEFAULT_CONTEXT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    seed: u64,
    vocab_size: usize,
    context_order: usize,
    table: Vec<ProbDist>,
}

impl TableModel {
    /// Builds a model from explicit entries, one per context in index order.
    pub fn from_entries(
        vocab_size: usize,
        context_order: usize,
        entries: Vec<ProbDist>,
    ) -> Result<Self> {
        let contexts = context_count(vocab_size, context_order, DEFAULT_CONTEXT_CAP)?;
        if entries.len() != contexts {
            return Err(Error::Shape(format!(
                "{} entries for {contexts} contexts",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|d| d.vocab_size() != vocab_size) {
            return Err(Error::Shape(format!(
                "entry has {} weights, vocab is {vocab_size}",
                bad.vocab_size()
            )));
        }
        Ok(Self {
            seed: 0,
            vocab_size,
            context_order,
            table: entries,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn num_contexts(&self) -> usize {
        self.table.len()
    }

    /// All table entries in context-index order.
    pub fn entries(&self) -> &[ProbDist] {
        &self.table
    }

    /// Index of the trailing `context_order` tokens, oldest token most significant.
    pub fn context_index(&self, context: &[TokenId]) -> Result<usize> {
        if context.len() < self.context_order {
            return Err(Error::Context {
                len: context.len(),
                order: self.context_order,
            });
        }
        let tail = &context[context.len() - self.context_order..];
        let mut index = 0usize;
        for t in tail {
            if t.index() >= self.vocab_size {
                return Err(Error::range(
                    "token",
                    format!("{t} >= vocab {}", self.vocab_size),
                ));
            }
            index = index * self.vocab_size + t.index();
        }
        Ok(index)
    }

    pub fn next_dist(&self, context: &[TokenId]) -> Result<&ProbDist> {
        Ok(&self.table[self.context_index(context)?])
    }
}

pub fn build_table_model(seed: u64, vocab_size: usize, context_order: usize) -> Result<TableModel> {
    build_table_model_with_cap(seed, vocab_size, context_order, DEFAULT_CONTEXT_CAP)
}

pub fn build_table_model_with_cap(
    seed: u64,
    vocab_size: usize,
    context_order: usize,
    cap: u64,
) -> Result<TableModel> {
    let contexts = context_count(vocab_size, context_order, cap)?;
    let logits = draw_logits(seed, STREAM_TARGET_LOGITS, contexts * vocab_size);
    let table = logits
        .chunks_exact(vocab_size)
        .map(ProbDist::from_logits)
        .collect::<Result<_>>()?;
    Ok(TableModel {
        seed,
        vocab_size,
        context_order,
        table,
    })
}

fn context_count(vocab_size: usize, context_order: usize, cap: u64) -> Result<usize> {
    if vocab_size < 2 {
        return Err(Error::range("vocab_size", format!("{vocab_size} < 2")));
    }
    let too_big = || Error::Size {
        vocab_size,
        context_order,
        cap,
    };
    let order = u32::try_from(context_order).map_err(|_| too_big())?;
    let count = (vocab_size as u64).checked_pow(order).ok_or_else(too_big)?;
    if count > cap {
        return Err(too_big());
    }
    Ok(count as usize)
}

fn draw_logits(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut s = SeededStream::new(seed, stream);
    (0..n).map(|_| s.next_normal()).collect()
}

/// Draft/target pair sharing one vocabulary and context order.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub draft: TableModel,
    pub target: TableModel,
    pub agreement: f64,
}

impl ModelPair {
    pub fn vocab_size(&self) -> usize {
        self.target.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.target.context_order
    }

    /// Mean total-variation distance between draft and target over all contexts.
    pub fn mean_total_variation(&self) -> f64 {
        let n = self.target.table.len();
        self.draft
            .table
            .iter()
            .zip(&self.target.table)
            .map(|(p, q)| p.total_variation(q))
            .sum::<f64>()
            / n as f64
    }
}

/// Builds the target from `seed` and a draft whose logits are
/// `agreement * target + (1 - agreement) * noise`, with the noise drawn from
/// an independent stream of the same seed.
pub fn make_model_pair(
    seed: u64,
    vocab_size: usize,
    context_order: usize,
    agreement: f64,
) -> Result<ModelPair> {
    make_model_pair_with_cap(
        seed,
        vocab_size,
        context_order,
        agreement,
        DEFAULT_CONTEXT_CAP,
    )
}

pub fn make_model_pair_with_cap(
    seed: u64,
    vocab_size: usize,
    context_order: usize,
    agreement: f64,
    cap: u64,
) -> Result<ModelPair> {
    if !(0.0..=1.0).contains(&agreement) {
        return Err(Error::range(
            "agreement",
            format!("{agreement} not in [0, 1]"),
        ));
    }
    let contexts = context_count(vocab_size, context_order, cap)?;
    let n = contexts * vocab_size;
    let target_logits = draw_logits(seed, STREAM_TARGET_LOGITS, n);
    let noise = draw_logits(seed, STREAM_DRAFT_NOISE, n);
    let draft_logits: Vec<f64> = target_logits
        .iter()
        .zip(&noise)
        .map(|(t, e)| agreement * t + (1.0 - agreement) * e)
        .collect();

    let to_table = |logits: &[f64]| -> Result<Vec<ProbDist>> {
        logits
            .chunks_exact(vocab_size)
            .map(ProbDist::from_logits)
            .collect()
    };
    Ok(ModelPair {
        draft: TableModel {
            seed,
            vocab_size,
            context_order,
            table: to_table(&draft_logits)?,
        },
        target: TableModel {
            seed,
            vocab_size,
            context_order,
            table: to_table(&target_logits)?,
        },
        agreement,
    })
}

/// Serializable recipe for a model pair; models themselves are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub context_order: usize,
    pub agreement: f64,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelPair> {
        make_model_pair(
            self.seed,
            self.vocab_size,
            self.context_order,
            self.agreement,
        )
    }
}
