//! Cycle-level model of a pipelined speculative verification unit.
//!
//! Draft and target logits for one iteration sit in an on-chip SRAM buffer of
//! `(gamma + 1) * vocab_size * bytes_per_logit` bytes. Drafted tokens enter
//! the pipeline one per cycle and flow through four stage roles: logit fetch,
//! ratio compute, compare, commit/rollback. With fewer than four stages the
//! roles collapse onto the last stage. Every position is decided, but once a
//! position is rejected at commit every younger position is squashed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{argmax_token, TokenId};
use crate::error::{Error, Result};
use crate::specdec::{DecodeMode, IterationRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline_depth: usize,
    pub clock_hz: f64,
    pub sram_capacity_bytes: u64,
    pub bytes_per_logit: u64,
    pub vocab_size: usize,
}

impl Default for PipelineConfig {
    /// Illustrative defaults: 4 stages at 500 MHz, fp16 logits over a
    /// 50257-token vocabulary, 1 MiB of SRAM.
    fn default() -> Self {
        Self {
            pipeline_depth: 4,
            clock_hz: 5.0e8,
            sram_capacity_bytes: 1 << 20,
            bytes_per_logit: 2,
            vocab_size: 50257,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pipeline_depth < 1 {
            return Err(Error::config("pipeline_depth", "must be >= 1"));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(Error::config(
                "clock_hz",
                format!("{} must be positive", self.clock_hz),
            ));
        }
        if self.sram_capacity_bytes == 0 {
            return Err(Error::config("sram_capacity_bytes", "must be positive"));
        }
        if self.bytes_per_logit == 0 {
            return Err(Error::config("bytes_per_logit", "must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must be >= 2"));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(json).map_err(|e| Error::config("pipeline", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn logit_buffer_bytes(gamma: usize, vocab_size: usize, bytes_per_logit: u64) -> u64 {
    (gamma as u64 + 1) * vocab_size as u64 * bytes_per_logit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SramFit {
    Fits {
        required: u64,
        capacity: u64,
    },
    Overflow {
        required: u64,
        capacity: u64,
        deficit: u64,
    },
}

impl SramFit {
    pub fn fits(&self) -> bool {
        matches!(self, SramFit::Fits { .. })
    }
}

pub fn check_sram_fit(gamma: usize, config: &PipelineConfig) -> SramFit {
    let required = logit_buffer_bytes(gamma, config.vocab_size, config.bytes_per_logit);
    let capacity = config.sram_capacity_bytes;
    if required <= capacity {
        SramFit::Fits { required, capacity }
    } else {
        SramFit::Overflow {
            required,
            capacity,
            deficit: required - capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    /// Younger than a rejected position; decided but never committed.
    Squashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyUnitResult {
    pub cycles: u64,
    pub decisions: Vec<Decision>,
    pub committed: usize,
    pub squashed: usize,
    pub tokens_per_second: f64,
}

impl VerifyUnitResult {
    /// Accept/reject bits of the non-squashed positions, comparable with
    /// [`IterationRecord::decisions`].
    pub fn decided_bits(&self) -> Vec<bool> {
        self.decisions
            .iter()
            .filter_map(|d| match d {
                Decision::Accept => Some(true),
                Decision::Reject => Some(false),
                Decision::Squashed => None,
            })
            .collect()
    }

    pub fn rejected(&self) -> bool {
        self.decisions.contains(&Decision::Reject)
    }
}

#[derive(Debug, Clone)]
struct Slot {
    position: usize,
    token: TokenId,
    p_token: f64,
    q_token: f64,
    q_argmax: TokenId,
    ratio: f64,
    verdict: Option<bool>,
}

struct StageMap {
    ratio: usize,
    compare: usize,
    commit: usize,
}

impl StageMap {
    fn new(depth: usize) -> Self {
        let last = depth - 1;
        Self {
            ratio: 1.min(last),
            compare: 2.min(last),
            commit: last,
        }
    }
}

/// Runs one iteration's verification through the pipeline, cycle by cycle.
pub fn simulate_verification(
    iteration: &IterationRecord,
    config: &PipelineConfig,
) -> Result<VerifyUnitResult> {
    config.validate()?;
    let gamma = iteration.gamma();
    if let SramFit::Overflow {
        required, capacity, ..
    } = check_sram_fit(gamma, config)
    {
        return Err(Error::Capacity { required, capacity });
    }
    if iteration.draft_dists.len() != gamma || iteration.target_dists.len() != gamma + 1 {
        return Err(Error::Shape(format!(
            "iteration with gamma {gamma} carries {} draft and {} target distributions",
            iteration.draft_dists.len(),
            iteration.target_dists.len()
        )));
    }
    if let Some(d) = iteration
        .draft_dists
        .iter()
        .chain(&iteration.target_dists)
        .find(|d| d.vocab_size() > config.vocab_size)
    {
        return Err(Error::Shape(format!(
            "distribution over {} tokens exceeds buffer vocab {}",
            d.vocab_size(),
            config.vocab_size
        )));
    }

    let depth = config.pipeline_depth;
    let stages = StageMap::new(depth);
    let mut pipe: Vec<Option<Slot>> = vec![None; depth];
    let mut decisions = vec![Decision::Squashed; gamma];
    let mut issued = 0usize;
    let mut retired = 0usize;
    let mut rolled_back = false;
    let mut cycles = 0u64;

    while retired < gamma {
        // Shift: the oldest slot leaves, everything advances one stage.
        pipe.rotate_right(1);
        pipe[0] = None;
        if issued < gamma {
            pipe[0] = Some(fetch(iteration, issued));
            issued += 1;
        }

        for (stage, cell) in pipe.iter_mut().enumerate() {
            let Some(slot) = cell.as_mut() else {
                continue;
            };
            if stage == stages.ratio {
                slot.ratio = match iteration.mode {
                    DecodeMode::Greedy => f64::from(u8::from(slot.token == slot.q_argmax)),
                    DecodeMode::Sampling => (slot.q_token / slot.p_token).min(1.0),
                };
            }
            if stage == stages.compare {
                slot.verdict = match iteration.mode {
                    DecodeMode::Greedy => Some(slot.ratio == 1.0),
                    DecodeMode::Sampling => iteration
                        .uniform_draws
                        .get(slot.position)
                        .map(|r| *r < slot.ratio),
                };
            }
        }

        if let Some(slot) = pipe[stages.commit].take() {
            decisions[slot.position] = if rolled_back {
                Decision::Squashed
            } else {
                match slot.verdict {
                    Some(true) => Decision::Accept,
                    Some(false) => {
                        rolled_back = true;
                        Decision::Reject
                    }
                    None => {
                        return Err(Error::Shape(format!(
                            "position {} reached commit without a verification draw",
                            slot.position
                        )))
                    }
                }
            };
            retired += 1;
        }
        cycles += 1;
    }

    let committed = decisions.iter().filter(|d| **d == Decision::Accept).count();
    let squashed = decisions
        .iter()
        .filter(|d| **d == Decision::Squashed)
        .count();
    let tokens_per_second = if cycles == 0 {
        0.0
    } else {
        gamma as f64 * config.clock_hz / cycles as f64
    };
    Ok(VerifyUnitResult {
        cycles,
        decisions,
        committed,
        squashed,
        tokens_per_second,
    })
}

fn fetch(iteration: &IterationRecord, position: usize) -> Slot {
    let token = iteration.drafted[position];
    let q = &iteration.target_dists[position];
    Slot {
        position,
        token,
        p_token: iteration.draft_dists[position].prob(token),
        q_token: q.prob(token),
        q_argmax: argmax_token(q),
        ratio: 0.0,
        verdict: None,
    }
}

/// Steady-state verified tokens per second: `gamma` tokens every
/// `depth + gamma - 1` cycles.
pub fn verified_tokens_per_sec(config: &PipelineConfig, gamma: usize) -> Result<f64> {
    if gamma == 0 {
        return Err(Error::Undefined(
            "verification rate with gamma = 0 (nothing to verify)".into(),
        ));
    }
    config.validate()?;
    let cycles = (config.pipeline_depth + gamma - 1) as f64;
    Ok(gamma as f64 * config.clock_hz / cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{tokens, ProbDist};
    use crate::model::make_model_pair;
    use crate::rng::SeededStream;
    use crate::rng::STREAM_DECODE;
    use crate::specdec::{draft_phase, verify_phase};

    fn small(depth: usize) -> PipelineConfig {
        PipelineConfig {
            pipeline_depth: depth,
            vocab_size: 16,
            ..PipelineConfig::default()
        }
    }

    fn iteration(gamma: usize, mode: DecodeMode, seed: u64, agreement: f64) -> IterationRecord {
        let pair = make_model_pair(seed, 16, 1, agreement).unwrap();
        let mut rng = SeededStream::new(seed, STREAM_DECODE);
        let ctx = tokens(&[(seed % 16) as u32]);
        let (drafted, dd) = draft_phase(&pair.draft, &ctx, gamma, mode, &mut rng).unwrap();
        let mut ext = ctx.clone();
        let mut td = vec![pair.target.next_dist(&ext).unwrap().clone()];
        for t in &drafted {
            ext.push(*t);
            td.push(pair.target.next_dist(&ext).unwrap().clone());
        }
        verify_phase(drafted, dd, td, mode, &mut rng).unwrap()
    }

    #[test]
    fn buffer_sizing() {
        assert_eq!(logit_buffer_bytes(0, 50257, 2), 100_514);
        assert_eq!(logit_buffer_bytes(8, 50257, 2), 904_626);
        assert_eq!(logit_buffer_bytes(3, 4, 4), 64);
    }

    #[test]
    fn sram_fit() {
        let mut cfg = PipelineConfig::default();
        assert!(check_sram_fit(8, &cfg).fits());
        cfg.sram_capacity_bytes = 524_288;
        assert_eq!(
            check_sram_fit(8, &cfg),
            SramFit::Overflow {
                required: 904_626,
                capacity: 524_288,
                deficit: 380_338
            }
        );
        let tiny = PipelineConfig {
            vocab_size: 4,
            sram_capacity_bytes: 8,
            ..PipelineConfig::default()
        };
        assert!(check_sram_fit(0, &tiny).fits());
    }

    #[test]
    fn cycle_counts() {
        for (depth, gamma, expect) in [(4, 4, 7), (4, 1, 4), (1, 1, 1), (2, 5, 6), (4, 0, 0)] {
            let it = iteration(gamma, DecodeMode::Sampling, 3, 0.5);
            let res = simulate_verification(&it, &small(depth)).unwrap();
            assert_eq!(res.cycles, expect, "depth {depth} gamma {gamma}");
            assert_eq!(res.decisions.len(), gamma);
        }
    }

    #[test]
    fn gamma_zero_has_nothing_to_do() {
        let it = iteration(0, DecodeMode::Greedy, 1, 0.5);
        let res = simulate_verification(&it, &small(4)).unwrap();
        assert_eq!(res.cycles, 0);
        assert!(res.decisions.is_empty());
        assert_eq!(res.tokens_per_second, 0.0);
    }

    #[test]
    fn squash_after_reject() {
        let p = ProbDist::new(vec![0.5, 0.5]).unwrap();
        let q = ProbDist::new(vec![0.9, 0.1]).unwrap();
        // position 0 accepted (ratio 1), position 1 rejected (ratio 0.2 vs r 0.5)
        let rec = IterationRecord {
            mode: DecodeMode::Sampling,
            drafted: tokens(&[0, 1, 0, 0]),
            draft_dists: vec![p.clone(); 4],
            target_dists: vec![q.clone(); 5],
            accept_count: 1,
            rejected_at: Some(1),
            emitted: tokens(&[0, 0]),
            uniform_draws: vec![0.3, 0.5],
        };
        let res = simulate_verification(&rec, &small(4)).unwrap();
        assert_eq!(
            res.decisions,
            vec![
                Decision::Accept,
                Decision::Reject,
                Decision::Squashed,
                Decision::Squashed
            ]
        );
        assert_eq!(res.committed, 1);
        assert_eq!(res.squashed, 2);
        assert_eq!(res.decided_bits(), rec.decisions());
        assert_eq!(res.cycles, 7);
    }

    #[test]
    fn missing_draw_is_an_error() {
        let p = ProbDist::new(vec![0.5, 0.5]).unwrap();
        let rec = IterationRecord {
            mode: DecodeMode::Sampling,
            drafted: tokens(&[0, 0]),
            draft_dists: vec![p.clone(); 2],
            target_dists: vec![p.clone(); 3],
            accept_count: 2,
            rejected_at: None,
            emitted: tokens(&[0, 0, 0]),
            uniform_draws: vec![0.1],
        };
        assert!(matches!(
            simulate_verification(&rec, &small(3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn overflow_is_a_capacity_error() {
        let it = iteration(8, DecodeMode::Greedy, 2, 0.5);
        let cfg = PipelineConfig {
            vocab_size: 16,
            sram_capacity_bytes: 64,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            simulate_verification(&it, &cfg),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn matches_golden_decisions() {
        for seed in 0..200 {
            for mode in [DecodeMode::Greedy, DecodeMode::Sampling] {
                let gamma = 1 + (seed as usize % 8);
                let it = iteration(gamma, mode, seed, 0.7);
                for depth in [1, 2, 4, 7] {
                    let res = simulate_verification(&it, &small(depth)).unwrap();
                    assert_eq!(res.decided_bits(), it.decisions());
                    assert_eq!(res.committed, it.accept_count);
                    let rejected = usize::from(it.rejected_at.is_some());
                    assert_eq!(res.squashed, gamma - it.accept_count - rejected);
                    assert!(res.committed + res.squashed <= gamma);
                }
            }
        }
    }

    #[test]
    fn throughput_formula() {
        let rate = verified_tokens_per_sec(&PipelineConfig::default(), 8).unwrap();
        assert!((rate - 8.0 * 5e8 / 11.0).abs() < 1e-3);
        let one = PipelineConfig {
            pipeline_depth: 1,
            ..PipelineConfig::default()
        };
        assert_eq!(verified_tokens_per_sec(&one, 1).unwrap(), 5e8);
        let big = verified_tokens_per_sec(&PipelineConfig::default(), 1_000_000).unwrap();
        assert!(big < 5e8 && big > 0.9999 * 5e8);
        assert!(matches!(
            verified_tokens_per_sec(&PipelineConfig::default(), 0),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn simulated_rate_matches_formula() {
        let cfg = small(4);
        for gamma in 1..=8 {
            let it = iteration(gamma, DecodeMode::Greedy, gamma as u64, 0.9);
            let res = simulate_verification(&it, &cfg).unwrap();
            let rate = verified_tokens_per_sec(&cfg, gamma).unwrap();
            assert!((res.tokens_per_second - rate).abs() <= 1e-6 * rate);
        }
    }

    #[test]
    fn throughput_monotone_below_clock() {
        let cfg = PipelineConfig::default();
        let mut prev = 0.0;
        for gamma in 1..=64 {
            let r = verified_tokens_per_sec(&cfg, gamma).unwrap();
            assert!(r > prev && r < cfg.clock_hz);
            prev = r;
        }
    }

    #[test]
    fn buffer_linearity() {
        for gamma in 0..32 {
            for v in [2usize, 17, 50257] {
                let b = logit_buffer_bytes(gamma, v, 2);
                assert_eq!(b, (gamma as u64 + 1) * logit_buffer_bytes(0, v, 2));
                assert_eq!(logit_buffer_bytes(gamma, 2 * v, 2), 2 * b);
            }
        }
    }

    #[test]
    fn config_json() {
        let cfg = PipelineConfig::from_json(include_str!("../data/pipeline.json")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert!(PipelineConfig::from_json(r#"{"pipeline_depth":0,"clock_hz":1,"sram_capacity_bytes":1,"bytes_per_logit":1,"vocab_size":2}"#).is_err());
    }
}
