use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dist::TokenId;
use crate::error::Result;
use crate::metrics::{simulate_runtime, speedup_ratio, DeviceProfile};
use crate::model::ModelPair;
use crate::pipeline::{check_sram_fit, simulate_verification, PipelineConfig, SramFit};
use crate::rng::{SeededStream, STREAM_PROMPT};
use crate::specdec::{speculative_decode, DecodeMode, SpecConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: usize,
    /// Simulated tokens/sec on the selected device.
    pub tokens_per_sec: f64,
    pub tar: Option<f64>,
    pub speedup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_unit: Option<VerifyUnitSummary>,
}

/// Verification-unit statistics over every iteration of a row's trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyUnitSummary {
    pub sram: SramFit,
    pub cycles: Option<u64>,
    pub verified_tokens_per_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub config_hash: String,
    pub base_seed: u64,
    pub device: String,
    pub mode: DecodeMode,
    pub trials: usize,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepReport {
    pub fn row(&self, gamma: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.gamma == gamma)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialTotals {
    tokens: usize,
    elapsed: f64,
    drafted: usize,
    accepted: usize,
    verify_cycles: u64,
    verified: usize,
}

impl TrialTotals {
    fn add(mut self, other: Self) -> Self {
        self.tokens += other.tokens;
        self.elapsed += other.elapsed;
        self.drafted += other.drafted;
        self.accepted += other.accepted;
        self.verify_cycles += other.verify_cycles;
        self.verified += other.verified;
        self
    }
}

fn trial_prompt(seed: u64, len: usize, vocab_size: usize) -> Vec<TokenId> {
    let mut s = SeededStream::new(seed, STREAM_PROMPT);
    (0..len)
        .map(|_| TokenId::from(s.next_index(vocab_size)))
        .collect()
}

fn run_trial(
    pair: &ModelPair,
    config: &ExperimentConfig,
    profile: &DeviceProfile,
    pipeline: Option<&PipelineConfig>,
    gamma: usize,
    trial: usize,
) -> Result<TrialTotals> {
    let seed = config.decode.base_seed.wrapping_add(trial as u64);
    let prompt = trial_prompt(seed, config.decode.prompt_len, pair.vocab_size());
    let spec = SpecConfig {
        gamma,
        max_new_tokens: config.decode.max_new_tokens,
        mode: config.decode.mode,
        seed,
    };
    let (_, trace) = speculative_decode(pair, &prompt, &spec)?;

    let mut totals = TrialTotals {
        // Overshoot tokens were produced and paid for, so they count.
        tokens: trace.n_final - trace.prompt.len(),
        elapsed: simulate_runtime(&trace, profile),
        drafted: trace.total_drafted(),
        accepted: trace.total_accepted(),
        ..TrialTotals::default()
    };
    if let Some(pipe) = pipeline.filter(|p| gamma > 0 && check_sram_fit(gamma, p).fits()) {
        for it in &trace.iterations {
            let unit = simulate_verification(it, pipe)?;
            totals.verify_cycles += unit.cycles;
            totals.verified += it.gamma();
        }
    }
    Ok(totals)
}

/// Runs every gamma in the config for `trials` seeds (`base_seed + i`) and
/// reports throughput as total tokens over total simulated time.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let pair = config.model.build()?;
    let profile = config.resolve_device()?;
    let pipeline = config.resolve_pipeline()?;

    let mut gammas = vec![0];
    for &g in &config.gamma_list {
        if !gammas.contains(&g) {
            gammas.push(g);
        }
    }
    let jobs: Vec<(usize, usize)> = gammas
        .iter()
        .flat_map(|&g| (0..config.decode.trials).map(move |t| (g, t)))
        .collect();
    // Collected in job order, so results do not depend on scheduling.
    let results: Vec<TrialTotals> = jobs
        .par_iter()
        .map(|&(g, t)| run_trial(&pair, config, &profile, pipeline.as_ref(), g, t))
        .collect::<Result<_>>()?;

    let totals: Vec<(usize, TrialTotals)> = gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let chunk = &results[i * config.decode.trials..(i + 1) * config.decode.trials];
            (
                g,
                chunk.iter().fold(TrialTotals::default(), |a, b| a.add(*b)),
            )
        })
        .collect();
    let throughput = |t: &TrialTotals| t.tokens as f64 / t.elapsed;
    let baseline = throughput(&totals[0].1);

    let rows = config
        .gamma_list
        .iter()
        .map(|&g| {
            let t = &totals
                .iter()
                .find(|(gg, _)| *gg == g)
                .expect("gamma was run")
                .1;
            let tps = throughput(t);
            Ok(SweepRow {
                gamma: g,
                tokens_per_sec: tps,
                tar: (t.drafted > 0).then(|| t.accepted as f64 / t.drafted as f64),
                speedup: speedup_ratio(tps, baseline)?,
                verify_unit: pipeline.as_ref().filter(|_| g > 0).map(|p| {
                    let sram = check_sram_fit(g, p);
                    let ran = sram.fits() && t.verify_cycles > 0;
                    VerifyUnitSummary {
                        sram,
                        cycles: ran.then_some(t.verify_cycles),
                        verified_tokens_per_sec: ran
                            .then(|| t.verified as f64 * p.clock_hz / t.verify_cycles as f64),
                    }
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepReport {
        rows,
        metadata: SweepMetadata {
            config_hash: config.hash(),
            base_seed: config.decode.base_seed,
            device: profile.name,
            mode: config.decode.mode,
            trials: config.decode.trials,
            max_new_tokens: config.decode.max_new_tokens,
        },
    })
}
