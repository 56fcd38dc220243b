//! Invariant suites runnable from the command line.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::{sample_token, ProbDist, TokenId};
use crate::error::Result;
use crate::model::make_model_pair;
use crate::pipeline::{simulate_verification, PipelineConfig};
use crate::rng::{SeededStream, UniformSource};
use crate::specdec::{
    autoregressive_decode, draft_phase, exact_emission_weights_with, residual_weights,
    speculative_decode, verify_phase, DecodeMode, ResidualFn, SpecConfig,
};

/// Significance level of the Monte Carlo goodness-of-fit test.
pub const CHI_SQUARE_ALPHA: f64 = 0.001;
/// Largest tolerated `|m(x) - q(x)|` for the closed-form emission check.
pub const ANALYTIC_TOLERANCE: f64 = 1e-12;

const ANALYTIC_VOCABS: [usize; 4] = [2, 3, 5, 17];
const MC_DRAFT: [f64; 3] = [0.6, 0.3, 0.1];
const MC_TARGET: [f64; 3] = [0.2, 0.5, 0.3];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    pub analytic_pairs: usize,
    pub mc_steps: usize,
    pub greedy_configs: usize,
    pub greedy_tokens: usize,
    pub decode_configs: usize,
    pub pipeline_iterations: usize,
    /// Overrides the gammas every decoding check draws from.
    pub gammas: Option<Vec<usize>>,
    pub pipeline: PipelineConfig,
    /// Residual used by the closed-form emission check.
    pub residual: ResidualFn,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            analytic_pairs: 1000,
            mc_steps: 1_000_000,
            greedy_configs: 100,
            greedy_tokens: 256,
            decode_configs: 40,
            pipeline_iterations: 1000,
            gammas: None,
            pipeline: PipelineConfig::default(),
            residual: residual_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// First failing input, with the seed needed to reproduce it.
    pub counterexample: Option<String>,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: true,
            detail,
            counterexample: None,
        }
    }

    fn fail(name: &'static str, detail: String, counterexample: String) -> Self {
        Self {
            name,
            passed: false,
            detail,
            counterexample: Some(counterexample),
        }
    }

    fn error(name: &'static str, err: crate::Error, context: String) -> Self {
        Self::fail(name, format!("error: {err}"), context)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub checks: Vec<CheckResult>,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

pub fn verify_suite(options: &SuiteOptions) -> SuiteSummary {
    let gammas = |default: &[usize]| options.gammas.clone().unwrap_or_else(|| default.to_vec());
    SuiteSummary {
        checks: vec![
            check_emission_equivalence(options.analytic_pairs, options.seed, options.residual),
            check_monte_carlo_equivalence(options.mc_steps, options.seed),
            check_greedy_identity(
                options.greedy_configs,
                options.greedy_tokens,
                &gammas(&[1, 2, 4, 8]),
                options.seed,
            ),
            check_decode_invariants(
                options.decode_configs,
                &gammas(&[0, 1, 2, 4, 8]),
                options.seed,
            ),
            check_pipeline_equivalence(
                options.pipeline_iterations,
                &gammas(&[1, 2, 3, 4, 5, 6, 7, 8]),
                &options.pipeline,
                options.seed,
            ),
        ],
    }
}

/// A random distribution with occasional exact zeros.
fn random_dist(rng: &mut SeededStream, vocab_size: usize) -> ProbDist {
    loop {
        let w: Vec<f64> = (0..vocab_size)
            .map(|_| {
                if rng.next_uniform() < 0.15 {
                    0.0
                } else {
                    (2.0 * rng.next_normal()).exp()
                }
            })
            .collect();
        if let Ok(d) = ProbDist::normalized(w) {
            return d;
        }
    }
}

fn pick<T: Copy>(rng: &mut SeededStream, items: &[T]) -> T {
    items[rng.next_index(items.len())]
}

/// The closed-form first-token marginal equals `q` for random `(p, q)`.
pub fn check_emission_equivalence(pairs: usize, seed: u64, residual: ResidualFn) -> CheckResult {
    const NAME: &str = "emission-equivalence (analytic)";
    let mut rng = SeededStream::new(seed, 100);
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let v = ANALYTIC_VOCABS[i % ANALYTIC_VOCABS.len()];
        let p = random_dist(&mut rng, v);
        let q = random_dist(&mut rng, v);
        let case = || {
            format!(
                "seed={seed} pair={i} p={:?} q={:?}",
                p.weights(),
                q.weights()
            )
        };
        let m = match exact_emission_weights_with(&p, &q, residual) {
            Ok(m) => m,
            Err(e) => return CheckResult::error(NAME, e, case()),
        };
        let dev = m
            .iter()
            .zip(q.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |acc, d| if d.is_nan() || d > acc { d } else { acc });
        if dev.is_nan() || dev > ANALYTIC_TOLERANCE {
            return CheckResult::fail(NAME, format!("max |m - q| = {dev:e}"), case());
        }
        worst = worst.max(dev);
    }
    CheckResult::pass(NAME, format!("{pairs} pairs, max |m - q| = {worst:e}"))
}

/// Chi-square goodness of fit of simulated first emitted tokens against `q`.
pub fn check_monte_carlo_equivalence(steps: usize, seed: u64) -> CheckResult {
    const NAME: &str = "emission-equivalence (monte carlo)";
    let p = ProbDist::new(MC_DRAFT.to_vec()).expect("fixed draft");
    let q = ProbDist::new(MC_TARGET.to_vec()).expect("fixed target");
    let case = || format!("seed={seed} steps={steps} p={MC_DRAFT:?} q={MC_TARGET:?}");
    let mut rng = SeededStream::new(seed, 101);
    let mut counts = [0u64; 3];
    for _ in 0..steps {
        let step = sample_token(&p, rng.next_uniform()).and_then(|x| {
            verify_phase(
                vec![x],
                vec![p.clone()],
                vec![q.clone(), q.clone()],
                DecodeMode::Sampling,
                &mut rng,
            )
        });
        match step {
            Ok(rec) => counts[rec.emitted[0].index()] += 1,
            Err(e) => return CheckResult::error(NAME, e, case()),
        }
    }
    let (stat, p_value) = chi_square(&counts, q.weights());
    let detail = format!("counts={counts:?} chi2={stat:.4} p={p_value:.4}");
    if p_value > CHI_SQUARE_ALPHA {
        CheckResult::pass(NAME, detail)
    } else {
        CheckResult::fail(NAME, detail, case())
    }
}

/// Pearson statistic and upper-tail p-value with `k - 1` degrees of freedom.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let expected = n as f64 * p;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    (stat, dist.sf(stat))
}

/// Greedy speculative output equals greedy target-only output.
pub fn check_greedy_identity(
    configs: usize,
    tokens: usize,
    gammas: &[usize],
    seed: u64,
) -> CheckResult {
    const NAME: &str = "greedy-identity";
    let mut rng = SeededStream::new(seed, 102);
    for i in 0..configs {
        let vocab = pick(&mut rng, &[4, 16]);
        let order = pick(&mut rng, &[0, 1]);
        let gamma = pick(&mut rng, gammas);
        let agreement = rng.next_uniform();
        let model_seed = rng.next_u64();
        let decode_seed = rng.next_u64();
        let prompt: Vec<TokenId> = (0..8)
            .map(|_| TokenId::from(rng.next_index(vocab)))
            .collect();
        let case = format!(
            "seed={seed} config={i} vocab={vocab} order={order} gamma={gamma} agreement={agreement} \
             model_seed={model_seed} decode_seed={decode_seed} prompt={prompt:?}"
        );
        let outcome = make_model_pair(model_seed, vocab, order, agreement).and_then(|pair| {
            let spec = SpecConfig {
                gamma,
                max_new_tokens: tokens,
                mode: DecodeMode::Greedy,
                seed: decode_seed,
            };
            let (fast, _) = speculative_decode(&pair, &prompt, &spec)?;
            let slow = autoregressive_decode(
                &pair.target,
                &prompt,
                tokens,
                DecodeMode::Greedy,
                decode_seed,
            )?;
            Ok(fast
                .iter()
                .zip(&slow)
                .position(|(a, b)| a != b)
                .or((fast.len() != slow.len()).then_some(fast.len().min(slow.len()))))
        });
        match outcome {
            Ok(None) => {}
            Ok(Some(pos)) => {
                return CheckResult::fail(NAME, format!("outputs diverge at position {pos}"), case)
            }
            Err(e) => return CheckResult::error(NAME, e, case),
        }
    }
    CheckResult::pass(
        NAME,
        format!("{configs}/{configs} configs identical over {tokens} tokens"),
    )
}

/// Emission count, trace determinism and gamma = 0 reduction.
pub fn check_decode_invariants(configs: usize, gammas: &[usize], seed: u64) -> CheckResult {
    const NAME: &str = "decode-invariants";
    let mut rng = SeededStream::new(seed, 103);
    let mut iterations = 0usize;
    for i in 0..configs {
        let vocab = pick(&mut rng, &[3, 8, 16]);
        let order = pick(&mut rng, &[0, 1, 2]);
        let gamma = pick(&mut rng, gammas);
        let mode = pick(&mut rng, &[DecodeMode::Greedy, DecodeMode::Sampling]);
        let agreement = rng.next_uniform();
        let model_seed = rng.next_u64();
        let decode_seed = rng.next_u64();
        let prompt: Vec<TokenId> = (0..4)
            .map(|_| TokenId::from(rng.next_index(vocab)))
            .collect();
        let case = format!(
            "seed={seed} config={i} vocab={vocab} order={order} gamma={gamma} mode={mode:?} \
             agreement={agreement} model_seed={model_seed} decode_seed={decode_seed} prompt={prompt:?}"
        );
        let mut run = || -> Result<Option<String>> {
            let pair = make_model_pair(model_seed, vocab, order, agreement)?;
            let spec = SpecConfig {
                gamma,
                max_new_tokens: 64,
                mode,
                seed: decode_seed,
            };
            let first = speculative_decode(&pair, &prompt, &spec)?;
            for (k, it) in first.1.iterations.iter().enumerate() {
                if let Err(e) = it.check_invariants() {
                    return Ok(Some(format!("iteration {k}: {e}")));
                }
            }
            iterations += first.1.iterations.len();
            if speculative_decode(&pair, &prompt, &spec)? != first {
                return Ok(Some("repeat run produced a different trace".into()));
            }
            let zero = SpecConfig { gamma: 0, ..spec };
            let (spec_zero, _) = speculative_decode(&pair, &prompt, &zero)?;
            let target_only = autoregressive_decode(&pair.target, &prompt, 64, mode, decode_seed)?;
            if spec_zero != target_only {
                return Ok(Some("gamma = 0 differs from target-only decoding".into()));
            }
            Ok(None)
        };
        match run() {
            Ok(None) => {}
            Ok(Some(why)) => return CheckResult::fail(NAME, why, case),
            Err(e) => return CheckResult::error(NAME, e, case),
        }
    }
    CheckResult::pass(NAME, format!("{configs} configs, {iterations} iterations"))
}

/// Pipeline decisions match the reference verifier bit for bit.
pub fn check_pipeline_equivalence(
    iterations: usize,
    gammas: &[usize],
    pipeline: &PipelineConfig,
    seed: u64,
) -> CheckResult {
    const NAME: &str = "pipeline-golden-equivalence";
    let mut rng = SeededStream::new(seed, 104);
    for i in 0..iterations {
        let gamma = pick(&mut rng, gammas);
        let mode = pick(&mut rng, &[DecodeMode::Greedy, DecodeMode::Sampling]);
        let agreement = rng.next_uniform();
        let model_seed = rng.next_u64();
        let decode_seed = rng.next_u64();
        let context = vec![TokenId::from(rng.next_index(16))];
        let case = format!(
            "seed={seed} iteration={i} gamma={gamma} mode={mode:?} agreement={agreement} \
             model_seed={model_seed} decode_seed={decode_seed} context={context:?}"
        );
        let run = || -> Result<Option<String>> {
            let pair = make_model_pair(model_seed, 16, 1, agreement)?;
            let mut stream = SeededStream::new(decode_seed, 2);
            let (drafted, draft_dists) =
                draft_phase(&pair.draft, &context, gamma, mode, &mut stream)?;
            let mut ext = context.clone();
            let mut target_dists = vec![pair.target.next_dist(&ext)?.clone()];
            for &t in &drafted {
                ext.push(t);
                target_dists.push(pair.target.next_dist(&ext)?.clone());
            }
            let golden = verify_phase(drafted, draft_dists, target_dists, mode, &mut stream)?;
            let unit = simulate_verification(&golden, pipeline)?;
            if unit.decided_bits() != golden.decisions() {
                return Ok(Some(format!(
                    "decisions {:?} vs reference {:?}",
                    unit.decisions,
                    golden.decisions()
                )));
            }
            if unit.committed != golden.accept_count {
                return Ok(Some(format!(
                    "committed {} vs accept_count {}",
                    unit.committed, golden.accept_count
                )));
            }
            let rejected = usize::from(golden.rejected_at.is_some());
            if unit.squashed != gamma - golden.accept_count - rejected {
                return Ok(Some(format!(
                    "squashed {} does not reconcile",
                    unit.squashed
                )));
            }
            Ok(None)
        };
        match run() {
            Ok(None) => {}
            Ok(Some(why)) => return CheckResult::fail(NAME, why, case),
            Err(e) => return CheckResult::error(NAME, e, case),
        }
    }
    CheckResult::pass(
        NAME,
        format!("{iterations}/{iterations} iterations identical"),
    )
}
