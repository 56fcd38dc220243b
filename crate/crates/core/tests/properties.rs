//! Property tests over the public API.

use proptest::prelude::*;
use speclab_core::dist::{tokens, ProbDist, TokenId};
use speclab_core::metrics::{simulate_runtime, speedup_ratio, DeviceProfile};
use speclab_core::model::make_model_pair;
use speclab_core::pipeline::{simulate_verification, PipelineConfig};
use speclab_core::specdec::{
    autoregressive_decode, exact_emission_distribution, speculative_decode, DecodeMode,
    DecodeTrace, SpecConfig,
};

fn dist(max_v: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..5.0], 2..max_v)
}

fn pair_of_dists() -> impl Strategy<Value = (ProbDist, ProbDist)> {
    (2usize..20)
        .prop_flat_map(|v| {
            (
                prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..5.0], v),
                prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..5.0], v),
            )
        })
        .prop_filter_map("zero mass", |(p, q)| {
            Some((ProbDist::normalized(p).ok()?, ProbDist::normalized(q).ok()?))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn emission_marginal_is_target((p, q) in pair_of_dists()) {
        let m = exact_emission_distribution(&p, &q).unwrap();
        for (a, b) in m.weights().iter().zip(q.weights()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalized_dists_are_valid(w in dist(40)) {
        if let Ok(d) = ProbDist::normalized(w) {
            prop_assert!(d.weights().iter().all(|x| *x >= 0.0));
            prop_assert!((d.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn greedy_speculation_is_lossless(
        model_seed in any::<u64>(),
        decode_seed in any::<u64>(),
        vocab in prop::sample::select(vec![4usize, 16]),
        order in 0usize..2,
        gamma in prop::sample::select(vec![1usize, 2, 4, 8]),
        agreement in 0.0f64..=1.0,
        prompt in prop::collection::vec(0u32..4, 3),
    ) {
        let pair = make_model_pair(model_seed, vocab, order, agreement).unwrap();
        let prompt = tokens(&prompt);
        let cfg = SpecConfig { gamma, max_new_tokens: 64, mode: DecodeMode::Greedy, seed: decode_seed };
        let (out, _) = speculative_decode(&pair, &prompt, &cfg).unwrap();
        let base = autoregressive_decode(&pair.target, &prompt, 64, DecodeMode::Greedy, decode_seed).unwrap();
        prop_assert_eq!(out, base);
    }

    #[test]
    fn trace_invariants_and_speedup_bound(
        model_seed in any::<u64>(),
        decode_seed in any::<u64>(),
        gamma in 0usize..10,
        agreement in 0.0f64..=1.0,
        sampling in any::<bool>(),
        t_draft in 0.001f64..0.01,
        factor in 1.5f64..20.0,
        t_verify in 0.0f64..0.001,
    ) {
        let mode = if sampling { DecodeMode::Sampling } else { DecodeMode::Greedy };
        let pair = make_model_pair(model_seed, 8, 1, agreement).unwrap();
        let prompt = tokens(&[1, 2]);
        let cfg = SpecConfig { gamma, max_new_tokens: 48, mode, seed: decode_seed };
        let (out, trace) = speculative_decode(&pair, &prompt, &cfg).unwrap();
        prop_assert_eq!(out.len(), 50);
        prop_assert_eq!(&trace.output, &out);
        let mut concatenated = prompt.clone();
        for it in &trace.iterations {
            it.check_invariants().unwrap();
            concatenated.extend_from_slice(&it.emitted);
        }
        prop_assert_eq!(&concatenated[..50], &out[..]);
        prop_assert_eq!(concatenated.len(), trace.n_final);

        let tar = speclab_core::metrics::token_acceptance_rate(&trace);
        prop_assert_eq!(tar.is_none(), gamma == 0);
        if let Some(t) = tar {
            prop_assert!((0.0..=1.0).contains(&t));
        }

        // Rejections can only pull realized speedup below the all-accepted ideal.
        let t_target = t_draft * factor;
        let profile = DeviceProfile::new("p", t_draft, t_target, t_verify, 1.0).unwrap();
        let produced = (trace.n_final - prompt.len()) as f64;
        let spec_tps = produced / simulate_runtime(&trace, &profile);
        let base_tps = 1.0 / (t_target + t_verify);
        let g = gamma as f64;
        let bound = (g + 1.0) * (t_target + t_verify) / (g * t_draft + t_target + (g + 1.0) * t_verify);
        prop_assert!(speedup_ratio(spec_tps, base_tps).unwrap() <= bound + 1e-9);
    }
}

#[test]
fn pipeline_replays_serialized_traces() {
    let pair = make_model_pair(17, 16, 1, 0.6).unwrap();
    let cfg = SpecConfig {
        gamma: 5,
        max_new_tokens: 80,
        mode: DecodeMode::Sampling,
        seed: 23,
    };
    let (_, trace) = speculative_decode(&pair, &[TokenId(3)], &cfg).unwrap();
    let json = serde_json::to_string(&trace).unwrap();
    let replayed: DecodeTrace = serde_json::from_str(&json).unwrap();
    let pipe = PipelineConfig::default();
    for it in &replayed.iterations {
        let unit = simulate_verification(it, &pipe).unwrap();
        assert_eq!(unit.decided_bits(), it.decisions());
        assert_eq!(unit.committed, it.accept_count);
        assert_eq!(unit.cycles, 4 + 5 - 1);
    }
}
