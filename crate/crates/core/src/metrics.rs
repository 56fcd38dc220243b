//! Throughput, acceptance and speedup metrics plus a per-device cost model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specdec::DecodeTrace;

/// Reference ratios reported for the hardware verification unit and the
/// published gamma sweep. Used only to check ratio arithmetic and reporting.
pub mod fixtures {
    /// Verification tokens/sec of the pipelined unit relative to an A100.
    pub const RATE_VS_A100: f64 = 6.99;
    /// Verification tokens/sec relative to an RTX A6000.
    pub const RATE_VS_A6000: f64 = 7.74;
    /// Verification tokens/sec/Watt relative to an A100.
    pub const EFFICIENCY_VS_A100: f64 = 117.95;
    /// Verification tokens/sec/Watt relative to an RTX A6000.
    pub const EFFICIENCY_VS_A6000: f64 = 159.66;

    /// Share of end-to-end speculative decoding time spent verifying.
    pub const VERIFY_FRACTION_RANGE: (f64, f64) = (0.02, 0.10);

    /// `(model pair, gamma, tokens/sec, rendered speedup)`.
    pub const GAMMA_SWEEP: &[(&str, usize, f64, &str)] = &[
        ("gpt2-124m/1554m", 0, 77.0, "1.00"),
        ("gpt2-124m/1554m", 2, 102.0, "1.32"),
        ("gpt2-124m/1554m", 4, 95.0, "1.23"),
        ("gpt2-124m/1554m", 8, 84.0, "1.09"),
        ("opt-125m/6.7b", 0, 38.0, "1.00"),
        ("opt-125m/6.7b", 2, 56.0, "1.47"),
        ("opt-125m/6.7b", 4, 70.0, "1.84"),
        ("opt-125m/6.7b", 8, 60.0, "1.58"),
        ("opt-125m/6.7b", 16, 34.0, "0.89"),
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tokens_generated: usize,
    /// Simulated seconds.
    pub elapsed: f64,
    pub throughput: f64,
    pub tar: Option<f64>,
    pub speedup_vs_baseline: Option<f64>,
}

impl RunMetrics {
    pub fn from_trace(
        trace: &DecodeTrace,
        profile: &DeviceProfile,
        baseline_throughput: Option<f64>,
    ) -> Result<Self> {
        let tokens_generated = trace.tokens_generated();
        let elapsed = simulate_runtime(trace, profile);
        if elapsed <= 0.0 {
            return Err(Error::range("elapsed", "trace has no iterations"));
        }
        let throughput = tokens_generated as f64 / elapsed;
        let speedup_vs_baseline = baseline_throughput
            .map(|b| speedup_ratio(throughput, b))
            .transpose()?;
        Ok(Self {
            tokens_generated,
            elapsed,
            throughput,
            tar: token_acceptance_rate(trace),
            speedup_vs_baseline,
        })
    }
}

/// Per-step latencies and power draw of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub t_draft_step: f64,
    pub t_target_step: f64,
    pub t_verify_per_token: f64,
    pub power_watts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl DeviceProfile {
    pub fn new(
        name: impl Into<String>,
        t_draft_step: f64,
        t_target_step: f64,
        t_verify_per_token: f64,
        power_watts: f64,
    ) -> Result<Self> {
        let profile = Self {
            name: name.into(),
            t_draft_step,
            t_target_step,
            t_verify_per_token,
            power_watts,
            note: None,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Times must be positive; `t_verify_per_token` may be zero, which
    /// recovers the draft/target-only cost model.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t_draft_step) {
            return Err(Error::range(
                "t_draft_step",
                format!("{} on {}", self.t_draft_step, self.name),
            ));
        }
        if !positive(self.t_target_step) {
            return Err(Error::range(
                "t_target_step",
                format!("{} on {}", self.t_target_step, self.name),
            ));
        }
        if !(self.t_verify_per_token >= 0.0 && self.t_verify_per_token.is_finite()) {
            return Err(Error::range(
                "t_verify_per_token",
                format!("{} on {}", self.t_verify_per_token, self.name),
            ));
        }
        if !positive(self.power_watts) {
            return Err(Error::range(
                "power_watts",
                format!("{} on {}", self.power_watts, self.name),
            ));
        }
        Ok(())
    }
}

const SHIPPED_PROFILES: &str = include_str!("../data/profiles.json");

/// Illustrative profiles for `a100`, `a6000`, `i7-12700k`, `hls-c` and `hades`.
pub fn shipped_profiles() -> Vec<DeviceProfile> {
    parse_profiles(SHIPPED_PROFILES).expect("shipped profiles are valid")
}

pub fn parse_profiles(json: &str) -> Result<Vec<DeviceProfile>> {
    let profiles: Vec<DeviceProfile> =
        serde_json::from_str(json).map_err(|e| Error::config("profiles", e.to_string()))?;
    for (i, p) in profiles.iter().enumerate() {
        p.validate()
            .map_err(|e| Error::config(format!("profiles[{i}]"), e.to_string()))?;
    }
    Ok(profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<DeviceProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text)
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// Accepted drafted tokens over all drafted tokens; `None` when nothing was drafted.
pub fn token_acceptance_rate(trace: &DecodeTrace) -> Option<f64> {
    let drafted = trace.total_drafted();
    (drafted > 0).then(|| trace.total_accepted() as f64 / drafted as f64)
}

pub fn speedup_ratio(spec_throughput: f64, baseline_throughput: f64) -> Result<f64> {
    if !positive(baseline_throughput) {
        return Err(Error::range(
            "baseline_throughput",
            format!("{baseline_throughput} must be positive"),
        ));
    }
    Ok(spec_throughput / baseline_throughput)
}

/// Two decimals, halves rounded away from zero.
pub fn render_ratio(ratio: f64) -> String {
    let scaled = (ratio * 100.0).abs();
    // Nudge values like 1.005 that sit a hair below the half in binary.
    let rounded = (scaled + 0.5 + 1e-9).floor() / 100.0;
    format!("{:.2}", rounded.copysign(ratio))
}

/// `(gamma + 1) t_target / (gamma t_draft + t_target)`: the speedup when
/// every drafted token is accepted.
pub fn ideal_speedup(gamma: usize, t_draft: f64, t_target: f64) -> Result<f64> {
    if !positive(t_draft) || !positive(t_target) {
        return Err(Error::range(
            "step time",
            format!("t_draft={t_draft}, t_target={t_target} must be positive"),
        ));
    }
    let g = gamma as f64;
    Ok((g + 1.0) * t_target / (g * t_draft + t_target))
}

/// End-to-end speedup when a fraction `f` of runtime is accelerated by `s`.
pub fn amdahl_end_to_end(verify_fraction: f64, verify_speedup: f64) -> Result<f64> {
    if !(verify_fraction > 0.0 && verify_fraction < 1.0) {
        return Err(Error::range(
            "verify_fraction",
            format!("{verify_fraction} not in (0, 1)"),
        ));
    }
    if !positive(verify_speedup) || verify_speedup.is_infinite() {
        return Err(Error::range(
            "verify_speedup",
            format!("{verify_speedup} must be positive and finite"),
        ));
    }
    Ok(1.0 / ((1.0 - verify_fraction) + verify_fraction / verify_speedup))
}

/// Simulated wall-clock of a trace: each iteration costs
/// `gamma_i t_draft + t_target + (gamma_i + 1) t_verify`.
pub fn simulate_runtime(trace: &DecodeTrace, profile: &DeviceProfile) -> f64 {
    trace
        .iterations
        .iter()
        .map(|it| iteration_cost(it.gamma(), profile))
        .sum()
}

pub fn iteration_cost(gamma: usize, profile: &DeviceProfile) -> f64 {
    let g = gamma as f64;
    g * profile.t_draft_step + profile.t_target_step + (g + 1.0) * profile.t_verify_per_token
}

pub fn tokens_per_sec_per_watt(tokens: f64, elapsed: f64, power_watts: f64) -> Result<f64> {
    if tokens.is_nan() || tokens < 0.0 {
        return Err(Error::range("tokens", format!("{tokens} is negative")));
    }
    if !positive(elapsed) {
        return Err(Error::range(
            "elapsed",
            format!("{elapsed} must be positive"),
        ));
    }
    if !positive(power_watts) {
        return Err(Error::range(
            "power_watts",
            format!("{power_watts} must be positive"),
        ));
    }
    Ok(tokens / elapsed / power_watts)
}
