use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{tokens_per_sec_per_watt, DeviceProfile};
use crate::pipeline::{verified_tokens_per_sec, PipelineConfig};

/// Profile name whose verification rate comes from the pipeline model
/// instead of its `t_verify_per_token`.
pub const PIPELINE_DEVICE: &str = "hades";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSource {
    CostModel,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub name: String,
    pub source: RateSource,
    pub verify_tokens_per_sec: f64,
    pub power_watts: f64,
    pub tokens_per_sec_per_watt: f64,
}

/// `numerator` relative to `denominator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRatio {
    pub numerator: String,
    pub denominator: String,
    pub rate_ratio: f64,
    pub efficiency_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub gamma: usize,
    pub devices: Vec<DeviceEntry>,
    pub ratios: Vec<DeviceRatio>,
}

impl DeviceReport {
    pub fn ratio(&self, numerator: &str, denominator: &str) -> Option<&DeviceRatio> {
        self.ratios
            .iter()
            .find(|r| r.numerator == numerator && r.denominator == denominator)
    }
}

/// Verification throughput and efficiency for each device at one gamma,
/// plus every ordered pairwise ratio.
pub fn compare_devices(
    profiles: &[DeviceProfile],
    pipeline: &PipelineConfig,
    gamma: usize,
) -> Result<DeviceReport> {
    if profiles.len() < 2 {
        return Err(Error::config(
            "profiles",
            format!("need at least 2 profiles, got {}", profiles.len()),
        ));
    }
    let tokens = (gamma + 1) as f64;
    let devices = profiles
        .iter()
        .map(|p| {
            p.validate()?;
            let (source, rate) = if p.name == PIPELINE_DEVICE {
                (
                    RateSource::Pipeline,
                    verified_tokens_per_sec(pipeline, gamma)?,
                )
            } else {
                if p.t_verify_per_token <= 0.0 {
                    return Err(Error::config(
                        format!("profiles.{}.t_verify_per_token", p.name),
                        "must be positive to compare verification rates",
                    ));
                }
                let elapsed = tokens * p.t_verify_per_token;
                (RateSource::CostModel, tokens / elapsed)
            };
            Ok(DeviceEntry {
                name: p.name.clone(),
                source,
                verify_tokens_per_sec: rate,
                power_watts: p.power_watts,
                tokens_per_sec_per_watt: tokens_per_sec_per_watt(rate, 1.0, p.power_watts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ratios = Vec::with_capacity(devices.len() * (devices.len() - 1));
    for (i, a) in devices.iter().enumerate() {
        for (j, b) in devices.iter().enumerate() {
            if i != j {
                ratios.push(DeviceRatio {
                    numerator: a.name.clone(),
                    denominator: b.name.clone(),
                    rate_ratio: a.verify_tokens_per_sec / b.verify_tokens_per_sec,
                    efficiency_ratio: a.tokens_per_sec_per_watt / b.tokens_per_sec_per_watt,
                });
            }
        }
    }
    Ok(DeviceReport {
        gamma,
        devices,
        ratios,
    })
}
