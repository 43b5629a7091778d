//! Flow-level environment: turns offered traffic and a slice configuration
//! into utilisations and measured KPIs.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::closed_loop::compute_lb_weights;
use crate::error::{Error, Result};
use crate::estimation::PerUnitRequirement;
use crate::kpi::SurrogateKpiModel;
use crate::model::{SliceConfig, TelemetrySample, VnfSnapshot, MB};

/// Ground-truth resources per Mbps, with an optional sinusoidal drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementProfile {
    pub cpu_per_mbps: f64,
    pub ram_mb_per_mbps: f64,
    pub sto_mb_per_mbps: f64,
    /// Relative drift amplitude, e.g. 0.1 for +-10 %.
    #[serde(default)]
    pub drift: f64,
    #[serde(default = "default_drift_period")]
    pub drift_period_h: f64,
}

fn default_drift_period() -> f64 {
    24.0
}

impl RequirementProfile {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.cpu_per_mbps, self.ram_mb_per_mbps, self.sto_mb_per_mbps];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("requirement per Mbps must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.drift) {
            return Err(Error::Validation("requirement drift must lie in [0, 1)".into()));
        }
        if !(self.drift_period_h > 0.0) {
            return Err(Error::Validation("requirement drift_period_h must be positive".into()));
        }
        Ok(())
    }

    pub fn at(&self, t_s: u64) -> PerUnitRequirement {
        let phase = TAU * t_s as f64 / (self.drift_period_h * 3600.0);
        let k = 1.0 + self.drift * phase.sin();
        PerUnitRequirement::new(
            self.cpu_per_mbps * k,
            self.ram_mb_per_mbps * MB as f64 * k,
            self.sto_mb_per_mbps * MB as f64 * k,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub sample: TelemetrySample,
    /// Bottleneck utilisation before capping.
    pub bottleneck: f64,
    pub served_mbps: f64,
    pub dropped_mbps: f64,
}

/// Advances one step. Demand is split across instances by `weights`;
/// utilisations are capped at 1 in the sample while KPIs follow the uncapped
/// bottleneck.
pub fn step_environment(
    config: &SliceConfig,
    weights: &[f64],
    offered: f64,
    req: &PerUnitRequirement,
    model: &SurrogateKpiModel,
    timestamp_s: u64,
) -> StepResult {
    let offered = offered.max(0.0);
    let demand = req.demand(offered);
    let fallback;
    let weights = if weights.len() == config.vnf_stack.len() {
        weights
    } else {
        fallback = compute_lb_weights(&config.vnf_stack).unwrap_or_default();
        &fallback
    };

    let mut bottleneck: f64 = 0.0;
    let vnfs = config
        .vnf_stack
        .iter()
        .zip(weights)
        .map(|(vnf, &w)| {
            let alloc = vnf.alloc().to_array();
            let mut util = [0.0; 3];
            for r in 0..3 {
                let d = w * demand[r];
                let u = if d <= 0.0 {
                    0.0
                } else if alloc[r] <= 0.0 {
                    f64::INFINITY
                } else {
                    d / alloc[r]
                };
                bottleneck = bottleneck.max(u);
                util[r] = u.min(1.0);
            }
            VnfSnapshot {
                alloc: vnf.alloc(),
                util,
            }
        })
        .collect();

    let link_load = if offered <= 0.0 {
        0.0
    } else if config.link_cap_mbps > 0.0 {
        offered / config.link_cap_mbps
    } else {
        f64::INFINITY
    };
    bottleneck = bottleneck.max(link_load);
    let kpis = model.kpis_at(bottleneck);
    let dropped = offered * kpis.packet_loss;

    StepResult {
        sample: TelemetrySample {
            timestamp_s,
            throughput_mbps: offered,
            vnfs,
            link_util: link_load.min(1.0),
            kpis,
        },
        bottleneck,
        served_mbps: offered - dropped,
        dropped_mbps: dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InstanceBounds, ResourceVector, VnfInstance, GB};

    fn config(cpu: f64, link: f64) -> SliceConfig {
        let b = InstanceBounds {
            min: ResourceVector::ZERO,
            max: ResourceVector::new(10.0, 10 * GB, 10 * GB),
        };
        SliceConfig {
            vnf_stack: vec![VnfInstance::new(0, ResourceVector::new(cpu, GB, GB), &b)],
            link_cap_mbps: link,
        }
    }

    #[test]
    fn idle_step() {
        let m = SurrogateKpiModel::default();
        let r = step_environment(&config(1.0, 100.0), &[1.0], 0.0, &PerUnitRequirement::new(0.01, 1e6, 1e6), &m, 0);
        assert!(r.sample.vnfs[0].util.iter().all(|&u| u == 0.0));
        assert_eq!(r.sample.link_util, 0.0);
        assert_eq!(r.sample.kpis, m.kpis_at(0.0));
        assert_eq!(r.sample.kpis.avg_delay_ms, m.base_delay_ms);
    }

    #[test]
    fn cpu_util_is_demand_over_alloc() {
        let m = SurrogateKpiModel::default();
        // 80 Mbps at 0.01 vCPU/Mbps is 0.8 vCPU on a 1 vCPU instance
        let r = step_environment(&config(1.0, 1000.0), &[1.0], 80.0, &PerUnitRequirement::new(0.01, 0.0, 0.0), &m, 0);
        assert!((r.sample.vnfs[0].util[0] - 0.8).abs() < 1e-12);
        assert!((r.bottleneck - 0.8).abs() < 1e-12);
    }

    #[test]
    fn link_overload_saturates() {
        let m = SurrogateKpiModel::default();
        let r = step_environment(&config(10.0, 50.0), &[1.0], 80.0, &PerUnitRequirement::default(), &m, 0);
        assert_eq!(r.sample.link_util, 1.0);
        assert!(r.sample.kpis.packet_loss > 0.0);
        assert!(r.sample.kpis.avg_delay_ms.is_infinite());
        assert!((r.served_mbps + r.dropped_mbps - 80.0).abs() < 1e-9);
    }

    #[test]
    fn drift_stays_within_band() {
        let p = RequirementProfile {
            cpu_per_mbps: 0.02,
            ram_mb_per_mbps: 5.0,
            sto_mb_per_mbps: 6.0,
            drift: 0.1,
            drift_period_h: 24.0,
        };
        for t in (0..86_400).step_by(600) {
            let r = p.at(t);
            assert!(r.cpu >= 0.018 - 1e-15 && r.cpu <= 0.022 + 1e-15);
        }
        assert_eq!(p.at(0).cpu, 0.02);
    }
}
