//! KPI prediction, violation checks and the validate-and-inflate loop.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{PerUnitRequirement, SliceTarget};
use crate::model::{KpiName, KpiSample, KpiThresholds, Resource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiModelInput {
    pub candidate: SliceTarget,
    pub offered_throughput: f64,
    pub per_unit_req: PerUnitRequirement,
}

/// Predicts the KPIs a slice would see under a candidate configuration.
pub trait KpiModel: Send + Sync {
    fn predict(&self, input: &KpiModelInput) -> Result<KpiSample>;
}

/// Queueing-style surrogate: delay grows as `u / (1 - u)` with the
/// bottleneck utilisation `u`, loss grows linearly past a knee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateKpiModel {
    pub base_delay_ms: f64,
    pub delay_gain_ms: f64,
    pub jitter_fraction: f64,
    pub loss_knee: f64,
    pub loss_gain: f64,
}

impl Default for SurrogateKpiModel {
    fn default() -> Self {
        Self {
            base_delay_ms: 2.0,
            delay_gain_ms: 20.0,
            jitter_fraction: 0.3,
            loss_knee: 0.9,
            loss_gain: 0.05,
        }
    }
}

impl SurrogateKpiModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.base_delay_ms,
            self.delay_gain_ms,
            self.jitter_fraction,
            self.loss_knee,
            self.loss_gain,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("surrogate KPI constants must be finite and >= 0".into()));
        }
        if self.loss_knee >= 1.0 {
            return Err(Error::Validation("surrogate loss_knee must be below 1".into()));
        }
        Ok(())
    }

    /// KPIs at bottleneck utilisation `u`. At `u >= 1` delays saturate to
    /// infinity and loss is at least `loss_gain`.
    pub fn kpis_at(&self, u: f64) -> KpiSample {
        let u = u.max(0.0);
        if u >= 1.0 {
            return KpiSample {
                avg_delay_ms: f64::INFINITY,
                max_delay_ms: f64::INFINITY,
                jitter_ms: f64::INFINITY,
                packet_loss: self.loss_gain.max(1.0 - 1.0 / u).min(1.0),
            };
        }
        let delay = self.base_delay_ms + self.delay_gain_ms * u / (1.0 - u);
        let loss = ((u - self.loss_knee) / (1.0 - self.loss_knee)).max(0.0) * self.loss_gain;
        KpiSample {
            avg_delay_ms: delay,
            max_delay_ms: 2.0 * delay,
            jitter_ms: self.jitter_fraction * delay,
            packet_loss: loss.min(1.0),
        }
    }
}

/// Bottleneck utilisation of a candidate: the most loaded compute resource or
/// the link, whichever is higher.
pub fn bottleneck_utilization(input: &KpiModelInput) -> Result<f64> {
    let offered = input.offered_throughput.max(0.0);
    let demand = input.per_unit_req.demand(offered);
    let alloc = input.candidate.compute.to_array();
    let mut u: f64 = 0.0;
    for r in Resource::ALL {
        let (d, a) = (demand[r.index()], alloc[r.index()]);
        if d <= 0.0 {
            continue;
        }
        if a <= 0.0 {
            return Err(Error::InvalidCandidate {
                resource: r.to_string(),
                offered_mbps: offered,
            });
        }
        u = u.max(d / a);
    }
    if offered > 0.0 {
        if input.candidate.link_mbps <= 0.0 {
            return Err(Error::InvalidCandidate {
                resource: "link".into(),
                offered_mbps: offered,
            });
        }
        u = u.max(offered / input.candidate.link_mbps);
    }
    Ok(u)
}

impl KpiModel for SurrogateKpiModel {
    fn predict(&self, input: &KpiModelInput) -> Result<KpiSample> {
        Ok(self.kpis_at(bottleneck_utilization(input)?))
    }
}

/// KPIs whose threshold is present and strictly exceeded.
pub fn check_kpi_violation(measured: &KpiSample, thresholds: &KpiThresholds) -> BTreeSet<KpiName> {
    KpiName::ALL
        .into_iter()
        .filter(|&k| match thresholds.get(k) {
            Some(limit) => measured.get(k) > limit,
            None => false,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidatedTarget {
    pub target: SliceTarget,
    /// Number of inflation steps applied to the input candidate.
    pub inflations: usize,
}

/// Inflates `candidate` by `1 + omega_validate` until the model predicts no
/// threshold violation. At most `max_iters` model evaluations are made.
pub fn validate_configuration(
    candidate: SliceTarget,
    thresholds: &KpiThresholds,
    model: &dyn KpiModel,
    offered_throughput: f64,
    per_unit_req: PerUnitRequirement,
    omega_validate: f64,
    max_iters: usize,
) -> Result<ValidatedTarget> {
    let mut current = candidate;
    for inflations in 0..max_iters.max(1) {
        let input = KpiModelInput {
            candidate: current,
            offered_throughput,
            per_unit_req,
        };
        let compliant = match model.predict(&input) {
            Ok(kpis) => check_kpi_violation(&kpis, thresholds).is_empty(),
            Err(Error::InvalidCandidate { .. }) => false,
            Err(e) => return Err(e),
        };
        if compliant {
            return Ok(ValidatedTarget {
                target: current,
                inflations,
            });
        }
        if inflations + 1 < max_iters {
            current = current.scale(1.0 + omega_validate);
        }
    }
    Err(Error::ValidationDiverged {
        iterations: max_iters,
        last: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResourceVector;
    use proptest::prelude::*;

    fn thresholds(avg: Option<f64>, max: Option<f64>, jitter: Option<f64>, loss: Option<f64>) -> KpiThresholds {
        KpiThresholds {
            avg_delay_ms: avg,
            max_delay_ms: max,
            jitter_ms: jitter,
            packet_loss: loss,
            ..Default::default()
        }
    }

    fn input(cpu: f64, link: f64, offered: f64, req_cpu: f64) -> KpiModelInput {
        KpiModelInput {
            candidate: SliceTarget {
                compute: ResourceVector::new(cpu, 0, 0),
                link_mbps: link,
            },
            offered_throughput: offered,
            per_unit_req: PerUnitRequirement::new(req_cpu, 0.0, 0.0),
        }
    }

    #[test]
    fn unloaded_system() {
        let m = SurrogateKpiModel::default();
        let k = m.predict(&input(1.0, 10.0, 0.0, 0.01)).unwrap();
        assert_eq!(k.avg_delay_ms, 2.0);
        assert_eq!(k.jitter_ms, 0.6);
        assert_eq!(k.packet_loss, 0.0);
    }

    #[test]
    fn delay_closed_form() {
        let m = SurrogateKpiModel {
            base_delay_ms: 5.0,
            delay_gain_ms: 10.0,
            ..Default::default()
        };
        // cpu demand 0.5 of 1.0 allocated, link lightly loaded
        let k = m.predict(&input(1.0, 1000.0, 50.0, 0.01)).unwrap();
        assert!((k.avg_delay_ms - 15.0).abs() < 1e-12);
        assert!((k.max_delay_ms - 30.0).abs() < 1e-12);
    }

    #[test]
    fn overload_saturates() {
        let m = SurrogateKpiModel::default();
        let k = m.kpis_at(1.0);
        assert!(k.avg_delay_ms.is_infinite() && k.jitter_ms.is_infinite());
        assert!(k.packet_loss > 0.0);
        let all = thresholds(Some(1e6), Some(1e6), Some(1e6), Some(1.0));
        assert!(!check_kpi_violation(&k, &all).is_empty());
        assert!((m.kpis_at(2.0).packet_loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_with_traffic_is_invalid() {
        let m = SurrogateKpiModel::default();
        assert!(matches!(
            m.predict(&input(0.0, 10.0, 5.0, 0.01)),
            Err(Error::InvalidCandidate { .. })
        ));
        assert!(matches!(
            m.predict(&input(1.0, 0.0, 5.0, 0.01)),
            Err(Error::InvalidCandidate { .. })
        ));
    }

    #[test]
    fn violations_use_strict_inequality() {
        let t = thresholds(Some(300.0), Some(300.0), Some(100.0), Some(1e-5));
        let mut m = KpiSample {
            avg_delay_ms: 310.0,
            max_delay_ms: 250.0,
            jitter_ms: 10.0,
            packet_loss: 0.0,
        };
        assert_eq!(check_kpi_violation(&m, &t), BTreeSet::from([KpiName::AvgDelay]));
        m = KpiSample {
            avg_delay_ms: 300.0,
            max_delay_ms: 300.0,
            jitter_ms: 100.0,
            packet_loss: 1e-5,
        };
        assert!(check_kpi_violation(&m, &t).is_empty());
    }

    #[test]
    fn absent_thresholds_never_violate() {
        let t = thresholds(Some(10.0), Some(10.0), None, Some(1e-4));
        let m = KpiSample {
            avg_delay_ms: 1.0,
            max_delay_ms: 2.0,
            jitter_ms: 50.0,
            packet_loss: 0.0,
        };
        assert!(check_kpi_violation(&m, &t).is_empty());
    }

    #[test]
    fn compliant_candidate_is_returned_unchanged() {
        let m = SurrogateKpiModel::default();
        let t = thresholds(Some(100.0), None, None, None);
        let c = input(10.0, 100.0, 10.0, 0.01).candidate;
        let v = validate_configuration(c, &t, &m, 10.0, PerUnitRequirement::new(0.01, 0.0, 0.0), 0.02, 200).unwrap();
        assert_eq!(v.inflations, 0);
        assert_eq!(v.target, c);
    }

    #[test]
    fn inflation_count_matches_closed_form() {
        let m = SurrogateKpiModel {
            base_delay_ms: 5.0,
            delay_gain_ms: 10.0,
            ..Default::default()
        };
        let t = thresholds(Some(15.0), None, None, None);
        // u0 = 0.6: 60 Mbps at 0.01 cpu/Mbps on 1 cpu
        let i = input(1.0, 1e6, 60.0, 0.01);
        let v = validate_configuration(i.candidate, &t, &m, 60.0, i.per_unit_req, 0.02, 200).unwrap();
        assert_eq!(v.inflations, 10);
        assert!(v.target.ge(&i.candidate));
    }

    #[test]
    fn zero_capacity_diverges() {
        let m = SurrogateKpiModel::default();
        let t = thresholds(Some(15.0), None, None, None);
        let i = input(0.0, 10.0, 60.0, 0.01);
        let r = validate_configuration(i.candidate, &t, &m, 60.0, i.per_unit_req, 0.02, 25);
        assert!(matches!(r, Err(Error::ValidationDiverged { iterations: 25, .. })));
    }

    proptest! {
        #[test]
        fn delay_increases_with_utilisation(a in 0.0..0.999f64, b in 0.0..0.999f64) {
            let m = SurrogateKpiModel::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(m.kpis_at(hi).avg_delay_ms > m.kpis_at(lo).avg_delay_ms);
            if hi <= m.loss_knee {
                prop_assert_eq!(m.kpis_at(hi).packet_loss, 0.0);
            }
        }

        #[test]
        fn no_thresholds_no_violations(d in 0.0..1e9f64, j in 0.0..1e9f64, l in 0.0..1.0f64) {
            let m = KpiSample { avg_delay_ms: d, max_delay_ms: 2.0 * d, jitter_ms: j, packet_loss: l };
            prop_assert!(check_kpi_violation(&m, &KpiThresholds::default()).is_empty());
        }

        #[test]
        fn validation_never_shrinks(cpu in 0.1..10.0f64, link in 1.0..500.0f64, offered in 0.0..400.0f64) {
            let m = SurrogateKpiModel::default();
            let t = thresholds(Some(50.0), Some(100.0), Some(30.0), Some(1e-3));
            let i = input(cpu, link, offered, 0.01);
            if let Ok(v) = validate_configuration(i.candidate, &t, &m, offered, i.per_unit_req, 0.02, 200) {
                prop_assert!(v.target.ge(&i.candidate));
            }
        }
    }
}
