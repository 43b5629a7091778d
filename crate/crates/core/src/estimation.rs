//! Resource requirement per unit of throughput, instance counts and the
//! combined compute + link target of a slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Resource, ResourceVector, TelemetrySample, CPU_TOL};

/// Resources consumed per Mbps: vCPU/Mbps and bytes/Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerUnitRequirement {
    pub cpu: f64,
    pub ram: f64,
    pub sto: f64,
}

impl PerUnitRequirement {
    pub fn new(cpu: f64, ram: f64, sto: f64) -> Self {
        Self { cpu, ram, sto }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.cpu, self.ram, self.sto]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn get(&self, r: Resource) -> f64 {
        self.to_array()[r.index()]
    }

    pub fn max(self, other: Self) -> Self {
        Self::new(self.cpu.max(other.cpu), self.ram.max(other.ram), self.sto.max(other.sto))
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.cpu * k, self.ram * k, self.sto * k)
    }

    /// Resource demand of `throughput` Mbps, real-valued (bytes not rounded).
    pub fn demand(&self, throughput: f64) -> [f64; 3] {
        self.to_array().map(|r| r * throughput)
    }
}

/// Compute and link resources a slice should get for the coming window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceTarget {
    pub compute: ResourceVector,
    pub link_mbps: f64,
}

impl SliceTarget {
    pub fn scale(&self, k: f64) -> Self {
        Self {
            compute: self.compute.scale(k),
            link_mbps: self.link_mbps * k,
        }
    }

    pub fn ge(&self, other: &Self) -> bool {
        other.compute.le(&self.compute) && self.link_mbps >= other.link_mbps
    }
}

/// Resource use of one sample divided by its throughput, per resource.
pub fn sample_requirement(sample: &TelemetrySample) -> PerUnitRequirement {
    let mut used = [0.0; 3];
    for vnf in &sample.vnfs {
        let alloc = vnf.alloc.to_array();
        for r in 0..3 {
            used[r] += alloc[r] * vnf.util[r];
        }
    }
    PerUnitRequirement::from_array(used.map(|u| u / sample.throughput_mbps))
}

/// Elementwise maximum of the per-sample requirement over the samples whose
/// throughput reaches `min_th`. When none does, `fallback` is returned.
pub fn per_unit_requirement(
    samples: &[TelemetrySample],
    min_th: f64,
    fallback: Option<PerUnitRequirement>,
) -> Result<PerUnitRequirement> {
    samples
        .iter()
        .filter(|s| s.throughput_mbps.is_finite() && s.throughput_mbps >= min_th)
        .map(sample_requirement)
        .reduce(PerUnitRequirement::max)
        .or(fallback)
        .ok_or(Error::NoUsableSamples)
}

/// Smallest number of instances of size `cap_max` that can hold `target`,
/// never less than one.
pub fn required_instance_count(target: &ResourceVector, cap_max: &ResourceVector) -> usize {
    let cpu = if target.cpu <= CPU_TOL {
        0.0
    } else {
        ((target.cpu - CPU_TOL) / cap_max.cpu).ceil()
    };
    let cpu = if cpu.is_finite() && cpu < usize::MAX as f64 {
        cpu as usize
    } else {
        usize::MAX
    };
    let bytes = |t: u64, c: u64| if c == 0 { if t == 0 { 0 } else { usize::MAX } } else { t.div_ceil(c) as usize };
    cpu.max(bytes(target.ram, cap_max.ram))
        .max(bytes(target.sto, cap_max.sto))
        .max(1)
}

/// Compute target `th_hat * req` paired with the link boundary.
pub fn target_allocation(th_hat: f64, req: &PerUnitRequirement, boundary: f64) -> SliceTarget {
    SliceTarget {
        compute: ResourceVector::from_array_ceil(req.demand(th_hat.max(0.0))),
        link_mbps: boundary.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KpiSample, VnfSnapshot, GB};
    use proptest::prelude::*;

    fn gb(x: f64) -> u64 {
        (x * GB as f64).round() as u64
    }

    fn sample(th: f64, vnfs: &[(ResourceVector, [f64; 3])]) -> TelemetrySample {
        TelemetrySample {
            timestamp_s: 0,
            throughput_mbps: th,
            vnfs: vnfs
                .iter()
                .map(|(a, u)| VnfSnapshot { alloc: *a, util: *u })
                .collect(),
            link_util: 0.0,
            kpis: KpiSample::default(),
        }
    }

    #[test]
    fn requirement_single_vnf() {
        let s = sample(100.0, &[(ResourceVector::new(2.0, GB, GB), [0.5, 0.0, 0.0])]);
        let req = per_unit_requirement(&[s], 0.1, None).unwrap();
        assert!((req.cpu - 0.01).abs() < 1e-12);
    }

    #[test]
    fn requirement_takes_max_over_samples() {
        let a = ResourceVector::new(2.0, GB, GB);
        let samples = [
            sample(100.0, &[(a, [0.5, 0.1, 0.1])]),
            sample(50.0, &[(a, [0.5, 0.1, 0.1])]),
        ];
        let req = per_unit_requirement(&samples, 0.1, None).unwrap();
        assert!((req.cpu - 0.02).abs() < 1e-12);
    }

    #[test]
    fn requirement_zero_load() {
        let s = sample(10.0, &[(ResourceVector::new(2.0, GB, GB), [0.0; 3])]);
        assert_eq!(per_unit_requirement(&[s], 0.1, None).unwrap(), PerUnitRequirement::default());
    }

    #[test]
    fn requirement_skips_low_traffic() {
        let s = sample(0.05, &[(ResourceVector::new(2.0, GB, GB), [0.5; 3])]);
        assert_eq!(
            per_unit_requirement(std::slice::from_ref(&s), 0.1, None),
            Err(Error::NoUsableSamples)
        );
        let prev = PerUnitRequirement::new(0.3, 1.0, 2.0);
        assert_eq!(per_unit_requirement(&[s], 0.1, Some(prev)).unwrap(), prev);
    }

    #[test]
    fn instance_counts() {
        let cap = ResourceVector::new(3.0, gb(1.0), gb(1.2));
        assert_eq!(required_instance_count(&ResourceVector::new(5.0, gb(2.0), gb(2.0)), &cap), 2);
        assert_eq!(required_instance_count(&cap, &cap), 1);
        assert_eq!(required_instance_count(&ResourceVector::new(3.1, gb(0.5), gb(0.5)), &cap), 2);
        assert_eq!(required_instance_count(&ResourceVector::ZERO, &cap), 1);
    }

    #[test]
    fn target_from_forecast() {
        let req = PerUnitRequirement::new(0.01, 2e6, 3e6);
        let t = target_allocation(120.0, &req, 110.0);
        assert!((t.compute.cpu - 1.2).abs() < 1e-12);
        assert_eq!(t.compute.ram, 240_000_000);
        assert_eq!(t.compute.sto, 360_000_000);
        assert_eq!(t.link_mbps, 110.0);

        let t = target_allocation(0.0, &req, 7.0);
        assert!(t.compute.is_zero());
        assert_eq!(t.link_mbps, 7.0);
        assert!(target_allocation(50.0, &PerUnitRequirement::default(), 1.0).compute.is_zero());
    }

    proptest! {
        #[test]
        fn instance_count_scaling_law(k in 0.01..50.0f64) {
            // cap_max with exactly representable components keeps the law exact
            let cap = ResourceVector::new(2.0, 1 << 30, 1 << 31);
            let t = ResourceVector::new(2.0 * k, 0, 0);
            prop_assert_eq!(required_instance_count(&t, &cap), (k - CPU_TOL / 2.0).ceil().max(1.0) as usize);
        }

        #[test]
        fn duplicate_samples_do_not_change_requirement(th in 1.0..500.0f64, u in 0.0..1.0f64, n in 1usize..6) {
            let s = sample(th, &[(ResourceVector::new(2.0, GB, GB), [u, u / 2.0, u / 3.0])]);
            let once = per_unit_requirement(std::slice::from_ref(&s), 0.1, None).unwrap();
            let many = per_unit_requirement(&vec![s; n], 0.1, None).unwrap();
            prop_assert_eq!(once, many);
        }

        #[test]
        fn target_is_linear_in_forecast(th in 0.0..1e3f64, k in 0.0..10.0f64) {
            let req = PerUnitRequirement::new(0.02, 0.0, 0.0);
            let a = target_allocation(th, &req, 0.0).compute.cpu;
            let b = target_allocation(th * k, &req, 0.0).compute.cpu;
            prop_assert!((b - a * k).abs() <= 1e-9 * b.max(1.0));
        }
    }
}
