//! Seeded synthetic traffic with a diurnal shape, gaussian noise and rare
//! multiplicative spikes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SliceType {
    #[serde(rename = "eMBB")]
    Embb,
    #[serde(rename = "uRLLC")]
    Urllc,
    #[serde(rename = "mMTC")]
    Mmtc,
    #[serde(rename = "VoIP")]
    Voip,
}

impl SliceType {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceType::Embb => "eMBB",
            SliceType::Urllc => "uRLLC",
            SliceType::Mmtc => "mMTC",
            SliceType::Voip => "VoIP",
        }
    }
}

impl fmt::Display for SliceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
    Both,
}

fn default_peak_width() -> f64 {
    2.5
}

fn default_spike_magnitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficProfile {
    pub direction: Direction,
    pub base_rate_mbps: f64,
    /// Relative swing of the diurnal component around the base rate.
    pub amplitude: f64,
    /// Hours of day (0..24) around which traffic peaks.
    #[serde(default)]
    pub peak_hours: Vec<f64>,
    /// Standard deviation of each peak bump, in hours.
    #[serde(default = "default_peak_width")]
    pub peak_width_h: f64,
    /// Relative standard deviation of per-step noise.
    #[serde(default)]
    pub noise_std: f64,
    /// Per-step probability of a spike.
    #[serde(default)]
    pub spike_prob: f64,
    /// Multiplier applied to the rate during a spike.
    #[serde(default = "default_spike_magnitude")]
    pub spike_magnitude: f64,
    /// Fixed seed for this profile; by default the scenario seed is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TrafficProfile {
    pub fn constant(rate_mbps: f64) -> Self {
        Self {
            direction: Direction::Both,
            base_rate_mbps: rate_mbps,
            amplitude: 0.0,
            peak_hours: Vec::new(),
            peak_width_h: default_peak_width(),
            noise_std: 0.0,
            spike_prob: 0.0,
            spike_magnitude: 1.0,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("traffic profile: {m}")));
        if !(self.base_rate_mbps.is_finite() && self.base_rate_mbps > 0.0) {
            return bad("base_rate_mbps must be positive");
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return bad("amplitude must lie in [0, 1]");
        }
        if self.peak_hours.iter().any(|h| !(0.0..24.0).contains(h)) {
            return bad("peak_hours must lie in [0, 24)");
        }
        if !(self.peak_width_h > 0.0) {
            return bad("peak_width_h must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return bad("spike_prob must lie in [0, 1]");
        }
        if !(self.spike_magnitude >= 0.0 && self.spike_magnitude.is_finite()) {
            return bad("spike_magnitude must be >= 0");
        }
        Ok(())
    }

    /// Diurnal shape in [-1, 1]: +1 at a peak hour, -1 far from every peak.
    pub fn diurnal(&self, hour: f64) -> f64 {
        if self.peak_hours.is_empty() {
            return 0.0;
        }
        let bump = self
            .peak_hours
            .iter()
            .map(|&p| {
                let d = (hour - p).rem_euclid(24.0);
                let d = d.min(24.0 - d);
                (-d * d / (2.0 * self.peak_width_h * self.peak_width_h)).exp()
            })
            .fold(0.0, f64::max);
        2.0 * bump - 1.0
    }
}

/// One rate per step, sampled at the start of each step.
pub fn generate_traffic(profile: &TrafficProfile, duration_s: u64, step_s: u64, seed: u64) -> Result<Vec<f64>> {
    profile.validate()?;
    if step_s == 0 || !duration_s.is_multiple_of(step_s) {
        return Err(Error::Validation(format!(
            "step of {step_s} s does not divide duration of {duration_s} s"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed.unwrap_or(seed));
    let noise = Normal::new(0.0, profile.noise_std)
        .map_err(|e| Error::Validation(format!("traffic noise: {e}")))?;
    let steps = duration_s / step_s;
    Ok((0..steps)
        .map(|i| {
            // Draw both variates every step so the stream stays aligned.
            let n = noise.sample(&mut rng);
            let spike = rng.random::<f64>() < profile.spike_prob;
            let hour = (i * step_s) as f64 / 3600.0;
            let mut rate = profile.base_rate_mbps
                * (1.0 + profile.amplitude * profile.diurnal(hour))
                * (1.0 + n);
            if spike {
                rate *= profile.spike_magnitude;
            }
            rate.max(0.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn flat_profile_is_constant() {
        let s = generate_traffic(&TrafficProfile::constant(42.0), 3600, 60, 7).unwrap();
        assert_eq!(s.len(), 60);
        assert!(s.iter().all(|&x| x == 42.0));
    }

    #[test]
    fn same_seed_same_series() {
        let mut p = TrafficProfile::constant(10.0);
        p.noise_std = 0.1;
        p.spike_prob = 0.1;
        p.spike_magnitude = 2.0;
        let a = generate_traffic(&p, 7200, 60, 3).unwrap();
        let b = generate_traffic(&p, 7200, 60, 3).unwrap();
        let c = generate_traffic(&p, 7200, 60, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn diurnal_peaks_and_troughs() {
        let mut p = TrafficProfile::constant(1.0);
        p.peak_hours = vec![20.0];
        assert_eq!(p.diurnal(20.0), 1.0);
        assert!(p.diurnal(8.0) < -0.99);
        // wraps around midnight
        p.peak_hours = vec![23.0];
        assert!((p.diurnal(1.0) - p.diurnal(21.0)).abs() < 1e-12);
    }

    #[test]
    fn bursty_profile_varies_more_than_flat() {
        let mut embb = TrafficProfile::constant(100.0);
        embb.amplitude = 0.85;
        embb.peak_hours = vec![20.0];
        embb.noise_std = 0.02;
        let mut voip = TrafficProfile::constant(100.0);
        voip.amplitude = 0.1;
        voip.peak_hours = vec![11.0, 17.0];
        voip.noise_std = 0.01;
        let a = generate_traffic(&embb, 86_400, 60, 1).unwrap();
        let b = generate_traffic(&voip, 86_400, 60, 1).unwrap();
        assert!(variance(&a) > variance(&b));
    }

    #[test]
    fn step_must_divide_duration() {
        assert!(generate_traffic(&TrafficProfile::constant(1.0), 100, 60, 0).is_err());
        assert!(generate_traffic(&TrafficProfile::constant(1.0), 100, 0, 0).is_err());
    }

    #[test]
    fn rates_never_negative() {
        let mut p = TrafficProfile::constant(1.0);
        p.noise_std = 3.0;
        let s = generate_traffic(&p, 86_400, 60, 9).unwrap();
        assert!(s.iter().all(|&x| x >= 0.0));
        assert!(s.contains(&0.0));
    }
}
