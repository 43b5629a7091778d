//! Traffic forecasting: history preprocessing, pluggable predictors, rolling
//! forecast error and the traffic boundary derived from them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TelemetrySample;

/// Min-max normalised throughput series plus what is needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl NormalizedSeries {
    pub fn denormalize(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }

    pub fn denormalized(&self) -> Vec<f64> {
        self.values.iter().map(|&y| self.denormalize(y)).collect()
    }
}

/// Keeps the last `kappa` samples, forward-fills missing (non-finite)
/// throughputs and min-max normalises the result.
///
/// A constant series maps to all zeros with `min == max` holding the level.
pub fn preprocess(history: &[TelemetrySample], kappa: usize) -> Result<NormalizedSeries> {
    let raw: Vec<f64> = history.iter().map(|s| s.throughput_mbps).collect();
    preprocess_values(&raw, kappa)
}

pub fn preprocess_values(raw: &[f64], kappa: usize) -> Result<NormalizedSeries> {
    if raw.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let start = raw.len().saturating_sub(kappa.max(1));
    let tail = &raw[start..];

    // Leading gaps repeat the last valid value before the suffix, or the first
    // valid one inside it when there is none.
    let first_valid = raw[..start]
        .iter()
        .rev()
        .chain(tail.iter())
        .copied()
        .find(|v| v.is_finite())
        .unwrap_or(0.0);
    let mut filled = Vec::with_capacity(tail.len());
    let mut last = first_valid;
    for &v in tail {
        if v.is_finite() {
            last = v.max(0.0);
        }
        filled.push(last);
    }

    let min = filled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = filled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let values = if span > 0.0 {
        filled.iter().map(|v| (v - min) / span).collect()
    } else {
        vec![0.0; filled.len()]
    };
    Ok(NormalizedSeries { values, min, max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutput {
    pub predicted_throughput: f64,
    pub horizon: usize,
}

/// A traffic predictor operating on a (normalised) series; `horizon` counts
/// series steps ahead of the last value.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, series: &[f64], horizon: usize) -> Result<f64>;
}

/// Returns the value one season before the forecast instant, or the last value
/// when the series does not reach back that far.
#[derive(Debug, Clone)]
pub struct SeasonalNaive {
    pub period: usize,
}

impl SeasonalNaive {
    /// One day of one-minute samples.
    pub const DEFAULT_PERIOD: usize = 24 * 60;
}

impl Default for SeasonalNaive {
    fn default() -> Self {
        Self {
            period: Self::DEFAULT_PERIOD,
        }
    }
}

impl Predictor for SeasonalNaive {
    fn name(&self) -> &str {
        "seasonal_naive"
    }

    fn predict(&self, series: &[f64], horizon: usize) -> Result<f64> {
        let last = *series.last().ok_or(Error::EmptyHistory)?;
        let horizon = horizon.max(1);
        let period = self.period.max(1);
        let seasons_back = horizon.div_ceil(period);
        let target = series.len() - 1 + horizon;
        let value = target
            .checked_sub(seasons_back * period)
            .and_then(|i| series.get(i).copied())
            .unwrap_or(last);
        Ok(value.max(0.0))
    }
}

/// Exponentially weighted moving average; the forecast is the smoothed level.
#[derive(Debug, Clone)]
pub struct Ewma {
    pub alpha: f64,
}

impl Default for Ewma {
    fn default() -> Self {
        Self { alpha: 0.3 }
    }
}

impl Predictor for Ewma {
    fn name(&self) -> &str {
        "ewma"
    }

    fn predict(&self, series: &[f64], _horizon: usize) -> Result<f64> {
        let (first, rest) = series.split_first().ok_or(Error::EmptyHistory)?;
        let level = rest
            .iter()
            .fold(*first, |level, &x| self.alpha * x + (1.0 - self.alpha) * level);
        Ok(level.max(0.0))
    }
}

pub type PredictorFactory = fn() -> Box<dyn Predictor>;

/// Name-indexed set of predictors; the two reference implementations are
/// registered by default.
pub struct PredictorRegistry {
    entries: Vec<(String, PredictorFactory)>,
}

impl Default for PredictorRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("seasonal_naive", || Box::new(SeasonalNaive::default()));
        r.register("ewma", || Box::new(Ewma::default()));
        r
    }
}

impl PredictorRegistry {
    pub fn register(&mut self, name: &str, factory: PredictorFactory) {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), factory));
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Predictor>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f())
            .ok_or_else(|| Error::UnknownForecaster(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Forecasts the throughput `horizon_steps` samples ahead in Mbps.
pub fn forecast(
    predictor: &dyn Predictor,
    history: &[TelemetrySample],
    kappa: usize,
    horizon_steps: usize,
) -> Result<ForecastOutput> {
    let series = preprocess(history, kappa)?;
    let y = predictor.predict(&series.values, horizon_steps)?;
    Ok(ForecastOutput {
        predicted_throughput: series.denormalize(y).max(0.0),
        horizon: horizon_steps,
    })
}

/// Rolling mean absolute forecast error over the monitoring window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTracker {
    capacity: usize,
    pairs: VecDeque<(f64, f64)>,
}

impl ErrorTracker {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            pairs: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.pairs.iter()
    }

    /// Mean of `|predicted - actual|` in Mbps; zero before the first pair.
    pub fn mean_error(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|(p, a)| (p - a).abs()).sum::<f64>() / self.pairs.len() as f64
    }
}

pub fn update_error(tracker: &ErrorTracker, predicted: f64, actual: f64) -> ErrorTracker {
    let mut next = tracker.clone();
    if next.pairs.len() == next.capacity {
        next.pairs.pop_front();
    }
    next.pairs.push_back((predicted, actual));
    next
}

/// `epsilon * th_hat + e_monitor`, all in Mbps.
pub fn traffic_boundary(th_hat: f64, epsilon: f64, e_monitor: f64) -> f64 {
    epsilon * th_hat + e_monitor
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn min_max_normalisation() {
        let s = preprocess_values(&[10.0, 20.0, 30.0], 15).unwrap();
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
        assert_eq!((s.min, s.max), (10.0, 30.0));
    }

    #[test]
    fn constant_series_maps_to_zero() {
        let s = preprocess_values(&[5.0, 5.0, 5.0], 15).unwrap();
        assert_eq!(s.values, vec![0.0; 3]);
        assert_eq!(s.min, 5.0);
        assert_eq!(s.denormalize(0.0), 5.0);
    }

    #[test]
    fn keeps_last_kappa_samples() {
        let raw: Vec<f64> = (0..20).map(f64::from).collect();
        let s = preprocess_values(&raw, 15).unwrap();
        assert_eq!(s.values.len(), 15);
        assert_eq!(s.denormalized(), raw[5..].to_vec());
    }

    #[test]
    fn forward_fills_gaps() {
        let s = preprocess_values(&[f64::NAN, 4.0, f64::NAN, 8.0], 10).unwrap();
        assert_eq!(s.denormalized(), vec![4.0, 4.0, 4.0, 8.0]);
        // a gap at the start of the retained suffix takes the previous value
        let s = preprocess_values(&[3.0, f64::NAN, 5.0], 2).unwrap();
        assert_eq!(s.denormalized(), vec![3.0, 5.0]);
    }

    #[test]
    fn empty_history_is_rejected() {
        assert_eq!(preprocess_values(&[], 3), Err(Error::EmptyHistory));
        assert!(SeasonalNaive::default().predict(&[], 1).is_err());
        assert!(Ewma::default().predict(&[], 1).is_err());
    }

    #[test]
    fn ewma_constant_fixed_point() {
        assert_eq!(Ewma::default().predict(&[4.2; 10], 1).unwrap(), 4.2);
    }

    #[test]
    fn seasonal_naive_one_period_back() {
        let p = SeasonalNaive { period: 3 };
        assert_eq!(p.predict(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1).unwrap(), 4.0);
        assert_eq!(p.predict(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap(), 6.0);
        // horizon beyond one season reaches two seasons back
        assert_eq!(p.predict(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 4).unwrap(), 4.0);
        // too short: last value
        assert_eq!(p.predict(&[1.0, 2.0], 1).unwrap(), 2.0);
    }

    #[test]
    fn single_sample_falls_back_to_last_value() {
        assert_eq!(SeasonalNaive::default().predict(&[7.0], 1).unwrap(), 7.0);
        assert_eq!(Ewma::default().predict(&[7.0], 1).unwrap(), 7.0);
    }

    #[test]
    fn registry_lookup() {
        let r = PredictorRegistry::default();
        assert_eq!(r.create("ewma").unwrap().name(), "ewma");
        assert_eq!(r.create("seasonal_naive").unwrap().name(), "seasonal_naive");
        assert!(matches!(r.create("lstm"), Err(Error::UnknownForecaster(_))));
    }

    #[test]
    fn error_tracker_mean_and_eviction() {
        let t = ErrorTracker::new(2);
        let t = update_error(&t, 100.0, 90.0);
        let t = update_error(&t, 100.0, 110.0);
        assert_eq!(t.mean_error(), 10.0);

        let perfect = update_error(&update_error(&ErrorTracker::new(2), 5.0, 5.0), 7.0, 7.0);
        assert_eq!(perfect.mean_error(), 0.0);

        // third pair evicts (100, 90)
        let t = update_error(&t, 50.0, 54.0);
        assert_eq!(t.len(), 2);
        assert_eq!(t.mean_error(), 7.0);
    }

    #[test]
    fn boundary_values() {
        assert_eq!(traffic_boundary(100.0, 1.0, 0.0), 100.0);
        assert!((traffic_boundary(100.0, 0.814, 6.0) - 87.4).abs() < 1e-9);
        assert_eq!(traffic_boundary(0.0, 0.814, 3.0), 3.0);
    }

    proptest! {
        #[test]
        fn boundary_monotone(th in 0.0..1e4f64, dth in 0.0..1e3f64, eps in 0.01..1.0f64,
                             deps in 0.0..0.5f64, e in 0.0..1e3f64, de in 0.0..1e2f64) {
            let b = traffic_boundary(th, eps, e);
            prop_assert!(traffic_boundary(th + dth, eps, e) >= b);
            prop_assert!(traffic_boundary(th, (eps + deps).min(1.0), e) >= b);
            prop_assert!(traffic_boundary(th, eps, e + de) >= b);
        }

        #[test]
        fn tracker_matches_brute_force(pairs in prop::collection::vec((0.0..1e3f64, 0.0..1e3f64), 1..40),
                                       cap in 1usize..6) {
            let t = pairs.iter().fold(ErrorTracker::new(cap), |t, (p, a)| update_error(&t, *p, *a));
            let kept = &pairs[pairs.len().saturating_sub(cap)..];
            let oracle = kept.iter().map(|(p, a)| (p - a).abs()).sum::<f64>() / kept.len() as f64;
            prop_assert!((t.mean_error() - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }

        #[test]
        fn normalisation_round_trips(raw in prop::collection::vec(0.0..1e4f64, 1..40), kappa in 1usize..30) {
            let s = preprocess_values(&raw, kappa).unwrap();
            let start = raw.len().saturating_sub(kappa);
            for (got, want) in s.denormalized().iter().zip(&raw[start..]) {
                prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            }
            prop_assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn predictors_are_deterministic(series in prop::collection::vec(0.0..1.0f64, 1..50), h in 1usize..10) {
            for p in [&SeasonalNaive { period: 7 } as &dyn Predictor, &Ewma::default()] {
                let a = p.predict(&series, h).unwrap();
                prop_assert_eq!(a.to_bits(), p.predict(&series, h).unwrap().to_bits());
                prop_assert!(a >= 0.0);
            }
        }
    }
}
