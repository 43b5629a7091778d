//! One pass of the proactive closed loop for a single slice, followed by the
//! cross-slice admission step that serialises access to the shared
//! infrastructure.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{per_unit_requirement, target_allocation, PerUnitRequirement, SliceTarget};
use crate::forecast::{forecast, traffic_boundary, ErrorTracker, Predictor};
use crate::kpi::{check_kpi_violation, validate_configuration, KpiModel};
use crate::model::{
    Action, ActionSet, Alarm, Infrastructure, KpiName, KpiSample, SliceConfig, SliceState,
    TelemetrySample, VnfInstance,
};
use crate::scaling::{plan_compute_scaling, plan_link_scaling};

/// Collaborators a slice loop needs besides its own state.
#[derive(Clone, Copy)]
pub struct LoopDeps<'a> {
    pub predictor: &'a dyn Predictor,
    pub error_tracker: &'a ErrorTracker,
    pub kpi_model: &'a dyn KpiModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub slice_id: u32,
    pub window_index: usize,
    pub action_set: ActionSet,
    /// Configuration to apply for the next window; `None` keeps the current one.
    pub pending: Option<SliceConfig>,
    /// Load-balancer weights of the pending stack, filled in on admission.
    pub weights: Vec<f64>,
    pub target_used: SliceTarget,
    pub boundary: f64,
    pub forecast: f64,
    pub requirement: PerUnitRequirement,
    pub measured_kpis: KpiSample,
    pub violations: BTreeSet<KpiName>,
    /// Whether the target was inflated because every VNF ran above rho.
    pub overload_inflated: bool,
    pub validation_inflations: usize,
}

impl WindowOutcome {
    pub fn has_alarm(&self, alarm: Alarm) -> bool {
        self.action_set.has_alarm(alarm)
    }

    fn reject(&mut self) {
        self.pending = None;
        self.weights.clear();
        if !self.action_set.alarms.contains(&Alarm::Resources) {
            self.action_set.alarms.push(Alarm::Resources);
        }
    }
}

/// Window-level KPIs: mean delay and jitter, worst-case delay, and loss
/// weighted by offered traffic.
pub fn aggregate_kpis(samples: &[&TelemetrySample]) -> KpiSample {
    if samples.is_empty() {
        return KpiSample::default();
    }
    let n = samples.len() as f64;
    let offered: f64 = samples.iter().map(|s| s.throughput_mbps.max(0.0)).sum();
    let packet_loss = if offered > 0.0 {
        samples
            .iter()
            .map(|s| s.kpis.packet_loss * s.throughput_mbps.max(0.0))
            .sum::<f64>()
            / offered
    } else {
        samples.iter().map(|s| s.kpis.packet_loss).sum::<f64>() / n
    };
    KpiSample {
        avg_delay_ms: samples.iter().map(|s| s.kpis.avg_delay_ms).sum::<f64>() / n,
        max_delay_ms: samples.iter().map(|s| s.kpis.max_delay_ms).fold(0.0, f64::max),
        jitter_ms: samples.iter().map(|s| s.kpis.jitter_ms).sum::<f64>() / n,
        packet_loss,
    }
}

/// Samples belonging to the window that ends with the latest sample.
fn current_window(history: &[TelemetrySample], window_s: u64) -> Vec<&TelemetrySample> {
    let Some(last) = history.last() else {
        return Vec::new();
    };
    let start = last.timestamp_s.saturating_sub(window_s);
    history
        .iter()
        .filter(|s| s.timestamp_s > start || (start == 0 && s.timestamp_s == 0))
        .collect()
}

fn sampling_step(history: &[TelemetrySample], window_s: u64) -> u64 {
    match history {
        [.., a, b] if b.timestamp_s > a.timestamp_s => b.timestamp_s - a.timestamp_s,
        _ => window_s,
    }
}

/// Runs the closed loop once for `state` at the end of window `window_index`.
pub fn run_window(state: &SliceState, deps: LoopDeps<'_>, window_index: usize) -> Result<WindowOutcome> {
    let params = &state.params;
    let history: Vec<TelemetrySample> = state.history.iter().cloned().collect();
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }

    let step_s = sampling_step(&history, params.window_s).max(1);
    let steps_ahead = params.horizon_windows * (params.window_s / step_s).max(1) as usize;
    let th_hat = forecast(deps.predictor, &history, params.kappa, steps_ahead)?.predicted_throughput;
    let e_monitor = deps.error_tracker.mean_error();
    let boundary = traffic_boundary(th_hat, params.epsilon, e_monitor);

    let window = current_window(&history, params.window_s);
    let window_owned: Vec<TelemetrySample> = window.iter().map(|s| (*s).clone()).collect();
    let requirement = match per_unit_requirement(&window_owned, params.min_throughput_mbps, state.last_req) {
        Ok(req) => req,
        Err(Error::NoUsableSamples) => PerUnitRequirement::default(),
        Err(e) => return Err(e),
    };
    let mut target = target_allocation(th_hat, &requirement, boundary);

    let measured_kpis = aggregate_kpis(&window);
    let violations = check_kpi_violation(&measured_kpis, &state.kpi_thresholds);

    let mut outcome = WindowOutcome {
        slice_id: state.slice_id,
        window_index,
        action_set: ActionSet::idle(),
        pending: None,
        weights: Vec::new(),
        target_used: target,
        boundary,
        forecast: th_hat,
        requirement,
        measured_kpis,
        violations,
        overload_inflated: false,
        validation_inflations: 0,
    };

    let utils: Vec<f64> = state.vnf_stack().iter().flat_map(|v| v.util).collect();
    let all_within = utils.iter().all(|&u| u <= params.rho);
    let all_over = !utils.is_empty() && utils.iter().all(|&u| u > params.rho);

    if !outcome.violations.is_empty() && all_within {
        if state.link_util <= params.rho {
            // KPIs degrade although nothing is loaded: not a capacity problem.
            outcome.action_set.alarms.push(Alarm::Abnormal);
            return Ok(outcome);
        }
    } else if all_over {
        target = target.scale(1.0 + params.beta);
        outcome.overload_inflated = true;
    }

    // Validate against the forecast plus its recent error.
    let offered = th_hat + e_monitor;
    let validated = match validate_configuration(
        target,
        &state.kpi_thresholds,
        deps.kpi_model,
        offered,
        requirement,
        params.omega_validate,
        params.max_validation_iters,
    ) {
        Ok(v) => v,
        Err(Error::ValidationDiverged { last, iterations }) => {
            outcome.target_used = last;
            outcome.validation_inflations = iterations;
            outcome.action_set.alarms.push(Alarm::Resources);
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    outcome.target_used = validated.target;
    outcome.validation_inflations = validated.inflations;

    let compute = match plan_compute_scaling(state.vnf_stack(), &validated.target.compute, params) {
        Ok(plan) => plan,
        Err(Error::InfeasibleTarget { .. }) => {
            outcome.action_set.alarms.push(Alarm::Resources);
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };

    // The link is kept at the expected utilisation for the forecast, or at
    // the validated target when that is larger.
    let link_boundary = validated
        .target
        .link_mbps
        .max(th_hat / params.rho)
        .max(params.link_min_mbps);
    let link_cap = state.link_cap();
    let expected_link_util = if link_cap > 0.0 { th_hat / link_cap } else { f64::INFINITY };
    let link = plan_link_scaling(
        link_cap,
        state.link_util.max(expected_link_util),
        link_boundary,
        params,
    );

    outcome.action_set.compute = compute.action;
    outcome.action_set.link = link.action;
    if compute.action != Action::NoAction || link.action != Action::NoAction {
        outcome.pending = Some(SliceConfig {
            vnf_stack: compute.new_stack,
            link_cap_mbps: link.new_link_cap,
        });
    }
    Ok(outcome)
}

/// Round-robin weights from each instance's most constrained share of the
/// slice total.
pub fn compute_lb_weights(stack: &[VnfInstance]) -> Result<Vec<f64>> {
    if stack.is_empty() {
        return Err(Error::EmptyStack);
    }
    let totals: [f64; 3] = stack.iter().fold([0.0; 3], |mut acc, v| {
        let a = v.alloc().to_array();
        for r in 0..3 {
            acc[r] += a[r];
        }
        acc
    });
    let shares: Vec<f64> = stack
        .iter()
        .map(|v| {
            let a = v.alloc().to_array();
            (0..3)
                .filter(|&r| totals[r] > 0.0)
                .map(|r| a[r] / totals[r])
                .fold(f64::INFINITY, f64::min)
        })
        .map(|s| if s.is_finite() { s } else { 1.0 })
        .collect();
    let sum: f64 = shares.iter().sum();
    if sum <= 0.0 {
        return Ok(vec![1.0 / stack.len() as f64; stack.len()]);
    }
    Ok(shares.iter().map(|s| s / sum).collect())
}

/// Admits pending configurations one slice at a time in ascending slice id.
/// A pending configuration is accepted only if the global configuration,
/// with every previously accepted change applied, still fits the
/// infrastructure. Rejected outcomes get `alarm_resources` and keep their
/// current configuration. Returns the acceptance flag of each outcome, in
/// input order.
pub fn admit(
    outcomes: &mut [WindowOutcome],
    current: &BTreeMap<u32, SliceConfig>,
    infra: &Infrastructure,
) -> Vec<bool> {
    let mut applied = current.clone();
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by_key(|&i| outcomes[i].slice_id);
    let mut accepted = vec![true; outcomes.len()];

    for i in order {
        let outcome = &mut outcomes[i];
        let Some(pending) = outcome.pending.clone() else {
            continue;
        };
        let mut trial = applied.clone();
        trial.insert(outcome.slice_id, pending.clone());
        let fits = infra.compute_fits(trial.values()) && infra.links_fit(trial.values());
        match (fits, compute_lb_weights(&pending.vnf_stack)) {
            (true, Ok(weights)) => {
                outcome.weights = weights;
                applied = trial;
            }
            _ => {
                outcome.reject();
                accepted[i] = false;
            }
        }
    }
    accepted
}
