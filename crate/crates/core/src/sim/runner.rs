//! Episode driver: steps every slice through each window, runs the closed
//! loops in parallel and admits their outcomes serially.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::closed_loop::{admit, aggregate_kpis, compute_lb_weights, run_window, LoopDeps, WindowOutcome};
use crate::error::Result;
use crate::estimation::SliceTarget;
use crate::forecast::{update_error, ErrorTracker, Predictor, PredictorRegistry};
use crate::kpi::{check_kpi_violation, SurrogateKpiModel};
use crate::model::{Action, KpiName, ResourceVector, SliceConfig, SliceState, TelemetrySample};
use crate::scenario::{to_mb, Scenario, SliceSpec};
use crate::sim::env::step_environment;
use crate::sim::metrics::{static_peak_config, MetricsReport, SliceReport, WindowRow};
use crate::sim::traffic::generate_traffic;

const TRAFFIC_STREAM: u64 = 1;

/// Seed of the traffic substream of slice `slice_id`.
pub fn traffic_seed(seed: u64, slice_id: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAFFIC_STREAM << 32 | slice_id as u64);
    rng.next_u64()
}

/// How slice configurations evolve over the run.
#[derive(Debug, Clone)]
pub enum Mode {
    ClosedLoop,
    /// Fixed configuration per slice id.
    Static(BTreeMap<u32, SliceConfig>),
}

struct SliceRun<'a> {
    spec: &'a SliceSpec,
    state: SliceState,
    tracker: ErrorTracker,
    weights: Vec<f64>,
    traffic: Vec<f64>,
    predictor: Box<dyn Predictor>,
    last_forecast: Option<f64>,
    history_cap: usize,
    report: SliceReport,
}

impl<'a> SliceRun<'a> {
    fn new(scenario: &Scenario, spec: &'a SliceSpec, config: SliceConfig, registry: &PredictorRegistry) -> Result<Self> {
        let traffic = generate_traffic(
            &spec.traffic,
            scenario.duration_s,
            scenario.step_s(),
            traffic_seed(scenario.seed(), spec.id),
        )?;
        let steps_per_window = (scenario.window_s() / scenario.step_s()) as usize;
        let weights = compute_lb_weights(&config.vnf_stack)?;
        Ok(Self {
            spec,
            state: SliceState {
                slice_id: spec.id,
                name: spec.name.clone(),
                config,
                link_util: 0.0,
                kpi_thresholds: spec.thresholds.clone(),
                params: spec.params.clone(),
                history: VecDeque::new(),
                last_req: None,
            },
            tracker: ErrorTracker::new(spec.params.error_buffer_len()),
            weights,
            traffic,
            predictor: registry.create(&scenario.doc.forecaster)?,
            last_forecast: None,
            history_cap: spec.params.kappa.max(steps_per_window) + 1,
            report: SliceReport {
                slice_id: spec.id,
                name: spec.name.clone(),
                slice_type: spec.slice_type,
                rows: Vec::new(),
                violations: KpiName::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect(),
                violation_windows: 0,
                actions: Action::ALL
                    .iter()
                    .filter(|a| **a != Action::NoAction)
                    .map(|a| (a.as_str().to_string(), 0))
                    .collect(),
                alarms: BTreeMap::new(),
                rejected: 0,
                peak_target: SliceTarget {
                    compute: ResourceVector::ZERO,
                    link_mbps: 0.0,
                },
                allocations: Vec::new(),
            },
        })
    }

    /// Steps the environment through window `w` and, in closed-loop mode,
    /// runs the slice loop at its end.
    fn window(&mut self, w: usize, steps: usize, step_s: u64, closed_loop: bool) -> Result<Option<WindowOutcome>> {
        let n = self.state.config.vnf_stack.len();
        let mut util_sum = vec![[0.0f64; 3]; n];
        let mut link_sum = 0.0;
        let mut offered_sum = 0.0;
        let mut offered_peak: f64 = 0.0;
        let mut dropped = 0.0;
        let mut window_samples: Vec<TelemetrySample> = Vec::with_capacity(steps);

        for s in 0..steps {
            let idx = w * steps + s;
            let t = idx as u64 * step_s;
            let offered = self.traffic[idx];
            let req = self.spec.requirement.at(t);
            let r = step_environment(
                &self.state.config,
                &self.weights,
                offered,
                &req,
                &self.spec.environment_model,
                t,
            );
            for (acc, v) in util_sum.iter_mut().zip(&r.sample.vnfs) {
                for (a, u) in acc.iter_mut().zip(v.util) {
                    *a += u;
                }
            }
            link_sum += r.sample.link_util;
            offered_sum += offered;
            offered_peak = offered_peak.max(offered);
            dropped += r.dropped_mbps;
            window_samples.push(r.sample.clone());
            self.state.history.push_back(r.sample);
            while self.state.history.len() > self.history_cap {
                self.state.history.pop_front();
            }
        }

        let k = steps as f64;
        for (vnf, acc) in self.state.config.vnf_stack.iter_mut().zip(&util_sum) {
            vnf.util = acc.map(|u| u / k);
        }
        self.state.link_util = link_sum / k;
        if let Some(p) = self.last_forecast {
            self.tracker = update_error(&self.tracker, p, offered_peak);
        }

        let refs: Vec<&TelemetrySample> = window_samples.iter().collect();
        let measured = aggregate_kpis(&refs);
        let violations = check_kpi_violation(&measured, &self.spec.thresholds);
        for v in &violations {
            *self.report.violations.entry(v.as_str().to_string()).or_default() += 1;
        }
        if !violations.is_empty() {
            self.report.violation_windows += 1;
        }

        let alloc = self.state.config.total_compute();
        self.report.allocations.push(alloc);
        let max_util = |r: usize| self.state.config.vnf_stack.iter().map(|v| v.util[r]).fold(0.0, f64::max);
        self.report.rows.push(WindowRow {
            window: w,
            start_s: (w * steps) as u64 * step_s,
            offered_mean_mbps: offered_sum / k,
            offered_peak_mbps: offered_peak,
            forecast_mbps: 0.0,
            boundary_mbps: 0.0,
            target_cpu: 0.0,
            target_ram_mb: 0.0,
            target_sto_mb: 0.0,
            target_link_mbps: 0.0,
            alloc_cpu: alloc.cpu,
            alloc_ram_mb: to_mb(alloc.ram),
            alloc_sto_mb: to_mb(alloc.sto),
            instances: n,
            link_cap_mbps: self.state.config.link_cap_mbps,
            cpu_util: max_util(0),
            ram_util: max_util(1),
            sto_util: max_util(2),
            link_util: self.state.link_util,
            avg_delay_ms: measured.avg_delay_ms,
            max_delay_ms: measured.max_delay_ms,
            jitter_ms: measured.jitter_ms,
            packet_loss: measured.packet_loss,
            violations: join(violations.iter().map(|v| v.as_str())),
            compute_action: Action::NoAction.as_str().into(),
            link_action: Action::NoAction.as_str().into(),
            alarms: String::new(),
            applied: false,
            dropped_mbps: dropped / k,
        });

        if !closed_loop {
            return Ok(None);
        }
        let deps = LoopDeps {
            predictor: self.predictor.as_ref(),
            error_tracker: &self.tracker,
            kpi_model: &self.spec.model as &SurrogateKpiModel,
        };
        let outcome = run_window(&self.state, deps, w)?;
        self.last_forecast = Some(outcome.forecast);
        self.state.last_req = Some(outcome.requirement);
        Ok(Some(outcome))
    }

    fn record(&mut self, outcome: &WindowOutcome, accepted: bool) {
        let row = self.report.rows.last_mut().expect("row recorded before decision");
        let t = outcome.target_used;
        row.forecast_mbps = outcome.forecast;
        row.boundary_mbps = outcome.boundary;
        row.target_cpu = t.compute.cpu;
        row.target_ram_mb = to_mb(t.compute.ram);
        row.target_sto_mb = to_mb(t.compute.sto);
        row.target_link_mbps = t.link_mbps;
        row.compute_action = outcome.action_set.compute.as_str().into();
        row.link_action = outcome.action_set.link.as_str().into();
        row.alarms = join(outcome.action_set.alarms.iter().map(|a| a.as_str()));
        row.applied = accepted && outcome.pending.is_some();

        for a in &outcome.action_set.alarms {
            *self.report.alarms.entry(a.as_str().to_string()).or_default() += 1;
        }
        if !accepted {
            self.report.rejected += 1;
        }
        if outcome.action_set.alarms.is_empty() {
            let peak = &mut self.report.peak_target;
            peak.compute = peak.compute.max(t.compute);
            peak.link_mbps = peak.link_mbps.max(t.link_mbps);
        }
        if let (true, Some(cfg)) = (accepted, &outcome.pending) {
            for a in [outcome.action_set.compute, outcome.action_set.link] {
                if a != Action::NoAction {
                    *self.report.actions.entry(a.as_str().to_string()).or_default() += 1;
                }
            }
            self.state.config = cfg.clone();
            self.weights = outcome.weights.clone();
        }
    }
}

fn join<'s>(items: impl Iterator<Item = &'s str>) -> String {
    items.collect::<Vec<_>>().join("|")
}

/// Runs the closed loop over the whole scenario.
pub fn run_simulation(scenario: &Scenario) -> Result<MetricsReport> {
    run_with_mode(scenario, &Mode::ClosedLoop)
}

pub fn run_with_mode(scenario: &Scenario, mode: &Mode) -> Result<MetricsReport> {
    let registry = PredictorRegistry::default();
    let mut runs = scenario
        .slices
        .iter()
        .map(|spec| {
            let config = match mode {
                Mode::ClosedLoop => spec.initial.clone(),
                Mode::Static(configs) => configs.get(&spec.id).cloned().unwrap_or_else(|| spec.initial.clone()),
            };
            SliceRun::new(scenario, spec, config, &registry)
        })
        .collect::<Result<Vec<_>>>()?;

    let steps = (scenario.window_s() / scenario.step_s()) as usize;
    let step_s = scenario.step_s();
    let closed_loop = matches!(mode, Mode::ClosedLoop);
    let mut capacity_ok = Vec::with_capacity(scenario.windows());

    for w in 0..scenario.windows() {
        let outcomes = runs
            .par_iter_mut()
            .map(|r| r.window(w, steps, step_s, closed_loop))
            .collect::<Result<Vec<_>>>()?;

        if closed_loop {
            let mut outcomes: Vec<WindowOutcome> = outcomes.into_iter().flatten().collect();
            let current: BTreeMap<u32, SliceConfig> =
                runs.iter().map(|r| (r.spec.id, r.state.config.clone())).collect();
            let accepted = admit(&mut outcomes, &current, &scenario.infrastructure);
            for ((run, outcome), ok) in runs.iter_mut().zip(&outcomes).zip(accepted) {
                run.record(outcome, ok);
            }
        }

        let configs: Vec<&SliceConfig> = runs.iter().map(|r| &r.state.config).collect();
        capacity_ok.push(
            scenario.infrastructure.compute_fits(configs.iter().copied())
                && scenario.infrastructure.links_fit(configs.iter().copied()),
        );
    }

    Ok(MetricsReport {
        label: scenario.label().to_string(),
        seed: scenario.seed(),
        hours: scenario.hours(),
        window_s: scenario.window_s(),
        step_s,
        windows: scenario.windows(),
        forecaster: scenario.doc.forecaster.clone(),
        beta: scenario.doc.params.beta,
        slices: runs.into_iter().map(|r| r.report).collect(),
        capacity_ok,
    })
}

/// Static configurations sized at each slice's peak validated target.
pub fn baseline_configs(scenario: &Scenario, report: &MetricsReport) -> BTreeMap<u32, SliceConfig> {
    scenario
        .slices
        .iter()
        .zip(&report.slices)
        .map(|(spec, s)| (spec.id, static_peak_config(&s.peak_target, &spec.params)))
        .collect()
}

/// Savings of each slice against its static peak configuration.
pub fn savings_per_slice(scenario: &Scenario, report: &MetricsReport) -> Vec<f64> {
    let baseline = baseline_configs(scenario, report);
    report
        .slices
        .iter()
        .map(|s| {
            let base = baseline[&s.slice_id].total_compute();
            crate::sim::metrics::resource_savings(&s.allocations, &base)
        })
        .collect()
}

/// Slices whose KPI thresholds were exceeded in at least one window.
pub fn violating_slices(report: &MetricsReport) -> BTreeSet<u32> {
    report
        .slices
        .iter()
        .filter(|s| s.violation_windows > 0)
        .map(|s| s.slice_id)
        .collect()
}
