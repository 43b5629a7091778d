//! Per-window records, per-slice totals, savings against a static peak
//! configuration and the action table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::estimation::{required_instance_count, SliceTarget};
use crate::model::{Action, InstanceBounds, PsaParams, ResourceVector, SliceConfig, VnfInstance};
use crate::sim::traffic::SliceType;

/// Window slots per simulated hour in the action-ratio denominator. A
/// 24 h run has 720 slots, so 238 actions print as 33 %.
pub const ACTION_SLOTS_PER_HOUR: f64 = 30.0;

/// One row per slice per window. Measurements describe the window itself;
/// the action columns hold the decision taken at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window: usize,
    pub start_s: u64,
    pub offered_mean_mbps: f64,
    pub offered_peak_mbps: f64,
    pub forecast_mbps: f64,
    pub boundary_mbps: f64,
    pub target_cpu: f64,
    pub target_ram_mb: f64,
    pub target_sto_mb: f64,
    pub target_link_mbps: f64,
    pub alloc_cpu: f64,
    pub alloc_ram_mb: f64,
    pub alloc_sto_mb: f64,
    pub instances: usize,
    pub link_cap_mbps: f64,
    pub cpu_util: f64,
    pub ram_util: f64,
    pub sto_util: f64,
    pub link_util: f64,
    pub avg_delay_ms: f64,
    pub max_delay_ms: f64,
    pub jitter_ms: f64,
    pub packet_loss: f64,
    pub violations: String,
    pub compute_action: String,
    pub link_action: String,
    pub alarms: String,
    pub applied: bool,
    pub dropped_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice_id: u32,
    pub name: String,
    pub slice_type: SliceType,
    pub rows: Vec<WindowRow>,
    /// Windows in which each KPI exceeded its threshold.
    pub violations: BTreeMap<String, usize>,
    pub violation_windows: usize,
    /// Applied actions by name, `no_action` excluded.
    pub actions: BTreeMap<String, usize>,
    pub alarms: BTreeMap<String, usize>,
    pub rejected: usize,
    /// Elementwise peak of the validated targets over the run.
    pub peak_target: SliceTarget,
    pub allocations: Vec<ResourceVector>,
}

impl SliceReport {
    pub fn total_violations(&self) -> usize {
        self.violations.values().sum()
    }

    pub fn action_count(&self, action: Action) -> usize {
        self.actions.get(action.as_str()).copied().unwrap_or(0)
    }

    pub fn compute_actions(&self) -> usize {
        Action::ALL
            .into_iter()
            .filter(|a| a.is_compute() && *a != Action::NoAction)
            .map(|a| self.action_count(a))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub seed: u64,
    pub hours: f64,
    pub window_s: u64,
    pub step_s: u64,
    pub windows: usize,
    pub forecaster: String,
    pub beta: f64,
    pub slices: Vec<SliceReport>,
    /// Whether the applied global configuration fit the infrastructure,
    /// one entry per window.
    pub capacity_ok: Vec<bool>,
}

/// Static configuration sized for `target`: as many equal instances as the
/// target needs, each clamped to the instance bounds.
pub fn static_peak_config(target: &SliceTarget, params: &PsaParams) -> SliceConfig {
    let bounds: InstanceBounds = params.bounds();
    let gamma = required_instance_count(&target.compute, &params.cap_max);
    let share = ResourceVector::from_array_ceil(target.compute.to_array().map(|v| v / gamma as f64));
    SliceConfig {
        vnf_stack: (0..gamma as u32)
            .map(|id| VnfInstance::new(id, share, &bounds))
            .collect(),
        link_cap_mbps: target.link_mbps.max(params.link_min_mbps),
    }
}

/// Mean over windows of `1 - mean_r(dynamic_r / baseline_r)`, over the
/// resources the baseline provisions.
pub fn resource_savings(allocations: &[ResourceVector], baseline: &ResourceVector) -> f64 {
    let base = baseline.to_array();
    let used: Vec<usize> = (0..3).filter(|&r| base[r] > 0.0).collect();
    if allocations.is_empty() || used.is_empty() {
        return 0.0;
    }
    let mean_ratio = allocations
        .iter()
        .map(|a| {
            let a = a.to_array();
            used.iter().map(|&r| a[r] / base[r]).sum::<f64>() / used.len() as f64
        })
        .sum::<f64>()
        / allocations.len() as f64;
    1.0 - mean_ratio
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub slice: String,
    pub violations: usize,
    pub scale_down: usize,
    pub scale_up: usize,
    pub scale_out: usize,
    pub scale_in: usize,
    pub total: usize,
    /// Actions per window slot, as a fraction.
    pub ratio: f64,
    /// `ratio` spread over the simulated hours, as a fraction.
    pub hourly: f64,
}

impl ActionRow {
    pub fn new(slice: &str, violations: usize, counts: [usize; 4], hours: f64) -> Self {
        let [scale_down, scale_up, scale_out, scale_in] = counts;
        let total = counts.iter().sum();
        let ratio = if hours > 0.0 {
            total as f64 / (hours * ACTION_SLOTS_PER_HOUR)
        } else {
            0.0
        };
        let hourly = if hours > 0.0 { ratio / hours } else { 0.0 };
        Self {
            slice: slice.to_string(),
            violations,
            scale_down,
            scale_up,
            scale_out,
            scale_in,
            total,
            ratio,
            hourly,
        }
    }

    pub fn ratio_pct(&self) -> String {
        format!("{:.0}%", self.ratio * 100.0)
    }

    pub fn hourly_pct(&self) -> String {
        format!("{:.2}%", self.hourly * 100.0)
    }
}

pub fn action_stats(report: &MetricsReport) -> Vec<ActionRow> {
    report
        .slices
        .iter()
        .map(|s| {
            ActionRow::new(
                &s.name,
                s.total_violations(),
                [
                    s.action_count(Action::ScaleDown),
                    s.action_count(Action::ScaleUp),
                    s.action_count(Action::ScaleOut),
                    s.action_count(Action::ScaleIn),
                ],
                report.hours,
            )
        })
        .collect()
}

/// Plain-text table with the action-statistics columns plus savings.
pub fn format_action_table(rows: &[ActionRow], savings: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>10} {:>6} {:>10} {:>8} {:>9} {:>8} {:>7} {:>7} {:>8}",
        "slice", "violations", "total", "scale_down", "scale_up", "scale_out", "scale_in", "ratio", "hourly", "savings"
    );
    for (i, r) in rows.iter().enumerate() {
        let sv = savings.get(i).map_or("-".to_string(), |s| format!("{:.2}%", s * 100.0));
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>6} {:>10} {:>8} {:>9} {:>8} {:>7} {:>7} {:>8}",
            r.slice,
            r.violations,
            r.total,
            r.scale_down,
            r.scale_up,
            r.scale_out,
            r.scale_in,
            r.ratio_pct(),
            r.hourly_pct(),
            sv
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GB;

    #[test]
    fn ratio_convention() {
        let r = ActionRow::new("eMBB", 0, [15, 216, 4, 3], 24.0);
        assert_eq!(r.total, 238);
        assert_eq!(r.ratio_pct(), "33%");
        assert_eq!(r.hourly_pct(), "1.38%");
    }

    #[test]
    fn no_actions() {
        let r = ActionRow::new("x", 0, [0; 4], 24.0);
        assert_eq!((r.total, r.ratio, r.hourly), (0, 0.0, 0.0));
    }

    #[test]
    fn savings_identical_is_zero() {
        let b = ResourceVector::new(2.0, GB, GB);
        assert_eq!(resource_savings(&[b, b, b], &b), 0.0);
    }

    #[test]
    fn savings_half() {
        let b = ResourceVector::new(2.0, 2 * GB, 2 * GB);
        let h = ResourceVector::new(1.0, GB, GB);
        assert!((resource_savings(&[h, h], &b) - 0.5).abs() < 1e-12);
        assert!((resource_savings(&[h, b], &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn static_config_covers_target() {
        let p = crate::scenario::setting_params(1);
        let t = SliceTarget {
            compute: ResourceVector::new(7.3, 2 * GB, 2 * GB),
            link_mbps: 120.0,
        };
        let c = static_peak_config(&t, &p);
        assert_eq!(c.vnf_stack.len(), 3);
        assert!(t.compute.le(&c.total_compute()));
        assert_eq!(c.link_cap_mbps, 120.0);
    }
}
