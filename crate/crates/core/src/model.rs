//! Domain types shared by every stage of the control loop.
//!
//! Compute quantities are carried as [`ResourceVector`]s: fractional vCPU plus
//! RAM and storage in whole bytes. Link capacities and throughputs are plain
//! `f64` Mbps, delays are milliseconds and packet loss is a fraction in `[0, 1]`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::PerUnitRequirement;

/// Absolute tolerance applied to fractional vCPU comparisons.
pub const CPU_TOL: f64 = 1e-9;

pub const MB: u64 = 1_000_000;
pub const GB: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Cpu,
    Ram,
    Sto,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Cpu, Resource::Ram, Resource::Sto];

    pub fn index(self) -> usize {
        match self {
            Resource::Cpu => 0,
            Resource::Ram => 1,
            Resource::Sto => 2,
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Ram => "ram",
            Resource::Sto => "sto",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvOp {
    Add,
    SatSub,
    Max,
    Min,
}

/// A `(cpu, ram, sto)` triple. RAM and storage are bytes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu: f64,
    pub ram: u64,
    pub sto: u64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpu: 0.0, ram: 0, sto: 0 };

    /// Negative or non-finite cpu values are clamped to zero.
    pub fn new(cpu: f64, ram: u64, sto: u64) -> Self {
        Self { cpu: sanitize(cpu), ram, sto }
    }

    pub fn from_mb(cpu: f64, ram_mb: f64, sto_mb: f64) -> Self {
        Self::from_array_ceil([cpu, ram_mb * MB as f64, sto_mb * MB as f64])
    }

    /// Builds a vector from real-valued components, rounding byte counts up.
    pub fn from_array_ceil(v: [f64; 3]) -> Self {
        Self {
            cpu: sanitize(v[0]),
            ram: bytes_ceil(v[1]),
            sto: bytes_ceil(v[2]),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.cpu, self.ram as f64, self.sto as f64]
    }

    pub fn get(&self, r: Resource) -> f64 {
        self.to_array()[r.index()]
    }

    pub fn elementwise(op: RvOp, a: ResourceVector, b: ResourceVector) -> ResourceVector {
        match op {
            RvOp::Add => ResourceVector {
                cpu: a.cpu + b.cpu,
                ram: a.ram.saturating_add(b.ram),
                sto: a.sto.saturating_add(b.sto),
            },
            RvOp::SatSub => ResourceVector {
                cpu: (a.cpu - b.cpu).max(0.0),
                ram: a.ram.saturating_sub(b.ram),
                sto: a.sto.saturating_sub(b.sto),
            },
            RvOp::Max => ResourceVector {
                cpu: a.cpu.max(b.cpu),
                ram: a.ram.max(b.ram),
                sto: a.sto.max(b.sto),
            },
            RvOp::Min => ResourceVector {
                cpu: a.cpu.min(b.cpu),
                ram: a.ram.min(b.ram),
                sto: a.sto.min(b.sto),
            },
        }
    }

    pub fn add(self, other: Self) -> Self {
        Self::elementwise(RvOp::Add, self, other)
    }

    pub fn sat_sub(self, other: Self) -> Self {
        Self::elementwise(RvOp::SatSub, self, other)
    }

    pub fn max(self, other: Self) -> Self {
        Self::elementwise(RvOp::Max, self, other)
    }

    pub fn min(self, other: Self) -> Self {
        Self::elementwise(RvOp::Min, self, other)
    }

    pub fn clamp(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }

    /// Multiplies every component by `k`; byte counts are rounded up.
    pub fn scale(self, k: f64) -> Self {
        let a = self.to_array();
        Self::from_array_ceil([a[0] * k, a[1] * k, a[2] * k])
    }

    /// Elementwise `self <= other` (cpu within [`CPU_TOL`], bytes exact).
    pub fn le(&self, other: &Self) -> bool {
        self.cpu <= other.cpu + CPU_TOL && self.ram <= other.ram && self.sto <= other.sto
    }

    pub fn is_zero(&self) -> bool {
        self.cpu.abs() <= CPU_TOL && self.ram == 0 && self.sto == 0
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a ResourceVector>) -> ResourceVector {
        items.into_iter().fold(ResourceVector::ZERO, |acc, v| acc.add(*v))
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.3} cpu, {:.1} MB, {:.1} MB)",
            self.cpu,
            self.ram as f64 / MB as f64,
            self.sto as f64 / MB as f64
        )
    }
}

fn sanitize(x: f64) -> f64 {
    if x.is_finite() && x > 0.0 {
        x
    } else {
        0.0
    }
}

fn bytes_ceil(x: f64) -> u64 {
    if !(x > 0.0) {
        0
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        // Absorb float noise such as 600000000.0000001 before rounding up.
        let r = x.round();
        if (x - r).abs() <= 1e-6 {
            r as u64
        } else {
            x.ceil() as u64
        }
    }
}

/// Per-VNF allocation bounds of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceBounds {
    pub min: ResourceVector,
    pub max: ResourceVector,
}

impl InstanceBounds {
    pub fn clamp(&self, v: ResourceVector) -> ResourceVector {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: &ResourceVector) -> bool {
        self.min.le(v) && v.le(&self.max)
    }
}

/// One VNF instance. The allocation can only be set through bounded
/// constructors, so every instance lies within its slice's `[cap_min, cap_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfInstance {
    pub id: u32,
    alloc: ResourceVector,
    /// Per-resource utilisation in `[0, 1]`, indexed by [`Resource::index`].
    pub util: [f64; 3],
}

impl VnfInstance {
    pub fn new(id: u32, alloc: ResourceVector, bounds: &InstanceBounds) -> Self {
        Self {
            id,
            alloc: bounds.clamp(alloc),
            util: [0.0; 3],
        }
    }

    pub fn alloc(&self) -> ResourceVector {
        self.alloc
    }

    pub fn with_alloc(&self, alloc: ResourceVector, bounds: &InstanceBounds) -> Self {
        Self {
            id: self.id,
            alloc: bounds.clamp(alloc),
            util: self.util,
        }
    }

    pub fn with_util(mut self, util: [f64; 3]) -> Self {
        self.util = util.map(|u| if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiName {
    AvgDelay,
    MaxDelay,
    Jitter,
    PacketLoss,
}

impl KpiName {
    pub const ALL: [KpiName; 4] = [
        KpiName::AvgDelay,
        KpiName::MaxDelay,
        KpiName::Jitter,
        KpiName::PacketLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KpiName::AvgDelay => "avg_delay",
            KpiName::MaxDelay => "max_delay",
            KpiName::Jitter => "jitter",
            KpiName::PacketLoss => "packet_loss",
        }
    }
}

impl fmt::Display for KpiName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Measured or predicted KPIs. Delays are in ms, loss is a fraction.
/// Saturated (overloaded) delays are reported as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiSample {
    pub avg_delay_ms: f64,
    pub max_delay_ms: f64,
    pub jitter_ms: f64,
    pub packet_loss: f64,
}

impl KpiSample {
    pub fn get(&self, kpi: KpiName) -> f64 {
        match kpi {
            KpiName::AvgDelay => self.avg_delay_ms,
            KpiName::MaxDelay => self.max_delay_ms,
            KpiName::Jitter => self.jitter_ms,
            KpiName::PacketLoss => self.packet_loss,
        }
    }
}

/// Per-KPI limits; `None` marks a KPI that is not constrained (N/A).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiThresholds {
    pub avg_delay_ms: Option<f64>,
    pub max_delay_ms: Option<f64>,
    pub jitter_ms: Option<f64>,
    pub packet_loss: Option<f64>,
    /// Scale-factor columns published next to the thresholds. Kept verbatim,
    /// no stage of the loop reads them.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scale_factors: BTreeMap<String, String>,
}

impl KpiThresholds {
    pub fn get(&self, kpi: KpiName) -> Option<f64> {
        match kpi {
            KpiName::AvgDelay => self.avg_delay_ms,
            KpiName::MaxDelay => self.max_delay_ms,
            KpiName::Jitter => self.jitter_ms,
            KpiName::PacketLoss => self.packet_loss,
        }
    }
}

/// Tunables of the closed loop for one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaParams {
    /// Accepted over-provisioning ratio.
    pub beta: f64,
    /// Minimum scaling step ratio.
    pub omega_scale: f64,
    /// Forecast accuracy factor applied in the traffic boundary.
    pub epsilon: f64,
    /// Expected utilisation ratio.
    pub rho: f64,
    /// Inflation ratio used while validating a candidate against KPI limits.
    pub omega_validate: f64,
    pub cap_max: ResourceVector,
    pub cap_min: ResourceVector,
    /// Number of most recent telemetry samples fed to the forecaster.
    pub kappa: usize,
    pub window_s: u64,
    pub monitor_window_s: u64,
    /// Samples below this throughput are ignored when estimating requirements.
    pub min_throughput_mbps: f64,
    pub max_validation_iters: usize,
    /// Lowest virtual-link capacity a slice is ever given.
    pub link_min_mbps: f64,
    pub horizon_windows: usize,
}

impl PsaParams {
    pub fn bounds(&self) -> InstanceBounds {
        InstanceBounds {
            min: self.cap_min,
            max: self.cap_max,
        }
    }

    /// Number of (prediction, actual) pairs retained for the boundary error.
    pub fn error_buffer_len(&self) -> usize {
        (self.monitor_window_s / self.window_s.max(1)).max(1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open_unit("beta", self.beta)?;
        open_unit("omega_scale", self.omega_scale)?;
        open_unit("omega_validate", self.omega_validate)?;
        open_unit("rho", self.rho)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Validation(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !self.cap_min.le(&self.cap_max) {
            return Err(Error::Validation(format!(
                "cap_min {} exceeds cap_max {}",
                self.cap_min, self.cap_max
            )));
        }
        if self.cap_max.cpu <= 0.0 || self.cap_max.ram == 0 || self.cap_max.sto == 0 {
            return Err(Error::Validation("cap_max must be positive in every resource".into()));
        }
        if self.kappa == 0 {
            return Err(Error::Validation("kappa must be at least 1".into()));
        }
        if self.window_s == 0 {
            return Err(Error::Validation("window must be positive".into()));
        }
        if self.monitor_window_s < self.window_s {
            return Err(Error::Validation(format!(
                "monitor window ({} s) shorter than window ({} s)",
                self.monitor_window_s, self.window_s
            )));
        }
        if !(self.min_throughput_mbps > 0.0) {
            return Err(Error::Validation("min_throughput_mbps must be positive".into()));
        }
        if self.max_validation_iters == 0 {
            return Err(Error::Validation("max_validation_iters must be at least 1".into()));
        }
        if !(self.link_min_mbps > 0.0) {
            return Err(Error::Validation("link_min_mbps must be positive".into()));
        }
        if self.horizon_windows == 0 {
            return Err(Error::Validation("forecast horizon must be at least 1 window".into()));
        }
        Ok(())
    }
}

/// Per-VNF view captured with every telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfSnapshot {
    pub alloc: ResourceVector,
    pub util: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Seconds since the start of the run.
    pub timestamp_s: u64,
    /// Offered throughput; NaN marks a missing measurement.
    pub throughput_mbps: f64,
    pub vnfs: Vec<VnfSnapshot>,
    pub link_util: f64,
    pub kpis: KpiSample,
}

/// Configuration of one slice as applied by the orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub vnf_stack: Vec<VnfInstance>,
    pub link_cap_mbps: f64,
}

impl SliceConfig {
    pub fn total_compute(&self) -> ResourceVector {
        ResourceVector::sum(self.vnf_stack.iter().map(|v| &v.alloc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceState {
    pub slice_id: u32,
    pub name: String,
    pub config: SliceConfig,
    /// Link utilisation measured over the last window.
    pub link_util: f64,
    pub kpi_thresholds: KpiThresholds,
    pub params: PsaParams,
    pub history: VecDeque<TelemetrySample>,
    /// Requirement estimated in the previous window, used when no sample of
    /// the current window is usable.
    pub last_req: Option<PerUnitRequirement>,
}

impl SliceState {
    pub fn vnf_stack(&self) -> &[VnfInstance] {
        &self.config.vnf_stack
    }

    pub fn link_cap(&self) -> f64 {
        self.config.link_cap_mbps
    }
}

pub fn total_slice_capacity(slice: &SliceState) -> ResourceVector {
    slice.config.total_compute()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infrastructure {
    pub pms: Vec<ResourceVector>,
    pub total_link_mbps: f64,
}

impl Infrastructure {
    pub fn total_compute(&self) -> ResourceVector {
        ResourceVector::sum(self.pms.iter())
    }

    pub fn validate(&self) -> Result<()> {
        if self.pms.is_empty() {
            return Err(Error::Validation("infrastructure has no physical machine".into()));
        }
        for (i, pm) in self.pms.iter().enumerate() {
            if pm.cpu <= 0.0 || pm.ram == 0 || pm.sto == 0 {
                return Err(Error::Validation(format!("physical machine {i} has a zero capacity")));
            }
        }
        if !(self.total_link_mbps > 0.0) {
            return Err(Error::Validation("total link capacity must be positive".into()));
        }
        Ok(())
    }

    pub fn compute_fits<'a>(&self, configs: impl IntoIterator<Item = &'a SliceConfig>) -> bool {
        let used = configs
            .into_iter()
            .fold(ResourceVector::ZERO, |acc, c| acc.add(c.total_compute()));
        used.le(&self.total_compute())
    }

    pub fn links_fit<'a>(&self, configs: impl IntoIterator<Item = &'a SliceConfig>) -> bool {
        let used: f64 = configs.into_iter().map(|c| c.link_cap_mbps).sum();
        used <= self.total_link_mbps + 1e-9
    }
}

/// Aggregate compute check: all slices' VNF allocations fit the physical machines.
pub fn check_compute_capacity(slices: &[SliceState], infra: &Infrastructure) -> bool {
    infra.compute_fits(slices.iter().map(|s| &s.config))
}

/// Aggregate link check: virtual link capacities fit the physical link.
pub fn check_link_capacity(slices: &[SliceState], infra: &Infrastructure) -> bool {
    infra.links_fit(slices.iter().map(|s| &s.config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ScaleUp,
    ScaleDown,
    ScaleOut,
    ScaleIn,
    ScaleUpLink,
    ScaleDownLink,
    NoAction,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::ScaleUp,
        Action::ScaleDown,
        Action::ScaleOut,
        Action::ScaleIn,
        Action::ScaleUpLink,
        Action::ScaleDownLink,
        Action::NoAction,
    ];

    pub fn is_compute(self) -> bool {
        matches!(
            self,
            Action::ScaleUp | Action::ScaleDown | Action::ScaleOut | Action::ScaleIn | Action::NoAction
        )
    }

    pub fn is_link(self) -> bool {
        matches!(self, Action::ScaleUpLink | Action::ScaleDownLink | Action::NoAction)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::ScaleUp => "scale_up",
            Action::ScaleDown => "scale_down",
            Action::ScaleOut => "scale_out",
            Action::ScaleIn => "scale_in",
            Action::ScaleUpLink => "scale_up_link",
            Action::ScaleDownLink => "scale_down_link",
            Action::NoAction => "no_action",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alarm {
    Abnormal,
    Resources,
}

impl Alarm {
    pub fn as_str(self) -> &'static str {
        match self {
            Alarm::Abnormal => "alarm_abnormal",
            Alarm::Resources => "alarm_resources",
        }
    }
}

/// One compute action and one link action, plus any alarms raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub compute: Action,
    pub link: Action,
    pub alarms: Vec<Alarm>,
}

impl ActionSet {
    pub fn idle() -> Self {
        Self {
            compute: Action::NoAction,
            link: Action::NoAction,
            alarms: Vec::new(),
        }
    }

    pub fn has_alarm(&self, alarm: Alarm) -> bool {
        self.alarms.contains(&alarm)
    }
}
