//! Scenario documents (TOML, units in field names), the compiled-in presets
//! and their validated runtime form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi::SurrogateKpiModel;
use crate::model::{
    Infrastructure, InstanceBounds, KpiThresholds, PsaParams, ResourceVector, SliceConfig, VnfInstance, MB,
};
use crate::sim::env::RequirementProfile;
use crate::sim::traffic::{Direction, SliceType, TrafficProfile};

pub const PRESETS: [&str; 3] = ["setting1", "setting2", "setting3"];

/// Over-provisioning ratio of each preset setting.
pub fn setting_beta(setting: u8) -> Option<f64> {
    match setting {
        1 => Some(0.15),
        2 => Some(0.1),
        3 => Some(0.05),
        _ => None,
    }
}

/// Loop parameters of preset `setting` (1, 2 or 3). Other values fall back
/// to setting 1.
pub fn setting_params(setting: u8) -> PsaParams {
    ParamsDoc::setting(setting).to_params()
}

/// Compute quantity with memory and storage in MB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeDoc {
    pub cpu: f64,
    pub ram_mb: f64,
    pub sto_mb: f64,
}

impl ComputeDoc {
    pub fn new(cpu: f64, ram_mb: f64, sto_mb: f64) -> Self {
        Self { cpu, ram_mb, sto_mb }
    }

    pub fn to_vector(self) -> ResourceVector {
        ResourceVector::from_mb(self.cpu, self.ram_mb, self.sto_mb)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if [self.cpu, self.ram_mb, self.sto_mb]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Validation(format!("{what}: components must be finite and >= 0")))
        }
    }
}

fn default_min_throughput() -> f64 {
    0.1
}
fn default_max_validation_iters() -> usize {
    200
}
fn default_link_min() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub beta: f64,
    pub omega_scale: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub omega_validate: f64,
    pub kappa: usize,
    pub window_s: u64,
    pub monitor_window_s: u64,
    #[serde(default = "default_min_throughput")]
    pub min_throughput_mbps: f64,
    #[serde(default = "default_max_validation_iters")]
    pub max_validation_iters: usize,
    #[serde(default = "default_link_min")]
    pub link_min_mbps: f64,
    #[serde(default = "default_horizon")]
    pub horizon_windows: usize,
    pub cap_max: ComputeDoc,
    pub cap_min: ComputeDoc,
}

impl ParamsDoc {
    pub fn setting(setting: u8) -> Self {
        Self {
            beta: setting_beta(setting).unwrap_or(0.15),
            omega_scale: 0.05,
            epsilon: 0.814,
            rho: 0.8,
            omega_validate: 0.02,
            kappa: 15,
            window_s: 300,
            monitor_window_s: 600,
            min_throughput_mbps: default_min_throughput(),
            max_validation_iters: default_max_validation_iters(),
            link_min_mbps: default_link_min(),
            horizon_windows: default_horizon(),
            cap_max: ComputeDoc::new(3.0, 1000.0, 1200.0),
            cap_min: ComputeDoc::new(0.1, 15.0, 20.0),
        }
    }

    pub fn to_params(&self) -> PsaParams {
        PsaParams {
            beta: self.beta,
            omega_scale: self.omega_scale,
            epsilon: self.epsilon,
            rho: self.rho,
            omega_validate: self.omega_validate,
            cap_max: self.cap_max.to_vector(),
            cap_min: self.cap_min.to_vector(),
            kappa: self.kappa,
            window_s: self.window_s,
            monitor_window_s: self.monitor_window_s,
            min_throughput_mbps: self.min_throughput_mbps,
            max_validation_iters: self.max_validation_iters,
            link_min_mbps: self.link_min_mbps,
            horizon_windows: self.horizon_windows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfrastructureDoc {
    pub link_mbps: f64,
    pub pms: Vec<ComputeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceDoc {
    pub id: u32,
    pub name: String,
    pub slice_type: SliceType,
    pub link_mbps: f64,
    pub vnfs: Vec<ComputeDoc>,
    pub thresholds: KpiThresholds,
    pub requirement: RequirementProfile,
    pub traffic: TrafficProfile,
    /// KPI model used by the validator.
    #[serde(default)]
    pub model: SurrogateKpiModel,
    /// KPI model of the simulated environment; defaults to `model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_model: Option<SurrogateKpiModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub label: String,
    pub hours: f64,
    #[serde(default = "default_step")]
    pub step_s: u64,
    pub seed: u64,
    #[serde(default = "default_forecaster")]
    pub forecaster: String,
    pub params: ParamsDoc,
    pub infrastructure: InfrastructureDoc,
    pub slices: Vec<SliceDoc>,
}

fn default_step() -> u64 {
    60
}
fn default_forecaster() -> String {
    "seasonal_naive".into()
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

impl ScenarioDoc {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("{origin}:{line}:{col}")
                }
                None => origin.to_string(),
            };
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            location: self.label.clone(),
            message: e.to_string(),
        })
    }

    pub fn preset(name: &str) -> Option<Self> {
        let setting = match name {
            "setting1" => 1,
            "setting2" => 2,
            "setting3" => 3,
            _ => return None,
        };
        Some(Self {
            label: name.to_string(),
            hours: 24.0,
            step_s: default_step(),
            seed: 42,
            forecaster: default_forecaster(),
            params: ParamsDoc::setting(setting),
            infrastructure: InfrastructureDoc {
                link_mbps: 500.0,
                pms: vec![
                    ComputeDoc::new(13.0, 4000.0, 5000.0),
                    ComputeDoc::new(13.0, 4500.0, 5000.0),
                    ComputeDoc::new(13.0, 4500.0, 5000.0),
                ],
            },
            slices: default_slices(),
        })
    }

    /// Replaces the over-provisioning ratio with that of a preset setting.
    pub fn apply_setting(&mut self, setting: u8) -> Result<()> {
        self.params.beta = setting_beta(setting)
            .ok_or_else(|| Error::Validation(format!("unknown setting {setting}, expected 1, 2 or 3")))?;
        Ok(())
    }
}

fn thresholds(avg_max_ms: f64, jitter_ms: Option<f64>, loss_pct: f64, sf: &[(&str, &str)]) -> KpiThresholds {
    KpiThresholds {
        avg_delay_ms: Some(avg_max_ms),
        max_delay_ms: Some(avg_max_ms),
        jitter_ms,
        packet_loss: Some(loss_pct / 100.0),
        scale_factors: sf.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn surrogate(base: f64, gain: f64, jitter: f64) -> SurrogateKpiModel {
    SurrogateKpiModel {
        base_delay_ms: base,
        delay_gain_ms: gain,
        jitter_fraction: jitter,
        loss_knee: 0.9,
        loss_gain: 0.05,
    }
}

fn profile(direction: Direction, base: f64, amplitude: f64, peaks: &[f64], noise: f64) -> TrafficProfile {
    TrafficProfile {
        direction,
        base_rate_mbps: base,
        amplitude,
        peak_hours: peaks.to_vec(),
        peak_width_h: 2.5,
        noise_std: noise,
        spike_prob: 0.01,
        spike_magnitude: 1.05,
        seed: None,
    }
}

/// Memory and storage per vCPU follow the cap_max proportions.
fn requirement(cpu_per_mbps: f64) -> RequirementProfile {
    RequirementProfile {
        cpu_per_mbps,
        ram_mb_per_mbps: cpu_per_mbps * 1000.0 / 3.0,
        sto_mb_per_mbps: cpu_per_mbps * 1200.0 / 3.0,
        drift: 0.1,
        drift_period_h: 24.0,
    }
}

fn default_slices() -> Vec<SliceDoc> {
    vec![
        SliceDoc {
            id: 1,
            name: "eMBB".into(),
            slice_type: SliceType::Embb,
            link_mbps: 150.0,
            vnfs: vec![ComputeDoc::new(3.0, 1000.0, 1200.0), ComputeDoc::new(1.5, 500.0, 600.0)],
            thresholds: thresholds(300.0, Some(100.0), 0.001, &[("delay", "0.20"), ("jitter", "0.012"), ("packet_loss", "1E+03")]),
            requirement: requirement(0.045),
            traffic: profile(Direction::Downlink, 100.0, 0.85, &[20.0], 0.015),
            model: surrogate(2.0, 12.0, 0.3),
            environment_model: None,
        },
        SliceDoc {
            id: 2,
            name: "uRLLC".into(),
            slice_type: SliceType::Urllc,
            link_mbps: 80.0,
            vnfs: vec![ComputeDoc::new(3.0, 1000.0, 1200.0)],
            thresholds: thresholds(30.0, Some(5.0), 0.1, &[("delay", "2"), ("jitter", "1.05 (UL)/1 (DL)"), ("packet_loss", "10")]),
            requirement: requirement(0.08),
            traffic: profile(Direction::Uplink, 35.0, 0.8, &[13.0], 0.015),
            model: surrogate(1.0, 1.1, 0.3),
            environment_model: None,
        },
        SliceDoc {
            id: 3,
            name: "mMTC".into(),
            slice_type: SliceType::Mmtc,
            link_mbps: 100.0,
            vnfs: vec![ComputeDoc::new(3.0, 1000.0, 1200.0)],
            thresholds: thresholds(10.0, None, 0.01, &[("delay", "2.5"), ("packet_loss", "285")]),
            requirement: requirement(0.05),
            traffic: profile(Direction::Both, 45.0, 0.8, &[9.0, 18.0], 0.015),
            model: surrogate(0.5, 0.35, 0.0),
            environment_model: None,
        },
        SliceDoc {
            id: 4,
            name: "VoIP".into(),
            slice_type: SliceType::Voip,
            link_mbps: 60.0,
            vnfs: vec![ComputeDoc::new(3.0, 1000.0, 1200.0), ComputeDoc::new(2.0, 700.0, 800.0)],
            thresholds: thresholds(100.0, Some(10.0), 1.0, &[("delay", "0.25"), ("jitter", "0.2 (UL)/06 (DL)"), ("packet_loss", "2.5")]),
            requirement: requirement(0.08),
            traffic: TrafficProfile {
                spike_prob: 0.0,
                ..profile(Direction::Both, 40.0, 0.1, &[11.0, 17.0], 0.01)
            },
            model: surrogate(2.0, 4.0, 0.2),
            environment_model: None,
        },
    ]
}

/// Validated per-slice setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub id: u32,
    pub name: String,
    pub slice_type: SliceType,
    pub initial: SliceConfig,
    pub thresholds: KpiThresholds,
    pub params: PsaParams,
    pub requirement: RequirementProfile,
    pub traffic: TrafficProfile,
    pub model: SurrogateKpiModel,
    pub environment_model: SurrogateKpiModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub duration_s: u64,
    pub infrastructure: Infrastructure,
    pub slices: Vec<SliceSpec>,
}

impl Scenario {
    pub fn label(&self) -> &str {
        &self.doc.label
    }

    pub fn seed(&self) -> u64 {
        self.doc.seed
    }

    pub fn step_s(&self) -> u64 {
        self.doc.step_s
    }

    pub fn window_s(&self) -> u64 {
        self.doc.params.window_s
    }

    pub fn windows(&self) -> usize {
        (self.duration_s / self.window_s()) as usize
    }

    pub fn hours(&self) -> f64 {
        self.duration_s as f64 / 3600.0
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Self> {
        let params = doc.params.to_params();
        params.validate()?;
        let window_s = params.window_s;
        if !(doc.hours.is_finite() && doc.hours > 0.0) {
            return Err(Error::Validation(format!(
                "duration must cover at least one window, got {} h",
                doc.hours
            )));
        }
        let duration_s = (doc.hours * 3600.0).round() as u64;
        if duration_s < window_s {
            return Err(Error::Validation(format!(
                "duration must cover at least one window ({window_s} s), got {duration_s} s"
            )));
        }
        if !duration_s.is_multiple_of(window_s) {
            return Err(Error::Validation(format!(
                "duration of {duration_s} s is not a whole number of {window_s} s windows"
            )));
        }
        if doc.step_s == 0 || !window_s.is_multiple_of(doc.step_s) {
            return Err(Error::Validation(format!(
                "step of {} s does not divide the {window_s} s window",
                doc.step_s
            )));
        }

        for (i, pm) in doc.infrastructure.pms.iter().enumerate() {
            pm.validate(&format!("pm {i}"))?;
        }
        let infrastructure = Infrastructure {
            pms: doc.infrastructure.pms.iter().map(|p| p.to_vector()).collect(),
            total_link_mbps: doc.infrastructure.link_mbps,
        };
        infrastructure.validate()?;

        if doc.slices.is_empty() {
            return Err(Error::Validation("scenario has no slices".into()));
        }
        let bounds: InstanceBounds = params.bounds();
        let mut slices = Vec::with_capacity(doc.slices.len());
        for s in &doc.slices {
            if slices.iter().any(|o: &SliceSpec| o.id == s.id) {
                return Err(Error::Validation(format!("duplicate slice id {}", s.id)));
            }
            let ctx = |e: Error| match e {
                Error::Validation(m) => Error::Validation(format!("slice {}: {m}", s.name)),
                other => other,
            };
            if s.vnfs.is_empty() {
                return Err(Error::Validation(format!("slice {}: needs at least one VNF", s.name)));
            }
            if !(s.link_mbps.is_finite() && s.link_mbps > 0.0) {
                return Err(Error::Validation(format!("slice {}: link_mbps must be positive", s.name)));
            }
            let mut stack = Vec::with_capacity(s.vnfs.len());
            for (i, v) in s.vnfs.iter().enumerate() {
                v.validate(&format!("slice {} vnf {i}", s.name))?;
                let alloc = v.to_vector();
                if !bounds.contains(&alloc) {
                    return Err(Error::Validation(format!(
                        "slice {} vnf {i}: {alloc} outside [{}, {}]",
                        s.name, params.cap_min, params.cap_max
                    )));
                }
                stack.push(VnfInstance::new(i as u32, alloc, &bounds));
            }
            for (k, v) in [
                ("avg_delay_ms", s.thresholds.avg_delay_ms),
                ("max_delay_ms", s.thresholds.max_delay_ms),
                ("jitter_ms", s.thresholds.jitter_ms),
            ] {
                if v.is_some_and(|x| !(x >= 0.0)) {
                    return Err(Error::Validation(format!("slice {}: {k} must be >= 0", s.name)));
                }
            }
            if s.thresholds.packet_loss.is_some_and(|x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Validation(format!(
                    "slice {}: packet_loss is a fraction in [0, 1]",
                    s.name
                )));
            }
            s.requirement.validate().map_err(ctx)?;
            s.traffic.validate().map_err(ctx)?;
            s.model.validate().map_err(ctx)?;
            let environment_model = s.environment_model.unwrap_or(s.model);
            environment_model.validate().map_err(ctx)?;
            slices.push(SliceSpec {
                id: s.id,
                name: s.name.clone(),
                slice_type: s.slice_type,
                initial: SliceConfig {
                    vnf_stack: stack,
                    link_cap_mbps: s.link_mbps,
                },
                thresholds: s.thresholds.clone(),
                params: params.clone(),
                requirement: s.requirement.clone(),
                traffic: s.traffic.clone(),
                model: s.model,
                environment_model,
            });
        }

        let configs: Vec<&SliceConfig> = slices.iter().map(|s| &s.initial).collect();
        if !infrastructure.compute_fits(configs.iter().copied()) {
            return Err(Error::Validation(
                "initial VNF allocations exceed the physical compute capacity".into(),
            ));
        }
        if !infrastructure.links_fit(configs.iter().copied()) {
            let total: f64 = configs.iter().map(|c| c.link_cap_mbps).sum();
            return Err(Error::Validation(format!(
                "initial links total {total} Mbps, above the {} Mbps physical link",
                infrastructure.total_link_mbps
            )));
        }
        slices.sort_by_key(|s| s.id);
        Ok(Self {
            doc,
            duration_s,
            infrastructure,
            slices,
        })
    }
}

/// Loads a preset by name or a scenario file by path.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    Scenario::from_doc(load_scenario_doc(source)?)
}

pub fn load_scenario_doc(source: &str) -> Result<ScenarioDoc> {
    if let Some(doc) = ScenarioDoc::preset(source) {
        return Ok(doc);
    }
    let text = std::fs::read_to_string(Path::new(source)).map_err(|e| Error::Parse {
        location: source.to_string(),
        message: e.to_string(),
    })?;
    ScenarioDoc::from_toml(&text, source)
}

/// Memory in MB of a byte count, for reports.
pub fn to_mb(bytes: u64) -> f64 {
    bytes as f64 / MB as f64
}
