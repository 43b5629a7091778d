//! Run orchestration and report files for the `slice-assure` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use slice_assure::scenario::{load_scenario_doc, Scenario, ScenarioDoc};
use slice_assure::sim::metrics::{action_stats, format_action_table, MetricsReport};
use slice_assure::sim::runner::{run_simulation, savings_per_slice};

pub const SCHEMA_VERSION: u32 = 1;
pub const RATIO_CONVENTION: &str = "ratio = compute actions / (hours x 30 window slots); hourly = ratio / hours";

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Preset name or path to a scenario file.
    pub scenario: String,
    pub out: PathBuf,
    pub hours: Option<f64>,
    pub seed: Option<u64>,
    pub setting: Option<u8>,
    pub forecaster: Option<String>,
}

impl RunConfig {
    pub fn load(&self) -> slice_assure::Result<Scenario> {
        let mut doc: ScenarioDoc = load_scenario_doc(&self.scenario)?;
        if let Some(h) = self.hours {
            doc.hours = h;
        }
        if let Some(s) = self.seed {
            doc.seed = s;
        }
        if let Some(s) = self.setting {
            doc.apply_setting(s)?;
            if slice_assure::scenario::ScenarioDoc::preset(&self.scenario).is_some() {
                doc.label = format!("setting{s}");
            }
        }
        if let Some(f) = &self.forecaster {
            doc.forecaster = f.clone();
        }
        Scenario::from_doc(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub slice_id: u32,
    pub name: String,
    pub slice_type: String,
    pub violations: std::collections::BTreeMap<String, usize>,
    pub violation_windows: usize,
    pub actions: std::collections::BTreeMap<String, usize>,
    pub total_actions: usize,
    pub ratio: f64,
    pub ratio_pct: String,
    pub hourly: f64,
    pub hourly_pct: String,
    pub alarms: std::collections::BTreeMap<String, usize>,
    pub rejected: usize,
    pub savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub label: String,
    pub seed: u64,
    pub hours: f64,
    pub windows: usize,
    pub window_s: u64,
    pub step_s: u64,
    pub forecaster: String,
    pub beta: f64,
    pub ratio_convention: String,
    pub capacity_breaches: usize,
    pub slices: Vec<SliceSummary>,
}

impl Summary {
    pub fn from_report(report: &MetricsReport, savings: &[f64]) -> Self {
        let rows = action_stats(report);
        Self {
            schema_version: SCHEMA_VERSION,
            label: report.label.clone(),
            seed: report.seed,
            hours: report.hours,
            windows: report.windows,
            window_s: report.window_s,
            step_s: report.step_s,
            forecaster: report.forecaster.clone(),
            beta: report.beta,
            ratio_convention: RATIO_CONVENTION.into(),
            capacity_breaches: report.capacity_ok.iter().filter(|ok| !**ok).count(),
            slices: report
                .slices
                .iter()
                .zip(&rows)
                .zip(savings)
                .map(|((s, r), &sv)| SliceSummary {
                    slice_id: s.slice_id,
                    name: s.name.clone(),
                    slice_type: s.slice_type.to_string(),
                    violations: s.violations.clone(),
                    violation_windows: s.violation_windows,
                    actions: s.actions.clone(),
                    total_actions: r.total,
                    ratio: r.ratio,
                    ratio_pct: r.ratio_pct(),
                    hourly: r.hourly,
                    hourly_pct: r.hourly_pct(),
                    alarms: s.alarms.clone(),
                    rejected: s.rejected,
                    savings: sv,
                })
                .collect(),
        }
    }
}

/// Everything a run produces, before it is written out.
#[derive(Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub summary: Summary,
    pub table: String,
}

pub fn simulate(scenario: &Scenario) -> slice_assure::Result<RunOutput> {
    let report = run_simulation(scenario)?;
    let savings = savings_per_slice(scenario, &report);
    let summary = Summary::from_report(&report, &savings);
    let mut table = format!(
        "{} seed={} hours={} beta={}\n{}\n\n",
        report.label, report.seed, report.hours, report.beta, RATIO_CONVENTION
    );
    table.push_str(&format_action_table(&action_stats(&report), &savings));
    Ok(RunOutput { report, summary, table })
}

pub fn csv_name(slice_id: u32, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("slice_{slice_id}_{clean}.csv")
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn write_outputs(out: &RunOutput, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in &out.report.slices {
        let path = dir.join(csv_name(s.slice_id, &s.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in &s.rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    write_atomic(&dir.join("table.txt"), out.table.as_bytes())?;
    // summary last: its presence marks a complete run
    let json = serde_json::to_string_pretty(&out.summary)? + "\n";
    write_atomic(&dir.join("summary.json"), json.as_bytes())?;
    Ok(())
}

pub fn run(config: &RunConfig) -> anyhow::Result<RunOutput> {
    let scenario = config.load()?;
    log::info!(
        "running {} for {} windows, seed {}",
        scenario.label(),
        scenario.windows(),
        scenario.seed()
    );
    let out = simulate(&scenario)?;
    write_outputs(&out, &config.out)?;
    Ok(out)
}

pub fn read_summary(dir: &Path) -> anyhow::Result<Summary> {
    let path = dir.join("summary.json");
    if !path.is_file() {
        bail!("missing run: {} has no summary.json", dir.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let summary: Summary = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if summary.schema_version != SCHEMA_VERSION {
        bail!(
            "{}: schema version {} unsupported (expected {SCHEMA_VERSION})",
            path.display(),
            summary.schema_version
        );
    }
    Ok(summary)
}

/// Side-by-side violations, actions and savings per slice, one column group
/// per run in the given order. Deltas are relative to the first run.
pub fn compare_summaries(runs: &[(String, Summary)]) -> anyhow::Result<String> {
    if runs.len() < 2 {
        bail!("compare needs at least two runs, got {}", runs.len());
    }
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "slice");
    for (name, s) in runs {
        let _ = write!(out, " | {:<28}", format!("{name} (beta={})", s.beta));
    }
    out.push('\n');
    let _ = write!(out, "{:<8}", "");
    for _ in runs {
        let _ = write!(out, " | {:>5} {:>6} {:>6} {:>8}", "viol", "acts", "d_acts", "savings");
    }
    out.push('\n');

    let first = &runs[0].1;
    for (i, base) in first.slices.iter().enumerate() {
        let _ = write!(out, "{:<8}", base.name);
        for (name, s) in runs {
            let Some(sl) = s.slices.get(i).filter(|sl| sl.slice_id == base.slice_id) else {
                bail!("run {name} has no slice {} at position {i}", base.name);
            };
            let viol: usize = sl.violations.values().sum();
            let delta = sl.total_actions as i64 - base.total_actions as i64;
            let _ = write!(
                out,
                " | {:>5} {:>6} {:>+6} {:>7.2}%",
                viol,
                sl.total_actions,
                delta,
                sl.savings * 100.0
            );
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn compare(dirs: &[PathBuf]) -> anyhow::Result<String> {
    let runs = dirs
        .iter()
        .map(|d| Ok((d.display().to_string(), read_summary(d)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    compare_summaries(&runs)
}

/// Exit status for an error: 2 for invalid input, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<slice_assure::Error>() {
        Some(slice_assure::Error::Parse { .. })
        | Some(slice_assure::Error::Validation(_))
        | Some(slice_assure::Error::UnknownForecaster(_)) => 2,
        _ => 1,
    }
}
