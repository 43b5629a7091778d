use proptest::prelude::*;
use slice_assure::estimation::PerUnitRequirement;
use slice_assure::kpi::SurrogateKpiModel;
use slice_assure::model::{Action, InstanceBounds, ResourceVector, SliceConfig, VnfInstance, GB};
use slice_assure::scenario::{load_scenario, Scenario, ScenarioDoc};
use slice_assure::sim::env::step_environment;
use slice_assure::sim::runner::{baseline_configs, run_simulation, run_with_mode, Mode};

fn preset(name: &str, hours: f64) -> Scenario {
    let mut doc = ScenarioDoc::preset(name).unwrap();
    doc.hours = hours;
    Scenario::from_doc(doc).unwrap()
}

#[test]
fn day_at_five_minutes_is_288_windows() {
    let sc = load_scenario("setting1").unwrap();
    let report = run_simulation(&sc).unwrap();
    assert_eq!(report.windows, 288);
    for s in &report.slices {
        assert_eq!(s.rows.len(), 288);
        assert_eq!(s.allocations.len(), 288);
    }
    assert_eq!(report.capacity_ok.len(), 288);
    assert!(report.capacity_ok.iter().all(|ok| *ok));
}

#[test]
fn zero_traffic_collapses_to_floor() {
    let mut doc = ScenarioDoc::preset("setting1").unwrap();
    doc.hours = 4.0;
    for s in &mut doc.slices {
        s.traffic.spike_prob = 1.0;
        s.traffic.spike_magnitude = 0.0;
    }
    let sc = Scenario::from_doc(doc).unwrap();
    let report = run_simulation(&sc).unwrap();
    let cap_min = sc.slices[0].params.cap_min;
    for s in &report.slices {
        assert_eq!(s.total_violations(), 0, "{}", s.name);
        let actions: Vec<&str> = s.rows.iter().map(|r| r.compute_action.as_str()).collect();
        let first_idle = actions.iter().position(|a| *a == "no_action").expect("settles");
        assert!(actions[..first_idle]
            .iter()
            .all(|a| *a == Action::ScaleDown.as_str() || *a == Action::ScaleIn.as_str()));
        assert!(actions[first_idle..].iter().all(|a| *a == "no_action"), "{}: {actions:?}", s.name);
        let last = s.rows.last().unwrap();
        assert_eq!(last.instances, 1);
        let alloc = *s.allocations.last().unwrap();
        assert!(alloc.le(&cap_min) && cap_min.le(&alloc), "{}: {alloc}", s.name);
    }
}

#[test]
fn identical_inputs_identical_reports() {
    let sc = preset("setting2", 6.0);
    assert_eq!(run_simulation(&sc).unwrap(), run_simulation(&sc).unwrap());
}

#[test]
fn seed_changes_traffic() {
    let a = preset("setting1", 2.0);
    let mut doc = a.doc.clone();
    doc.seed = 7;
    let b = Scenario::from_doc(doc).unwrap();
    let ra = run_simulation(&a).unwrap();
    let rb = run_simulation(&b).unwrap();
    assert_ne!(ra.slices[0].rows[3].offered_mean_mbps, rb.slices[0].rows[3].offered_mean_mbps);
}

#[test]
fn static_peak_baseline_never_violates_more() {
    for name in ["setting1", "setting3"] {
        let sc = preset(name, 24.0);
        let dynamic = run_simulation(&sc).unwrap();
        let baseline = run_with_mode(&sc, &Mode::Static(baseline_configs(&sc, &dynamic))).unwrap();
        for (b, d) in baseline.slices.iter().zip(&dynamic.slices) {
            assert!(
                b.total_violations() <= d.total_violations(),
                "{name} {}: baseline {} > dynamic {}",
                b.name,
                b.total_violations(),
                d.total_violations()
            );
            assert_eq!(b.compute_actions(), 0);
        }
    }
}

proptest! {
    #[test]
    fn served_plus_dropped_is_offered(
        offered in 0.0..400.0f64,
        cpu in 0.1..3.0f64,
        link in 1.0..300.0f64,
        req in 0.0..0.1f64,
    ) {
        let bounds = InstanceBounds {
            min: ResourceVector::ZERO,
            max: ResourceVector::new(3.0, GB, GB),
        };
        let cfg = SliceConfig {
            vnf_stack: vec![VnfInstance::new(0, ResourceVector::new(cpu, GB, GB), &bounds)],
            link_cap_mbps: link,
        };
        let r = step_environment(
            &cfg,
            &[1.0],
            offered,
            &PerUnitRequirement::new(req, 1e6, 1e6),
            &SurrogateKpiModel::default(),
            0,
        );
        prop_assert!((r.served_mbps + r.dropped_mbps - offered).abs() <= 1e-9);
        prop_assert!(r.sample.kpis.packet_loss <= 1.0);
        prop_assert!(r.sample.vnfs[0].util.iter().all(|u| (0.0..=1.0).contains(u)));
        prop_assert!((0.0..=1.0).contains(&r.sample.link_util));
    }
}
