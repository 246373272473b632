use std::path::PathBuf;

use resetkit::campaign::{design_rows, row_key, REPORT_UNIT_M};
use resetkit::sim::{metrics_of, ErrorSignal};
use resetkit::loop_shaping::LEADLAG_REFERENCE_DEG;
use resetkit::*;

fn small() -> CampaignSpec {
    let mut spec = CampaignSpec {
        families: vec![Family::Linear, Family::CglpGfore],
        gammas: vec![1.0, 0.4],
        ..CampaignSpec::default()
    };
    spec.sim.duration = 3.0;
    spec.settle_periods = 1.0;
    spec
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("resetkit-campaign-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn spec_json_with_defaults() {
    let spec: CampaignSpec = serde_json::from_str(r#"{"families":["linear","cglp-gsore"],"gammas":[1.0,0.2]}"#).unwrap();
    assert_eq!(spec.families, vec![Family::Linear, Family::CglpGsore]);
    assert_eq!(spec.mode, DesignMode::Tracking);
    assert_eq!(spec.bandwidth_hz, 100.0);
    assert_eq!(spec.pm_deg, 30.0);
    assert_eq!(spec.sim.reference, SimConfig::tracking().reference);
    assert_eq!(spec.sim.noise.amplitude, 5e-6);
    spec.validate().unwrap();
    let bad = r#"{"families":["linear"],"gammas":[1.0],"bandwith_hz":90}"#;
    assert!(serde_json::from_str::<CampaignSpec>(bad).is_err());
    let mode: CampaignSpec = serde_json::from_str(r#"{"families":["linear"],"gammas":[1.0],"mode":"bandwidth"}"#).unwrap();
    assert_eq!(mode.mode, DesignMode::Bandwidth);
}

#[test]
fn invalid_campaigns() {
    let plant = PlantModel64::spyder_1a();
    let empty = CampaignSpec { gammas: vec![], ..small() };
    assert!(run_campaign(&empty, &plant, None).is_err());
    let none = CampaignSpec { families: vec![], ..small() };
    assert!(none.validate().is_err());
    let out = CampaignSpec { gammas: vec![1.2], ..small() };
    assert!(out.validate().is_err());
    let mut settle = small();
    settle.settle_periods = 10.0;
    assert!(settle.validate().is_err());
}

#[test]
fn campaign_writes_its_outputs() {
    let dir = scratch_dir("outputs");
    let mut spec = small().with_seed(4);
    spec.check_stability = true;
    let (rows, report) = run_campaign(&spec, &PlantModel64::spyder_1a(), Some(&dir)).unwrap();
    assert_eq!(rows.len(), 4);
    for f in ["report.json", "design_table.csv", "performance_table.csv", "rows/linear_1.00.json", "rows/cglp-gfore_0.40.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    let back: CampaignReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let keys: Vec<&String> = report.entries.keys().collect();
    assert_eq!(keys, ["cglp-gfore/0.40", "cglp-gfore/1.00", "linear/0.40", "linear/1.00"]);
    for e in report.entries.values() {
        assert!(e.error.is_none(), "{:?}", e.error);
        assert_eq!(e.stability, "feasible");
        assert!(e.e_rms_tracking.unwrap() > 0.0);
        assert!(e.e_max_precision.unwrap() >= e.e_rms_precision.unwrap());
    }
    let design = std::fs::read_to_string(dir.join("design_table.csv")).unwrap();
    assert!(design.starts_with("family,gamma,bandwidth_hz,scale_a,pm_deg,stability\n"));
    assert_eq!(design.lines().count(), 5);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn report_is_in_units_of_100_nm() {
    let plant = PlantModel64::spyder_1a();
    let mut spec = small();
    spec.families = vec![Family::CglpGfore];
    spec.gammas = vec![0.4];
    spec.check_stability = false;
    let (rows, report) = run_campaign(&spec, &plant, None).unwrap();
    let d = rows[0].design.as_ref().unwrap();
    let trace = simulate(d, &plant, &spec.sim).unwrap();
    let m = metrics_of(&trace, spec.settle_periods, ErrorSignal::True).unwrap();
    let entry = &report.entries[&row_key(Family::CglpGfore, 0.4)];
    assert_eq!(entry.e_rms_tracking.unwrap(), m.e_rms / REPORT_UNIT_M);
    assert_eq!(entry.stability, "not-checked");
}

#[test]
fn leadlag_accounting_gives_the_linear_baseline_scale() {
    let spec = CampaignSpec {
        families: vec![Family::CglpGfore],
        gammas: vec![1.0],
        accounting: PhaseAccounting::LeadLagOnly { reference_deg: LEADLAG_REFERENCE_DEG },
        ..small()
    };
    let (rows, _) = design_rows(&spec, &PlantModel64::spyder_1a()).unwrap();
    let a = rows[0].2.as_ref().unwrap().scale_a;
    assert!((a - 2.90).abs() < 0.02, "{a}");
}

#[test]
fn bandwidth_mode_records_the_matched_gain() {
    let spec = CampaignSpec { families: vec![Family::CglpGfore], gammas: vec![1.0, 0.0], mode: DesignMode::Bandwidth, ..small() };
    let (rows, g_pre) = design_rows(&spec, &PlantModel64::spyder_1a()).unwrap();
    assert!(g_pre.contains_key("cglp-gfore"));
    let bw: Vec<f64> = rows.iter().map(|r| r.2.as_ref().unwrap().bandwidth_hz()).collect();
    assert!((bw[0] - 100.0).abs() < 1e-6);
    assert!(bw[1] > bw[0]);
}
