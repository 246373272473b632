//! Design-and-simulate campaigns over families and reset factors, producing
//! the design tables and the tracking/precision performance tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_shaping::{
    default_omega_high, design_bandwidth, design_tracking_precision, open_loop_gain_db, ControllerDesign, DesignRequest,
    Family, PhaseAccounting, PlantModel,
};
use crate::sim::{metrics_of, simulate, ErrorSignal, NoiseSpec, SimConfig};
use crate::stability::{build_closed_loop, find_certificate, SearchOptions};

/// Errors in the report are counted in this quantum (100 nm).
pub const REPORT_UNIT_M: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    /// Fixed bandwidth and phase margin.
    #[default]
    Tracking,
    /// Bandwidth raised until the high-frequency gain matches the γ=1 design.
    Bandwidth,
}

impl DesignMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(Self::Tracking),
            "bandwidth" => Ok(Self::Bandwidth),
            _ => Err(Error::Parse(format!("unknown mode {s:?} (expected tracking or bandwidth)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub families: Vec<Family>,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub mode: DesignMode,
    #[serde(default = "default_bandwidth_hz")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_pm")]
    pub pm_deg: f64,
    #[serde(default = "default_accounting")]
    pub accounting: PhaseAccounting,
    /// Configuration of the tracking runs; by default the triangle with the
    /// same sensor noise as the precision runs.
    #[serde(default = "default_sim")]
    pub sim: SimConfig<f64>,
    /// Sensor noise of the precision runs (zero reference).
    #[serde(default = "default_precision_noise")]
    pub precision_noise: NoiseSpec<f64>,
    /// Part of each run excluded from the metrics, in reference periods.
    #[serde(default = "default_settle")]
    pub settle_periods: f64,
    #[serde(default = "default_true")]
    pub check_stability: bool,
    #[serde(default)]
    pub stability: SearchOptions,
}

fn default_sim() -> SimConfig<f64> {
    let mut c = SimConfig::tracking();
    c.noise = default_precision_noise();
    c
}
fn default_bandwidth_hz() -> f64 {
    100.0
}
fn default_pm() -> f64 {
    30.0
}
fn default_accounting() -> PhaseAccounting {
    PhaseAccounting::FullPid
}
fn default_precision_noise() -> NoiseSpec<f64> {
    NoiseSpec { amplitude: 5e-6, seed: 0 }
}
fn default_settle() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            families: vec![Family::Linear, Family::ResetIntegrator, Family::CglpGfore, Family::CglpGsore],
            gammas: vec![1.0, 0.8, 0.6, 0.4, 0.2, 0.0],
            mode: DesignMode::Tracking,
            bandwidth_hz: default_bandwidth_hz(),
            pm_deg: default_pm(),
            accounting: default_accounting(),
            sim: default_sim(),
            precision_noise: default_precision_noise(),
            settle_periods: default_settle(),
            check_stability: true,
            stability: SearchOptions::default(),
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::InvalidParameter("campaign has no families".into()));
        }
        if self.gammas.is_empty() {
            return Err(Error::InvalidParameter("campaign has no gamma values".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidParameter(format!("gamma = {g} outside [0, 1]")));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth = {} Hz", self.bandwidth_hz)));
        }
        if !(self.settle_periods >= 0.0) {
            return Err(Error::InvalidParameter(format!("settle periods = {}", self.settle_periods)));
        }
        self.sim.validate()?;
        if self.settle_periods * self.sim.reference.period >= self.sim.duration {
            return Err(Error::InvalidParameter("settling window covers the whole run".into()));
        }
        Ok(())
    }

    /// Applies a seed to every noise source.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.noise.seed = seed;
        self.precision_noise.seed = seed;
        self.stability.seed = seed;
        self
    }

    pub fn precision_config(&self) -> SimConfig<f64> {
        let mut c = self.sim.clone();
        c.reference.peak_to_peak = 0.0;
        c.noise = self.precision_noise.clone();
        c
    }

    fn rows(&self) -> Vec<(Family, f64)> {
        let mut v = Vec::new();
        for &f in &self.families {
            for &g in &self.gammas {
                v.push((f, g));
            }
        }
        v
    }
}

/// Report entry for one (family, γ); errors are of the output, `r − y`,
/// in units of 100 nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub e_rms_tracking: Option<f64>,
    pub e_rms_precision: Option<f64>,
    pub e_max_precision: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub scale_a: Option<f64>,
    pub achieved_pm_deg: Option<f64>,
    pub stability: String,
    pub limit_cycle_tracking: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub family: Family,
    pub gamma: f64,
    pub design: Option<ControllerDesign<f64>>,
    pub entry: ReportEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub mode: DesignMode,
    /// High-frequency gain matched in bandwidth mode, per family.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub g_pre_db: BTreeMap<String, f64>,
    pub entries: BTreeMap<String, ReportEntry>,
}

pub fn row_key(family: Family, gamma: f64) -> String {
    format!("{}/{:.2}", family.name(), gamma)
}

/// Designs every row and reference designs for bandwidth mode.
pub fn design_rows(spec: &CampaignSpec, plant: &PlantModel<f64>) -> Result<(Vec<(Family, f64, Result<ControllerDesign<f64>>)>, BTreeMap<String, f64>)> {
    spec.validate()?;
    let wc = std::f64::consts::TAU * spec.bandwidth_hz;
    let mut g_pre = BTreeMap::new();
    let mut refs: BTreeMap<&'static str, ControllerDesign<f64>> = BTreeMap::new();
    if spec.mode == DesignMode::Bandwidth {
        for &f in &spec.families {
            let req = DesignRequest::new(f, 1.0).with_accounting(spec.accounting);
            let d = design_tracking_precision(plant, wc, spec.pm_deg, &req)?;
            g_pre.insert(f.name().to_string(), open_loop_gain_db(&d, plant, default_omega_high())?);
            refs.insert(f.name(), d);
        }
    }
    let rows = spec
        .rows()
        .into_par_iter()
        .map(|(f, g)| {
            let d = match spec.mode {
                DesignMode::Tracking => {
                    let req = DesignRequest::new(f, g).with_accounting(spec.accounting);
                    design_tracking_precision(plant, wc, spec.pm_deg, &req)
                }
                DesignMode::Bandwidth => {
                    let r = &refs[f.name()];
                    design_bandwidth(plant, r, g, g_pre[f.name()], default_omega_high())
                }
            };
            (f, g, d)
        })
        .collect();
    Ok((rows, g_pre))
}

fn evaluate_row(spec: &CampaignSpec, plant: &PlantModel<f64>, family: Family, gamma: f64, design: Result<ControllerDesign<f64>>) -> CampaignRow {
    let mut entry = ReportEntry {
        e_rms_tracking: None,
        e_rms_precision: None,
        e_max_precision: None,
        bandwidth_hz: None,
        scale_a: None,
        achieved_pm_deg: None,
        stability: "not-checked".into(),
        limit_cycle_tracking: None,
        error: None,
    };
    let design = match design {
        Ok(d) => d,
        Err(e) => {
            entry.error = Some(format!("design: {e}"));
            return CampaignRow { family, gamma, design: None, entry };
        }
    };
    entry.bandwidth_hz = Some(design.bandwidth_hz());
    entry.scale_a = Some(design.scale_a);
    entry.achieved_pm_deg = Some(design.achieved_pm_deg);
    let mut errors = Vec::new();
    if spec.check_stability {
        entry.stability = match plant.state_space() {
            Ok(ss) => match design.realize().and_then(|c| build_closed_loop(ss, &c)).and_then(|cl| find_certificate(&cl, &spec.stability)) {
                Ok(v) => v.name().into(),
                Err(e) => {
                    errors.push(format!("stability: {e}"));
                    "error".into()
                }
            },
            Err(_) => "skipped".into(),
        };
    }
    let skip = spec.settle_periods * spec.sim.reference.period;
    match simulate(&design, plant, &spec.sim).and_then(|t| metrics_of(&t, skip, ErrorSignal::True)) {
        Ok(m) => {
            entry.e_rms_tracking = Some(m.e_rms / REPORT_UNIT_M);
            entry.limit_cycle_tracking = Some(m.limit_cycle_flag);
        }
        Err(e) => errors.push(format!("tracking: {e}")),
    }
    match simulate(&design, plant, &spec.precision_config()).and_then(|t| metrics_of(&t, skip, ErrorSignal::True)) {
        Ok(m) => {
            entry.e_rms_precision = Some(m.e_rms / REPORT_UNIT_M);
            entry.e_max_precision = Some(m.e_max_abs / REPORT_UNIT_M);
        }
        Err(e) => errors.push(format!("precision: {e}")),
    }
    if !errors.is_empty() {
        entry.error = Some(errors.join("; "));
    }
    CampaignRow { family, gamma, design: Some(design), entry }
}

/// Runs the campaign; rows execute in parallel and failures are recorded
/// per row. With `output_dir`, each row is written atomically as it
/// completes, then the report and tables after all rows have joined.
pub fn run_campaign(spec: &CampaignSpec, plant: &PlantModel<f64>, output_dir: Option<&Path>) -> Result<(Vec<CampaignRow>, CampaignReport)> {
    let (designs, g_pre_db) = design_rows(spec, plant)?;
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir.join("rows"))?;
    }
    let rows: Vec<CampaignRow> = designs
        .into_par_iter()
        .map(|(f, g, d)| {
            let row = evaluate_row(spec, plant, f, g, d);
            if let Some(dir) = output_dir {
                let name = format!("{}_{:.2}.json", f.name(), g);
                let body = serde_json::to_vec_pretty(&row)?;
                write_atomic(&dir.join("rows").join(name), &body)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let entries = rows.iter().map(|r| (row_key(r.family, r.gamma), r.entry.clone())).collect();
    let report = CampaignReport { mode: spec.mode, g_pre_db, entries };
    if let Some(dir) = output_dir {
        write_atomic(&dir.join("report.json"), &report_json(&report)?)?;
        let mut design = Vec::new();
        write_design_table(&mut design, &rows)?;
        write_atomic(&dir.join("design_table.csv"), &design)?;
        let mut perf = Vec::new();
        write_performance_table(&mut perf, &rows)?;
        write_atomic(&dir.join("performance_table.csv"), &perf)?;
    }
    Ok((rows, report))
}

pub fn report_json(report: &CampaignReport) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(report)?;
    v.push(b'\n');
    Ok(v)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| Error::Io(format!("bad path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(body)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_default()
}

/// `family,gamma,bandwidth_hz,scale_a,pm_deg,stability`
pub fn write_design_table<W: Write>(mut w: W, rows: &[CampaignRow]) -> Result<()> {
    writeln!(w, "family,gamma,bandwidth_hz,scale_a,pm_deg,stability")?;
    for r in rows {
        let e = &r.entry;
        writeln!(
            w,
            "{},{:.2},{},{},{},{}",
            r.family.name(),
            r.gamma,
            opt(e.bandwidth_hz, 2),
            opt(e.scale_a, 3),
            opt(e.achieved_pm_deg, 2),
            e.stability
        )?;
    }
    Ok(())
}

/// `family,gamma,e_rms_tracking,e_rms_precision,e_max_precision` in 100 nm.
pub fn write_performance_table<W: Write>(mut w: W, rows: &[CampaignRow]) -> Result<()> {
    writeln!(w, "family,gamma,e_rms_tracking,e_rms_precision,e_max_precision,limit_cycle")?;
    for r in rows {
        let e = &r.entry;
        writeln!(
            w,
            "{},{:.2},{},{},{},{}",
            r.family.name(),
            r.gamma,
            opt(e.e_rms_tracking, 3),
            opt(e.e_rms_precision, 3),
            opt(e.e_max_precision, 3),
            e.limit_cycle_tracking.map(|b| b.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}
