use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use resetkit::campaign::{report_json, write_atomic, write_design_table, write_performance_table};
use resetkit::describing::{bode_rows, sweep_with, write_bode_csv, BodeRow};
use resetkit::loop_shaping::{default_omega_high, open_loop_gain_db, LEADLAG_REFERENCE_DEG};
use resetkit::sim::{metrics_of, ErrorSignal};
use resetkit::spectral::MIN_ORACLE_CYCLES;
use resetkit::*;

#[derive(Parser)]
#[command(name = "resetkit", version, about = "Reset element analysis, CgLp-PID design, stability checks and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for every random source (noise, certificate search).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `tables`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Lowest frequency in Hz.
    #[arg(long, default_value_t = 1.0)]
    f_lo: f64,
    /// Highest frequency in Hz.
    #[arg(long, default_value_t = 1.0e4)]
    f_hi: f64,
    #[arg(long, default_value_t = 400)]
    points: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<FrequencyGrid<f64>> {
        FrequencyGrid::log_hz(self.f_lo, self.f_hi, self.points)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    ResetIntegrator,
    CglpGfore,
    CglpGsore,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::ResetIntegrator => Family::ResetIntegrator,
            FamilyArg::CglpGfore => Family::CglpGfore,
            FamilyArg::CglpGsore => Family::CglpGsore,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tracking,
    Bandwidth,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccountingArg {
    FullPid,
    LeadlagOnly,
}

impl From<AccountingArg> for PhaseAccounting {
    fn from(a: AccountingArg) -> Self {
        match a {
            AccountingArg::FullPid => PhaseAccounting::FullPid,
            AccountingArg::LeadlagOnly => PhaseAccounting::LeadLagOnly { reference_deg: LEADLAG_REFERENCE_DEG },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ci,
    Gfore,
    Gsore,
}

#[derive(Subcommand)]
enum Command {
    /// Describing-function Bode data of a reset element.
    Bode {
        /// Element JSON, e.g. {"kind":"GSORE","omega_r_hz":100.0,"beta_r":1.0,"gamma":0.4}.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Add the base linear filter as extra columns.
        #[arg(long)]
        baseline: bool,
    },
    /// Describing-function Bode data of a CgLp element.
    CglpBode {
        /// CgLp JSON, e.g. {"order":"second","omega_r_hz":100,"omega_f_hz":10000,"gamma":0}.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        baseline: bool,
    },
    /// Corner correction α against γ.
    AlphaTable {
        #[arg(long, value_enum, default_value = "gfore")]
        kind: KindArg,
        #[arg(long, default_value_t = 1.0)]
        beta_r: f64,
        /// Comma-separated γ values.
        #[arg(long, default_value = "1,0.8,0.6,0.4,0.2,0")]
        gammas: String,
        /// Use the magnitude threshold crossing instead of the least-squares fit.
        #[arg(long)]
        threshold: bool,
    },
    /// CgLp-PID design for a plant; prints the design JSON.
    Design {
        /// Built-in plant name or a Bode CSV of a measured response.
        #[arg(long, default_value = "spyder-1a")]
        plant: String,
        #[arg(long, default_value_t = 100.0)]
        wc_hz: f64,
        #[arg(long, default_value_t = 30.0)]
        pm_deg: f64,
        #[arg(long, value_enum, default_value = "cglp-gfore")]
        family: FamilyArg,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "tracking")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "full-pid")]
        accounting: AccountingArg,
        /// Also write the open-loop Bode CSV here.
        #[arg(long)]
        bode: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Searches for a quadratic stability certificate of a design.
    StabilityCheck {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value = "spyder-1a")]
        plant: String,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Closed-loop simulation of a design; prints the trace or its metrics.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value = "spyder-1a")]
        plant: String,
        /// Simulation config JSON; the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Bound of the uniform sensor noise in metres.
        #[arg(long)]
        noise: Option<f64>,
        /// Zero reference with ±5 µm noise unless --noise is given.
        #[arg(long)]
        precision: bool,
        #[arg(long)]
        ff_gain_error: Option<f64>,
        #[arg(long)]
        no_feedforward: bool,
        #[arg(long)]
        no_resets: bool,
        /// Start of the metrics window in seconds; two reference periods by default.
        #[arg(long)]
        settle: Option<f64>,
    },
    /// Design and performance tables over families and γ.
    Tables {
        /// Campaign JSON; the flags below override it.
        #[arg(long)]
        campaign: Option<PathBuf>,
        #[arg(long, default_value = "spyder-1a")]
        plant: String,
        /// Comma-separated families.
        #[arg(long)]
        families: Option<String>,
        /// Comma-separated γ values.
        #[arg(long)]
        gammas: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        wc_hz: Option<f64>,
        #[arg(long)]
        pm_deg: Option<f64>,
        #[arg(long, value_enum)]
        accounting: Option<AccountingArg>,
        /// Length of each run in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        no_stability: bool,
    },
    /// Describing function against the first-harmonic oracle over a lattice.
    DfValidate {
        #[arg(long, default_value = "ci,gfore,gsore")]
        kinds: String,
        #[arg(long, default_value = "-1,-0.5,0,0.4,0.8,1")]
        gammas: String,
        /// Frequencies in units of the element corner.
        #[arg(long, default_value_t = 0.1)]
        w_lo: f64,
        #[arg(long, default_value_t = 10.0)]
        w_hi: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = MIN_ORACLE_CYCLES)]
        cycles: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 4,
        Error::InvalidParameter(_) | Error::Parse(_) | Error::Io(_) | Error::Dimension(_) | Error::OutOfRange(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("resetkit: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let c = &cli.common;
    match cli.command {
        Command::Bode { spec, grid, baseline } => bode(c, &spec, &grid, baseline),
        Command::CglpBode { spec, grid, baseline } => cglp_bode(c, &spec, &grid, baseline),
        Command::AlphaTable { kind, beta_r, gammas, threshold } => alpha(c, kind, beta_r, &gammas, threshold),
        Command::Design { plant, wc_hz, pm_deg, family, gamma, mode, accounting, bode, grid } => {
            let plant = load_plant(&plant)?;
            let req = DesignRequest::new(family.into(), gamma).with_accounting(accounting.into());
            design(c, &plant, wc_hz, pm_deg, &req, mode, bode.as_deref(), &grid)
        }
        Command::StabilityCheck { design, plant, iterations, restarts } => {
            let mut opts = SearchOptions::default();
            opts.seed = c.seed.unwrap_or(opts.seed);
            opts.iterations = iterations.unwrap_or(opts.iterations);
            opts.restarts = restarts.unwrap_or(opts.restarts);
            stability(c, &read_json(&design)?, &load_plant(&plant)?, &opts)
        }
        Command::Simulate { design, plant, config, duration, dt, noise, precision, ff_gain_error, no_feedforward, no_resets, settle } => {
            let mut cfg = match config {
                Some(p) => read_json(&p)?,
                None => SimConfig::tracking(),
            };
            if precision {
                cfg.reference.peak_to_peak = 0.0;
                cfg.noise.amplitude = 5e-6;
            }
            cfg.duration = duration.unwrap_or(cfg.duration);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.noise.amplitude = noise.unwrap_or(cfg.noise.amplitude);
            cfg.noise.seed = c.seed.unwrap_or(cfg.noise.seed);
            cfg.feedforward.gain_error = ff_gain_error.unwrap_or(cfg.feedforward.gain_error);
            cfg.feedforward.enabled &= !no_feedforward;
            cfg.resets_enabled &= !no_resets;
            simulate_cmd(c, &read_json(&design)?, &load_plant(&plant)?, &cfg, settle)
        }
        Command::Tables { campaign, plant, families, gammas, mode, wc_hz, pm_deg, accounting, duration, no_stability } => {
            let mut spec: CampaignSpec = match campaign {
                Some(p) => read_json(&p)?,
                None => CampaignSpec::default(),
            };
            if let Some(f) = families {
                spec.families = split(&f).into_iter().map(Family::parse).collect::<Result<_>>()?;
            }
            if let Some(g) = gammas {
                spec.gammas = parse_list(&g)?;
            }
            if let Some(m) = mode {
                spec.mode = match m {
                    ModeArg::Tracking => DesignMode::Tracking,
                    ModeArg::Bandwidth => DesignMode::Bandwidth,
                };
            }
            spec.bandwidth_hz = wc_hz.unwrap_or(spec.bandwidth_hz);
            spec.pm_deg = pm_deg.unwrap_or(spec.pm_deg);
            spec.accounting = accounting.map(Into::into).unwrap_or(spec.accounting);
            spec.sim.duration = duration.unwrap_or(spec.sim.duration);
            spec.check_stability &= !no_stability;
            if let Some(s) = c.seed {
                spec = spec.with_seed(s);
            }
            tables(c, &spec, &load_plant(&plant)?)
        }
        Command::DfValidate { kinds, gammas, w_lo, w_hi, points, cycles } => {
            let kinds = split(&kinds)
                .into_iter()
                .map(|k| match k.to_ascii_lowercase().as_str() {
                    "ci" => Ok(KindArg::Ci),
                    "gfore" => Ok(KindArg::Gfore),
                    "gsore" => Ok(KindArg::Gsore),
                    _ => Err(Error::Parse(format!("unknown element kind {k:?} (expected ci, gfore or gsore)"))),
                })
                .collect::<Result<Vec<_>>>()?;
            df_validate(c, &kinds, &parse_list(&gammas)?, &FrequencyGrid::log(w_lo, w_hi, points)?, cycles)
        }
    }
}

fn split(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    split(s)
        .into_iter()
        .map(|x| x.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {x:?}"))))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_plant(s: &str) -> Result<PlantModel64> {
    if s == "spyder-1a" {
        return Ok(PlantModel64::spyder_1a());
    }
    let f = File::open(s).map_err(|e| Error::Io(format!("plant {s}: {e} (expected spyder-1a or a Bode CSV)")))?;
    PlantModel64::from_frf_csv(s, BufReader::new(f)).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{s}: {m}")),
        e => e,
    })
}

fn emit(c: &Common, body: &[u8]) -> Result<()> {
    match &c.out {
        Some(p) => write_atomic(p, body),
        None => Ok(std::io::stdout().lock().write_all(body)?),
    }
}

fn to_json(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn bode_body(format: Format, rows: &[BodeRow], baseline: Option<&[BodeRow]>) -> Result<Vec<u8>> {
    let extra: Vec<(&str, Vec<f64>)> = match baseline {
        Some(b) => vec![
            ("linear_mag_db", b.iter().map(|r| r.mag_db).collect()),
            ("linear_phase_deg", b.iter().map(|r| r.phase_deg).collect()),
        ],
        None => Vec::new(),
    };
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_bode_csv(&mut buf, rows, &extra)?;
            Ok(buf)
        }
        Format::Json => {
            let mut obj = serde_json::Map::new();
            obj.insert("freq_hz".into(), json!(rows.iter().map(|r| r.freq_hz).collect::<Vec<_>>()));
            obj.insert("mag_db".into(), json!(rows.iter().map(|r| r.mag_db).collect::<Vec<_>>()));
            obj.insert("phase_deg".into(), json!(rows.iter().map(|r| r.phase_deg).collect::<Vec<_>>()));
            for (h, col) in extra {
                obj.insert(h.into(), json!(col));
            }
            to_json(&obj)
        }
    }
}

fn bode(c: &Common, spec: &Path, grid: &GridArgs, baseline: bool) -> Result<u8> {
    let file: ElementSpecFile = read_json(spec)?;
    let ctrl = make_element(&file.to_spec::<f64>()?)?;
    let grid = grid.grid()?;
    let rows = bode_rows(&df_sweep(&ctrl, &grid).complete()?);
    let base = match baseline {
        true => Some(bode_rows(&sweep_with(&grid, |w| linear_response(&ctrl.base, w)).complete()?)),
        false => None,
    };
    emit(c, &bode_body(c.format.unwrap_or(Format::Csv), &rows, base.as_deref())?)?;
    Ok(0)
}

fn cglp_bode(c: &Common, spec: &Path, grid: &GridArgs, baseline: bool) -> Result<u8> {
    let file: CgLpSpecFile = read_json(spec)?;
    let el = build_cglp(&file.to_spec::<f64>()?)?;
    let grid = grid.grid()?;
    let rows = bode_rows(&sweep_with(&grid, |w| el.response(w)).complete()?);
    let base = match baseline {
        true => Some(bode_rows(&sweep_with(&grid, |w| linear_response(&el.realization.base, w)).complete()?)),
        false => None,
    };
    emit(c, &bode_body(c.format.unwrap_or(Format::Csv), &rows, base.as_deref())?)?;
    Ok(0)
}

fn alpha(c: &Common, kind: KindArg, beta_r: f64, gammas: &str, threshold: bool) -> Result<u8> {
    let gammas = parse_list(gammas)?;
    if gammas.is_empty() {
        return Err(Error::InvalidParameter("no gamma values".into()));
    }
    let kind = match kind {
        KindArg::Gfore => ElementKind::Gfore,
        KindArg::Gsore => ElementKind::Gsore,
        KindArg::Ci => return Err(Error::InvalidParameter("the Clegg integrator has no corner to correct".into())),
    };
    let method = if threshold { AlphaMethod::ThresholdCrossing } else { AlphaMethod::LeastSquares };
    let table = describing::alpha_table(kind, beta_r, &gammas, method);
    let body = match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut b = String::from("gamma,alpha,error\n");
            for (g, a) in &table {
                match a {
                    Ok(a) => b += &format!("{g},{a},\n"),
                    Err(e) => b += &format!("{g},,\"{e}\"\n"),
                }
            }
            b.into_bytes()
        }
        Format::Json => {
            let rows: Vec<_> = table
                .iter()
                .map(|(g, a)| match a {
                    Ok(a) => json!({"gamma": g, "alpha": a}),
                    Err(e) => json!({"gamma": g, "alpha": null, "error": e.to_string()}),
                })
                .collect();
            to_json(&rows)?
        }
    };
    emit(c, &body)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn design(
    c: &Common,
    plant: &PlantModel64,
    wc_hz: f64,
    pm_deg: f64,
    req: &DesignRequest<f64>,
    mode: ModeArg,
    bode_out: Option<&Path>,
    grid: &GridArgs,
) -> Result<u8> {
    let wc = std::f64::consts::TAU * wc_hz;
    let d = match mode {
        ModeArg::Tracking => design_tracking_precision(plant, wc, pm_deg, req)?,
        ModeArg::Bandwidth => {
            let reference = design_tracking_precision(plant, wc, pm_deg, &DesignRequest { gamma: 1.0, ..*req })?;
            let wh = default_omega_high();
            let g_pre = open_loop_gain_db(&reference, plant, wh)?;
            design_bandwidth(plant, &reference, req.gamma, g_pre, wh)?
        }
    };
    let ol = bode_rows(&open_loop_df(&d, plant, &grid.grid()?).complete()?);
    let mut csv = Vec::new();
    write_bode_csv(&mut csv, &ol, &[])?;
    if let Some(p) = bode_out {
        write_atomic(p, &csv)?;
    }
    match c.format.unwrap_or(Format::Json) {
        Format::Json => emit(c, &to_json(&d)?)?,
        Format::Csv => emit(c, &csv)?,
    }
    Ok(0)
}

fn stability(c: &Common, d: &ControllerDesign64, plant: &PlantModel64, opts: &SearchOptions) -> Result<u8> {
    let cl = build_closed_loop(plant.state_space()?, &d.realize()?)?;
    let v = find_certificate(&cl, opts)?;
    let report = StabilityReport::new(&cl, &v);
    let body = match c.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let r = report.residuals;
            let beta = report.beta.as_ref().map(|b| b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"));
            let abscissa = report.eigs.iter().map(|e| e[0]).fold(f64::NEG_INFINITY, f64::max);
            format!(
                "verdict,min_eig_p,max_eig_lyap,constraint_norm,beta,spectral_abscissa\n{},{},{},{},{},{abscissa}\n",
                report.verdict,
                r.map(|r| r.min_eig_p.to_string()).unwrap_or_default(),
                r.map(|r| r.max_eig_lyap.to_string()).unwrap_or_default(),
                r.map(|r| r.constraint_norm.to_string()).unwrap_or_default(),
                beta.unwrap_or_default(),
            )
            .into_bytes()
        }
    };
    emit(c, &body)?;
    Ok(if matches!(v, Verdict::Infeasible { .. }) { 4 } else { 0 })
}

fn simulate_cmd(c: &Common, d: &ControllerDesign64, plant: &PlantModel64, cfg: &SimConfig<f64>, settle: Option<f64>) -> Result<u8> {
    let trace = simulate(d, plant, cfg)?;
    let body = match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut b = Vec::new();
            trace.write_csv(&mut b)?;
            b
        }
        Format::Json => {
            let skip = settle.unwrap_or_else(|| {
                let two = 2.0 * cfg.reference.period;
                if two < cfg.duration { two } else { 0.0 }
            });
            let measured = metrics_of(&trace, skip, ErrorSignal::Measured)?;
            let truth = metrics_of(&trace, skip, ErrorSignal::True)?;
            to_json(&json!({"settle_s": skip, "measured": measured, "true": truth}))?
        }
    };
    emit(c, &body)?;
    Ok(0)
}

fn tables(c: &Common, spec: &CampaignSpec, plant: &PlantModel64) -> Result<u8> {
    spec.validate()?;
    let (rows, report) = run_campaign(spec, plant, c.out.as_deref())?;
    if c.out.is_some() {
        return Ok(0);
    }
    let body = match c.format.unwrap_or(Format::Json) {
        Format::Json => report_json(&report)?,
        Format::Csv => {
            let mut b = Vec::new();
            write_design_table(&mut b, &rows)?;
            b.push(b'\n');
            write_performance_table(&mut b, &rows)?;
            b
        }
    };
    std::io::stdout().lock().write_all(&body)?;
    Ok(0)
}

fn lattice_element(kind: KindArg, gamma: f64) -> Result<ResetController64> {
    match kind {
        KindArg::Ci => generalized_integrator(gamma),
        KindArg::Gfore => make_element(&ElementSpec::gfore(1.0, gamma)),
        KindArg::Gsore => make_element(&ElementSpec::gsore(1.0, 1.0, gamma)),
    }
}

fn df_validate(c: &Common, kinds: &[KindArg], gammas: &[f64], grid: &FrequencyGrid<f64>, cycles: usize) -> Result<u8> {
    if kinds.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidParameter("empty lattice".into()));
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        let name = match kind {
            KindArg::Ci => "CI",
            KindArg::Gfore => "GFORE",
            KindArg::Gsore => "GSORE",
        };
        for &g in gammas {
            let ctrl = lattice_element(kind, g)?;
            for &w in grid.omegas() {
                let df = df_response(&ctrl, w).ok();
                let fh = first_harmonic(&ctrl, w, cycles).ok();
                let err = match (df, fh) {
                    (Some(a), Some(b)) => Some((b - a).norm() / a.norm()),
                    _ => None,
                };
                rows.push((name, g, w, df, fh, err));
            }
        }
    }
    let mag = |z: Option<Cplx<f64>>| z.map(cabs);
    let ph = |z: Option<Cplx<f64>>| z.map(|z| carg(z).to_degrees());
    let body = match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into());
            let mut b = String::from("family,gamma,omega,df_mag,oracle_mag,df_phase,oracle_phase,err\n");
            for (name, g, w, df, fh, err) in &rows {
                b += &format!(
                    "{name},{g},{w},{},{},{},{},{}\n",
                    cell(mag(*df)),
                    cell(mag(*fh)),
                    cell(ph(*df)),
                    cell(ph(*fh)),
                    cell(*err)
                );
            }
            b.into_bytes()
        }
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(name, g, w, df, fh, err)| {
                    json!({"family": name, "gamma": g, "omega": w, "df_mag": mag(*df), "oracle_mag": mag(*fh),
                           "df_phase": ph(*df), "oracle_phase": ph(*fh), "err": err})
                })
                .collect();
            to_json(&v)?
        }
    };
    emit(c, &body)?;
    Ok(0)
}
