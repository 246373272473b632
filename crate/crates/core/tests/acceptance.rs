//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line and
//! asserts at the stated tolerance.

use std::io::Write;
use std::f64::consts::TAU;
use std::time::Instant;

use resetkit::campaign::{report_json, row_key};
use resetkit::cglp::max_phase_lead;
use resetkit::loop_shaping::{default_omega_high, measure_margins, open_loop_gain_db, LEADLAG_REFERENCE_DEG};
use resetkit::*;

/// Written to the stdout handle so the line shows without `--nocapture`.
fn verdict(n: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "criterion {n}: {} {name} ({detail}) [{:.1} s]\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn wc() -> f64 {
    TAU * 100.0
}

const GAMMAS: [f64; 6] = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0];

fn lattice_element(kind: ElementKind, gamma: f64) -> Result<ResetController64> {
    match kind {
        ElementKind::Ci => generalized_integrator(gamma),
        ElementKind::Gfore => make_element(&ElementSpec::gfore(1.0, gamma)),
        _ => make_element(&ElementSpec::gsore(1.0, 1.0, gamma)),
    }
}

#[test]
fn criterion_01_oracle_lattice() {
    let t0 = Instant::now();
    let mut worst_mag = 0.0f64;
    let mut worst_ph = 0.0f64;
    let mut failures = Vec::new();
    let mut undefined = 0;
    for kind in [ElementKind::Ci, ElementKind::Gfore, ElementKind::Gsore] {
        for gamma in [-1.0, -0.5, 0.0, 0.4, 0.8, 1.0] {
            let ctrl = lattice_element(kind, gamma).unwrap();
            for w in logspace(0.1, 10.0, 10) {
                let df = df_response(&ctrl, w);
                let fh = first_harmonic(&ctrl, w, spectral::MIN_ORACLE_CYCLES);
                match (df, fh) {
                    (Ok(df), Ok(fh)) => {
                        let em = (cabs(fh) / cabs(df) - 1.0).abs();
                        let ep = (carg(fh / df)).to_degrees().abs();
                        worst_mag = worst_mag.max(em);
                        worst_ph = worst_ph.max(ep);
                        if em >= 0.02 || ep >= 1.0 {
                            failures.push(format!("{kind:?} g={gamma} w={w:.3}: {em:.4} {ep:.3} deg"));
                        }
                    }
                    // no periodic steady state: both sides must say so
                    (Err(_), Err(_)) => undefined += 1,
                    (a, b) => failures.push(format!("{kind:?} g={gamma} w={w:.3}: df {a:?} oracle {b:?}")),
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    verdict(
        1,
        "describing function vs first-harmonic oracle",
        pass,
        &format!("max mag err {:.3}%, max phase err {worst_ph:.3} deg, {undefined} points without steady state", worst_mag * 100.0),
        t0,
    );
    assert!(pass, "oracle mismatches: {failures:?}, runtime {secs:.1} s");
}

#[test]
fn criterion_02_clegg_integrator() {
    let t0 = Instant::now();
    let ci = make_element(&ElementSpec::ci()).unwrap();
    let ws: Vec<f64> = logspace(1e-2, 1e2, 41);
    let mut worst_phase = 0.0f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &w in &ws {
        let g = df_response(&ci, w).unwrap();
        worst_phase = worst_phase.max((carg(g).to_degrees() + 38.15).abs());
        xs.push(w.log10());
        ys.push(cabs(g).log10());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_phase <= 0.1 && (slope + 1.0).abs() <= 1e-3 && secs < 1.0;
    verdict(2, "Clegg integrator DF", pass, &format!("max |phase + 38.15| = {worst_phase:.4} deg, slope {slope:.6}"), t0);
    assert!(pass, "phase dev {worst_phase}, slope {slope}, {secs} s");
}

#[test]
fn criterion_03_linear_limit() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut elements: Vec<ResetController64> = vec![
        generalized_integrator(1.0).unwrap(),
        make_element(&ElementSpec::gfore(3.0, 1.0)).unwrap(),
        make_element(&ElementSpec::gsore(3.0, 0.5, 1.0)).unwrap(),
        build_cglp(&CgLpSpec::first(3.0, 30.0, 1.0)).unwrap().realization,
        build_cglp(&CgLpSpec::second(3.0, 30.0, 1.0, 1.0)).unwrap().realization,
    ];
    let plant = PlantModel64::spyder_1a();
    let designs: Vec<ControllerDesign64> = [Family::Linear, Family::ResetIntegrator, Family::CglpGfore, Family::CglpGsore]
        .iter()
        .map(|&f| design_tracking_precision(&plant, wc(), 30.0, &DesignRequest::new(f, 1.0)).unwrap())
        .collect();
    for d in &designs {
        elements.push(d.realize().unwrap());
    }
    for ctrl in &elements {
        for w in logspace(0.1, 1e4, 30) {
            let df = df_response(ctrl, w).unwrap();
            let lin = linear_response(&ctrl.base, w).unwrap();
            worst = worst.max((df - lin).norm() / lin.norm());
        }
    }
    // design-level responses against the LTI realization
    for d in &designs {
        let lin = d.realize().unwrap();
        for w in logspace(10.0, 1e5, 30) {
            let a = d.controller_response(w).unwrap();
            let b = linear_response(&lin.base, w).unwrap();
            worst = worst.max((a - b).norm() / b.norm());
        }
    }
    let mut bit_equal = true;
    let mut cfg = SimConfig::tracking();
    cfg.duration = 2.0;
    for d in &designs {
        let on = simulate(d, &plant, &cfg).unwrap();
        let mut off_cfg = cfg.clone();
        off_cfg.resets_enabled = false;
        let off = simulate(d, &plant, &off_cfg).unwrap();
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        bit_equal &= on.len() == off.len() && same(&on.y, &off.y) && same(&on.e, &off.e) && same(&on.u, &off.u);
        bit_equal &= !on.reset.iter().any(|&r| r);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-10 && bit_equal && secs < 10.0;
    verdict(3, "gamma = 1 linear limit", pass, &format!("max DF rel err {worst:.2e}, traces bit-equal {bit_equal}"), t0);
    assert!(pass, "rel err {worst}, bit_equal {bit_equal}, {secs} s");
}

#[test]
fn criterion_04_corner_shift() {
    let t0 = Instant::now();
    let gammas: Vec<f64> = (0..10).map(|k| 1.0 - 0.2 * k as f64).collect();
    let alphas: Vec<f64> = gammas.iter().map(|&g| compute_alpha(&ElementSpec::gsore(1.0, 1.0, g)).unwrap()).collect();
    let a0 = alphas[5];
    let monotone = alphas.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let secs = t0.elapsed().as_secs_f64();
    let value_ok = (a0 - 1.2).abs() <= 0.05;
    let pass = value_ok && monotone && secs < 30.0;
    let table: Vec<String> = gammas.iter().zip(&alphas).map(|(g, a)| format!("{g:.1}:{a:.3}")).collect();
    verdict(4, "GSORE corner shift", pass, &format!("alpha(0) = {a0:.4}, monotone {monotone}, [{}]", table.join(" ")), t0);
    assert!(value_ok, "alpha(GSORE, beta 1, gamma 0) = {a0}");
    assert!(monotone, "alpha not monotone in decreasing gamma: {table:?}");
}

#[test]
fn criterion_05_cglp_phase_lead() {
    let t0 = Instant::now();
    let first = build_cglp(&CgLpSpec::<f64>::first(1.0, 1e4, 0.0)).unwrap();
    let second = build_cglp(&CgLpSpec::<f64>::second(1.0, 1e4, 1.0, 0.0)).unwrap();
    let (_, p1) = max_phase_lead(&first, (1.0, 1e4), 400).unwrap();
    let (_, p2) = max_phase_lead(&second, (1.0, 1e4), 400).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = (p1 - 51.9).abs() <= 1.0 && (p2 - 128.1).abs() <= 2.0 && secs < 30.0;
    verdict(5, "CgLp phase-lead limits", pass, &format!("first order {p1:.2} deg, second order {p2:.2} deg"), t0);
    assert!(pass, "leads {p1}, {p2}");
}

#[test]
fn criterion_06_sore_resonance() {
    let t0 = Instant::now();
    let sore = make_element(&ElementSpec::gsore(1.0, 0.0, 0.0)).unwrap();
    let dc = db(cabs(df_response(&sore, 1e-3).unwrap()));
    let peak = logspace(0.05, 20.0, 600)
        .into_iter()
        .map(|w| db(cabs(df_response(&sore, w).unwrap())))
        .fold(f64::NEG_INFINITY, f64::max);
    let rise = peak - dc;
    let secs = t0.elapsed().as_secs_f64();
    let pass = rise < 10.0 && secs < 5.0;
    verdict(6, "undamped SORE resonance", pass, &format!("peak {rise:.2} dB above DC"), t0);
    assert!(pass, "peak {rise} dB");
}

const TABLE_A: [[f64; 3]; 6] = [
    [2.9, 2.9, 2.9],
    [2.35, 2.63, 2.27],
    [1.89, 2.43, 1.81],
    [1.52, 2.27, 1.46],
    [1.23, 2.12, 1.24],
    [1.01, 1.98, 1.09],
];

#[test]
fn criterion_07_tracking_designs() {
    let t0 = Instant::now();
    let plant = PlantModel64::spyder_1a();
    let families = [Family::ResetIntegrator, Family::CglpGfore, Family::CglpGsore];
    let mut problems = Vec::new();
    let mut within_table = 0;
    for (fi, &f) in families.iter().enumerate() {
        let mut prev_a = f64::INFINITY;
        for (gi, &g) in GAMMAS.iter().enumerate() {
            let d = design_tracking_precision(&plant, wc(), 30.0, &DesignRequest::new(f, g)).unwrap();
            let (w, pm) = measure_margins(&d, &plant).unwrap();
            let fc = w / TAU;
            if (fc / 100.0 - 1.0).abs() > 0.01 || (pm - 30.0).abs() > 0.5 {
                problems.push(format!("{} g={g}: crossover {fc:.3} Hz, PM {pm:.3}", f.name()));
            }
            if d.scale_a > prev_a + 1e-9 {
                problems.push(format!("{} g={g}: a {} rises above {}", f.name(), d.scale_a, prev_a));
            }
            prev_a = d.scale_a;
            let quoted = TABLE_A[gi][fi];
            if (d.scale_a - quoted).abs() <= 0.15 {
                within_table += 1;
            }
            println!("  table row {} gamma {g:.1}: a = {:.3} (table {quoted})", f.name(), d.scale_a);
        }
    }
    let ll = DesignRequest::new(Family::CglpGfore, 1.0)
        .with_accounting(PhaseAccounting::LeadLagOnly { reference_deg: LEADLAG_REFERENCE_DEG });
    let a1 = design_tracking_precision(&plant, wc(), 30.0, &ll).unwrap().scale_a;
    if (a1 - 2.90).abs() > 0.02 {
        problems.push(format!("lead-lag-only a(1) = {a1}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = problems.is_empty() && secs < 120.0;
    verdict(
        7,
        "tracking-mode design self-consistency",
        pass,
        &format!("lead-lag-only a(1) = {a1:.3}, {within_table}/18 scale values within 0.15 of the table (not gating)"),
        t0,
    );
    assert!(pass, "{problems:?}");
}

#[test]
fn criterion_08_bandwidth_designs() {
    let t0 = Instant::now();
    let plant = PlantModel64::spyder_1a();
    let wh = default_omega_high::<f64>();
    let reference = design_tracking_precision(&plant, wc(), 30.0, &DesignRequest::new(Family::CglpGfore, 1.0)).unwrap();
    let g_pre = open_loop_gain_db(&reference, &plant, wh).unwrap();
    let mut bws = vec![reference.bandwidth_hz()];
    let mut worst_match = 0.0f64;
    for &g in &GAMMAS[1..] {
        let d = design_bandwidth(&plant, &reference, g, g_pre, wh).unwrap();
        worst_match = worst_match.max((open_loop_gain_db(&d, &plant, wh).unwrap() - g_pre).abs());
        bws.push(d.bandwidth_hz());
    }
    let baseline_ok = (g_pre + 76.18).abs() <= 0.2;
    let monotone = bws.windows(2).all(|w| w[1] > w[0]);
    let end_ok = (bws[5] / 127.0 - 1.0).abs() <= 0.10;
    let match_ok = worst_match <= 0.1;
    let secs = t0.elapsed().as_secs_f64();
    let pass = baseline_ok && monotone && end_ok && match_ok && secs < 120.0;
    let list: Vec<String> = bws.iter().map(|b| format!("{b:.1}")).collect();
    verdict(
        8,
        "bandwidth-mode designs",
        pass,
        &format!("G_pre {g_pre:.2} dB, bandwidths [{}] Hz, worst G_pre mismatch {worst_match:.4} dB", list.join(", ")),
        t0,
    );
    assert!(match_ok, "G_pre mismatch {worst_match} dB");
    assert!(baseline_ok, "baseline gain at 10 kHz {g_pre} dB");
    assert!(monotone, "bandwidths not increasing: {bws:?}");
    assert!(end_ok, "gamma = 0 bandwidth {} Hz", bws[5]);
}

#[test]
fn criterion_09_stability_certificates() {
    let t0 = Instant::now();
    let plant = PlantModel64::spyder_1a();
    let ss = plant.state_space().unwrap().clone();
    let opts = SearchOptions::default();
    let mut designs = Vec::new();
    for f in [Family::CglpGfore, Family::CglpGsore] {
        for &g in &GAMMAS {
            designs.push(design_tracking_precision(&plant, wc(), 30.0, &DesignRequest::new(f, g)).unwrap());
        }
    }
    let reference = designs[0].clone();
    let g_pre = open_loop_gain_db(&reference, &plant, default_omega_high()).unwrap();
    for &g in &GAMMAS[1..] {
        designs.push(design_bandwidth(&plant, &reference, g, g_pre, default_omega_high()).unwrap());
    }
    let mut failed = Vec::new();
    for d in &designs {
        let cl = build_closed_loop(&ss, &d.realize().unwrap()).unwrap();
        match find_certificate(&cl, &opts).unwrap() {
            Verdict::Feasible(c) => {
                let (ok, _) = verify_certificate(&c.p, &c.beta, &c.p_rho, &cl);
                if !ok {
                    failed.push(format!("{} g={} bw={:.1}: certificate rejected", d.family.name(), d.gamma, d.bandwidth_hz()));
                }
            }
            v => failed.push(format!("{} g={} bw={:.1}: {}", d.family.name(), d.gamma, d.bandwidth_hz(), v.name())),
        }
    }
    let hot = designs[3].realize().unwrap().scaled(100.0);
    let hot_verdict = find_certificate(&build_closed_loop(&ss, &hot).unwrap(), &opts).unwrap();
    let destabilized_ok = matches!(hot_verdict, Verdict::Infeasible { .. });
    let secs = t0.elapsed().as_secs_f64();
    let pass = failed.is_empty() && destabilized_ok && secs < 300.0;
    verdict(
        9,
        "quadratic stability certificates",
        pass,
        &format!("{}/{} certified, gain x100 loop {}; failing: {failed:?}", designs.len() - failed.len(), designs.len(), hot_verdict.name()),
        t0,
    );
    assert!(destabilized_ok, "destabilized loop returned {}", hot_verdict.name());
    assert!(failed.is_empty(), "uncertified designs: {failed:?}");
}

fn entry<'a>(rep: &'a CampaignReport, f: Family, g: f64) -> &'a ReportEntry {
    &rep.entries[&row_key(f, g)]
}

#[test]
fn criterion_10_testbench_trends() {
    let t0 = Instant::now();
    let plant = PlantModel64::spyder_1a();
    let (_, rep) = run_campaign(&CampaignSpec::default(), &plant, None).unwrap();
    let lin = entry(&rep, Family::Linear, 1.0);
    let lin_track = lin.e_rms_tracking.unwrap();
    let lin_prec = lin.e_rms_precision.unwrap();

    let mut a_ok = true;
    let mut c_ok = true;
    let mut notes = Vec::new();
    for f in [Family::CglpGfore, Family::CglpGsore] {
        for g in [0.4, 0.6] {
            let e = entry(&rep, f, g).e_rms_tracking.unwrap();
            a_ok &= e <= lin_track;
            notes.push(format!("{} {g}: track {e:.3}", f.name()));
        }
        for &g in &GAMMAS[1..] {
            let e = entry(&rep, f, g).e_rms_precision.unwrap();
            c_ok &= e <= lin_prec;
        }
    }

    let mut detuned = CampaignSpec::default();
    detuned.families = vec![Family::Linear, Family::ResetIntegrator];
    detuned.sim.feedforward.gain_error = 0.1;
    detuned.check_stability = false;
    let (_, rep_d) = run_campaign(&detuned, &plant, None).unwrap();
    let lin_d = entry(&rep_d, Family::Linear, 1.0).e_rms_tracking.unwrap();
    let mut b_ok = true;
    let mut ri = Vec::new();
    for &g in &GAMMAS[1..] {
        let e = entry(&rep_d, Family::ResetIntegrator, g);
        let flag = e.limit_cycle_tracking == Some(true);
        let worse = e.e_rms_tracking.is_some_and(|x| x > lin_d);
        b_ok &= flag && worse;
        ri.push(format!("{g}:{:.2}/{flag}", e.e_rms_tracking.unwrap_or(f64::NAN)));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = a_ok && b_ok && c_ok && secs < 600.0;
    verdict(
        10,
        "virtual testbench trends",
        pass,
        &format!(
            "(a) {a_ok} linear {lin_track:.3} vs {notes:?}; (b) {b_ok} detuned linear {lin_d:.3}, reset integrator e_rms/limit cycle [{}]; (c) {c_ok} linear precision {lin_prec:.3}",
            ri.join(" ")
        ),
        t0,
    );
    assert!(a_ok, "(a) CgLp tracking not better than linear");
    assert!(c_ok, "(c) CgLp precision not better than linear");
    assert!(b_ok, "(b) reset-integrator limit cycle not reproduced: {ri:?}");
}

#[test]
fn criterion_11_determinism() {
    let t0 = Instant::now();
    let plant = PlantModel64::spyder_1a();
    let spec = CampaignSpec::default().with_seed(7);
    let base = std::env::temp_dir().join(format!("resetkit-acceptance-{}", std::process::id()));
    let dirs = [base.join("a"), base.join("b")];
    let mut bodies = Vec::new();
    for d in &dirs {
        let (_, rep) = run_campaign(&spec, &plant, Some(d)).unwrap();
        let file = std::fs::read(d.join("report.json")).unwrap();
        assert_eq!(file, report_json(&rep).unwrap());
        bodies.push(file);
    }
    let _ = std::fs::remove_dir_all(&base);
    let pass = bodies[0] == bodies[1];
    verdict(11, "campaign determinism", pass, &format!("{} byte report", bodies[0].len()), t0);
    assert!(pass, "reports differ between identical runs");
}
