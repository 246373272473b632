use std::f64::consts::TAU;

use resetkit::describing::{bode_rows, write_bode_csv};
use resetkit::loop_shaping::{default_omega_high, lead_lag_phase_deg, measure_margins, open_loop_gain_db, reset_pi, LEADLAG_REFERENCE_DEG};
use resetkit::*;

const GAMMAS: [f64; 6] = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0];

fn wc() -> f64 {
    TAU * 100.0
}

fn design(f: Family, g: f64) -> ControllerDesign64 {
    design_tracking_precision(&PlantModel64::spyder_1a(), wc(), 30.0, &DesignRequest::new(f, g)).unwrap()
}

#[test]
fn rules_of_thumb_corners() {
    let p = PidSpec::rules_of_thumb(1.0, wc(), 2.9);
    p.validate().unwrap();
    assert!(p.omega_i < p.omega_d && p.omega_d < p.omega_t && p.omega_t < p.omega_f);
    assert!((p.omega_d - wc() / 2.9).abs() < 1e-9);
    assert!((p.omega_t - wc() * 2.9).abs() < 1e-9);
    assert!(PidSpec::rules_of_thumb(1.0, wc(), 20.0).validate().is_err());
}

#[test]
fn pid_response_shape() {
    let p: PidSpec<f64> = PidSpec { k_p: 1.0, omega_i: 1.0, omega_d: 1e3, omega_t: 1e4, omega_f: 1e6 };
    assert!((cabs(p.pi_factor(1.0)) - 2f64.sqrt()).abs() < 1e-12);
    let hi: PidSpec<f64> = PidSpec { k_p: 1.0, omega_i: 1.0, omega_d: 10.0, omega_t: 20.0, omega_f: 50.0 };
    let m1 = db(cabs(pid_response(&hi, 1e5).unwrap()));
    let m2 = db(cabs(pid_response(&hi, 1e6).unwrap()));
    assert!((m2 - m1 + 20.0).abs() < 0.01);
    assert!(pid_response(&hi, 0.0).is_err());
    let tf = hi.tf().unwrap();
    for w in logspace(0.1, 1e4, 12) {
        assert!((tf.response(w) - pid_response(&hi, w).unwrap()).norm() < 1e-10 * tf.response(w).norm());
    }
}

#[test]
fn scale_a_from_required_lead() {
    assert!((solve_scale_a::<f64>(LEADLAG_REFERENCE_DEG).unwrap() - 2.90).abs() < 0.01);
    assert!((solve_scale_a::<f64>(45.0).unwrap() - 2.414).abs() < 0.01);
    assert!(matches!(solve_scale_a(0.0), Err(Error::Infeasible(_))));
    assert!(matches!(solve_scale_a(95.0), Err(Error::Infeasible(_))));
    for a in [1.1, 2.0, 7.5] {
        assert!((solve_scale_a::<f64>(lead_lag_phase_deg(a)).unwrap() - a).abs() < 1e-6);
    }
}

#[test]
fn linear_design_crosses_at_the_requested_bandwidth() {
    let d = design(Family::Linear, 1.0);
    let plant = PlantModel64::spyder_1a();
    let l = plant.response(wc()).unwrap() * d.controller_response(wc()).unwrap();
    assert!(db(cabs(l)).abs() < 0.05);
    assert!((carg(l).to_degrees() + 150.0).abs() < 0.5);
    assert!((d.achieved_pm_deg - 30.0).abs() < 0.5);
}

#[test]
fn every_design_meets_its_margins() {
    let plant = PlantModel64::spyder_1a();
    let grid = FrequencyGrid::log_hz(10.0, 1000.0, 400).unwrap();
    for f in Family::ALL {
        for g in GAMMAS {
            let d = design(f, g);
            let ol = open_loop_df(&d, &plant, &grid).complete().unwrap();
            let (w, pm) = measure_margins(&d, &plant).unwrap();
            assert!((w / wc() - 1.0).abs() < 0.01, "{} {g}: crossover {} Hz", f.name(), w / TAU);
            assert!((pm - 30.0).abs() < 0.5, "{} {g}: PM {pm}", f.name());
            // the gridded sweep brackets 0 dB around 100 Hz
            let mags = ol.magnitudes_db();
            let k = ol.grid.omegas().partition_point(|x| *x < wc());
            assert!(mags[k - 1] > 0.0 && mags[k] < 0.05, "{} {g}", f.name());
        }
    }
}

#[test]
fn scale_a_falls_with_gamma() {
    for f in [Family::ResetIntegrator, Family::CglpGfore, Family::CglpGsore] {
        let a: Vec<f64> = GAMMAS.iter().map(|&g| design(f, g).scale_a).collect();
        assert!(a.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{}: {a:?}", f.name());
        assert!(a[5] < a[0]);
    }
}

#[test]
fn leadlag_only_accounting_reproduces_the_linear_baseline() {
    let req = DesignRequest::new(Family::CglpGfore, 1.0)
        .with_accounting(PhaseAccounting::LeadLagOnly { reference_deg: LEADLAG_REFERENCE_DEG });
    let d = design_tracking_precision(&PlantModel64::spyder_1a(), wc(), 30.0, &req).unwrap();
    assert!((d.scale_a - 2.90).abs() < 0.02);
}

#[test]
fn reset_integrator_gains_phase_over_its_linear_twin() {
    // DF of 1 + ω_i/s with the integrator resetting is 1 + ω_i·DF_CI
    let w_i = 10.0;
    let ri = reset_pi::<f64>(w_i, 0.0).unwrap();
    for w in [30.0, 100.0, 1000.0] {
        let part = df_response(&ri, w).unwrap() - Cplx::new(1.0, 0.0);
        assert!((carg(part).to_degrees() + 38.15).abs() < 0.01);
    }
    assert!(design(Family::ResetIntegrator, 0.0).scale_a < design(Family::ResetIntegrator, 1.0).scale_a);
}

#[test]
fn bandwidth_design_fixed_point_and_gain_match() {
    let plant = PlantModel64::spyder_1a();
    let reference = design(Family::CglpGfore, 1.0);
    let wh = default_omega_high::<f64>();
    let g_pre = open_loop_gain_db(&reference, &plant, wh).unwrap();
    let same = design_bandwidth(&plant, &reference, 1.0, g_pre, wh).unwrap();
    assert!((same.bandwidth_hz() - 100.0).abs() < 1e-6);
    assert!((same.scale_a - reference.scale_a).abs() < 1e-9);
    let d = design_bandwidth(&plant, &reference, 0.4, g_pre, wh).unwrap();
    assert!((open_loop_gain_db(&d, &plant, wh).unwrap() - g_pre).abs() < 0.1);
    assert!(d.bandwidth_hz() > 100.0);
    assert!((d.achieved_pm_deg - 30.0).abs() < 0.5);
}

#[test]
fn frf_plant_gives_the_same_design() {
    let model = PlantModel64::spyder_1a();
    let grid = FrequencyGrid::log_hz(1.0, 20_000.0, 2000).unwrap();
    let ss = model.state_space().unwrap();
    let resp = describing::sweep_with(&grid, |w| ss.response(w)).complete().unwrap();
    let mut csv = Vec::new();
    write_bode_csv(&mut csv, &bode_rows(&resp), &[]).unwrap();
    let frf = PlantModel64::from_frf_csv("measured", csv.as_slice()).unwrap();
    for f in [Family::Linear, Family::CglpGsore] {
        let req = DesignRequest::new(f, 0.4);
        let a = design_tracking_precision(&model, wc(), 30.0, &req).unwrap();
        let b = design_tracking_precision(&frf, wc(), 30.0, &req).unwrap();
        assert!((a.scale_a - b.scale_a).abs() < 1e-3 * a.scale_a, "{} vs {}", a.scale_a, b.scale_a);
        assert!((a.pid.k_p - b.pid.k_p).abs() < 1e-3 * a.pid.k_p);
    }
    assert!(frf.state_space().is_err());
}

#[test]
fn invalid_requests() {
    let plant = PlantModel64::spyder_1a();
    let req = DesignRequest::new(Family::CglpGfore, 0.5);
    assert!(design_tracking_precision(&plant, -1.0, 30.0, &req).is_err());
    assert!(design_tracking_precision(&plant, wc(), 200.0, &req).is_err());
    assert!(design_tracking_precision(&plant, wc(), 30.0, &DesignRequest::new(Family::CglpGfore, 1.5)).is_err());
    // more phase than a lead-lag can give
    assert!(matches!(design_tracking_precision(&plant, wc(), 120.0, &req), Err(Error::Infeasible(_))));
    assert!(Family::parse("cglp-gsore").is_ok());
    assert!(Family::parse("pid").is_err());
}

#[test]
fn design_json_round_trip() {
    let d = design(Family::CglpGsore, 0.4);
    let text = serde_json::to_string(&d).unwrap();
    let back: ControllerDesign64 = serde_json::from_str(&text).unwrap();
    assert_eq!(back, d);
    let r = back.realize().unwrap();
    assert_eq!(r.n_r, 2);
    for w in [wc() / 3.0, wc(), 3.0 * wc()] {
        let a = df_response(&r, w).unwrap();
        let b = d.controller_response(w).unwrap();
        assert!((a - b).norm() < 1e-8 * b.norm());
    }
}
