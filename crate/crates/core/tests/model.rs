use nalgebra::DMatrix;
use resetkit::*;

fn rel(a: Cplx<f64>, b: Cplx<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn clegg_integrator_matrices() {
    let ci = make_element(&ElementSpec64::ci()).unwrap();
    assert_eq!(ci.base.a, DMatrix::from_element(1, 1, 0.0));
    assert_eq!(ci.base.b, DMatrix::from_element(1, 1, 1.0));
    assert_eq!(ci.base.c, DMatrix::from_element(1, 1, 1.0));
    assert_eq!(ci.base.d, DMatrix::from_element(1, 1, 0.0));
    assert_eq!(ci.a_rho, DMatrix::from_element(1, 1, 0.0));
    assert_eq!(ci.n_r, 1);
}

#[test]
fn gsore_matrices_by_hand() {
    let g = make_element(&ElementSpec64::gsore(1.0, 1.0, 0.5)).unwrap();
    assert_eq!(g.base.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]));
    assert_eq!(g.base.b, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    assert_eq!(g.base.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    assert_eq!(g.a_rho, DMatrix::identity(2, 2) * 0.5);
}

#[test]
fn gfore_gamma_one_is_a_noop_reset() {
    let g = make_element(&ElementSpec64::gfore(std::f64::consts::TAU * 100.0, 1.0)).unwrap();
    assert!(g.is_linear());
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(make_element(&ElementSpec64::gfore(0.0, 0.5)).is_err());
    assert!(make_element(&ElementSpec64::gfore(-3.0, 0.5)).is_err());
    assert!(make_element(&ElementSpec64::gfore(1.0, 1.2)).is_err());
    assert!(make_element(&ElementSpec64::gsore(1.0, -0.1, 0.0)).is_err());
    let mut fore = ElementSpec64::fore(1.0);
    fore.gamma = 0.3;
    assert!(make_element(&fore).is_err());
}

#[test]
fn series_with_static_gain_scales_output() {
    let ci = make_element(&ElementSpec64::ci()).unwrap();
    let k = 3.5;
    let s = series(ci.clone(), &StateSpace64::gain(k)).unwrap();
    assert_eq!(s.base.a, ci.base.a);
    assert_eq!(s.base.b, ci.base.b);
    assert_eq!(s.base.c, DMatrix::from_element(1, 1, k));
    assert_eq!(s.a_rho, ci.a_rho);
}

#[test]
fn series_gfore_then_lead_keeps_lead_linear() {
    let gf = make_element(&ElementSpec64::gfore(2.0, 0.3)).unwrap();
    let lead = StateSpace64::siso(1, &[-50.0], &[1.0], &[-48.0], 25.0).unwrap();
    let s = series(gf, &lead).unwrap();
    assert_eq!(s.n_r, 1);
    assert_eq!(s.n_nr(), 1);
    assert_eq!(s.a_rho, DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 1.0]));
}

#[test]
fn lti_series_is_the_product() {
    let lpf = StateSpace64::siso(1, &[-4.0], &[4.0], &[1.0], 0.0).unwrap();
    let lead = TransferFunction::new(vec![0.5, 1.0], vec![0.01, 1.0]).unwrap().to_state_space().unwrap();
    let s = lpf.series(&lead).unwrap();
    for w in logspace(0.01, 1e4, 20) {
        let want = lpf.response(w).unwrap() * lead.response(w).unwrap();
        assert!(rel(s.response(w).unwrap(), want) < 1e-10, "w = {w}");
    }
}

#[test]
fn series_is_associative_in_frequency() {
    let a = StateSpace64::siso(1, &[-1.0], &[1.0], &[2.0], 0.5).unwrap();
    let b = StateSpace64::siso(2, &[0.0, 1.0, -9.0, -0.6], &[0.0, 9.0], &[1.0, 0.0], 0.0).unwrap();
    let c = TransferFunction::new(vec![1.0, 3.0], vec![1.0, 30.0]).unwrap().to_state_space().unwrap();
    let left = a.series(&b).unwrap().series(&c).unwrap();
    let right = a.series(&b.series(&c).unwrap()).unwrap();
    for w in logspace(0.05, 500.0, 25) {
        assert!(rel(left.response(w).unwrap(), right.response(w).unwrap()) < 1e-10);
    }
}

#[test]
fn textbook_responses() {
    let lpf = StateSpace64::siso(1, &[-1.0], &[1.0], &[1.0], 0.0).unwrap();
    let g = linear_response(&lpf, 1.0).unwrap();
    assert!((g - Cplx::new(0.5, -0.5)).norm() < 1e-15);
    assert!((db(cabs(g)) + 3.0103).abs() < 1e-4);
    let int = StateSpace64::siso(1, &[0.0], &[1.0], &[1.0], 0.0).unwrap();
    assert!((linear_response(&int, 2.0).unwrap() - Cplx::new(0.0, -0.5)).norm() < 1e-15);
}

#[test]
fn plant_dc_gain() {
    let p = PlantModel64::spyder_1a();
    let dc = p.state_space().unwrap().dc_gain().unwrap();
    assert!((dc - 1.429e8 / 1.361e6).abs() < 1e-9);
    assert!((dc - 105.0).abs() < 0.01);
    assert!((db(dc) - 40.4).abs() < 0.05);
    let tf = p.transfer_function().unwrap();
    for w in logspace(1.0, 1e5, 10) {
        assert!(rel(p.response(w).unwrap(), tf.response(w)) < 1e-10);
    }
}

#[test]
fn gamma_one_elements_match_their_base_filters() {
    let specs = [
        ElementSpec64::gfore(7.0, 1.0),
        ElementSpec64::gsore(7.0, 0.3, 1.0),
        ElementSpec64::gsore(7.0, 0.0, 1.0),
    ];
    for s in specs {
        let ctrl = make_element(&s).unwrap();
        for w in logspace(0.1, 1000.0, 40) {
            let df = df_response(&ctrl, w).unwrap();
            let lin = linear_response(&s.base_linear().unwrap(), w).unwrap();
            assert!(rel(df, lin) < 1e-12, "{s:?} at {w}");
        }
    }
}

#[test]
fn non_resetting_block_must_be_identity() {
    let base = StateSpace64::siso(2, &[-1.0, 0.0, 1.0, -2.0], &[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap();
    let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]);
    assert!(ResetController::new(base.clone(), bad, 1).is_err());
    let good = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    assert!(ResetController::new(base, good, 1).is_ok());
}

#[test]
fn element_file_round_trip_in_hz() {
    let text = r#"{"kind":"GSORE","omega_r_hz":100.0,"beta_r":1.0,"gamma":0.4}"#;
    let file: ElementSpecFile = serde_json::from_str(text).unwrap();
    let spec: ElementSpec64 = file.to_spec().unwrap();
    assert!((spec.omega_r.unwrap() - std::f64::consts::TAU * 100.0).abs() < 1e-9);
    assert_eq!(spec.gamma, 0.4);
    let back = ElementSpecFile::from_spec(&spec);
    assert!((back.omega_r_hz.unwrap() - 100.0).abs() < 1e-12);
    assert!(serde_json::from_str::<ElementSpecFile>(r#"{"kind":"CI","gain":2}"#).is_err());
    let bad: ElementSpecFile = serde_json::from_str(r#"{"kind":"GFORE","omega_r_hz":-5.0,"gamma":0.1}"#).unwrap();
    assert!(bad.to_spec::<f64>().is_err());
}

#[test]
fn transfer_function_inverse_and_product() {
    let g = TransferFunction::new(vec![2.0, 1.0], vec![1.0, 3.0, 2.0]).unwrap();
    let gi = g.inverse().unwrap();
    let one = g.mul(&gi).unwrap();
    for w in [0.1, 1.0, 10.0] {
        assert!((one.response(w) - Cplx::new(1.0, 0.0)).norm() < 1e-12);
    }
    assert_eq!(g.relative_degree(), 1);
}

#[test]
fn single_precision_elements() {
    let g = make_element(&ElementSpec::<f32>::gfore(1.0, 1.0)).unwrap();
    let r = df_response(&g, 1.0f32).unwrap();
    assert!((r.re - 0.5).abs() < 1e-6 && (r.im + 0.5).abs() < 1e-6);
}
