//! State-space systems, reset controllers and the reset element families.
//!
//! A [`ResetController`] stores its states with the resetting block first and
//! the non-resetting block after it. Its reset matrix is the identity on the
//! non-resetting block.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_checked, to_complex};
use crate::scalar::{Cplx, Real};

/// Linear time-invariant system `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<T: Real> StateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        let finite = a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).all(|x| x.is_finite_val());
        if !finite {
            return Err(Error::NonFinite("state-space matrices"));
        }
        Ok(Self { a, b, c, d })
    }

    /// SISO constructor from row-major slices.
    pub fn siso(n: usize, a: &[T], b: &[T], c: &[T], d: T) -> Result<Self> {
        if a.len() != n * n || b.len() != n || c.len() != n {
            return Err(Error::Dimension("siso slices do not match order".into()));
        }
        Self::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_row_slice(n, 1, b),
            DMatrix::from_row_slice(1, n, c),
            DMatrix::from_element(1, 1, d),
        )
    }

    /// Static gain `k` with no states.
    pub fn gain(k: T) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.inputs() == 1 && self.outputs() == 1
    }

    /// `C(jωI − A)⁻¹B + D` for a SISO system.
    pub fn response(&self, omega: T) -> Result<Cplx<T>> {
        linear_response(self, omega)
    }

    /// Cascade `self` then `right`: `right(self(u))`.
    pub fn series(&self, right: &StateSpace<T>) -> Result<StateSpace<T>> {
        if self.outputs() != right.inputs() {
            return Err(Error::Dimension(format!(
                "series: left has {} outputs, right has {} inputs",
                self.outputs(),
                right.inputs()
            )));
        }
        let (n1, n2) = (self.order(), right.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&right.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&right.b * &self.c));
        let mut b = DMatrix::zeros(n, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&(&right.b * &self.d));
        let mut c = DMatrix::zeros(right.outputs(), n);
        c.view_mut((0, 0), (right.outputs(), n1)).copy_from(&(&right.d * &self.c));
        c.view_mut((0, n1), (right.outputs(), n2)).copy_from(&right.c);
        let d = &right.d * &self.d;
        StateSpace::new(a, b, c, d)
    }

    pub fn scaled(&self, k: T) -> StateSpace<T> {
        StateSpace { a: self.a.clone(), b: self.b.clone(), c: &self.c * k, d: &self.d * k }
    }

    /// Largest corner (eigenvalue modulus) of the dynamics.
    pub fn fastest_mode(&self) -> T {
        crate::linalg::spectral_radius(&self.a)
    }

    /// Steady-state gain `D − C A⁻¹ B`.
    pub fn dc_gain(&self) -> Result<T> {
        if self.order() == 0 {
            return Ok(self.d[(0, 0)]);
        }
        let x = solve_checked(self.a.clone(), &self.b, "A at DC", 0.0)?;
        Ok(self.d[(0, 0)] - (&self.c * x)[(0, 0)])
    }
}

/// `C(jωI − A)⁻¹B + D` for a SISO system.
pub fn linear_response<T: Real>(sys: &StateSpace<T>, omega: T) -> Result<Cplx<T>> {
    if !sys.is_siso() {
        return Err(Error::Dimension("linear_response expects a SISO system".into()));
    }
    let n = sys.order();
    let d = Cplx::new(sys.d[(0, 0)], T::zero());
    if n == 0 {
        return Ok(d);
    }
    let jw = Cplx::new(T::zero(), omega);
    let m = DMatrix::<Cplx<T>>::identity(n, n) * jw - to_complex(&sys.a);
    let x = solve_checked(m, &to_complex(&sys.b), "jωI − A", omega.as_f64())?;
    Ok((to_complex(&sys.c) * x)[(0, 0)] + d)
}

/// Reset controller: base linear system plus after-reset map `x⁺ = A_ρ x`
/// applied whenever the controller input crosses zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetController<T: Real> {
    pub base: StateSpace<T>,
    pub a_rho: DMatrix<T>,
    /// Number of resetting states; they occupy the first `n_r` positions.
    pub n_r: usize,
}

impl<T: Real> ResetController<T> {
    pub fn new(base: StateSpace<T>, a_rho: DMatrix<T>, n_r: usize) -> Result<Self> {
        if !base.is_siso() {
            return Err(Error::Dimension("reset controllers are SISO".into()));
        }
        let n = base.order();
        if a_rho.nrows() != n || a_rho.ncols() != n {
            return Err(Error::Dimension(format!("A_rho is {}x{}, expected {n}x{n}", a_rho.nrows(), a_rho.ncols())));
        }
        if n_r > n {
            return Err(Error::Dimension(format!("n_r = {n_r} exceeds order {n}")));
        }
        for i in n_r..n {
            for j in 0..n {
                let want = if i == j { T::one() } else { T::zero() };
                if a_rho[(i, j)] != want || a_rho[(j, i)] != want {
                    return Err(Error::InvalidParameter(format!(
                        "A_rho must be identity on non-resetting state {i}"
                    )));
                }
            }
        }
        Ok(Self { base, a_rho, n_r })
    }

    /// Linear system viewed as a reset controller without resetting states.
    pub fn linear(base: StateSpace<T>) -> Result<Self> {
        let n = base.order();
        Self::new(base, DMatrix::identity(n, n), 0)
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn n_nr(&self) -> usize {
        self.order() - self.n_r
    }

    /// True when the reset map is the identity, so resets never change the state.
    pub fn is_linear(&self) -> bool {
        let n = self.order();
        self.a_rho == DMatrix::identity(n, n)
    }

    /// Same controller with an output gain `k`.
    pub fn scaled(&self, k: T) -> Self {
        Self { base: self.base.scaled(k), a_rho: self.a_rho.clone(), n_r: self.n_r }
    }
}

impl<T: Real> From<StateSpace<T>> for ResetController<T> {
    fn from(ss: StateSpace<T>) -> Self {
        let n = ss.order();
        Self { base: ss, a_rho: DMatrix::identity(n, n), n_r: 0 }
    }
}

/// Cascade a (reset) controller with a linear system on its output.
///
/// The appended states are non-resetting; `A_ρ` is extended with the identity.
pub fn series<T: Real>(left: impl Into<ResetController<T>>, right: &StateSpace<T>) -> Result<ResetController<T>> {
    let left = left.into();
    let base = left.base.series(right)?;
    let n1 = left.order();
    let n = base.order();
    let mut a_rho = DMatrix::identity(n, n);
    a_rho.view_mut((0, 0), (n1, n1)).copy_from(&left.a_rho);
    ResetController::new(base, a_rho, left.n_r)
}

/// Reset element families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ElementKind {
    Ci,
    Fore,
    Gfore,
    Sore,
    Gsore,
}

impl ElementKind {
    pub fn order(self) -> usize {
        match self {
            ElementKind::Ci | ElementKind::Fore | ElementKind::Gfore => 1,
            ElementKind::Sore | ElementKind::Gsore => 2,
        }
    }

    pub fn has_corner(self) -> bool {
        !matches!(self, ElementKind::Ci)
    }

    pub fn is_generalized(self) -> bool {
        matches!(self, ElementKind::Gfore | ElementKind::Gsore)
    }
}

/// Parameters of a reset element. Frequencies are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementSpec<T: Real> {
    pub kind: ElementKind,
    pub omega_r: Option<T>,
    pub beta_r: Option<T>,
    pub gamma: T,
}

impl<T: Real> ElementSpec<T> {
    pub fn ci() -> Self {
        Self { kind: ElementKind::Ci, omega_r: None, beta_r: None, gamma: T::zero() }
    }

    pub fn fore(omega_r: T) -> Self {
        Self { kind: ElementKind::Fore, omega_r: Some(omega_r), beta_r: None, gamma: T::zero() }
    }

    pub fn gfore(omega_r: T, gamma: T) -> Self {
        Self { kind: ElementKind::Gfore, omega_r: Some(omega_r), beta_r: None, gamma }
    }

    pub fn sore(omega_r: T, beta_r: T) -> Self {
        Self { kind: ElementKind::Sore, omega_r: Some(omega_r), beta_r: Some(beta_r), gamma: T::zero() }
    }

    pub fn gsore(omega_r: T, beta_r: T, gamma: T) -> Self {
        Self { kind: ElementKind::Gsore, omega_r: Some(omega_r), beta_r: Some(beta_r), gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.abs() > T::one() || !self.gamma.is_finite_val() {
            return Err(Error::InvalidParameter(format!("|gamma| = {} > 1", self.gamma)));
        }
        if !self.kind.is_generalized() && self.gamma != T::zero() {
            return Err(Error::InvalidParameter(format!("{:?} uses full reset (gamma = 0)", self.kind)));
        }
        match (self.kind.has_corner(), self.omega_r) {
            (true, Some(w)) if w > T::zero() && w.is_finite_val() => {}
            (true, Some(w)) => return Err(Error::InvalidParameter(format!("omega_r = {w} must be positive"))),
            (true, None) => return Err(Error::InvalidParameter(format!("{:?} needs omega_r", self.kind))),
            (false, Some(_)) => return Err(Error::InvalidParameter("CI has no corner frequency".into())),
            (false, None) => {}
        }
        if self.kind.order() == 2 {
            match self.beta_r {
                Some(b) if b >= T::zero() && b.is_finite_val() => {}
                Some(b) => return Err(Error::InvalidParameter(format!("beta_r = {b} must be >= 0"))),
                None => return Err(Error::InvalidParameter(format!("{:?} needs beta_r", self.kind))),
            }
        }
        Ok(())
    }

    /// Linear filter the element reduces to when it never resets.
    pub fn base_linear(&self) -> Result<StateSpace<T>> {
        Ok(make_element(self)?.base)
    }
}

/// Builds the reset controller of an element family.
pub fn make_element<T: Real>(spec: &ElementSpec<T>) -> Result<ResetController<T>> {
    spec.validate()?;
    let g = spec.gamma;
    match spec.kind {
        ElementKind::Ci => generalized_integrator(T::zero()),
        ElementKind::Fore | ElementKind::Gfore => {
            let w = spec.omega_r.unwrap();
            let base = StateSpace::siso(1, &[-w], &[w], &[T::one()], T::zero())?;
            ResetController::new(base, DMatrix::from_element(1, 1, g), 1)
        }
        ElementKind::Sore | ElementKind::Gsore => {
            let w = spec.omega_r.unwrap();
            let beta = spec.beta_r.unwrap();
            let two = T::lit(2.0);
            let base = StateSpace::siso(
                2,
                &[T::zero(), T::one(), -w * w, -two * beta * w],
                &[T::zero(), w * w],
                &[T::one(), T::zero()],
                T::zero(),
            )?;
            ResetController::new(base, DMatrix::identity(2, 2) * g, 2)
        }
    }
}

/// Clegg integrator `1/s` whose state resets to `γ` times its value.
pub fn generalized_integrator<T: Real>(gamma: T) -> Result<ResetController<T>> {
    if gamma.abs() > T::one() {
        return Err(Error::InvalidParameter(format!("|gamma| = {gamma} > 1")));
    }
    let base = StateSpace::siso(1, &[T::zero()], &[T::one()], &[T::one()], T::zero())?;
    ResetController::new(base, DMatrix::from_element(1, 1, gamma), 1)
}

/// Rational transfer function with coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction<T: Real> {
    pub num: Vec<T>,
    pub den: Vec<T>,
}

impl<T: Real> TransferFunction<T> {
    pub fn new(num: Vec<T>, den: Vec<T>) -> Result<Self> {
        let num = trim_leading(num);
        let den = trim_leading(den);
        if den.is_empty() {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        if num.is_empty() {
            return Err(Error::InvalidParameter("zero numerator".into()));
        }
        Ok(Self { num, den })
    }

    pub fn relative_degree(&self) -> isize {
        self.den.len() as isize - self.num.len() as isize
    }

    pub fn eval(&self, s: Cplx<T>) -> Cplx<T> {
        polyval(&self.num, s) / polyval(&self.den, s)
    }

    pub fn response(&self, omega: T) -> Cplx<T> {
        self.eval(Cplx::new(T::zero(), omega))
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Self::new(polymul(&self.num, &other.num), polymul(&self.den, &other.den))
    }

    /// Controllable-canonical realization; requires a proper function.
    pub fn to_state_space(&self) -> Result<StateSpace<T>> {
        if self.relative_degree() < 0 {
            return Err(Error::InvalidParameter("improper transfer function has no state-space form".into()));
        }
        let lead = self.den[0];
        let den: Vec<T> = self.den.iter().map(|&x| x / lead).collect();
        let n = den.len() - 1;
        let mut num = vec![T::zero(); n + 1 - self.num.len()];
        num.extend(self.num.iter().map(|&x| x / lead));
        let d = num[0];
        if n == 0 {
            return Ok(StateSpace::gain(d));
        }
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = T::one();
        }
        for j in 0..n {
            // den = s^n + den[1] s^{n-1} + ... + den[n]
            a[(n - 1, j)] = -den[n - j];
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = T::one();
        let mut c = DMatrix::zeros(1, n);
        for j in 0..n {
            c[(0, j)] = num[n - j] - den[n - j] * d;
        }
        StateSpace::new(a, b, c, DMatrix::from_element(1, 1, d))
    }
}

fn trim_leading<T: Real>(mut v: Vec<T>) -> Vec<T> {
    while v.len() > 1 && v[0] == T::zero() {
        v.remove(0);
    }
    if v.len() == 1 && v[0] == T::zero() {
        v.clear();
    }
    v
}

pub fn polyval<T: Real>(p: &[T], s: Cplx<T>) -> Cplx<T> {
    p.iter().fold(Cplx::new(T::zero(), T::zero()), |acc, &c| acc * s + Cplx::new(c, T::zero()))
}

pub fn polymul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// File form of an element: `{"kind": "GSORE", "omega_r_hz": 100.0, "beta_r": 1.0, "gamma": 0.4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpecFile {
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_r_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_r: Option<f64>,
    #[serde(default)]
    pub gamma: f64,
}

impl ElementSpecFile {
    pub fn to_spec<T: Real>(&self) -> Result<ElementSpec<T>> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let spec = ElementSpec {
            kind: self.kind,
            omega_r: self.omega_r_hz.map(|f| T::lit(two_pi * f)),
            beta_r: self.beta_r.map(T::lit),
            gamma: T::lit(self.gamma),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec<T: Real>(spec: &ElementSpec<T>) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        Self {
            kind: spec.kind,
            omega_r_hz: spec.omega_r.map(|w| w.as_f64() / two_pi),
            beta_r: spec.beta_r.map(|b| b.as_f64()),
            gamma: spec.gamma.as_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Cplx<f64>, b: Cplx<f64>, rel: f64) -> bool {
        (a - b).norm() <= rel * b.norm().max(1e-300)
    }

    #[test]
    fn ci_matrices() {
        let ci = make_element(&ElementSpec::<f64>::ci()).unwrap();
        assert_eq!(ci.base.a[(0, 0)], 0.0);
        assert_eq!(ci.base.b[(0, 0)], 1.0);
        assert_eq!(ci.base.c[(0, 0)], 1.0);
        assert_eq!(ci.base.d[(0, 0)], 0.0);
        assert_eq!(ci.a_rho[(0, 0)], 0.0);
        assert_eq!(ci.n_r, 1);
    }

    #[test]
    fn gfore_gamma_one_is_identity_reset() {
        let e = make_element(&ElementSpec::gfore(2.0 * PI * 100.0, 1.0)).unwrap();
        assert!(e.is_linear());
        assert_eq!(e.base.a[(0, 0)], -2.0 * PI * 100.0);
    }

    #[test]
    fn gsore_matrices_by_hand() {
        let e = make_element(&ElementSpec::gsore(1.0, 1.0, 0.5)).unwrap();
        assert_eq!(e.base.a.as_slice(), &[0.0, -1.0, 1.0, -2.0]); // column-major
        assert_eq!(e.base.b.as_slice(), &[0.0, 1.0]);
        assert_eq!(e.base.c.as_slice(), &[1.0, 0.0]);
        assert_eq!(e.a_rho, DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(make_element(&ElementSpec::gfore(0.0, 0.5)).is_err());
        assert!(make_element(&ElementSpec::gfore(-1.0, 0.5)).is_err());
        assert!(make_element(&ElementSpec::gfore(1.0, 1.5)).is_err());
        assert!(make_element(&ElementSpec::gsore(1.0, -0.1, 0.5)).is_err());
        let mut fore = ElementSpec::fore(1.0);
        fore.gamma = 0.3;
        assert!(make_element(&fore).is_err());
    }

    #[test]
    fn linear_response_corner_and_integrator() {
        let lpf = StateSpace::siso(1, &[-1.0], &[1.0], &[1.0], 0.0).unwrap();
        let g = lpf.response(1.0).unwrap();
        assert!(close(g, Cplx::new(0.5, -0.5), 1e-15));
        let int = StateSpace::siso(1, &[0.0], &[1.0], &[1.0], 0.0).unwrap();
        assert!(close(int.response(2.0).unwrap(), Cplx::new(0.0, -0.5), 1e-15));
        assert!(matches!(int.response(0.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn series_with_static_gain_scales_output() {
        let ci = make_element(&ElementSpec::<f64>::ci()).unwrap();
        let k = StateSpace::gain(3.0);
        let s = series(ci.clone(), &k).unwrap();
        assert_eq!(s.base.a, ci.base.a);
        assert_eq!(s.base.b, ci.base.b);
        assert_eq!(s.base.c[(0, 0)], 3.0);
        assert_eq!(s.a_rho, ci.a_rho);
    }

    #[test]
    fn series_extends_reset_matrix_with_identity() {
        let lag = make_element(&ElementSpec::gfore(1.0, 0.3)).unwrap();
        let lead = StateSpace::siso(1, &[-10.0], &[10.0], &[-9.0], 10.0).unwrap();
        let s = series(lag, &lead).unwrap();
        assert_eq!(s.n_r, 1);
        assert_eq!(s.n_nr(), 1);
        assert_eq!(s.a_rho, DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn series_of_linear_systems_multiplies_responses() {
        let lpf = StateSpace::siso(1, &[-2.0], &[2.0], &[1.0], 0.0).unwrap();
        let lead = StateSpace::siso(1, &[-50.0], &[50.0], &[-9.0], 10.0).unwrap();
        let s = lpf.series(&lead).unwrap();
        for w in crate::scalar::logspace(0.01, 1000.0, 20) {
            let want = lpf.response(w).unwrap() * lead.response(w).unwrap();
            assert!(close(s.response(w).unwrap(), want, 1e-10));
        }
    }

    #[test]
    fn transfer_function_realization() {
        let tf = TransferFunction::new(vec![1.429e8], vec![175.9, 7738.0, 1.361e6]).unwrap();
        let ss = tf.to_state_space().unwrap();
        for w in [1.0, 100.0, 628.0, 1e4] {
            assert!(close(ss.response(w).unwrap(), tf.response(w), 1e-12));
        }
        let biproper = TransferFunction::new(vec![2.0, 3.0], vec![1.0, 5.0]).unwrap();
        let ss = biproper.to_state_space().unwrap();
        assert!(close(ss.response(7.0).unwrap(), biproper.response(7.0), 1e-14));
        assert!(tf.inverse().unwrap().to_state_space().is_err());
    }

    #[test]
    fn element_file_roundtrip() {
        let json = r#"{"kind": "GSORE", "omega_r_hz": 100.0, "beta_r": 1.0, "gamma": 0.4}"#;
        let file: ElementSpecFile = serde_json::from_str(json).unwrap();
        let spec: ElementSpec<f64> = file.to_spec().unwrap();
        assert!((spec.omega_r.unwrap() - 2.0 * PI * 100.0).abs() < 1e-12);
        assert_eq!(ElementSpecFile::from_spec(&spec).kind, ElementKind::Gsore);
    }
}
