//! Series PID, reset-integrator and CgLp-PID loop shaping.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::cglp::{build_cglp, CgLpElement, CgLpSpec};
use crate::describing::{df_response, read_bode_csv, sweep_with, FrequencyGrid, FrequencyResponse, Sweep};
use crate::error::{Error, Result};
use crate::model::{series, ResetController, StateSpace, TransferFunction};
use crate::scalar::{cabs, carg, db, logspace, Cplx, Real};

/// `K_p (s+ω_i)/s · (1+s/ω_d)/(1+s/ω_t) · 1/(1+s/ω_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PidSpec<T: Real> {
    pub k_p: T,
    pub omega_i: T,
    pub omega_d: T,
    pub omega_t: T,
    pub omega_f: T,
}

impl<T: Real> PidSpec<T> {
    /// Rules of thumb around `ω_c`: `ω_i = ω_c/10`, `ω_f = 10ω_c`,
    /// `ω_d = ω_c/a`, `ω_t = aω_c`.
    pub fn rules_of_thumb(k_p: T, omega_c: T, a: T) -> Self {
        let ten = T::lit(10.0);
        Self { k_p, omega_i: omega_c / ten, omega_d: omega_c / a, omega_t: omega_c * a, omega_f: omega_c * ten }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.omega_i > T::zero()
            && self.omega_i < self.omega_d
            && self.omega_d < self.omega_t
            && self.omega_t < self.omega_f
            && self.omega_f.is_finite_val()
            && self.k_p.is_finite_val();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "PID corners must satisfy 0 < w_i < w_d < w_t < w_f (got {}, {}, {}, {})",
                self.omega_i, self.omega_d, self.omega_t, self.omega_f
            )));
        }
        Ok(())
    }

    /// `(s+ω_i)/s`.
    pub fn pi_factor(&self, omega: T) -> Cplx<T> {
        let s = Cplx::new(T::zero(), omega);
        (s + Cplx::new(self.omega_i, T::zero())) / s
    }

    /// `(1+s/ω_d)/(1+s/ω_t)`.
    pub fn lead_lag_factor(&self, omega: T) -> Cplx<T> {
        Cplx::new(T::one(), omega / self.omega_d) / Cplx::new(T::one(), omega / self.omega_t)
    }

    /// `1/(1+s/ω_f)`.
    pub fn lpf_factor(&self, omega: T) -> Cplx<T> {
        Cplx::new(T::one(), T::zero()) / Cplx::new(T::one(), omega / self.omega_f)
    }

    /// `K_p` times lead-lag times low-pass (everything but the PI factor).
    pub fn tail_tf(&self) -> Result<TransferFunction<T>> {
        let (one, zero) = (T::one(), T::zero());
        let ll = TransferFunction::new(vec![one / self.omega_d, one], vec![one / self.omega_t, one])?;
        let lpf = TransferFunction::new(vec![self.k_p], vec![one / self.omega_f, one])?;
        let _ = zero;
        ll.mul(&lpf)
    }

    pub fn tf(&self) -> Result<TransferFunction<T>> {
        let pi = TransferFunction::new(vec![T::one(), self.omega_i], vec![T::one(), T::zero()])?;
        pi.mul(&self.tail_tf()?)
    }
}

pub fn pid_response<T: Real>(spec: &PidSpec<T>, omega: T) -> Result<Cplx<T>> {
    if !(omega > T::zero()) {
        return Err(Error::InvalidParameter(format!("PID response needs omega > 0, got {omega}")));
    }
    let k = Cplx::new(spec.k_p, T::zero());
    Ok(k * spec.pi_factor(omega) * spec.lead_lag_factor(omega) * spec.lpf_factor(omega))
}

/// Phase of the lead-lag factor at `ω_c` for scale `a`: `atan(a) − atan(1/a)`.
pub fn lead_lag_phase_deg<T: Real>(a: T) -> T {
    (a.atan() - (T::one() / a).atan()).to_degrees_val()
}

/// Smallest accepted scale; below it the lead-lag adds essentially no phase.
pub const MIN_SCALE_A: f64 = 1.001;

/// Scale `a` whose lead-lag supplies `required_lead_deg` at `ω_c`, by bisection.
pub fn solve_scale_a<T: Real>(required_lead_deg: T) -> Result<T> {
    if !required_lead_deg.is_finite_val() || required_lead_deg >= T::lit(90.0) {
        return Err(Error::Infeasible(format!(
            "required lead-lag phase {required_lead_deg:.3} deg is not below 90 deg"
        )));
    }
    let min_a = T::lit(MIN_SCALE_A);
    if required_lead_deg < lead_lag_phase_deg(min_a) {
        return Err(Error::Infeasible(format!(
            "required lead-lag phase {required_lead_deg:.3} deg needs a < {MIN_SCALE_A}"
        )));
    }
    let (mut lo, mut hi) = (min_a, T::lit(1e8));
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if lead_lag_phase_deg(mid) < required_lead_deg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - T::one() < T::eps() * T::lit(4.0) {
            break;
        }
    }
    let a = (lo * hi).sqrt();
    if (lead_lag_phase_deg(a) - required_lead_deg).abs() >= T::lit(0.01) {
        return Err(Error::NoConvergence(format!("scale a for {required_lead_deg} deg")));
    }
    Ok(a)
}

/// Controller families of the loop-shaping procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Linear,
    ResetIntegrator,
    CglpGfore,
    CglpGsore,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Linear, Family::ResetIntegrator, Family::CglpGfore, Family::CglpGsore];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::ResetIntegrator => "reset-integrator",
            Family::CglpGfore => "cglp-gfore",
            Family::CglpGsore => "cglp-gsore",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown family {s:?}")))
    }

    pub fn is_cglp(self) -> bool {
        matches!(self, Family::CglpGfore | Family::CglpGsore)
    }
}

/// How the scale `a` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PhaseAccounting {
    /// Open-loop phase at `ω_c` is exactly `−180° + PM`, counting every factor.
    FullPid,
    /// The lead-lag supplies `reference_deg` minus the extra phase the reset
    /// part gives over its linear (`γ = 1`) twin; other lags are ignored.
    LeadLagOnly { reference_deg: f64 },
}

impl Default for PhaseAccounting {
    fn default() -> Self {
        PhaseAccounting::FullPid
    }
}

/// Lead-lag requirement behind the `a = 2.9` linear baseline at PM 30°.
pub const LEADLAG_REFERENCE_DEG: f64 = 51.96;

/// Plant model: a parametric LTI system or measured frequency-response data.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel<T: Real> {
    Model { name: String, ss: StateSpace<T>, tf: Option<TransferFunction<T>> },
    Frf { name: String, data: FrequencyResponse<T> },
}

impl<T: Real> PlantModel<T> {
    /// `1.429e8 / (175.9 s² + 7738 s + 1.361e6)`.
    pub fn spyder_1a() -> Self {
        let m = T::lit(175.9);
        let b0 = T::lit(1.429e8) / m;
        let a1 = T::lit(7738.0) / m;
        let a0 = T::lit(1.361e6) / m;
        let ss = StateSpace::siso(2, &[T::zero(), T::one(), -a0, -a1], &[T::zero(), b0], &[T::one(), T::zero()], T::zero())
            .expect("static plant matrices");
        let tf = TransferFunction::new(vec![T::lit(1.429e8)], vec![m, T::lit(7738.0), T::lit(1.361e6)]).expect("static plant");
        PlantModel::Model { name: "spyder-1a".into(), ss, tf: Some(tf) }
    }

    pub fn from_state_space(name: impl Into<String>, ss: StateSpace<T>) -> Result<Self> {
        if !ss.is_siso() {
            return Err(Error::Dimension("plant must be SISO".into()));
        }
        Ok(PlantModel::Model { name: name.into(), ss, tf: None })
    }

    pub fn name(&self) -> &str {
        match self {
            PlantModel::Model { name, .. } | PlantModel::Frf { name, .. } => name,
        }
    }

    pub fn response(&self, omega: T) -> Result<Cplx<T>> {
        match self {
            PlantModel::Model { ss, .. } => ss.response(omega),
            PlantModel::Frf { data, .. } => Ok(data.interpolate(omega)),
        }
    }

    pub fn state_space(&self) -> Result<&StateSpace<T>> {
        match self {
            PlantModel::Model { ss, .. } => Ok(ss),
            PlantModel::Frf { name, .. } => Err(Error::InvalidParameter(format!("plant {name} is FRF data only"))),
        }
    }

    pub fn transfer_function(&self) -> Result<&TransferFunction<T>> {
        match self {
            PlantModel::Model { tf: Some(tf), .. } => Ok(tf),
            _ => Err(Error::InvalidParameter(format!("plant {} has no transfer function", self.name()))),
        }
    }
}

impl PlantModel<f64> {
    /// Measured plant from a Bode CSV (`freq_hz,mag_db,phase_deg`).
    pub fn from_frf_csv<R: BufRead>(name: impl Into<String>, r: R) -> Result<Self> {
        Ok(PlantModel::Frf { name: name.into(), data: read_bode_csv(r)? })
    }
}

/// Result of a CgLp-PID synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControllerDesign<T: Real> {
    pub family: Family,
    pub gamma: T,
    pub pid: PidSpec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cglp: Option<CgLpSpec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_integrator_gamma: Option<T>,
    pub omega_c: T,
    pub scale_a: T,
    pub achieved_pm_deg: T,
    /// Phase of the nonlinear part at `ω_c`.
    pub ph_nl_deg: T,
    pub accounting: PhaseAccounting,
}

impl<T: Real> ControllerDesign<T> {
    pub fn bandwidth_hz(&self) -> T {
        self.omega_c / T::two_pi()
    }

    fn cglp_element(&self) -> Result<Option<CgLpElement<T>>> {
        self.cglp.as_ref().map(build_cglp).transpose()
    }

    /// Complex gain of the controller at `ω` (describing function for the
    /// reset part, exact for the linear factors).
    pub fn controller_response(&self, omega: T) -> Result<Cplx<T>> {
        let cg = self.cglp_element()?;
        controller_response_with(self, cg.as_ref(), omega)
    }

    /// State-space realization with resetting states first.
    pub fn realize(&self) -> Result<ResetController<T>> {
        let pid = &self.pid;
        match (self.family, self.reset_integrator_gamma) {
            (Family::ResetIntegrator, Some(g)) => {
                let pi = reset_pi(pid.omega_i, g)?;
                series(pi, &pid.tail_tf()?.to_state_space()?)
            }
            _ => {
                let lin = pid.tf()?.to_state_space()?;
                match self.cglp_element()? {
                    Some(cg) => series(cg.realization, &lin),
                    None => ResetController::linear(lin),
                }
            }
        }
    }
}

/// `1 + ω_i/s` with only the integrator state resetting to `γ` times its value.
pub fn reset_pi<T: Real>(omega_i: T, gamma: T) -> Result<ResetController<T>> {
    if gamma.abs() > T::one() {
        return Err(Error::InvalidParameter(format!("|gamma| = {gamma} > 1")));
    }
    let base = StateSpace::siso(1, &[T::zero()], &[T::one()], &[omega_i], T::one())?;
    ResetController::new(base, nalgebra::DMatrix::from_element(1, 1, gamma), 1)
}

fn controller_response_with<T: Real>(d: &ControllerDesign<T>, cg: Option<&CgLpElement<T>>, omega: T) -> Result<Cplx<T>> {
    let pid = &d.pid;
    let k = Cplx::new(pid.k_p, T::zero());
    let tail = k * pid.lead_lag_factor(omega) * pid.lpf_factor(omega);
    let head = match (d.family, d.reset_integrator_gamma) {
        (Family::ResetIntegrator, Some(g)) => df_response(&reset_pi(pid.omega_i, g)?, omega)?,
        _ => {
            let pi = pid.pi_factor(omega);
            match cg {
                Some(c) => pi * c.response(omega)?,
                None => pi,
            }
        }
    };
    Ok(head * tail)
}

/// Open-loop describing function `G(jω)·C(jω)` over a grid.
pub fn open_loop_df<T: Real>(design: &ControllerDesign<T>, plant: &PlantModel<T>, grid: &FrequencyGrid<T>) -> Sweep<T> {
    let cg = match design.cglp_element() {
        Ok(c) => c,
        Err(e) => return Sweep { response: None, failures: grid.omegas().iter().map(|&w| (w, e.clone())).collect() },
    };
    sweep_with(grid, |w| Ok(plant.response(w)? * controller_response_with(design, cg.as_ref(), w)?))
}

/// Gain crossover and phase margin of `l(ω)` searched in `[lo, hi]`.
pub fn crossover<T: Real, F: Fn(T) -> Result<Cplx<T>>>(l: F, lo: T, hi: T) -> Result<(T, T)> {
    let ws = logspace(lo, hi, 400);
    let f = |w: T| -> Result<T> { Ok(cabs(l(w)?).ln()) };
    let mut prev = (ws[0], f(ws[0])?);
    for &w in &ws[1..] {
        let v = f(w)?;
        if prev.1 >= T::zero() && v < T::zero() {
            let (mut a, mut b) = (prev.0.ln(), w.ln());
            for _ in 0..100 {
                let m = (a + b) / T::lit(2.0);
                if f(m.exp())? >= T::zero() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let wc = ((a + b) / T::lit(2.0)).exp();
            let ph = carg(l(wc)?).to_degrees_val();
            return Ok((wc, T::lit(180.0) + ph));
        }
        prev = (w, v);
    }
    Err(Error::OutOfRange(format!("no gain crossover in [{lo}, {hi}] rad/s")))
}

/// Family, reset factor and damping of a design request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRequest<T: Real> {
    pub family: Family,
    pub gamma: T,
    pub beta_r: T,
    pub accounting: PhaseAccounting,
}

impl<T: Real> DesignRequest<T> {
    pub fn new(family: Family, gamma: T) -> Self {
        Self { family, gamma, beta_r: T::one(), accounting: PhaseAccounting::FullPid }
    }

    pub fn with_accounting(mut self, accounting: PhaseAccounting) -> Self {
        self.accounting = accounting;
        self
    }
}

fn cglp_spec_for<T: Real>(req: &DesignRequest<T>, omega_c: T, gamma: T) -> Option<CgLpSpec<T>> {
    let wf = omega_c * T::lit(10.0);
    match req.family {
        Family::CglpGfore => Some(CgLpSpec::first(omega_c, wf, gamma)),
        Family::CglpGsore => Some(CgLpSpec::second(omega_c, wf, req.beta_r, gamma)),
        _ => None,
    }
}

/// Phase (deg) at `ω_c` of the part that replaces or augments the linear PI:
/// the CgLp element, or the reset PI relative to the linear PI.
fn nonlinear_phase<T: Real>(req: &DesignRequest<T>, omega_c: T, gamma: T) -> Result<(T, Option<CgLpSpec<T>>, Option<T>)> {
    match req.family {
        Family::Linear => Ok((T::zero(), None, None)),
        Family::ResetIntegrator => {
            let w_i = omega_c / T::lit(10.0);
            let df = df_response(&reset_pi(w_i, gamma)?, omega_c)?;
            let lin = Cplx::new(T::one(), -w_i / omega_c);
            Ok(((carg(df) - carg(lin)).to_degrees_val(), None, Some(gamma)))
        }
        Family::CglpGfore | Family::CglpGsore => {
            let spec = cglp_spec_for(req, omega_c, gamma).unwrap();
            let el = build_cglp(&spec)?;
            let spec = CgLpSpec { alpha_override: Some(el.alpha), ..spec };
            Ok((carg(el.response(omega_c)?).to_degrees_val(), Some(spec), None))
        }
    }
}

/// Fixed-bandwidth design: CgLp (or reset PI) at `ω_r = ω_c`, PID by the
/// rules of thumb, scale `a` from the phase requirement and `K_p` for 0 dB at `ω_c`.
pub fn design_tracking_precision<T: Real>(
    plant: &PlantModel<T>,
    omega_c: T,
    pm_deg: T,
    req: &DesignRequest<T>,
) -> Result<ControllerDesign<T>> {
    if !(omega_c > T::zero()) {
        return Err(Error::InvalidParameter(format!("omega_c = {omega_c} must be positive")));
    }
    if !(pm_deg > T::zero() && pm_deg < T::lit(180.0)) {
        return Err(Error::InvalidParameter(format!("phase margin {pm_deg} outside (0, 180)")));
    }
    if req.gamma < T::zero() || req.gamma > T::one() {
        return Err(Error::InvalidParameter(format!("gamma = {} outside [0, 1]", req.gamma)));
    }
    let (ph_nl, cglp, ri_gamma) = nonlinear_phase(req, omega_c, req.gamma)?;
    let probe = PidSpec::rules_of_thumb(T::one(), omega_c, T::lit(2.0));
    let required = match req.accounting {
        PhaseAccounting::FullPid => {
            let g = plant.response(omega_c)?;
            let pi = carg(probe.pi_factor(omega_c)).to_degrees_val();
            let lpf = carg(probe.lpf_factor(omega_c)).to_degrees_val();
            let mut fixed = carg(g).to_degrees_val() + pi + lpf + ph_nl;
            // plant phase may wrap; pick the branch nearest the target
            let target = pm_deg - T::lit(180.0);
            while fixed - target > T::lit(180.0) {
                fixed -= T::lit(360.0);
            }
            while fixed - target < T::lit(-180.0) {
                fixed += T::lit(360.0);
            }
            target - fixed
        }
        PhaseAccounting::LeadLagOnly { reference_deg } => {
            let (twin, _, _) = nonlinear_phase(req, omega_c, T::one())?;
            T::lit(reference_deg) - (ph_nl - twin)
        }
    };
    let a = solve_scale_a(required)?;
    let mut design = ControllerDesign {
        family: req.family,
        gamma: req.gamma,
        pid: PidSpec::rules_of_thumb(T::one(), omega_c, a),
        cglp,
        reset_integrator_gamma: ri_gamma,
        omega_c,
        scale_a: a,
        achieved_pm_deg: T::zero(),
        ph_nl_deg: ph_nl,
        accounting: req.accounting,
    };
    design.pid.validate()?;
    let cg = design.cglp_element()?;
    let l = plant.response(omega_c)? * controller_response_with(&design, cg.as_ref(), omega_c)?;
    design.pid.k_p = T::one() / cabs(l);
    let (_, pm) = measure_margins(&design, plant)?;
    design.achieved_pm_deg = pm;
    Ok(design)
}

/// Measured open-loop crossover (rad/s) and phase margin (deg) of a design.
pub fn measure_margins<T: Real>(design: &ControllerDesign<T>, plant: &PlantModel<T>) -> Result<(T, T)> {
    let cg = design.cglp_element()?;
    let wc = design.omega_c;
    crossover(
        |w| Ok(plant.response(w)? * controller_response_with(design, cg.as_ref(), w)?),
        wc / T::lit(10.0),
        wc * T::lit(10.0),
    )
}

/// Open-loop gain in dB at `omega`.
pub fn open_loop_gain_db<T: Real>(design: &ControllerDesign<T>, plant: &PlantModel<T>, omega: T) -> Result<T> {
    let cg = design.cglp_element()?;
    Ok(db(cabs(plant.response(omega)? * controller_response_with(design, cg.as_ref(), omega)?)))
}

/// Default high frequency for the precision-equivalence check: 10 kHz.
pub fn default_omega_high<T: Real>() -> T {
    T::two_pi() * T::lit(1.0e4)
}

/// Bandwidth-raising design: re-run the fixed-bandwidth design while moving
/// `ω_c` until the open-loop gain at `omega_high` equals `g_pre_db`.
pub fn design_bandwidth<T: Real>(
    plant: &PlantModel<T>,
    reference: &ControllerDesign<T>,
    gamma: T,
    g_pre_db: T,
    omega_high: T,
) -> Result<ControllerDesign<T>> {
    let pm = reference.achieved_pm_deg;
    let req = DesignRequest {
        family: reference.family,
        gamma,
        beta_r: reference.cglp.map(|c| c.beta_r).unwrap_or(T::one()),
        accounting: reference.accounting,
    };
    let pm_target = match reference.accounting {
        PhaseAccounting::FullPid => pm.round_pm(),
        PhaseAccounting::LeadLagOnly { .. } => pm,
    };
    let eval = |wc: T| -> Result<(ControllerDesign<T>, T)> {
        let d = design_tracking_precision(plant, wc, pm_target, &req)?;
        let g = open_loop_gain_db(&d, plant, omega_high)?;
        Ok((d, g - g_pre_db))
    };
    let w0 = reference.omega_c;
    let (d0, f0) = eval(w0)?;
    if f0.abs() < T::lit(1e-3) {
        return Ok(d0);
    }
    // bracket the root by geometric steps in the direction of the sign
    let step = if f0 < T::zero() { T::lit(1.05) } else { T::one() / T::lit(1.05) };
    let (mut lo, mut flo) = (w0, f0);
    let mut hi = w0;
    let mut fhi = f0;
    let mut iters = 0;
    while fhi.signum() == f0.signum() {
        iters += 1;
        if iters > 60 {
            return Err(Error::NoConvergence(format!("no omega_c bracket for G_pre = {g_pre_db} dB")));
        }
        lo = hi;
        flo = fhi;
        hi *= step;
        let (_, f) = eval(hi)?;
        if (f - flo) * (hi - lo) < T::zero() {
            return Err(Error::NoConvergence("high-frequency gain not monotone in omega_c".into()));
        }
        fhi = f;
    }
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mut fa = if lo < hi { flo } else { fhi };
    for _ in 0..60 {
        let m = (a * b).sqrt();
        let (d, f) = eval(m)?;
        if f.abs() < T::lit(1e-3) {
            return Ok(d);
        }
        if f.signum() == fa.signum() {
            a = m;
            fa = f;
        } else {
            b = m;
        }
    }
    let (d, f) = eval((a * b).sqrt())?;
    if f.abs() < T::lit(0.1) {
        Ok(d)
    } else {
        Err(Error::NoConvergence(format!("G_pre match off by {f} dB after 60 iterations")))
    }
}

trait RoundPm {
    fn round_pm(self) -> Self;
}

impl<T: Real> RoundPm for T {
    /// Full-PID designs hit the requested PM up to root-finding noise; snap
    /// back to the nearest 1e-6 deg so re-designs target the same value.
    fn round_pm(self) -> Self {
        let s = T::lit(1e6);
        (self * s).round() / s
    }
}
