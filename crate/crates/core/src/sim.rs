//! Fixed-step hybrid simulation of a reset control loop: sampled reset
//! controller, zero-order-hold plant, feedforward, prefiltered triangular
//! reference and bounded sensor noise.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{balance, expm, solve_checked};
use crate::loop_shaping::{ControllerDesign, PlantModel};
use crate::model::{ResetController, StateSpace, TransferFunction};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    /// Exact zero-order hold.
    #[default]
    Zoh,
    /// Bilinear transform; applied to the controller only.
    Tustin,
}

/// When a reset is applied within a sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetTiming {
    /// At the sample where the sign change is observed.
    #[default]
    Sampled,
    /// At the linearly interpolated crossing instant.
    Interpolated,
}

/// Triangular reference of given peak-to-peak amplitude, starting at its
/// midpoint and rising, followed by a critically damped fourth-order filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReferenceSpec<T: Real> {
    pub peak_to_peak: T,
    pub period: T,
    /// Prefilter corner in rad/s; infinite means no prefilter.
    pub prefilter_corner: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NoiseSpec<T: Real> {
    /// Bound of the uniform sensor noise in metres.
    pub amplitude: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeedforwardSpec<T: Real> {
    pub enabled: bool,
    /// Corner of the third-order filter in rad/s.
    pub lpf_corner: T,
    /// Relative gain error of the plant estimate that is inverted
    /// (0.1: the estimate is 10% too high).
    #[serde(default = "zero")]
    pub gain_error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SimConfig<T: Real> {
    pub dt: T,
    pub duration: T,
    pub reference: ReferenceSpec<T>,
    pub noise: NoiseSpec<T>,
    pub feedforward: FeedforwardSpec<T>,
    #[serde(default = "yes")]
    pub resets_enabled: bool,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub reset_timing: ResetTiming,
    /// Sensor resolution in metres; 0 disables rounding.
    #[serde(default = "zero")]
    pub quantization: T,
}

fn zero<T: Real>() -> T {
    T::zero()
}

fn yes() -> bool {
    true
}

impl<T: Real> SimConfig<T> {
    /// 10 kHz sampling, 1 mm peak-to-peak 1 Hz triangle over 10 periods,
    /// prefilter at 100 Hz, feedforward filtered at 1 kHz, noise off.
    pub fn tracking() -> Self {
        let two_pi = T::two_pi();
        Self {
            dt: T::lit(1e-4),
            duration: T::lit(10.0),
            reference: ReferenceSpec {
                peak_to_peak: T::lit(1e-3),
                period: T::one(),
                prefilter_corner: two_pi * T::lit(100.0),
            },
            noise: NoiseSpec { amplitude: T::zero(), seed: 0 },
            feedforward: FeedforwardSpec { enabled: true, lpf_corner: two_pi * T::lit(1000.0), gain_error: T::zero() },
            resets_enabled: true,
            discretization: Discretization::Zoh,
            reset_timing: ResetTiming::Sampled,
            quantization: T::zero(),
        }
    }

    /// Zero reference with ±5 µm uniform sensor noise.
    pub fn precision(seed: u64) -> Self {
        let mut c = Self::tracking();
        c.reference.peak_to_peak = T::zero();
        c.noise = NoiseSpec { amplitude: T::lit(5e-6), seed };
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > T::zero()) || !self.dt.is_finite_val() {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.duration > T::zero()) || !self.duration.is_finite_val() {
            return bad(format!("duration = {} must be positive", self.duration));
        }
        if !(self.noise.amplitude >= T::zero()) {
            return bad(format!("noise amplitude = {} must be non-negative", self.noise.amplitude));
        }
        if self.feedforward.enabled && !(self.feedforward.lpf_corner > T::zero()) {
            return bad("feedforward filter corner must be positive".into());
        }
        if !(self.quantization >= T::zero()) || !self.quantization.is_finite_val() {
            return bad(format!("quantization = {}", self.quantization));
        }
        if !(self.feedforward.gain_error > -T::one()) {
            return bad("feedforward gain error must exceed -1".into());
        }
        validate_reference(&self.reference)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round().as_f64() as usize + 1
    }
}

fn validate_reference<T: Real>(r: &ReferenceSpec<T>) -> Result<()> {
    if !(r.peak_to_peak >= T::zero()) || !r.peak_to_peak.is_finite_val() {
        return Err(Error::InvalidParameter(format!("peak-to-peak = {}", r.peak_to_peak)));
    }
    if !(r.period > T::zero()) || !r.period.is_finite_val() {
        return Err(Error::InvalidParameter(format!("reference period = {}", r.period)));
    }
    if !(r.prefilter_corner >= T::lit(10.0) / r.period) {
        return Err(Error::InvalidParameter(format!(
            "prefilter corner {} rad/s below 10/period",
            r.prefilter_corner
        )));
    }
    Ok(())
}

/// Prefiltered triangular reference evaluated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference<T: Real> {
    pub spec: ReferenceSpec<T>,
}

pub fn make_reference<T: Real>(spec: &ReferenceSpec<T>) -> Result<Reference<T>> {
    validate_reference(spec)?;
    Ok(Reference { spec: spec.clone() })
}

impl<T: Real> Reference<T> {
    fn slope(&self) -> T {
        T::lit(2.0) * self.spec.peak_to_peak / self.spec.period
    }

    /// Raw triangle and its slope at `t`.
    pub fn raw(&self, t: T) -> (T, T) {
        let (p, s) = (self.spec.period, self.slope());
        let half = self.spec.peak_to_peak / T::lit(2.0);
        if t < T::zero() || p.is_zero() {
            return (T::zero(), T::zero());
        }
        let ph = t - (t / p).floor() * p;
        let q = p / T::lit(4.0);
        if ph < q {
            (s * ph, s)
        } else if ph < T::lit(3.0) * q {
            (half - s * (ph - q), -s)
        } else {
            (-half + s * (ph - T::lit(3.0) * q), s)
        }
    }

    /// Filtered reference at `t`.
    ///
    /// The unit-ramp response of `ω⁴/(s+ω)⁴` is
    /// `τ − 4/ω + e^{−ωτ}(4/ω + 3τ + ωτ² + ω²τ³/6)`; summing it over the
    /// slope changes gives the raw triangle, minus `4/ω` times the current
    /// slope, plus the decaying terms of recent breakpoints.
    pub fn value(&self, t: T) -> T {
        let (raw, slope) = self.raw(t);
        let w = self.spec.prefilter_corner;
        if !w.is_finite_val() || t < T::zero() {
            return raw;
        }
        let four = T::lit(4.0);
        let mut y = raw - four / w * slope;
        let s = self.slope();
        let trans = |tau: T| {
            let wt = w * tau;
            (-wt).exp() * (four / w + T::lit(3.0) * tau + wt * tau + wt * wt * tau / T::lit(6.0))
        };
        // the initial ramp and the alternating slope changes at T/4 + kT/2
        let horizon = T::lit(60.0) / w;
        if t < horizon {
            y += s * trans(t);
        }
        let (p, q) = (self.spec.period, self.spec.period / four);
        let half = p / T::lit(2.0);
        if t >= q {
            let last = ((t - q) / half).floor().as_f64() as i64;
            let mut j = last;
            while j >= 0 {
                let tj = q + half * T::lit(j as f64);
                let tau = t - tj;
                if tau > horizon {
                    break;
                }
                let dslope = if j % 2 == 0 { -T::lit(2.0) * s } else { T::lit(2.0) * s };
                y += dslope * trans(tau);
                j -= 1;
            }
        }
        y
    }

    pub fn sample(&self, dt: T, n: usize) -> Vec<T> {
        (0..n).map(|k| self.value(dt * T::lit(k as f64))).collect()
    }

    pub fn fundamental_hz(&self) -> Option<T> {
        (self.spec.peak_to_peak > T::zero()).then(|| T::one() / self.spec.period)
    }
}

/// `G⁻¹(s)·ω³/(s+ω)³/(1+gain_error)`, realized as a strictly proper system.
pub fn make_feedforward<T: Real>(plant: &PlantModel<T>, lpf_corner: T, lpf_order: usize, gain_error: T) -> Result<StateSpace<T>> {
    let tf = plant
        .transfer_function()
        .map_err(|_| Error::InvalidParameter(format!("plant {} has no invertible model", plant.name())))?;
    feedforward_tf(tf, lpf_corner, lpf_order, gain_error)?.to_state_space()
}

pub fn feedforward_tf<T: Real>(
    plant: &TransferFunction<T>,
    lpf_corner: T,
    lpf_order: usize,
    gain_error: T,
) -> Result<TransferFunction<T>> {
    if !(lpf_corner > T::zero()) {
        return Err(Error::InvalidParameter(format!("filter corner = {lpf_corner}")));
    }
    let inv = plant.inverse()?;
    let mut lpf = TransferFunction::new(vec![T::one()], vec![T::one()])?;
    for _ in 0..lpf_order {
        lpf = lpf.mul(&TransferFunction::new(vec![lpf_corner], vec![T::one(), lpf_corner])?)?;
    }
    let ff = inv.mul(&lpf)?;
    let k = T::one() / (T::one() + gain_error);
    let ff = TransferFunction::new(ff.num.iter().map(|&x| x * k).collect(), ff.den.clone())?;
    if ff.relative_degree() < 1 {
        return Err(Error::InvalidParameter(format!(
            "feedforward with a filter of order {lpf_order} is not strictly proper"
        )));
    }
    Ok(ff)
}

/// Sampled-data SISO system `x⁺ = Φx + Γu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete<T: Real> {
    pub phi: DMatrix<T>,
    pub gamma: DVector<T>,
    pub c: DVector<T>,
    pub d: T,
}

pub fn discretize<T: Real>(sys: &StateSpace<T>, dt: T, method: Discretization) -> Result<Discrete<T>> {
    if !sys.is_siso() {
        return Err(Error::Dimension("discretize expects a SISO system".into()));
    }
    let n = sys.order();
    let c = DVector::from_iterator(n, sys.c.row(0).iter().copied());
    let d = sys.d[(0, 0)];
    if n == 0 {
        return Ok(Discrete { phi: DMatrix::zeros(0, 0), gamma: DVector::zeros(0), c, d });
    }
    match method {
        Discretization::Zoh => {
            let (phi, gamma) = zoh(&sys.a, &sys.b, dt)?;
            Ok(Discrete { phi, gamma, c, d })
        }
        Discretization::Tustin => {
            let h = dt / T::lit(2.0);
            let id = DMatrix::<T>::identity(n, n);
            let m = &id - &sys.a * h;
            let inv = solve_checked(m, &id, "I - A dt/2", 0.0)?;
            let phi = &inv * (&id + &sys.a * h);
            let g = &inv * &sys.b * dt;
            let ct = sys.c.clone() * &inv;
            let dd = d + (&sys.c * &inv * &sys.b)[(0, 0)] * h;
            Ok(Discrete {
                phi,
                gamma: DVector::from_iterator(n, g.column(0).iter().copied()),
                c: DVector::from_iterator(n, ct.row(0).iter().copied()),
                d: dd,
            })
        }
    }
}

/// Plant and feedforward filter discretized as one system, the controller
/// output `u_c` held and the reference `r` linearly interpolated over a sample:
/// `ẋ_p = A_p x_p + B_p(u_c + C_f x_f + D_f r)`, `ẋ_f = A_f x_f + B_f r`.
/// Discretizing the inverse-based feedforward on its own moves its lightly
/// damped zeros away from the plant poles they are meant to cancel.
struct PlantPath<T: Real> {
    phi: DMatrix<T>,
    g_u: DVector<T>,
    g_r: DVector<T>,
    /// Response to the in-sample ramp of `r`.
    g_dr: DVector<T>,
    c_y: DVector<T>,
    c_ff: DVector<T>,
    d_ff: T,
}

impl<T: Real> PlantPath<T> {
    fn new(plant: &StateSpace<T>, ff: Option<&StateSpace<T>>, dt: T) -> Result<Self> {
        let n_p = plant.order();
        let n_f = ff.map_or(0, |f| f.order());
        let n = n_p + n_f;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, 2);
        let mut c_y = DMatrix::zeros(1, n);
        let mut c_ff = DMatrix::zeros(1, n);
        let mut d_ff = T::zero();
        a.view_mut((0, 0), (n_p, n_p)).copy_from(&plant.a);
        b.view_mut((0, 0), (n_p, 1)).copy_from(&plant.b);
        c_y.view_mut((0, 0), (1, n_p)).copy_from(&plant.c);
        if let Some(f) = ff {
            d_ff = f.d[(0, 0)];
            a.view_mut((0, n_p), (n_p, n_f)).copy_from(&(&plant.b * &f.c));
            a.view_mut((n_p, n_p), (n_f, n_f)).copy_from(&f.a);
            b.view_mut((0, 1), (n_p, 1)).copy_from(&(&plant.b * d_ff));
            b.view_mut((n_p, 1), (n_f, 1)).copy_from(&f.b);
            c_ff.view_mut((0, n_p), (1, n_f)).copy_from(&f.c);
        }
        // companion realizations of filtered inverses span many decades
        let (a, d) = balance(&a);
        let b = DMatrix::from_fn(n, 2, |i, j| b[(i, j)] / d[i]);
        let c_y = DVector::from_fn(n, |j, _| c_y[(0, j)] * d[j]);
        let c_ff = DVector::from_fn(n, |j, _| c_ff[(0, j)] * d[j]);
        // exp of [[A, B, 0], [0, 0, e_r], [0, 0, 0]]·dt; the last column
        // integrates B_r against the ramp τ/dt
        let mut m = DMatrix::zeros(n + 3, n + 3);
        m.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
        m.view_mut((0, n), (n, 2)).copy_from(&(b * dt));
        m[(n + 1, n + 2)] = T::one();
        let e = expm(&m)?;
        Ok(Self {
            phi: e.view((0, 0), (n, n)).into_owned(),
            g_u: e.view((0, n), (n, 1)).column(0).into_owned(),
            g_r: e.view((0, n + 1), (n, 1)).column(0).into_owned(),
            g_dr: e.view((0, n + 2), (n, 1)).column(0).into_owned(),
            c_y,
            c_ff,
            d_ff,
        })
    }

    fn order(&self) -> usize {
        self.phi.nrows()
    }

    fn output(&self, x: &DVector<T>) -> T {
        self.c_y.dot(x)
    }

    fn feedforward(&self, x: &DVector<T>, r: T) -> T {
        self.c_ff.dot(x) + self.d_ff * r
    }

    fn advance(&self, x: &mut DVector<T>, scratch: &mut DVector<T>, u_c: T, r: T, r_next: T) {
        scratch.gemv(T::one(), &self.phi, x, T::zero());
        scratch.axpy(u_c, &self.g_u, T::one());
        scratch.axpy(r, &self.g_r, T::one());
        scratch.axpy(r_next - r, &self.g_dr, T::one());
        std::mem::swap(x, scratch);
    }
}

/// `exp([[A, B], [0, 0]]·dt)` split into `Φ` and `Γ`.
fn zoh<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, dt: T) -> Result<(DMatrix<T>, DVector<T>)> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    m.view_mut((0, n), (n, 1)).copy_from(&(b * dt));
    let e = expm(&m)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), DVector::from_iterator(n, e.view((0, n), (n, 1)).iter().copied())))
}

impl<T: Real> Discrete<T> {
    fn output(&self, x: &DVector<T>, u: T) -> T {
        self.c.dot(x) + self.d * u
    }

    fn advance(&self, x: &mut DVector<T>, scratch: &mut DVector<T>, u: T) {
        scratch.gemv(T::one(), &self.phi, x, T::zero());
        scratch.axpy(u, &self.gamma, T::one());
        std::mem::swap(x, scratch);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace<T: Real> {
    pub dt: T,
    pub t: Vec<T>,
    pub r: Vec<T>,
    pub y: Vec<T>,
    /// Measured error `r − y − n`.
    pub e: Vec<T>,
    pub u: Vec<T>,
    pub noise: Vec<T>,
    pub reset: Vec<bool>,
    pub reset_times: Vec<T>,
    pub reference_hz: Option<T>,
}

impl<T: Real> SimulationTrace<T> {
    fn with_capacity(dt: T, n: usize, reference_hz: Option<T>) -> Self {
        Self {
            dt,
            t: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
            reset: Vec::with_capacity(n),
            reset_times: Vec::new(),
            reference_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Error without the sensor noise, `r − y`.
    pub fn true_error(&self) -> Vec<T> {
        self.r.iter().zip(&self.y).map(|(&r, &y)| r - y).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,r_m,y_m,e_m,u,reset")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.t[k].as_f64(),
                self.r[k].as_f64(),
                self.y[k].as_f64(),
                self.e[k].as_f64(),
                self.u[k].as_f64(),
                u8::from(self.reset[k])
            )?;
        }
        Ok(())
    }
}

/// Loop ingredients prepared for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop<T: Real> {
    pub controller: ResetController<T>,
    pub plant: StateSpace<T>,
    pub feedforward: Option<StateSpace<T>>,
}

impl<T: Real> Loop<T> {
    pub fn from_design(design: &ControllerDesign<T>, plant: &PlantModel<T>, cfg: &SimConfig<T>) -> Result<Self> {
        let controller = design.realize()?;
        let ss = plant.state_space()?.clone();
        let feedforward = if cfg.feedforward.enabled {
            Some(make_feedforward(plant, cfg.feedforward.lpf_corner, 3, cfg.feedforward.gain_error)?)
        } else {
            None
        };
        Ok(Self { controller, plant: ss, feedforward })
    }

    /// Largest continuous-time mode over all discretized parts.
    pub fn fastest_mode(&self) -> T {
        let mut m = self.controller.base.fastest_mode().max(self.plant.fastest_mode());
        if let Some(ff) = &self.feedforward {
            m = m.max(ff.fastest_mode());
        }
        m
    }
}

/// Runs the closed loop of `design` around `plant`.
pub fn simulate<T: Real>(design: &ControllerDesign<T>, plant: &PlantModel<T>, cfg: &SimConfig<T>) -> Result<SimulationTrace<T>> {
    let lp = Loop::from_design(design, plant, cfg)?;
    simulate_loop(&lp, cfg)
}

pub fn simulate_loop<T: Real>(lp: &Loop<T>, cfg: &SimConfig<T>) -> Result<SimulationTrace<T>> {
    let (trace, err) = simulate_partial(lp, cfg)?;
    match err {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

/// Like [`simulate_loop`], but a divergence returns the trace up to the
/// abort together with the error.
pub fn simulate_partial<T: Real>(lp: &Loop<T>, cfg: &SimConfig<T>) -> Result<(SimulationTrace<T>, Option<Error>)> {
    cfg.validate()?;
    if !lp.plant.is_siso() || !lp.controller.base.is_siso() {
        return Err(Error::Dimension("simulation needs SISO plant and controller".into()));
    }
    if lp.plant.d[(0, 0)] != T::zero() {
        return Err(Error::InvalidParameter("plant feedthrough is not supported".into()));
    }
    let nyquist = T::pi() / cfg.dt;
    let fastest = lp.fastest_mode();
    if fastest > nyquist / T::lit(2.0) {
        return Err(Error::InvalidParameter(format!(
            "mode at {fastest:.1} rad/s exceeds half the Nyquist frequency {:.1} rad/s",
            nyquist
        )));
    }
    let ctrl = &lp.controller;
    let dc = discretize(&ctrl.base, cfg.dt, cfg.discretization)?;
    let path = PlantPath::new(&lp.plant, lp.feedforward.as_ref(), cfg.dt)?;
    let reference = make_reference(&cfg.reference)?;
    let n = cfg.steps();
    let rs = reference.sample(cfg.dt, n);
    let noise = noise_samples(&cfg.noise, n)?;

    let n_r = ctrl.n_r;
    let a_rho = ctrl.a_rho.view((0, 0), (n_r, n_r)).into_owned();
    let resetting = cfg.resets_enabled && !ctrl.is_linear() && n_r > 0;
    let interp = cfg.reset_timing == ResetTiming::Interpolated && cfg.discretization == Discretization::Zoh;

    let mut xc = DVector::zeros(ctrl.order());
    let mut xc_prev = xc.clone();
    let mut xp = DVector::zeros(path.order());
    let (mut sc, mut sp) = (xc.clone(), xp.clone());
    let mut xr = DVector::zeros(n_r);

    let scale = cfg.reference.peak_to_peak.max(cfg.noise.amplitude * T::lit(2.0)).max(T::lit(1e-6));
    let limit = T::lit(1e3) * scale;
    let mut tr = SimulationTrace::with_capacity(cfg.dt, n, reference.fundamental_hz());
    let mut e_prev: Option<T> = None;
    for k in 0..n {
        let t = cfg.dt * T::lit(k as f64);
        let y = path.output(&xp);
        if !y.is_finite_val() || y.abs() > limit {
            return Ok((tr, Some(Error::Diverged { time: t.as_f64(), magnitude: y.abs().as_f64() })));
        }
        let r = rs[k];
        let mut measured = y + noise[k];
        if cfg.quantization > T::zero() {
            measured = (measured / cfg.quantization).round() * cfg.quantization;
        }
        // total measurement error, noise plus rounding
        let n_k = measured - y;
        let e = r - measured;
        let mut fired = false;
        if resetting {
            if let Some(ep) = e_prev {
                fired = (ep * e < T::zero()) || (e == T::zero() && ep != T::zero());
            }
        }
        if fired {
            match (interp, e_prev) {
                (true, Some(ep)) if ep != e => {
                    // replay the last interval with the reset at the crossing
                    let tau = ep / (ep - e);
                    let (phi1, g1) = zoh(&ctrl.base.a, &ctrl.base.b, cfg.dt * tau)?;
                    let (phi2, g2) = zoh(&ctrl.base.a, &ctrl.base.b, cfg.dt * (T::one() - tau))?;
                    let mut z = &phi1 * &xc_prev + &g1 * ep;
                    apply_reset(&mut z, &a_rho, &mut xr);
                    xc = &phi2 * z + &g2 * ep;
                }
                _ => apply_reset(&mut xc, &a_rho, &mut xr),
            }
            tr.reset_times.push(t);
        }
        let uc = dc.output(&xc, e);
        let u = uc + path.feedforward(&xp, r);
        tr.t.push(t);
        tr.r.push(r);
        tr.y.push(y);
        tr.e.push(e);
        tr.u.push(u);
        tr.noise.push(n_k);
        tr.reset.push(fired);
        if interp {
            xc_prev.copy_from(&xc);
        }
        dc.advance(&mut xc, &mut sc, e);
        let r_next = if k + 1 < n { rs[k + 1] } else { reference.value(t + cfg.dt) };
        path.advance(&mut xp, &mut sp, uc, r, r_next);
        e_prev = Some(e);
    }
    Ok((tr, None))
}

fn apply_reset<T: Real>(x: &mut DVector<T>, a_rho: &DMatrix<T>, scratch: &mut DVector<T>) {
    let n_r = a_rho.nrows();
    scratch.gemv(T::one(), a_rho, &x.rows(0, n_r), T::zero());
    x.rows_mut(0, n_r).copy_from(scratch);
}

fn noise_samples<T: Real>(spec: &NoiseSpec<T>, n: usize) -> Result<Vec<T>> {
    let amp = spec.amplitude.as_f64();
    if amp == 0.0 {
        return Ok(vec![T::zero(); n]);
    }
    let dist = Uniform::new_inclusive(-amp, amp).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..n).map(|_| T::lit(dist.sample(&mut rng))).collect())
}

/// Drives a controller open loop with the samples `e`, resetting on sampled
/// sign changes. Returns the output and the per-sample reset flags.
pub fn simulate_open_loop<T: Real>(ctrl: &ResetController<T>, e: &[T], dt: T) -> Result<(Vec<T>, Vec<bool>)> {
    let dc = discretize(&ctrl.base, dt, Discretization::Zoh)?;
    let n_r = ctrl.n_r;
    let a_rho = ctrl.a_rho.view((0, 0), (n_r, n_r)).into_owned();
    let resetting = !ctrl.is_linear() && n_r > 0;
    let mut x = DVector::zeros(ctrl.order());
    let mut s = x.clone();
    let mut xr = DVector::zeros(n_r);
    let mut out = Vec::with_capacity(e.len());
    let mut flags = Vec::with_capacity(e.len());
    for (k, &ek) in e.iter().enumerate() {
        let fired = resetting && k > 0 && {
            let ep = e[k - 1];
            ep * ek < T::zero() || (ek == T::zero() && ep != T::zero())
        };
        if fired {
            apply_reset(&mut x, &a_rho, &mut xr);
        }
        let y = dc.output(&x, ek);
        if !y.is_finite_val() {
            return Err(Error::NonFinite("open-loop controller output"));
        }
        out.push(y);
        flags.push(fired);
        dc.advance(&mut x, &mut s, ek);
    }
    Ok((out, flags))
}

/// Error statistics over the settled part of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub e_rms: f64,
    pub e_max_abs: f64,
    pub reset_count: usize,
    pub limit_cycle_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorSignal {
    /// `r − y − n`, what the controller sees.
    #[default]
    Measured,
    /// `r − y`.
    True,
}

/// Metrics of the measured error after `settle_skip` seconds.
pub fn metrics<T: Real>(trace: &SimulationTrace<T>, settle_skip: T) -> Result<Metrics> {
    metrics_of(trace, settle_skip, ErrorSignal::Measured)
}

pub fn metrics_of<T: Real>(trace: &SimulationTrace<T>, settle_skip: T, signal: ErrorSignal) -> Result<Metrics> {
    let start = trace.t.iter().position(|&t| t > settle_skip).unwrap_or(trace.len());
    if start >= trace.len() {
        return Err(Error::InvalidParameter("empty metrics window".into()));
    }
    let e: Vec<f64> = match signal {
        ErrorSignal::Measured => trace.e[start..].iter().map(|x| x.as_f64()).collect(),
        ErrorSignal::True => trace.r[start..].iter().zip(&trace.y[start..]).map(|(r, y)| (*r - *y).as_f64()).collect(),
    };
    let n = e.len() as f64;
    let e_rms = (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let e_max_abs = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let reset_count = trace.reset[start..].iter().filter(|&&f| f).count();
    let fs = 1.0 / trace.dt.as_f64();
    let limit_cycle_flag = detect_limit_cycle(&e, fs, trace.reference_hz.map(|f| f.as_f64()));
    Ok(Metrics { e_rms, e_max_abs, reset_count, limit_cycle_flag })
}

/// Looks for a spectral line of the error that is not a harmonic of the
/// reference: the periodic part locked to the reference is removed by
/// synchronous averaging, then the averaged residual spectrum is searched
/// for a bin exceeding 3× its neighbours in amplitude.
pub fn detect_limit_cycle(e: &[f64], fs: f64, reference_hz: Option<f64>) -> bool {
    let mut resid = e.to_vec();
    if let Some(f0) = reference_hz.filter(|f| *f > 0.0) {
        let per = (fs / f0).round() as usize;
        let cycles = if per > 0 { e.len() / per } else { 0 };
        if cycles >= 2 {
            resid.truncate(cycles * per);
            let mut avg = vec![0.0; per];
            for (k, x) in resid.iter().enumerate() {
                avg[k % per] += x / cycles as f64;
            }
            for (k, x) in resid.iter_mut().enumerate() {
                *x -= avg[k % per];
            }
        }
    }
    let total: f64 = resid.iter().map(|x| x * x).sum::<f64>() / resid.len().max(1) as f64;
    let reference: f64 = e.iter().map(|x| x * x).sum::<f64>() / e.len().max(1) as f64;
    // residual energy that is numerically zero carries no line
    if total <= 1e-12 * reference.max(f64::MIN_POSITIVE) || total == 0.0 {
        return false;
    }
    let seg = (resid.len() / 8).next_power_of_two() / 2;
    if seg < 64 {
        return false;
    }
    let psd = crate::spectral::welch_psd(&resid, seg, 0.5);
    let amp: Vec<f64> = psd.iter().map(|p| p.sqrt()).collect();
    let (peak, _) = amp.iter().enumerate().skip(3).fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if peak == 0 {
        return false;
    }
    let mut neigh = Vec::new();
    for off in 3..=12usize {
        if peak >= off {
            neigh.push(amp[peak - off]);
        }
        if peak + off < amp.len() {
            neigh.push(amp[peak + off]);
        }
    }
    if neigh.is_empty() {
        return false;
    }
    let mean = neigh.iter().sum::<f64>() / neigh.len() as f64;
    amp[peak] > 3.0 * mean
}
