//! CgLp compensators: a GFORE/GSORE reset lag in series with a linear lead of
//! the same order, with the lag corner pre-shifted by α.

use serde::{Deserialize, Serialize};

use crate::describing::{compute_alpha, df_response, FrequencyGrid};
use crate::error::{Error, Result};
use crate::model::{make_element, series, ElementSpec, ResetController, StateSpace};
use crate::scalar::{cabs, carg, db, logspace, Cplx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CgLpOrder {
    /// GFORE lag with a first-order lead.
    First,
    /// GSORE lag with a second-order lead.
    Second,
}

/// Parameters of a CgLp element. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CgLpSpec<T: Real> {
    pub order: CgLpOrder,
    pub omega_r: T,
    pub omega_f: T,
    pub gamma: T,
    /// Damping of the second-order lag and lead numerator; unused for first order.
    pub beta_r: T,
    /// Permits γ in [−1, 0).
    #[serde(default)]
    pub allow_negative_gamma: bool,
    /// Fixes α instead of computing it (α = 1 disables the corner correction).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_override: Option<T>,
}

impl<T: Real> CgLpSpec<T> {
    pub fn first(omega_r: T, omega_f: T, gamma: T) -> Self {
        Self {
            order: CgLpOrder::First,
            omega_r,
            omega_f,
            gamma,
            beta_r: T::one(),
            allow_negative_gamma: false,
            alpha_override: None,
        }
    }

    pub fn second(omega_r: T, omega_f: T, beta_r: T, gamma: T) -> Self {
        Self { order: CgLpOrder::Second, beta_r, ..Self::first(omega_r, omega_f, gamma) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r > T::zero()) || !self.omega_r.is_finite_val() {
            return Err(Error::InvalidParameter(format!("omega_r = {} must be positive", self.omega_r)));
        }
        // relative slack so that ω_f = 10·ω_r computed in floating point passes
        if !(self.omega_f >= self.omega_r * T::lit(10.0 * (1.0 - 1e-9))) || !self.omega_f.is_finite_val() {
            return Err(Error::InvalidParameter(format!(
                "omega_f = {} must be at least 10 omega_r = {}",
                self.omega_f,
                self.omega_r * T::lit(10.0)
            )));
        }
        let lo = if self.allow_negative_gamma { -T::one() } else { T::zero() };
        if self.gamma < lo || self.gamma > T::one() || !self.gamma.is_finite_val() {
            return Err(Error::InvalidParameter(format!("gamma = {} outside [{lo}, 1]", self.gamma)));
        }
        if self.order == CgLpOrder::Second && (self.beta_r < T::zero() || !self.beta_r.is_finite_val()) {
            return Err(Error::InvalidParameter(format!("beta_r = {} must be >= 0", self.beta_r)));
        }
        if let Some(a) = self.alpha_override {
            if !(a > T::zero()) {
                return Err(Error::InvalidParameter(format!("alpha override {a} must be positive")));
            }
        }
        Ok(())
    }

    fn lag_spec(&self, corner: T) -> ElementSpec<T> {
        match self.order {
            CgLpOrder::First => ElementSpec::gfore(corner, self.gamma),
            CgLpOrder::Second => ElementSpec::gsore(corner, self.beta_r, self.gamma),
        }
    }
}

/// Linear lead `(s/ω_r+1)/(s/ω_f+1)` or
/// `((s/ω_r)²+2β s/ω_r+1)/((s/ω_f)²+2s/ω_f+1)`.
pub fn lead_filter<T: Real>(order: CgLpOrder, omega_r: T, omega_f: T, beta_r: T) -> Result<StateSpace<T>> {
    let two = T::lit(2.0);
    match order {
        CgLpOrder::First => {
            let k = omega_f / omega_r;
            StateSpace::siso(1, &[-omega_f], &[omega_f], &[T::one() - k], k)
        }
        CgLpOrder::Second => {
            let k = omega_f * omega_f / (omega_r * omega_r);
            StateSpace::siso(
                2,
                &[T::zero(), T::one(), -omega_f * omega_f, -two * omega_f],
                &[T::zero(), T::one()],
                &[k * (omega_r * omega_r - omega_f * omega_f), k * (two * beta_r * omega_r - two * omega_f)],
                k,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgLpElement<T: Real> {
    pub spec: CgLpSpec<T>,
    pub alpha: T,
    pub omega_r_alpha: T,
    pub lag: ResetController<T>,
    pub lead: StateSpace<T>,
    /// `series(lag, lead)`: resetting lag states first, lead states after.
    pub realization: ResetController<T>,
}

impl<T: Real> CgLpElement<T> {
    /// Describing function of the element.
    ///
    /// The lead is linear and sits after the lag, so it does not move the
    /// reset instants; the DF factors exactly as `DF(lag)·L(jω)`. This avoids
    /// exponentiating the fast lead poles at wide `ω_f/ω_r` ratios.
    pub fn response(&self, omega: T) -> Result<Cplx<T>> {
        Ok(df_response(&self.lag, omega)? * self.lead.response(omega)?)
    }
}

/// File form of a CgLp element, frequencies in Hz:
/// `{"order": "second", "omega_r_hz": 100.0, "omega_f_hz": 10000.0, "beta_r": 1.0, "gamma": 0.4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgLpSpecFile {
    pub order: CgLpOrder,
    pub omega_r_hz: f64,
    pub omega_f_hz: f64,
    #[serde(default = "one")]
    pub beta_r: f64,
    pub gamma: f64,
    #[serde(default)]
    pub allow_negative_gamma: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_override: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl CgLpSpecFile {
    pub fn to_spec<T: Real>(&self) -> Result<CgLpSpec<T>> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let spec = CgLpSpec {
            order: self.order,
            omega_r: T::lit(two_pi * self.omega_r_hz),
            omega_f: T::lit(two_pi * self.omega_f_hz),
            gamma: T::lit(self.gamma),
            beta_r: T::lit(self.beta_r),
            allow_negative_gamma: self.allow_negative_gamma,
            alpha_override: self.alpha_override.map(T::lit),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn build_cglp<T: Real>(spec: &CgLpSpec<T>) -> Result<CgLpElement<T>> {
    spec.validate()?;
    let alpha = match spec.alpha_override {
        Some(a) => a,
        None => compute_alpha(&spec.lag_spec(spec.omega_r))?,
    };
    let omega_r_alpha = spec.omega_r / alpha;
    let lag = make_element(&spec.lag_spec(omega_r_alpha))?;
    let lead = lead_filter(spec.order, spec.omega_r, spec.omega_f, spec.beta_r)?;
    let realization = series(lag.clone(), &lead)?;
    Ok(CgLpElement { spec: *spec, alpha, omega_r_alpha, lag, lead, realization })
}

/// Phase of the element's DF in degrees (positive is lead).
pub fn phase_lead_at<T: Real>(elem: &CgLpElement<T>, omega: T) -> Result<T> {
    if !(omega > T::zero()) {
        return Err(Error::InvalidParameter(format!("omega = {omega} must be positive")));
    }
    Ok(carg(elem.response(omega)?).to_degrees_val())
}

/// Largest `|mag_db|` of the DF over a 100-point log grid on `band`.
pub fn gain_flatness<T: Real>(elem: &CgLpElement<T>, band: (T, T)) -> Result<T> {
    let (lo, hi) = band;
    let grid = FrequencyGrid::log(lo, hi, 100)?;
    let mut worst = T::zero();
    for &w in grid.omegas() {
        let m = db(cabs(elem.response(w)?)).abs();
        if m > worst {
            worst = m;
        }
    }
    Ok(worst)
}

/// Largest phase lead on an `n`-point log grid over `band`, with its frequency.
pub fn max_phase_lead<T: Real>(elem: &CgLpElement<T>, band: (T, T), n: usize) -> Result<(T, T)> {
    let mut best = (band.0, T::lit(f64::NEG_INFINITY));
    for w in logspace(band.0, band.1, n) {
        let p = phase_lead_at(elem, w)?;
        if p > best.1 {
            best = (w, p);
        }
    }
    Ok(best)
}
