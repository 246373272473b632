//! Sinusoidal-input describing function of reset controllers and the
//! characterizations derived from it (corner shift, phase lag).

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{expm, solve_checked, to_complex};
use crate::model::{linear_response, make_element, ElementKind, ElementSpec, ResetController};
use crate::scalar::{cabs, carg, cpolar, db, logspace, Cplx, Real};

/// Strictly increasing list of positive frequencies in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T: Real> {
    omegas: Vec<T>,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(omegas: Vec<T>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::InvalidParameter("empty frequency grid".into()));
        }
        if omegas.iter().any(|w| !(*w > T::zero()) || !w.is_finite_val()) {
            return Err(Error::InvalidParameter("grid frequencies must be positive and finite".into()));
        }
        if omegas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        Ok(Self { omegas })
    }

    /// `n` log-spaced points over `[lo, hi]` rad/s.
    pub fn log(lo: T, hi: T, n: usize) -> Result<Self> {
        if !(lo > T::zero()) || !(hi > lo) || n < 2 {
            return Err(Error::InvalidParameter(format!("bad log grid [{lo}, {hi}] x {n}")));
        }
        Self::new(logspace(lo, hi, n))
    }

    /// `n` log-spaced points over `[f_lo, f_hi]` Hz.
    pub fn log_hz(f_lo: T, f_hi: T, n: usize) -> Result<Self> {
        let two_pi = T::two_pi();
        Self::log(f_lo * two_pi, f_hi * two_pi, n)
    }

    pub fn omegas(&self) -> &[T] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// Complex gain samples on a grid, optionally with a coherence channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse<T: Real> {
    pub grid: FrequencyGrid<T>,
    pub values: Vec<Cplx<T>>,
    pub coherence: Option<Vec<T>>,
}

impl<T: Real> FrequencyResponse<T> {
    pub fn new(grid: FrequencyGrid<T>, values: Vec<Cplx<T>>, coherence: Option<Vec<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("{} values for {} grid points", values.len(), grid.len())));
        }
        if let Some(c) = &coherence {
            if c.len() != grid.len() {
                return Err(Error::Dimension("coherence length differs from grid".into()));
            }
            if c.iter().any(|x| *x < T::zero() || *x > T::one()) {
                return Err(Error::InvalidParameter("coherence outside [0, 1]".into()));
            }
        }
        Ok(Self { grid, values, coherence })
    }

    pub fn magnitudes_db(&self) -> Vec<T> {
        self.values.iter().map(|v| db(cabs(*v))).collect()
    }

    /// Phase in degrees, unwrapped along the grid and anchored at the lowest frequency.
    pub fn phases_deg(&self) -> Vec<T> {
        unwrap_deg(&self.values.iter().map(|v| carg(*v).to_degrees_val()).collect::<Vec<_>>())
    }

    /// Complex gain at `omega` by log-frequency interpolation of magnitude
    /// (dB) and unwrapped phase. Outside the grid the end values are held.
    pub fn interpolate(&self, omega: T) -> Cplx<T> {
        let w = self.grid.omegas();
        let mag = self.magnitudes_db();
        let ph = self.phases_deg();
        let (m, p) = if omega <= w[0] {
            (mag[0], ph[0])
        } else if omega >= w[w.len() - 1] {
            (mag[w.len() - 1], ph[w.len() - 1])
        } else {
            let k = w.partition_point(|x| *x <= omega) - 1;
            let t = (omega.ln() - w[k].ln()) / (w[k + 1].ln() - w[k].ln());
            (mag[k] + (mag[k + 1] - mag[k]) * t, ph[k] + (ph[k + 1] - ph[k]) * t)
        };
        cpolar(crate::scalar::from_db(m), p.to_radians_val())
    }
}

/// Unwraps a phase sequence in degrees so consecutive samples differ by at most 180°.
pub fn unwrap_deg<T: Real>(phases: &[T]) -> Vec<T> {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = T::zero();
    for (k, &p) in phases.iter().enumerate() {
        if k > 0 {
            let prev: T = out[k - 1];
            let mut cand = p + offset;
            while cand - prev > half {
                cand -= full;
                offset -= full;
            }
            while cand - prev < -half {
                cand += full;
                offset += full;
            }
            out.push(cand);
        } else {
            out.push(p);
        }
    }
    out
}

/// The correction matrix `Θ_ρ(ω)` of the describing function.
pub fn theta<T: Real>(ctrl: &ResetController<T>, omega: T) -> Result<DMatrix<T>> {
    let n = ctrl.order();
    let id = DMatrix::<T>::identity(n, n);
    let a = &ctrl.base.a;
    let e = expm(&(a * (T::pi() / omega)))?;
    let w = omega.as_f64();
    let x = solve_checked(&id + &ctrl.a_rho * &e, &(&id - &ctrl.a_rho), "I + A_rho e^(pi A/w)", w)?;
    let z = (&id + &e) * x;
    let a_w = a / omega;
    let nmat = &a_w * &a_w + &id;
    // Z N⁻¹ through the transposed solve
    let zt = solve_checked(nmat.transpose(), &z.transpose(), "(A/w)^2 + I", w)?;
    Ok(zt.transpose() * (T::lit(2.0) / T::pi()))
}

/// Describing function `C(jωI − A)⁻¹(I + jΘ_ρ(ω))B + D`.
pub fn df_response<T: Real>(ctrl: &ResetController<T>, omega: T) -> Result<Cplx<T>> {
    if !(omega > T::zero()) || !omega.is_finite_val() {
        return Err(Error::InvalidParameter(format!("describing function needs omega > 0, got {omega}")));
    }
    if ctrl.is_linear() {
        return linear_response(&ctrl.base, omega);
    }
    let n = ctrl.order();
    let th = theta(ctrl, omega)?;
    let b = &ctrl.base.b;
    let rhs = DMatrix::from_fn(n, 1, |i, _| {
        let mut acc = Cplx::new(b[(i, 0)], T::zero());
        for k in 0..n {
            acc += Cplx::new(T::zero(), th[(i, k)] * b[(k, 0)]);
        }
        acc
    });
    let jw = Cplx::new(T::zero(), omega);
    let m = DMatrix::<Cplx<T>>::identity(n, n) * jw - to_complex(&ctrl.base.a);
    let x = solve_checked(m, &rhs, "jwI - A", omega.as_f64())?;
    let g = (to_complex(&ctrl.base.c) * x)[(0, 0)] + Cplx::new(ctrl.base.d[(0, 0)], T::zero());
    if !g.re.is_finite_val() || !g.im.is_finite_val() {
        return Err(Error::NonFinite("describing function"));
    }
    Ok(g)
}

/// Result of a sweep: the successful points plus per-point failures.
#[derive(Debug, Clone)]
pub struct Sweep<T: Real> {
    pub response: Option<FrequencyResponse<T>>,
    pub failures: Vec<(T, Error)>,
}

impl<T: Real> Sweep<T> {
    /// The response when every point succeeded.
    pub fn complete(self) -> Result<FrequencyResponse<T>> {
        match (self.response, self.failures.into_iter().next()) {
            (Some(r), None) => Ok(r),
            (_, Some((_, e))) => Err(e),
            (None, None) => Err(Error::InvalidParameter("empty sweep".into())),
        }
    }
}

/// Evaluates `f` over the grid in parallel, keeping grid order.
pub fn sweep_with<T: Real, F>(grid: &FrequencyGrid<T>, f: F) -> Sweep<T>
where
    F: Fn(T) -> Result<Cplx<T>> + Sync,
{
    let results: Vec<(T, Result<Cplx<T>>)> = grid.omegas().par_iter().map(|&w| (w, f(w))).collect();
    let mut ws = Vec::new();
    let mut vs = Vec::new();
    let mut failures = Vec::new();
    for (w, r) in results {
        match r {
            Ok(v) => {
                ws.push(w);
                vs.push(v);
            }
            Err(e) => failures.push((w, e)),
        }
    }
    let response = if ws.is_empty() {
        None
    } else {
        FrequencyGrid::new(ws).ok().and_then(|g| FrequencyResponse::new(g, vs, None).ok())
    };
    Sweep { response, failures }
}

pub fn df_sweep<T: Real>(ctrl: &ResetController<T>, grid: &FrequencyGrid<T>) -> Sweep<T> {
    sweep_with(grid, |w| df_response(ctrl, w))
}

/// Phase lag `−∠G` in degrees (positive is lag).
pub fn phase_lag_at<T: Real>(ctrl: &ResetController<T>, omega: T) -> Result<T> {
    Ok(-carg(df_response(ctrl, omega)?).to_degrees_val())
}

/// How the effective corner of a reset element is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaMethod {
    /// Corner of the base-linear magnitude shape that best fits the DF
    /// magnitude (least squares in dB over `[ω_r/100, 100ω_r]`).
    #[default]
    LeastSquares,
    /// Frequency where the DF magnitude (relative to DC) falls to the level
    /// the base filter has at its own corner.
    ThresholdCrossing,
}

const ALPHA_POINTS: usize = 200;
const ALPHA_SPAN: f64 = 100.0;

/// Corner-shift fraction α of a GFORE/GSORE-type element.
pub fn compute_alpha<T: Real>(spec: &ElementSpec<T>) -> Result<T> {
    compute_alpha_with(spec, AlphaMethod::default())
}

pub fn compute_alpha_with<T: Real>(spec: &ElementSpec<T>, method: AlphaMethod) -> Result<T> {
    spec.validate()?;
    let w_r = spec
        .omega_r
        .ok_or_else(|| Error::InvalidParameter(format!("{:?} has no corner frequency", spec.kind)))?;
    // α depends only on (order, β, γ); evaluate on a unit corner for conditioning
    let mut unit = *spec;
    unit.omega_r = Some(T::one());
    let ctrl = make_element(&unit)?;
    let _ = w_r;
    if ctrl.is_linear() {
        return Ok(T::one());
    }
    let beta = unit.beta_r.unwrap_or(T::one());
    let second = unit.kind.order() == 2;
    let span = T::lit(ALPHA_SPAN);
    let dc = cabs(df_response(&ctrl, T::lit(1e-3))?);
    let shape_db = |x: T| -> T {
        if second {
            let re = T::one() - x * x;
            let im = T::lit(2.0) * beta * x;
            -T::lit(10.0) * (re * re + im * im).log10()
        } else {
            -T::lit(10.0) * (T::one() + x * x).log10()
        }
    };
    match method {
        AlphaMethod::LeastSquares => {
            let ws = logspace(T::one() / span, span, ALPHA_POINTS);
            let target: Vec<T> = ws
                .iter()
                .map(|&w| df_response(&ctrl, w).map(|g| db(cabs(g) / dc)))
                .collect::<Result<_>>()?;
            let cost = |la: T| -> T {
                let alpha = la.exp();
                ws.iter().zip(&target).fold(T::zero(), |s, (&w, &t)| {
                    let r = shape_db(w / alpha) - t;
                    s + r * r
                })
            };
            let lo = T::lit(0.2f64.ln());
            let hi = T::lit(50.0f64.ln());
            let la = minimize_scalar(cost, lo, hi, 120)
                .ok_or_else(|| Error::OutOfRange(format!("alpha fit for {:?} at gamma {} hits the search bound", unit.kind, unit.gamma)))?;
            Ok(la.exp())
        }
        AlphaMethod::ThresholdCrossing => {
            let level = shape_db(T::one());
            let f = |w: T| -> Result<T> { Ok(db(cabs(df_response(&ctrl, w)?) / dc) - level) };
            let ws = logspace(T::one() / span, span, 400);
            let mut prev = (ws[0], f(ws[0])?);
            if prev.1 <= T::zero() {
                return Err(Error::OutOfRange("DF already below the corner level at w_r/100".into()));
            }
            for &w in &ws[1..] {
                let v = f(w)?;
                if v <= T::zero() {
                    let (mut a, mut b) = (prev.0.ln(), w.ln());
                    for _ in 0..80 {
                        let m = (a + b) / T::lit(2.0);
                        if f(m.exp())? > T::zero() {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    return Ok(((a + b) / T::lit(2.0)).exp());
                }
                prev = (w, v);
            }
            Err(Error::OutOfRange(format!("no corner crossing in [w_r/{ALPHA_SPAN}, {ALPHA_SPAN} w_r]")))
        }
    }
}

/// Minimizes `f` on `[lo, hi]` by a coarse scan followed by golden-section
/// refinement. Returns `None` when the minimum sits on the boundary.
pub fn minimize_scalar<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, scan: usize) -> Option<T> {
    let xs: Vec<T> = (0..=scan)
        .map(|k| lo + (hi - lo) * T::from_usize(k).unwrap() / T::from_usize(scan).unwrap())
        .collect();
    let vals: Vec<T> = xs.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for k in 1..vals.len() {
        if vals[k] < vals[best] {
            best = k;
        }
    }
    if best == 0 || best == scan {
        return None;
    }
    let (mut a, mut b) = (xs[best - 1], xs[best + 1]);
    let g = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * g;
    let mut d = a + (b - a) * g;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * g;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * g;
            fd = f(d);
        }
        if (b - a).abs() < T::eps() * T::lit(16.0) * (T::one() + a.abs()) {
            break;
        }
    }
    Some((a + b) / T::lit(2.0))
}

/// Table of α over γ for one element family.
pub fn alpha_table<T: Real>(kind: ElementKind, beta_r: T, gammas: &[T], method: AlphaMethod) -> Vec<(T, Result<T>)> {
    gammas
        .par_iter()
        .map(|&g| {
            let spec = match kind {
                ElementKind::Gsore | ElementKind::Sore => ElementSpec::gsore(T::one(), beta_r, g),
                _ => ElementSpec::gfore(T::one(), g),
            };
            (g, compute_alpha_with(&spec, method))
        })
        .collect()
}

/// One Bode row as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodeRow {
    pub freq_hz: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

pub fn bode_rows<T: Real>(resp: &FrequencyResponse<T>) -> Vec<BodeRow> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mags = resp.magnitudes_db();
    let phs = resp.phases_deg();
    resp.grid
        .omegas()
        .iter()
        .zip(mags.iter().zip(phs.iter()))
        .map(|(w, (m, p))| BodeRow { freq_hz: w.as_f64() / two_pi, mag_db: m.as_f64(), phase_deg: p.as_f64() })
        .collect()
}

/// Writes `freq_hz,mag_db,phase_deg` rows, plus optional extra columns
/// (`extra` holds a header and one value vector per column).
pub fn write_bode_csv<W: Write>(mut w: W, rows: &[BodeRow], extra: &[(&str, Vec<f64>)]) -> Result<()> {
    write!(w, "freq_hz,mag_db,phase_deg")?;
    for (h, _) in extra {
        write!(w, ",{h}")?;
    }
    writeln!(w)?;
    for (k, r) in rows.iter().enumerate() {
        write!(w, "{},{},{}", r.freq_hz, r.mag_db, r.phase_deg)?;
        for (_, col) in extra {
            write!(w, ",{}", col[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a Bode CSV (as written by [`write_bode_csv`]) into a response.
pub fn read_bode_csv<R: BufRead>(r: R) -> Result<FrequencyResponse<f64>> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse("empty bode file".into())),
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse(format!("line 1: missing column {name}")))
    };
    let (fi, mi, pi) = (idx("freq_hz")?, idx("mag_db")?, idx("phase_deg")?);
    let mut ws = Vec::new();
    let mut vs = Vec::new();
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize, name: &str| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| Error::Parse(format!("line {}: missing {name}", k + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: field {name}: {e}", k + 1)))
        };
        let f = get(fi, "freq_hz")?;
        let m = get(mi, "mag_db")?;
        let p = get(pi, "phase_deg")?;
        ws.push(2.0 * std::f64::consts::PI * f);
        vs.push(Cplx::from_polar(10f64.powf(m / 20.0), p.to_radians()));
    }
    FrequencyResponse::new(FrequencyGrid::new(ws)?, vs, None)
}
