//! Chirp excitation, Welch frequency-response and coherence estimates, and
//! the first-harmonic simulation oracle for the describing function.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::describing::{FrequencyGrid, FrequencyResponse};
use crate::error::{Error, Result};
use crate::linalg::{expm, spectral_abscissa, spectral_radius};
use crate::model::ResetController;
use crate::scalar::{Cplx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Segment length in samples.
    pub length: usize,
    /// Overlap as a fraction of the segment, in `[0, 1)`.
    pub overlap: f64,
    pub taper: Taper,
}

impl WindowSpec {
    /// Hann, 50% overlap, one second of data per segment.
    pub fn default_for(fs: f64) -> Self {
        Self { length: fs.round().max(8.0) as usize, overlap: 0.5, taper: Taper::Hann }
    }

    fn weights<T: Real>(&self) -> Vec<T> {
        let n = self.length;
        match self.taper {
            Taper::Rectangular => vec![T::one(); n],
            // periodic Hann
            Taper::Hann => (0..n)
                .map(|k| {
                    let x = T::two_pi() * T::lit(k as f64) / T::lit(n as f64);
                    (T::one() - x.cos()) / T::lit(2.0)
                })
                .collect(),
        }
    }

    fn hop(&self) -> usize {
        (((1.0 - self.overlap) * self.length as f64).round() as usize).max(1)
    }

    pub fn segments(&self, record: usize) -> usize {
        if record < self.length {
            0
        } else {
            (record - self.length) / self.hop() + 1
        }
    }
}

/// Linear chirp `A·sin(2π(f₀t + (f₁−f₀)t²/(2D)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub duration_s: f64,
    pub amplitude: f64,
}

impl ChirpSpec {
    pub fn phase(&self, t: f64) -> f64 {
        let k = (self.f1_hz - self.f0_hz) / self.duration_s;
        2.0 * std::f64::consts::PI * (self.f0_hz * t + 0.5 * k * t * t)
    }

    pub fn frequency_hz(&self, t: f64) -> f64 {
        self.f0_hz + (self.f1_hz - self.f0_hz) * t / self.duration_s
    }
}

pub fn make_chirp<T: Real>(f0: f64, f1: f64, duration: f64, fs: f64, amplitude: f64) -> Result<(ChirpSpec, Vec<T>)> {
    if !(f0 > 0.0) || !(f1 > 0.0) {
        return Err(Error::InvalidParameter(format!("chirp frequencies must be positive (f0 = {f0}, f1 = {f1})")));
    }
    if !(fs > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidParameter("chirp needs positive fs and duration".into()));
    }
    if f1 > fs / 2.5 || f0 > fs / 2.5 {
        return Err(Error::InvalidParameter(format!("chirp up to {} Hz aliases at fs = {fs} Hz", f0.max(f1))));
    }
    let spec = ChirpSpec { f0_hz: f0, f1_hz: f1, duration_s: duration, amplitude };
    let n = (duration * fs).round() as usize;
    let x = (0..n).map(|k| T::lit(amplitude * spec.phase(k as f64 / fs).sin())).collect();
    Ok((spec, x))
}

/// Averaged cross-spectra of two records.
struct Spectra<T> {
    sxx: Vec<T>,
    syy: Vec<T>,
    sxy: Vec<Complex<T>>,
    segments: usize,
}

fn fft_plan<T: FftNum>(n: usize) -> Arc<dyn Fft<T>> {
    FftPlanner::new().plan_fft_forward(n)
}

fn windowed_fft<T: Real + FftNum>(fft: &dyn Fft<T>, x: &[T], w: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = x.iter().zip(w).map(|(&a, &b)| Complex::new(a * b, T::zero())).collect();
    fft.process(&mut buf);
    buf
}

fn cross_spectra<T: Real + FftNum>(x: &[T], y: &[T], win: &WindowSpec) -> Spectra<T> {
    let l = win.length;
    let w = win.weights::<T>();
    let fft = fft_plan::<T>(l);
    let half = l / 2 + 1;
    let mut sxx = vec![T::zero(); half];
    let mut syy = vec![T::zero(); half];
    let mut sxy = vec![Complex::new(T::zero(), T::zero()); half];
    let segs = win.segments(x.len());
    let hop = win.hop();
    for m in 0..segs {
        let a = m * hop;
        let fx = windowed_fft(fft.as_ref(), &x[a..a + l], &w);
        let fy = windowed_fft(fft.as_ref(), &y[a..a + l], &w);
        for k in 0..half {
            sxx[k] += fx[k].norm_sqr();
            syy[k] += fy[k].norm_sqr();
            sxy[k] += fx[k].conj() * fy[k];
        }
    }
    Spectra { sxx, syy, sxy, segments: segs }
}

/// One-sided power spectral density by Welch averaging (Hann taper),
/// normalized so that `Σ psd·Δf` equals the mean square.
pub fn welch_psd(x: &[f64], length: usize, overlap: f64) -> Vec<f64> {
    let win = WindowSpec { length, overlap, taper: Taper::Hann };
    psd_with(x, 1.0, &win)
}

/// One-sided PSD with sample rate `fs`.
pub fn psd_with<T: Real + FftNum>(x: &[T], fs: T, win: &WindowSpec) -> Vec<T> {
    let s = cross_spectra(x, x, win);
    if s.segments == 0 {
        return Vec::new();
    }
    let w = win.weights::<T>();
    let u: T = w.iter().fold(T::zero(), |a, &b| a + b * b);
    let norm = T::one() / (T::lit(s.segments as f64) * u * fs);
    let l = win.length;
    s.sxx
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (l % 2 == 0 && k == l / 2);
            p * norm * if edge { T::one() } else { T::lit(2.0) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate<T: Real> {
    /// Frequency response with coherence populated; masked bins omitted.
    pub response: FrequencyResponse<T>,
    pub window: WindowSpec,
    pub excitation: Option<ChirpSpec>,
    pub segments: usize,
    /// Fewer than four segments were averaged.
    pub low_confidence: bool,
}

/// H₁ estimate `S_xy/S_xx` with coherence `|S_xy|²/(S_xx·S_yy)`.
pub fn estimate_frf<T: Real + FftNum>(input: &[T], output: &[T], fs: T, window: &WindowSpec) -> Result<SpectralEstimate<T>> {
    if input.len() != output.len() {
        return Err(Error::Dimension(format!("records of {} and {} samples", input.len(), output.len())));
    }
    if !(fs > T::zero()) {
        return Err(Error::InvalidParameter(format!("fs = {fs}")));
    }
    if window.length < 4 || window.length > input.len() {
        return Err(Error::InvalidParameter(format!(
            "window of {} samples for a record of {}",
            window.length,
            input.len()
        )));
    }
    if !(0.0..1.0).contains(&window.overlap) {
        return Err(Error::InvalidParameter(format!("overlap = {}", window.overlap)));
    }
    let s = cross_spectra(input, output, window);
    let l = window.length;
    let df = fs / T::lit(l as f64);
    let peak = s.sxx.iter().fold(T::zero(), |m, &v| m.max(v));
    let floor = peak * T::eps() * T::lit(1e3);
    let (mut omegas, mut values, mut coh) = (Vec::new(), Vec::new(), Vec::new());
    for k in 1..=l / 2 {
        if !(s.sxx[k] > floor) {
            continue;
        }
        let h = s.sxy[k] / s.sxx[k];
        let c = if s.syy[k] > T::zero() { s.sxy[k].norm_sqr() / (s.sxx[k] * s.syy[k]) } else { T::zero() };
        omegas.push(T::two_pi() * df * T::lit(k as f64));
        values.push(Cplx::new(h.re, h.im));
        coh.push(c.min(T::one()).max(T::zero()));
    }
    if omegas.is_empty() {
        return Err(Error::InvalidParameter("input has no spectral content".into()));
    }
    let response = FrequencyResponse::new(FrequencyGrid::new(omegas)?, values, Some(coh))?;
    Ok(SpectralEstimate { response, window: *window, excitation: None, segments: s.segments, low_confidence: s.segments < 4 })
}

/// Frequency of the strongest bin in each short-time segment, as
/// `(segment centre s, frequency Hz)`.
pub fn spectrogram_ridge<T: Real + FftNum>(x: &[T], fs: f64, window: &WindowSpec) -> Vec<(f64, f64)> {
    let w = window.weights::<T>();
    let fft = fft_plan::<T>(window.length);
    let hop = window.hop();
    (0..window.segments(x.len()))
        .map(|m| {
            let a = m * hop;
            let f = windowed_fft(fft.as_ref(), &x[a..a + window.length], &w);
            let k = (1..=window.length / 2)
                .max_by(|&i, &j| f[i].norm_sqr().partial_cmp(&f[j].norm_sqr()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0);
            ((a as f64 + window.length as f64 / 2.0) / fs, k as f64 * fs / window.length as f64)
        })
        .collect()
}

pub const MIN_ORACLE_CYCLES: usize = 20;
pub const MIN_SAMPLES_PER_CYCLE: usize = 200;

/// First-harmonic gain of `ctrl` driven by `sin(ωt)`, from simulation.
pub fn first_harmonic<T: Real>(ctrl: &ResetController<T>, omega: T, cycles: usize) -> Result<Cplx<T>> {
    first_harmonic_with(ctrl, omega, cycles, 256)
}

/// The input is generated by an exact oscillator appended to the state, so
/// propagation between samples is exact; the sample count per cycle is even
/// so that each zero crossing of the input falls on a sample, where the
/// reset is applied. Cycles are extended until transients of the base
/// dynamics have decayed below 1e-10 before the projection window.
pub fn first_harmonic_with<T: Real>(ctrl: &ResetController<T>, omega: T, cycles: usize, samples_per_cycle: usize) -> Result<Cplx<T>> {
    if cycles < MIN_ORACLE_CYCLES {
        return Err(Error::InvalidParameter(format!("{cycles} cycles, need at least {MIN_ORACLE_CYCLES}")));
    }
    if samples_per_cycle < MIN_SAMPLES_PER_CYCLE || samples_per_cycle % 4 != 0 {
        return Err(Error::InvalidParameter(format!(
            "{samples_per_cycle} samples per cycle, need a multiple of 4 of at least {MIN_SAMPLES_PER_CYCLE}"
        )));
    }
    if !(omega > T::zero()) || !omega.is_finite_val() {
        return Err(Error::InvalidParameter(format!("omega = {omega}")));
    }
    let base = &ctrl.base;
    let n = ctrl.order();
    let n_r = ctrl.n_r;
    let half = samples_per_cycle / 2;
    let dt = T::two_pi() / (omega * T::lit(samples_per_cycle as f64));
    // augmented state [x; s; c] with s' = ωc, c' = −ωs and input e = s
    let mut m = DMatrix::zeros(n + 2, n + 2);
    m.view_mut((0, 0), (n, n)).copy_from(&base.a);
    for i in 0..n {
        m[(i, n)] = base.b[(i, 0)];
    }
    m[(n, n + 1)] = omega;
    m[(n + 1, n)] = -omega;
    let phi = expm(&(m * dt))?;
    let (c, d) = (base.c.clone(), base.d[(0, 0)]);
    let out = |z: &DVector<T>| -> T {
        let mut y = d * z[n];
        for i in 0..n {
            y += c[(0, i)] * z[i];
        }
        y
    };
    let settle = {
        let sigma = -spectral_abscissa(&base.a).as_f64();
        let per_cycle = sigma * std::f64::consts::TAU / omega.as_f64();
        if per_cycle > 0.0 {
            ((23.0 / per_cycle).ceil() as usize).min(200_000)
        } else {
            0
        }
    };
    let keep = cycles.div_ceil(2).max(10);
    let skip = (cycles - cycles.div_ceil(2)).max(settle);
    let total = skip + keep;
    let a_rho = ctrl.a_rho.view((0, 0), (n_r, n_r)).into_owned();
    let resetting = !ctrl.is_linear() && n_r > 0;
    // the non-resetting block is never pulled back by a reset
    let k = if resetting { n_r } else { 0 };
    if k < n {
        let ann = base.a.view((k, k), (n - k, n - k)).into_owned();
        let abscissa = spectral_abscissa(&ann).as_f64();
        if abscissa > 1e-12 {
            return Err(Error::NoConvergence(format!("base dynamics are unstable (spectral abscissa {abscissa})")));
        }
    }
    if resetting {
        // resetting states sit upstream, so their half-period map is A_ρ e^{A_rr π/ω}
        let arr = base.a.view((0, 0), (n_r, n_r)).into_owned();
        let e = expm(&(arr * (T::pi() / omega)))?;
        let r = spectral_radius(&(&a_rho * e)).as_f64();
        if r >= 1.0 - 1e-9 {
            return Err(Error::NoConvergence(format!("no periodic steady state: half-period reset map has spectral radius {r}")));
        }
    }
    let mut z = DVector::zeros(n + 2);
    z[n + 1] = T::one();
    let mut next = z.clone();
    let (mut acc_s, mut acc_c) = (T::zero(), T::zero());
    // Simpson weights over each half period, endpoints taken on either side
    // of the reset
    let h3 = dt / T::lit(3.0);
    for seg in 0..2 * total {
        let project = seg >= 2 * skip;
        for j in 0..=half {
            if project {
                let u = out(&z);
                let w = if j == 0 || j == half {
                    T::one()
                } else if j % 2 == 1 {
                    T::lit(4.0)
                } else {
                    T::lit(2.0)
                };
                acc_s += h3 * w * u * z[n];
                acc_c += h3 * w * u * z[n + 1];
            }
            if j < half {
                next.gemv(T::one(), &phi, &z, T::zero());
                std::mem::swap(&mut z, &mut next);
            }
        }
        if !z.iter().all(|v| v.is_finite_val()) || z.amax() > T::lit(1e150) {
            return Err(Error::Diverged { time: (dt * T::lit((seg * half) as f64)).as_f64(), magnitude: z.amax().as_f64() });
        }
        // the oscillator is at a zero crossing here
        z[n] = T::zero();
        if resetting {
            let xr = &a_rho * z.rows(0, n_r);
            z.rows_mut(0, n_r).copy_from(&xr);
        }
    }
    let span = T::two_pi() / omega * T::lit(keep as f64);
    let k = T::lit(2.0) / span;
    Ok(Cplx::new(acc_s * k, acc_c * k))
}
