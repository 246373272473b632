//! Quadratic stability of reset control loops through the restricted
//! Lyapunov conditions `P > 0`, `A_clᵀP + PA_cl < 0`, `B₀ᵀP = C₀`,
//! with `C₀ = [βC_p, 0, P_ρ]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{balance, eigenvalues, is_hurwitz, spectral_abscissa, sym_eig_range, sym_norm};
use crate::model::{ResetController, StateSpace};
use crate::scalar::Real;

/// Closed loop with states ordered (plant, non-resetting, resetting).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop<T: Real> {
    pub a: DMatrix<T>,
    /// Reference input column (`r` enters as the controller input).
    pub b_ref: DMatrix<T>,
    /// Plant output row over the closed-loop states.
    pub c_out: DMatrix<T>,
    pub c_p: DMatrix<T>,
    pub n_p: usize,
    pub n_nr: usize,
    pub n_r: usize,
    /// Diagonal state scaling: assembled states are `diag(scaling)·x`.
    pub scaling: Vec<T>,
}

impl<T: Real> ClosedLoop<T> {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `B₀ = [0; 0; I_{n_r}]`.
    pub fn b0(&self) -> DMatrix<T> {
        let n = self.order();
        let mut b = DMatrix::zeros(n, self.n_r);
        for k in 0..self.n_r {
            b[(n - self.n_r + k, k)] = T::one();
        }
        b
    }

    /// `C₀ = [βC_p, 0, P_ρ]`.
    pub fn c0(&self, beta: &[T], p_rho: &DMatrix<T>) -> DMatrix<T> {
        let mut c = DMatrix::zeros(self.n_r, self.order());
        for i in 0..self.n_r {
            for j in 0..self.n_p {
                c[(i, j)] = beta[i] * self.c_p[(0, j)];
            }
            for j in 0..self.n_r {
                c[(i, self.n_p + self.n_nr + j)] = p_rho[(i, j)];
            }
        }
        c
    }

    /// Reference-to-output system of the base linear loop.
    pub fn tracking_system(&self) -> Result<StateSpace<T>> {
        StateSpace::new(self.a.clone(), self.b_ref.clone(), self.c_out.clone(), DMatrix::zeros(1, 1))
    }
}

/// Assembles `[[A_p − B_pD_rC_p, B_pC_r], [−B_rC_p, A_r]]` with the
/// controller states permuted so the resetting block comes last, then
/// balances it by a diagonal similarity. Diagonal scaling keeps the
/// `[βC_p, 0, P_ρ]` row structure, so certificates stay meaningful while
/// their entries stay within a sane dynamic range.
///
/// A controller whose reset map is the identity never changes state on a
/// reset and is treated as fully non-resetting.
pub fn build_closed_loop<T: Real>(plant: &StateSpace<T>, ctrl: &ResetController<T>) -> Result<ClosedLoop<T>> {
    if !plant.is_siso() {
        return Err(Error::Dimension("plant must be SISO".into()));
    }
    let dp = plant.d[(0, 0)];
    let dr = ctrl.base.d[(0, 0)];
    if dp != T::zero() && dr != T::zero() {
        return Err(Error::InvalidParameter("algebraic loop: plant and controller both have feedthrough".into()));
    }
    if dp != T::zero() {
        return Err(Error::InvalidParameter("plant feedthrough is not supported".into()));
    }
    let (n_p, n_c) = (plant.order(), ctrl.order());
    let n_r = if ctrl.is_linear() { 0 } else { ctrl.n_r };
    let n_nr = n_c - n_r;
    // controller state k (reset first) goes to closed-loop index perm[k]
    let perm: Vec<usize> = (0..n_c).map(|k| if k < n_r { n_p + n_nr + k } else { n_p + (k - n_r) }).collect();
    let n = n_p + n_c;
    let (ap, bp, cp) = (&plant.a, &plant.b, &plant.c);
    let (ar, br, cr) = (&ctrl.base.a, &ctrl.base.b, &ctrl.base.c);
    let mut a = DMatrix::zeros(n, n);
    let top = ap - bp * cp * dr;
    a.view_mut((0, 0), (n_p, n_p)).copy_from(&top);
    let bpcr = bp * cr;
    for i in 0..n_p {
        for k in 0..n_c {
            a[(i, perm[k])] = bpcr[(i, k)];
        }
    }
    let brcp = br * cp;
    for k in 0..n_c {
        for j in 0..n_p {
            a[(perm[k], j)] = -brcp[(k, j)];
        }
        for l in 0..n_c {
            a[(perm[k], perm[l])] = ar[(k, l)];
        }
    }
    let mut b_ref = DMatrix::zeros(n, 1);
    for i in 0..n_p {
        b_ref[(i, 0)] = bp[(i, 0)] * dr;
    }
    for k in 0..n_c {
        b_ref[(perm[k], 0)] = br[(k, 0)];
    }
    let mut c_out = DMatrix::zeros(1, n);
    c_out.view_mut((0, 0), (1, n_p)).copy_from(cp);
    if a.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("closed-loop matrix"));
    }
    let (a, d) = balance(&a);
    let b_ref = DMatrix::from_fn(n, 1, |i, _| b_ref[(i, 0)] / d[i]);
    let c_out = DMatrix::from_fn(1, n, |_, j| c_out[(0, j)] * d[j]);
    let c_p = DMatrix::from_fn(1, n_p, |_, j| cp[(0, j)] * d[j]);
    Ok(ClosedLoop { a, b_ref, c_out, c_p, n_p, n_nr, n_r, scaling: d })
}

/// Residuals of the certificate conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub min_eig_p: f64,
    pub max_eig_lyap: f64,
    pub constraint_norm: f64,
    pub symmetry: f64,
    pub p_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate<T: Real> {
    pub p: DMatrix<T>,
    pub beta: Vec<T>,
    pub p_rho: DMatrix<T>,
    pub residuals: Residuals,
}

/// Margins applied to the strict inequalities.
pub const MIN_EIG_P: f64 = 1e-8;
pub const LYAP_MARGIN: f64 = 1e-8;
pub const CONSTRAINT_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Checks a certificate from scratch. Returns `(pass, residuals)`.
pub fn verify_certificate<T: Real>(
    p: &DMatrix<T>,
    beta: &[T],
    p_rho: &DMatrix<T>,
    cl: &ClosedLoop<T>,
) -> (bool, Residuals) {
    let n = cl.order();
    let bad = Residuals {
        min_eig_p: f64::NAN,
        max_eig_lyap: f64::NAN,
        constraint_norm: f64::INFINITY,
        symmetry: f64::INFINITY,
        p_norm: f64::NAN,
    };
    if p.nrows() != n || p.ncols() != n || beta.len() != cl.n_r || p_rho.nrows() != cl.n_r || p_rho.ncols() != cl.n_r {
        return (false, bad);
    }
    if p.iter().chain(p_rho.iter()).chain(beta.iter()).any(|x| !x.is_finite_val()) {
        return (false, bad);
    }
    let p_norm = sym_norm(p).as_f64();
    let symmetry = (p - p.transpose()).abs().max().as_f64();
    let (min_p, _) = sym_eig_range(p);
    let lyap = cl.a.transpose() * p + p * &cl.a;
    let (_, max_l) = sym_eig_range(&lyap);
    let resid = cl.b0().transpose() * p - cl.c0(beta, p_rho);
    let constraint_norm = resid.iter().fold(0.0f64, |m, x| m.max(x.as_f64().abs()));
    let (min_rho, _) = if cl.n_r > 0 { sym_eig_range(p_rho) } else { (T::one(), T::one()) };
    let r = Residuals {
        min_eig_p: min_p.as_f64(),
        max_eig_lyap: max_l.as_f64(),
        constraint_norm,
        symmetry,
        p_norm,
    };
    let pass = symmetry <= SYMMETRY_TOL * p_norm.max(1.0)
        && r.min_eig_p >= MIN_EIG_P
        && r.max_eig_lyap <= -LYAP_MARGIN * p_norm
        && constraint_norm <= CONSTRAINT_TOL * p_norm
        && min_rho > T::zero();
    (pass, r)
}

/// Outcome of the certificate search.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<T: Real> {
    Feasible(StabilityCertificate<T>),
    /// The base linear loop is not Hurwitz, a necessary condition.
    Infeasible { abscissa: T },
    /// No certificate within the budget; the conditions are only sufficient.
    Unknown { best_margin: T, iterations: usize },
}

impl<T: Real> Verdict<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Feasible(_) => "feasible",
            Verdict::Infeasible { .. } => "infeasible",
            Verdict::Unknown { .. } => "unknown",
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { iterations: 5000, restarts: 20, seed: 0 }
    }
}

/// Decision variables: upper triangle of the free block of `P`
/// (plant and non-resetting states), `β`, and upper triangle of `P_ρ`.
struct Layout {
    n: usize,
    m: usize,
    n_r: usize,
    c_p: Vec<f64>,
    n_p: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        self.m * (self.m + 1) / 2 + self.n_r + self.n_r * (self.n_r + 1) / 2
    }

    fn p_of(&self, th: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.m {
            for j in i..self.m {
                p[(i, j)] = th[k];
                p[(j, i)] = th[k];
                k += 1;
            }
        }
        for r in 0..self.n_r {
            let b = th[k];
            k += 1;
            for j in 0..self.n_p {
                p[(self.m + r, j)] = b * self.c_p[j];
                p[(j, self.m + r)] = b * self.c_p[j];
            }
        }
        for i in 0..self.n_r {
            for j in i..self.n_r {
                p[(self.m + i, self.m + j)] = th[k];
                p[(self.m + j, self.m + i)] = th[k];
                k += 1;
            }
        }
        p
    }

    /// Gradient in θ of `tr(G P(θ))` for symmetric `G`.
    fn pullback(&self, g: &DMatrix<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.m {
            for j in i..self.m {
                out.push(if i == j { g[(i, i)] } else { 2.0 * g[(i, j)] });
            }
        }
        for r in 0..self.n_r {
            let s: f64 = (0..self.n_p).map(|j| 2.0 * g[(self.m + r, j)] * self.c_p[j]).sum();
            out.push(s);
        }
        for i in 0..self.n_r {
            for j in i..self.n_r {
                out.push(if i == j { g[(self.m + i, self.m + i)] } else { 2.0 * g[(self.m + i, self.m + j)] });
            }
        }
        out
    }

    fn trace_dir(&self) -> Vec<f64> {
        self.pullback(&DMatrix::identity(self.n, self.n))
    }

    fn identity_start(&self) -> Vec<f64> {
        let mut th = vec![0.0; self.dim()];
        let mut k = 0;
        for i in 0..self.m {
            for j in i..self.m {
                if i == j {
                    th[k] = 1.0;
                }
                k += 1;
            }
        }
        k += self.n_r;
        for i in 0..self.n_r {
            for j in i..self.n_r {
                if i == j {
                    th[k] = 1.0;
                }
                k += 1;
            }
        }
        th
    }
}

struct Attempt {
    theta: Vec<f64>,
    /// Achieved `t` with `−(AᵀP+PA) ⪰ tI`, `P ⪰ tI`; positive is feasible.
    t: f64,
}

/// Log-det barrier path following for
/// `max t  s.t.  −(AᵀP+PA) − tI ⪰ 0,  P − tI ⪰ 0,  tr P = n`.
fn barrier(a: &DMatrix<f64>, lay: &Layout, start: Vec<f64>, budget: usize) -> Attempt {
    let n = lay.n;
    let nv = lay.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let basis: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..nv)
        .map(|k| {
            let mut e = vec![0.0; nv];
            e[k] = 1.0;
            let ek = lay.p_of(&e);
            (-(a.transpose() * &ek + &ek * a), ek)
        })
        .chain(std::iter::once((-id.clone(), -id.clone())))
        .collect();
    let mut eq = lay.trace_dir();
    eq.push(0.0);
    let build = |x: &[f64]| -> (DMatrix<f64>, DMatrix<f64>) {
        let p = lay.p_of(&x[..nv]);
        let t = x[nv];
        (-(a.transpose() * &p + &p * a) - &id * t, p - &id * t)
    };
    let tr: f64 = start.iter().zip(&eq).map(|(x, d)| x * d).sum();
    let mut x: Vec<f64> = start.iter().map(|v| v * n as f64 / tr).collect();
    let (f1, f2) = build(&{
        let mut z = x.clone();
        z.push(0.0);
        z
    });
    let lo = sym_eig_range(&f1).0.min(sym_eig_range(&f2).0);
    x.push(lo - 1.0);
    let nx = nv + 1;
    let phi = |x: &[f64], s: f64| -> Option<f64> {
        let (f1, f2) = build(x);
        let c1 = f1.cholesky()?;
        let c2 = f2.cholesky()?;
        let ld = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(-s * x[nv] - ld(&c1) - ld(&c2))
    };
    let mut s = 1.0;
    let mut used = 0;
    let mut best = x[nv];
    'outer: loop {
        loop {
            if used >= budget {
                break 'outer;
            }
            used += 1;
            let (f1, f2) = build(&x);
            let (Some(c1), Some(c2)) = (f1.cholesky(), f2.cholesky()) else { break 'outer };
            let (i1, i2) = (c1.inverse(), c2.inverse());
            let w: Vec<(DMatrix<f64>, DMatrix<f64>)> = basis.iter().map(|(b1, b2)| (&i1 * b1, &i2 * b2)).collect();
            let mut g = vec![0.0; nx];
            let mut h = DMatrix::<f64>::zeros(nx + 1, nx + 1);
            for i in 0..nx {
                g[i] = -(w[i].0.trace() + w[i].1.trace());
                for j in i..nx {
                    let v = (w[i].0.component_mul(&w[j].0.transpose())).sum()
                        + (w[i].1.component_mul(&w[j].1.transpose())).sum();
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
                h[(i, nx)] = eq[i];
                h[(nx, i)] = eq[i];
            }
            g[nv] -= s;
            let rhs = DMatrix::from_fn(nx + 1, 1, |i, _| if i < nx { -g[i] } else { 0.0 });
            let Some(dx) = h.lu().solve(&rhs) else { break 'outer };
            let dec: f64 = -(0..nx).map(|i| g[i] * dx[(i, 0)]).sum::<f64>();
            if !dec.is_finite() {
                break 'outer;
            }
            if dec / 2.0 < 1e-10 {
                break;
            }
            let f0 = phi(&x, s).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = (0..nx).map(|i| x[i] + step * dx[(i, 0)]).collect();
                if let Some(fc) = phi(&cand, s) {
                    if fc <= f0 - 0.25 * step * dec {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best = best.max(x[nv]);
        // stop once the centered point is within 1% of the optimal margin
        if x[nv] > 0.0 && ((2 * n) as f64 / s) < 0.01 * x[nv] {
            break;
        }
        // duality gap 2n/s bounds how far the optimum can be above x[nv]
        if x[nv] + (2 * n) as f64 / s < 0.0 || s > 1e12 {
            break;
        }
        s *= 8.0;
    }
    best = best.max(x[nv]);
    Attempt { theta: x[..nv].to_vec(), t: best }
}

/// Searches for `(P, β, P_ρ)` satisfying the restricted Lyapunov conditions.
pub fn find_certificate<T: Real>(cl: &ClosedLoop<T>, opts: &SearchOptions) -> Result<Verdict<T>> {
    let n = cl.order();
    if cl.a.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("closed-loop matrix"));
    }
    if !is_hurwitz(&cl.a) {
        return Ok(Verdict::Infeasible { abscissa: spectral_abscissa(&cl.a) });
    }
    let a64 = cl.a.map(|x| x.as_f64());
    // balance, then scale time so ‖A‖ ~ 1; neither changes feasibility
    let (ab, d) = balance(&a64);
    let scale = crate::linalg::norm1(&ab).max(1e-300);
    let a_s = ab / scale;
    let m = cl.n_p + cl.n_nr;
    let c_p: Vec<f64> = (0..cl.n_p).map(|j| cl.c_p[(0, j)].as_f64() * d[j]).collect();
    let lay = Layout { n, m, n_r: cl.n_r, c_p, n_p: cl.n_p };
    let restarts = opts.restarts.max(1);
    let attempts: Vec<(usize, Attempt)> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut start = lay.identity_start();
            if k > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
                for x in start.iter_mut() {
                    *x += rng.random_range(-0.2..0.2) / (n as f64);
                }
            }
            (k, barrier(&a_s, &lay, start, opts.iterations))
        })
        .collect();
    let mut best_margin = f64::INFINITY;
    for (_, att) in attempts.iter() {
        best_margin = best_margin.min(-att.t);
        if att.t <= 0.0 {
            continue;
        }
        // undo balancing: P = D⁻¹ P_s D⁻¹, β = β_s / d_r, P_ρ = D_r⁻¹ P_ρs D_r⁻¹
        let ps = lay.p_of(&att.theta);
        let mut p = DMatrix::from_fn(n, n, |i, j| ps[(i, j)] / (d[i] * d[j]));
        p = (&p + p.transpose()) * 0.5;
        let pn = sym_norm(&p);
        p /= pn;
        let mut beta = Vec::with_capacity(cl.n_r);
        let mut k = m * (m + 1) / 2;
        for r in 0..cl.n_r {
            beta.push(att.theta[k] / (d[m + r] * pn));
            k += 1;
        }
        let p_rho = p.view((m, m), (cl.n_r, cl.n_r)).into_owned();
        // restore exact structure of the constrained rows
        for r in 0..cl.n_r {
            for j in 0..cl.n_p {
                let v = beta[r] * cl.c_p[(0, j)].as_f64();
                p[(m + r, j)] = v;
                p[(j, m + r)] = v;
            }
            for j in cl.n_p..m {
                p[(m + r, j)] = 0.0;
                p[(j, m + r)] = 0.0;
            }
        }
        let p_t = p.map(T::lit);
        let beta_t: Vec<T> = beta.iter().map(|&b| T::lit(b)).collect();
        let p_rho_t = p_rho.map(T::lit);
        let (pass, residuals) = verify_certificate(&p_t, &beta_t, &p_rho_t, cl);
        if pass {
            return Ok(Verdict::Feasible(StabilityCertificate { p: p_t, beta: beta_t, p_rho: p_rho_t, residuals }));
        }
    }
    if !best_margin.is_finite() {
        return Err(Error::NonFinite("certificate search"));
    }
    Ok(Verdict::Unknown { best_margin: T::lit(best_margin), iterations: opts.iterations })
}

/// Serializable summary: `{verdict, residuals, beta, eigs}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: String,
    pub residuals: Option<Residuals>,
    pub beta: Option<Vec<f64>>,
    /// Eigenvalues of the base linear closed loop as `[re, im]`.
    pub eigs: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_margin: Option<f64>,
}

impl StabilityReport {
    pub fn new<T: Real>(cl: &ClosedLoop<T>, v: &Verdict<T>) -> Self {
        let mut eigs: Vec<[f64; 2]> = eigenvalues(&cl.a).iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect();
        eigs.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let (residuals, beta, best_margin) = match v {
            Verdict::Feasible(c) => (Some(c.residuals), Some(c.beta.iter().map(|b| b.as_f64()).collect()), None),
            Verdict::Infeasible { .. } => (None, None, None),
            Verdict::Unknown { best_margin, .. } => (None, None, Some(best_margin.as_f64())),
        };
        Self { verdict: v.name().into(), residuals, beta, eigs, best_margin }
    }
}
