//! Dense linear-algebra helpers: matrix exponential, complex solves and
//! eigenvalue checks on the small matrices this toolbox works with.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Largest 1-norm (after balancing) accepted by [`expm`].
pub const EXPM_NORM_LIMIT: f64 = 1.0e4;

// Padé(13) coefficients and scaling threshold (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

pub fn norm1<T: Real>(a: &DMatrix<T>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, &x| s + x.abs()))
        .fold(T::zero(), |m, s| if s > m { s } else { m })
}

/// Diagonal similarity `D⁻¹ A D` with power-of-two entries that evens out
/// row and column norms. Returns the balanced matrix and the diagonal of `D`.
pub fn balance<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![T::one(); n];
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    for _sweep in 0..64 {
        let mut changed = false;
        for i in 0..n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut cc = c;
            let rr = r;
            while cc < rr / two {
                cc *= four;
                f *= two;
            }
            while cc >= rr * two {
                cc /= four;
                f /= two;
            }
            // accept only a meaningful reduction of the combined norm
            if (c * f + r / f) < T::lit(0.95) * s {
                changed = true;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (b, d)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant, applied to the balanced matrix.
pub fn expm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("expm of {}x{} matrix", n, a.ncols())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("expm argument"));
    }
    let (b, d) = balance(a);
    let nrm = norm1(&b).as_f64();
    if nrm > EXPM_NORM_LIMIT {
        return Err(Error::ExpmRange { norm: nrm, limit: EXPM_NORM_LIMIT });
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = T::lit(2f64.powi(-s));
    let a1 = &b * scale;
    let e = pade13(&a1)?;
    let mut e = e;
    for _ in 0..s {
        e = &e * &e;
    }
    // undo balancing: exp(A) = D exp(D⁻¹AD) D⁻¹
    for i in 0..n {
        for j in 0..n {
            e[(i, j)] = e[(i, j)] * d[i] / d[j];
        }
    }
    if e.iter().any(|x| !x.is_finite_val()) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    Ok(e)
}

fn pade13<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let b: Vec<T> = PADE13.iter().map(|&x| T::lit(x)).collect();
    let id = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or(Error::Singular { what: "Padé denominator", omega: f64::NAN })
}

pub fn to_complex<T: Real>(a: &DMatrix<T>) -> DMatrix<Cplx<T>> {
    a.map(|x| Cplx::new(x, T::zero()))
}

/// Solves `a x = b` and rejects singular or non-finite results.
pub fn solve_checked<T: Real, N: ComplexField<RealField = T> + Copy>(
    a: DMatrix<N>,
    b: &DMatrix<N>,
    what: &'static str,
    omega: f64,
) -> Result<DMatrix<N>> {
    let x = a.lu().solve(b).ok_or(Error::Singular { what, omega })?;
    let finite = x.iter().all(|v| v.modulus().is_finite_val());
    if !finite {
        return Err(Error::Singular { what, omega });
    }
    Ok(x)
}

/// Largest real part among the eigenvalues of `a` (computed on the balanced matrix).
pub fn spectral_abscissa<T: Real>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 {
        return T::lit(f64::NEG_INFINITY);
    }
    balance(a)
        .0
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(T::lit(f64::NEG_INFINITY), |m, x| if x > m { x } else { m })
}

/// Largest eigenvalue modulus of `a`.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 {
        return T::zero();
    }
    balance(a)
        .0
        .complex_eigenvalues()
        .iter()
        .map(|l| l.modulus())
        .fold(T::zero(), |m, x| if x > m { x } else { m })
}

pub fn eigenvalues<T: Real>(a: &DMatrix<T>) -> Vec<Cplx<T>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    balance(a).0.complex_eigenvalues().iter().copied().collect()
}

pub fn is_hurwitz<T: Real>(a: &DMatrix<T>) -> bool {
    spectral_abscissa(a) < T::zero()
}

/// Extreme eigenvalues `(min, max)` of the symmetric part of `a`.
pub fn sym_eig_range<T: Real>(a: &DMatrix<T>) -> (T, T) {
    let s = (a + a.transpose()) * T::lit(0.5);
    let ev = s.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(T::lit(f64::INFINITY), |m, x| if x < m { x } else { m });
    let hi = ev.iter().copied().fold(T::lit(f64::NEG_INFINITY), |m, x| if x > m { x } else { m });
    (lo, hi)
}

pub fn frobenius<T: Real>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm<T: Real>(a: &DMatrix<T>) -> T {
    let (lo, hi) = sym_eig_range(a);
    if lo.abs() > hi.abs() {
        lo.abs()
    } else {
        hi.abs()
    }
}
