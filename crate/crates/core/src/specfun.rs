//! Bessel functions of integer order for real non-negative arguments.
//!
//! * `J_n`: ascending series for `x ≤ 1`, Miller backward recurrence
//!   normalized by `J_0 + 2 Σ J_{2k} = 1` otherwise.
//! * `Y_0`, `Y_1`: Neumann series in even/odd `J_k`; higher orders by upward
//!   recurrence, which is stable for `Y`.
//! * Derivatives via `C'_n = (C_{n-1} - C_{n+1}) / 2`.

use num_complex::Complex64;
use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{Error, Result};

/// Largest |order| accepted.
pub const MAX_ORDER: usize = 100;
/// Largest argument accepted.
pub const MAX_ARG: f64 = 100.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BesselKind {
    J,
    Y,
}

fn check_args(n: usize, x: f64) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Range(format!("order {n} exceeds {MAX_ORDER}")));
    }
    if !x.is_finite() || x > MAX_ARG {
        return Err(Error::Range(format!("argument {x} outside [0, {MAX_ARG}]")));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!("negative argument {x}")));
    }
    Ok(())
}

#[inline]
fn reflect(n: i32, v: f64) -> f64 {
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}

/// `J_n(x)` by its ascending series; accurate without cancellation for small `x`.
fn j_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=n {
        lead *= half / k as f64;
    }
    if lead == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..200 {
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// `J_0..=J_nmax` at `x > 0` by Miller's backward recurrence.
fn j_miller(nmax: usize, x: f64) -> Vec<f64> {
    let top = (nmax as f64).max(x);
    let mut start = (top + 25.0 + (50.0 * top).sqrt()) as usize;
    start += start % 2;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-30;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let v = 2.0 * k as f64 / x * vals[k] - vals[k + 1];
        vals[k - 1] = v;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * v;
        }
        if v.abs() > 1e250 {
            for w in vals.iter_mut() {
                *w *= 1e-250;
            }
            norm *= 1e-250;
        }
    }
    norm += vals[0];
    vals.truncate(nmax + 1);
    vals.iter_mut().for_each(|v| *v /= norm);
    vals
}

/// `J_0(x)..=J_{nmax}(x)` for `x ≥ 0`.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    check_args(nmax, x)?;
    if x == 0.0 {
        let mut v = vec![0.0; nmax + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    if x <= SERIES_LIMIT {
        return Ok((0..=nmax).map(|n| j_series(n, x)).collect());
    }
    Ok(j_miller(nmax, x))
}

/// Bessel function of the first kind `J_n(x)`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    let m = n.unsigned_abs() as usize;
    let v = *bessel_j_seq(m, x)?.last().expect("non-empty");
    Ok(reflect(n, v))
}

/// `Y_0(x)..=Y_{nmax}(x)` for `x > 0`.
pub fn bessel_y_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    check_args(nmax, x)?;
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "Y_n is singular at x = {x}; argument must be positive"
        )));
    }
    // Enough J terms for the Neumann sums to converge.
    let kmax = ((x + 30.0 + (50.0 * x).sqrt()) as usize).min(4 * MAX_ORDER);
    let j = if x <= SERIES_LIMIT {
        (0..=kmax).map(|n| j_series(n, x)).collect::<Vec<_>>()
    } else {
        j_miller(kmax, x)
    };
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 <= kmax {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = FRAC_2_PI * (log_term * j[0] - 2.0 * s0);
    let y1 = FRAC_2_PI * (log_term * j[1] - j[0] / x + s1);

    let mut out = Vec::with_capacity(nmax + 1);
    out.push(y0);
    if nmax >= 1 {
        out.push(y1);
    }
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        if !next.is_finite() {
            return Err(Error::Range(format!("Y_{} overflows at x = {x}", n + 1)));
        }
        out.push(next);
    }
    Ok(out)
}

/// Bessel function of the second kind `Y_n(x)`, `x > 0`.
pub fn bessel_y(n: i32, x: f64) -> Result<f64> {
    let m = n.unsigned_abs() as usize;
    let v = *bessel_y_seq(m, x)?.last().expect("non-empty");
    Ok(reflect(n, v))
}

fn bessel(kind: BesselKind, n: i32, x: f64) -> Result<f64> {
    match kind {
        BesselKind::J => bessel_j(n, x),
        BesselKind::Y => bessel_y(n, x),
    }
}

/// `dC_n/dx` for `C ∈ {J, Y}`.
pub fn bessel_deriv(kind: BesselKind, n: i32, x: f64) -> Result<f64> {
    Ok(0.5 * (bessel(kind, n - 1, x)? - bessel(kind, n + 1, x)?))
}

/// Hankel function of the first kind `H_n^{(1)} = J_n + i Y_n`.
pub fn hankel1(n: i32, x: f64) -> Result<Complex64> {
    Ok(Complex64::new(bessel_j(n, x)?, bessel_y(n, x)?))
}

/// Derivative of `H_n^{(1)}`.
pub fn hankel1_deriv(n: i32, x: f64) -> Result<Complex64> {
    Ok(0.5 * (hankel1(n - 1, x)? - hankel1(n + 1, x)?))
}

/// `J_n, J_n', J_n''` for `n = 0..=nmax`, from one sequence evaluation.
pub(crate) fn j_with_derivs(nmax: usize, x: f64) -> Result<Vec<[f64; 3]>> {
    let seq = bessel_j_seq(nmax + 2, x)?;
    Ok(with_derivs(&seq, nmax))
}

/// `Y_n, Y_n', Y_n''` for `n = 0..=nmax`.
pub(crate) fn y_with_derivs(nmax: usize, x: f64) -> Result<Vec<[f64; 3]>> {
    let seq = bessel_y_seq(nmax + 2, x)?;
    Ok(with_derivs(&seq, nmax))
}

fn with_derivs(seq: &[f64], nmax: usize) -> Vec<[f64; 3]> {
    // C_{-k} = (-1)^k C_k
    let at = |n: i64| -> f64 {
        let m = n.unsigned_abs() as usize;
        if n < 0 && m % 2 == 1 {
            -seq[m]
        } else {
            seq[m]
        }
    };
    (0..=nmax as i64)
        .map(|n| {
            let d1 = 0.5 * (at(n - 1) - at(n + 1));
            let d2 = 0.25 * (at(n - 2) - 2.0 * at(n) + at(n + 2));
            [at(n), d1, d2]
        })
        .collect()
}

/// `2 / (π x)`, the value of the Wronskian `J_n Y_n' − J_n' Y_n`.
pub fn wronskian(x: f64) -> f64 {
    2.0 / (PI * x)
}
