//! Shared numeric helpers: stable log-sum-exp, adaptive quadrature, and a
//! bracketing scalar minimizer.

use crate::{Error, Result};

/// Stable `ln(sum(exp(x)))`. Empty input and all `-inf` both give `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "max refinement depth reached on [{a}, {b}]"
        )));
    }
    let l = adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature of `f` over the finite interval `[a, b]`.
/// The range is pre-split into uniform panels before refinement; without
/// that, a peak much narrower than the range can fall between the three
/// initial probes and the estimate silently collapses to the tails.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    assert!(a.is_finite() && b.is_finite() && b > a);
    const PANELS: usize = 32;
    let w = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let pa = a + i as f64 * w;
        let pb = if i + 1 == PANELS { b } else { a + (i + 1) as f64 * w };
        let m = 0.5 * (pa + pb);
        let (fa, fm, fb) = (f(pa), f(m), f(pb));
        let whole = simpson(fa, fm, fb, pb - pa);
        total += adaptive(&f, pa, pb, fa, fm, fb, whole, panel_tol, 40)?;
    }
    Ok(total)
}

/// Integral of `f` over the whole real line for integrands with decaying
/// tails. The window is widened until both tail contributions drop below
/// the tolerance.
pub fn integrate_real<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    let mut r = 8.0;
    let mut total = integrate(&f, -r, r, tol)?;
    loop {
        let left = integrate(&f, -2.0 * r, -r, tol)?;
        let right = integrate(&f, r, 2.0 * r, tol)?;
        total += left + right;
        r *= 2.0;
        if left.abs() + right.abs() <= tol {
            return Ok(total);
        }
        if r > 1e6 {
            return Err(Error::Quadrature(
                "tails did not decay on the real line".into(),
            ));
        }
    }
}

/// Integral of `f` over `(0, inf)` via the substitution `x = e^y`.
pub fn integrate_positive<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    integrate_real(|y: f64| f(y.exp()) * y.exp(), tol)
}

/// Golden-section minimization of a unimodal scalar function on `[a, b]`.
/// Returns the minimizer and its value.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
