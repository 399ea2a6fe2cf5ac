//! Small quadrature and low-discrepancy helpers.

use serde::{Deserialize, Serialize};

/// Adaptive Simpson settings for one-dimensional time integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    pub tolerance: f64,
    pub max_depth: u32,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature {
            tolerance: 1e-10,
            max_depth: 40,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub converged: bool,
}

pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, q: TimeQuadrature) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            converged: true,
        };
    }
    // split the interval first so that symmetric integrands cannot fool the
    // first error estimate
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let mut value = 0.0;
    let mut converged = true;
    for i in 0..pieces {
        let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        let (v, ok) = simpson_rec(
            &f,
            lo,
            hi,
            flo,
            fmid,
            fhi,
            whole,
            q.tolerance / pieces as f64,
            q.max_depth,
        );
        value += v;
        converged &= ok;
    }
    Integral { value, converged }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, bool) {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return (left + right + delta / 15.0, true);
    }
    if depth == 0 || !delta.is_finite() {
        return (left + right, false);
    }
    let (l, okl) = simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let (r, okr) = simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    (l + r, okl && okr)
}

/// Composite trapezoid nodes and weights on [a, b] with `intervals` panels.
pub fn trapezoid(a: f64, b: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / intervals as f64;
    let nodes = (0..=intervals).map(|i| a + i as f64 * h).collect();
    let weights = (0..=intervals)
        .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `i` of the Halton sequence in `dims` dimensions (at most 12).
pub fn halton(i: u64, dims: usize, out: &mut [f64]) {
    assert!(dims <= PRIMES.len());
    for d in 0..dims {
        out[d] = radical_inverse(i, PRIMES[d]);
    }
}
