//! Legendre polynomials and Gauss-Legendre rules on [-1, 1].

use std::sync::OnceLock;

/// Values `P_0(x) ..= P_n(x)` written into `out[..=n]`.
pub fn legendre_values(n: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n == 0 {
        return;
    }
    out[1] = x;
    for k in 1..n {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Values and derivatives of `P_0 ..= P_n` at `x`.
pub fn legendre_values_and_derivs(n: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    legendre_values(n, x, val);
    der[0] = 0.0;
    if n == 0 {
        return;
    }
    der[1] = 1.0;
    // P'_{k+1} = P'_{k-1} + (2k+1) P_k
    for k in 1..n {
        der[k + 1] = der[k - 1] + (2 * k + 1) as f64 * val[k];
    }
}

const CACHED_RULES: usize = 48;

/// `n`-point Gauss-Legendre nodes and weights on [-1, 1], ascending nodes.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    if n <= CACHED_RULES {
        static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
        let table = TABLE.get_or_init(|| (1..=CACHED_RULES).map(compute_gauss_legendre).collect());
        return table[n - 1].clone();
    }
    compute_gauss_legendre(n)
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut val = vec![0.0; n + 1];
    let mut der = vec![0.0; n + 1];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            legendre_values_and_derivs(n, t, &mut val, &mut der);
            let dt = val[n] / der[n];
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        legendre_values_and_derivs(n, t, &mut val, &mut der);
        let wi = 2.0 / ((1.0 - t * t) * der[n] * der[n]);
        x[n - 1 - i] = t;
        x[i] = -t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}
