//! Independent reference implementations used only by the tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function by the Lanczos approximation (g = 7, n = 9).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule,
/// which converges geometrically for this even, entire integrand. Returns
/// `ln K_nu(x)` so large orders at tiny arguments stay representable.
pub fn ln_bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let phi = |t: f64| -x * t.cosh() + nu * t + (-2.0 * nu * t).exp().ln_1p() - std::f64::consts::LN_2;
    let step = 0.01;
    let mut vals = Vec::new();
    let mut t = 0.0;
    let mut peak = f64::NEG_INFINITY;
    loop {
        let v = phi(t);
        peak = peak.max(v);
        vals.push(v);
        if v < peak - 60.0 && t > 1.0 {
            break;
        }
        t += step;
    }
    let sum: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 { 0.5 } else { 1.0 } * (v - peak).exp())
        .sum();
    peak + (step * sum).ln()
}

pub fn matern(h: f64, nu: f64, a: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let u = a * h;
    (ln_bessel_k_quadrature(nu, u) + nu * u.ln() + (1.0 - nu) * std::f64::consts::LN_2 - gamma(nu).ln()).exp()
}

pub fn wendland(h: f64, b: f64, nu: f64) -> f64 {
    if h >= b {
        return 0.0;
    }
    let t = h / b;
    (1.0 + (nu + 1.0) * t) * (1.0 - t).powf(nu + 1.0)
}

/// Marginal/cross kernels and moments in a family-neutral form.
pub struct Model {
    pub s1: f64,
    pub s2: f64,
    pub rho: f64,
    pub mu: (f64, f64),
    pub kernels: [Box<dyn Fn(f64) -> f64>; 3],
}

pub fn dense_covariance(m: &Model, sites: &[[f64; 2]]) -> DMatrix<f64> {
    let n = sites.len();
    let c12 = m.rho * (m.s1 * m.s2).sqrt();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (a, b) = (&sites[i % n], &sites[j % n]);
        let h = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        match (i / n, j / n) {
            (0, 0) => m.s1 * (m.kernels[0])(h),
            (1, 1) => m.s2 * (m.kernels[1])(h),
            _ => c12 * (m.kernels[2])(h),
        }
    })
}

/// Gaussian log-density of `(z1, z2)` stacked, or `None` when the
/// covariance is not positive definite.
pub fn dense_loglik(m: &Model, sites: &[[f64; 2]], z1: &[f64], z2: &[f64]) -> Option<f64> {
    let sigma = dense_covariance(m, sites);
    let n2 = sigma.nrows();
    let chol = sigma.cholesky()?;
    let r = DVector::from_iterator(
        n2,
        z1.iter().map(|v| v - m.mu.0).chain(z2.iter().map(|v| v - m.mu.1)),
    );
    let w = chol.l().solve_lower_triangular(&r)?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some(-0.5 * (n2 as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + w.norm_squared()))
}

/// One draw of the stacked pair from the model, `mu + L w` with the
/// nalgebra Cholesky factor and standard normals from `normal`.
pub fn dense_sample(
    m: &Model,
    sites: &[[f64; 2]],
    mut normal: impl FnMut() -> f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = sites.len();
    let chol = dense_covariance(m, sites).cholesky()?;
    let w = DVector::from_fn(2 * n, |_, _| normal());
    let z = chol.l() * w;
    let z1 = (0..n).map(|i| m.mu.0 + z[i]).collect();
    let z2 = (0..n).map(|i| m.mu.1 + z[n + i]).collect();
    Some((z1, z2))
}
