//! Lin's concordance correlation and the spatial concordance curve.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{Component, CovParams, Family};
use crate::error::{Error, Result};
use crate::likelihood::FittedModel;
use crate::linalg::Cholesky;

/// Upper `alpha / 2` quantile of the standard normal.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("confidence level alpha must be in (0, 1), got {alpha}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinResult {
    pub rho_c: f64,
    /// Fisher transform of `rho_c`.
    pub z: f64,
    pub var_z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Squared mean shift relative to the geometric mean scale.
    pub v_sq: f64,
    /// Pearson correlation.
    pub rho: f64,
    pub alpha: f64,
}

/// Lin's CCC with a 95% Fisher-z interval.
pub fn lin_ccc(x: &[f64], y: &[f64]) -> Result<LinResult> {
    lin_ccc_level(x, y, 0.05)
}

/// Lin's CCC with moments taken with divisor `n` and an interval at level
/// `1 - alpha` built on the Fisher z scale.
pub fn lin_ccc_level(x: &[f64], y: &[f64], alpha: f64) -> Result<LinResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!(
            "vectors have different lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidData(format!("need at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value".into()));
    }
    let q = normal_quantile(alpha)?;
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / nf;
    let syy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / nf;
    let sxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / nf;
    if sxx == 0.0 && syy == 0.0 {
        return Err(Error::DegenerateInput("both samples are constant".into()));
    }
    let d2 = (my - mx).powi(2);
    let rho_c = (2.0 * sxy / (sxx + syy + d2)).clamp(-1.0, 1.0);
    let (sx, sy) = (sxx.sqrt(), syy.sqrt());
    let rho = if sx > 0.0 && sy > 0.0 {
        (sxy / (sx * sy)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let v_sq = if sx > 0.0 && sy > 0.0 { d2 / (sx * sy) } else { f64::INFINITY };

    if rho_c.abs() >= 1.0 {
        return Ok(LinResult {
            rho_c,
            z: rho_c * f64::INFINITY,
            var_z: 0.0,
            ci_low: rho_c,
            ci_high: rho_c,
            n,
            v_sq,
            rho,
            alpha,
        });
    }
    let z = 0.5 * ((1.0 + rho_c) / (1.0 - rho_c)).ln();
    // rho_c / rho, computed without dividing by rho
    let a = 2.0 * sx * sy / (sxx + syy + d2);
    let one_m = 1.0 - rho_c * rho_c;
    let var_z = if a == 0.0 {
        0.0
    } else {
        let t1 = (1.0 - rho * rho) * a * a / one_m;
        let t2 = 2.0 * v_sq * (1.0 - rho_c) * rho_c * rho_c * a / (one_m * one_m);
        let t3 = v_sq * v_sq * rho_c * rho_c * a * a / (2.0 * one_m * one_m);
        (t1 + t2 + t3) / (nf - 2.0)
    };
    let half = q * var_z.sqrt();
    Ok(LinResult {
        rho_c,
        z,
        var_z,
        ci_low: (z - half).tanh(),
        ci_high: (z + half).tanh(),
        n,
        v_sq,
        rho,
        alpha,
    })
}

/// Scale factor relating the concordance curve to the cross-correlation.
pub fn scale_factor(params: &CovParams) -> f64 {
    let (s1, s2) = (params.sigma1_sq(), params.sigma2_sq());
    let (m1, m2) = params.means();
    2.0 * (s1 * s2).sqrt() / (s1 + s2 + (m1 - m2).powi(2))
}

/// Cross-correlation function `rho12 * R12(h)`.
pub fn cross_correlation(params: &CovParams, h: f64) -> f64 {
    params.rho12() * params.correlation(Component::Cross, h)
}

/// Concordance at lag norm `h`: `2 C12(h) / (C11(0) + C22(0) + (mu1 - mu2)^2)`.
pub fn sccc_value(params: &CovParams, h: f64) -> f64 {
    let (m1, m2) = params.means();
    2.0 * params.covariance(Component::Cross, h)
        / (params.sigma1_sq() + params.sigma2_sq() + (m1 - m2).powi(2))
}

/// Lag norm beyond which the cross kernel vanishes.
fn cross_support(params: &CovParams) -> Option<f64> {
    match params {
        CovParams::Wendland(p) => Some(p.b12),
        CovParams::Matern(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScccCurve {
    pub lags: Vec<f64>,
    pub rho_c: Vec<f64>,
    /// Lag-independent scale factor of the generating parameters.
    pub eta: f64,
    pub var: Option<Vec<f64>>,
    pub ci_low: Option<Vec<f64>>,
    pub ci_high: Option<Vec<f64>>,
    /// Lags where the curve is not differentiable in the parameters.
    pub flags: Vec<bool>,
}

impl ScccCurve {
    fn point(lags: &[f64], rho_c: Vec<f64>, eta: f64) -> Self {
        ScccCurve {
            lags: lags.to_vec(),
            rho_c,
            eta,
            var: None,
            ci_low: None,
            ci_high: None,
            flags: vec![false; lags.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }
}

fn check_lags(lags: &[f64]) -> Result<()> {
    if lags.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(Error::domain("lags must be finite and nonnegative"));
    }
    Ok(())
}

/// Evaluates the concordance curve of known parameters.
pub fn sccc_theoretical(params: &CovParams, lags: &[f64]) -> Result<ScccCurve> {
    params.check()?;
    check_lags(lags)?;
    let vals = lags.iter().map(|&h| sccc_value(params, h)).collect();
    Ok(ScccCurve::point(lags, vals, scale_factor(params)))
}

/// Plug-in estimate `C_ab * rho12_hat * R12_hat(h)` from a fitted model.
pub fn sccc_estimate(model: &FittedModel, lags: &[f64]) -> Result<ScccCurve> {
    let p = &model.params;
    p.check()?;
    check_lags(lags)?;
    let (c11, c22) = (p.sigma1_sq(), p.sigma2_sq());
    let (m1, m2) = p.means();
    let a = (c11 / c22).sqrt();
    let b = (m1 - m2) / (c11 * c22).powf(0.25);
    let c_ab = 2.0 / (a + 1.0 / a + b * b);
    let vals = lags.iter().map(|&h| c_ab * cross_correlation(p, h)).collect();
    Ok(ScccCurve::point(lags, vals, c_ab))
}

/// Plug-in curve with delta-method variances and pointwise intervals at
/// level `1 - alpha`, clamped to `[-1, 1]`.
pub fn sccc_estimate_with_bands(model: &FittedModel, lags: &[f64], alpha: f64) -> Result<ScccCurve> {
    let q = normal_quantile(alpha)?;
    let mut curve = sccc_estimate(model, lags)?;
    let inv = InverseInformation::new(model)?;
    let mut var = Vec::with_capacity(lags.len());
    for (k, &h) in lags.iter().enumerate() {
        let v = inv.variance(model, h)?;
        curve.flags[k] = v.flagged;
        var.push(v.var);
    }
    let lo = curve
        .rho_c
        .iter()
        .zip(&var)
        .map(|(r, v)| (r - q * v.sqrt()).max(-1.0))
        .collect();
    let hi = curve
        .rho_c
        .iter()
        .zip(&var)
        .map(|(r, v)| (r + q * v.sqrt()).min(1.0))
        .collect();
    curve.var = Some(var);
    curve.ci_low = Some(lo);
    curve.ci_high = Some(hi);
    Ok(curve)
}

/// Closed-form gradient of `g(theta) = 2 rho12 s1 s2 R(h; b12) / (s1^2 + s2^2)`
/// for the separable Wendland model, with
/// `theta = (sigma1_sq, sigma2_sq, rho12, b12)`.
pub fn sccc_gradient(theta: [f64; 4], h: f64, nu: f64) -> Result<[f64; 4]> {
    let [s1, s2, rho, b] = theta;
    if !(s1 > 0.0 && s2 > 0.0 && b > 0.0 && nu > 0.0 && rho.abs() <= 1.0) {
        return Err(Error::domain(format!("infeasible parameters {theta:?}, nu = {nu}")));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("lag must be finite and nonnegative, got {h}")));
    }
    if h == b && nu < 1.0 {
        return Err(Error::domain(format!(
            "gradient is not defined at the support boundary h = b12 = {b} when nu < 1"
        )));
    }
    if h >= b {
        return Ok([0.0; 4]);
    }
    let (sd1, sd2) = (s1.sqrt(), s2.sqrt());
    let t = h / b;
    let r = (1.0 + (nu + 1.0) * t) * (1.0 - t).powf(nu + 1.0);
    let f = -(nu + 1.0) * h / (b * b) * (1.0 - t).powf(nu + 1.0)
        + (1.0 + (nu + 1.0) * t) * (1.0 - t).powf(nu) * (nu + 1.0) * h / (b * b);
    let sum = s1 + s2;
    Ok([
        sd2 * rho * (s2 - s1) * r / (sd1 * sum * sum),
        sd1 * rho * (s1 - s2) * r / (sd2 * sum * sum),
        2.0 * sd1 * sd2 * r / sum,
        2.0 * sd1 * sd2 * rho * f / sum,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagVariance {
    pub var: f64,
    /// Lag sits on the support boundary; a one-sided derivative was used.
    pub flagged: bool,
    /// The closed-form separable-Wendland gradient was used.
    pub closed_form: bool,
}

/// Cholesky factor of a model's information matrix, reused across lags.
struct InverseInformation {
    chol: Cholesky,
}

impl InverseInformation {
    fn new(model: &FittedModel) -> Result<Self> {
        let info = model.info_matrix.as_ref().ok_or(Error::SingularInformation)?;
        let chol = Cholesky::factor(info.clone()).map_err(|_| Error::SingularInformation)?;
        Ok(InverseInformation { chol })
    }

    fn quad(&self, g: &[f64]) -> f64 {
        let mut v = g.to_vec();
        self.chol.forward_solve(&mut v);
        v.iter().map(|x| x * x).sum()
    }

    fn variance(&self, model: &FittedModel, h: f64) -> Result<LagVariance> {
        let (grad, flagged, closed_form) = match closed_form_layout(model) {
            Some(nu) => {
                let p = &model.params;
                let CovParams::Wendland(w) = p else { unreachable!() };
                let theta = [w.sigma1_sq, w.sigma2_sq, w.rho12, w.b12];
                let flagged = h == w.b12;
                let g = if flagged {
                    // interior limit
                    sccc_gradient(theta, h * (1.0 - 1e-12), nu)?
                } else {
                    sccc_gradient(theta, h, nu)?
                };
                (g.to_vec(), flagged, true)
            }
            None => {
                let (g, flagged) = numerical_gradient(model, h)?;
                (g, flagged, false)
            }
        };
        Ok(LagVariance {
            var: self.quad(&grad).max(0.0),
            flagged,
            closed_form,
        })
    }
}

/// The information coordinates are exactly the closed-form theta and the
/// curve has no mean term. Returns the smoothness in that case.
fn closed_form_layout(model: &FittedModel) -> Option<f64> {
    let CovParams::Wendland(w) = model.params else {
        return None;
    };
    let (m1, m2) = model.params.means();
    let tied_b = model.family == Family::Wendland && model.shared_range;
    (tied_b && !model.means_estimated && m1 == m2 && model.free == [0, 1, 2, 3]).then_some(w.nu)
}

/// Relative step of the finite-difference curve gradient.
const GRAD_REL_STEP: f64 = 1e-6;

fn numerical_gradient(model: &FittedModel, h: f64) -> Result<(Vec<f64>, bool)> {
    let x0 = model.info_point();
    let names = model.info_names();
    let sd = model.params.sigma1_sq().max(model.params.sigma2_sq()).sqrt();
    let inside = |p: &CovParams| cross_support(p).is_none_or(|b| h < b);
    let centre_inside = inside(&model.params);
    let mut flagged = false;
    let mut grad = Vec::with_capacity(x0.len());
    for (i, name) in names.iter().enumerate() {
        let floor = match *name {
            "rho12" => 1.0,
            "mu1" | "mu2" => sd,
            _ => 0.0,
        };
        let step = GRAD_REL_STEP * x0[i].abs().max(floor);
        let at = |d: f64| -> Result<CovParams> {
            let mut x = x0.clone();
            x[i] += d;
            model.params_at(&x)
        };
        let (pp, pm) = (at(step)?, at(-step)?);
        let (ip, im) = (inside(&pp), inside(&pm));
        let g = if ip == im {
            (sccc_value(&pp, h) - sccc_value(&pm, h)) / (2.0 * step)
        } else {
            flagged = true;
            let g0 = sccc_value(&model.params, h);
            // one-sided difference from the side inside the support
            if ip {
                if centre_inside {
                    (sccc_value(&pp, h) - g0) / step
                } else {
                    let ppp = at(2.0 * step)?;
                    (sccc_value(&ppp, h) - sccc_value(&pp, h)) / step
                }
            } else if centre_inside {
                (g0 - sccc_value(&pm, h)) / step
            } else {
                let pmm = at(-2.0 * step)?;
                (sccc_value(&pm, h) - sccc_value(&pmm, h)) / step
            }
        };
        grad.push(g);
    }
    Ok((grad, flagged))
}

/// Delta-method variance of the plug-in concordance at lag norm `h`.
pub fn sccc_variance(model: &FittedModel, h: f64) -> Result<f64> {
    Ok(sccc_variance_detail(model, h)?.var)
}

pub fn sccc_variance_detail(model: &FittedModel, h: f64) -> Result<LagVariance> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("lag must be finite and nonnegative, got {h}")));
    }
    InverseInformation::new(model)?.variance(model, h)
}

/// Default lag grid: `h = 0` plus 40 evenly spaced values in `(0, 2]`.
pub fn default_lags() -> Vec<f64> {
    lag_grid(2.0, 40)
}

/// `h = 0` plus `count` evenly spaced values in `(0, max]`.
pub fn lag_grid(max: f64, count: usize) -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=count).map(|k| max * k as f64 / count as f64))
        .collect()
}
