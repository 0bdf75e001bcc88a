//! Gaussian log-likelihood, maximum-likelihood fitting and observed information.

use std::f64::consts::PI;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::{CovParams, Family, SiteGeometry};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::simulate::FieldPair;

/// Log-likelihood evaluator that caches the site geometry of one data set.
pub struct Likelihood<'a> {
    data: &'a FieldPair,
    y: Vec<f64>,
    geom: SiteGeometry,
}

impl<'a> Likelihood<'a> {
    pub fn new(data: &'a FieldPair) -> Result<Self> {
        let geom = SiteGeometry::new(&data.grid.sites())?;
        Ok(Likelihood {
            data,
            y: data.stacked(),
            geom,
        })
    }

    pub fn data(&self) -> &FieldPair {
        self.data
    }

    pub fn geometry(&self) -> &SiteGeometry {
        &self.geom
    }

    fn factor(&self, params: &CovParams) -> Result<Cholesky> {
        params.check()?;
        Cholesky::factor(self.geom.covariance_matrix(params))
    }

    fn constant(&self) -> f64 {
        -(self.geom.n_sites() as f64) * (2.0 * PI).ln()
    }

    /// Exact log-density at the means carried by `params`.
    pub fn eval(&self, params: &CovParams) -> Result<f64> {
        let l = self.factor(params)?;
        let n = self.geom.n_sites();
        let (m1, m2) = params.means();
        let mut r: Vec<f64> = self
            .y
            .iter()
            .enumerate()
            .map(|(i, v)| v - if i < n { m1 } else { m2 })
            .collect();
        l.forward_solve(&mut r);
        let quad: f64 = r.iter().map(|v| v * v).sum();
        Ok(self.constant() - 0.5 * l.log_det() - 0.5 * quad)
    }

    /// Log-likelihood with the two means replaced by their generalized
    /// least-squares estimates given the covariance. Returns the value and the
    /// estimated means.
    pub fn eval_profiled(&self, params: &CovParams) -> Result<(f64, (f64, f64))> {
        let l = self.factor(params)?;
        let n = self.geom.n_sites();
        let mut v = self.y.clone();
        l.forward_solve(&mut v);
        let mut w1 = vec![0.0; 2 * n];
        let mut w2 = vec![0.0; 2 * n];
        w1[..n].iter_mut().for_each(|x| *x = 1.0);
        w2[n..].iter_mut().for_each(|x| *x = 1.0);
        l.forward_solve(&mut w1);
        l.forward_solve(&mut w2);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (g11, g12, g22) = (dot(&w1, &w1), dot(&w1, &w2), dot(&w2, &w2));
        let (r1, r2) = (dot(&w1, &v), dot(&w2, &v));
        let det = g11 * g22 - g12 * g12;
        if !(det > 0.0) {
            return Err(Error::PositiveDefiniteness { pivot: 0, dim: 2 });
        }
        let mu1 = (g22 * r1 - g12 * r2) / det;
        let mu2 = (g11 * r2 - g12 * r1) / det;
        let quad: f64 = v
            .iter()
            .zip(w1.iter().zip(&w2))
            .map(|(vi, (a, b))| {
                let e = vi - mu1 * a - mu2 * b;
                e * e
            })
            .sum();
        Ok((self.constant() - 0.5 * l.log_det() - 0.5 * quad, (mu1, mu2)))
    }
}

/// Gaussian log-density of the stacked data under `params`, including the
/// constant `-n ln(2 pi)`.
pub fn log_likelihood(params: &CovParams, data: &FieldPair) -> Result<f64> {
    Likelihood::new(data)?.eval(params)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Starting point; `None` means moment-based initialization.
    pub init: Option<CovParams>,
    /// Covariance parameters held at fixed values, by name.
    pub fixed: Vec<(String, f64)>,
    /// Natural-scale box overrides, by name.
    pub bounds: Vec<(String, f64, f64)>,
    /// Tie all three kernels to the first marginal one (separable model).
    pub shared_range: bool,
    /// Smoothness of the Wendland family; `None` estimates it.
    pub wendland_nu: Option<f64>,
    pub max_iter: usize,
    /// Convergence tolerance on the log-likelihood spread of the simplex.
    pub tol: f64,
    /// Estimate the means in closed form; otherwise they are held at the
    /// values in `init` (zero when auto-initialized).
    pub profile_means: bool,
    pub compute_information: bool,
    /// Seed of the random restart.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init: None,
            fixed: Vec::new(),
            bounds: Vec::new(),
            shared_range: false,
            wendland_nu: Some(4.0),
            max_iter: 3000,
            tol: 1e-5,
            profile_means: true,
            compute_information: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub family: Family,
    /// Estimated covariance parameters and means.
    pub params: CovParams,
    pub shared_range: bool,
    /// Indices (into [`Family::param_names`]) of estimated covariance parameters.
    pub free: Vec<usize>,
    pub means_estimated: bool,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_sites: usize,
    pub iterations: usize,
    pub evaluations: usize,
    /// Observed information over [`FittedModel::info_names`].
    pub info_matrix: Option<Mat<f64>>,
}

impl FittedModel {
    pub fn theta_hat(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    pub fn mu_hat(&self) -> (f64, f64) {
        self.params.means()
    }

    /// Number of estimated parameters, means included.
    pub fn n_params(&self) -> usize {
        self.free.len() + if self.means_estimated { 2 } else { 0 }
    }

    /// Names of the coordinates of the information matrix.
    pub fn info_names(&self) -> Vec<&'static str> {
        let names = self.family.param_names();
        let mut out: Vec<&'static str> = self.free.iter().map(|&i| names[i]).collect();
        if self.means_estimated {
            out.push("mu1");
            out.push("mu2");
        }
        out
    }

    /// Natural-scale values of the information coordinates.
    pub fn info_point(&self) -> Vec<f64> {
        let theta = self.theta_hat();
        let mut out: Vec<f64> = self.free.iter().map(|&i| theta[i]).collect();
        if self.means_estimated {
            let (m1, m2) = self.mu_hat();
            out.push(m1);
            out.push(m2);
        }
        out
    }

    /// Rebuilds covariance parameters from a point in information coordinates.
    pub fn params_at(&self, point: &[f64]) -> Result<CovParams> {
        let mut theta = self.theta_hat();
        for (k, &i) in self.free.iter().enumerate() {
            theta[i] = point[k];
        }
        if self.shared_range {
            for &(t, s) in self.family.shared_range_ties() {
                theta[t] = theta[s];
            }
        }
        let (mut m1, mut m2) = self.mu_hat();
        if self.means_estimated {
            m1 = point[self.free.len()];
            m2 = point[self.free.len() + 1];
        }
        CovParams::from_vec(self.family, &theta, m1, m2)
    }
}

/// `(aic, bic)` with `q` counting free covariance parameters and estimated
/// means, and BIC using the `2 n` observations.
pub fn aic_bic(loglik: f64, q: usize, n_sites: usize) -> (f64, f64) {
    let q = q as f64;
    (
        -2.0 * loglik + 2.0 * q,
        -2.0 * loglik + q * (2.0 * n_sites as f64).ln(),
    )
}

#[derive(Debug, Clone, Copy)]
enum Transform {
    Log,
    Atanh,
}

impl Transform {
    fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::Atanh => x.atanh(),
        }
    }

    fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Log => z.exp(),
            Transform::Atanh => z.tanh(),
        }
    }
}

/// Mapping between the unconstrained search vector and full parameters.
struct Layout {
    family: Family,
    base: Vec<f64>,
    free: Vec<usize>,
    ties: &'static [(usize, usize)],
    shared: bool,
    transforms: Vec<Transform>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Layout {
    fn unpack(&self, z: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for ((&i, &zi), t) in self.free.iter().zip(z).zip(&self.transforms) {
            theta[i] = t.inverse(zi);
        }
        if self.shared {
            for &(t, s) in self.ties {
                theta[t] = theta[s];
            }
        }
        theta
    }

    fn pack(&self, theta: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(&self.transforms)
            .map(|(&i, t)| t.forward(theta[i]))
            .collect()
    }
}

/// Restart point for the cross-kernel restart in `fit_ml`, or `None` when
/// rho12 or every cross-kernel parameter is held.
fn cross_restart_point(layout: &Layout, z: &[f64]) -> Option<Vec<f64>> {
    if layout.shared || !layout.free.contains(&2) {
        return None;
    }
    let fitted = layout.unpack(z);
    let targets: Vec<(usize, f64)> = match layout.family {
        Family::Wendland => vec![(5, (fitted[3] * fitted[4]).sqrt())],
        Family::Matern => vec![
            (5, 0.5 * (fitted[3] + fitted[4])),
            (8, (0.5 * (fitted[6] * fitted[6] + fitted[7] * fitted[7])).sqrt()),
        ],
    };
    let mut theta = fitted;
    let mut moved = false;
    for (i, v) in targets {
        if layout.free.contains(&i) {
            theta[i] = v;
            moved = true;
        }
    }
    if !moved {
        return None;
    }
    theta[2] = layout.base[2];
    let packed = layout.pack(&theta);
    Some(
        packed
            .iter()
            .zip(layout.lower.iter().zip(&layout.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect(),
    )
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    cov / (sample_var(a) * sample_var(b)).sqrt()
}

/// Natural-scale default box of one parameter.
fn default_bounds(family: Family, name: &str, data: &FieldPair) -> (f64, f64) {
    let diam = data.grid.diameter();
    let spacing = data.grid.min_spacing().min(diam);
    match name {
        "sigma1_sq" => {
            let v = sample_var(&data.z1);
            (v * 1e-4, v * 1e3)
        }
        "sigma2_sq" => {
            let v = sample_var(&data.z2);
            (v * 1e-4, v * 1e3)
        }
        "rho12" => (-0.995, 0.995),
        "b1" | "b2" | "b12" => (0.2 * spacing, 2.0 * diam),
        "nu" => (1.5, 10.0),
        "nu1" | "nu2" | "nu12" => (0.1, 5.0),
        "a1" | "a2" | "a12" => (0.1 / diam, 10.0 / spacing),
        other => unreachable!("unknown {family} parameter {other}"),
    }
}

fn auto_init(family: Family, data: &FieldPair) -> CovParams {
    let s1 = sample_var(&data.z1);
    let s2 = sample_var(&data.z2);
    let rho = sample_corr(&data.z1, &data.z2).clamp(-0.9, 0.9);
    let rho = if rho.is_finite() { rho } else { 0.0 };
    let range = data.grid.diameter() / 4.0;
    let theta = match family {
        Family::Wendland => vec![s1, s2, rho, range, range, range, 4.0],
        Family::Matern => {
            let a = 1.0 / range;
            vec![s1, s2, rho, 0.5, 0.5, 0.5, a, a, a]
        }
    };
    CovParams::from_vec(family, &theta, 0.0, 0.0).expect("length matches family")
}

fn check_data(data: &FieldPair) -> Result<()> {
    if data.n_sites() < 16 {
        return Err(Error::InvalidData(format!(
            "fitting needs at least 16 sites, got {}",
            data.n_sites()
        )));
    }
    if data.z1.iter().chain(&data.z2).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite field value".into()));
    }
    if sample_var(&data.z1) <= 0.0 || sample_var(&data.z2) <= 0.0 {
        return Err(Error::DegenerateInput("a field has zero variance".into()));
    }
    Ok(())
}

fn build_layout(family: Family, data: &FieldPair, opts: &FitOptions, init: &CovParams) -> Result<Layout> {
    let names = family.param_names();
    let mut base = init.to_vec();
    let mut is_fixed = vec![false; names.len()];
    if family == Family::Wendland {
        if let Some(nu) = opts.wendland_nu {
            base[6] = nu;
            is_fixed[6] = true;
        }
    }
    for (name, value) in &opts.fixed {
        let i = family
            .param_index(name)
            .ok_or_else(|| Error::domain(format!("{family} has no parameter '{name}'")))?;
        base[i] = *value;
        is_fixed[i] = true;
    }
    let ties = family.shared_range_ties();
    if opts.shared_range {
        for &(t, s) in ties {
            is_fixed[t] = true;
            base[t] = base[s];
        }
    }
    let free: Vec<usize> = (0..names.len()).filter(|&i| !is_fixed[i]).collect();
    let mut lower = Vec::with_capacity(free.len());
    let mut upper = Vec::with_capacity(free.len());
    let mut transforms = Vec::with_capacity(free.len());
    for &i in &free {
        let name = names[i];
        let (mut lo, mut hi) = default_bounds(family, name, data);
        if let Some((_, l, h)) = opts.bounds.iter().find(|(n, _, _)| n == name) {
            lo = *l;
            hi = *h;
        }
        if !(lo < hi) {
            return Err(Error::domain(format!("empty bounds for {name}: [{lo}, {hi}]")));
        }
        let t = if name == "rho12" {
            if lo <= -1.0 || hi >= 1.0 {
                return Err(Error::domain("rho12 bounds must lie inside (-1, 1)"));
            }
            Transform::Atanh
        } else {
            if lo <= 0.0 {
                return Err(Error::domain(format!("{name} bounds must be positive")));
            }
            Transform::Log
        };
        base[i] = base[i].clamp(lo, hi);
        lower.push(t.forward(lo));
        upper.push(t.forward(hi));
        transforms.push(t);
    }
    Ok(Layout {
        family,
        base,
        free,
        ties,
        shared: opts.shared_range,
        transforms,
        lower,
        upper,
    })
}

/// Maximum-likelihood fit by box-constrained Nelder-Mead on log / atanh
/// transformed parameters. One randomized restart follows a run that does
/// not converge, and one restart from a reset cross kernel always follows.
pub fn fit_ml(data: &FieldPair, family: Family, opts: &FitOptions) -> Result<FittedModel> {
    check_data(data)?;
    let lik = Likelihood::new(data)?;
    let init = match opts.init {
        Some(p) if p.family() == family => p,
        Some(p) => {
            return Err(Error::domain(format!(
                "initial parameters are {} but family is {family}",
                p.family()
            )))
        }
        None => auto_init(family, data),
    };
    let layout = build_layout(family, data, opts, &init)?;
    let (fixed_m1, fixed_m2) = init.means();

    let objective = |z: &[f64]| -> f64 {
        let theta = layout.unpack(z);
        let Ok(p) = CovParams::from_vec(layout.family, &theta, fixed_m1, fixed_m2) else {
            return f64::INFINITY;
        };
        let ll = if opts.profile_means {
            lik.eval_profiled(&p).map(|(v, _)| v)
        } else {
            lik.eval(&p)
        };
        match ll {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };

    let mut z0 = layout.pack(&layout.base);
    if !objective(&z0).is_finite() {
        // independent fields are always admissible
        let mut theta = layout.base.clone();
        theta[2] = 0.0;
        z0 = layout.pack(&theta);
        if !objective(&z0).is_finite() {
            return Err(Error::PositiveDefiniteness { pivot: 0, dim: 2 * data.n_sites() });
        }
    }

    let steps: Vec<f64> = layout
        .transforms
        .iter()
        .map(|t| match t {
            Transform::Log => 0.5,
            Transform::Atanh => 0.3,
        })
        .collect();
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        ftol: opts.tol,
        // parameters that the data do not identify (a cross range under
        // zero correlation) would otherwise keep the simplex open forever
        xtol: f64::INFINITY,
    };
    let mut best = nelder_mead(objective, &z0, &steps, &layout.lower, &layout.upper, &nm);
    let mut iterations = best.iterations;
    let mut evaluations = best.evaluations;
    if !best.converged {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let jittered: Vec<f64> = steps.iter().map(|s| s * rng.random_range(0.5..1.5)).collect();
        let second = nelder_mead(objective, &best.x, &jittered, &layout.lower, &layout.upper, &nm);
        iterations += second.iterations;
        evaluations += second.evaluations;
        if second.fx <= best.fx {
            best = second;
        } else {
            best.converged = second.converged;
        }
    }
    if !best.fx.is_finite() {
        return Err(Error::PositiveDefiniteness { pivot: 0, dim: 2 * data.n_sites() });
    }
    // A weak cross-correlation lets the simplex trade rho12 for a wide cross
    // kernel and stall there, so restart once with the cross kernel pulled
    // back between the fitted marginal ones.
    if let Some(z1) = cross_restart_point(&layout, &best.x) {
        if objective(&z1).is_finite() {
            let second = nelder_mead(objective, &z1, &steps, &layout.lower, &layout.upper, &nm);
            iterations += second.iterations;
            evaluations += second.evaluations;
            if second.fx < best.fx {
                best = second;
            }
        }
    }

    let theta = layout.unpack(&best.x);
    let mut params = CovParams::from_vec(family, &theta, fixed_m1, fixed_m2)?;
    let loglik = if opts.profile_means {
        let (ll, (m1, m2)) = lik.eval_profiled(&params)?;
        params = params.with_means(m1, m2);
        ll
    } else {
        lik.eval(&params)?
    };
    let q = layout.free.len() + if opts.profile_means { 2 } else { 0 };
    let (aic, bic) = aic_bic(loglik, q, data.n_sites());
    let mut model = FittedModel {
        family,
        params,
        shared_range: opts.shared_range,
        free: layout.free.clone(),
        means_estimated: opts.profile_means,
        loglik,
        aic,
        bic,
        converged: best.converged,
        n_sites: data.n_sites(),
        iterations,
        evaluations,
        info_matrix: None,
    };
    if opts.compute_information {
        model.info_matrix = observed_information_with(&model, &lik).ok();
    }
    Ok(model)
}

/// Relative finite-difference step used for the observed information.
pub const HESSIAN_REL_STEP: f64 = 1e-4;

pub(crate) fn fd_steps(model: &FittedModel) -> Vec<f64> {
    let names = model.info_names();
    let point = model.info_point();
    let sd = model.params.sigma1_sq().max(model.params.sigma2_sq()).sqrt();
    names
        .iter()
        .zip(&point)
        .map(|(name, &x)| {
            let floor = match *name {
                "rho12" => 1.0,
                "mu1" | "mu2" => sd,
                _ => 0.0,
            };
            HESSIAN_REL_STEP * x.abs().max(floor)
        })
        .collect()
}

/// Negative central-difference Hessian of the log-likelihood at the fitted
/// point, over the free covariance parameters and (if estimated) the means.
pub fn observed_information(model: &FittedModel, data: &FieldPair) -> Result<Mat<f64>> {
    let lik = Likelihood::new(data)?;
    observed_information_with(model, &lik)
}

fn observed_information_with(model: &FittedModel, lik: &Likelihood<'_>) -> Result<Mat<f64>> {
    let x0 = model.info_point();
    let q = x0.len();
    let h = fd_steps(model);
    let f = |dx: &[(usize, f64)]| -> Result<f64> {
        let mut x = x0.clone();
        for &(i, d) in dx {
            x[i] += d;
        }
        lik.eval(&model.params_at(&x)?)
    };
    let f0 = f(&[])?;
    let mut hess = Mat::<f64>::zeros(q, q);
    for i in 0..q {
        let fp = f(&[(i, h[i])])?;
        let fm = f(&[(i, -h[i])])?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = f(&[(i, h[i]), (j, h[j])])?;
            let fpm = f(&[(i, h[i]), (j, -h[j])])?;
            let fmp = f(&[(i, -h[i]), (j, h[j])])?;
            let fmm = f(&[(i, -h[i]), (j, -h[j])])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let info = Mat::from_fn(q, q, |i, j| -0.5 * (hess[(i, j)] + hess[(j, i)]));
    if Cholesky::factor(info.clone()).is_err() {
        return Err(Error::SingularInformation);
    }
    Ok(info)
}
