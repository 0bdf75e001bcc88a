//! Bivariate Matérn and Wendland-Gneiting covariance models.
//!
//! The stacked data vector is `(Z1(s_1), ..., Z1(s_n), Z2(s_1), ..., Z2(s_n))`,
//! so covariance matrices have the block layout
//! `[s1 R1, c R12; c R12, s2 R2]` with `c = rho12 * sqrt(s1 * s2)`.

use std::fmt;
use std::str::FromStr;

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::special::{bessel_k, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Matern,
    Wendland,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Matern, Family::Wendland];

    pub fn name(self) -> &'static str {
        match self {
            Family::Matern => "matern",
            Family::Wendland => "wendland",
        }
    }

    /// Names of the covariance parameters, in the order used by
    /// [`CovParams::to_vec`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Matern => &[
                "sigma1_sq", "sigma2_sq", "rho12", "nu1", "nu2", "nu12", "a1", "a2", "a12",
            ],
            Family::Wendland => &["sigma1_sq", "sigma2_sq", "rho12", "b1", "b2", "b12", "nu"],
        }
    }

    pub fn param_index(self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|n| *n == name)
    }

    /// Pairs `(target, source)` of parameters that coincide when all
    /// marginal and cross kernels share one correlation function.
    pub fn shared_range_ties(self) -> &'static [(usize, usize)] {
        match self {
            // nu2, nu12 <- nu1 ; a2, a12 <- a1
            Family::Matern => &[(4, 3), (5, 3), (7, 6), (8, 6)],
            // b2, b12 <- b1
            Family::Wendland => &[(4, 3), (5, 3)],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern" | "matérn" => Ok(Family::Matern),
            "wendland" => Ok(Family::Wendland),
            other => Err(Error::domain(format!("unknown covariance family '{other}'"))),
        }
    }
}

/// Normalized Matérn correlation `2^{1-nu}/Gamma(nu) (a h)^nu K_nu(a h)`,
/// equal to one at the origin.
pub fn matern_correlation(h_norm: f64, nu: f64, a: f64) -> Result<f64> {
    if !(nu > 0.0) || !(a > 0.0) {
        return Err(Error::domain(format!("matern needs nu > 0 and a > 0, got nu={nu}, a={a}")));
    }
    if !(h_norm >= 0.0) {
        return Err(Error::domain(format!("lag norm must be nonnegative, got {h_norm}")));
    }
    if h_norm == 0.0 {
        return Ok(1.0);
    }
    let x = a * h_norm;
    let k = bessel_k(nu, x)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    if !k.is_finite() {
        return Ok(1.0);
    }
    let log_m = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * x.ln() + k.ln();
    Ok(log_m.exp().min(1.0))
}

/// Closed-form Matérn correlation for half-integer smoothness `nu = n + 1/2`.
pub fn matern_half_integer(h_norm: f64, n: u32, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("matern needs a > 0, got {a}")));
    }
    if !(h_norm >= 0.0) {
        return Err(Error::domain(format!("lag norm must be nonnegative, got {h_norm}")));
    }
    let x = a * h_norm;
    let n = n as usize;
    // (n+k)!/(2n)! * C(n,k), accumulated as a ratio to stay in range
    let mut sum = 0.0;
    for k in 0..=n {
        let mut coef = 1.0;
        // (n+k)!/(2n)! = 1 / ((n+k+1)...(2n))
        for m in (n + k + 1)..=(2 * n) {
            coef /= m as f64;
        }
        coef *= binomial(n, k);
        sum += coef * (2.0 * x).powi((n - k) as i32);
    }
    Ok((-x).exp() * sum)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Askey-type Wendland correlation `(1 + (nu+1) t)(1 - t)_+^{nu+1}`, `t = h/b`.
pub fn wendland_correlation(h_norm: f64, b: f64, nu: f64) -> Result<f64> {
    if !(b > 0.0) || !(nu > 0.0) {
        return Err(Error::domain(format!("wendland needs b > 0 and nu > 0, got b={b}, nu={nu}")));
    }
    if !(h_norm >= 0.0) {
        return Err(Error::domain(format!("lag norm must be nonnegative, got {h_norm}")));
    }
    Ok(wendland_unchecked(h_norm, b, nu))
}

#[inline]
pub(crate) fn wendland_unchecked(h: f64, b: f64, nu: f64) -> f64 {
    let t = h / b;
    if t >= 1.0 {
        return 0.0;
    }
    let l = nu + 1.0;
    let base = 1.0 - t;
    let pow = if nu.fract() == 0.0 && l <= 64.0 {
        base.powi(l as i32)
    } else {
        base.powf(l)
    };
    (1.0 + l * t) * pow
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu12: f64,
    pub a1: f64,
    pub a2: f64,
    pub a12: f64,
    pub rho12: f64,
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WendlandParams {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub b1: f64,
    pub b2: f64,
    pub b12: f64,
    pub nu: f64,
    pub rho12: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl WendlandParams {
    /// Separable model with one support range for all three kernels.
    pub fn shared(sigma1_sq: f64, sigma2_sq: f64, rho12: f64, b: f64, nu: f64) -> Self {
        WendlandParams {
            sigma1_sq,
            sigma2_sq,
            b1: b,
            b2: b,
            b12: b,
            nu,
            rho12,
            mu1: 0.0,
            mu2: 0.0,
        }
    }
}

/// Which entry of the 2x2 covariance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    First,
    Second,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovParams {
    Matern(MaternParams),
    Wendland(WendlandParams),
}

impl From<MaternParams> for CovParams {
    fn from(p: MaternParams) -> Self {
        CovParams::Matern(p)
    }
}

impl From<WendlandParams> for CovParams {
    fn from(p: WendlandParams) -> Self {
        CovParams::Wendland(p)
    }
}

impl CovParams {
    pub fn family(&self) -> Family {
        match self {
            CovParams::Matern(_) => Family::Matern,
            CovParams::Wendland(_) => Family::Wendland,
        }
    }

    pub fn sigma1_sq(&self) -> f64 {
        match self {
            CovParams::Matern(p) => p.sigma1_sq,
            CovParams::Wendland(p) => p.sigma1_sq,
        }
    }

    pub fn sigma2_sq(&self) -> f64 {
        match self {
            CovParams::Matern(p) => p.sigma2_sq,
            CovParams::Wendland(p) => p.sigma2_sq,
        }
    }

    pub fn rho12(&self) -> f64 {
        match self {
            CovParams::Matern(p) => p.rho12,
            CovParams::Wendland(p) => p.rho12,
        }
    }

    pub fn means(&self) -> (f64, f64) {
        match self {
            CovParams::Matern(p) => (p.mu1, p.mu2),
            CovParams::Wendland(p) => (p.mu1, p.mu2),
        }
    }

    pub fn with_means(mut self, mu1: f64, mu2: f64) -> Self {
        match &mut self {
            CovParams::Matern(p) => {
                p.mu1 = mu1;
                p.mu2 = mu2;
            }
            CovParams::Wendland(p) => {
                p.mu1 = mu1;
                p.mu2 = mu2;
            }
        }
        self
    }

    /// Covariance parameters (no means) in [`Family::param_names`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            CovParams::Matern(p) => vec![
                p.sigma1_sq, p.sigma2_sq, p.rho12, p.nu1, p.nu2, p.nu12, p.a1, p.a2, p.a12,
            ],
            CovParams::Wendland(p) => {
                vec![p.sigma1_sq, p.sigma2_sq, p.rho12, p.b1, p.b2, p.b12, p.nu]
            }
        }
    }

    pub fn from_vec(family: Family, v: &[f64], mu1: f64, mu2: f64) -> Result<Self> {
        let expect = family.param_names().len();
        if v.len() != expect {
            return Err(Error::domain(format!(
                "{family} expects {expect} parameters, got {}",
                v.len()
            )));
        }
        Ok(match family {
            Family::Matern => CovParams::Matern(MaternParams {
                sigma1_sq: v[0],
                sigma2_sq: v[1],
                rho12: v[2],
                nu1: v[3],
                nu2: v[4],
                nu12: v[5],
                a1: v[6],
                a2: v[7],
                a12: v[8],
                mu1,
                mu2,
            }),
            Family::Wendland => CovParams::Wendland(WendlandParams {
                sigma1_sq: v[0],
                sigma2_sq: v[1],
                rho12: v[2],
                b1: v[3],
                b2: v[4],
                b12: v[5],
                nu: v[6],
                mu1,
                mu2,
            }),
        })
    }

    /// Checks parameter domains (not joint positive definiteness).
    pub fn check(&self) -> Result<()> {
        let v = self.to_vec();
        let names = self.family().param_names();
        for (name, &x) in names.iter().zip(&v) {
            if !x.is_finite() {
                return Err(Error::domain(format!("{name} must be finite, got {x}")));
            }
            if *name == "rho12" {
                if x.abs() > 1.0 {
                    return Err(Error::domain(format!("|rho12| must be <= 1, got {x}")));
                }
            } else if !(x > 0.0) {
                return Err(Error::domain(format!("{name} must be > 0, got {x}")));
            }
        }
        let (m1, m2) = self.means();
        if !m1.is_finite() || !m2.is_finite() {
            return Err(Error::domain("means must be finite"));
        }
        Ok(())
    }

    /// True when all three kernels coincide, so the covariance is separable.
    pub fn is_shared_range(&self) -> bool {
        match self {
            CovParams::Matern(p) => {
                p.nu1 == p.nu2 && p.nu1 == p.nu12 && p.a1 == p.a2 && p.a1 == p.a12
            }
            CovParams::Wendland(p) => p.b1 == p.b2 && p.b1 == p.b12,
        }
    }

    /// Correlation function of one component at lag norm `h`. Parameters are
    /// assumed checked.
    pub fn correlation(&self, comp: Component, h: f64) -> f64 {
        match self {
            CovParams::Matern(p) => {
                let (nu, a) = match comp {
                    Component::First => (p.nu1, p.a1),
                    Component::Second => (p.nu2, p.a2),
                    Component::Cross => (p.nu12, p.a12),
                };
                matern_correlation(h, nu, a).unwrap_or(f64::NAN)
            }
            CovParams::Wendland(p) => {
                let b = match comp {
                    Component::First => p.b1,
                    Component::Second => p.b2,
                    Component::Cross => p.b12,
                };
                wendland_unchecked(h, b, p.nu)
            }
        }
    }

    /// Covariance `C_ij(h)`.
    pub fn covariance(&self, comp: Component, h: f64) -> f64 {
        let scale = match comp {
            Component::First => self.sigma1_sq(),
            Component::Second => self.sigma2_sq(),
            Component::Cross => self.colocated_cross_cov(),
        };
        scale * self.correlation(comp, h)
    }

    pub fn colocated_cross_cov(&self) -> f64 {
        self.rho12() * (self.sigma1_sq() * self.sigma2_sq()).sqrt()
    }

    /// Colocated 2x2 covariance `[[s1, c], [c, s2]]`.
    pub fn colocated(&self) -> [[f64; 2]; 2] {
        let c = self.colocated_cross_cov();
        [[self.sigma1_sq(), c], [c, self.sigma2_sq()]]
    }

    /// Lag beyond which all kernels vanish, if any.
    pub fn support(&self) -> Option<f64> {
        match self {
            CovParams::Matern(_) => None,
            CovParams::Wendland(p) => Some(p.b1.max(p.b2).max(p.b12)),
        }
    }
}

/// Rectangular lattice of sites in row-major order. Columns run along `x`,
/// rows along `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        let g = GridSpec {
            rows,
            cols,
            x_range,
            y_range,
        };
        g.check()?;
        Ok(g)
    }

    /// Unit-spaced pixel lattice: `x = col`, `y = row`.
    pub fn pixels(rows: usize, cols: usize) -> Self {
        GridSpec {
            rows,
            cols,
            x_range: (0.0, cols.saturating_sub(1) as f64),
            y_range: (0.0, rows.saturating_sub(1) as f64),
        }
    }

    /// The 20x20 lattice on `[-3/2, 3/2]^2` of the simulation study.
    pub fn study() -> Self {
        GridSpec {
            rows: 20,
            cols: 20,
            x_range: (-1.5, 1.5),
            y_range: (-1.5, 1.5),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain("grid dimensions must be positive"));
        }
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("grid ranges must be finite"));
        }
        if (self.cols > 1 && !(x1 > x0)) || (self.rows > 1 && !(y1 > y0)) {
            return Err(Error::domain("grid ranges must be increasing intervals"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, col: usize) -> f64 {
        axis_coord(self.x_range, self.cols, col)
    }

    pub fn y(&self, row: usize) -> f64 {
        axis_coord(self.y_range, self.rows, row)
    }

    pub fn sites(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push([self.x(c), self.y(r)]);
            }
        }
        out
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        let dx = self.x_range.1 - self.x_range.0;
        let dy = self.y_range.1 - self.y_range.0;
        dx.hypot(dy)
    }

    /// Smallest distance between distinct sites.
    pub fn min_spacing(&self) -> f64 {
        let sx = if self.cols > 1 {
            (self.x_range.1 - self.x_range.0) / (self.cols - 1) as f64
        } else {
            f64::INFINITY
        };
        let sy = if self.rows > 1 {
            (self.y_range.1 - self.y_range.0) / (self.rows - 1) as f64
        } else {
            f64::INFINITY
        };
        sx.min(sy)
    }
}

fn axis_coord(range: (f64, f64), count: usize, i: usize) -> f64 {
    if count <= 1 {
        range.0
    } else {
        range.0 + (range.1 - range.0) * i as f64 / (count - 1) as f64
    }
}

/// Pairwise distances of a site set, compressed to the distinct values.
///
/// Regular lattices have few distinct distances, so kernels are evaluated
/// once per distinct lag instead of once per pair.
#[derive(Debug, Clone)]
pub struct SiteGeometry {
    n: usize,
    lags: Vec<f64>,
    index: Vec<u32>,
}

impl SiteGeometry {
    pub fn new(sites: &[[f64; 2]]) -> Result<Self> {
        let n = sites.len();
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                let d = (sites[i][0] - sites[j][0]).hypot(sites[i][1] - sites[j][1]);
                if !d.is_finite() {
                    return Err(Error::domain("site coordinates must be finite"));
                }
                if i != j && d == 0.0 {
                    return Err(Error::domain(format!("sites {j} and {i} coincide")));
                }
                pairs.push((d, i * (i + 1) / 2 + j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = pairs.last().map_or(1.0, |p| p.0.max(1e-300));
        let mut lags: Vec<f64> = Vec::new();
        let mut tri_index = vec![0u32; pairs.len()];
        for &(d, k) in &pairs {
            match lags.last() {
                Some(&last) if d - last <= 1e-12 * scale => {}
                _ => lags.push(d),
            }
            tri_index[k] = (lags.len() - 1) as u32;
        }
        let mut index = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = tri_index[i * (i + 1) / 2 + j];
                index[i * n + j] = k;
                index[j * n + i] = k;
            }
        }
        Ok(SiteGeometry { n, lags, index })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Distinct distances, ascending.
    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    #[inline]
    pub fn lag_index(&self, i: usize, j: usize) -> usize {
        self.index[i * self.n + j] as usize
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.lags[self.lag_index(i, j)]
    }

    /// Covariance of the stacked `2n` vector.
    pub fn covariance_matrix(&self, params: &CovParams) -> Mat<f64> {
        let n = self.n;
        let eval = |comp| -> Vec<f64> {
            self.lags.iter().map(|&h| params.covariance(comp, h)).collect()
        };
        let c11 = eval(Component::First);
        let c22 = eval(Component::Second);
        let c12 = eval(Component::Cross);
        let mut m = Mat::<f64>::zeros(2 * n, 2 * n);
        for j in 0..2 * n {
            let (bj, jj) = (j / n, j % n);
            let idx = &self.index[jj * n..(jj + 1) * n];
            let col = m
                .col_mut(j)
                .try_as_col_major_mut()
                .expect("owned matrix columns are contiguous")
                .as_slice_mut();
            let (top, bottom) = col.split_at_mut(n);
            let (upper, lower) = if bj == 0 { (&c11, &c12) } else { (&c12, &c22) };
            for ((t, b), &k) in top.iter_mut().zip(bottom.iter_mut()).zip(idx) {
                *t = upper[k as usize];
                *b = lower[k as usize];
            }
        }
        m
    }

    /// `n x n` correlation matrix of one kernel.
    pub fn correlation_matrix(&self, params: &CovParams, comp: Component) -> Mat<f64> {
        let vals: Vec<f64> = self.lags.iter().map(|&h| params.correlation(comp, h)).collect();
        Mat::from_fn(self.n, self.n, |i, j| vals[self.lag_index(i, j)])
    }
}

/// Full `2n x 2n` covariance of `(Z1(s_1..s_n), Z2(s_1..s_n))`.
pub fn build_covariance_matrix(params: &CovParams, sites: &[[f64; 2]]) -> Result<Mat<f64>> {
    params.check()?;
    let geom = SiteGeometry::new(sites)?;
    Ok(geom.covariance_matrix(params))
}

/// Succeeds iff the covariance on `sites` admits a Cholesky factorization
/// (after at most one diagonal jitter).
pub fn validate_params(params: &CovParams, sites: &[[f64; 2]]) -> Result<()> {
    let m = build_covariance_matrix(params, sites)?;
    Cholesky::factor(m).map(|_| ())
}
