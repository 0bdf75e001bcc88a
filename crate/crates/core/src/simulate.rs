//! Exact simulation of bivariate stationary Gaussian fields on lattices.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{Component, CovParams, GridSpec, SiteGeometry};
use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, Cholesky};

/// Two co-registered fields on a lattice, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub grid: GridSpec,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl FieldPair {
    pub fn new(grid: GridSpec, z1: Vec<f64>, z2: Vec<f64>) -> Result<Self> {
        grid.check()?;
        if z1.len() != grid.len() || z2.len() != grid.len() {
            return Err(Error::InvalidData(format!(
                "field sizes {} and {} do not match a {}x{} grid",
                z1.len(),
                z2.len(),
                grid.rows,
                grid.cols
            )));
        }
        if z1.iter().chain(&z2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("field values must be finite".into()));
        }
        Ok(FieldPair { grid, z1, z2 })
    }

    pub fn n_sites(&self) -> usize {
        self.grid.len()
    }

    /// `(z1, z2)` concatenated.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.n_sites());
        v.extend_from_slice(&self.z1);
        v.extend_from_slice(&self.z2);
        v
    }

    pub fn sample_means(&self) -> (f64, f64) {
        let n = self.n_sites() as f64;
        (self.z1.iter().sum::<f64>() / n, self.z2.iter().sum::<f64>() / n)
    }

    /// Copy with each field shifted to zero sample mean.
    pub fn centered(&self) -> FieldPair {
        let (m1, m2) = self.sample_means();
        FieldPair {
            grid: self.grid,
            z1: self.z1.iter().map(|v| v - m1).collect(),
            z2: self.z2.iter().map(|v| v - m2).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub params: CovParams,
    pub grid: GridSpec,
    pub replicates: usize,
    pub seed: u64,
}

enum Factor {
    Dense(Cholesky),
    /// `Sigma = C (x) Gamma` with `C = L_c L_c^T`.
    Kronecker { lc: [f64; 3], gamma: GammaFactor },
}

enum GammaFactor {
    Dense(Cholesky),
    Band(BandCholesky),
}

impl GammaFactor {
    fn lower_mul(&self, w: &[f64]) -> Vec<f64> {
        match self {
            GammaFactor::Dense(c) => c.lower_mul(w),
            GammaFactor::Band(b) => b.lower_mul(w),
        }
    }
}

/// Factorization of the field covariance, shared read-only by replicates.
pub struct FieldSimulator {
    grid: GridSpec,
    means: (f64, f64),
    factor: Factor,
}

impl FieldSimulator {
    pub fn new(params: &CovParams, grid: GridSpec) -> Result<Self> {
        params.check()?;
        grid.check()?;
        let sites = grid.sites();
        let factor = if params.is_shared_range() {
            kronecker_factor(params, &sites)?
        } else {
            let geom = SiteGeometry::new(&sites)?;
            Factor::Dense(Cholesky::factor(geom.covariance_matrix(params))?)
        };
        Ok(FieldSimulator {
            grid,
            means: params.means(),
            factor,
        })
    }

    /// Draws replicate `replicate` of the stream keyed by `seed`.
    pub fn sample(&self, seed: u64, replicate: u64) -> FieldPair {
        let n = self.grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        let w: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (z1, z2) = match &self.factor {
            Factor::Dense(l) => {
                let z = l.lower_mul(&w);
                (z[..n].to_vec(), z[n..].to_vec())
            }
            Factor::Kronecker { lc, gamma } => {
                let u = gamma.lower_mul(&w[..n]);
                let v = gamma.lower_mul(&w[n..]);
                let z1 = u.iter().map(|a| lc[0] * a).collect();
                let z2 = u.iter().zip(&v).map(|(a, b)| lc[1] * a + lc[2] * b).collect();
                (z1, z2)
            }
        };
        FieldPair {
            grid: self.grid,
            z1: z1.into_iter().map(|v: f64| v + self.means.0).collect(),
            z2: z2.into_iter().map(|v: f64| v + self.means.1).collect(),
        }
    }
}

fn kronecker_factor(params: &CovParams, sites: &[[f64; 2]]) -> Result<Factor> {
    let [[s1, c], [_, s2]] = params.colocated();
    let l11 = s1.sqrt();
    let l21 = c / l11;
    let rem = s2 - l21 * l21;
    if rem < 0.0 {
        return Err(Error::PositiveDefiniteness { pivot: 1, dim: 2 });
    }
    let lc = [l11, l21, rem.sqrt()];
    let n = sites.len();
    let dist = |i: usize, j: usize| (sites[i][0] - sites[j][0]).hypot(sites[i][1] - sites[j][1]);
    let gamma = match params.support() {
        Some(b) => {
            let bw = (0..n)
                .map(|i| (i + 1..n).rev().find(|&j| dist(i, j) < b).map_or(0, |j| j - i))
                .max()
                .unwrap_or(0);
            if bw * 4 < n {
                let corr = |i: usize, j: usize| params.correlation(Component::First, dist(i, j));
                GammaFactor::Band(BandCholesky::factor(n, bw, corr)?)
            } else {
                dense_gamma(params, sites)?
            }
        }
        None => dense_gamma(params, sites)?,
    };
    Ok(Factor::Kronecker { lc, gamma })
}

fn dense_gamma(params: &CovParams, sites: &[[f64; 2]]) -> Result<GammaFactor> {
    let n = sites.len();
    let m = Mat::from_fn(n, n, |i, j| {
        let d = (sites[i][0] - sites[j][0]).hypot(sites[i][1] - sites[j][1]);
        params.correlation(Component::First, d)
    });
    Ok(GammaFactor::Dense(Cholesky::factor(m)?))
}

/// Simulates `config.replicates` independent field pairs. Replicate `r`
/// depends only on `(seed, r)`.
pub fn simulate(config: &SimulationConfig) -> Result<Vec<FieldPair>> {
    if config.replicates == 0 {
        return Err(Error::domain("replicates must be >= 1"));
    }
    let sim = FieldSimulator::new(&config.params, config.grid)?;
    Ok((0..config.replicates as u64)
        .into_par_iter()
        .map(|r| sim.sample(config.seed, r))
        .collect())
}
