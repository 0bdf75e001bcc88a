//! Expected information of the separable Wendland model with
//! `theta = (sigma1_sq, sigma2_sq, rho12, b12)`, by two routes: the
//! closed-form Kronecker reduction and direct dense traces.

use faer::Mat;

use crate::covariance::{wendland_correlation, SiteGeometry, WendlandParams};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// `d R / d b` for the Wendland kernel at lag norm `h`.
pub fn wendland_range_derivative(h: f64, b: f64, nu: f64) -> f64 {
    if h >= b {
        return 0.0;
    }
    let t = h / b;
    (nu + 1.0) * h / (b * b) * (1.0 - t).powf(nu) * (-(1.0 - t) + 1.0 + (nu + 1.0) * t)
}

fn check_separable(p: &WendlandParams) -> Result<()> {
    if p.b1 != p.b2 || p.b1 != p.b12 {
        return Err(Error::domain("expected information needs one shared support range"));
    }
    if !(p.sigma1_sq > 0.0 && p.sigma2_sq > 0.0 && p.rho12.abs() < 1.0 && p.b12 > 0.0 && p.nu > 0.0) {
        return Err(Error::domain(format!("infeasible parameters {p:?}")));
    }
    Ok(())
}

/// `Gamma_n` and `S_n = d Gamma_n / d b` on a site set.
fn gamma_and_derivative(geom: &SiteGeometry, b: f64, nu: f64) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = geom.n_sites();
    let mut r = Vec::with_capacity(geom.lags().len());
    let mut s = Vec::with_capacity(geom.lags().len());
    for &h in geom.lags() {
        r.push(wendland_correlation(h, b, nu)?);
        s.push(wendland_range_derivative(h, b, nu));
    }
    Ok((
        Mat::from_fn(n, n, |i, j| r[geom.lag_index(i, j)]),
        Mat::from_fn(n, n, |i, j| s[geom.lag_index(i, j)]),
    ))
}

fn matmul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a * b
}

fn trace(a: &Mat<f64>) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// Closed-form information: with `A_n = Gamma_n^{-1} S_n` (matrix product),
/// the `(sigma, rho)` block is `n` times that of one bivariate normal
/// observation, the cross terms carry `tr(A_n)` and the range entry is
/// `tr(A_n^2)`.
pub fn expected_information(params: &WendlandParams, sites: &[[f64; 2]]) -> Result<[[f64; 4]; 4]> {
    check_separable(params)?;
    let geom = SiteGeometry::new(sites)?;
    let n = geom.n_sites() as f64;
    let (gamma, s) = gamma_and_derivative(&geom, params.b12, params.nu)?;
    let chol = Cholesky::factor(gamma)?;
    let a_n = chol.inverse() * &s;
    let tr_a = trace(&a_n);
    let tr_a2 = trace(&matmul(&a_n, &a_n));

    let (s1, s2, r) = (params.sigma1_sq, params.sigma2_sq, params.rho12);
    let r2m1 = r * r - 1.0;
    let t11 = n * (r * r - 2.0) / (4.0 * s1 * s1 * r2m1);
    let t22 = n * (r * r - 2.0) / (4.0 * s2 * s2 * r2m1);
    let t12 = n * r * r / (4.0 * s1 * s2 * r2m1);
    let t1r = n * r / (2.0 * s1 * r2m1);
    let t2r = n * r / (2.0 * s2 * r2m1);
    let trr = n * (r * r + 1.0) / (r2m1 * r2m1);
    let t1b = tr_a / (2.0 * s1);
    let t2b = tr_a / (2.0 * s2);
    let tbr = r / r2m1 * tr_a;
    let tbb = tr_a2;
    Ok([
        [t11, t12, t1r, t1b],
        [t12, t22, t2r, t2b],
        [t1r, t2r, trr, tbr],
        [t1b, t2b, tbr, tbb],
    ])
}

/// Same matrix from `1/2 tr(Sigma^{-1} Sigma_i Sigma^{-1} Sigma_j)` on the
/// dense `2n x 2n` matrices.
pub fn expected_information_dense(params: &WendlandParams, sites: &[[f64; 2]]) -> Result<[[f64; 4]; 4]> {
    check_separable(params)?;
    let geom = SiteGeometry::new(sites)?;
    let n = geom.n_sites();
    let (gamma, s) = gamma_and_derivative(&geom, params.b12, params.nu)?;
    let (s1, s2, r) = (params.sigma1_sq, params.sigma2_sq, params.rho12);
    let (sd1, sd2) = (s1.sqrt(), s2.sqrt());
    let kron = |c: [[f64; 2]; 2], m: &Mat<f64>| {
        Mat::from_fn(2 * n, 2 * n, |i, j| c[i / n][j / n] * m[(i % n, j % n)])
    };
    let cov = [[s1, r * sd1 * sd2], [r * sd1 * sd2, s2]];
    let sigma = kron(cov, &gamma);
    let derivs = [
        kron([[1.0, sd2 * r / (2.0 * sd1)], [sd2 * r / (2.0 * sd1), 0.0]], &gamma),
        kron([[0.0, sd1 * r / (2.0 * sd2)], [sd1 * r / (2.0 * sd2), 1.0]], &gamma),
        kron([[0.0, sd1 * sd2], [sd1 * sd2, 0.0]], &gamma),
        kron(cov, &s),
    ];
    let inv = Cholesky::factor(sigma)?.inverse();
    let products: Vec<Mat<f64>> = derivs.iter().map(|d| matmul(&inv, d)).collect();
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            // tr(P_i P_j) without forming the product
            let (pi, pj) = (&products[i], &products[j]);
            let mut t = 0.0;
            for a in 0..2 * n {
                for b in 0..2 * n {
                    t += pi[(a, b)] * pj[(b, a)];
                }
            }
            out[i][j] = 0.5 * t;
            out[j][i] = 0.5 * t;
        }
    }
    Ok(out)
}

/// `a_ij = t_ij / sqrt(t_ii t_jj)`.
pub fn normalized_information(t: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut a = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = t[i][j] / (t[i][i] * t[j][j]).sqrt();
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::GridSpec;

    #[test]
    fn routes_agree() {
        let sites = GridSpec::pixels(5, 4).sites();
        for (s1, s2, r, b) in [(1.0, 1.0, 0.3, 2.5), (0.7, 2.2, -0.6, 3.1), (1.5, 0.4, 0.05, 1.7)] {
            let p = WendlandParams::shared(s1, s2, r, b, 4.0);
            let closed = expected_information(&p, &sites).unwrap();
            let dense = expected_information_dense(&p, &sites).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let scale = closed[i][i].abs().max(closed[j][j].abs()).max(1.0);
                    assert!(
                        (closed[i][j] - dense[i][j]).abs() < 1e-9 * scale,
                        "({i},{j}): {} vs {}",
                        closed[i][j],
                        dense[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn range_derivative_matches_differences() {
        for h in [0.1, 0.4, 0.9] {
            let (b, nu, d) = (1.2, 4.0, 1e-6);
            let fd = (wendland_correlation(h, b + d, nu).unwrap() - wendland_correlation(h, b - d, nu).unwrap())
                / (2.0 * d);
            assert!((fd - wendland_range_derivative(h, b, nu)).abs() < 1e-8);
        }
        assert_eq!(wendland_range_derivative(1.5, 1.2, 4.0), 0.0);
    }

    #[test]
    fn normalized_has_unit_diagonal() {
        let p = WendlandParams::shared(1.0, 2.0, 0.4, 2.0, 4.0);
        let t = expected_information(&p, &GridSpec::pixels(4, 4).sites()).unwrap();
        let a = normalized_information(&t);
        for (i, row) in a.iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-14);
            assert!(row.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }
}
