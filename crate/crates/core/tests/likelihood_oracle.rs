mod common;

use common::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sccc::{log_likelihood, CovParams, Error, FieldPair, GridSpec, MaternParams, WendlandParams};

fn draw_grid(rng: &mut ChaCha8Rng) -> GridSpec {
    let rows = rng.random_range(2..=5);
    let cols = rng.random_range(2..=5);
    GridSpec::new(rows, cols, (0.0, rng.random_range(1.0..3.0)), (-1.0, rng.random_range(0.0..2.0))).unwrap()
}

/// A realization of the model, or uniform noise when the model is invalid.
fn draw_data(rng: &mut ChaCha8Rng, oracle: &Model, sites: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    if let Some(z) = common::dense_sample(oracle, sites, || StandardNormal.sample(rng)) {
        return z;
    }
    let n = sites.len();
    let z1 = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let z2 = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (z1, z2)
}

fn compare(params: CovParams, oracle: Model, rng: &mut ChaCha8Rng) -> bool {
    let grid = draw_grid(rng);
    let sites = grid.sites();
    let (z1, z2) = draw_data(rng, &oracle, &sites);
    let want = common::dense_loglik(&oracle, &sites, &z1, &z2);
    let data = FieldPair::new(grid, z1, z2).unwrap();
    match (log_likelihood(&params, &data), want) {
        (Ok(got), Some(want)) => {
            assert!((got - want).abs() < 1e-8, "{params:?}: {got} vs oracle {want}");
            true
        }
        (Err(Error::PositiveDefiniteness { .. }), None) => false,
        (got, want) => panic!("disagreement on {params:?}: {got:?} vs {want:?}"),
    }
}

#[test]
fn wendland_likelihood_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 20 {
        let p = WendlandParams {
            sigma1_sq: rng.random_range(0.3..3.0),
            sigma2_sq: rng.random_range(0.3..3.0),
            b1: rng.random_range(0.5..3.0),
            b2: rng.random_range(0.5..3.0),
            b12: rng.random_range(0.5..3.0),
            nu: rng.random_range(3.0..6.0),
            rho12: rng.random_range(-0.5..0.5),
            mu1: rng.random_range(-1.0..1.0),
            mu2: rng.random_range(-1.0..1.0),
        };
        let oracle = Model {
            s1: p.sigma1_sq,
            s2: p.sigma2_sq,
            rho: p.rho12,
            mu: (p.mu1, p.mu2),
            kernels: [
                Box::new(move |h| common::wendland(h, p.b1, p.nu)),
                Box::new(move |h| common::wendland(h, p.b2, p.nu)),
                Box::new(move |h| common::wendland(h, p.b12, p.nu)),
            ],
        };
        if compare(p.into(), oracle, &mut rng) {
            checked += 1;
        }
    }
}

#[test]
fn matern_likelihood_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 20 {
        let (nu1, nu2) = (rng.random_range(0.3..2.5), rng.random_range(0.3..2.5));
        let (a1, a2) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let p = MaternParams {
            sigma1_sq: rng.random_range(0.3..3.0),
            sigma2_sq: rng.random_range(0.3..3.0),
            nu1,
            nu2,
            nu12: 0.5 * (nu1 + nu2),
            a1,
            a2,
            a12: a1.max(a2) * rng.random_range(1.0..1.5),
            rho12: rng.random_range(-0.5..0.5),
            mu1: rng.random_range(-1.0..1.0),
            mu2: rng.random_range(-1.0..1.0),
        };
        let oracle = Model {
            s1: p.sigma1_sq,
            s2: p.sigma2_sq,
            rho: p.rho12,
            mu: (p.mu1, p.mu2),
            kernels: [
                Box::new(move |h| common::matern(h, p.nu1, p.a1)),
                Box::new(move |h| common::matern(h, p.nu2, p.a2)),
                Box::new(move |h| common::matern(h, p.nu12, p.a12)),
            ],
        };
        if compare(p.into(), oracle, &mut rng) {
            checked += 1;
        }
    }
}

#[test]
fn non_positive_definite_matern_is_rejected() {
    // perfect cross-correlation with a much rougher cross kernel
    let p = MaternParams {
        sigma1_sq: 1.0,
        sigma2_sq: 1.0,
        nu1: 2.5,
        nu2: 2.5,
        nu12: 0.5,
        a1: 0.5,
        a2: 0.5,
        a12: 0.5,
        rho12: 1.0,
        mu1: 0.0,
        mu2: 0.0,
    };
    let grid = GridSpec::pixels(4, 4);
    let data = FieldPair::new(grid, vec![0.1; 16], vec![0.2; 16]).unwrap();
    assert!(matches!(
        log_likelihood(&p.into(), &data),
        Err(Error::PositiveDefiniteness { .. }) | Err(Error::Domain(_))
    ));
}
