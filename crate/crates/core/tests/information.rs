use sccc::fisher::expected_information;
use sccc::likelihood::observed_information;
use sccc::{CovParams, Family, FieldSimulator, FittedModel, GridSpec, WendlandParams};

#[test]
fn observed_information_averages_to_expected() {
    let truth = WendlandParams::shared(1.2, 0.8, 0.35, 3.0, 4.0);
    let params: CovParams = truth.into();
    let grid = GridSpec::pixels(8, 8);
    let model = FittedModel {
        family: Family::Wendland,
        params,
        shared_range: true,
        free: vec![0, 1, 2, 3],
        means_estimated: false,
        loglik: 0.0,
        aic: 0.0,
        bic: 0.0,
        converged: true,
        n_sites: grid.len(),
        iterations: 0,
        evaluations: 0,
        info_matrix: None,
    };
    assert_eq!(model.info_names(), ["sigma1_sq", "sigma2_sq", "rho12", "b1"]);
    let expected = expected_information(&truth, &grid.sites()).unwrap();
    let sim = FieldSimulator::new(&params, grid).unwrap();
    let reps = 40;
    let obs: Vec<_> = (0..reps)
        .map(|r| observed_information(&model, &sim.sample(17, r)).unwrap())
        .collect();
    for i in 0..4 {
        for j in 0..4 {
            let vals: Vec<f64> = obs.iter().map(|m| m[(i, j)]).collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            let se = sd / (reps as f64).sqrt();
            assert!(
                (mean - expected[i][j]).abs() < 4.0 * se + 1e-6 * expected[i][i].abs(),
                "({i},{j}): observed mean {mean} (se {se}) vs expected {}",
                expected[i][j]
            );
        }
    }
}
