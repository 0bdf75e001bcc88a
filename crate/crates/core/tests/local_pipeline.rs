use sccc::local::{attach_global_curves, fit_windows, local_fit_options, WindowOutcome};
use sccc::{
    fit_ml, global_rho1, global_rho2, partition_image, sccc_estimate, CovParams, Family, FieldSimulator,
    FittedModel, GridSpec, ImagePair, RasterImage, WendlandParams, WindowedFit,
};

fn model_of(params: CovParams) -> FittedModel {
    FittedModel {
        family: params.family(),
        params,
        shared_range: false,
        free: vec![0, 1, 2, 3, 4, 5],
        means_estimated: false,
        loglik: 0.0,
        aic: 0.0,
        bic: 0.0,
        converged: true,
        n_sites: 144,
        iterations: 0,
        evaluations: 0,
        info_matrix: None,
    }
}

fn windowed(models: Vec<FittedModel>, lags: &[f64]) -> WindowedFit {
    let partition = partition_image(12, 12 * models.len(), 12).unwrap();
    let fits = models
        .into_iter()
        .map(|model| {
            let curve = sccc_estimate(&model, lags).unwrap();
            WindowOutcome::Fitted { model, curve }
        })
        .collect();
    WindowedFit {
        partition,
        family: Family::Wendland,
        lags: lags.to_vec(),
        fits,
        n_failed: 0,
        rho1_curve: None,
        rho2_curve: None,
    }
}

fn image_pair(params: &CovParams, rows: usize, cols: usize, seed: u64) -> ImagePair {
    let sim = FieldSimulator::new(params, GridSpec::pixels(rows, cols)).unwrap();
    let f = sim.sample(seed, 0);
    let px = |z: &[f64]| z.iter().map(|v| (0.5 + 0.1 * v).clamp(0.0, 1.0)).collect();
    ImagePair::new(
        RasterImage::new(rows, cols, 1, px(&f.z1)).unwrap(),
        RasterImage::new(rows, cols, 1, px(&f.z2)).unwrap(),
        Default::default(),
    )
    .unwrap()
}

fn lags() -> Vec<f64> {
    (0..=20).map(|k| 0.4 * k as f64).collect()
}

#[test]
fn identical_windows_give_equal_aggregates() {
    let p = WendlandParams { mu1: 0.2, mu2: 0.5, ..WendlandParams::shared(1.3, 0.7, 0.45, 4.0, 4.0) };
    let w = windowed(vec![model_of(p.into()); 5], &lags());
    let r1 = global_rho1(&w, &lags()).unwrap();
    let r2 = global_rho2(&w, &lags()).unwrap();
    let local = sccc_estimate(&model_of(p.into()), &lags()).unwrap();
    assert_eq!(r1.rho_c, local.rho_c);
    for (a, b) in r1.rho_c.iter().zip(&r2.rho_c) {
        assert!((a - b).abs() <= 4.0 * f64::EPSILON, "{a} vs {b}");
    }
}

#[test]
fn opposite_correlations_average_to_zero() {
    let base = WendlandParams::shared(1.0, 1.0, 0.4, 3.0, 4.0);
    let neg = WendlandParams { rho12: -0.4, ..base };
    let w = windowed(vec![model_of(base.into()), model_of(neg.into())], &lags());
    let r2 = global_rho2(&w, &lags()).unwrap();
    assert!(r2.rho_c.iter().all(|v| *v == 0.0));
}

#[test]
fn mean_of_curves_dominates_beyond_mean_range() {
    let short = WendlandParams::shared(1.0, 1.0, 0.5, 2.0, 4.0);
    let long = WendlandParams::shared(1.0, 1.0, 0.5, 4.0, 4.0);
    let w = windowed(vec![model_of(short.into()), model_of(long.into())], &lags());
    let r1 = global_rho1(&w, &lags()).unwrap();
    let r2 = global_rho2(&w, &lags()).unwrap();
    for (k, &h) in lags().iter().enumerate() {
        if h >= 3.0 {
            assert!(r1.rho_c[k] >= r2.rho_c[k]);
        }
    }
    assert!(lags().iter().zip(r1.rho_c.iter().zip(&r2.rho_c)).any(|(h, (a, b))| *h > 3.0 && a > b));
}

#[test]
fn rho1_restricts_to_subsets() {
    let ms: Vec<FittedModel> = [2.0, 3.0, 5.0]
        .iter()
        .map(|&b| model_of(WendlandParams::shared(1.0, 1.5, 0.3, b, 4.0).into()))
        .collect();
    let all = global_rho1(&windowed(ms.clone(), &lags()), &lags()).unwrap();
    let sub = global_rho1(&windowed(ms[..2].to_vec(), &lags()), &lags()).unwrap();
    let third = sccc_estimate(&ms[2], &lags()).unwrap();
    for k in 0..lags().len() {
        let recombined = (2.0 * sub.rho_c[k] + third.rho_c[k]) / 3.0;
        assert!((recombined - all.rho_c[k]).abs() < 1e-14);
    }
}

#[test]
fn windowed_fit_is_deterministic_and_close_to_truth() {
    let truth: CovParams = WendlandParams::shared(1.0, 1.0, 0.6, 5.0, 4.0).into();
    let pair = image_pair(&truth, 24, 36, 3);
    let part = partition_image(24, 36, 12).unwrap();
    let run = || {
        let mut w = fit_windows(&pair, &part, Family::Wendland, &local_fit_options(), &lags(), None).unwrap();
        attach_global_curves(&mut w).unwrap();
        w
    };
    let a = run();
    let b = run();
    assert_eq!(a.n_failed, 0);
    assert_eq!(a.rho1_curve, b.rho1_curve);
    assert_eq!(a.rho2_curve, b.rho2_curve);
    let r1 = a.rho1_curve.unwrap().rho_c[0];
    assert!((r1 - 0.6).abs() < 0.25, "rho1(0) = {r1}");
}

#[test]
fn identical_images_give_perfect_concordance() {
    let truth: CovParams = WendlandParams::shared(1.0, 1.0, 0.6, 5.0, 4.0).into();
    let pair = image_pair(&truth, 12, 12, 4);
    let same = ImagePair::new(pair.a.clone(), pair.a.clone(), Default::default()).unwrap();
    let (z1, z2) = same.block(0, 0, 12);
    let data = sccc::FieldPair::new(GridSpec::pixels(12, 12), z1, z2).unwrap();
    // a perfectly correlated pair is singular; the fit must not report garbage
    if let Ok(m) = fit_ml(&data.centered(), Family::Wendland, &local_fit_options()) {
        assert!(m.params.rho12() > 0.99);
    }
}
