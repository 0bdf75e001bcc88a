//! Browser bindings: theoretical curves, simulated field pairs and a small
//! windowed analysis, all returning flat `Float64Array`s for canvas drawing.

use wasm_bindgen::prelude::*;

use sccc::concordance::lag_grid;
use sccc::local::{attach_global_curves, fit_windows, local_fit_options};
use sccc::{
    lin_ccc, partition_image, sccc_theoretical, CovParams, Family, FieldSimulator, GridSpec, ImagePair,
    MaternParams, RasterImage, WendlandParams,
};

fn js(e: sccc::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Concordance curve on `count + 1` lags in `[0, max_lag]`. `family` is
/// "wendland" (`shape` = nu, `range` = b12) or "matern" (`shape` = nu12,
/// `range` = 1/a12).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn theoretical_curve(
    family: &str,
    sigma1_sq: f64,
    sigma2_sq: f64,
    rho12: f64,
    range: f64,
    shape: f64,
    mean_shift: f64,
    max_lag: f64,
    count: usize,
) -> Result<Vec<f64>, JsError> {
    let params: CovParams = match family.parse::<Family>().map_err(js)? {
        Family::Wendland => WendlandParams {
            mu2: mean_shift,
            ..WendlandParams::shared(sigma1_sq, sigma2_sq, rho12, range, shape)
        }
        .into(),
        Family::Matern => {
            let a = 1.0 / range;
            MaternParams {
                sigma1_sq,
                sigma2_sq,
                nu1: shape,
                nu2: shape,
                nu12: shape,
                a1: a,
                a2: a,
                a12: a,
                rho12,
                mu1: 0.0,
                mu2: mean_shift,
            }
            .into()
        }
    };
    let curve = sccc_theoretical(&params, &lag_grid(max_lag, count.max(1))).map_err(js)?;
    Ok(curve.rho_c)
}

fn simulated_pair(size: usize, rho12: f64, range: f64, seed: u64) -> Result<sccc::FieldPair, JsError> {
    let params: CovParams = WendlandParams::shared(1.0, 1.0, rho12, range, 4.0).into();
    let sim = FieldSimulator::new(&params, GridSpec::pixels(size, size)).map_err(js)?;
    Ok(sim.sample(seed, 0))
}

/// Separable Wendland pair on a `size x size` pixel lattice: the first
/// field's values followed by the second's, row-major.
#[wasm_bindgen]
pub fn simulate_pair(size: usize, rho12: f64, range: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let f = simulated_pair(size, rho12, range, seed)?;
    let mut out = f.z1;
    out.extend(f.z2);
    Ok(out)
}

/// Windowed analysis of a simulated pair. Layout of the result:
/// `[lin_rho_c, rho1(0), rho2(0), n_windows, rho_c(0) of each window...]`,
/// windows in row-major order (NaN for a failed window).
#[wasm_bindgen]
pub fn local_analysis(size: usize, window: usize, rho12: f64, range: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let f = simulated_pair(size, rho12, range, seed)?;
    let to_img = |z: &[f64]| {
        let px = z.iter().map(|v| (0.5 + 0.1 * v).clamp(0.0, 1.0)).collect();
        RasterImage::new(size, size, 1, px).map_err(js)
    };
    let pair = ImagePair::new(to_img(&f.z1)?, to_img(&f.z2)?, Default::default()).map_err(js)?;
    let part = partition_image(size, size, window).map_err(js)?;
    let lags = lag_grid(window as f64 / 2.0, 12);
    let mut w = fit_windows(&pair, &part, Family::Wendland, &local_fit_options(), &lags, None).map_err(js)?;
    attach_global_curves(&mut w).map_err(js)?;
    let lin = lin_ccc(&pair.a.pixels, &pair.b.pixels).map_err(js)?;
    let mut out = vec![
        lin.rho_c,
        w.rho1_curve.as_ref().map_or(f64::NAN, |c| c.rho_c[0]),
        w.rho2_curve.as_ref().map_or(f64::NAN, |c| c.rho_c[0]),
        part.len() as f64,
    ];
    out.extend(w.fits.iter().map(|o| match o {
        sccc::local::WindowOutcome::Fitted { curve, .. } => curve.rho_c[0],
        sccc::local::WindowOutcome::Failed { .. } => f64::NAN,
    }));
    Ok(out)
}
