//! Non-overlapping windows over an image pair, per-window fits and the two
//! global aggregates of the local concordance curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::concordance::{normal_quantile, sccc_estimate, sccc_estimate_with_bands, sccc_theoretical, ScccCurve};
use crate::covariance::{CovParams, Family, GridSpec};
use crate::error::{Error, Result};
use crate::image::ImagePair;
use crate::likelihood::{fit_ml, FitOptions, FittedModel};
use crate::simulate::FieldPair;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPartition {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    /// `(row, col)` offsets of complete windows, row-major.
    pub windows: Vec<(usize, usize)>,
    pub margin_rows: usize,
    pub margin_cols: usize,
}

impl WindowPartition {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

pub fn partition_image(rows: usize, cols: usize, window: usize) -> Result<WindowPartition> {
    if window < 4 {
        return Err(Error::domain(format!("window size must be at least 4, got {window}")));
    }
    if rows < window || cols < window {
        return Err(Error::domain(format!(
            "a {rows}x{cols} image holds no {window}x{window} window"
        )));
    }
    let (nr, nc) = (rows / window, cols / window);
    let windows = (0..nr)
        .flat_map(|i| (0..nc).map(move |j| (i * window, j * window)))
        .collect();
    Ok(WindowPartition {
        rows,
        cols,
        window,
        windows,
        margin_rows: rows - nr * window,
        margin_cols: cols - nc * window,
    })
}

/// Fit options used for windows and probes: one shared range, data centred
/// per window with the means held at zero.
pub fn local_fit_options() -> FitOptions {
    FitOptions {
        shared_range: true,
        profile_means: false,
        ..FitOptions::default()
    }
}

/// Centred block with its pre-centring sample means.
fn window_data(pair: &ImagePair, row: usize, col: usize, size: usize) -> Result<(FieldPair, (f64, f64))> {
    let (z1, z2) = pair.block(row, col, size);
    let data = FieldPair::new(GridSpec::pixels(size, size), z1, z2)?;
    let means = data.sample_means();
    Ok((data.centered(), means))
}

/// Fits on centred data, then attaches the original means so the plug-in
/// curve carries the mean-shift penalty.
fn fit_window(pair: &ImagePair, row: usize, col: usize, size: usize, family: Family, opts: &FitOptions) -> Result<FittedModel> {
    let (data, (m1, m2)) = window_data(pair, row, col, size)?;
    let mut opts = opts.clone();
    opts.profile_means = false;
    opts.init = opts.init.map(|p| p.with_means(0.0, 0.0));
    let mut model = fit_ml(&data, family, &opts)?;
    model.params = model.params.with_means(m1, m2);
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub offset: (usize, usize),
    pub family: Family,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FamilySelection {
    pub family: Family,
    pub rows: Vec<ProbeRow>,
    /// Mean AIC and BIC over successful probes, per family in [`Family::ALL`] order.
    pub mean_aic: [f64; 2],
    pub mean_bic: [f64; 2],
    pub tie: bool,
}

/// Fits both families on `n_probe` random `probe_size` square blocks and
/// picks the lower mean BIC. Ties within 1e-9 go to Wendland.
pub fn select_family(
    pair: &ImagePair,
    n_probe: usize,
    probe_size: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<FamilySelection> {
    if n_probe == 0 {
        return Err(Error::domain("n_probe must be at least 1"));
    }
    if pair.rows() < probe_size || pair.cols() < probe_size {
        return Err(Error::domain(format!(
            "a {}x{} image holds no {probe_size}x{probe_size} probe",
            pair.rows(),
            pair.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<(usize, usize)> = (0..n_probe)
        .map(|_| {
            (
                rng.random_range(0..=pair.rows() - probe_size),
                rng.random_range(0..=pair.cols() - probe_size),
            )
        })
        .collect();
    let mut probe_opts = opts.clone();
    probe_opts.compute_information = false;
    probe_opts.init = None;
    let tasks: Vec<((usize, usize), Family)> = offsets
        .iter()
        .flat_map(|&o| Family::ALL.into_iter().map(move |f| (o, f)))
        .collect();
    let rows: Vec<ProbeRow> = tasks
        .par_iter()
        .map(|&(offset, family)| match fit_window(pair, offset.0, offset.1, probe_size, family, &probe_opts) {
            Ok(m) => ProbeRow {
                offset,
                family,
                aic: Some(m.aic),
                bic: Some(m.bic),
                error: None,
            },
            Err(e) => ProbeRow {
                offset,
                family,
                aic: None,
                bic: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mean = |fam: Family, pick: fn(&ProbeRow) -> Option<f64>| -> f64 {
        let vals: Vec<f64> = rows.iter().filter(|r| r.family == fam).filter_map(pick).collect();
        if vals.is_empty() {
            f64::INFINITY
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let mean_aic = Family::ALL.map(|f| mean(f, |r| r.aic));
    let mean_bic = Family::ALL.map(|f| mean(f, |r| r.bic));
    if mean_bic.iter().all(|b| b.is_infinite()) {
        return Err(Error::InvalidData("every probe fit failed".into()));
    }
    let [matern, wendland] = mean_bic;
    let tie = (matern - wendland).abs() <= 1e-9;
    let family = if tie || wendland <= matern {
        Family::Wendland
    } else {
        Family::Matern
    };
    Ok(FamilySelection {
        family,
        rows,
        mean_aic,
        mean_bic,
        tie,
    })
}

#[derive(Debug, Clone)]
pub enum WindowOutcome {
    Fitted {
        model: FittedModel,
        curve: ScccCurve,
    },
    Failed {
        reason: String,
    },
}

impl WindowOutcome {
    pub fn model(&self) -> Option<&FittedModel> {
        match self {
            WindowOutcome::Fitted { model, .. } => Some(model),
            WindowOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WindowedFit {
    pub partition: WindowPartition,
    pub family: Family,
    pub lags: Vec<f64>,
    pub fits: Vec<WindowOutcome>,
    pub n_failed: usize,
    pub rho1_curve: Option<ScccCurve>,
    pub rho2_curve: Option<ScccCurve>,
}

impl WindowedFit {
    pub fn included(&self) -> impl Iterator<Item = &FittedModel> {
        self.fits.iter().filter_map(WindowOutcome::model)
    }

    pub fn n_included(&self) -> usize {
        self.fits.len() - self.n_failed
    }
}

/// Local curve with bands when the information matrix allows it.
fn local_curve(model: &FittedModel, lags: &[f64]) -> Result<ScccCurve> {
    match sccc_estimate_with_bands(model, lags, 0.05) {
        Ok(c) => Ok(c),
        Err(Error::SingularInformation) => sccc_estimate(model, lags),
        Err(e) => Err(e),
    }
}

/// Fits every window independently. `progress` is called after each window
/// with the number completed so far.
pub fn fit_windows(
    pair: &ImagePair,
    partition: &WindowPartition,
    family: Family,
    opts: &FitOptions,
    lags: &[f64],
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<WindowedFit> {
    if partition.rows != pair.rows() || partition.cols != pair.cols() {
        return Err(Error::domain("partition does not match the image dimensions"));
    }
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = partition.len();
    let fits: Vec<WindowOutcome> = partition
        .windows
        .par_iter()
        .map(|&(r, c)| {
            let out = fit_window(pair, r, c, partition.window, family, opts)
                .and_then(|model| local_curve(&model, lags).map(|curve| (model, curve)));
            if let Some(cb) = progress {
                cb(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, total);
            }
            match out {
                Ok((model, curve)) => WindowOutcome::Fitted { model, curve },
                Err(e) => WindowOutcome::Failed { reason: e.to_string() },
            }
        })
        .collect();
    let n_failed = fits.iter().filter(|f| f.model().is_none()).count();
    if n_failed == fits.len() {
        return Err(Error::InvalidData(format!("all {n_failed} windows failed to fit")));
    }
    Ok(WindowedFit {
        partition: partition.clone(),
        family,
        lags: lags.to_vec(),
        fits,
        n_failed,
        rho1_curve: None,
        rho2_curve: None,
    })
}

/// Mean of the local curves; variance is the sum of local variances over
/// `p^2`, present only when every included window has one.
pub fn global_rho1(windowed: &WindowedFit, lags: &[f64]) -> Result<ScccCurve> {
    let curves: Vec<ScccCurve> = windowed
        .included()
        .map(|m| local_curve(m, lags))
        .collect::<Result<_>>()?;
    if curves.is_empty() {
        return Err(Error::InvalidData("no window was fitted".into()));
    }
    Ok(mean_curve(&curves, lags))
}

/// `x_0 + mean(x_i - x_0)`: returns `x_0` bit for bit when all inputs agree.
fn anchored_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let (mut sum, mut count) = (0.0, 0usize);
    for x in xs {
        let x0 = *first.get_or_insert(x);
        sum += x - x0;
        count += 1;
    }
    first.map_or(f64::NAN, |x0| x0 + sum / count as f64)
}

fn mean_curve(curves: &[ScccCurve], lags: &[f64]) -> ScccCurve {
    let p = curves.len() as f64;
    let n = lags.len();
    let rho: Vec<f64> = (0..n).map(|k| anchored_mean(curves.iter().map(|c| c.rho_c[k]))).collect();
    let var = curves.iter().all(|c| c.var.is_some()).then(|| {
        let mut var = vec![0.0; n];
        for c in curves {
            for (acc, v) in var.iter_mut().zip(c.var.as_ref().unwrap()) {
                *acc += v;
            }
        }
        var.iter_mut().for_each(|v| *v /= p * p);
        var
    });
    let q = normal_quantile(0.05).expect("valid level");
    let band = |sign: f64| {
        var.as_ref().map(|var| {
            rho.iter()
                .zip(var)
                .map(|(r, v)| (r + sign * q * v.sqrt()).clamp(-1.0, 1.0))
                .collect()
        })
    };
    ScccCurve {
        lags: lags.to_vec(),
        eta: curves.iter().map(|c| c.eta).sum::<f64>() / p,
        ci_low: band(-1.0),
        ci_high: band(1.0),
        var,
        flags: (0..n).map(|k| curves.iter().any(|c| c.flags[k])).collect(),
        rho_c: rho,
    }
}

/// Parameters averaged over windows: variances, correlation and kernel
/// parameters by plain means, and the squared mean difference by its mean.
pub fn averaged_params(models: &[&FittedModel]) -> Result<CovParams> {
    let first = models.first().ok_or_else(|| Error::InvalidData("no window was fitted".into()))?;
    let family = first.family;
    if models.iter().any(|m| m.family != family) {
        return Err(Error::domain("windows were fitted with different families"));
    }
    let thetas: Vec<Vec<f64>> = models.iter().map(|m| m.theta_hat()).collect();
    let theta: Vec<f64> = (0..family.param_names().len())
        .map(|i| anchored_mean(thetas.iter().map(|t| t[i])))
        .collect();
    let d2 = anchored_mean(models.iter().map(|m| {
        let (m1, m2) = m.mu_hat();
        (m1 - m2).powi(2)
    }));
    CovParams::from_vec(family, &theta, 0.0, d2.sqrt())
}

/// The parametric curve at the averaged parameters; no variance.
pub fn global_rho2(windowed: &WindowedFit, lags: &[f64]) -> Result<ScccCurve> {
    let models: Vec<&FittedModel> = windowed.included().collect();
    sccc_theoretical(&averaged_params(&models)?, lags)
}

/// Runs both aggregates and stores them on `windowed`.
pub fn attach_global_curves(windowed: &mut WindowedFit) -> Result<()> {
    let lags = windowed.lags.clone();
    windowed.rho1_curve = Some(global_rho1(windowed, &lags)?);
    windowed.rho2_curve = Some(global_rho2(windowed, &lags)?);
    Ok(())
}
