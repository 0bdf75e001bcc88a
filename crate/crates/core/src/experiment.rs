//! Monte Carlo recovery study: simulate, fit, and compare the plug-in
//! concordance curve with the truth.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::concordance::{sccc_estimate_with_bands, sccc_theoretical, sccc_estimate};
use crate::covariance::{CovParams, Family, GridSpec, WendlandParams};
use crate::error::{Error, Result};
use crate::format::num;
use crate::likelihood::{fit_ml, FitOptions};
use crate::simulate::FieldSimulator;

/// The three Wendland parameter sets of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Case1,
    Case2,
    Case3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Case1, Preset::Case2, Preset::Case3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
            Preset::Case3 => "case3",
        }
    }

    pub fn params(self) -> CovParams {
        let (rho12, b1, b2, b12) = match self {
            Preset::Case1 => (-0.15, 0.5, 0.4, 0.35),
            Preset::Case2 => (0.25, 1.2, 0.9, 1.0),
            Preset::Case3 => (0.3, 1.8, 1.4, 1.5),
        };
        CovParams::Wendland(WendlandParams {
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            b1,
            b2,
            b12,
            nu: 4.0,
            rho12,
            mu1: 0.0,
            mu2: 0.0,
        })
    }

    pub fn grid(self) -> GridSpec {
        GridSpec::study()
    }

    /// Curve MSE bound at 100 replicates (ten times the published figure).
    pub fn mse_bound(self) -> f64 {
        match self {
            Preset::Case1 => 4e-4,
            Preset::Case2 => 1e-3,
            Preset::Case3 => 2e-3,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown preset '{s}' (case1, case2, case3)")))
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub params: CovParams,
    pub grid: GridSpec,
    pub replicates: usize,
    pub seed: u64,
    pub lags: Vec<f64>,
    pub family: Family,
    pub fit: FitOptions,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub rho_hat: Option<Vec<f64>>,
    pub var: Option<Vec<f64>>,
    pub theta_hat: Option<Vec<f64>>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub replicates: usize,
    pub seed: u64,
    pub lags: Vec<f64>,
    pub truth: Vec<f64>,
    pub outcomes: Vec<ReplicateOutcome>,
    /// Per-lag mean squared error over fitted replicates.
    pub mse: Vec<f64>,
    /// Per-lag mean delta-method variance over replicates with information.
    pub mean_var: Vec<f64>,
    pub n_failed: usize,
    pub n_unconverged: usize,
}

impl McReport {
    fn positive_lags(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.lags.len()).filter(|&k| self.lags[k] > 0.0)
    }

    /// MSE averaged over lags in `(0, max lag]`.
    pub fn mse_lag_mean(&self) -> f64 {
        let ks: Vec<usize> = self.positive_lags().collect();
        ks.iter().map(|&k| self.mse[k]).sum::<f64>() / ks.len() as f64
    }

    pub fn mse_max(&self) -> f64 {
        self.positive_lags().map(|k| self.mse[k]).fold(f64::NAN, f64::max)
    }

    /// Largest per-lag mean variance over lags in `(0, max lag]`.
    pub fn var_max(&self) -> f64 {
        self.positive_lags().map(|k| self.mean_var[k]).fold(f64::NAN, f64::max)
    }

    /// Largest single-replicate variance over lags in `(0, max lag]`.
    pub fn var_max_any(&self) -> f64 {
        self.outcomes
            .iter()
            .filter_map(|o| o.var.as_ref())
            .flat_map(|v| self.positive_lags().map(move |k| v[k]))
            .fold(f64::NAN, f64::max)
    }
}

pub fn run_mc(config: &McConfig, progress: Option<&(dyn Fn(usize, usize) + Sync)>) -> Result<McReport> {
    if config.replicates == 0 {
        return Err(Error::domain("replicates must be >= 1"));
    }
    let truth = sccc_theoretical(&config.params, &config.lags)?.rho_c;
    let sim = FieldSimulator::new(&config.params, config.grid)?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = sim.sample(config.seed, r);
            let mut fit = config.fit.clone();
            fit.seed = config.seed ^ r;
            let out = match fit_ml(&data, config.family, &fit) {
                Ok(model) => {
                    let banded = sccc_estimate_with_bands(&model, &config.lags, 0.05);
                    let (rho_hat, var) = match banded {
                        Ok(c) => (Some(c.rho_c), c.var),
                        Err(_) => (sccc_estimate(&model, &config.lags).ok().map(|c| c.rho_c), None),
                    };
                    ReplicateOutcome {
                        error: rho_hat.is_none().then(|| "curve evaluation failed".to_string()),
                        rho_hat,
                        var,
                        theta_hat: Some(model.theta_hat()),
                        converged: model.converged,
                    }
                }
                Err(e) => ReplicateOutcome {
                    rho_hat: None,
                    var: None,
                    theta_hat: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            };
            if let Some(cb) = progress {
                cb(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, config.replicates);
            }
            out
        })
        .collect();

    let n = config.lags.len();
    let fitted: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.rho_hat.as_ref()).collect();
    if fitted.is_empty() {
        return Err(Error::InvalidData("every replicate failed to fit".into()));
    }
    let mse = (0..n)
        .map(|k| fitted.iter().map(|r| (r[k] - truth[k]).powi(2)).sum::<f64>() / fitted.len() as f64)
        .collect();
    let vars: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.var.as_ref()).collect();
    let mean_var = (0..n)
        .map(|k| {
            if vars.is_empty() {
                f64::NAN
            } else {
                vars.iter().map(|v| v[k]).sum::<f64>() / vars.len() as f64
            }
        })
        .collect();
    Ok(McReport {
        replicates: config.replicates,
        seed: config.seed,
        lags: config.lags.clone(),
        truth,
        n_failed: outcomes.iter().filter(|o| o.rho_hat.is_none()).count(),
        n_unconverged: outcomes.iter().filter(|o| o.rho_hat.is_some() && !o.converged).count(),
        outcomes,
        mse,
        mean_var,
    })
}

/// Plain-text report: a summary block followed by a per-lag table.
pub fn report_to_text(r: &McReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "replicates={}", r.replicates);
    let _ = writeln!(s, "seed={}", r.seed);
    let _ = writeln!(s, "failed={}", r.n_failed);
    let _ = writeln!(s, "unconverged={}", r.n_unconverged);
    let _ = writeln!(s, "mse_lag_mean={}", num(r.mse_lag_mean()));
    let _ = writeln!(s, "mse_max={}", num(r.mse_max()));
    let _ = writeln!(s, "var_max={}", num(r.var_max()));
    let _ = writeln!(s, "var_max_any={}", num(r.var_max_any()));
    let _ = writeln!(s);
    let _ = writeln!(s, "h,truth,mse,mean_var");
    for k in 0..r.lags.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            num(r.lags[k]),
            num(r.truth[k]),
            num(r.mse[k]),
            num(r.mean_var[k])
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_study() {
        let CovParams::Wendland(p) = Preset::Case2.params() else { panic!() };
        assert_eq!((p.rho12, p.b1, p.b2, p.b12, p.nu), (0.25, 1.2, 0.9, 1.0, 4.0));
        assert_eq!((p.sigma1_sq, p.sigma2_sq), (1.0, 1.0));
        assert_eq!("case3".parse::<Preset>().unwrap(), Preset::Case3);
        assert!("case4".parse::<Preset>().is_err());
        for p in Preset::ALL {
            crate::covariance::validate_params(&p.params(), &p.grid().sites()).unwrap();
        }
    }
}
