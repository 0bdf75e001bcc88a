//! Box-constrained Nelder-Mead minimizer.
//!
//! Trial points are projected onto the box; infeasible objective values are
//! reported as `+inf` by the caller and simply rank worst. Coefficients follow
//! the dimension-adaptive scheme of Gao & Han (2012).

/// Largest per-coordinate vertex distance at which the simplex counts as a point.
const COLLAPSE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of objective values over the simplex falls below this.
    pub ftol: f64,
    /// ... and every vertex lies within this distance of the best one (per coordinate).
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            ftol: 1e-7,
            xtol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(steps.len() == n && lower.len() == n && upper.len() == n);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    if n == 0 {
        let fx = eval(x0, &mut evals);
        return NelderMeadResult {
            x: vec![],
            fx,
            iterations: 0,
            evaluations: evals,
            converged: true,
            history: vec![fx],
        };
    }

    let nf = n as f64;
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / nf;
    let beta = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut start = x0.to_vec();
    project(&mut start, lower, upper);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        let mut s = steps[i];
        if v[i] + s > upper[i] {
            s = -s;
        }
        v[i] += s;
        project(&mut v, lower, upper);
        if v[i] == start[i] {
            // box is degenerate along this axis in both directions
            v[i] = (start[i] + 1e-8).min(upper[i]);
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        history.push(values[0]);

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread.is_finite() && f_spread <= opts.ftol && x_spread <= opts.xtol {
            converged = true;
            break;
        }
        // collapsed against an infeasible region: the remaining vertices stay
        // at +inf no matter how far the simplex shrinks
        if x_spread <= COLLAPSE && values[0].is_finite() {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p, lower, upper);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * beta);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-beta);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            let mut p: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + delta * (x - b))
                .collect();
            project(&mut p, lower, upper);
            values[i] = eval(&p, &mut evals);
            simplex[i] = p;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is nonempty");
    NelderMeadResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        evaluations: evals,
        converged,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iter: 5000,
            ftol: 1e-14,
            xtol: 1e-8,
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], &[-5.0; 2], &[5.0; 2], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2);
        let r = nelder_mead(
            f,
            &[0.0, 0.0],
            &[0.3, 0.3],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-5);
        assert!((r.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn best_value_never_increases() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum::<f64>();
        let r = nelder_mead(
            f,
            &[1.0, -2.0, 0.5, 3.0],
            &[0.5; 4],
            &[-10.0; 4],
            &[10.0; 4],
            &NelderMeadOptions::default(),
        );
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.fx < 1e-8);
    }

    #[test]
    fn optimum_on_infeasible_boundary_terminates() {
        let f = |x: &[f64]| if x[0] + x[1] > 1.0 { f64::INFINITY } else { -(x[0] + 2.0 * x[1]) };
        let opts = NelderMeadOptions { max_iter: 100_000, ..Default::default() };
        let r = nelder_mead(f, &[0.0, 0.0], &[0.3, 0.3], &[-5.0; 2], &[0.9, 5.0], &opts);
        assert!(r.converged && r.iterations < 5000);
        assert!(r.x[0] + r.x[1] <= 1.0 && r.fx < -1.0);
    }

    #[test]
    fn infeasible_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.2).powi(2) };
        let r = nelder_mead(f, &[2.0], &[0.5], &[-5.0], &[5.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.5).abs() < 1e-4);
    }
}
