use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sccc::concordance::lag_grid;
use sccc::experiment::{report_to_text, run_mc, McConfig};
use sccc::format::{curve_to_csv, field_pair_from_csv, field_pair_to_csv, model_to_text, num};
use sccc::image::{
    encode_csv, load_image_auto, resize_bilinear, save_netpbm, to_gcc, to_grayscale, GrayWeights, ImageFormat,
};
use sccc::local::{attach_global_curves, fit_windows, local_fit_options, partition_image, select_family, WindowOutcome};
use sccc::{
    fit_ml, lin_ccc_level, sccc_estimate, sccc_estimate_with_bands, simulate as simulate_fields, CovParams, Error,
    Family, FitOptions, GridSpec, ImagePair, RasterImage, SimulationConfig,
};

use crate::args::{
    FamilyChoice, FitArgs, GccArgs, GccMode, GridArgs, ImageArgs, ImageOut, LagArgs, LinArgs, LocalArgs, McArgs,
    ModelArgs, SimulateArgs, Transform,
};
use crate::{CliError, CliResult};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn prepare_out(dir: &Path, echo: &str) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("resolved_config.txt"), echo)?;
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> CliResult<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("{what} expects name=value, got '{s}'")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| usage(format!("{what} '{s}': not a number")))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str, what: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || usage(format!("{what} expects min,max, got '{s}'"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse().map_err(|_| bad())?;
    let hi = parts[1].trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn grid_from(args: &GridArgs) -> CliResult<GridSpec> {
    let x = parse_range(&args.x_range, "--x-range")?;
    let y = parse_range(&args.y_range, "--y-range")?;
    Ok(GridSpec::new(args.rows, args.cols, x, y)?)
}

fn lags_from(args: &LagArgs) -> CliResult<Vec<f64>> {
    if args.lags_count == 0 || !(args.lags_max > 0.0 && args.lags_max.is_finite()) {
        return Err(usage("--lags-max must be positive and --lags-count at least 1"));
    }
    Ok(lag_grid(args.lags_max, args.lags_count))
}

/// Preset (if any) with `--param` overrides; without a preset every
/// parameter of `--family` must be given.
fn params_from(args: &ModelArgs) -> CliResult<CovParams> {
    let base = match (args.preset, args.family) {
        (Some(p), fam) => {
            let params = p.params();
            if fam.is_some_and(|f| f != params.family()) {
                return Err(usage(format!("preset {} is a Wendland model", p.name())));
            }
            Some(params)
        }
        (None, Some(_)) => None,
        (None, None) => return Err(usage("give --preset or --family with --param values")),
    };
    let family = base.as_ref().map_or_else(|| args.family.expect("checked"), |p| p.family());
    let names = family.param_names();
    let mut values: Vec<Option<f64>> = match &base {
        Some(p) => p.to_vec().into_iter().map(Some).collect(),
        None => vec![None; names.len()],
    };
    for item in &args.params {
        let (k, v) = parse_pair(item, "--param")?;
        let i = family
            .param_index(&k)
            .ok_or_else(|| usage(format!("unknown {family} parameter '{k}' (expected one of {})", names.join(", "))))?;
        values[i] = Some(v);
    }
    let missing: Vec<&str> = names.iter().zip(&values).filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
    if !missing.is_empty() {
        return Err(usage(format!("missing parameters: {}", missing.join(", "))));
    }
    let theta: Vec<f64> = values.into_iter().map(|v| v.expect("checked")).collect();
    let (m1, m2) = base.as_ref().map_or((0.0, 0.0), |p| p.means());
    let params = CovParams::from_vec(family, &theta, args.mu1.unwrap_or(m1), args.mu2.unwrap_or(m2))?;
    params.check()?;
    Ok(params)
}

fn params_block(params: &CovParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family={}", params.family());
    for (name, v) in params.family().param_names().iter().zip(params.to_vec()) {
        let _ = writeln!(s, "{name}={}", num(v));
    }
    let (m1, m2) = params.means();
    let _ = writeln!(s, "mu1={}\nmu2={}", num(m1), num(m2));
    s
}

pub fn simulate(args: SimulateArgs, echo: &str) -> CliResult<()> {
    if args.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let params = params_from(&args.model)?;
    let grid = grid_from(&args.grid)?;
    let pairs = simulate_fields(&SimulationConfig {
        params: params.clone(),
        grid,
        replicates: args.replicates,
        seed: args.seed,
    })?;
    prepare_out(&args.out, echo)?;
    let width = args.replicates.to_string().len().max(4);
    let mut files = Vec::with_capacity(pairs.len());
    for (r, pair) in pairs.iter().enumerate() {
        let name = format!("replicate_{:0width$}.csv", r + 1);
        fs::write(args.out.join(&name), field_pair_to_csv(pair))?;
        files.push(name);
    }
    let mut manifest = params_block(&params);
    let _ = writeln!(manifest, "rows={}\ncols={}", grid.rows, grid.cols);
    let _ = writeln!(manifest, "x_range={},{}", num(grid.x_range.0), num(grid.x_range.1));
    let _ = writeln!(manifest, "y_range={},{}", num(grid.y_range.0), num(grid.y_range.1));
    let _ = writeln!(manifest, "seed={}\nreplicates={}", args.seed, args.replicates);
    let _ = writeln!(manifest, "files={}", files.join(","));
    fs::write(args.out.join("manifest.txt"), manifest)?;
    println!("wrote {} replicates to {}", files.len(), args.out.display());
    Ok(())
}

pub fn fit(args: FitArgs, echo: &str) -> CliResult<()> {
    let text = fs::read_to_string(&args.input)?;
    let data = field_pair_from_csv(&text)?;
    let lags = lags_from(&args.lags)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let mut fixed = Vec::new();
    for item in &args.fix {
        fixed.push(parse_pair(item, "--fix")?);
    }
    let wendland_nu = match args.nu.as_str() {
        "free" => None,
        s => Some(s.parse().map_err(|_| usage(format!("--nu expects a number or 'free', got '{s}'")))?),
    };
    let opts = FitOptions {
        fixed,
        shared_range: args.shared_range,
        wendland_nu,
        max_iter: args.max_iter,
        tol: args.tol,
        profile_means: !args.zero_means,
        seed: args.seed,
        ..FitOptions::default()
    };
    let model = fit_ml(&data, args.family, &opts)?;
    let curve = match sccc_estimate_with_bands(&model, &lags, args.alpha) {
        Ok(c) => c,
        Err(Error::SingularInformation) => {
            eprintln!("warning: information matrix unavailable; curve written without bands");
            sccc_estimate(&model, &lags)?
        }
        Err(e) => return Err(e.into()),
    };
    prepare_out(&args.out, echo)?;
    let block = model_to_text(&model);
    fs::write(args.out.join("model.txt"), &block)?;
    fs::write(args.out.join("curve.csv"), curve_to_csv(&curve))?;
    print!("{block}");
    if !model.converged {
        eprintln!("warning: optimizer stopped before convergence");
    }
    Ok(())
}

fn weights(s: &str) -> CliResult<GrayWeights> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

/// Loads an image and reduces it to one channel as requested.
fn load_channel(path: &Path, args: &ImageArgs) -> CliResult<RasterImage> {
    let img = load_image_auto(path)?;
    match (img.channels, args.transform) {
        (1, Transform::None | Transform::Gray) => Ok(img),
        (1, Transform::Gcc) => Err(usage(format!("{}: g_cc needs an RGB image", path.display()))),
        (_, Transform::None) => Err(usage(format!(
            "{} has {} channels; choose --transform gray or gcc",
            path.display(),
            img.channels
        ))),
        (_, Transform::Gray) => Ok(to_grayscale(&img, weights(&args.weights)?)?),
        (_, Transform::Gcc) => {
            let (g, black) = to_gcc(&img)?;
            if black > 0 {
                eprintln!("{}: {black} black pixels set to g_cc = 0", path.display());
            }
            Ok(g)
        }
    }
}

fn load_pair(a: &Path, b: &Path, args: &ImageArgs) -> CliResult<ImagePair> {
    let ia = load_channel(a, args)?;
    let mut ib = load_channel(b, args)?;
    if (ia.rows, ia.cols) != (ib.rows, ib.cols) {
        if !args.resize {
            return Err(usage(format!(
                "image sizes differ ({}x{} vs {}x{}); pass --resize to resample the second",
                ia.rows, ia.cols, ib.rows, ib.cols
            )));
        }
        ib = resize_bilinear(&ib, ia.rows, ia.cols)?;
    }
    Ok(ImagePair::new(ia, ib, (a.display().to_string(), b.display().to_string()))?)
}

/// Every numeric field of a CSV file, row by row; a non-numeric first line
/// is taken as a header.
fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).filter(|f| !f.is_empty()).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.extend(v),
            Err(_) if ln == 0 => {}
            Err(_) => {
                return Err(Error::Parse {
                    location: format!("{} line {}", path.display(), ln + 1),
                    message: "non-numeric field".into(),
                }
                .into())
            }
        }
    }
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    ImageFormat::from_path(path) == Some(ImageFormat::Netpbm)
}

pub fn lin(args: LinArgs, echo: &str) -> CliResult<()> {
    let (x, y) = if is_image(&args.x) || is_image(&args.y) {
        let pair = load_pair(&args.x, &args.y, &args.image)?;
        (pair.a.pixels, pair.b.pixels)
    } else {
        (read_vector(&args.x)?, read_vector(&args.y)?)
    };
    if x.len() != y.len() {
        return Err(usage(format!("inputs have different lengths {} and {}", x.len(), y.len())));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage("--alpha must lie in (0, 1)"));
    }
    let r = lin_ccc_level(&x, &y, args.alpha)?;
    let mut s = String::new();
    let _ = writeln!(s, "rho_c={}", num(r.rho_c));
    let _ = writeln!(s, "ci_low={}", num(r.ci_low));
    let _ = writeln!(s, "ci_high={}", num(r.ci_high));
    let _ = writeln!(s, "alpha={}", num(r.alpha));
    let _ = writeln!(s, "z={}", num(r.z));
    let _ = writeln!(s, "var_z={}", num(r.var_z));
    let _ = writeln!(s, "rho={}", num(r.rho));
    let _ = writeln!(s, "v_sq={}", num(r.v_sq));
    let _ = writeln!(s, "n={}", r.n);
    prepare_out(&args.out, echo)?;
    fs::write(args.out.join("lin.txt"), &s)?;
    print!("{s}");
    Ok(())
}

pub fn local(args: LocalArgs, echo: &str) -> CliResult<()> {
    let pair = load_pair(&args.a, &args.b, &args.image)?;
    let partition = partition_image(pair.rows(), pair.cols(), args.window)?;
    if !(args.lags_max > 0.0) || args.lags_count == 0 {
        return Err(usage("--lags-max must be positive and --lags-count at least 1"));
    }
    let lags = lag_grid(args.lags_max, args.lags_count);
    let opts = FitOptions {
        max_iter: args.max_iter,
        seed: args.seed,
        ..local_fit_options()
    };
    prepare_out(&args.out, echo)?;

    let mut summary = String::new();
    let family = match args.family {
        FamilyChoice::Matern => Family::Matern,
        FamilyChoice::Wendland => Family::Wendland,
        FamilyChoice::Auto => {
            eprintln!("selecting family on {} probes of {}x{}", args.probes, args.probe_size, args.probe_size);
            let sel = select_family(&pair, args.probes, args.probe_size, args.seed, &opts)?;
            for (k, f) in Family::ALL.iter().enumerate() {
                let _ = writeln!(summary, "mean_aic_{f}={}", num(sel.mean_aic[k]));
                let _ = writeln!(summary, "mean_bic_{f}={}", num(sel.mean_bic[k]));
            }
            let _ = writeln!(summary, "selection_tie={}", sel.tie);
            sel.family
        }
    };

    let total = partition.len();
    let progress = |done: usize, total: usize| eprint!("\rwindows {done}/{total}");
    let mut windowed = fit_windows(&pair, &partition, family, &opts, &lags, Some(&progress))?;
    eprintln!();
    attach_global_curves(&mut windowed)?;

    let dir = args.out.join("windows");
    fs::create_dir_all(&dir)?;
    for (&(r, c), outcome) in partition.windows.iter().zip(&windowed.fits) {
        let mut block = format!("row={r}\ncol={c}\n");
        match outcome {
            WindowOutcome::Fitted { model, .. } => {
                block.push_str("status=fitted\n");
                block.push_str(&model_to_text(model));
            }
            WindowOutcome::Failed { reason } => {
                let _ = writeln!(block, "status=failed\nreason={reason}");
            }
        }
        fs::write(dir.join(format!("window_r{r:05}_c{c:05}.txt")), block)?;
    }
    let rho1 = windowed.rho1_curve.as_ref().expect("attached");
    let rho2 = windowed.rho2_curve.as_ref().expect("attached");
    fs::write(args.out.join("rho1.csv"), curve_to_csv(rho1))?;
    fs::write(args.out.join("rho2.csv"), curve_to_csv(rho2))?;

    let lin = lin_ccc_level(&pair.a.pixels, &pair.b.pixels, 0.05);
    let mut head = String::new();
    let _ = writeln!(head, "rows={}\ncols={}\nwindow={}", pair.rows(), pair.cols(), args.window);
    let _ = writeln!(head, "windows={total}\np={}\nn_failed={}", windowed.n_included(), windowed.n_failed);
    let _ = writeln!(head, "margin_rows={}\nmargin_cols={}", partition.margin_rows, partition.margin_cols);
    let _ = writeln!(head, "family={family}");
    let _ = writeln!(head, "rho1_0={}\nrho2_0={}", num(rho1.rho_c[0]), num(rho2.rho_c[0]));
    match &lin {
        Ok(l) => {
            let _ = writeln!(head, "lin_rho_c={}\nlin_ci_low={}\nlin_ci_high={}", num(l.rho_c), num(l.ci_low), num(l.ci_high));
        }
        Err(e) => {
            let _ = writeln!(head, "lin_rho_c=nan\nlin_error={e}");
        }
    }
    head.push_str(&summary);
    fs::write(args.out.join("summary.txt"), &head)?;
    print!("{head}");

    if 2 * windowed.n_failed > total {
        return Err(CliError::Numerical(format!("{} of {total} windows failed to fit", windowed.n_failed)));
    }
    Ok(())
}

pub fn mc(args: McArgs, echo: &str) -> CliResult<()> {
    if args.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let params = params_from(&args.model)?;
    let grid = grid_from(&args.grid)?;
    let lags = lags_from(&args.lags)?;
    let config = McConfig {
        family: params.family(),
        params,
        grid,
        replicates: args.replicates,
        seed: args.seed,
        lags,
        fit: FitOptions {
            shared_range: args.shared_range,
            max_iter: args.max_iter,
            ..FitOptions::default()
        },
    };
    prepare_out(&args.out, echo)?;
    let quiet = args.quiet;
    let progress = move |done: usize, total: usize| {
        if !quiet {
            eprint!("\rreplicates {done}/{total}");
        }
    };
    let report = run_mc(&config, Some(&progress))?;
    if !quiet {
        eprintln!();
    }
    let mut text = params_block(&config.params);
    text.push_str(&report_to_text(&report));
    fs::write(args.out.join("report.txt"), &text)?;
    println!(
        "mse_lag_mean={} mse_max={} var_max={} failed={}",
        num(report.mse_lag_mean()),
        num(report.mse_max()),
        num(report.var_max()),
        report.n_failed
    );
    Ok(())
}

pub fn gcc(args: GccArgs, echo: &str) -> CliResult<()> {
    let img = load_image_auto(&args.input)?;
    let out = match args.mode {
        GccMode::Gcc => {
            let (g, black) = to_gcc(&img)?;
            eprintln!("{black} black pixels set to 0");
            g
        }
        GccMode::Gray => to_grayscale(&img, weights(&args.weights)?)?,
    };
    prepare_out(&args.out, echo)?;
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let suffix = match args.mode {
        GccMode::Gcc => "gcc",
        GccMode::Gray => "gray",
    };
    let path = match args.format {
        ImageOut::Pgm => {
            let p = args.out.join(format!("{stem}_{suffix}.pgm"));
            save_netpbm(&out, &p, 65535, false)?;
            p
        }
        ImageOut::Csv => {
            let p = args.out.join(format!("{stem}_{suffix}.csv"));
            fs::write(&p, encode_csv(&out)?)?;
            p
        }
    };
    println!("{}", path.display());
    Ok(())
}
