//! Text formats: numbers, field-pair CSV, curve CSV, fitted-model blocks and
//! key=value configuration.

use std::fmt::Write as _;

use faer::Mat;

use crate::concordance::ScccCurve;
use crate::covariance::{CovParams, Family, GridSpec};
use crate::error::{Error, Result};
use crate::likelihood::FittedModel;
use crate::simulate::FieldPair;

/// Formats with 10 significant digits, then prints the shortest decimal
/// that reads back to that rounded value.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("valid float");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

fn parse_num(s: &str, location: impl Into<String>) -> Result<f64> {
    let s = s.trim();
    match s {
        "nan" | "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| Error::parse(location, format!("not a number: '{s}'"))),
    }
}

pub const FIELD_HEADER: &str = "row,col,x,y,z1,z2";

pub fn field_pair_to_csv(pair: &FieldPair) -> String {
    let mut s = String::with_capacity(48 * pair.n_sites());
    s.push_str(FIELD_HEADER);
    s.push('\n');
    let g = &pair.grid;
    for r in 0..g.rows {
        for c in 0..g.cols {
            let k = r * g.cols + c;
            let _ = writeln!(
                s,
                "{r},{c},{},{},{},{}",
                num(g.x(c)),
                num(g.y(r)),
                num(pair.z1[k]),
                num(pair.z2[k])
            );
        }
    }
    s
}

/// Reads the layout written by [`field_pair_to_csv`]. Rows must cover the
/// full lattice; order is free.
pub fn field_pair_from_csv(text: &str) -> Result<FieldPair> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse("line 1", "empty file"))?;
    let cols_in: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols_in != FIELD_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::parse("line 1", format!("expected header '{FIELD_HEADER}'")));
    }
    let mut recs = Vec::new();
    for (ln, line) in lines {
        let loc = |f: usize| format!("line {}, field {}", ln + 1, f + 1);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(format!("line {}", ln + 1), "expected 6 fields"));
        }
        let idx = |f: usize| -> Result<usize> {
            fields[f]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(f), format!("bad index '{}'", fields[f].trim())))
        };
        let (r, c) = (idx(0)?, idx(1)?);
        let vals: Vec<f64> = (2..6).map(|f| parse_num(fields[f], loc(f))).collect::<Result<_>>()?;
        recs.push((r, c, vals[0], vals[1], vals[2], vals[3]));
    }
    if recs.is_empty() {
        return Err(Error::InvalidData("no field rows".into()));
    }
    let rows = recs.iter().map(|r| r.0).max().unwrap() + 1;
    let cols = recs.iter().map(|r| r.1).max().unwrap() + 1;
    if recs.len() != rows * cols {
        return Err(Error::InvalidData(format!(
            "{} records do not fill a {rows}x{cols} lattice",
            recs.len()
        )));
    }
    let mut z1 = vec![f64::NAN; rows * cols];
    let mut z2 = vec![f64::NAN; rows * cols];
    let mut xs = vec![f64::NAN; cols];
    let mut ys = vec![f64::NAN; rows];
    let mut seen = vec![false; rows * cols];
    for &(r, c, x, y, a, b) in &recs {
        let k = r * cols + c;
        if seen[k] {
            return Err(Error::InvalidData(format!("duplicate site ({r}, {c})")));
        }
        seen[k] = true;
        z1[k] = a;
        z2[k] = b;
        xs[c] = x;
        ys[r] = y;
    }
    let grid = GridSpec::new(rows, cols, (xs[0], xs[cols - 1]), (ys[0], ys[rows - 1]))?;
    let tol = 1e-8 * grid.diameter().max(1.0);
    for &(r, c, x, y, ..) in &recs {
        if (grid.x(c) - x).abs() > tol || (grid.y(r) - y).abs() > tol {
            return Err(Error::InvalidData(format!("site ({r}, {c}) is off the regular lattice")));
        }
    }
    FieldPair::new(grid, z1, z2)
}

pub const CURVE_HEADER: &str = "h,rho_c,var,ci_low,ci_high,flag";

pub fn curve_to_csv(curve: &ScccCurve) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    let opt = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map_or(String::new(), |v| num(v[k]));
    for k in 0..curve.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(curve.lags[k]),
            num(curve.rho_c[k]),
            opt(&curve.var, k),
            opt(&curve.ci_low, k),
            opt(&curve.ci_high, k),
            u8::from(curve.flags[k])
        );
    }
    s
}

/// Reads a curve CSV. `eta` is not stored and comes back as NaN.
pub fn curve_from_csv(text: &str) -> Result<ScccCurve> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        _ => return Err(Error::parse("line 1", format!("expected header '{CURVE_HEADER}'"))),
    }
    let mut cols: [Vec<Option<f64>>; 5] = Default::default();
    let mut flags = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(format!("line {}", ln + 1), "expected 6 fields"));
        }
        for (k, col) in cols.iter_mut().enumerate() {
            let f = fields[k].trim();
            col.push(if f.is_empty() {
                None
            } else {
                Some(parse_num(f, format!("line {}, field {}", ln + 1, k + 1))?)
            });
        }
        flags.push(match fields[5].trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(format!("line {}, field 6", ln + 1), format!("bad flag '{other}'"))),
        });
    }
    let required = |col: &[Option<f64>], name: &str| -> Result<Vec<f64>> {
        col.iter()
            .map(|v| v.ok_or_else(|| Error::parse(name.to_string(), "missing value")))
            .collect()
    };
    let optional = |col: &[Option<f64>]| -> Option<Vec<f64>> { col.iter().copied().collect() };
    Ok(ScccCurve {
        lags: required(&cols[0], "h")?,
        rho_c: required(&cols[1], "rho_c")?,
        eta: f64::NAN,
        var: optional(&cols[2]),
        ci_low: optional(&cols[3]),
        ci_high: optional(&cols[4]),
        flags,
    })
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("line {}", ln + 1), format!("expected key=value, got '{line}'")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(format!("line {}", ln + 1), "empty key"));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn join_nums(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(num).collect::<Vec<_>>().join(",")
}

/// Flat `key=value` block describing a fitted model.
pub fn model_to_text(m: &FittedModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family={}", m.family);
    let _ = writeln!(s, "shared_range={}", m.shared_range);
    let names = m.family.param_names();
    for (name, v) in names.iter().zip(m.theta_hat()) {
        let _ = writeln!(s, "{name}={}", num(v));
    }
    let (m1, m2) = m.mu_hat();
    let _ = writeln!(s, "mu1={}", num(m1));
    let _ = writeln!(s, "mu2={}", num(m2));
    let _ = writeln!(s, "means_estimated={}", m.means_estimated);
    let free: Vec<&str> = m.free.iter().map(|&i| names[i]).collect();
    let _ = writeln!(s, "free={}", free.join(","));
    let _ = writeln!(s, "loglik={}", num(m.loglik));
    let _ = writeln!(s, "aic={}", num(m.aic));
    let _ = writeln!(s, "bic={}", num(m.bic));
    let _ = writeln!(s, "converged={}", m.converged);
    let _ = writeln!(s, "n_sites={}", m.n_sites);
    let _ = writeln!(s, "iterations={}", m.iterations);
    let _ = writeln!(s, "evaluations={}", m.evaluations);
    let _ = writeln!(s, "info_names={}", m.info_names().join(","));
    match &m.info_matrix {
        Some(info) => {
            let q = info.nrows();
            let _ = writeln!(s, "info={}", join_nums((0..q * q).map(|k| info[(k / q, k % q)])));
        }
        None => {
            let _ = writeln!(s, "info=none");
        }
    }
    s
}

pub fn model_from_text(text: &str) -> Result<FittedModel> {
    let kv = parse_kv(text)?;
    let get = |key: &str| -> Result<&str> {
        kv.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(key.to_string(), "missing key"))
    };
    let bool_of = |key: &str| -> Result<bool> {
        get(key)?
            .parse()
            .map_err(|_| Error::parse(key.to_string(), "expected true or false"))
    };
    let usize_of = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::parse(key.to_string(), "expected an integer"))
    };
    let family: Family = get("family")?.parse()?;
    let names = family.param_names();
    let theta: Vec<f64> = names
        .iter()
        .map(|n| parse_num(get(n)?, *n))
        .collect::<Result<_>>()?;
    let params = CovParams::from_vec(family, &theta, parse_num(get("mu1")?, "mu1")?, parse_num(get("mu2")?, "mu2")?)?;
    let free_str = get("free")?;
    let free: Vec<usize> = if free_str.is_empty() {
        Vec::new()
    } else {
        free_str
            .split(',')
            .map(|n| {
                family
                    .param_index(n.trim())
                    .ok_or_else(|| Error::parse("free", format!("unknown parameter '{n}'")))
            })
            .collect::<Result<_>>()?
    };
    let means_estimated = bool_of("means_estimated")?;
    let q = free.len() + if means_estimated { 2 } else { 0 };
    let info_matrix = match get("info")? {
        "none" => None,
        list => {
            let vals: Vec<f64> = list
                .split(',')
                .map(|v| parse_num(v, "info"))
                .collect::<Result<_>>()?;
            if vals.len() != q * q {
                return Err(Error::parse("info", format!("expected {} entries, found {}", q * q, vals.len())));
            }
            Some(Mat::from_fn(q, q, |i, j| vals[i * q + j]))
        }
    };
    Ok(FittedModel {
        family,
        params,
        shared_range: bool_of("shared_range")?,
        free,
        means_estimated,
        loglik: parse_num(get("loglik")?, "loglik")?,
        aic: parse_num(get("aic")?, "aic")?,
        bic: parse_num(get("bic")?, "bic")?,
        converged: bool_of("converged")?,
        n_sites: usize_of("n_sites")?,
        iterations: usize_of("iterations")?,
        evaluations: usize_of("evaluations")?,
        info_matrix,
    })
}
