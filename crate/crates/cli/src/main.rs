mod args;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(sccc::Error),
    /// Run finished but too many units failed; outputs were still written.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(sccc::Error::Domain(_)) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) | CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<sccc::Error> for CliError {
    fn from(e: sccc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(sccc::Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

const SUBCOMMANDS: [&str; 6] = ["simulate", "fit", "lin", "local", "mc", "gcc"];

/// Splices the entries of a `--config` file in right after the subcommand
/// name, so anything given on the command line later wins.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(sub_at) = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(args);
    };
    let mut path = None;
    for (i, a) in args.iter().enumerate().skip(sub_at + 1) {
        let Some(s) = a.to_str() else { continue };
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let entries = sccc::format::parse_kv(&text)?;

    let root = Cli::command();
    let sub_name = args[sub_at].to_str().unwrap_or_default().to_string();
    let sub = root.find_subcommand(&sub_name).expect("known subcommand");
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let long = key.replace('_', "-");
        if long == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| CliError::Usage(format!("config key '{key}' is not an option of '{sub_name}'")))?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{long}={value}").into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{long}").into()),
                "false" => {}
                other => return Err(CliError::Usage(format!("config key '{key}' expects true or false, got '{other}'"))),
            }
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}

/// `key=value` lines for every option that ended up with a value.
fn resolved_config(top: &clap::ArgMatches) -> String {
    let mut s = String::new();
    if let Ok(Some(raw)) = top.try_get_raw("threads") {
        let v: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
        s.push_str(&format!("threads={}\n", v.join(",")));
    }
    if let Some((name, m)) = top.subcommand() {
        s.push_str(&format!("command={name}\n"));
        for id in m.ids() {
            let id = id.as_str();
            if id == "config" || id == "threads" {
                continue;
            }
            if let Ok(Some(raw)) = m.try_get_raw(id) {
                let v: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
                s.push_str(&format!("{}={}\n", id.replace('-', "_"), v.join(",")));
            }
        }
    }
    s
}

fn configure_threads(threads: &str) -> CliResult<()> {
    let n = match threads {
        "auto" => 0,
        t => match t.parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => return Err(CliError::Usage(format!("--threads expects a positive integer or 'auto', got '{t}'"))),
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn run() -> CliResult<()> {
    let args = expand_config(std::env::args_os().collect())?;
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(CliError::Usage("invalid arguments".into())),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    configure_threads(&cli.threads)?;
    let echo = resolved_config(&matches);
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &echo),
        Command::Fit(a) => commands::fit(a, &echo),
        Command::Lin(a) => commands::lin(a, &echo),
        Command::Local(a) => commands::local(a, &echo),
        Command::Mc(a) => commands::mc(a, &echo),
        Command::Gcc(a) => commands::gcc(a, &echo),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sccc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
