//! Command-line driver: `pcurl <command> [--config <path>] [--key value]...`.
//!
//! Every run writes `config.txt` (the resolved configuration, reusable as a
//! config file) and `summary.txt` into the output directory, next to the
//! command's own tables and fields.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use commands::{commands, Outcome};
use config::RunConfig;
use error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: String,
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
}

pub fn usage() -> String {
    let mut s = String::from("usage: pcurl <command> [--config <path>] [--key value]...\n\ncommands:\n");
    let reg = commands();
    for name in reg.names() {
        let cmd = reg.get(&name).expect("registered");
        let _ = writeln!(s, "  {name:<10} {}", cmd.about());
    }
    let _ = writeln!(s, "\nconfig keys: {}", config::KEYS.join(", "));
    let _ = writeln!(s, "{} prefixes a relative output_dir.", config::OUTPUT_ROOT_ENV);
    s
}

/// Parses arguments after the program name. `--key=value` is accepted and
/// dashes in keys read as underscores.
pub fn parse_args(args: &[String]) -> Result<Invocation, CliError> {
    let mut it = args.iter();
    let command = it
        .next()
        .filter(|c| !c.starts_with("--"))
        .ok_or_else(|| CliError::Usage("missing command".into()))?
        .clone();
    let mut inv = Invocation {
        command,
        config: None,
        overrides: Vec::new(),
    };
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument `{arg}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let key = key.replace('-', "_");
        if key == "config" {
            inv.config = Some(PathBuf::from(value));
        } else {
            inv.overrides.push((key, value));
        }
    }
    Ok(inv)
}

fn summary(command: &str, cfg: &RunConfig, outcome: &Outcome, seconds: f64) -> String {
    let status = match (outcome.success, outcome.partial) {
        (true, _) => "OK",
        (false, true) => "FAILED (outputs are partial)",
        (false, false) => "FAILED",
    };
    let mut s = format!("pcurl {command}\nstatus: {status}\nwall time: {seconds:.3} s\nthreads: {}\n", cfg.threads);
    for l in &outcome.lines {
        let _ = writeln!(s, "{l}");
    }
    s
}

/// Runs one invocation; returns the process exit code.
pub fn execute(inv: &Invocation) -> Result<i32, CliError> {
    let cmd = commands()
        .get(&inv.command)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = match &inv.config {
        Some(path) => RunConfig::from_file(path, &inv.overrides)?,
        None => RunConfig::from_pairs(&inv.overrides)?,
    };
    let out = cfg.resolved_output_dir();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.txt"), cfg.echo(&inv.command))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", cfg.threads)))?;
    let start = Instant::now();
    let result = pool.install(|| cmd.run(&cfg, &out));
    let seconds = start.elapsed().as_secs_f64();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => Outcome {
            success: false,
            partial: true,
            lines: vec![format!("error: {e}")],
        },
    };
    fs::write(out.join("summary.txt"), summary(&inv.command, &cfg, &outcome, seconds))?;
    for l in &outcome.lines {
        println!("{l}");
    }
    println!("outputs in {}", out.display());
    Ok(if outcome.success { 0 } else { 1 })
}

/// Entry point shared by the binary and tests.
pub fn run(args: &[String]) -> i32 {
    if args.first().is_some_and(|a| a == "--help" || a == "-h" || a == "help") {
        print!("{}", usage());
        return 0;
    }
    match parse_args(args).and_then(|inv| execute(&inv)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pcurl: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprint!("{}", usage());
            }
            e.exit_code()
        }
    }
}
