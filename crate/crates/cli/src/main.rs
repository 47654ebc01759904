use std::path::PathBuf;
use std::process::ExitCode;

use capillarity_cli::{parse_field, run_config, CliError, CliResult, Command, RunConfig};
use clap::Parser;

/// Volume-constrained critical points of capillarity functionals.
///
/// Settings come from an optional JSON config; flags override its keys.
#[derive(Debug, Parser)]
#[command(name = "capillarity", version, allow_negative_numbers = true)]
struct Args {
    /// Command to run; overrides `command` in the config.
    command: Option<Command>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `constant:k`, `radial:a[:beta]`, `bump:amp:radius[:cx:cy:cz]` or a JSON spec.
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    /// Parameter ball radius, in units of s_t.
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long)]
    ball_res: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative stationarity tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative tolerance of the verification table.
    #[arg(long)]
    verify_tol: Option<f64>,
    /// Verification rows to run (comma separated; empty for none).
    #[arg(long)]
    select: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn build_config(args: &Args) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            if let (Some(cmd), Some(obj)) = (args.command, value.as_object_mut()) {
                obj.insert("command".into(), serde_json::to_value(cmd).expect("command serializes"));
            }
            RunConfig::from_json(&value.to_string())?
        }
        None => RunConfig::new(
            args.command.ok_or_else(|| CliError::Validation("no command given and no config file".into()))?,
        ),
    };
    if let Some(f) = &args.field {
        cfg.field = parse_field(f)?;
    }
    macro_rules! set {
        ($($arg:ident => $($key:ident).+),*) => {
            $(if let Some(v) = args.$arg.clone() { cfg.$($key).+ = v; })*
        };
    }
    set!(t => t, level => level, radius => radius, ball_res => ball_res, sweeps => sweeps, seed => seed,
         max_iters => tolerances.max_iters, tol => tolerances.residual_tol, output_dir => output_dir);
    if let Some(v) = args.verify_tol {
        cfg.tolerances.verify_rel = Some(v);
    }
    if let Some(s) = &args.select {
        cfg.verify_select = Some(s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect());
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = build_config(&args).and_then(|cfg| {
        if args.print_config {
            println!("{}", cfg.to_json());
            return Ok(());
        }
        let (output, manifest) = run_config(&cfg)?;
        println!("{}", output.summary.trim_end());
        for f in &manifest.files {
            println!("wrote {}", cfg.output_dir.join(&f.file).display());
        }
        match output.failure {
            Some(msg) => Err(CliError::Verification(msg)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
