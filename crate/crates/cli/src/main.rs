mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::*;

#[derive(Parser, Debug)]
#[command(
    name = "uvdiff",
    version,
    about = "Diffusion-guided texture and reflectance completion"
)]
struct Cli {
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic reflectance dataset.
    GenData(GenDataArgs),
    /// Train the denoiser on a dataset.
    Train(TrainArgs),
    /// Draw unconditional samples from a checkpoint.
    Sample(SampleArgs),
    /// Complete a partial UV texture and infer reflectance.
    Inpaint(InpaintArgs),
    /// Fit, unwrap and complete from a rendered image and landmarks.
    Reconstruct(ReconstructArgs),
    /// Run the sampler comparison benchmark.
    Bench(BenchArgs),
    /// Score predicted maps against ground truth.
    Eval(EvalArgs),
}

/// Finds `--config` and the subcommand name without a full parse.
fn scan(args: &[OsString]) -> (Option<PathBuf>, Option<String>) {
    let mut config = None;
    let mut sub = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let Some(s) = a.to_str() else { continue };
        if s == "--config" {
            config = it.next().map(PathBuf::from);
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if sub.is_none() && !s.starts_with('-') {
            sub = Some(s.to_string());
        }
    }
    (config, sub)
}

fn run() -> Result<()> {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    let mut cmd = Cli::command().args_override_self(true);
    let subs: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for name in subs {
        cmd = cmd.mut_subcommand(name, |c| c.args_override_self(true));
    }
    if let (Some(path), Some(sub)) = scan(&args) {
        let cfg = config::load(&path)?;
        args = config::merge(&cmd, args, &sub, &cfg)?;
    }
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let parts: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            anyhow::bail!("{}", parts.join(" ").trim_start_matches("error: "));
        }
    };
    let cli = Cli::from_arg_matches(&matches)?;
    match cli.command {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Train(a) => train(a),
        Cmd::Sample(a) => sample(a),
        Cmd::Inpaint(a) => inpaint(a),
        Cmd::Reconstruct(a) => reconstruct(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Eval(a) => eval(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run() {
        let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
        eprintln!("error: {}", chain.join(": ").replace('\n', " "));
        std::process::exit(1);
    }
}
