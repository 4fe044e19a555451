//! `risnet`: generate channel ensembles, train RISNet models, evaluate them
//! against baselines and emit plot data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use risnet_core::{Error, Result};

use config::{Preset, RunConfig, KEYS};

fn cli() -> Command {
    let mut cmd = Command::new("risnet")
        .about("RIS phase optimization with scalable RISNet models")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .global(true)
                .help("Config file of `key = value` lines"),
        )
        .arg(
            Arg::new("preset")
                .long("preset")
                .visible_alias("scale")
                .value_name("NAME")
                .value_parser(["paper", "desk"])
                .global(true)
                .help("Base settings: paper (full scale) or desk (small scale) [default: paper]"),
        )
        .arg(
            Arg::new("variant")
                .long("variant")
                .value_parser(["pv", "pi"])
                .global(true)
                .help("Network variant"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("U64")
                .value_parser(clap::value_parser!(u64))
                .global(true)
                .help("Seed of the subcommand: channels for gen, init and batches for train, random phases for eval"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .global(true)
                .help("Worker thread cap"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .global(true)
                .help("Override one config key"),
        )
        .subcommand(Command::new("gen").about("Write train and test channel datasets"))
        .subcommand(
            Command::new("train")
                .about("Train a network and write its checkpoint and log")
                .arg(
                    Arg::new("resume")
                        .long("resume")
                        .action(ArgAction::SetTrue)
                        .help("Continue from the checkpoint, optimizer state and log at the configured paths"),
                ),
        )
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint and the baselines on the test set")
                .arg(
                    Arg::new("with-bcd")
                        .long("with-bcd")
                        .action(ArgAction::SetTrue)
                        .help("Also run the block-coordinate-descent baseline (slow)"),
                )
                .arg(
                    Arg::new("rho")
                        .long("rho")
                        .value_name("FLOAT")
                        .action(ArgAction::Append)
                        .value_parser(clap::value_parser!(f64))
                        .help("Evaluation SNR; repeat for several"),
                ),
        )
        .subcommand(
            Command::new("report")
                .about("Aggregate evaluation CSVs into per-method (rho, mean_wsr) series")
                .arg(
                    Arg::new("inputs")
                        .value_name("CSV")
                        .num_args(0..)
                        .value_parser(clap::value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("PATH")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("Output file [default: paths.series]"),
                ),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .global(true)
                .hide_short_help(true)
                .help(format!("Set config key {key}")),
        );
    }
    cmd
}

fn build_config(m: &ArgMatches, sub: &str, sm: &ArgMatches) -> Result<RunConfig> {
    let preset: Preset = m.get_one::<String>("preset").map_or("paper", String::as_str).parse()?;
    let mut cfg = RunConfig::preset(preset);
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_file(path.as_ref())?;
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(v) = m.get_one::<String>("variant") {
        cfg.set("risnet.variant", v)?;
    }
    if let Some(&seed) = m.get_one::<u64>("seed") {
        match sub {
            "gen" => cfg.scenario.seed = seed,
            "train" => {
                cfg.train.seed = seed;
                cfg.init_seed = seed;
            }
            _ => cfg.eval_seed = seed,
        }
    }
    if sub == "eval" {
        if let Some(rhos) = sm.get_many::<f64>("rho") {
            cfg.eval_rho = rhos.copied().collect();
        }
    }
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<()> {
    let (sub, sm) = m.subcommand().expect("subcommand is required");
    // global args are propagated to the subcommand matches
    let cfg = build_config(sm, sub, sm)?;
    if let Some(&n) = sm.get_one::<usize>("threads") {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match sub {
        "gen" => commands::cmd_gen(&cfg),
        "train" => commands::cmd_train(&cfg, sm.get_flag("resume")),
        "eval" => commands::cmd_eval(&cfg, sm.get_flag("with-bcd")),
        "report" => {
            let inputs: Vec<PathBuf> = sm
                .get_many::<PathBuf>("inputs")
                .into_iter()
                .flatten()
                .cloned()
                .collect();
            let out = sm
                .get_one::<PathBuf>("out")
                .cloned()
                .unwrap_or_else(|| cfg.paths.series.clone());
            commands::cmd_report(&inputs, &out)
        }
        other => unreachable!("unknown subcommand {other}"),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::Contract(_) | Error::EmptyInput(_) => 2,
        Error::Io(_) | Error::Format { .. } | Error::Truncated { .. } | Error::Parse { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
