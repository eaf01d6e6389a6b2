use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use rabsa_cli::config::{all_keys, config_path, read_config_file, SWITCH_KEYS};
use rabsa_cli::{commands, CliError, RunConfig, CONFIG_ENV};
use rabsa_core::kv::KvMap;

const SUBCOMMANDS: &[(&str, &str)] = &[
    (
        "augment",
        "Generate the three synthetic corpora from a parsed corpus",
    ),
    (
        "train",
        "Train a classifier under one of the regimes e, a, e+c, a+c",
    ),
    (
        "eval",
        "Accuracy, per-tag robustness and faithfulness of a trained model",
    ),
    (
        "gradcheck",
        "Finite-difference checks of every op and parameter group",
    ),
    (
        "export-sentences",
        "List rewritten sentences that need a real parse",
    ),
    (
        "import-parses",
        "Replace provisional parses with an external parser's output",
    ),
    (
        "dump-reprs",
        "Write per-instance representation vectors as TSV",
    ),
];

fn cli() -> Command {
    let mut root = Command::new("rabsa")
        .about("Robust aspect sentiment workbench")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for &(name, about) in SUBCOMMANDS {
        let mut sub = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help(format!(
                    "key = value settings file (default: ${CONFIG_ENV})"
                )),
        );
        for key in all_keys() {
            let arg = Arg::new(key).long(key).value_name("VALUE");
            sub = sub.arg(if SWITCH_KEYS.contains(&key) {
                arg.num_args(0..=1)
                    .default_missing_value("true")
                    .require_equals(true)
            } else {
                arg.action(ArgAction::Set)
            });
        }
        root = root.subcommand(sub);
    }
    root
}

fn flags(m: &ArgMatches) -> KvMap {
    let mut kv = KvMap::default();
    for key in all_keys() {
        if let Some(v) = m.get_one::<String>(key) {
            kv.insert(key, v);
        }
    }
    kv
}

fn run(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let env = std::env::var(CONFIG_ENV).ok();
    let explicit = m.get_one::<String>("config").map(PathBuf::from);
    let file = match config_path(explicit.as_deref(), env.as_deref()) {
        Some(p) => Some(read_config_file(&p)?),
        None => None,
    };
    let cfg = RunConfig::resolve(file.as_ref(), &flags(m))?;
    match name {
        "augment" => {
            let s = commands::cmd_augment(&cfg)?;
            println!(
                "sentiment-modified {}  background {}  aspect-addition {}  -> {}",
                s.sentiment_mod.emitted,
                s.background.emitted,
                s.aspect_addition.emitted,
                cfg.out.display()
            );
        }
        "train" => {
            let s = commands::cmd_train(&cfg)?;
            println!(
                "{} epochs, {} iterations, best dev accuracy {:.4} at epoch {}  -> {}",
                s.epochs,
                s.iterations,
                s.best_dev_accuracy,
                s.best_epoch,
                cfg.out.join(commands::MODEL_DIR).display()
            );
        }
        "eval" => print!("{}", commands::cmd_eval(&cfg)?.to_text()),
        "gradcheck" => {
            let rows = commands::cmd_gradcheck(&cfg)?;
            for r in &rows {
                println!(
                    "{:<6} {:<18} {:>7}  {:.3e}  ok",
                    r.scope, r.name, r.checked, r.max_rel_error
                );
            }
        }
        "export-sentences" => println!("{} sentences", commands::cmd_export_sentences(&cfg)?),
        "import-parses" => println!("{} parses imported", commands::cmd_import_parses(&cfg)?),
        "dump-reprs" => println!("{}", commands::cmd_dump_reprs(&cfg)?.display()),
        _ => unreachable!("clap only yields known subcommands"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
