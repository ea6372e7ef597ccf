pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

use std::ffi::OsString;
use std::io::BufReader;
use std::path::Path;

use clap::Parser;
use serde_json::json;

use namesquat::corpus::Name;
use namesquat::ingestion::write_file;
use namesquat::typo_models::Alphabet;
use namesquat::typoguard::{Guard, GuardHistory, GuardPolicy, NameList};

use crate::config::{Cli, Command, RunConfig};
use crate::error::{data, exit, internal, CliError};

fn load_history(path: Option<&Path>) -> Result<GuardHistory, CliError> {
    match path {
        Some(p) if p.exists() => {
            let f = std::fs::File::open(p).map_err(internal)?;
            GuardHistory::load_jsonl(BufReader::new(f)).map_err(|e| data(format!("{}: {e}", p.display())))
        }
        _ => Ok(GuardHistory::new()),
    }
}

fn load_list(path: Option<&Path>) -> Result<NameList, CliError> {
    match path {
        None => Ok(NameList::default()),
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            NameList::load(BufReader::new(f)).map_err(|e| data(format!("{}: {e}", p.display())))
        }
    }
}

pub struct GuardArgs<'a> {
    pub recipient: &'a str,
    pub history: Option<&'a Path>,
    pub blocklist: Option<&'a Path>,
    pub popular: Option<&'a Path>,
    pub strict: bool,
    pub record: bool,
}

pub fn run_guard(cfg: &RunConfig, args: &GuardArgs) -> Result<serde_json::Value, CliError> {
    let recipient = Name::parse_display(args.recipient)
        .map_err(|e| CliError::Config(format!("--recipient {:?}: {e}", args.recipient)))?;
    let mut history = load_history(args.history)?;
    let blocklist = load_list(args.blocklist)?;
    let popular = load_list(args.popular)?;
    let policy = GuardPolicy {
        blocklist_overrides_history: args.strict,
    };
    let verdict = Guard::new(&history, &blocklist, &popular, policy).check(&recipient, &Alphabet::for_name(&recipient));
    if args.record {
        let path = args.history.expect("clap enforces --history with --record");
        history.record_send(&recipient, cfg.now());
        write_file(path, &history.to_jsonl())?;
    }
    let mut out = serde_json::to_value(&verdict).map_err(internal)?;
    out["recipient"] = json!(recipient.display());
    Ok(out)
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let cfg = RunConfig::from_flags(&cli.flags)?;
    if let Some(n) = cfg.workers {
        log::debug!("using {n} worker threads");
    }
    match &cli.command {
        Command::Simulate { scenario } => stages::run_simulate(&cfg, scenario.as_deref()),
        Command::Ingest => stages::run_ingest(&cfg),
        Command::Score => stages::run_score(&cfg),
        Command::Detect => stages::run_detect(&cfg),
        Command::AnalyzeTx => stages::run_analyze(&cfg),
        Command::Report => stages::run_report(&cfg),
        Command::GuardCheck {
            recipient,
            history,
            blocklist,
            popular,
            strict,
            record,
        } => run_guard(
            &cfg,
            &GuardArgs {
                recipient,
                history: history.as_deref(),
                blocklist: blocklist.as_deref(),
                popular: popular.as_deref(),
                strict: *strict,
                record: *record,
            },
        ),
    }
}

/// Parses arguments, runs one command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(summary) => {
            println!("{summary}");
            exit::OK
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.to_record());
            e.exit_code()
        }
    }
}
