//! `fdmaha`: simulation studies, classification and reporting for
//! functional Mahalanobis classifiers.

mod config;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

use config::{Cli, Command};
use run::Failure;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("FDMAHA_LOG").try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Failure::Config as u8),
            };
        }
    };
    let settings = match config::resolve(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Failure::Config as u8);
        }
    };
    init_logging(settings.verbose);
    if let Some(j) = settings.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let (artifacts, stdout) = match run::dispatch(&settings) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.kind as u8);
        }
    };
    if settings.command != Command::Report || settings.out_explicit {
        if let Err(e) = artifacts.write(&settings.out) {
            eprintln!("error: writing outputs: {e}");
            return ExitCode::from(Failure::Data as u8);
        }
    }
    print!("{stdout}");
    ExitCode::SUCCESS
}
