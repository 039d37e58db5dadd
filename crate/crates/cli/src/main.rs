use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use teleportsim::{parse_config, run, Cli, RunConfig};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn write_result(cfg: &RunConfig, report: &teleportsim::Report) -> io::Result<()> {
    match &cfg.output_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            report.table.write(cfg.output_format, &mut w)?;
            w.flush()
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            report.table.write(cfg.output_format, &mut w)?;
            w.flush()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match parse_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {} run failed: {e}", cfg.mode.name());
            return ExitCode::from(EXIT_FAILED);
        }
    };
    if let Err(e) = write_result(&cfg, &report) {
        let target = cfg.output_path.as_ref().map_or("standard output".to_string(), |p| p.display().to_string());
        eprintln!("error: cannot write {target}: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(text) = &report.display {
        // keep stdout clean when it carries the result file
        if cfg.output_path.is_some() {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
    }
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}
