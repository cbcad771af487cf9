use std::io::{self, BufWriter};
use std::process::ExitCode;

use clap::Parser;
use rulechat_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut out = BufWriter::new(io::stdout().lock());
    match run(cli, &mut stdin.lock(), &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(out);
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
