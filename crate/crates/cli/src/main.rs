mod args;
mod commands;
mod error;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run() -> Result<(), CliError> {
    let argv = args::expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.render().to_string())),
        Err(e) => {
            // --help and --version.
            print!("{}", e.render());
            return Ok(());
        }
    };
    match &cli.command {
        Command::Profile(a) => commands::profile(a),
        Command::Tune(a) => commands::tune(a),
        Command::Build(a) => commands::build(a),
        Command::Query(a) => commands::query(a),
        Command::Bench(a) => commands::bench(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gen(a) => commands::gen(a),
    }
}

fn main() {
    if let Err(e) = run() {
        let msg = e.to_string();
        eprintln!("airidx: {}", msg.trim_end());
        std::process::exit(e.exit_code());
    }
}
