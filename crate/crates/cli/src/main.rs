use std::process::ExitCode;

use clap::Parser;
use darkstate_cli::{Cli, execute, table::emit};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (output, cfg) = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("darkstate: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let written = emit(cfg.output.as_deref(), &output.main).and_then(|_| {
        output
            .files
            .iter()
            .try_for_each(|(path, text)| std::fs::write(path, text))
    });
    if let Err(e) = written {
        eprintln!("darkstate: cannot write output: {e}");
        return ExitCode::from(2);
    }
    for note in &output.notes {
        eprintln!("darkstate: {note}");
    }
    ExitCode::from(output.status.exit_code())
}
