use clap::Parser;

use multinst::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("multinst: {e}");
        std::process::exit(e.exit_code());
    }
}
