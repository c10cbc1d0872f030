use clap::Parser;
use jcmsim_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => print!("{summary}"),
        Err(e) => {
            eprintln!("jcmsim: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
