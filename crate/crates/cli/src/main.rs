use clap::Parser;
use flowxai_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("flowxai: error in {e}");
            std::process::exit(e.exit_code());
        }
    }
}
