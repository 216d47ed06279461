use clap::Parser;

use dyson_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let report = execute(&cli);
    if report.code == 0 || report.code == dyson_cli::EXIT_BUDGET {
        println!("{}", report.body);
    } else {
        eprintln!("{}", report.body);
    }
    std::process::exit(report.code);
}
