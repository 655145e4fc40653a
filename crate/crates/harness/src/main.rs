use clap::Parser;
use ntkgauss::cli::{self, Cli};
use ntkgauss::error::ErrorRecord;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let record = ErrorRecord { error: "ArgumentError", message: e.to_string().trim().to_string(), line: None, field: None };
            eprintln!("{}", serde_json::to_string(&record).expect("record serializes"));
            std::process::exit(2);
        }
    };
    match cli::run(&cli) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            println!("outputs in {}", report.out.display());
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("record serializes"));
            std::process::exit(e.exit_code());
        }
    }
}
