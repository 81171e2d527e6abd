use clap::Parser;

use a3d::{A3dError, Configuration};
use a3d_cli::{error::EXIT_VALIDATION, Cli, CliError};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if let Err(e) = a3d_cli::run(&cli, &argv[1..]) {
        eprintln!("error: {e}");
        if let CliError::Core(A3dError::Uncalibrated(key)) = &e {
            if let Ok(c) = Configuration::from_key(key) {
                eprintln!(
                    "hint: a3d calibrate --checkpoint <ckpt> --config {},{},{} --out <ckpt>",
                    c.gamma_w, c.gamma_s, c.gamma_t
                );
            }
        }
        std::process::exit(e.exit_code());
    }
}
