use clap::Parser;
use mvtflow_cli::commands::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MVTFLOW_LOG", "info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
