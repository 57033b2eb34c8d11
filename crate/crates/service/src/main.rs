use clap::Parser;

fn main() -> anyhow::Result<()> {
    callsim_service::cli::run(callsim_service::cli::Cli::parse())
}
