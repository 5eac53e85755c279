use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = cbc_cli::Cli::parse();
    let cfg = cli.resolve()?;
    cbc_cli::run_jobs(&cli.command, &cfg, cli.jobs)
}
