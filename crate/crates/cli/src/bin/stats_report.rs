use clap::Parser;
use fakebook_cli::report::{run, ReportArgs};

fn main() -> anyhow::Result<()> {
    run(&ReportArgs::parse())
}
