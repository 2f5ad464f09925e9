use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Parser;
use fakebook_core::measures::InstrumentSet;
use fakebook_core::platform::{read_export_tree, ExportBundle};
use fakebook_core::stats::{build_results_report, ReportFormat, StudyDataset, TestOptions};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "stats-report",
    about = "Builds the results report from experiment exports"
)]
pub struct ReportArgs {
    /// An export directory, or a directory of export directories.
    #[arg(long)]
    pub export: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: ReportFormat,

    /// Instrument definitions; the bundled study instruments when omitted.
    #[arg(long)]
    pub instruments: Option<PathBuf>,

    /// Apply the 0.5 continuity correction to normal approximations.
    #[arg(long)]
    pub continuity: bool,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Merges the participants of every bundle into one dataset.
pub fn dataset_from_bundles(bundles: &[ExportBundle]) -> anyhow::Result<StudyDataset> {
    let mut data = StudyDataset::default();
    for bundle in bundles {
        data.extend(
            bundle
                .to_dataset()
                .with_context(|| format!("experiment {}", bundle.experiment_id))?,
        );
    }
    Ok(data)
}

pub fn load_dataset(root: &Path) -> anyhow::Result<StudyDataset> {
    let bundles =
        read_export_tree(root).with_context(|| format!("reading exports under {}", root.display()))?;
    if bundles.is_empty() {
        bail!("no export found under {}", root.display());
    }
    dataset_from_bundles(&bundles)
}

/// Renders the report for `args` without writing it.
pub fn render(args: &ReportArgs) -> anyhow::Result<String> {
    let data = load_dataset(&args.export)?;
    let instruments = match &args.instruments {
        Some(path) => InstrumentSet::from_json(&std::fs::read_to_string(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => InstrumentSet::study_default(),
    };
    let options = TestOptions {
        continuity: args.continuity,
        ..TestOptions::default()
    };
    Ok(build_results_report(&data, &instruments, options).render(args.format))
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    let text = render(args)?;
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))
}
