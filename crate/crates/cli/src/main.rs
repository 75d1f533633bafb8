mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use bcpflood_core::engine::ChannelSelection;
use bcpflood_core::metrics::OtherClass;
use bcpflood_core::otsu::OtsuChannel;
use bcpflood_core::ErrorCategory;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Flood mapping from SAR backscatter time series.
#[derive(Debug, Parser)]
#[command(name = "bcpflood", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic flood scene: stack, manifest and reference map.
    Synth(SynthArgs),
    /// Detect flooding at the event date and evaluate it.
    Run(JobArgs),
    /// Evaluate all window/threshold combinations.
    Sweep(JobArgs),
    /// Run the Otsu thresholding baseline on the event-date image.
    Otsu(OtsuArgs),
    /// Score a flood mask against a reference map.
    Eval(EvalArgs),
    /// Paired signed-rank test between two per-chip F1 tables.
    Compare(CompareArgs),
    /// Summarize the metrics tables in an output directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    NegativeControl,
    PermanentWater,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene description (JSON); fields left out take preset values.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelMode {
    Vv,
    Vh,
    Vvvh,
    PerChannelMax,
}

impl From<ChannelMode> for ChannelSelection {
    fn from(m: ChannelMode) -> Self {
        match m {
            ChannelMode::Vv => ChannelSelection::Vv,
            ChannelMode::Vh => ChannelSelection::Vh,
            ChannelMode::Vvvh => ChannelSelection::Vvvh,
            ChannelMode::PerChannelMax => ChannelSelection::PerChannelMax,
        }
    }
}

/// Command-line overrides of run-manifest fields.
#[derive(Debug, Clone, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Retained sweeps per pixel.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    channel_mode: Option<ChannelMode>,
    /// Worker threads (0 = all available cores).
    #[arg(long, env = "BCPFLOOD_WORKERS")]
    workers: Option<usize>,
    /// Analyse at native resolution.
    #[arg(long)]
    no_aggregate: bool,
}

#[derive(Debug, Args)]
struct JobArgs {
    /// Run manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Also write a PNG heatmap of the sweep.
    #[arg(long)]
    emit_plots: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Channel {
    Vv,
    Vh,
}

#[derive(Debug, Args)]
struct OtsuArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    channel: Option<Channel>,
    #[arg(long)]
    no_aggregate: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OtherClassArg {
    Ignore,
    Negative,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Flood mask GeoTIFF (0 dry, 1 flood, 255 NoData).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value = "site")]
    site: String,
    #[arg(long, default_value = "mask")]
    method: String,
    #[arg(long, value_enum, default_value = "ignore")]
    other_class: OtherClassArg,
    /// Write the records to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// CSV with an `f1` column.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => {
            let preset = match a.preset {
                Preset::Default => commands::ScenePreset::Default,
                Preset::NegativeControl => commands::ScenePreset::NegativeControl,
                Preset::PermanentWater => commands::ScenePreset::PermanentWater,
            };
            commands::synth(a.spec.as_deref(), preset, a.seed, &a.out)
        }
        Command::Run(a) => commands::run(&a.manifest, &a.overrides.into()),
        Command::Sweep(a) => commands::sweep(&a.manifest, &a.overrides.into(), a.emit_plots),
        Command::Otsu(a) => commands::otsu(
            &a.manifest,
            a.channel.map(|c| match c {
                Channel::Vv => OtsuChannel::Vv,
                Channel::Vh => OtsuChannel::Vh,
            }),
            a.no_aggregate,
        ),
        Command::Eval(a) => commands::eval(
            &a.mask,
            &a.reference,
            &a.site,
            &a.method,
            match a.other_class {
                OtherClassArg::Ignore => OtherClass::Ignore,
                OtherClassArg::Negative => OtherClass::Negative,
            },
            a.out.as_deref(),
        ),
        Command::Compare(a) => commands::compare(&a.a, &a.b),
        Command::Report(a) => commands::report(&a.dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Usage => 1,
                ErrorCategory::Data => 2,
                ErrorCategory::Internal => 3,
            })
        }
    }
}

impl From<Overrides> for commands::Overrides {
    fn from(o: Overrides) -> Self {
        Self {
            seed: o.seed,
            gamma: o.gamma,
            lambda: o.lambda,
            iterations: o.iters,
            burn_in: o.burn_in,
            window: o.window,
            threshold: o.threshold,
            channels: o.channel_mode.map(Into::into),
            workers: o.workers,
            no_aggregate: o.no_aggregate,
        }
    }
}
