//! `orbstream` command-line harness.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, missing inputs).

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "orbstream", version, about = "Streaming fixed-point ORB extraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract features from PGM images into ORBX dumps plus per-level stats.
    Extract(ExtractArgs),
    /// Sweep sector count or pixel bit depth against the float reference.
    Sweep(SweepArgs),
    /// Match two ORBX feature dumps.
    Match(MatchArgs),
    /// Track a synthetic RGB-D sequence with motion-only BA against a frame-0 map.
    Pose(PoseArgs),
    /// Absolute trajectory error between two TUM trajectories.
    Ate(AteArgs),
    /// Render a synthetic sequence or textured frames.
    Synth(SynthArgs),
    /// Write the BRIEF sampling pattern as text.
    Pattern(PatternArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ExtractorFlags {
    /// FAST intensity threshold.
    #[arg(long, default_value_t = 20)]
    pub threshold: u8,
    /// Orientation sectors (multiple of 4, 4..=256).
    #[arg(long, default_value_t = 64)]
    pub sectors: u16,
    /// Pixel bits kept before smoothing (1..=8).
    #[arg(long, default_value_t = 6)]
    pub pixel_bits: u8,
    /// Parallel BRIEF units, or `unlimited`.
    #[arg(long, default_value = "4", value_parser = parse_units)]
    pub brief_units: Units,
    /// Keypoints kept per frame.
    #[arg(long, default_value_t = 1000)]
    pub nmax: usize,
    /// BRIEF pattern file (`xA yA xB yB` per line); default is the built-in pattern.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Units(pub Option<usize>);

fn parse_units(s: &str) -> Result<Units, String> {
    if s.eq_ignore_ascii_case("unlimited") {
        return Ok(Units(None));
    }
    match s.parse::<usize>() {
        Ok(0) => Err("at least one BRIEF unit is required".into()),
        Ok(k) => Ok(Units(Some(k))),
        Err(e) => Err(format!("{e}; expected a count or `unlimited`")),
    }
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Input PGM images.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for `<stem>.orbx` and `<stem>.stats.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also run the float reference and write agreement and Hamming histogram CSVs.
    #[arg(long)]
    pub float_reference: bool,
    #[command(flatten)]
    pub flags: ExtractorFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Sectors,
    Bits,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Directory of PGM frames (or a TUM sequence with associations.txt).
    #[arg(long)]
    pub sequence: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Values to sweep; defaults to 16,32,64,128 sectors or 8..4 bits.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<u16>>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: ExtractorFlags,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest accepted Hamming distance.
    #[arg(long, default_value_t = 50)]
    pub max_distance: u32,
    /// Keep one-way nearest neighbours instead of mutual ones.
    #[arg(long)]
    pub no_mutual: bool,
}

#[derive(Args, Debug)]
pub struct IntrinsicsFlags {
    #[arg(long, default_value_t = 525.0)]
    pub fx: f64,
    #[arg(long, default_value_t = 525.0)]
    pub fy: f64,
    /// Principal point; defaults to the image center.
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PoseArgs {
    /// Sequence directory with associations.txt, rgb and 16-bit depth PGMs.
    #[arg(long)]
    pub sequence: PathBuf,
    /// Estimated trajectory (TUM format).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame tracking report CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Express the result in this trajectory's frame, anchored at the first frame.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    /// Huber threshold in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub huber: f64,
    /// Reprojection error above which a match is discarded before the final solve.
    #[arg(long, default_value_t = 4.0)]
    pub outlier_px: f64,
    /// Depth units per meter.
    #[arg(long, default_value_t = 5000.0)]
    pub depth_scale: f64,
    #[command(flatten)]
    pub intrinsics: IntrinsicsFlags,
    #[command(flatten)]
    pub flags: ExtractorFlags,
}

#[derive(Args, Debug)]
pub struct AteArgs {
    pub estimate: PathBuf,
    pub groundtruth: PathBuf,
    /// Measure raw positions instead of fitting a rigid transform first.
    #[arg(long)]
    pub no_align: bool,
    #[arg(long, default_value_t = 0.02)]
    pub max_dt: f64,
    /// Write the metrics CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Rendered two-plane scene along a known camera path, with depth and ground truth.
    Sequence,
    /// Independent 1/f-textured frames.
    Textured,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "sequence")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Frame rate used for timestamps.
    #[arg(long, default_value_t = 30.0)]
    pub rate: f64,
}

#[derive(Args, Debug)]
pub struct PatternArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for a different Gaussian pattern; default reproduces the built-in one.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Bad invocation or unreadable input; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Extract(a) => commands::extract(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Match(a) => commands::match_dumps(&a),
        Command::Pose(a) => commands::pose(&a),
        Command::Ate(a) => commands::ate(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Pattern(a) => commands::pattern(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
