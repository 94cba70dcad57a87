use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use texloss::aggregation::RuleName;
use texloss::descriptors::DescriptorKind;
use texloss::metrics::PsnrPeak;
use texloss::mste::GlcmMode;
use texloss::optimize::Competitor;

/// Differentiable multi-scale GLCM texture loss and CT denoising evaluation.
#[derive(Debug, Parser)]
#[command(name = "texloss", version, propagate_version = true)]
pub struct Cli {
    /// TOML file with one flat section per subcommand; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

pub const SUBCOMMANDS: [&str; 9] = [
    "glcm", "features", "loss", "gradcheck", "denoise", "metrics", "match", "rank", "bench",
];

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Co-occurrence matrix of one image for one offset.
    Glcm(GlcmArgs),
    /// Descriptor matrix over the offset grid.
    Features(FeaturesArgs),
    /// Texture loss between two images.
    Loss(LossArgs),
    /// Analytic gradient against central finite differences on a random image.
    Gradcheck(GradcheckArgs),
    /// Pixel-space texture-matching denoiser.
    Denoise(DenoiseArgs),
    /// MSE, PSNR and SSIM of an image against a reference.
    Metrics(MetricsArgs),
    /// Template-matching scores and their density.
    Match(MatchArgs),
    /// Perception-distortion ranking of experiments.
    Rank(RankArgs),
    /// Timing sweep of hard and soft GLCM construction.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Max,
    Average,
    Frobenius,
    Attention,
}

impl From<RuleArg> for RuleName {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Max => RuleName::Max,
            RuleArg::Average => RuleName::Average,
            RuleArg::Frobenius => RuleName::Frobenius,
            RuleArg::Attention => RuleName::Attention,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DescriptorArg {
    Contrast,
    Homogeneity,
    Correlation,
    Asm,
}

impl From<DescriptorArg> for DescriptorKind {
    fn from(d: DescriptorArg) -> Self {
        match d {
            DescriptorArg::Contrast => DescriptorKind::Contrast,
            DescriptorArg::Homogeneity => DescriptorKind::Homogeneity,
            DescriptorArg::Correlation => DescriptorKind::Correlation,
            DescriptorArg::Asm => DescriptorKind::AngularSecondMoment,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Hard,
    Soft,
}

impl From<ModeArg> for GlcmMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hard => GlcmMode::Hard,
            ModeArg::Soft => GlcmMode::Soft,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Gd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CompetitorArg {
    SsimL,
    Edge,
}

impl From<CompetitorArg> for Competitor {
    fn from(c: CompetitorArg) -> Self {
        match c {
            CompetitorArg::SsimL => Competitor::SsimL,
            CompetitorArg::Edge => Competitor::Edge,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PeakArg {
    /// Largest value of the first image.
    Observed,
    /// Width of the first image's value range.
    Range,
}

impl From<PeakArg> for PsnrPeak {
    fn from(p: PeakArg) -> Self {
        match p {
            PeakArg::Observed => PsnrPeak::ObservedMax,
            PeakArg::Range => PsnrPeak::RangeWidth,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WindowArg {
    Gaussian,
    Global,
}

/// Image file plus an optional explicit format (default: by extension).
#[derive(Debug, Clone, Args)]
pub struct FormatArg {
    /// pgm8, pgm16 or raw_f32; defaults to the file extension.
    #[arg(long, value_name = "FORMAT")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BinArgs {
    /// Number of bins spread uniformly over the image's value range.
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    /// Soft-assignment width in units of the bin spacing.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    pub distances: Vec<f64>,
    /// Angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,45,90,135")]
    pub angles: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct GlcmArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Soft)]
    pub mode: ModeArg,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = DescriptorArg::Contrast)]
    pub descriptor: DescriptorArg,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Soft)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Reference image (its texture is the target).
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Average)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = DescriptorArg::Contrast)]
    pub descriptor: DescriptorArg,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    /// JSON attention parameters; seeded initialization otherwise.
    #[arg(long, value_name = "FILE")]
    pub attention_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Side of the random square test image.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::Average)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = DescriptorArg::Contrast)]
    pub descriptor: DescriptorArg,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Soft-assignment width in units of the bin spacing.
    #[arg(long, default_value_t = 1.75)]
    pub sigma: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Noisy input; with --clean omitted both come from the seeded checkerboard benchmark.
    #[arg(long, requires = "clean")]
    pub noisy: Option<PathBuf>,
    #[arg(long, requires = "noisy")]
    pub clean: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArg,
    /// Where to write the denoised image.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the per-step trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Average)]
    pub rule: RuleArg,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "contrast")]
    pub descriptors: Vec<DescriptorArg>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_txt: f64,
    /// Weight of the L1 anchor to the noisy input.
    #[arg(long, default_value_t = 0.0)]
    pub lambda_pix: f64,
    #[arg(long, value_enum)]
    pub competitor: Option<CompetitorArg>,
    /// Weight of the competitor loss (defaults: ssim-l 1, edge 10).
    #[arg(long)]
    pub lambda_competitor: Option<f64>,
    #[arg(long)]
    pub train_attention: bool,
    /// Run every rule and competitor and print a comparison CSV instead.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Image under test (PSNR takes its maximum by default).
    #[arg(long)]
    pub a: PathBuf,
    /// Reference image.
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub format: FormatArg,
    #[arg(long, value_enum, default_value_t = PeakArg::Observed)]
    pub peak: PeakArg,
    #[arg(long, value_enum, default_value_t = WindowArg::Gaussian)]
    pub window: WindowArg,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Image the templates are cut from.
    #[arg(long)]
    pub noisy: PathBuf,
    /// Images searched for each template.
    #[arg(long, num_args = 1.., required = true)]
    pub denoised: Vec<PathBuf>,
    #[command(flatten)]
    pub format: FormatArg,
    /// Number of templates (a perfect square).
    #[arg(long, default_value_t = 9)]
    pub r: usize,
    /// Template side in pixels.
    #[arg(long, default_value_t = 32)]
    pub t: usize,
    /// Density evaluation points.
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub kde: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// CSV with columns label,perception,distortion.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Pixel counts.
    #[arg(long, value_delimiter = ',', default_value = "4096,16384,65536,262144")]
    pub sizes: Vec<usize>,
    /// Bin counts.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub bins: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
