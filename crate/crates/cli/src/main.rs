use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use wct2::network::{DecoderSpec, EncoderSpec};
use wct2::pipeline::{self, StylizeJob, StylizeOptions};
use wct2::verify::{self, VerifyConfig};
use wct2::{weights, HaarKernels, UnpoolMode};

#[derive(Parser, Debug)]
#[command(name = "wct2", version, about = "Photorealistic style transfer with wavelet pooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transfer the style of one photograph onto another.
    Stylize(StylizeArgs),
    /// Edge SSIM against the content and style loss against the style.
    Metrics(MetricsArgs),
    /// Run the numerical self-checks on seeded random data.
    Verify(VerifyArgs),
    /// List the tensors in a weight container.
    InspectWeights(InspectArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Unpool {
    Sum,
    Concat,
}

impl From<Unpool> for UnpoolMode {
    fn from(u: Unpool) -> Self {
        match u {
            Unpool::Sum => UnpoolMode::Sum,
            Unpool::Concat => UnpoolMode::Concat,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Transform {
    Wct,
    Adain,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PoolingKind {
    Haar,
    Average,
    Split,
    Max,
}

impl PoolingKind {
    fn name(self) -> &'static str {
        match self {
            PoolingKind::Haar => "haar",
            PoolingKind::Average => "average",
            PoolingKind::Split => "split",
            PoolingKind::Max => "max",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Text,
    Kv,
}

#[derive(Args, Debug)]
struct WeightsArg {
    /// Weight container; defaults to $WCT2_WEIGHTS.
    #[arg(long, env = "WCT2_WEIGHTS")]
    weights: PathBuf,
}

#[derive(Args, Debug)]
struct StylizeArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    /// Output PNG path.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    weights: WeightsArg,
    /// Grayscale label map for the content image (requires --style-seg).
    #[arg(long, requires = "style_seg")]
    content_seg: Option<PathBuf>,
    /// Grayscale label map for the style image (requires --content-seg).
    #[arg(long, requires = "content_seg")]
    style_seg: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "concat")]
    unpool: Unpool,
    #[arg(long, value_enum, default_value = "wct")]
    transform: Transform,
    /// Blend between content (0) and fully transferred features (1).
    #[arg(long, default_value_t = 1.0)]
    alpha: f32,
    /// Also transform the skipped high-frequency components.
    #[arg(long)]
    skip_wct: bool,
    /// Also transform decoder conv3_2, conv2_2 and conv1_2 outputs.
    #[arg(long)]
    decoder_wct: bool,
    /// Repeat the full pass, feeding each output back in as content.
    #[arg(long)]
    multi_level: bool,
    #[arg(long, value_enum, default_value = "haar")]
    pooling: PoolingKind,
    /// Bilinearly downscale so the longer side is at most this many pixels.
    #[arg(long)]
    max_side: Option<usize>,
    /// Print edge SSIM and style loss for the result.
    #[arg(long)]
    report: bool,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    /// The stylized image to score.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    weights: WeightsArg,
    /// Decoder layout of the container (only the encoder is used).
    #[arg(long, value_enum, default_value = "concat")]
    unpool: Unpool,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Test hook: add this offset to one Haar tap; the frame checks must then fail.
    #[arg(long, value_name = "EPS")]
    perturb_haar: Option<f32>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    weights: WeightsArg,
}

/// Failure before any file was touched (exit 2) or while running (exit 1).
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<wct2::Error> for Failure {
    fn from(e: wct2::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn cmd_stylize(args: StylizeArgs) -> Result<(), Failure> {
    let options = StylizeOptions {
        unpool: args.unpool.into(),
        pooling: args.pooling.name().into(),
        transform: match args.transform {
            Transform::Wct => "wct",
            Transform::Adain => "adain",
        }
        .into(),
        alpha: args.alpha,
        skip_wct: args.skip_wct,
        decoder_wct: args.decoder_wct,
        multi_level: args.multi_level,
        max_side: args.max_side,
    };
    options.validate().map_err(|e| Failure::Usage(e.into()))?;
    if args.max_side == Some(0) {
        return Err(Failure::Usage(anyhow::anyhow!("--max-side must be positive")));
    }
    let job = StylizeJob {
        content: args.content,
        style: args.style,
        content_seg: args.content_seg,
        style_seg: args.style_seg,
        weights: args.weights.weights,
        output: args.output,
        options,
        with_report: args.report,
    };
    let run = pipeline::run_stylize(&job)?;
    log::info!(
        "wrote {} ({}x{}), transformed sites: {}",
        job.output.display(),
        run.image.width(),
        run.image.height(),
        run.applied.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    );
    if let Some(report) = run.report {
        print!("{}", report.to_key_value());
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    let content = pipeline::load_image(&args.content, "content image")?;
    let style = pipeline::load_image(&args.style, "style image")?;
    let output = pipeline::load_image(&args.output, "output image")?;
    let store = weights::load(&args.weights.weights)
        .with_context(|| format!("loading weights from {}", args.weights.weights.display()))?;
    let options = StylizeOptions {
        unpool: args.unpool.into(),
        ..StylizeOptions::default()
    };
    let model = options.build_model(&store)?;
    let report = pipeline::evaluate_images(&model, &content, &style, &output)?;
    match args.format {
        ReportFormat::Text => print!("{}", report.to_text()),
        ReportFormat::Kv => print!("{}", report.to_key_value()),
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let mut cfg = VerifyConfig::new(args.seed);
    if let Some(eps) = args.perturb_haar {
        if !eps.is_finite() {
            return Err(Failure::Usage(anyhow::anyhow!("--perturb-haar must be finite")));
        }
        cfg.kernels = HaarKernels::perturbed(eps);
    }
    let report = verify::run(&cfg)?;
    print!("{}", report.to_table());
    if !report.all_passed() {
        return Err(Failure::Runtime(anyhow::anyhow!("verification failed")));
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Failure> {
    let path = &args.weights.weights;
    let store = weights::load(path).with_context(|| format!("loading weights from {}", path.display()))?;
    let mut encoder = 0usize;
    let mut decoder = 0usize;
    let mut other = 0usize;
    for (name, t) in store.iter() {
        let dims = t.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        println!("{name:<28} {dims:<16} {:>10}", t.len());
        if name.starts_with("encoder.") {
            encoder += t.len();
        } else if name.starts_with("decoder.") {
            decoder += t.len();
        } else {
            other += t.len();
        }
    }
    println!("tensors={}", store.len());
    println!("encoder_parameters={encoder}");
    println!("decoder_parameters={decoder}");
    if other > 0 {
        println!("other_parameters={other}");
    }
    println!("total_parameters={}", store.parameter_count());
    let layout = [UnpoolMode::Sum, UnpoolMode::Concat]
        .into_iter()
        .find(|&m| wct2::build_model(&store, m, std::sync::Arc::new(wct2::wavelet::HaarPooling::default())).is_ok());
    match layout {
        Some(m) => println!("layout={m}"),
        None => println!("layout=unrecognized"),
    }
    let sum = DecoderSpec::mirror(UnpoolMode::Sum).parameter_count();
    let concat = DecoderSpec::mirror(UnpoolMode::Concat).parameter_count();
    println!("reference_encoder_parameters={}", EncoderSpec::vgg19().parameter_count());
    println!("reference_decoder_parameters.sum={sum}");
    println!("reference_decoder_parameters.concat={concat}");
    println!("concat_to_sum_decoder_ratio={:.4}", concat as f64 / sum as f64);
    if layout.is_none() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "container does not match the sum or concat model layout"
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Stylize(a) => cmd_stylize(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Verify(a) => cmd_verify(a),
        Command::InspectWeights(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
