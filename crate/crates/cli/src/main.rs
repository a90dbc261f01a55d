//! Command-line frontend: synthetic sequence generation, motion estimation,
//! evaluation, noise experiments, model verification, mosaicing and planar
//! augmentation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use egomotion::estimator::{estimate_motion, EstimatorConfig, GammaPolicy};
use egomotion::evaluation::{
    apply_noise, evaluate_sequence, generate_sequence, noise_sweep, synthetic_texture, MotionType,
    NoiseKind, SequenceManifest,
};
use egomotion::flowmodel::{verify_depth_substitution, verify_quadratic_bound};
use egomotion::geometry::check_hypotheses;
use egomotion::imaging::{load_image, save_image, DepthField, Intrinsics};
use egomotion::pipeline::{augment_sequence, build_mosaic, ChainEstimate, PlacementRect};
use egomotion::{ImageBufferF64, IntrinsicsF64, MotionParamsF64};

#[derive(Parser)]
#[command(
    name = "egomotion",
    about = "Camera motion estimation between adjacent frames via a planar deformation model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground-truth motions.
    Synth(SynthArgs),
    /// Estimate motion for a frame pair or a whole manifest.
    Estimate(EstimateArgs),
    /// Compare estimates against a manifest's ground truth.
    Eval(EvalArgs),
    /// Noise injection and robustness sweeps.
    #[command(subcommand)]
    Noise(NoiseCommand),
    /// Numeric verification of the model's bounds and validity conditions.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Register frames onto a reference frame and blend a mosaic.
    Mosaic(MosaicArgs),
    /// Insert a planar poster carried by the estimated camera motion.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Base image (PGM/PNG); a procedural texture is used when omitted.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Procedural texture size when no base image is given.
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long, value_parser = parse_motion_type, default_value = "plain")]
    motion_type: MotionType,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Intrinsics JSON; defaults to a 90 degree view angle, centered.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Estimator configuration JSON (missing fields take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_pyramid_dim: Option<usize>,
    #[arg(long)]
    max_iters_per_level: Option<usize>,
    #[arg(long)]
    step_tolerance: Option<f64>,
    /// Fixed Tukey cutoff in gray levels.
    #[arg(long, conflicts_with = "gamma_mad")]
    gamma_fixed: Option<f64>,
    /// Scale factor for the MAD-coupled Tukey cutoff.
    #[arg(long)]
    gamma_mad: Option<f64>,
    /// Disable estimation of the global intensity shift.
    #[arg(long)]
    no_xi: bool,
}

impl ConfigArgs {
    fn build(&self) -> Result<EstimatorConfig<f64>> {
        let mut config: EstimatorConfig<f64> = match &self.config {
            Some(path) => serde_json::from_str(
                &std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?,
            )?,
            None => EstimatorConfig::default(),
        };
        if let Some(v) = self.min_pyramid_dim {
            config.min_pyramid_dim = v;
        }
        if let Some(v) = self.max_iters_per_level {
            config.max_iters_per_level = v;
        }
        if let Some(v) = self.step_tolerance {
            config.step_tolerance = v;
        }
        if let Some(v) = self.gamma_fixed {
            config.gamma_policy = GammaPolicy::Fixed(v);
        }
        if let Some(v) = self.gamma_mad {
            config.gamma_policy = GammaPolicy::MadScaled(v);
        }
        if self.no_xi {
            config.estimate_xi = false;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Two frames: the earlier and the later.
    #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"])]
    pair: Option<Vec<PathBuf>>,
    /// Estimate every adjacent pair of a sequence manifest.
    #[arg(long, conflicts_with = "pair")]
    manifest: Option<PathBuf>,
    /// Intrinsics JSON (required with --pair; the manifest carries its own).
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON array of motion estimates (as produced by `estimate`).
    #[arg(long)]
    estimates: PathBuf,
    /// Write the full JSON report here (the table always prints).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NoiseCommand {
    /// Corrupt one image with impulse or Gaussian noise.
    Inject(NoiseInjectArgs),
    /// Re-estimate a manifest under increasing noise and emit a CSV.
    Sweep(NoiseSweepArgs),
}

#[derive(Args)]
struct NoiseInjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_parser = parse_noise_kind)]
    kind: NoiseKind,
    /// Impulse: percentage of pixels; Gaussian: standard deviation.
    #[arg(long)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NoiseSweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_noise_kind)]
    kind: NoiseKind,
    /// Comma-separated noise levels, e.g. 0,5,10,20.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Measured quadratic-flow error versus the closed-form bound.
    Bounds(VerifyBoundsArgs),
    /// Constant-depth substitution error on a random depth field.
    Depth(VerifyDepthArgs),
    /// Working-hypothesis margins on a random depth field.
    Hypotheses(VerifyDepthArgs),
}

#[derive(Args)]
struct MotionArgs {
    /// Motion parameters JSON; inline flags override its fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
}

impl MotionArgs {
    fn build(&self) -> Result<MotionParamsF64> {
        let mut p = match &self.params {
            Some(path) => serde_json::from_str::<MotionParamsF64>(
                &std::fs::read_to_string(path)
                    .with_context(|| format!("reading params {}", path.display()))?,
            )?,
            None => MotionParamsF64::zero(),
        };
        if let Some(v) = self.theta {
            p.theta = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.a {
            p.a = v;
        }
        if let Some(v) = self.b {
            p.b = v;
        }
        if let Some(v) = self.c {
            p.c = v;
        }
        Ok(MotionParamsF64::new(p.theta, p.alpha, p.beta, p.a, p.b, p.c))
    }
}

#[derive(Args)]
struct VerifyBoundsArgs {
    /// Side of the square domain in focal units.
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[command(flatten)]
    motion: MotionArgs,
}

#[derive(Args)]
struct VerifyDepthArgs {
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 4.0)]
    z_inf: f64,
    #[arg(long, default_value_t = 6.0)]
    z_sup: f64,
    /// Error budget for the substitution check.
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    motion: MotionArgs,
}

#[derive(Args)]
struct MosaicArgs {
    /// Frame image paths in temporal order.
    #[arg(long, num_args = 1.., required = true)]
    frames: Vec<PathBuf>,
    /// Chain JSON: {"reference": k, "motions": [...]}.
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    /// Canvas margin around the reference frame, pixels.
    #[arg(long, default_value_t = 64)]
    margin: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long, num_args = 1.., required = true)]
    frames: Vec<PathBuf>,
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    poster: PathBuf,
    /// Axis-aligned placement in frame-0 pixels: x0,y0,x1,y1.
    #[arg(long, value_delimiter = ',', required = true)]
    rect: Vec<f64>,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_motion_type(s: &str) -> Result<MotionType, String> {
    match s {
        "plain" => Ok(MotionType::Plain),
        "pure_translation" => Ok(MotionType::PureTranslation),
        "pure_rotation" => Ok(MotionType::PureRotation),
        _ => Err("expected plain, pure_translation or pure_rotation".into()),
    }
}

fn parse_noise_kind(s: &str) -> Result<NoiseKind, String> {
    match s {
        "impulse" => Ok(NoiseKind::Impulse),
        "gaussian" => Ok(NoiseKind::Gaussian),
        _ => Err("expected impulse or gaussian".into()),
    }
}

fn load_intrinsics(path: &Path) -> Result<IntrinsicsF64> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading intrinsics {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let base: ImageBufferF64 = match &args.base {
                Some(path) => load_image(path)?,
                None => synthetic_texture(args.width, args.height, args.seed),
            };
            let intr = match &args.intrinsics {
                Some(path) => load_intrinsics(path)?,
                None => Intrinsics::synthetic(base.width(), base.height()),
            };
            let (manifest, warnings) = generate_sequence(
                &base,
                args.frames,
                args.motion_type,
                args.seed,
                &intr,
                &args.out,
            )?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} frames and manifest.json to {}",
                manifest.frames.len(),
                args.out.display()
            );
        }
        Command::Estimate(args) => {
            let config = args.config.build()?;
            if let Some(pair) = &args.pair {
                let intr = match &args.intrinsics {
                    Some(path) => load_intrinsics(path)?,
                    None => bail!("--intrinsics is required with --pair"),
                };
                let f: ImageBufferF64 = load_image(&pair[0])?;
                let g: ImageBufferF64 = load_image(&pair[1])?;
                let result = estimate_motion(&f, &g, &intr, &config)?;
                write_or_print(&args.out, &serde_json::to_string_pretty(&result)?)?;
            } else if let Some(manifest_path) = &args.manifest {
                let manifest = SequenceManifest::<f64>::load(manifest_path)?;
                let frames = manifest.load_frames(manifest_path)?;
                let mut results = Vec::new();
                for k in 0..frames.len() - 1 {
                    results.push(estimate_motion(
                        &frames[k],
                        &frames[k + 1],
                        &manifest.intrinsics,
                        &config,
                    )?);
                }
                write_or_print(&args.out, &serde_json::to_string_pretty(&results)?)?;
            } else {
                bail!("pass either --pair or --manifest");
            }
        }
        Command::Eval(args) => {
            let manifest = SequenceManifest::<f64>::load(&args.manifest)?;
            let estimates: Vec<MotionParamsF64> = serde_json::from_str(
                &std::fs::read_to_string(&args.estimates)
                    .with_context(|| format!("reading {}", args.estimates.display()))?,
            )?;
            let report = evaluate_sequence(manifest.motion_type, &manifest.truth, &estimates)?;
            print!("{report}");
            if args.out.is_some() {
                write_or_print(&args.out, &serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Noise(NoiseCommand::Inject(args)) => {
            let img: ImageBufferF64 = load_image(&args.input)?;
            let noisy = apply_noise(&img, args.kind, args.level, args.seed);
            save_image(&args.output, &noisy)?;
        }
        Command::Noise(NoiseCommand::Sweep(args)) => {
            let config = args.config.build()?;
            let manifest = SequenceManifest::<f64>::load(&args.manifest)?;
            let frames = manifest.load_frames(&args.manifest)?;
            let table = noise_sweep(
                &frames,
                &manifest.truth,
                &manifest.intrinsics,
                args.kind,
                &args.levels,
                args.seed,
                &config,
            )?;
            write_or_print(&args.out, &table.to_csv())?;
        }
        Command::Verify(VerifyCommand::Bounds(args)) => {
            let p = args.motion.build()?;
            let report = verify_quadratic_bound(&p, args.l, args.grid)?;
            let out = serde_json::to_string_pretty(&json!([
                {
                    "check": "quadratic_bound_x",
                    "pass": report.max_err_x <= report.bound_x,
                    "measured": report.max_err_x,
                    "bound": report.bound_x,
                    "grid": report.grid,
                },
                {
                    "check": "quadratic_bound_y",
                    "pass": report.max_err_y <= report.bound_y,
                    "measured": report.max_err_y,
                    "bound": report.bound_y,
                    "grid": report.grid,
                }
            ]))?;
            println!("{out}");
            if !report.pass {
                bail!("quadratic bound violated");
            }
        }
        Command::Verify(VerifyCommand::Depth(args)) => {
            let d = args.motion.build()?.displacement();
            let depths =
                DepthField::<f64>::random_uniform(args.grid, args.grid, args.z_inf, args.z_sup, args.seed);
            let report = verify_depth_substitution(&d, &depths, args.l, args.epsilon)?;
            let out = serde_json::to_string_pretty(&json!({
                "check": "depth_substitution",
                "pass": report.pass,
                "measured": report.max_err,
                "bound": report.epsilon,
                "grid": args.grid,
                "z0": report.z0,
                "cond1": report.cond1,
            }))?;
            println!("{out}");
            if !report.pass {
                bail!("depth substitution error exceeds epsilon");
            }
        }
        Command::Verify(VerifyCommand::Hypotheses(args)) => {
            let d = args.motion.build()?.displacement();
            let depths =
                DepthField::<f64>::random_uniform(args.grid, args.grid, args.z_inf, args.z_sup, args.seed);
            let report = check_hypotheses(&d, &depths, args.l)?;
            let out = serde_json::to_string_pretty(&json!([
                {
                    "check": "hypothesis_1_inverse_denominator",
                    "pass": report.hyp1_pass,
                    "measured": report.hyp1_max_inv_denominator,
                    "bound": 4.0 / 3.0,
                    "grid": args.grid,
                },
                {
                    "check": "hypothesis_2_max_displacement",
                    "pass": report.hyp2_pass,
                    "measured": report.hyp2_max_displacement,
                    "bound": args.l / 2.0,
                    "grid": args.grid,
                }
            ]))?;
            println!("{out}");
            if !(report.hyp1_pass && report.hyp2_pass) {
                bail!("hypothesis check failed");
            }
        }
        Command::Mosaic(args) => {
            let intr = load_intrinsics(&args.intrinsics)?;
            let chain: ChainEstimate<f64> = serde_json::from_str(
                &std::fs::read_to_string(&args.chain)
                    .with_context(|| format!("reading chain {}", args.chain.display()))?,
            )?;
            let frames: Vec<ImageBufferF64> = args
                .frames
                .iter()
                .map(load_image)
                .collect::<egomotion::Result<_>>()?;
            let max_t = chain.max_translation_norm();
            if max_t > 0.05 {
                eprintln!(
                    "warning: chain translation up to {max_t:.3} focal units; planar \
                     registration is only exact for pure rotation or planar scenes"
                );
            }
            let (canvas, warnings) = build_mosaic(&frames, &chain, &intr, args.margin)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            save_image(&args.out, &canvas)?;
            println!("wrote {}", args.out.display());
        }
        Command::Augment(args) => {
            let intr = load_intrinsics(&args.intrinsics)?;
            let chain: ChainEstimate<f64> = serde_json::from_str(
                &std::fs::read_to_string(&args.chain)
                    .with_context(|| format!("reading chain {}", args.chain.display()))?,
            )?;
            let frames: Vec<ImageBufferF64> = args
                .frames
                .iter()
                .map(load_image)
                .collect::<egomotion::Result<_>>()?;
            let poster: ImageBufferF64 = load_image(&args.poster)?;
            if args.rect.len() != 4 {
                bail!("--rect needs exactly four values: x0,y0,x1,y1");
            }
            let rect = PlacementRect::from_rect(args.rect[0], args.rect[1], args.rect[2], args.rect[3])?;
            let augmented = augment_sequence(&frames, &chain, &poster, &rect, &intr)?;
            std::fs::create_dir_all(&args.out_dir)?;
            for (k, img) in augmented.iter().enumerate() {
                let path = args.out_dir.join(format!("augmented_{k:04}.pgm"));
                save_image(&path, img)?;
            }
            println!("wrote {} frames to {}", augmented.len(), args.out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}
