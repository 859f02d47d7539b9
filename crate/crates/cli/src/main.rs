//! Command-line surface for the panoloop toolkit.
//!
//! Exit codes: 0 success, 1 invalid arguments or config, 2 I/O failure,
//! 3 numeric or contract failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use panoloop::blend::{BlendSpec, RampKind};
use panoloop::codec::{tiled_decode, Codec, TileSpec, ToyCodec};
use panoloop::grid::{read_image, read_latent_file, write_image, write_latent_file};
use panoloop::metrics::seam_report;
use panoloop::pipeline::{parse_config, run_pipeline, Stage, StageTrace};
use panoloop::projection::{
    center_cube_condition, cubemap_to_equirect, equirect_to_cubemap, CubemapFaces, Face,
};
use panoloop::sampler::{
    gradient_target, make_schedule, sample, ConstantTargetDenoiser, SamplerConfig,
};
use panoloop::{Error, ErrorKind, LatentGrid};

#[derive(Parser)]
#[command(
    name = "panoloop",
    version,
    about = "Seamless 360-degree panorama toolkit: circular blending, wrap-aware tiled decoding, cubemap conditioning"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the denoising sampler and write a latent (.ltg) file
    Sample(SampleArgs),
    /// Decode a latent file to a PNG with wrap-aware tiling
    Decode(DecodeArgs),
    /// Convert an equirectangular panorama to six cubemap faces
    E2c(E2cArgs),
    /// Assemble an equirectangular panorama from six cubemap faces
    C2e(C2eArgs),
    /// Build the outpainting condition pair (c.png, m.png) from a square image
    Condition(ConditionArgs),
    /// Measure wrap-seam continuity of a panorama
    Seamcheck(SeamcheckArgs),
    /// Run a multi-stage generation pipeline from a config file
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// Latent width in columns
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Latent height in rows
    #[arg(long, default_value_t = 16)]
    height: usize,
    /// Denoising steps
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Noise seed; picked and printed when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Blend strip width in latent columns [default: width / 8, at least 1]
    #[arg(long)]
    overlap: Option<usize>,
    /// Blend weight ramp
    #[arg(long, default_value_t = RampKind::Linear)]
    ramp: RampKind,
    /// Disable circular blending (ablation arm)
    #[arg(long)]
    no_blend: bool,
    /// PNG whose encoded latent becomes the denoiser target
    /// [default: built-in horizontal gradient]
    #[arg(long)]
    target: Option<PathBuf>,
    /// Output latent file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input latent file
    #[arg(long)]
    latent: PathBuf,
    /// Tile width in latent columns [default: min(64, latent width)]
    #[arg(long)]
    tile: Option<usize>,
    /// Latent columns shared by adjacent tiles [default: tile / 4, capped at 8]
    #[arg(long)]
    tile_overlap: Option<usize>,
    /// Blend the wrap seam through an extra circular tile (default)
    #[arg(long, conflicts_with = "no_wrap")]
    wrap: bool,
    /// Decode without the circular wrap tile (ablation arm)
    #[arg(long)]
    no_wrap: bool,
    /// Wrap blend width in latent columns
    /// [default: min(latent width / 8, tile overlap), at least 1]
    #[arg(long)]
    overlap: Option<usize>,
    /// Blend weight ramp
    #[arg(long, default_value_t = RampKind::Linear)]
    ramp: RampKind,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct E2cArgs {
    /// Input equirectangular PNG (width must be twice the height)
    #[arg(long = "in")]
    input: PathBuf,
    /// Cube face edge length in pixels
    #[arg(long, default_value_t = 256)]
    face: usize,
    /// Output directory for front/right/back/left/up/down.png
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct C2eArgs {
    /// Directory holding front/right/back/left/up/down.png
    #[arg(long = "in")]
    input: PathBuf,
    /// Output panorama height in pixels (width is twice that)
    #[arg(long)]
    height: usize,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    /// Square perspective PNG
    #[arg(long = "in")]
    input: PathBuf,
    /// Output panorama height in pixels
    #[arg(long)]
    height: usize,
    /// Output directory for c.png and m.png
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeamcheckArgs {
    /// Panorama PNG to measure
    #[arg(long = "in")]
    input: PathBuf,
    /// Emit the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// PNG whose encoded latent becomes the denoiser target
    /// [default: built-in horizontal gradient at the base latent dims]
    #[arg(long)]
    target: Option<PathBuf>,
    /// Final image PNG
    #[arg(long)]
    out: PathBuf,
    /// Write the per-stage trace to this file
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the trace as JSON instead of flat key/value text
    #[arg(long)]
    json: bool,
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
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(match err.kind() {
                ErrorKind::InvalidInput => 1u8,
                ErrorKind::Io => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Sample(args) => cmd_sample(args),
        Cmd::Decode(args) => cmd_decode(args),
        Cmd::E2c(args) => cmd_e2c(args),
        Cmd::C2e(args) => cmd_c2e(args),
        Cmd::Condition(args) => cmd_condition(args),
        Cmd::Seamcheck(args) => cmd_seamcheck(args),
        Cmd::Pipeline(args) => cmd_pipeline(args),
    }
}

/// Encodes a target PNG through the toy codec, or falls back to the built-in
/// wrap-discontinuous gradient.
fn load_target(path: Option<&Path>, height: usize, width: usize) -> Result<LatentGrid, Error> {
    match path {
        Some(path) => ToyCodec.encode(&read_image(path)?),
        None => Ok(gradient_target(3, height, width)),
    }
}

fn pick_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (u64::from(std::process::id()) << 32)
}

fn cmd_sample(args: SampleArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or_else(pick_seed);
    let blend = if args.no_blend {
        None
    } else {
        let overlap = args
            .overlap
            .unwrap_or_else(|| BlendSpec::default_overlap(args.width));
        Some(BlendSpec::new(overlap, args.ramp)?)
    };
    let target = load_target(args.target.as_deref(), args.height, args.width)?;
    let denoiser = ConstantTargetDenoiser::new(target);
    let cfg = SamplerConfig::new(make_schedule(args.steps)?, seed).with_blend(blend);
    let latent = sample(&denoiser, &cfg, (3, args.height, args.width), None)?;
    let bytes = write_latent_file(&latent, &args.out)?;
    println!("channels 3");
    println!("height {}", args.height);
    println!("width {}", args.width);
    match blend {
        Some(spec) => {
            println!("blend on");
            println!("overlap {}", spec.overlap);
            println!("ramp {}", spec.ramp);
        }
        None => println!("blend off"),
    }
    println!("seed {seed}");
    println!("wrote {} ({bytes} bytes)", args.out.display());
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<(), Error> {
    let latent = read_latent_file(&args.latent)?;
    let width = latent.width();
    let tile_width = args.tile.unwrap_or_else(|| width.min(64));
    let tile_overlap = args
        .tile_overlap
        .unwrap_or_else(|| (tile_width / 4).clamp(1, 8));
    let wrap = !args.no_wrap;
    let tiles = TileSpec::new(tile_width, tile_overlap, wrap)?;
    let overlap = args
        .overlap
        .unwrap_or_else(|| BlendSpec::default_overlap(width).min(tile_overlap));
    let blend = BlendSpec::new(overlap, args.ramp)?;
    let img = tiled_decode(&latent, &ToyCodec, &tiles, &blend)?;
    write_image(&img, &args.out)?;
    println!("height {}", img.height());
    println!("width {}", img.width());
    println!("wrap {}", if wrap { "on" } else { "off" });
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_e2c(args: E2cArgs) -> Result<(), Error> {
    let pano = read_image(&args.input)?;
    let faces = equirect_to_cubemap(&pano, args.face)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    for face in Face::ALL {
        let path = args.out.join(format!("{}.png", face.name()));
        write_image(faces.face(face), &path)?;
    }
    println!("face_size {}", args.face);
    println!("wrote 6 faces to {}", args.out.display());
    Ok(())
}

fn cmd_c2e(args: C2eArgs) -> Result<(), Error> {
    let faces = Face::ALL.map(|face| read_image(args.input.join(format!("{}.png", face.name()))));
    let [front, right, back, left, up, down] = faces;
    let faces = CubemapFaces::new([front?, right?, back?, left?, up?, down?])?;
    let pano = cubemap_to_equirect(&faces, args.height)?;
    write_image(&pano, &args.out)?;
    println!("height {}", pano.height());
    println!("width {}", pano.width());
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_condition(args: ConditionArgs) -> Result<(), Error> {
    let perspective = read_image(&args.input)?;
    let condition = center_cube_condition(&perspective, args.height)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    write_image(&condition.c_map, args.out.join("c.png"))?;
    write_image(&condition.mask.to_image(), args.out.join("m.png"))?;
    println!("height {}", condition.c_map.height());
    println!("width {}", condition.c_map.width());
    println!("known_fraction {:.9}", condition.mask.known_fraction());
    println!("wrote c.png and m.png to {}", args.out.display());
    Ok(())
}

fn cmd_seamcheck(args: SeamcheckArgs) -> Result<(), Error> {
    let img = read_image(&args.input)?;
    let report = seam_report(&img)?;
    if args.json {
        let json = serde_json::json!({
            "seam_mad": report.seam_mad,
            "interior_median": report.interior_median,
            "ratio": report.ratio,
        });
        println!("{json}");
    } else {
        println!("seam_mad {:.9}", report.seam_mad);
        println!("interior_median {:.9}", report.interior_median);
        println!("ratio {:.9}", report.ratio);
    }
    Ok(())
}

fn trace_json(trace: &StageTrace) -> String {
    let stages: Vec<serde_json::Value> = trace
        .stages
        .iter()
        .map(|s| {
            serde_json::json!({
                "kind": s.kind,
                "width": s.width,
                "height": s.height,
                "seam_ratio": s.seam_ratio,
                "wall_ms": s.wall_ms,
            })
        })
        .collect();
    serde_json::Value::Array(stages).to_string()
}

fn cmd_pipeline(args: PipelineArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::io(format!("reading {}", args.config.display()), e))?;
    let cfg = parse_config(&text)?;
    let (base_h, base_w) = cfg
        .stages
        .iter()
        .find_map(|s| match *s {
            Stage::Base {
                latent_height,
                latent_width,
                ..
            } => Some((latent_height, latent_width)),
            _ => None,
        })
        .expect("validated config has a base stage");
    let target = load_target(args.target.as_deref(), base_h, base_w)?;
    let denoiser = ConstantTargetDenoiser::new(target);
    let (image, trace) = run_pipeline(&cfg, &denoiser, &ToyCodec)?;
    write_image(&image, &args.out)?;
    for (i, s) in trace.stages.iter().enumerate() {
        println!(
            "stage {i} {} {}x{} seam_ratio {:.9}",
            s.kind, s.width, s.height, s.seam_ratio
        );
    }
    println!("wrote {}", args.out.display());
    if let Some(path) = &args.trace {
        let rendered = if args.json {
            trace_json(&trace)
        } else {
            trace.to_text()
        };
        std::fs::write(path, rendered)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        println!("trace {}", path.display());
    }
    Ok(())
}
