//! Multi-stage generation: one base sampling stage followed by any number of
//! diffusion refine and classical upscale stages, every stage wrap-aware.
//!
//! Configs are TOML documents. A minimal one holds a single base stage:
//!
//! ```toml
//! [[stage]]
//! kind = "base"
//! latent_height = 16
//! latent_width = 32
//! steps = 50
//! seed = 7
//! ```
//!
//! The full schema adds refine and upscale stages plus global blending knobs:
//!
//! ```toml
//! denoise_blend = true        # blend inside the sampling loop
//! decode_blend = true         # blend inside the tiled decoder
//!
//! [blend]
//! overlap = 8                 # default: latent_width / 8, at least 1
//! ramp = "cosine"             # "linear" (default) or "cosine"
//!
//! [decode_tiles]
//! tile_width = 16             # default: min(64, latent_width)
//! tile_overlap = 8            # default: min(8, tile_width / 4), at least 1
//!
//! [[stage]]
//! kind = "refine"
//! strength = 0.5              # in (0, 1)
//! steps = 20
//! scale_before = 2            # optional integer upscale before re-encoding
//!
//! [[stage]]
//! kind = "upscale"
//! factor = 2                  # >= 2
//! filter = "lanczos3"         # "bilinear" (default) or "lanczos3"
//! ```
//!
//! Unknown keys are rejected. Validation reports every violation at once.

use std::time::Instant;

use serde::Deserialize;

use crate::blend::{BlendSpec, RampKind};
use crate::codec::{tiled_decode, Codec, TileSpec};
use crate::error::{Error, Result};
use crate::grid::PixelImage;
use crate::metrics::seam_report;
use crate::resample::{upscale_wrap, FilterKind};
use crate::sampler::{make_schedule, sample, Denoiser, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Base {
        latent_height: usize,
        latent_width: usize,
        steps: usize,
        seed: u64,
    },
    Refine {
        strength: f64,
        steps: usize,
        scale_before: Option<usize>,
    },
    Upscale {
        factor: usize,
        filter: FilterKind,
    },
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::Base { .. } => "base",
            Stage::Refine { .. } => "refine",
            Stage::Upscale { .. } => "upscale",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub blend: BlendSpec,
    pub decode_tiles: TileSpec,
    pub denoise_blend: bool,
    pub decode_blend: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub kind: &'static str,
    pub width: usize,
    pub height: usize,
    pub seam_ratio: f64,
    pub wall_ms: f64,
}

/// One record per executed stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTrace {
    pub stages: Vec<StageRecord>,
}

impl StageTrace {
    /// Flat key/value rendering, one `stageN.field value` line per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("stages {}\n", self.stages.len()));
        for (i, s) in self.stages.iter().enumerate() {
            out.push_str(&format!("stage{i}.kind {}\n", s.kind));
            out.push_str(&format!("stage{i}.width {}\n", s.width));
            out.push_str(&format!("stage{i}.height {}\n", s.height));
            out.push_str(&format!("stage{i}.seam_ratio {:.9}\n", s.seam_ratio));
            out.push_str(&format!("stage{i}.wall_ms {:.3}\n", s.wall_ms));
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    denoise_blend: Option<bool>,
    decode_blend: Option<bool>,
    blend: Option<RawBlend>,
    decode_tiles: Option<RawTiles>,
    #[serde(default, rename = "stage")]
    stages: Vec<RawStage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlend {
    overlap: Option<usize>,
    ramp: Option<RampKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiles {
    tile_width: Option<usize>,
    tile_overlap: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    kind: String,
    latent_height: Option<usize>,
    latent_width: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    strength: Option<f64>,
    scale_before: Option<usize>,
    factor: Option<usize>,
    filter: Option<FilterKind>,
}

struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.0.join("; ")))
        }
    }
}

fn reject_unused(errs: &mut Violations, stage: usize, kind: &str, unused: &[(&str, bool)]) {
    for (name, present) in unused {
        if *present {
            errs.push(format!(
                "stage {stage}: key \"{name}\" is not valid for a {kind} stage"
            ));
        }
    }
}

/// Parses and validates a pipeline config document, reporting every
/// violation found rather than stopping at the first.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut errs = Violations(Vec::new());

    let mut stages = Vec::new();
    let mut base_dims: Option<(usize, usize)> = None;
    for (i, s) in raw.stages.iter().enumerate() {
        match s.kind.as_str() {
            "base" => {
                if i != 0 {
                    errs.push(format!("stage {i}: first stage must be base"));
                }
                reject_unused(
                    &mut errs,
                    i,
                    "base",
                    &[
                        ("strength", s.strength.is_some()),
                        ("scale_before", s.scale_before.is_some()),
                        ("factor", s.factor.is_some()),
                        ("filter", s.filter.is_some()),
                    ],
                );
                let h = s.latent_height.unwrap_or(0);
                let w = s.latent_width.unwrap_or(0);
                if s.latent_height.is_none() || s.latent_width.is_none() {
                    errs.push(format!(
                        "stage {i}: base needs latent_height and latent_width"
                    ));
                } else if h == 0 || w == 0 {
                    errs.push(format!("stage {i}: latent dimensions must be positive"));
                }
                let steps = s.steps.unwrap_or(50);
                if steps == 0 {
                    errs.push(format!("stage {i}: steps must be positive"));
                }
                if base_dims.is_none() && h > 0 && w > 0 {
                    base_dims = Some((h, w));
                }
                stages.push(Stage::Base {
                    latent_height: h,
                    latent_width: w,
                    steps,
                    seed: s.seed.unwrap_or(0),
                });
            }
            "refine" => {
                reject_unused(
                    &mut errs,
                    i,
                    "refine",
                    &[
                        ("latent_height", s.latent_height.is_some()),
                        ("latent_width", s.latent_width.is_some()),
                        ("seed", s.seed.is_some()),
                        ("factor", s.factor.is_some()),
                        ("filter", s.filter.is_some()),
                    ],
                );
                let strength = s.strength.unwrap_or(f64::NAN);
                if s.strength.is_none() {
                    errs.push(format!("stage {i}: refine needs strength"));
                } else if !(strength > 0.0 && strength < 1.0) {
                    errs.push(format!("stage {i}: strength {strength} outside (0, 1)"));
                }
                let steps = s.steps.unwrap_or(20);
                if steps == 0 {
                    errs.push(format!("stage {i}: steps must be positive"));
                }
                if let Some(f) = s.scale_before {
                    if f < 2 {
                        errs.push(format!("stage {i}: scale_before {f} must be >= 2"));
                    }
                }
                stages.push(Stage::Refine {
                    strength,
                    steps,
                    scale_before: s.scale_before,
                });
            }
            "upscale" => {
                reject_unused(
                    &mut errs,
                    i,
                    "upscale",
                    &[
                        ("latent_height", s.latent_height.is_some()),
                        ("latent_width", s.latent_width.is_some()),
                        ("steps", s.steps.is_some()),
                        ("seed", s.seed.is_some()),
                        ("strength", s.strength.is_some()),
                        ("scale_before", s.scale_before.is_some()),
                    ],
                );
                let factor = s.factor.unwrap_or(0);
                if s.factor.is_none() {
                    errs.push(format!("stage {i}: upscale needs factor"));
                } else if factor < 2 {
                    errs.push(format!("stage {i}: factor {factor} must be >= 2"));
                }
                stages.push(Stage::Upscale {
                    factor,
                    filter: s.filter.unwrap_or(FilterKind::Bilinear),
                });
            }
            other => errs.push(format!("stage {i}: unknown kind {other:?}")),
        }
    }

    let base_count = stages.iter().filter(|s| s.kind() == "base").count();
    if base_count == 0 {
        errs.push("missing base stage".to_string());
    } else if base_count > 1 {
        errs.push("at most one base stage allowed".to_string());
    }

    let (_, base_w) = base_dims.unwrap_or((16, 32));
    let blend_overlap = raw
        .blend
        .as_ref()
        .and_then(|b| b.overlap)
        .unwrap_or_else(|| BlendSpec::default_overlap(base_w));
    let ramp = raw
        .blend
        .as_ref()
        .and_then(|b| b.ramp)
        .unwrap_or(RampKind::Linear);
    if blend_overlap == 0 || blend_overlap > base_w / 4 {
        errs.push(format!(
            "blend overlap {blend_overlap} invalid for latent width {base_w} (must be in [1, {}])",
            base_w / 4
        ));
    }

    let tile_width = raw
        .decode_tiles
        .as_ref()
        .and_then(|t| t.tile_width)
        .unwrap_or_else(|| base_w.min(64));
    let tile_overlap = raw
        .decode_tiles
        .as_ref()
        .and_then(|t| t.tile_overlap)
        .unwrap_or_else(|| (tile_width / 4).clamp(1, 8));
    if tile_overlap == 0 || tile_overlap >= tile_width {
        errs.push(format!(
            "tile overlap {tile_overlap} must satisfy 0 < overlap < tile width {tile_width}"
        ));
    }
    if tile_width > base_w {
        errs.push(format!(
            "tile width {tile_width} exceeds base latent width {base_w}"
        ));
    }
    let decode_blend = raw.decode_blend.unwrap_or(true);
    if decode_blend && blend_overlap > tile_overlap {
        errs.push(format!(
            "blend overlap {blend_overlap} exceeds tile overlap {tile_overlap}, \
             required when decode_blend is on"
        ));
    }

    errs.into_result()?;

    Ok(PipelineConfig {
        stages,
        blend: BlendSpec {
            overlap: blend_overlap,
            ramp,
            epsilon: crate::blend::DEFAULT_EPSILON,
        },
        decode_tiles: TileSpec {
            tile_width,
            tile_overlap,
            wrap: decode_blend,
        },
        denoise_blend: raw.denoise_blend.unwrap_or(true),
        decode_blend,
    })
}

/// Runs every stage in order and returns the final image plus the trace.
///
/// - base: sample a fresh latent at the configured dimensions, then
///   tile-decode it.
/// - refine: optionally upscale the current image, re-encode it through the
///   codec, resample from that latent at the configured strength, then
///   tile-decode. Refine noise is seeded from the base seed plus the stage
///   index so the whole run stays reproducible from one seed.
/// - upscale: wrap-aware separable resize of the current image.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn Codec,
) -> Result<(PixelImage, StageTrace)> {
    if cfg.stages.first().map(Stage::kind) != Some("base") {
        return Err(Error::Config("first stage must be base".to_string()));
    }
    let base_seed = match cfg.stages[0] {
        Stage::Base { seed, .. } => seed,
        _ => unreachable!(),
    };
    let denoise_blend = cfg.denoise_blend.then_some(cfg.blend);
    let mut expected_dims: Option<(usize, usize)> = None;
    let mut current: Option<PixelImage> = None;
    let mut trace = StageTrace::default();

    for (index, stage) in cfg.stages.iter().enumerate() {
        let started = Instant::now();
        let img = match *stage {
            Stage::Base {
                latent_height,
                latent_width,
                steps,
                seed,
            } => (|| {
                let schedule = make_schedule(steps)?;
                let scfg = SamplerConfig::new(schedule, seed).with_blend(denoise_blend);
                let latent = sample(denoiser, &scfg, (3, latent_height, latent_width), None)?;
                expected_dims = Some((latent_height * codec.scale(), latent_width * codec.scale()));
                tiled_decode(&latent, codec, &cfg.decode_tiles, &cfg.blend)
            })(),
            Stage::Refine {
                strength,
                steps,
                scale_before,
            } => (|| {
                let mut img = current.take().expect("base stage ran first");
                if let Some(factor) = scale_before {
                    img = upscale_wrap(&img, factor, FilterKind::Bilinear)?;
                    expected_dims = expected_dims.map(|(h, w)| (h * factor, w * factor));
                }
                let init = codec.encode(&img)?;
                let schedule = make_schedule(steps)?;
                let scfg = SamplerConfig::new(schedule, base_seed.wrapping_add(index as u64))
                    .with_blend(denoise_blend)
                    .with_init_strength(strength);
                let latent = sample(denoiser, &scfg, init.shape(), Some(&init))?;
                tiled_decode(&latent, codec, &cfg.decode_tiles, &cfg.blend)
            })(),
            Stage::Upscale { factor, filter } => {
                let img = current.take().expect("base stage ran first");
                expected_dims = expected_dims.map(|(h, w)| (h * factor, w * factor));
                upscale_wrap(&img, factor, filter)
            }
        }
        .map_err(|e| Error::in_stage(index, stage.kind(), e))?;

        if let Some((eh, ew)) = expected_dims {
            if (img.height(), img.width()) != (eh, ew) {
                return Err(Error::Contract(format!(
                    "stage {index} produced {}x{}, dimension algebra expects {eh}x{ew}",
                    img.height(),
                    img.width()
                )));
            }
        }
        let ratio = seam_report(&img)
            .map_err(|e| Error::in_stage(index, stage.kind(), e))?
            .ratio;
        trace.stages.push(StageRecord {
            kind: stage.kind(),
            width: img.width(),
            height: img.height(),
            seam_ratio: ratio,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        current = Some(img);
    }

    Ok((current.expect("at least the base stage ran"), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ToyCodec;
    use crate::sampler::{gradient_target, ConstantTargetDenoiser};

    const TOY_CONFIG: &str = r#"
denoise_blend = true
decode_blend = true

[blend]
overlap = 8
ramp = "cosine"

[decode_tiles]
tile_width = 16
tile_overlap = 8

[[stage]]
kind = "base"
latent_height = 16
latent_width = 32
steps = 50
seed = 7

[[stage]]
kind = "refine"
strength = 0.5
steps = 20

[[stage]]
kind = "upscale"
factor = 2
filter = "lanczos3"
"#;

    fn toy_denoiser() -> ConstantTargetDenoiser {
        ConstantTargetDenoiser::new(gradient_target(3, 16, 32))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg =
            parse_config("[[stage]]\nkind = \"base\"\nlatent_height = 16\nlatent_width = 32\n")
                .unwrap();
        assert_eq!(cfg.stages.len(), 1);
        assert_eq!(cfg.blend.overlap, 4);
        assert_eq!(cfg.blend.ramp, RampKind::Linear);
        assert_eq!(cfg.decode_tiles.tile_width, 32);
        assert_eq!(cfg.decode_tiles.tile_overlap, 8);
        assert!(cfg.denoise_blend && cfg.decode_blend);
    }

    #[test]
    fn refine_before_base_rejected() {
        let err = parse_config(
            "[[stage]]\nkind = \"refine\"\nstrength = 0.5\n\n\
             [[stage]]\nkind = \"base\"\nlatent_height = 16\nlatent_width = 32\n",
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("first stage must be base"),
            "{err}"
        );
    }

    #[test]
    fn out_of_range_strength_rejected() {
        let err = parse_config(
            "[[stage]]\nkind = \"base\"\nlatent_height = 16\nlatent_width = 32\n\n\
             [[stage]]\nkind = \"refine\"\nstrength = 1.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside (0, 1)"), "{err}");
    }

    #[test]
    fn missing_base_rejected() {
        let err = parse_config("[[stage]]\nkind = \"upscale\"\nfactor = 2\n").unwrap_err();
        assert!(err.to_string().contains("missing base stage"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("unknown_top = 1\n").is_err());
        let err = parse_config(
            "[[stage]]\nkind = \"base\"\nlatent_height = 16\nlatent_width = 32\nfactor = 2\n",
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("not valid for a base stage"),
            "{err}"
        );
    }

    #[test]
    fn violations_are_all_reported() {
        let err = parse_config(
            "[[stage]]\nkind = \"upscale\"\nfactor = 1\n\n\
             [[stage]]\nkind = \"refine\"\nstrength = 2.0\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("factor 1"), "{msg}");
        assert!(msg.contains("strength 2"), "{msg}");
        assert!(msg.contains("missing base stage"), "{msg}");
    }

    #[test]
    fn dimension_algebra() {
        let (img, trace) = run_pipeline(
            &parse_config(TOY_CONFIG).unwrap(),
            &toy_denoiser(),
            &ToyCodec,
        )
        .unwrap();
        assert_eq!((img.height(), img.width()), (256, 512));
        assert_eq!(trace.stages.len(), 3);
        assert_eq!((trace.stages[0].width, trace.stages[0].height), (256, 128));
        assert_eq!((trace.stages[2].width, trace.stages[2].height), (512, 256));
    }

    #[test]
    fn full_run_seals_the_seam_and_ablation_is_ordered() {
        let cfg_on = parse_config(TOY_CONFIG).unwrap();
        let mut cfg_decode_only = cfg_on.clone();
        cfg_decode_only.denoise_blend = false;
        let mut cfg_off = cfg_on.clone();
        cfg_off.denoise_blend = false;
        cfg_off.decode_blend = false;
        cfg_off.decode_tiles.wrap = false;

        let denoiser = toy_denoiser();
        let ratio = |cfg: &PipelineConfig| {
            let (img, _) = run_pipeline(cfg, &denoiser, &ToyCodec).unwrap();
            seam_report(&img).unwrap().ratio
        };
        let on = ratio(&cfg_on);
        let decode_only = ratio(&cfg_decode_only);
        let off = ratio(&cfg_off);
        assert!(on <= 1.5, "both on: {on}");
        assert!(off >= 10.0, "both off: {off}");
        assert!(
            on <= decode_only && decode_only <= off,
            "ablation ordering violated: {on} <= {decode_only} <= {off}"
        );
    }

    #[test]
    fn identical_config_is_bit_deterministic() {
        let cfg = parse_config(TOY_CONFIG).unwrap();
        let denoiser = toy_denoiser();
        let (a, _) = run_pipeline(&cfg, &denoiser, &ToyCodec).unwrap();
        let (b, _) = run_pipeline(&cfg, &denoiser, &ToyCodec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refine_scale_before_changes_dims() {
        let cfg = parse_config(
            "[blend]\noverlap = 4\nramp = \"cosine\"\n\n\
             [decode_tiles]\ntile_width = 16\ntile_overlap = 4\n\n\
             [[stage]]\nkind = \"base\"\nlatent_height = 8\nlatent_width = 16\nsteps = 5\nseed = 1\n\n\
             [[stage]]\nkind = \"refine\"\nstrength = 0.4\nsteps = 5\nscale_before = 2\n",
        )
        .unwrap();
        let denoiser = ConstantTargetDenoiser::new(gradient_target(3, 8, 16));
        let (img, trace) = run_pipeline(&cfg, &denoiser, &ToyCodec).unwrap();
        assert_eq!((img.height(), img.width()), (128, 256));
        assert_eq!(trace.stages[1].kind, "refine");
    }

    #[test]
    fn stage_errors_carry_the_stage_index() {
        // parse_config would reject this tile spec, so build the config
        // directly to force a runtime failure inside stage 0.
        let mut cfg = parse_config(TOY_CONFIG).unwrap();
        cfg.decode_tiles.tile_width = 64;
        let err = run_pipeline(&cfg, &toy_denoiser(), &ToyCodec).unwrap_err();
        match err {
            Error::Stage {
                index, ref kind, ..
            } => {
                assert_eq!(index, 0);
                assert_eq!(kind, "base");
            }
            other => panic!("expected stage error, got {other}"),
        }
        assert!(err.to_string().starts_with("stage 0 (base)"));
    }

    #[test]
    fn trace_text_is_flat_key_value() {
        let trace = StageTrace {
            stages: vec![StageRecord {
                kind: "base",
                width: 256,
                height: 128,
                seam_ratio: 1.25,
                wall_ms: 10.0,
            }],
        };
        let text = trace.to_text();
        assert!(text.starts_with("stages 1\n"));
        assert!(text.contains("stage0.kind base\n"));
        assert!(text.contains("stage0.seam_ratio 1.250000000\n"));
    }
}
