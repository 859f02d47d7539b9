//! Flag handling and exit-code behavior of the binary.

use std::path::PathBuf;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_panoloop");

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("panoloop-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("spawn");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn help_exits_zero_for_every_command() {
    for cmd in [
        "sample",
        "decode",
        "e2c",
        "c2e",
        "condition",
        "seamcheck",
        "pipeline",
    ] {
        let (code, stdout, _) = run(&[cmd, "--help"]);
        assert_eq!(code, 0, "{cmd} --help");
        assert!(stdout.contains("--"), "{cmd} --help should document flags");
    }
    let (code, _, _) = run(&["--help"]);
    assert_eq!(code, 0);
}

#[test]
fn unknown_flags_exit_one() {
    let (code, _, _) = run(&["sample", "--does-not-exist"]);
    assert_eq!(code, 1);
    let (code, _, _) = run(&["not-a-command"]);
    assert_eq!(code, 1);
}

#[test]
fn zero_overlap_exits_one() {
    let dir = workdir("overlap");
    let out = dir.join("x.ltg");
    let (code, _, stderr) = run(&[
        "sample",
        "--width",
        "32",
        "--height",
        "16",
        "--seed",
        "1",
        "--overlap",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "stderr: {stderr}");
    assert!(!out.exists());
}

#[test]
fn oversized_overlap_exits_one() {
    let dir = workdir("overlap-big");
    let (code, _, _) = run(&[
        "sample",
        "--width",
        "32",
        "--height",
        "16",
        "--seed",
        "1",
        "--overlap",
        "9",
        "--out",
        dir.join("x.ltg").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn sample_without_seed_prints_one() {
    let dir = workdir("unseeded");
    let (code, stdout, _) = run(&[
        "sample",
        "--width",
        "16",
        "--height",
        "8",
        "--steps",
        "2",
        "--out",
        dir.join("x.ltg").to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(
        stdout.lines().any(|l| l.starts_with("seed ")),
        "unseeded run must print its seed:\n{stdout}"
    );
}

#[test]
fn seamcheck_missing_file_exits_two() {
    let (code, _, _) = run(&["seamcheck", "--in", "/nonexistent/p.png"]);
    assert_eq!(code, 2);
}

#[test]
fn nonsquare_condition_exits_one_with_message() {
    let dir = workdir("condition");
    // 16x32 is not square.
    let img = panoloop::PixelImage::constant(16, 32, [0.5; 3]);
    let input = dir.join("wide.png");
    panoloop::grid::write_image(&img, &input).unwrap();
    let (code, _, stderr) = run(&[
        "condition",
        "--in",
        input.to_str().unwrap(),
        "--height",
        "32",
        "--out",
        dir.join("cond").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("squared"), "stderr: {stderr}");
}

#[test]
fn malformed_pipeline_config_exits_one_listing_violations() {
    let dir = workdir("pipeline-bad");
    let cfg = dir.join("bad.toml");
    std::fs::write(
        &cfg,
        "[[stage]]\nkind = \"refine\"\nstrength = 2.0\n\n[[stage]]\nkind = \"upscale\"\nfactor = 1\n",
    )
    .unwrap();
    let (code, _, stderr) = run(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("x.png").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    for needle in ["missing base stage", "strength", "factor"] {
        assert!(stderr.contains(needle), "stderr lacks {needle:?}: {stderr}");
    }
}

#[test]
fn pipeline_writes_image_and_trace() {
    let dir = workdir("pipeline-ok");
    let cfg = dir.join("cfg.toml");
    std::fs::write(
        &cfg,
        "[[stage]]\nkind = \"base\"\nlatent_height = 8\nlatent_width = 16\nsteps = 4\nseed = 3\n",
    )
    .unwrap();
    let out = dir.join("out.png");
    let trace = dir.join("trace.json");
    let (code, stdout, stderr) = run(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("stage 0 base 128x64"), "{stdout}");
    let img = panoloop::grid::read_image(&out).unwrap();
    assert_eq!((img.height(), img.width()), (64, 128));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 1);
    assert_eq!(parsed[0]["kind"], "base");
}

#[test]
fn seamcheck_json_has_the_contract_keys() {
    let dir = workdir("seamcheck");
    let img = panoloop::PixelImage::constant(8, 16, [0.25; 3]);
    let input = dir.join("flat.png");
    panoloop::grid::write_image(&img, &input).unwrap();
    let (code, stdout, _) = run(&["seamcheck", "--in", input.to_str().unwrap(), "--json"]);
    assert_eq!(code, 0);
    let parsed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    for key in ["seam_mad", "interior_median", "ratio"] {
        assert!(parsed.get(key).is_some(), "missing {key}");
    }
    assert_eq!(parsed["ratio"], 1.0);

    let (code, stdout, _) = run(&["seamcheck", "--in", input.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("ratio 1.000000000"), "{stdout}");
}

#[test]
fn gradient_seamcheck_matches_hand_arithmetic() {
    let dir = workdir("gradient");
    // Width 1024 ramp: interior MAD 1/1023, seam MAD ~1, ratio ~1023. A
    // straight ramp would quantize to flat runs in the 8-bit PNG, so each row
    // is offset by a sub-step dither that preserves the column statistics.
    // One byte step spans 1024/255 ~ 4.016 columns; sweeping the row offset
    // across exactly that span walks every column through the full rounding
    // phase, so each column pair increments in ~25% of the rows.
    let img = panoloop::PixelImage::from_fn(256, 1024, |y, x| {
        let d = y as f32 / 256.0 * (1024.0 / 255.0);
        [((x as f32 + d) / 1024.0).min(1.0); 3]
    });
    let input = dir.join("ramp.png");
    panoloop::grid::write_image(&img, &input).unwrap();
    let (code, stdout, _) = run(&["seamcheck", "--in", input.to_str().unwrap(), "--json"]);
    assert_eq!(code, 0);
    let parsed: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    let ratio = parsed["ratio"].as_f64().unwrap();
    assert!((ratio - 1023.0).abs() < 100.0, "ratio {ratio}");
}

#[test]
fn e2c_then_c2e_round_trip_psnr() {
    let dir = workdir("roundtrip");
    let pano = panoloop::PixelImage::from_fn(128, 256, |y, x| {
        let u = x as f64 / 256.0 * std::f64::consts::TAU;
        let v = y as f64 / 128.0 * std::f64::consts::PI;
        [
            (0.5 + 0.3 * (2.0 * u).sin() * v.sin()) as f32,
            (0.5 + 0.25 * u.cos() * (2.0 * v).cos()) as f32,
            (0.5 + 0.2 * (3.0 * u).cos() * v.sin()) as f32,
        ]
    });
    let input = dir.join("pano.png");
    panoloop::grid::write_image(&pano, &input).unwrap();
    let faces = dir.join("faces");
    let (code, _, stderr) = run(&[
        "e2c",
        "--in",
        input.to_str().unwrap(),
        "--face",
        "128",
        "--out",
        faces.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let back = dir.join("back.png");
    let (code, _, stderr) = run(&[
        "c2e",
        "--in",
        faces.to_str().unwrap(),
        "--height",
        "128",
        "--out",
        back.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let a = panoloop::grid::read_image(&input).unwrap();
    let b = panoloop::grid::read_image(&back).unwrap();
    let db = panoloop::metrics::psnr(&a, &b).unwrap();
    assert!(db >= 30.0, "file round trip PSNR {db} dB");
}

#[test]
fn e2c_constant_panorama_gives_constant_faces() {
    let dir = workdir("e2c-const");
    let pano = panoloop::PixelImage::constant(32, 64, [0.5; 3]);
    let input = dir.join("pano.png");
    panoloop::grid::write_image(&pano, &input).unwrap();
    let faces_dir = dir.join("faces");
    let (code, _, stderr) = run(&[
        "e2c",
        "--in",
        input.to_str().unwrap(),
        "--face",
        "16",
        "--out",
        faces_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    for name in ["front", "right", "back", "left", "up", "down"] {
        let face = panoloop::grid::read_image(faces_dir.join(format!("{name}.png"))).unwrap();
        assert_eq!((face.height(), face.width()), (16, 16));
        let mid = 128.0 / 255.0;
        assert!(face
            .pixels()
            .iter()
            .flatten()
            .all(|&v| (v - mid).abs() < 1e-6));
    }
}
