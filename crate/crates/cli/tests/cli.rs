use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wct2::pipeline::{save_png, ImageBuffer};
use wct2::{random_weights, weights, UnpoolMode};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        weights::save(&random_weights(UnpoolMode::Concat, 1), ws.path("concat.wts")).unwrap();
        weights::save(&random_weights(UnpoolMode::Sum, 2), ws.path("sum.wts")).unwrap();
        ws.image("content.png", 3, 40, 32);
        ws.image("style.png", 4, 32, 48);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn image(&self, name: &str, seed: u64, w: usize, h: usize) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let img = ImageBuffer::new(w, h, (0..w * h * 3).map(|_| r.gen()).collect()).unwrap();
        save_png(&img, self.path(name)).unwrap();
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn wct2(args: &[&str]) -> Output {
    wct2_env(args, None)
}

fn wct2_env(args: &[&str], weights: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wct2"));
    cmd.args(args).env_remove("WCT2_WEIGHTS");
    if let Some(w) = weights {
        cmd.env("WCT2_WEIGHTS", w);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_style_is_reported() {
    let ws = Workspace::new();
    let o = wct2(&[
        "stylize",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("nope.png"),
        "--output",
        &ws.arg("out.png"),
        "--weights",
        &ws.arg("concat.wts"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("style image not found"), "{}", stderr(&o));
    assert!(!ws.path("out.png").exists());
}

#[test]
fn stylize_writes_png_and_report() {
    let ws = Workspace::new();
    let o = wct2_env(
        &[
            "stylize",
            "--content",
            &ws.arg("content.png"),
            "--style",
            &ws.arg("style.png"),
            "--output",
            &ws.arg("out.png"),
            "--report",
        ],
        Some(&ws.path("concat.wts")),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = image::open(ws.path("out.png")).unwrap();
    assert_eq!((out.width(), out.height()), (40, 32));
    let text = stdout(&o);
    assert!(text.contains("ssim_edges="));
    assert!(text.contains("style_loss.encoder.conv1_1="));
}

#[test]
fn sum_decoder_with_every_option() {
    let ws = Workspace::new();
    ws.image("seg_c.png", 5, 40, 32);
    ws.image("seg_s.png", 6, 32, 48);
    let o = wct2(&[
        "stylize",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("out.png"),
        "--weights",
        &ws.arg("sum.wts"),
        "--unpool",
        "sum",
        "--pooling",
        "max",
        "--transform",
        "adain",
        "--alpha",
        "0.6",
        "--skip-wct",
        "--decoder-wct",
        "--multi-level",
        "--max-side",
        "24",
        "--content-seg",
        &ws.arg("seg_c.png"),
        "--style-seg",
        &ws.arg("seg_s.png"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = image::open(ws.path("out.png")).unwrap();
    assert_eq!((out.width(), out.height()), (24, 19));
}

#[test]
fn invalid_combinations_exit_2_before_touching_files() {
    let cases: &[&[&str]] = &[
        &["--pooling", "max"],
        &["--pooling", "average", "--unpool", "concat"],
        &["--alpha", "1.5"],
        &["--alpha", "-0.5"],
        &["--max-side", "0"],
        &["--transform", "gatys"],
        &["--unpool", "stack"],
        &["--content-seg", "/nonexistent/seg.png"],
    ];
    for extra in cases {
        let mut args = vec![
            "stylize",
            "--content",
            "/nonexistent/c.png",
            "--style",
            "/nonexistent/s.png",
            "--output",
            "/nonexistent/o.png",
            "--weights",
            "/nonexistent/w.wts",
        ];
        args.extend_from_slice(extra);
        let o = wct2(&args);
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
        assert!(!stderr(&o).contains("not found"), "{extra:?} opened a file");
    }
    assert_eq!(wct2(&["stylize"]).status.code(), Some(2));
    assert_eq!(wct2(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn weights_default_to_environment() {
    let ws = Workspace::new();
    let args = [
        "stylize",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("out.png"),
    ];
    assert_eq!(wct2(&args).status.code(), Some(2));
    let o = wct2_env(&args, Some(&ws.path("concat.wts")));
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn corrupt_weights_exit_1() {
    let ws = Workspace::new();
    let mut bytes = std::fs::read(ws.path("concat.wts")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xFF;
    std::fs::write(ws.path("bad.wts"), bytes).unwrap();
    let o = wct2(&[
        "stylize",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("out.png"),
        "--weights",
        &ws.arg("bad.wts"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn verify_is_reproducible_and_passes() {
    let a = wct2(&["verify", "--seed", "7"]);
    let b = wct2(&["verify", "--seed", "7"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let table = stdout(&a);
    for name in [
        "haar_perfect_reconstruction",
        "haar_parseval",
        "whitening_off_diagonal",
        "coloring_covariance",
        "adain_moments",
        "conv_oracle",
        "parameter_counts",
        "decoder_parameter_ratio",
    ] {
        assert!(table.contains(name), "missing {name}");
    }
    assert!(table.contains("0 failed"));
}

#[test]
fn verify_catches_perturbed_haar_kernels() {
    let o = wct2(&["verify", "--perturb-haar", "0.001"]);
    assert_eq!(o.status.code(), Some(1));
    let table = stdout(&o);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("haar_perfect_reconstruction")));
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("haar_parseval")));
}

#[test]
fn metrics_of_content_against_itself() {
    let ws = Workspace::new();
    let o = wct2(&[
        "metrics",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("content.png"),
        "--weights",
        &ws.arg("concat.wts"),
        "--format",
        "kv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let ssim: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("ssim_edges="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((ssim - 1.0).abs() < 1e-9);

    let same = wct2(&[
        "metrics",
        "--content",
        &ws.arg("style.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("style.png"),
        "--weights",
        &ws.arg("concat.wts"),
        "--format",
        "kv",
    ]);
    let loss: f64 = stdout(&same)
        .lines()
        .find_map(|l| l.strip_prefix("style_loss="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(loss.abs() < 1e-8);
}

#[test]
fn metrics_rejects_mismatched_output_size() {
    let ws = Workspace::new();
    let o = wct2(&[
        "metrics",
        "--content",
        &ws.arg("content.png"),
        "--style",
        &ws.arg("style.png"),
        "--output",
        &ws.arg("style.png"),
        "--weights",
        &ws.arg("concat.wts"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inspect_weights_reports_totals() {
    let ws = Workspace::new();
    let o = wct2(&["inspect-weights", "--weights", &ws.arg("concat.wts")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("tensors=36"), "{text}");
    assert!(text.contains("encoder_parameters=3505728"));
    assert!(text.contains("decoder_parameters=6601795"));
    assert!(text.contains("total_parameters=10107523"));
    assert!(text.contains("layout=concat"));
    assert!(text.contains("concat_to_sum_decoder_ratio=1.8834"));
    assert!(text.contains("decoder.conv3_4.weight"));

    let sum = wct2(&["inspect-weights", "--weights", &ws.arg("sum.wts")]);
    assert!(stdout(&sum).contains("layout=sum"));

    let missing = wct2(&["inspect-weights", "--weights", &ws.arg("none.wts")]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn identical_invocations_write_identical_files() {
    let ws = Workspace::new();
    let run = |out: &str| {
        let o = wct2(&[
            "stylize",
            "--content",
            &ws.arg("content.png"),
            "--style",
            &ws.arg("style.png"),
            "--output",
            &ws.arg(out),
            "--weights",
            &ws.arg("concat.wts"),
            "--decoder-wct",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(ws.path(out)).unwrap()
    };
    assert_eq!(run("a.png"), run("b.png"));
}
