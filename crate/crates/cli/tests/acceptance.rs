//! Acceptance suite. Each criterion prints one PASS/FAIL/SKIP line with the
//! measured value and its bound; the process exits nonzero if any criterion
//! fails.
//!
//! Run with: cargo test -p wct2-cli --test acceptance

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wct2::metrics::{edge_response, ssim, style_loss};
use wct2::pipeline::{prepare, save_png, unprepare, ImageBuffer};
use wct2::stylize::{adain, compute_stats, wct, whiten};
use wct2::wavelet::{HaarPooling, MaxPooling};
use wct2::{
    build_model, conv2d, haar_pool, haar_unpool, random_weights, weights, ConvLayer, FeatureMap, Model, PaddingMode,
    UnpoolMode,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_map(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(c, h, w, (0..c * h * w).map(|_| r.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

fn unit_map(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(c, h, w, (0..c * h * w).map(|_| r.gen_range(0.0f32..1.0)).collect()).unwrap()
}

fn correlated_map(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let base = random_map(r, c, h, w);
    let mut mix: Vec<f64> = (0..c * c).map(|_| r.gen_range(-1.0..1.0)).collect();
    // Diagonal dominance keeps the covariance well conditioned.
    for k in 0..c {
        mix[k * c + k] += c as f64;
    }
    let shift: Vec<f64> = (0..c).map(|_| r.gen_range(-3.0..3.0)).collect();
    FeatureMap::from_fn(c, h, w, |o, y, x| {
        let v: f64 = shift[o] + (0..c).map(|i| mix[o * c + i] * base.get(i, y, x) as f64).sum::<f64>();
        v as f32
    })
}

fn covariance(f: &FeatureMap) -> Vec<Vec<f64>> {
    let (c, n) = (f.channels(), f.pixels());
    let mean: Vec<f64> = (0..c)
        .map(|k| f.plane(k).iter().map(|&v| v as f64).sum::<f64>() / n as f64)
        .collect();
    (0..c)
        .map(|i| {
            (0..c)
                .map(|j| {
                    (0..n)
                        .map(|p| (f.plane(i)[p] as f64 - mean[i]) * (f.plane(j)[p] as f64 - mean[j]))
                        .sum::<f64>()
                        / (n - 1) as f64
                })
                .collect()
        })
        .collect()
}

fn moments(f: &FeatureMap) -> Vec<(f64, f64)> {
    let n = f.pixels() as f64;
    (0..f.channels())
        .map(|k| {
            let m = f.plane(k).iter().map(|&v| v as f64).sum::<f64>() / n;
            let v = f.plane(k).iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
            (m, v.sqrt())
        })
        .collect()
}

fn naive_conv(x: &FeatureMap, layer: &ConvLayer) -> Vec<f64> {
    let (cin, h, w) = (x.channels(), x.height() as i64, x.width() as i64);
    let mirror = |i: i64, n: i64| if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
    let mut out = Vec::new();
    for o in 0..layer.out_channels() {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = layer.bias()[o] as f64;
                for i in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = mirror(y + ky - 1, h) as usize;
                            let sx = mirror(xx + kx - 1, w) as usize;
                            let wt = layer.kernel()[((o * cin + i) * 3 + ky as usize) * 3 + kx as usize];
                            acc += wt as f64 * x.get(i, sy, sx) as f64;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn naive_ssim(a: &FeatureMap, b: &FeatureMap) -> f64 {
    let mut g = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2);
            *v = (-d2 / 4.5).exp();
            total += *v;
        }
    }
    let (h, w) = (a.height(), a.width());
    let mut acc = 0.0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let win = |f: &FeatureMap, i: usize, j: usize| f.get(0, y + i, x + j) as f64;
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    ma += g[i][j] / total * win(a, i, j);
                    mb += g[i][j] / total * win(b, i, j);
                }
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let (da, db) = (win(a, i, j) - ma, win(b, i, j) - mb);
                    va += g[i][j] / total * da * da;
                    vb += g[i][j] / total * db * db;
                    cab += g[i][j] / total * da * db;
                }
            }
            acc += ((2.0 * ma * mb + 1e-4) * (2.0 * cab + 9e-4)) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
        }
    }
    acc / ((h - 10) * (w - 10)) as f64
}

fn wavelet_corpus() -> Vec<FeatureMap> {
    let mut r = rng(1);
    (0..100)
        .map(|_| {
            let c = r.gen_range(1..=8);
            let h = 2 * r.gen_range(1..=32);
            let w = 2 * r.gen_range(1..=32);
            random_map(&mut r, c, h, w)
        })
        .collect()
}

fn perfect_reconstruction() -> Verdict {
    let corpus = wavelet_corpus();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for x in &corpus {
        let back = haar_unpool(&haar_pool(x).unwrap()).unwrap();
        worst = worst.max(back.max_abs_diff(x));
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-5 && elapsed < Duration::from_secs(5),
        format!("max error {worst:.3e} < 1e-5 over 100 tensors, {:.3} s < 5 s", elapsed.as_secs_f64()),
    )
}

fn tight_frame() -> Verdict {
    let mut worst = 0.0f64;
    for x in wavelet_corpus() {
        let e = x.norm_sq();
        worst = worst.max((e - haar_pool(&x).unwrap().energy()).abs() / e);
    }
    check(worst < 1e-6, format!("max relative energy difference {worst:.3e} < 1e-6"))
}

fn whitening_and_coloring() -> Verdict {
    let mut r = rng(2);
    let (mut off, mut diag, mut colour) = (0.0f64, 0.0f64, 0.0f64);
    for c in [4usize, 8, 32] {
        let content = correlated_map(&mut r, c, 8, 8 * c);
        let style = correlated_map(&mut r, c, 8, 8 * c);
        let stats = compute_stats(&content, None).unwrap();
        let cov = covariance(&whiten(&content, &stats, None).unwrap());
        for (i, row) in cov.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i == j {
                    diag = diag.max((v - 1.0).abs());
                } else {
                    off = off.max(v.abs());
                }
            }
        }
        let got = covariance(&wct(&content, &style, None, 1.0).unwrap());
        let want = covariance(&style);
        let num: f64 = got.iter().flatten().zip(want.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = want.iter().flatten().map(|b| b * b).sum();
        colour = colour.max((num / den).sqrt());
    }
    check(
        off < 1e-4 && diag < 1e-3 && colour < 1e-3,
        format!("off-diagonal {off:.3e} < 1e-4, diagonal {diag:.3e} < 1e-3, coloring {colour:.3e} < 1e-3 (C = 4, 8, 32; n = 64C)"),
    )
}

fn adain_moments() -> Verdict {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for c in [3usize, 8, 16] {
        let content = correlated_map(&mut r, c, 12, 16);
        let style = correlated_map(&mut r, c, 10, 14);
        let got = moments(&adain(&content, &style, None, 1.0).unwrap());
        for ((gm, gs), (sm, ss)) in got.iter().zip(moments(&style)) {
            worst = worst.max((gm - sm).abs()).max((gs - ss).abs());
        }
    }
    check(worst < 1e-5, format!("max mean/std error {worst:.3e} < 1e-5"))
}

fn conv_oracle() -> Verdict {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let cin = r.gen_range(1..=8);
        let cout = r.gen_range(1..=8);
        let h = r.gen_range(2..=16);
        let w = r.gen_range(2..=16);
        let bound = (6.0 / (9 * cin) as f32).sqrt();
        let layer = ConvLayer::new(
            cout,
            cin,
            (0..cout * cin * 9).map(|_| r.gen_range(-bound..bound)).collect(),
            (0..cout).map(|_| r.gen_range(-0.1..0.1)).collect(),
        )
        .unwrap();
        let x = random_map(&mut r, cin, h, w);
        let got = conv2d(&x, &layer, PaddingMode::Reflect).unwrap();
        let want = naive_conv(&x, &layer);
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    check(worst < 1e-6, format!("max error {worst:.3e} < 1e-6 over 50 instances up to 8x16x16"))
}

fn parameter_ratio() -> Verdict {
    let count = |mode| {
        build_model(&random_weights(mode, 5), mode, Arc::new(HaarPooling::default()))
            .unwrap()
            .decoder_parameter_count()
    };
    let (sum, concat) = (count(UnpoolMode::Sum), count(UnpoolMode::Concat));
    let ratio = concat as f64 / sum as f64;
    check(
        (1.75..=1.85).contains(&ratio),
        format!("concat decoder {concat} / sum decoder {sum} = {ratio:.4}, expected within [1.75, 1.85]"),
    )
}

fn metric_sanity() -> Verdict {
    let mut r = rng(6);
    let x = unit_map(&mut r, 3, 32, 32);
    let y = unit_map(&mut r, 3, 32, 32);
    let (ex, ey) = (edge_response(&x).unwrap(), edge_response(&y).unwrap());
    let self_ssim = ssim(&ex, &ex).unwrap();
    let oracle_gap = (ssim(&ex, &ey).unwrap() - naive_ssim(&ex, &ey)).abs();
    let model = build_model(
        &random_weights(UnpoolMode::Sum, 6),
        UnpoolMode::Sum,
        Arc::new(HaarPooling::default()),
    )
    .unwrap();
    let loss = style_loss(&x, &x, &model).unwrap().total;
    check(
        (self_ssim - 1.0).abs() < 1e-9 && loss.abs() < 1e-8 && oracle_gap < 1e-6,
        format!(
            "ssim(x,x) - 1 = {:.3e}, style_loss(x,x) = {loss:.3e}, ssim vs sliding window {oracle_gap:.3e}",
            self_ssim - 1.0
        ),
    )
}

fn ablation_ordering() -> Verdict {
    let x = unit_map(&mut rng(7), 3, 64, 64);
    let err = |model: Model| model.reconstruct(&x).unwrap().max_abs_diff(&x);
    let haar = err(Model::identity_plumbing(Arc::new(HaarPooling::default()), UnpoolMode::Sum).unwrap());
    let max = err(Model::identity_plumbing(Arc::new(MaxPooling), UnpoolMode::Sum).unwrap());
    check(
        haar < 1e-5 && max > 0.0,
        format!("haar round trip {haar:.3e} < 1e-5, max pooling round trip {max:.3e} > 0"),
    )
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        weights::save(&random_weights(UnpoolMode::Concat, 8), root.join("concat.wts")).unwrap();
        for (name, seed, side) in [("c64", 9, 64), ("s64", 10, 64), ("c256", 11, 256), ("s256", 12, 256)] {
            save_png(&photo_like(seed, side, side), root.join(format!("{name}.png"))).unwrap();
        }
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Smooth gradients plus a little noise, closer to a photograph than white noise.
fn photo_like(seed: u64, w: usize, h: usize) -> ImageBuffer {
    let mut r = rng(seed);
    let phase: [f64; 3] = [r.gen(), r.gen(), r.gen()];
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for (c, p) in phase.iter().enumerate() {
                let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
                let base = 0.5 + 0.35 * ((u * 3.0 + p * 6.0).sin() * (v * 2.0 + c as f64).cos());
                let noise: f64 = r.gen_range(-0.05..0.05);
                data.push(((base + noise).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    ImageBuffer::new(w, h, data).unwrap()
}

fn run_cli(fx: &Fixture, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wct2"))
        .args(args)
        .env("WCT2_WEIGHTS", fx.path("concat.wts"))
        .output()
        .expect("spawn wct2")
}

fn stylize_args(fx: &Fixture, content: &str, style: &str, out: &Path) -> Vec<String> {
    vec![
        "stylize".into(),
        "--content".into(),
        fx.path(content).display().to_string(),
        "--style".into(),
        fx.path(style).display().to_string(),
        "--output".into(),
        out.display().to_string(),
    ]
}

fn determinism(fx: &Fixture) -> Verdict {
    let (a, b) = (fx.path("run_a.png"), fx.path("run_b.png"));
    let mut outputs = Vec::new();
    for out in [&a, &b] {
        let mut args = stylize_args(fx, "c64.png", "s64.png", out);
        args.extend(["--skip-wct", "--decoder-wct"].map(String::from));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = run_cli(fx, &refs);
        if !o.status.success() {
            return Verdict::Fail(format!("stylize exited with {}: {}", o.status, String::from_utf8_lossy(&o.stderr)));
        }
        outputs.push(std::fs::read(out).unwrap());
    }
    check(
        outputs[0] == outputs[1],
        format!("two identical invocations wrote {} and {} bytes, identical: {}", outputs[0].len(), outputs[1].len(), outputs[0] == outputs[1]),
    )
}

fn runtime_256(fx: &Fixture) -> Verdict {
    let out = fx.path("run_256.png");
    let args = stylize_args(fx, "c256.png", "s256.png", &out);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let start = Instant::now();
    let o = run_cli(fx, &refs);
    let secs = start.elapsed().as_secs_f64();
    if !o.status.success() {
        return Verdict::Fail(format!("stylize exited with {}: {}", o.status, String::from_utf8_lossy(&o.stderr)));
    }
    check(secs < 60.0, format!("256x256 concat-decoder stylization took {secs:.2} s < 60 s"))
}

fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    10.0 * (255.0f64 * 255.0 / mse.max(1e-12)).log10()
}

/// Needs WCT2_WEIGHTS (a trained container) and WCT2_TEST_PHOTOS (a
/// directory with at least three PNG/JPEG photographs).
fn trained_reconstruction() -> Verdict {
    let (Some(w), Some(dir)) = (std::env::var_os("WCT2_WEIGHTS"), std::env::var_os("WCT2_TEST_PHOTOS")) else {
        return Verdict::Skip("WCT2_WEIGHTS and WCT2_TEST_PHOTOS not set".into());
    };
    let w = PathBuf::from(w);
    if !w.is_file() {
        return Verdict::Skip(format!("no weights file at {}", w.display()));
    }
    let store = match weights::load(&w) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("cannot load {}: {e}", w.display())),
    };
    let model = [UnpoolMode::Concat, UnpoolMode::Sum]
        .into_iter()
        .find_map(|m| build_model(&store, m, Arc::new(HaarPooling::default())).ok());
    let Some(model) = model else {
        return Verdict::Fail("container matches neither decoder layout".into());
    };
    let mut photos: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    photos.retain(|p| {
        matches!(
            p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
            Some("png" | "jpg" | "jpeg")
        )
    });
    photos.sort();
    if photos.len() < 3 {
        return Verdict::Skip(format!("only {} test photographs found", photos.len()));
    }
    let mut worst = f64::INFINITY;
    for p in photos.iter().take(3) {
        let img = wct2::pipeline::load_image(p, "test photograph").unwrap();
        let (x, crop) = prepare(&img, Some(512));
        let out = unprepare(&model.reconstruct(&x).unwrap(), &crop).unwrap();
        let reference = unprepare(&x, &crop).unwrap();
        worst = worst.min(psnr(&out, &reference));
    }
    check(worst > 30.0, format!("lowest reconstruction PSNR {worst:.2} dB > 30 dB"))
}

fn main() -> ExitCode {
    let fx = Fixture::new();
    let criteria: Vec<Criterion> = vec![
        ("perfect reconstruction", Box::new(perfect_reconstruction)),
        ("tight frame energy", Box::new(tight_frame)),
        ("whitening and coloring", Box::new(whitening_and_coloring)),
        ("adain moments", Box::new(adain_moments)),
        ("convolution oracle", Box::new(conv_oracle)),
        ("decoder parameter ratio", Box::new(parameter_ratio)),
        ("metric sanity", Box::new(metric_sanity)),
        ("ablation ordering", Box::new(ablation_ordering)),
        ("cli determinism", Box::new(|| determinism(&fx))),
        ("256x256 runtime", Box::new(|| runtime_256(&fx))),
        ("trained reconstruction psnr", Box::new(trained_reconstruction)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let (tag, detail) = match run() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("acceptance {tag} {name}: {detail}");
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
