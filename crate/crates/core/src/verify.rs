//! Self-check suite behind `wct2 verify`.
//!
//! Every check runs on seeded random data and compares the library against
//! a small reference written here (naive loops, two-pass covariance), so a
//! regression in an optimized path shows up as a failed row.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metrics;
use crate::network::{random_weights, Model, UnpoolMode};
use crate::stylize::{adain, channel_moments, compute_stats, whiten, wct};
use crate::tensor::{conv2d, ConvLayer, FeatureMap, PaddingMode};
use crate::wavelet::{haar_pool_with, haar_unpool_with, HaarKernels, HaarPooling, MaxPooling};

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Kernels used by every wavelet check; a perturbed bank must fail.
    pub kernels: HaarKernels,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            kernels: HaarKernels::standard(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    /// Informational rows never fail the suite.
    pub informational: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn below(name: &'static str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name,
            measured,
            bound,
            passed: measured < bound,
            informational: false,
            detail,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<6} {:<26} {:>12} {:>12}  detail", "status", "check", "measured", "bound");
        for c in &self.checks {
            let status = match (c.informational, c.passed) {
                (true, _) => "INFO",
                (false, true) => "PASS",
                (false, false) => "FAIL",
            };
            let _ = writeln!(
                out,
                "{status:<6} {:<26} {:>12.3e} {:>12.3e}  {}",
                c.name, c.measured, c.bound, c.detail
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed && !c.informational).count();
        let _ = writeln!(out, "{} checks, {failed} failed", self.checks.len());
        out
    }
}

fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Channels mixed through a random matrix so the covariance is far from diagonal.
/// The mix is diagonally dominant, keeping every eigenvalue well above the floor.
fn correlated_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let base = random_map(rng, c, h, w);
    let mut mix: Vec<f32> = (0..c * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for k in 0..c {
        mix[k * c + k] += c as f32;
    }
    let offset: Vec<f32> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
    FeatureMap::from_fn(c, h, w, |o, y, x| {
        offset[o] + (0..c).map(|i| mix[o * c + i] * base.get(i, y, x)).sum::<f32>()
    })
}

fn naive_covariance(f: &FeatureMap) -> Vec<f64> {
    let (c, n) = (f.channels(), f.pixels());
    let mean: Vec<f64> = (0..c)
        .map(|k| f.plane(k).iter().map(|&v| v as f64).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let pi = f.plane(i);
            let pj = f.plane(j);
            let s: f64 = (0..n).map(|p| (pi[p] as f64 - mean[i]) * (pj[p] as f64 - mean[j])).sum();
            cov[i * c + j] = s / (n - 1) as f64;
        }
    }
    cov
}

fn naive_conv(input: &FeatureMap, layer: &ConvLayer) -> FeatureMap {
    let (h, w) = (input.height() as isize, input.width() as isize);
    let reflect = |i: isize, n: isize| {
        if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        }
    };
    let k = layer.kernel();
    let cin = layer.in_channels();
    FeatureMap::from_fn(layer.out_channels(), input.height(), input.width(), |o, y, x| {
        let mut acc = layer.bias()[o] as f64;
        for i in 0..cin {
            for dy in 0..3isize {
                for dx in 0..3isize {
                    let yy = reflect(y as isize + dy - 1, h) as usize;
                    let xx = reflect(x as isize + dx - 1, w) as usize;
                    let wt = k[((o * cin + i) * 3 + dy as usize) * 3 + dx as usize];
                    acc += wt as f64 * input.get(i, yy, xx) as f64;
                }
            }
        }
        acc as f32
    })
}

/// Conv parameter total computed directly from the layer table.
fn closed_form_parameters(mode: UnpoolMode) -> (usize, usize) {
    let p = |i: usize, o: usize| 9 * i * o + o;
    let encoder = p(3, 64)
        + p(64, 64)
        + p(64, 128)
        + p(128, 128)
        + p(128, 256)
        + 3 * p(256, 256)
        + p(256, 512);
    let m = mode.multiplier();
    let decoder = p(512, 256)
        + p(256 * m, 256)
        + 2 * p(256, 256)
        + p(256, 128)
        + p(128 * m, 128)
        + p(128, 64)
        + p(64 * m, 64)
        + p(64, 3);
    (encoder, decoder)
}

fn check_wavelets(cfg: &VerifyConfig, rng: &mut ChaCha8Rng, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut worst_pr = 0.0f64;
    let mut worst_energy = 0.0f64;
    for _ in 0..100 {
        let c = rng.gen_range(1..=8);
        let h = 2 * rng.gen_range(1..=32);
        let w = 2 * rng.gen_range(1..=32);
        let x = random_map(rng, c, h, w);
        let bands = haar_pool_with(&x, &cfg.kernels)?;
        let back = haar_unpool_with(&bands, &cfg.kernels)?;
        worst_pr = worst_pr.max(back.max_abs_diff(&x));
        let e = x.norm_sq();
        worst_energy = worst_energy.max((e - bands.energy()).abs() / e);
    }
    out.push(CheckOutcome::below(
        "haar_perfect_reconstruction",
        worst_pr,
        1e-5,
        "100 tensors up to 8x64x64, max |unpool(pool(x)) - x|".into(),
    ));
    out.push(CheckOutcome::below(
        "haar_parseval",
        worst_energy,
        1e-6,
        "max relative energy difference".into(),
    ));
    let g = cfg.kernels.gram();
    let mut dev = 0.0f64;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dev = dev.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    out.push(CheckOutcome::below(
        "haar_kernel_orthonormality",
        dev,
        1e-7,
        "max |K K^T - I|".into(),
    ));
    Ok(())
}

fn check_transforms(rng: &mut ChaCha8Rng, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    let mut colour = 0.0f64;
    for c in [4usize, 8, 32] {
        // n = 64·C pixels as an 8 × 8C map.
        let content = correlated_map(rng, c, 8, 8 * c);
        let style = correlated_map(rng, c, 8, 8 * c);
        let stats = compute_stats(&content, None)?;
        let white = whiten(&content, &stats, None)?;
        let cov = naive_covariance(&white);
        for i in 0..c {
            for j in 0..c {
                let v = cov[i * c + j];
                if i == j {
                    diag = diag.max((v - 1.0).abs());
                } else {
                    off = off.max(v.abs());
                }
            }
        }
        let styled = wct(&content, &style, None, 1.0)?;
        let got = naive_covariance(&styled);
        let want = naive_covariance(&style);
        let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = want.iter().map(|b| b * b).sum();
        colour = colour.max((num / den).sqrt());
    }
    out.push(CheckOutcome::below(
        "whitening_off_diagonal",
        off,
        1e-4,
        "C in {4,8,32}, n = 64C".into(),
    ));
    out.push(CheckOutcome::below("whitening_diagonal", diag, 1e-3, "max |cov_ii - 1|".into()));
    out.push(CheckOutcome::below(
        "coloring_covariance",
        colour,
        1e-3,
        "relative Frobenius error vs style covariance".into(),
    ));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let content = correlated_map(rng, 8, 16, 16);
        let style = correlated_map(rng, 8, 12, 20);
        let got = channel_moments(&adain(&content, &style, None, 1.0)?, None)?;
        let want = channel_moments(&style, None)?;
        for k in 0..8 {
            worst = worst.max((got.mean[k] - want.mean[k]).abs());
            worst = worst.max((got.std[k] - want.std[k]).abs());
        }
    }
    out.push(CheckOutcome::below(
        "adain_moments",
        worst,
        1e-5,
        "per-channel mean/std vs style".into(),
    ));
    Ok(())
}

fn check_conv(rng: &mut ChaCha8Rng, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let cin = rng.gen_range(1..=8);
        let cout = rng.gen_range(1..=8);
        let h = rng.gen_range(2..=16);
        let w = rng.gen_range(2..=16);
        let bound = (6.0 / (9 * cin) as f32).sqrt();
        let kernel = (0..cout * cin * 9).map(|_| rng.gen_range(-bound..bound)).collect();
        let bias = (0..cout).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let layer = ConvLayer::new(cout, cin, kernel, bias)?;
        let x = random_map(rng, cin, h, w);
        let got = conv2d(&x, &layer, PaddingMode::Reflect)?;
        worst = worst.max(got.max_abs_diff(&naive_conv(&x, &layer)));
    }
    out.push(CheckOutcome::below(
        "conv_oracle",
        worst,
        1e-6,
        "50 instances up to 8x16x16 vs naive loops".into(),
    ));
    Ok(())
}

fn check_parameters(seed: u64, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut worst = 0.0f64;
    let mut decoders = [0usize; 2];
    for (slot, mode) in [UnpoolMode::Sum, UnpoolMode::Concat].into_iter().enumerate() {
        let model = crate::network::build_model(&random_weights(mode, seed), mode, Arc::new(HaarPooling::default()))?;
        let (enc, dec) = closed_form_parameters(mode);
        worst = worst.max((model.encoder_parameter_count() as f64 - enc as f64).abs());
        worst = worst.max((model.decoder_parameter_count() as f64 - dec as f64).abs());
        decoders[slot] = model.decoder_parameter_count();
    }
    out.push(CheckOutcome {
        name: "parameter_counts",
        measured: worst,
        bound: 0.0,
        passed: worst == 0.0,
        informational: false,
        detail: "built models vs closed-form layer table (sum and concat)".into(),
    });
    let ratio = decoders[1] as f64 / decoders[0] as f64;
    out.push(CheckOutcome {
        name: "decoder_parameter_ratio",
        measured: ratio,
        bound: 1.80,
        passed: (1.75..=1.85).contains(&ratio),
        informational: true,
        detail: format!("concat {} / sum {} decoder parameters", decoders[1], decoders[0]),
    });
    Ok(())
}

fn check_metrics(seed: u64, rng: &mut ChaCha8Rng, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let x = FeatureMap::from_fn(3, 32, 32, |_, _, _| rng.gen_range(0.0..1.0));
    let edges = metrics::edge_response(&x)?;
    let s = metrics::ssim(&edges, &edges)?;
    out.push(CheckOutcome::below(
        "ssim_identity",
        (s - 1.0).abs(),
        1e-9,
        "|ssim(x, x) - 1|".into(),
    ));
    let model = crate::network::build_model(
        &random_weights(UnpoolMode::Sum, seed),
        UnpoolMode::Sum,
        Arc::new(HaarPooling::default()),
    )?;
    let loss = metrics::style_loss(&x, &x, &model)?;
    out.push(CheckOutcome::below(
        "style_loss_identity",
        loss.total.abs(),
        1e-8,
        "style_loss(x, x)".into(),
    ));
    Ok(())
}

fn check_plumbing(cfg: &VerifyConfig, rng: &mut ChaCha8Rng, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let x = FeatureMap::from_fn(3, 32, 32, |_, _, _| rng.gen_range(0.0..1.0));
    let haar = Model::identity_plumbing(Arc::new(HaarPooling::with_kernels(cfg.kernels)), UnpoolMode::Sum)?;
    let haar_err = haar.reconstruct(&x)?.max_abs_diff(&x);
    out.push(CheckOutcome::below(
        "plumbing_haar_round_trip",
        haar_err,
        1e-5,
        "identity-layer model, haar pooling".into(),
    ));
    let max = Model::identity_plumbing(Arc::new(MaxPooling), UnpoolMode::Sum)?;
    let max_err = max.reconstruct(&x)?.max_abs_diff(&x);
    out.push(CheckOutcome {
        name: "plumbing_max_is_lossy",
        measured: max_err,
        bound: 0.0,
        passed: max_err > 0.0,
        informational: false,
        detail: "identity-layer model, max pooling error must be > 0".into(),
    });
    Ok(())
}

/// Runs every check. Output is a pure function of `cfg`.
pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    check_wavelets(cfg, &mut rng, &mut checks)?;
    check_transforms(&mut rng, &mut checks)?;
    check_conv(&mut rng, &mut checks)?;
    check_parameters(cfg.seed, &mut checks)?;
    check_metrics(cfg.seed, &mut rng, &mut checks)?;
    check_plumbing(cfg, &mut rng, &mut checks)?;
    Ok(VerifyReport { checks })
}
