//! Evaluation metrics: SSIM between edge maps of content and output, and a
//! Gram-matrix style loss over the encoder taps.

use std::fmt::Write as _;

use crate::error::{contract, Result};
use crate::network::{Model, Site};
use crate::tensor::FeatureMap;

/// Largest Sobel gradient magnitude for inputs in `[0, 1]`: `|gx|, |gy| ≤ 4`.
const SOBEL_MAX: f64 = 4.0 * std::f64::consts::SQRT_2;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Rec. 601 luma of a 3-channel map; a 1-channel map is returned as-is.
pub fn luminance(image: &FeatureMap) -> Result<FeatureMap> {
    match image.channels() {
        1 => Ok(image.clone()),
        3 => {
            let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
            let data = (0..image.pixels())
                .map(|i| (0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64) as f32)
                .collect();
            FeatureMap::new(1, image.height(), image.width(), data)
        }
        c => Err(contract!("luminance needs 1 or 3 channels, got {c}")),
    }
}

/// Sobel gradient magnitude of the luminance, borders replicated, scaled
/// by the largest possible magnitude so unit-range inputs map into `[0, 1]`.
pub fn edge_response(image: &FeatureMap) -> Result<FeatureMap> {
    let y = luminance(image)?;
    let (h, w) = (y.height(), y.width());
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        y.get(0, r, c) as f64
    };
    Ok(FeatureMap::from_fn(1, h, w, |_, r, c| {
        let (r, c) = (r as isize, c as isize);
        let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
            - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
        let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
            - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
        ((gx * gx + gy * gy).sqrt() / SOBEL_MAX) as f32
    }))
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of a single plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over every fully contained 11×11 Gaussian window (σ = 1.5),
/// with constants for unit dynamic range.
pub fn ssim(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(contract!("ssim compares single-channel maps"));
    }
    if !a.same_shape(b) {
        return Err(contract!("ssim shape mismatch {:?} vs {:?}", a.dims(), b.dims()));
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(contract!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let xa: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let xb: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let prod = |f: &dyn Fn(usize) -> f64| (0..h * w).map(f).collect::<Vec<f64>>();
    let aa = prod(&|i| xa[i] * xa[i]);
    let bb = prod(&|i| xb[i] * xb[i]);
    let ab = prod(&|i| xa[i] * xb[i]);
    let (mu_a, oh, ow) = filter_valid(&xa, h, w, &k);
    let (mu_b, ..) = filter_valid(&xb, h, w, &k);
    let (e_aa, ..) = filter_valid(&aa, h, w, &k);
    let (e_bb, ..) = filter_valid(&bb, h, w, &k);
    let (e_ab, ..) = filter_valid(&ab, h, w, &k);
    let total: f64 = (0..oh * ow)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / (oh * ow) as f64)
}

/// `Fc·Fcᵀ / n` for mean-centered features, row-major `C × C`.
pub fn centered_gram(features: &FeatureMap) -> Vec<f64> {
    let (c, n) = (features.channels(), features.pixels());
    let centered: Vec<Vec<f64>> = (0..c)
        .map(|ch| {
            let p = features.plane(ch);
            let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            p.iter().map(|&v| v as f64 - mean).collect()
        })
        .collect();
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let v = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            g[i * c + j] = v;
            g[j * c + i] = v;
        }
    }
    g
}

/// `‖G(a) − G(b)‖²_F / C²` for one layer.
pub fn gram_distance(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(contract!(
            "gram distance needs equal channels, got {} and {}",
            a.channels(),
            b.channels()
        ));
    }
    let c = a.channels() as f64;
    let (ga, gb) = (centered_gram(a), centered_gram(b));
    Ok(ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (c * c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleLoss {
    pub total: f64,
    pub per_layer: Vec<(Site, f64)>,
}

/// Sum of per-layer Gram distances between matching taps.
pub fn style_loss_from_taps(style: &[(Site, FeatureMap)], output: &[(Site, FeatureMap)]) -> Result<StyleLoss> {
    if style.len() != output.len() {
        return Err(contract!("tap lists differ in length"));
    }
    let mut per_layer = Vec::with_capacity(style.len());
    for ((sa, fa), (sb, fb)) in style.iter().zip(output) {
        if sa != sb {
            return Err(contract!("tap order differs: {sa} vs {sb}"));
        }
        per_layer.push((*sa, gram_distance(fa, fb)?));
    }
    Ok(StyleLoss {
        total: per_layer.iter().map(|(_, v)| v).sum(),
        per_layer,
    })
}

/// Gram style loss over the conv1_1..conv4_1 activations of `model`.
pub fn style_loss(style_image: &FeatureMap, output_image: &FeatureMap, model: &Model) -> Result<StyleLoss> {
    let a = model.encoder_taps(style_image)?;
    let b = model.encoder_taps(output_image)?;
    style_loss_from_taps(&a, &b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ssim_edges: f64,
    pub style_loss: f64,
    pub per_layer: Vec<(String, f64)>,
}

impl MetricReport {
    /// Human-readable lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "SSIM (edges)   {:.6}", self.ssim_edges);
        let _ = writeln!(s, "style loss     {:.6e}", self.style_loss);
        for (name, v) in &self.per_layer {
            let _ = writeln!(s, "  {name:<18} {v:.6e}");
        }
        s
    }

    /// Flat `key=value` lines, one metric per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ssim_edges={}", self.ssim_edges);
        let _ = writeln!(s, "style_loss={}", self.style_loss);
        for (name, v) in &self.per_layer {
            let _ = writeln!(s, "style_loss.{name}={v}");
        }
        s
    }
}

/// Edge SSIM between `content` and `output`, style loss between `style`
/// and `output`. `content` and `output` must share a shape.
pub fn evaluate(content: &FeatureMap, style: &FeatureMap, output: &FeatureMap, model: &Model) -> Result<MetricReport> {
    let ssim_edges = ssim(&edge_response(content)?, &edge_response(output)?)?;
    let loss = style_loss(style, output, model)?;
    Ok(MetricReport {
        ssim_edges,
        style_loss: loss.total,
        per_layer: loss.per_layer.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
    })
}
