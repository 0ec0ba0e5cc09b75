//! Reference implementations used as test oracles. Written for clarity, not
//! speed, and deliberately independent of the library's code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wct2::FeatureMap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let data = (0..c * h * w).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    FeatureMap::new(c, h, w, data).unwrap()
}

pub fn unit_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let data = (0..c * h * w).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    FeatureMap::new(c, h, w, data).unwrap()
}

/// Random features with strongly correlated channels and nonzero means.
pub fn correlated_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let base = random_map(rng, c, h, w);
    let mut mix: Vec<f64> = (0..c * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // Diagonal dominance keeps the covariance well conditioned.
    for k in 0..c {
        mix[k * c + k] += c as f64;
    }
    let shift: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut data = Vec::with_capacity(c * h * w);
    for o in 0..c {
        for p in 0..h * w {
            let mut v = shift[o];
            for i in 0..c {
                v += mix[o * c + i] * base.data()[i * h * w + p] as f64;
            }
            data.push(v as f32);
        }
    }
    FeatureMap::new(c, h, w, data).unwrap()
}

/// Value at `(c, y, x)` in a flat `C×H×W` buffer.
pub fn at(f: &FeatureMap, c: usize, y: usize, x: usize) -> f64 {
    f.data()[(c * f.height() + y) * f.width() + x] as f64
}

/// Quadruple-loop 3×3 same-size correlation. `reflect` picks mirror
/// padding (edge not repeated) over zero padding.
pub fn naive_conv(
    input: &FeatureMap,
    weights: &[f32],
    bias: &[f32],
    out_channels: usize,
    reflect: bool,
) -> Vec<f64> {
    let (cin, h, w) = (input.channels(), input.height() as i64, input.width() as i64);
    let mut out = vec![0.0; out_channels * (h * w) as usize];
    for o in 0..out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o] as f64;
                for i in 0..cin {
                    for ky in 0..3i64 {
                        for kx in 0..3i64 {
                            let (mut sy, mut sx) = (y + ky - 1, x + kx - 1);
                            if reflect {
                                if h == 1 {
                                    sy = 0;
                                }
                                if w == 1 {
                                    sx = 0;
                                }
                                if sy < 0 {
                                    sy = -sy;
                                }
                                if sy >= h {
                                    sy = 2 * h - 2 - sy;
                                }
                                if sx < 0 {
                                    sx = -sx;
                                }
                                if sx >= w {
                                    sx = 2 * w - 2 - sx;
                                }
                            } else if sy < 0 || sy >= h || sx < 0 || sx >= w {
                                continue;
                            }
                            let wt = weights[((o * cin + i) * 3 + ky as usize) * 3 + kx as usize] as f64;
                            acc += wt * at(input, i, sy as usize, sx as usize);
                        }
                    }
                }
                out[(o * h as usize + y as usize) * w as usize + x as usize] = acc;
            }
        }
    }
    out
}

/// Two-pass sample covariance (divides by n − 1) over the listed pixels.
pub fn naive_covariance(f: &FeatureMap, pixels: &[usize]) -> Vec<Vec<f64>> {
    let c = f.channels();
    let hw = f.height() * f.width();
    let n = pixels.len() as f64;
    let mean: Vec<f64> = (0..c)
        .map(|k| pixels.iter().map(|&p| f.data()[k * hw + p] as f64).sum::<f64>() / n)
        .collect();
    let mut cov = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for &p in pixels {
                s += (f.data()[i * hw + p] as f64 - mean[i]) * (f.data()[j * hw + p] as f64 - mean[j]);
            }
            cov[i][j] = s / (n - 1.0);
        }
    }
    cov
}

pub fn all_pixels(f: &FeatureMap) -> Vec<usize> {
    (0..f.height() * f.width()).collect()
}

pub fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_frobenius(got: &[Vec<f64>], want: &[Vec<f64>]) -> f64 {
    let diff: Vec<Vec<f64>> = got
        .iter()
        .zip(want)
        .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a - b).collect())
        .collect();
    frobenius(&diff) / frobenius(want)
}

/// Per-channel mean and population standard deviation over the listed pixels.
pub fn naive_moments(f: &FeatureMap, pixels: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let hw = f.height() * f.width();
    let n = pixels.len() as f64;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for k in 0..f.channels() {
        let m = pixels.iter().map(|&p| f.data()[k * hw + p] as f64).sum::<f64>() / n;
        let v = pixels.iter().map(|&p| (f.data()[k * hw + p] as f64 - m).powi(2)).sum::<f64>() / n;
        means.push(m);
        stds.push(v.sqrt());
    }
    (means, stds)
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn to_f64(f: &FeatureMap) -> Vec<f64> {
    f.data().iter().map(|&v| v as f64).collect()
}
