//! Feature-space stylization: whitening-and-coloring (WCT), AdaIN and their
//! segmentation-masked, region-by-region application.
//!
//! Features are treated as a `C × n` matrix of channel vectors, one column
//! per selected pixel. All statistics are computed in f64.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{contract, Error, Result};
use crate::registry::Registry;
use crate::tensor::FeatureMap;

/// Eigenvalues at or below this are dropped together with their eigenvectors.
pub const EIGENVALUE_FLOOR: f64 = 1e-5;

/// Lower bound on the per-channel standard deviation used by AdaIN.
pub const STD_FLOOR: f64 = 1e-8;

/// Mean, covariance and its truncated eigendecomposition for one pixel set.
#[derive(Clone, Debug)]
pub struct StyleStats {
    pub mean: Vec<f64>,
    /// `C × C`, normalized by `n - 1`.
    pub covariance: DMatrix<f64>,
    /// Retained eigenvalues, nonincreasing, all above [`EIGENVALUE_FLOOR`].
    pub eigenvalues: Vec<f64>,
    /// `C × k`, orthonormal columns matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Per-channel population standard deviation.
    pub channel_std: Vec<f64>,
    pub pixels: usize,
}

impl StyleStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `E · diag(f(λ)) · Eᵀ`
    fn spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        &scaled * self.eigenvectors.transpose()
    }

    /// `E Λ^{-1/2} Eᵀ`
    pub fn whitening_matrix(&self) -> DMatrix<f64> {
        self.spectral(|l| 1.0 / l.sqrt())
    }

    /// `E Λ^{1/2} Eᵀ`
    pub fn coloring_matrix(&self) -> DMatrix<f64> {
        self.spectral(f64::sqrt)
    }
}

/// Per-pixel integer labels. Label ids are matched across images by value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl SegmentationMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(contract!(
                "segmentation map {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            ));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// Every pixel carries `label`.
    pub fn uniform(height: usize, width: usize, label: u32) -> Self {
        Self::new(height, width, vec![label; height * width]).expect("positive dims")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn label_set(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }

    /// Flat pixel indices carrying `label`.
    pub fn pixels_with(&self, label: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    /// Nearest-neighbour resize sampling `src = floor(dst · in / out)`, so
    /// only labels already present can appear.
    pub fn resize_nearest(&self, height: usize, width: usize) -> SegmentationMap {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                labels.push(self.get(sy, sx));
            }
        }
        SegmentationMap::new(height, width, labels).expect("positive dims")
    }
}

/// Content and style label maps, each at its own feature resolution.
#[derive(Clone, Copy, Debug)]
pub struct RegionPair<'a> {
    pub content: &'a SegmentationMap,
    pub style: &'a SegmentationMap,
}

fn check_map(map: &SegmentationMap, features: &FeatureMap, side: &str) -> Result<()> {
    if (map.height, map.width) != (features.height(), features.width()) {
        return Err(contract!(
            "{side} segmentation {}x{} does not match features {}x{}",
            map.height,
            map.width,
            features.height(),
            features.width()
        ));
    }
    Ok(())
}

fn check_mask(features: &FeatureMap, mask: Option<&[usize]>) -> Result<usize> {
    let n = features.pixels();
    match mask {
        None => Ok(n),
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                return Err(contract!("mask index {bad} out of range for {n} pixels"));
            }
            Ok(idx.len())
        }
    }
}

/// Selected pixels as a `C × n` f64 matrix.
fn gather(features: &FeatureMap, mask: Option<&[usize]>) -> DMatrix<f64> {
    let c = features.channels();
    match mask {
        None => {
            let n = features.pixels();
            DMatrix::from_fn(c, n, |ch, p| features.plane(ch)[p] as f64)
        }
        Some(idx) => DMatrix::from_fn(c, idx.len(), |ch, j| features.plane(ch)[idx[j]] as f64),
    }
}

fn scatter(target: &mut FeatureMap, values: &DMatrix<f64>, mask: Option<&[usize]>) {
    for ch in 0..target.channels() {
        let plane = target.plane_mut(ch);
        match mask {
            None => {
                for (p, v) in plane.iter_mut().enumerate() {
                    *v = values[(ch, p)] as f32;
                }
            }
            Some(idx) => {
                for (j, &p) in idx.iter().enumerate() {
                    plane[p] = values[(ch, j)] as f32;
                }
            }
        }
    }
}

/// Per-channel mean and population std over the selected pixels.
fn moments(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.ncols() as f64;
    let mut mean = Vec::with_capacity(m.nrows());
    let mut std = Vec::with_capacity(m.nrows());
    for row in m.row_iter() {
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(var.sqrt());
    }
    (mean, std)
}

/// Mean, `(n−1)`-normalized covariance and floored eigendecomposition of
/// the selected pixels (all pixels when `mask` is `None`).
pub fn compute_stats(features: &FeatureMap, mask: Option<&[usize]>) -> Result<StyleStats> {
    let n = check_mask(features, mask)?;
    if n < 2 {
        return Err(Error::DegenerateRegion(format!(
            "{n} pixel(s); statistics need at least 2"
        )));
    }
    let mut m = gather(features, mask);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(contract!("non-finite feature values"));
    }
    let (mean, channel_std) = moments(&m);
    for (mut row, mu) in m.row_iter_mut().zip(&mean) {
        row.iter_mut().for_each(|v| *v -= mu);
    }
    let mut cov = &m * m.transpose() / (n as f64 - 1.0);
    // exact symmetry before the eigensolver
    let c = cov.nrows();
    for i in 0..c {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    let (eigenvalues, eigenvectors) = floored_eigen(&cov);
    Ok(StyleStats {
        mean,
        covariance: cov,
        eigenvalues,
        eigenvectors,
        channel_std,
        pixels: n,
    })
}

/// Symmetric eigendecomposition sorted by decreasing eigenvalue, keeping
/// only eigenpairs above [`EIGENVALUE_FLOOR`].
fn floored_eigen(cov: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let c = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > EIGENVALUE_FLOOR)
        .collect();
    let values = kept.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(c, kept.len(), |r, j| eig.eigenvectors[(r, kept[j])]);
    (values, vectors)
}

fn require_rank(stats: &StyleStats, what: &str) -> Result<()> {
    if stats.eigenvalues.is_empty() {
        return Err(Error::DegenerateRegion(format!(
            "{what}: every eigenvalue is below the floor {EIGENVALUE_FLOOR}"
        )));
    }
    Ok(())
}

/// `out = M · (f − shift_in) + shift_out` on the selected pixels; the rest
/// are copied unchanged.
fn apply_affine(
    features: &FeatureMap,
    matrix: &DMatrix<f64>,
    shift_in: &[f64],
    shift_out: &[f64],
    mask: Option<&[usize]>,
    out: &mut FeatureMap,
) {
    let mut m = gather(features, mask);
    for (mut row, mu) in m.row_iter_mut().zip(shift_in) {
        row.iter_mut().for_each(|v| *v -= mu);
    }
    let mut t = matrix * m;
    for (mut row, mu) in t.row_iter_mut().zip(shift_out) {
        row.iter_mut().for_each(|v| *v += mu);
    }
    scatter(out, &t, mask);
}

fn check_stats(features: &FeatureMap, stats: &StyleStats) -> Result<()> {
    if stats.channels() != features.channels() {
        return Err(contract!(
            "statistics have {} channels, features have {}",
            stats.channels(),
            features.channels()
        ));
    }
    Ok(())
}

/// `E Λ^{-1/2} Eᵀ (f − μ)` on the masked pixels.
pub fn whiten(features: &FeatureMap, stats: &StyleStats, mask: Option<&[usize]>) -> Result<FeatureMap> {
    check_stats(features, stats)?;
    check_mask(features, mask)?;
    require_rank(stats, "whitening")?;
    let zeros = vec![0.0; stats.channels()];
    let mut out = features.clone();
    apply_affine(features, &stats.whitening_matrix(), &stats.mean, &zeros, mask, &mut out);
    Ok(out)
}

/// `E_s Λ_s^{1/2} E_sᵀ ŵ + μ_s` on the masked pixels.
pub fn color(whitened: &FeatureMap, style: &StyleStats, mask: Option<&[usize]>) -> Result<FeatureMap> {
    check_stats(whitened, style)?;
    check_mask(whitened, mask)?;
    require_rank(style, "coloring")?;
    let zeros = vec![0.0; style.channels()];
    let mut out = whitened.clone();
    apply_affine(whitened, &style.coloring_matrix(), &zeros, &style.mean, mask, &mut out);
    Ok(out)
}

/// Whitening with `content` stats fused with coloring by `style` stats.
/// A side without any retained eigenpair contributes a zero matrix, so a
/// flat region maps onto the style mean.
fn wct_region(
    source: &FeatureMap,
    content: &StyleStats,
    style: &StyleStats,
    mask: Option<&[usize]>,
    out: &mut FeatureMap,
) -> Result<()> {
    let transfer = style.coloring_matrix() * content.whitening_matrix();
    apply_affine(source, &transfer, &content.mean, &style.mean, mask, out);
    Ok(())
}

fn blend(transformed: FeatureMap, content: &FeatureMap, alpha: f32) -> Result<FeatureMap> {
    if alpha == 1.0 {
        Ok(transformed)
    } else {
        transformed.lincomb(alpha, content, 1.0 - alpha)
    }
}

fn check_pair(content: &FeatureMap, style: &FeatureMap, alpha: f32) -> Result<()> {
    if content.channels() != style.channels() {
        return Err(contract!(
            "content has {} channels, style has {}",
            content.channels(),
            style.channels()
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(contract!("alpha must lie in [0, 1], got {alpha}"));
    }
    Ok(())
}

/// Lazily computed whole-image statistics used as the fallback for
/// degenerate or unmatched regions.
struct Fallback<'a, T> {
    features: &'a FeatureMap,
    compute: fn(&FeatureMap, Option<&[usize]>) -> Result<T>,
    cached: Option<Arc<T>>,
}

impl<'a, T> Fallback<'a, T> {
    fn new(features: &'a FeatureMap, compute: fn(&FeatureMap, Option<&[usize]>) -> Result<T>) -> Self {
        Self {
            features,
            compute,
            cached: None,
        }
    }

    fn get(&mut self) -> Result<Arc<T>> {
        if let Some(s) = &self.cached {
            return Ok(s.clone());
        }
        let s = Arc::new((self.compute)(self.features, None)?);
        self.cached = Some(s.clone());
        Ok(s)
    }
}

/// Runs `per_region(content_stats, style_stats, content_pixels)` for every
/// content label, choosing regional or global statistics per side.
fn for_each_region<T>(
    content: &FeatureMap,
    style: &FeatureMap,
    regions: RegionPair<'_>,
    compute: fn(&FeatureMap, Option<&[usize]>) -> Result<T>,
    min_pixels: usize,
    mut per_region: impl FnMut(&T, &T, &[usize]) -> Result<()>,
) -> Result<()> {
    check_map(regions.content, content, "content")?;
    check_map(regions.style, style, "style")?;
    let mut global_content = Fallback::new(content, compute);
    let mut global_style = Fallback::new(style, compute);
    let style_labels = regions.style.label_set();
    for label in regions.content.label_set() {
        let c_idx = regions.content.pixels_with(label);
        let c_stats = if c_idx.len() >= min_pixels {
            Arc::new(compute(content, Some(&c_idx))?)
        } else {
            log::debug!("label {label}: {} content pixels, using global statistics", c_idx.len());
            global_content.get()?
        };
        let s_stats = if !style_labels.contains(&label) {
            log::warn!("label {label} is absent from the style segmentation; using global style statistics");
            global_style.get()?
        } else {
            let s_idx = regions.style.pixels_with(label);
            if s_idx.len() >= min_pixels {
                Arc::new(compute(style, Some(&s_idx))?)
            } else {
                log::debug!("label {label}: {} style pixels, using global statistics", s_idx.len());
                global_style.get()?
            }
        };
        per_region(&c_stats, &s_stats, &c_idx)?;
    }
    Ok(())
}

/// Whitening-and-coloring transform blended with the content by `alpha`.
///
/// With `regions`, each content label is transformed with the statistics
/// of the same label in the style. A region with fewer than `max(2, C)`
/// pixels on either side uses that side's global statistics instead, as
/// does a label missing from the style map.
pub fn wct(
    content: &FeatureMap,
    style: &FeatureMap,
    regions: Option<RegionPair<'_>>,
    alpha: f32,
) -> Result<FeatureMap> {
    check_pair(content, style, alpha)?;
    if alpha == 0.0 {
        return Ok(content.clone());
    }
    let mut out = content.clone();
    match regions {
        None => {
            let c = compute_stats(content, None)?;
            let s = compute_stats(style, None)?;
            wct_region(content, &c, &s, None, &mut out)?;
        }
        Some(pair) => {
            let min_pixels = content.channels().max(2);
            for_each_region(content, style, pair, compute_stats, min_pixels, |c, s, idx| {
                wct_region(content, c, s, Some(idx), &mut out)
            })?;
        }
    }
    blend(out, content, alpha)
}

/// Channel-wise mean and population std.
#[derive(Clone, Debug)]
pub struct ChannelMoments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn channel_moments(features: &FeatureMap, mask: Option<&[usize]>) -> Result<ChannelMoments> {
    let n = check_mask(features, mask)?;
    if n == 0 {
        return Err(Error::DegenerateRegion("empty pixel set".into()));
    }
    let m = gather(features, mask);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(contract!("non-finite feature values"));
    }
    let (mean, std) = moments(&m);
    Ok(ChannelMoments { mean, std })
}

fn adain_region(
    source: &FeatureMap,
    content: &ChannelMoments,
    style: &ChannelMoments,
    mask: Option<&[usize]>,
    out: &mut FeatureMap,
) {
    for ch in 0..source.channels() {
        let scale = style.std[ch] / content.std[ch].max(STD_FLOOR);
        let (mc, ms) = (content.mean[ch], style.mean[ch]);
        let src = source.plane(ch);
        let dst = out.plane_mut(ch);
        let mut map = |p: usize| dst[p] = ((src[p] as f64 - mc) * scale + ms) as f32;
        match mask {
            None => (0..src.len()).for_each(&mut map),
            Some(idx) => idx.iter().copied().for_each(&mut map),
        }
    }
}

/// Adaptive instance normalization: per channel (and per region),
/// `(x − μ_c)/σ_c · σ_s + μ_s`, blended with the content by `alpha`.
pub fn adain(
    content: &FeatureMap,
    style: &FeatureMap,
    regions: Option<RegionPair<'_>>,
    alpha: f32,
) -> Result<FeatureMap> {
    check_pair(content, style, alpha)?;
    if alpha == 0.0 {
        return Ok(content.clone());
    }
    let mut out = content.clone();
    match regions {
        None => {
            let c = channel_moments(content, None)?;
            let s = channel_moments(style, None)?;
            adain_region(content, &c, &s, None, &mut out);
        }
        Some(pair) => {
            for_each_region(content, style, pair, channel_moments, 2, |c, s, idx| {
                adain_region(content, c, s, Some(idx), &mut out);
                Ok(())
            })?;
        }
    }
    blend(out, content, alpha)
}

/// A content-to-style feature transform selectable by name.
pub trait FeatureTransform: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn apply(
        &self,
        content: &FeatureMap,
        style: &FeatureMap,
        regions: Option<RegionPair<'_>>,
        alpha: f32,
    ) -> Result<FeatureMap>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Wct;

impl FeatureTransform for Wct {
    fn name(&self) -> &'static str {
        "wct"
    }

    fn apply(
        &self,
        content: &FeatureMap,
        style: &FeatureMap,
        regions: Option<RegionPair<'_>>,
        alpha: f32,
    ) -> Result<FeatureMap> {
        wct(content, style, regions, alpha)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Adain;

impl FeatureTransform for Adain {
    fn name(&self) -> &'static str {
        "adain"
    }

    fn apply(
        &self,
        content: &FeatureMap,
        style: &FeatureMap,
        regions: Option<RegionPair<'_>>,
        alpha: f32,
    ) -> Result<FeatureMap> {
        adain(content, style, regions, alpha)
    }
}

/// Built-in transforms: `wct`, `adain`.
pub fn transforms() -> &'static Registry<dyn FeatureTransform> {
    static REGISTRY: OnceLock<Registry<dyn FeatureTransform>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn FeatureTransform> = Registry::new("transform");
        reg.register("wct", || Arc::new(Wct))
            .register("adain", || Arc::new(Adain));
        reg
    })
}

pub fn transform_by_name(name: &str) -> Result<Arc<dyn FeatureTransform>> {
    transforms().get(name)
}
