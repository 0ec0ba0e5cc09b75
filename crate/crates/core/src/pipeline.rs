//! Image I/O and the end-to-end stylization entry point.
//!
//! Pixels enter the network as RGB in `[0, 1]` (no ImageNet mean/std
//! normalization); weight exporters must produce encoders that expect this.
//! Images are reflect-padded on the bottom/right up to a multiple of 8 and
//! cropped back afterwards, so output dimensions equal the (optionally
//! downscaled) input dimensions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{imageops, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::network::{build_model, stylize, Model, Segmentation, Site, StylizeSchedule, UnpoolMode};
use crate::stylize::{transform_by_name, SegmentationMap};
use crate::tensor::FeatureMap;
use crate::wavelet::pooling_by_name;
use crate::weights;

/// 8-bit RGB image, row-major interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Contract(format!(
                "RGB image {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Planar `3 × H × W` features in `[0, 1]`.
    pub fn to_features(&self) -> FeatureMap {
        FeatureMap::from_fn(3, self.height, self.width, |c, y, x| {
            self.data[(y * self.width + x) * 3 + c] as f32 / 255.0
        })
    }

    /// Clamps to `[0, 1]` (NaN becomes 0) and rounds to the nearest 8-bit level.
    pub fn from_features(features: &FeatureMap) -> Result<Self> {
        if features.channels() != 3 {
            return Err(Error::Contract(format!(
                "image conversion needs 3 channels, got {}",
                features.channels()
            )));
        }
        let (h, w) = (features.height(), features.width());
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = features.get(c, y, x);
                    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                    data.push((v * 255.0).round() as u8);
                }
            }
        }
        Self::new(w, h, data)
    }

    fn to_rgb(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction")
    }

    fn from_rgb(img: RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }
}

/// What `prepare` did, so `unprepare` can undo it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    /// `(height, width)` of the source image.
    pub original: (usize, usize),
    /// After the optional downscale.
    pub scaled: (usize, usize),
    /// After padding to a multiple of 8.
    pub padded: (usize, usize),
}

impl CropRecord {
    pub fn is_identity(&self) -> bool {
        self.original == self.padded
    }
}

fn round_up8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

/// Mirror index without edge repetition, extended periodically for any offset.
fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

fn scaled_dims(h: usize, w: usize, max_side: Option<usize>) -> (usize, usize) {
    match max_side {
        Some(m) if h.max(w) > m && m > 0 => {
            let s = m as f64 / h.max(w) as f64;
            (
                ((h as f64 * s).round() as usize).clamp(1, m),
                ((w as f64 * s).round() as usize).clamp(1, m),
            )
        }
        _ => (h, w),
    }
}

/// Optional bilinear downscale so `max(H, W) ≤ max_side`, then reflect
/// padding up to the next multiple of 8.
pub fn prepare(image: &ImageBuffer, max_side: Option<usize>) -> (FeatureMap, CropRecord) {
    let original = (image.height, image.width);
    let scaled = scaled_dims(image.height, image.width, max_side);
    let resized = if scaled == original {
        image.clone()
    } else {
        let img = imageops::resize(
            &image.to_rgb(),
            scaled.1 as u32,
            scaled.0 as u32,
            imageops::FilterType::Triangle,
        );
        ImageBuffer::from_rgb(img).expect("resize keeps positive dims")
    };
    let features = resized.to_features();
    let padded = (round_up8(scaled.0), round_up8(scaled.1));
    let features = if padded == scaled {
        features
    } else {
        FeatureMap::from_fn(3, padded.0, padded.1, |c, y, x| {
            features.get(c, mirror(y, scaled.0), mirror(x, scaled.1))
        })
    };
    (
        features,
        CropRecord {
            original,
            scaled,
            padded,
        },
    )
}

/// Crops the padding away and quantizes to 8 bits.
pub fn unprepare(features: &FeatureMap, crop: &CropRecord) -> Result<ImageBuffer> {
    if (features.height(), features.width()) != crop.padded {
        return Err(Error::Contract(format!(
            "expected {}x{} features, got {}x{}",
            crop.padded.0,
            crop.padded.1,
            features.height(),
            features.width()
        )));
    }
    let (h, w) = crop.scaled;
    let cropped = FeatureMap::from_fn(3, h, w, |c, y, x| features.get(c, y, x));
    ImageBuffer::from_features(&cropped)
}

/// Applies the image's resize and padding to its segmentation map.
pub fn prepare_segmentation(seg: &SegmentationMap, crop: &CropRecord) -> Result<SegmentationMap> {
    if (seg.height(), seg.width()) != crop.original {
        return Err(Error::SegmentationSize {
            seg: (seg.height(), seg.width()),
            image: crop.original,
        });
    }
    let scaled = seg.resize_nearest(crop.scaled.0, crop.scaled.1);
    let (ph, pw) = crop.padded;
    let mut labels = Vec::with_capacity(ph * pw);
    for y in 0..ph {
        for x in 0..pw {
            labels.push(scaled.get(mirror(y, crop.scaled.0), mirror(x, crop.scaled.1)));
        }
    }
    SegmentationMap::new(ph, pw, labels)
}

fn ensure_exists(path: &Path, what: &'static str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::NotFound {
            what,
            path: path.to_path_buf(),
        });
    }
    Ok(())
}

fn open_image(path: &Path, what: &'static str) -> Result<image::DynamicImage> {
    ensure_exists(path, what)?;
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::Decode {
            what,
            path: path.to_path_buf(),
            source,
        })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage {
            what,
            path: path.to_path_buf(),
        });
    }
    Ok(img)
}

/// Reads a PNG or JPEG as 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>, what: &'static str) -> Result<ImageBuffer> {
    ImageBuffer::from_rgb(open_image(path.as_ref(), what)?.into_rgb8())
}

/// Grayscale value of each pixel is its label id.
pub fn load_segmentation(path: impl AsRef<Path>, what: &'static str) -> Result<SegmentationMap> {
    let gray: GrayImage = open_image(path.as_ref(), what)?.into_luma8();
    let (w, h) = gray.dimensions();
    SegmentationMap::new(
        h as usize,
        w as usize,
        gray.into_raw().into_iter().map(u32::from).collect(),
    )
}

pub fn save_png(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    image
        .to_rgb()
        .save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Options for one stylization run.
#[derive(Clone, Debug)]
pub struct StylizeOptions {
    pub unpool: UnpoolMode,
    pub pooling: String,
    pub transform: String,
    pub alpha: f32,
    pub skip_wct: bool,
    pub decoder_wct: bool,
    pub multi_level: bool,
    pub max_side: Option<usize>,
}

impl Default for StylizeOptions {
    fn default() -> Self {
        Self {
            unpool: UnpoolMode::Concat,
            pooling: "haar".into(),
            transform: "wct".into(),
            alpha: 1.0,
            skip_wct: false,
            decoder_wct: false,
            multi_level: false,
            max_side: None,
        }
    }
}

impl StylizeOptions {
    pub fn schedule(&self) -> Result<StylizeSchedule> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Contract(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(StylizeSchedule {
            encoder_wct: true,
            skip_wct: self.skip_wct,
            decoder_wct: self.decoder_wct,
            multi_level: self.multi_level,
            transform: transform_by_name(&self.transform)?,
            alpha: self.alpha,
            ..StylizeSchedule::default()
        })
    }

    /// Checks names and flag combinations without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        let pooling = pooling_by_name(&self.pooling)?;
        if self.unpool == UnpoolMode::Concat && pooling.components() != 4 {
            return Err(Error::Contract(format!(
                "--pooling {} cannot be combined with concat unpooling; use --unpool sum",
                self.pooling
            )));
        }
        Ok(())
    }

    pub fn build_model(&self, weights: &weights::WeightStore) -> Result<Model> {
        build_model(weights, self.unpool, pooling_by_name(&self.pooling)?)
    }
}

/// In-memory inputs for [`stylize_images`].
pub struct StylizeInputs<'a> {
    pub content: &'a ImageBuffer,
    pub style: &'a ImageBuffer,
    pub segmentation: Option<(&'a SegmentationMap, &'a SegmentationMap)>,
}

#[derive(Clone, Debug)]
pub struct StylizeOutcome {
    pub image: ImageBuffer,
    pub applied: Vec<Site>,
}

/// prepare → stylize → unprepare (clamped, quantized).
pub fn stylize_images(
    model: &Model,
    inputs: &StylizeInputs<'_>,
    schedule: &StylizeSchedule,
    max_side: Option<usize>,
) -> Result<StylizeOutcome> {
    let (content, crop) = prepare(inputs.content, max_side);
    let (style, style_crop) = prepare(inputs.style, max_side);
    let segs = match inputs.segmentation {
        Some((c, s)) => Some((prepare_segmentation(c, &crop)?, prepare_segmentation(s, &style_crop)?)),
        None => None,
    };
    let segmentation = segs.as_ref().map(|(c, s)| Segmentation { content: c, style: s });
    let out = stylize(model, &content, &style, segmentation, schedule)?;
    Ok(StylizeOutcome {
        image: unprepare(&out.image, &crop)?,
        applied: out.applied,
    })
}

/// Edge SSIM (content vs output) and style loss (style vs output). Inputs
/// are padded to multiples of 8 only for the encoder pass.
pub fn evaluate_images(
    model: &Model,
    content: &ImageBuffer,
    style: &ImageBuffer,
    output: &ImageBuffer,
) -> Result<MetricReport> {
    if (content.width, content.height) != (output.width, output.height) {
        return Err(Error::Contract(format!(
            "content is {}x{} but output is {}x{}",
            content.width, content.height, output.width, output.height
        )));
    }
    let ssim_edges = metrics::ssim(
        &metrics::edge_response(&content.to_features())?,
        &metrics::edge_response(&output.to_features())?,
    )?;
    let loss = metrics::style_loss(&prepare(style, None).0, &prepare(output, None).0, model)?;
    Ok(MetricReport {
        ssim_edges,
        style_loss: loss.total,
        per_layer: loss.per_layer.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
    })
}

/// File-based stylization request.
#[derive(Clone, Debug)]
pub struct StylizeJob {
    pub content: PathBuf,
    pub style: PathBuf,
    pub content_seg: Option<PathBuf>,
    pub style_seg: Option<PathBuf>,
    pub weights: PathBuf,
    pub output: PathBuf,
    pub options: StylizeOptions,
    pub with_report: bool,
}

#[derive(Clone, Debug)]
pub struct StylizeRun {
    pub image: ImageBuffer,
    pub applied: Vec<Site>,
    pub report: Option<MetricReport>,
}

/// Full file pipeline: load → prepare → stylize → unprepare → PNG.
pub fn run_stylize(job: &StylizeJob) -> Result<StylizeRun> {
    job.options.validate()?;
    let content = load_image(&job.content, "content image")?;
    let style = load_image(&job.style, "style image")?;
    let segs = match (&job.content_seg, &job.style_seg) {
        (Some(c), Some(s)) => Some((
            load_segmentation(c, "content segmentation")?,
            load_segmentation(s, "style segmentation")?,
        )),
        (None, None) => None,
        _ => {
            return Err(Error::Contract(
                "content and style segmentation must be given together".into(),
            ))
        }
    };
    ensure_exists(&job.weights, "weights file")?;
    let store = weights::load(&job.weights)?;
    let model = job.options.build_model(&store)?;
    let schedule = job.options.schedule()?;
    let inputs = StylizeInputs {
        content: &content,
        style: &style,
        segmentation: segs.as_ref().map(|(c, s)| (c, s)),
    };
    let outcome = stylize_images(&model, &inputs, &schedule, job.options.max_side)?;
    save_png(&outcome.image, &job.output)?;
    let report = if job.with_report {
        let reference = if outcome.image.width == content.width && outcome.image.height == content.height {
            content.clone()
        } else {
            let (c, crop) = prepare(&content, job.options.max_side);
            unprepare(&c, &crop)?
        };
        Some(evaluate_images(&model, &reference, &style, &outcome.image)?)
    } else {
        None
    };
    Ok(StylizeRun {
        image: outcome.image,
        applied: outcome.applied,
        report,
    })
}

/// Convenience for callers holding a pooling name rather than a registry entry.
pub fn identity_model(pooling: &str, mode: UnpoolMode) -> Result<Model> {
    let p: Arc<dyn crate::wavelet::Pooling> = pooling_by_name(pooling)?;
    Model::identity_plumbing(p, mode)
}
