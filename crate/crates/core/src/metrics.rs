//! Evaluation metrics.
//!
//! The motion-alignment score embeds a machine description of the rendered
//! video and the input motion text, and reports their cosine similarity.
//! Description and embedding are pluggable providers: external services when
//! endpoints are configured, deterministic offline fallbacks otherwise.
//! PSNR and SSIM are the classical frame metrics; the neural metrics that
//! the report format also lists (LPIPS, DreamSim, FID, FVD) require external
//! feature extractors and are emitted as explicit "external" markers.
//!
//! Alternatives considered for the alignment metric and rejected: binary
//! yes/no prompting (strong yes bias), forced-choice between motions
//! (ambiguous hedged answers), and multi-class labeling (unreliable). The
//! description-similarity score is the variant implemented here.

use crate::error::{Error, Result};
use crate::render::Raster;
use crate::scalar::Scalar;
use crate::services;
use crate::skeleton::MotionClip;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

/// Prompt sent to the describer service.
pub const DESCRIBE_PROMPT: &str = "describe the motion in the video";

/// PSNR reported for identical images (zero MSE), so scores stay bounded
/// and comparable in reports.
pub const PSNR_CAP_DB: f64 = 99.0;

// ---------------------------------------------------------------------------
// vector kernel

/// Cosine similarity in [-1, 1]. The denominator is sqrt(dot(u,u)*dot(v,v)),
/// which makes cosine(u, u) exactly 1.0 for any nonzero u.
pub fn cosine<S: Scalar>(u: &[S], v: &[S]) -> Result<S> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let mut uv = S::zero();
    let mut uu = S::zero();
    let mut vv = S::zero();
    for (&a, &b) in u.iter().zip(v) {
        uv = uv + a * b;
        uu = uu + a * a;
        vv = vv + b * b;
    }
    if uu == S::zero() || vv == S::zero() {
        return Err(Error::ZeroVector);
    }
    Ok(uv / (uu * vv).sqrt())
}

// ---------------------------------------------------------------------------
// frame kernels

fn check_dims(a: &Raster, b: &Raster) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            (a.width() * a.height()) as usize,
            (b.width() * b.height()) as usize,
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in decibels over all RGB channels, capped at
/// [`PSNR_CAP_DB`] for identical images.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    check_dims(a, b)?;
    let mut sum = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = f64::from(x) - f64::from(y);
        sum += d * d;
    }
    let mse = sum / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// BT.601 luminance of an RGB raster, kept in f64 (no requantization).
fn luminance(r: &Raster) -> Vec<f64> {
    r.data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian filter: rows then columns.
fn gaussian_filter(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let out_w = width - SSIM_WINDOW + 1;
    let out_h = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; out_w * height];
    for y in 0..height {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * data[y * width + x + i];
            }
            rows[y * out_w + x] = acc;
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * rows[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) over the
/// BT.601 luminance, C1 = (0.01*255)^2, C2 = (0.03*255)^2.
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: a.width(),
            height: a.height(),
            min: SSIM_WINDOW as u32,
        });
    }
    let x = luminance(a);
    let y = luminance(b);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
    let mu_x = gaussian_filter(&x, w, h);
    let mu_y = gaussian_filter(&y, w, h);
    let m_xx = gaussian_filter(&xx, w, h);
    let m_yy = gaussian_filter(&yy, w, h);
    let m_xy = gaussian_filter(&xy, w, h);

    let c1 = (0.01 * 255.0) * (0.01 * 255.0);
    let c2 = (0.03 * 255.0) * (0.03 * 255.0);
    let mut sum = 0.0;
    for i in 0..mu_x.len() {
        let sigma_x2 = m_xx[i] - mu_x[i] * mu_x[i];
        let sigma_y2 = m_yy[i] - mu_y[i] * mu_y[i];
        let sigma_xy = m_xy[i] - mu_x[i] * mu_y[i];
        let numerator = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * sigma_xy + c2);
        let denominator =
            (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (sigma_x2 + sigma_y2 + c2);
        sum += numerator / denominator;
    }
    Ok(sum / mu_x.len() as f64)
}

// ---------------------------------------------------------------------------
// providers

pub trait EmbeddingProvider {
    /// Provider identity recorded in report metadata.
    fn identity(&self) -> String;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    /// Embeds two texts into one comparable space. Default: two independent
    /// calls; pair-based providers (bag-of-words) override this.
    fn embed_pair(&self, a: &str, b: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.embed(a)?, self.embed(b)?))
    }
}

pub trait DescriptionProvider {
    fn identity(&self) -> String;

    /// Maps an ordered set of rendered frame files to a text description.
    fn describe(&self, frames: &[PathBuf]) -> Result<String>;
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Offline deterministic embedder: raw term-frequency vectors. For a pair,
/// the space is the sorted union vocabulary of the two texts; for a single
/// text, its own sorted vocabulary.
#[derive(Debug, Default, Clone)]
pub struct BagOfWordsEmbedder;

impl BagOfWordsEmbedder {
    fn count_over(vocabulary: &[String], tokens: &[String]) -> Vec<f64> {
        vocabulary
            .iter()
            .map(|v| tokens.iter().filter(|t| *t == v).count() as f64)
            .collect()
    }
}

impl EmbeddingProvider for BagOfWordsEmbedder {
    fn identity(&self) -> String {
        "bag-of-words-tf/v1".into()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        let mut vocabulary: Vec<String> = tokens.clone();
        vocabulary.sort();
        vocabulary.dedup();
        Ok(Self::count_over(&vocabulary, &tokens))
    }

    fn embed_pair(&self, a: &str, b: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let ta = tokenize(a);
        let tb = tokenize(b);
        let mut vocabulary: Vec<String> = ta.iter().chain(&tb).cloned().collect();
        vocabulary.sort();
        vocabulary.dedup();
        Ok((
            Self::count_over(&vocabulary, &ta),
            Self::count_over(&vocabulary, &tb),
        ))
    }
}

/// Client for an external embedding service.
/// Request: `{"text": ...}`; response: `{"vector": [f64, ...]}`.
pub struct ServiceEmbedder {
    pub endpoint: String,
}

impl EmbeddingProvider for ServiceEmbedder {
    fn identity(&self) -> String {
        format!("service:{}", self.endpoint)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let response = services::post_json(&self.endpoint, &json!({ "text": text }))?;
        let vector = response
            .get("vector")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::ContractViolation("embedder response missing 'vector'".into()))?;
        let values: Option<Vec<f64>> = vector.iter().map(|v| v.as_f64()).collect();
        let values =
            values.ok_or_else(|| Error::ContractViolation("non-numeric embedding".into()))?;
        if values.is_empty() {
            return Err(Error::ContractViolation("empty embedding".into()));
        }
        Ok(values)
    }
}

/// Replays a fixed description (recorded transcript) regardless of input.
pub struct ReplayDescriber {
    pub description: String,
}

impl DescriptionProvider for ReplayDescriber {
    fn identity(&self) -> String {
        "replay/v1".into()
    }

    fn describe(&self, _frames: &[PathBuf]) -> Result<String> {
        Ok(self.description.clone())
    }
}

/// Client for an external video-description service. Frames are sent
/// base64-encoded. Request: `{"prompt": ..., "frames": [b64, ...]}`;
/// response: `{"description": ...}`.
pub struct ServiceDescriber {
    pub endpoint: String,
}

impl DescriptionProvider for ServiceDescriber {
    fn identity(&self) -> String {
        format!("service:{}", self.endpoint)
    }

    fn describe(&self, frames: &[PathBuf]) -> Result<String> {
        use base64::Engine;
        let engine = base64::engine::general_purpose::STANDARD;
        let encoded = frames
            .iter()
            .map(|p| std::fs::read(p).map(|bytes| engine.encode(bytes)))
            .collect::<std::io::Result<Vec<_>>>()?;
        let request = json!({ "prompt": DESCRIBE_PROMPT, "frames": encoded });
        let response = services::post_json(&self.endpoint, &request)?;
        response
            .get("description")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                Error::ContractViolation("describer response missing 'description'".into())
            })
    }
}

/// Offline describer: derives a deterministic description from per-group
/// displacement statistics of the pose clip the frames were rendered from.
pub struct ClipMotionDescriber {
    clip: MotionClip<f64>,
}

impl ClipMotionDescriber {
    pub fn new(clip: MotionClip<f64>) -> Self {
        Self { clip }
    }

    fn group_displacement(&self, members: &[&str]) -> f64 {
        let topology = self.clip.topology();
        let indices: Vec<usize> = members
            .iter()
            .filter_map(|name| topology.index_of(name))
            .collect();
        if indices.is_empty() || self.clip.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut samples = 0usize;
        for pair in self.clip.frames().windows(2) {
            for &i in &indices {
                if pair[0].is_present(i) && pair[1].is_present(i) {
                    total += (pair[1].position(i) - pair[0].position(i)).norm();
                    samples += 1;
                }
            }
        }
        if samples == 0 {
            0.0
        } else {
            total / samples as f64
        }
    }
}

/// Mean per-frame displacement above which a body part counts as moving.
const MOTION_THRESHOLD: f64 = 0.002;

impl DescriptionProvider for ClipMotionDescriber {
    fn identity(&self) -> String {
        "pose-displacement/v1".into()
    }

    fn describe(&self, frames: &[PathBuf]) -> Result<String> {
        if frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        let parts: [(&str, &[&str]); 5] = [
            ("the left arm", &["left_shoulder", "left_elbow", "left_wrist"]),
            ("the right arm", &["right_shoulder", "right_elbow", "right_wrist"]),
            ("the left leg", &["left_hip", "left_knee", "left_ankle"]),
            ("the right leg", &["right_hip", "right_knee", "right_ankle"]),
            ("the head", &["nose", "left_eye", "right_eye"]),
        ];
        let mut moving: Vec<(&str, f64)> = parts
            .iter()
            .map(|(label, members)| (*label, self.group_displacement(members)))
            .filter(|(_, d)| *d > MOTION_THRESHOLD)
            .collect();
        if moving.is_empty() {
            return Ok("a person stands still".into());
        }
        moving.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite displacements"));
        let labels: Vec<&str> = moving.iter().map(|(l, _)| *l).collect();
        let list = match labels.len() {
            1 => labels[0].to_string(),
            _ => format!(
                "{} and {}",
                labels[..labels.len() - 1].join(", "),
                labels[labels.len() - 1]
            ),
        };
        Ok(format!("a person is moving {list}"))
    }
}

/// Cosine similarity between the embedded description of the rendered video
/// and the embedded motion text.
pub fn motion_score(
    frames: &[PathBuf],
    motion_text: &str,
    describer: &dyn DescriptionProvider,
    embedder: &dyn EmbeddingProvider,
) -> Result<f64> {
    let description = describer.describe(frames)?;
    let (u, v) = embedder.embed_pair(&description, motion_text)?;
    cosine(&u, &v)
}

// ---------------------------------------------------------------------------
// report

/// Metric columns in the canonical report order.
pub const REPORT_COLUMNS: [&str; 7] = [
    "PSNR", "SSIM", "LPIPS", "DreamSim", "FID", "FVD", "MotionScore",
];

/// Metrics that need external neural feature extractors; their report cells
/// carry an "external" marker instead of a value.
pub const EXTERNAL_COLUMNS: [&str; 4] = ["LPIPS", "DreamSim", "FID", "FVD"];

#[derive(Debug, Clone, Serialize)]
pub struct MetricEntry {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub format_version: u32,
    pub metrics: Vec<MetricEntry>,
    pub describer: String,
    pub embedder: String,
    pub frame_count: usize,
    pub sampled_frames: usize,
}

impl MetricReport {
    pub fn new(
        psnr_db: Option<f64>,
        ssim_value: Option<f64>,
        score: f64,
        describer: String,
        embedder: String,
        frame_count: usize,
        sampled_frames: usize,
    ) -> Self {
        let metrics = REPORT_COLUMNS
            .iter()
            .map(|&name| {
                let value = match name {
                    "PSNR" => psnr_db,
                    "SSIM" => ssim_value,
                    "MotionScore" => Some(score),
                    _ => None,
                };
                let marker = EXTERNAL_COLUMNS
                    .contains(&name)
                    .then(|| "external".to_string());
                MetricEntry {
                    name: name.to_string(),
                    value,
                    marker,
                }
            })
            .collect();
        Self {
            format_version: crate::io::FORMAT_VERSION,
            metrics,
            describer,
            embedder,
            frame_count,
            sampled_frames,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("serializable report");
        bytes.push(b'\n');
        bytes
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Evenly spaced sample of `count` indices from `0..len` (all of them when
/// `len <= count`). Deterministic stand-in for random frame selection.
pub fn sample_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|i| i * len / count).collect()
}
