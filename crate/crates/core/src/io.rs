//! Versioned interchange formats.
//!
//! Three JSON schemas, all carrying `format_version: 1`:
//!
//! * pose clip — header (topology name, fps, frame count, pixel dimensions)
//!   plus per-frame `x`/`y`/`confidence` arrays in topology order. Written
//!   canonically (pretty, fixed field order, shortest round-trip floats), so
//!   equal clips serialize to equal bytes.
//! * single-frame detector output — named keypoints with confidences, the
//!   shape pose detectors export for a reference image.
//! * 3D motion — per-frame joint arrays from a text-to-motion generator.
//!
//! `read_reference` accepts either a one-frame pose clip or the detector
//! schema.

use crate::error::{Error, Result};
use crate::geom::{Point2, Point3};
use crate::scalar::Scalar;
use crate::skeleton::{topologies, KeypointFrame, MotionClip, MotionClip3D, SkeletonTopology};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PoseClipDoc {
    format_version: u32,
    topology: String,
    fps: f64,
    frame_count: usize,
    width: u32,
    height: u32,
    frames: Vec<FrameArrays>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameArrays {
    x: Vec<f64>,
    y: Vec<f64>,
    confidence: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectorDoc {
    format_version: u32,
    topology: String,
    width: u32,
    height: u32,
    keypoints: Vec<DetectorKeypoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectorKeypoint {
    name: String,
    x: f64,
    y: f64,
    confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Motion3dDoc {
    format_version: u32,
    fps: f64,
    joint_count: usize,
    frame_count: usize,
    frames: Vec<Frame3dArrays>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Frame3dArrays {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

fn to_canonical_bytes<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("serializable document");
    bytes.push(b'\n');
    bytes
}

fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::ParseError(e.to_string()))
}

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::ParseError(format!(
            "unsupported format_version {found}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn build_clip_doc<S: Scalar>(clip: &MotionClip<S>, width: u32, height: u32) -> PoseClipDoc {
    PoseClipDoc {
        format_version: FORMAT_VERSION,
        topology: clip.topology().name().to_string(),
        fps: clip.fps().as_f64(),
        frame_count: clip.len(),
        width,
        height,
        frames: clip
            .frames()
            .iter()
            .map(|f| FrameArrays {
                x: f.positions().iter().map(|p| p.x.as_f64()).collect(),
                y: f.positions().iter().map(|p| p.y.as_f64()).collect(),
                confidence: f.confidences().iter().map(|c| c.as_f64()).collect(),
            })
            .collect(),
    }
}

/// The pose clip document as a JSON value, for embedding in service payloads.
pub fn clip_to_doc<S: Scalar>(clip: &MotionClip<S>, width: u32, height: u32) -> serde_json::Value {
    serde_json::to_value(build_clip_doc(clip, width, height)).expect("serializable clip")
}

/// Canonical pose clip serialization: identical clips yield identical bytes.
pub fn write_clip<S: Scalar>(clip: &MotionClip<S>, width: u32, height: u32) -> Vec<u8> {
    to_canonical_bytes(&build_clip_doc(clip, width, height))
}

/// Parsed pose clip plus the pixel dimensions recorded in its header.
pub struct ReadClip<S> {
    pub clip: MotionClip<S>,
    pub width: u32,
    pub height: u32,
}

pub fn read_clip<S: Scalar>(bytes: &[u8]) -> Result<ReadClip<S>> {
    let doc: PoseClipDoc = parse(bytes)?;
    clip_from_doc(doc)
}

pub fn clip_from_value<S: Scalar>(value: serde_json::Value) -> Result<ReadClip<S>> {
    let doc: PoseClipDoc =
        serde_json::from_value(value).map_err(|e| Error::ParseError(e.to_string()))?;
    clip_from_doc(doc)
}

fn clip_from_doc<S: Scalar>(doc: PoseClipDoc) -> Result<ReadClip<S>> {
    check_version(doc.format_version)?;
    let topology = topologies::by_name(&doc.topology)?;
    if doc.frame_count != doc.frames.len() {
        return Err(Error::ParseError(format!(
            "header frame_count {} does not match {} frames",
            doc.frame_count,
            doc.frames.len()
        )));
    }
    let n = topology.len();
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (i, f) in doc.frames.iter().enumerate() {
        if f.x.len() != n || f.y.len() != n || f.confidence.len() != n {
            return Err(Error::ParseError(format!(
                "frame {i} arrays do not match topology '{}' ({n} keypoints)",
                doc.topology
            )));
        }
        let positions = f
            .x
            .iter()
            .zip(&f.y)
            .map(|(&x, &y)| Point2::new(S::from_f64_c(x), S::from_f64_c(y)))
            .collect();
        let confidence = f.confidence.iter().map(|&c| S::from_f64_c(c)).collect();
        frames.push(
            KeypointFrame::new(positions, confidence)
                .map_err(|e| Error::ParseError(e.to_string()))?,
        );
    }
    if !(doc.fps > 0.0) {
        return Err(Error::ParseError(format!("fps {} must be positive", doc.fps)));
    }
    let clip = MotionClip::new(topology, frames, S::from_f64_c(doc.fps))
        .map_err(|e| Error::ParseError(e.to_string()))?;
    Ok(ReadClip {
        clip,
        width: doc.width,
        height: doc.height,
    })
}

/// A reference keypoint frame read from detector output (either schema).
pub struct ReadReference<S> {
    pub frame: KeypointFrame<S>,
    pub topology: Arc<SkeletonTopology>,
    pub width: u32,
    pub height: u32,
}

pub fn read_reference<S: Scalar>(bytes: &[u8]) -> Result<ReadReference<S>> {
    let value: serde_json::Value = parse(bytes)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::ParseError("expected a JSON object".into()))?;
    if obj.contains_key("frames") {
        let read = clip_from_value::<S>(value)?;
        if read.clip.len() != 1 {
            return Err(Error::ParseError(format!(
                "reference clip must have exactly 1 frame, found {}",
                read.clip.len()
            )));
        }
        let topology = read.clip.topology().clone();
        return Ok(ReadReference {
            frame: read.clip.frame(0).clone(),
            topology,
            width: read.width,
            height: read.height,
        });
    }
    if !obj.contains_key("keypoints") {
        return Err(Error::ParseError(
            "neither a pose clip (frames) nor detector output (keypoints)".into(),
        ));
    }
    let doc: DetectorDoc =
        serde_json::from_value(value).map_err(|e| Error::ParseError(e.to_string()))?;
    check_version(doc.format_version)?;
    let topology = topologies::by_name(&doc.topology)?;
    let mut frame = KeypointFrame::absent(topology.len());
    for kp in &doc.keypoints {
        let index = topology.index_of(&kp.name).ok_or_else(|| {
            Error::ParseError(format!(
                "keypoint '{}' does not exist in topology '{}'",
                kp.name, doc.topology
            ))
        })?;
        if !(0.0..=1.0).contains(&kp.confidence) {
            return Err(Error::ParseError(format!(
                "keypoint '{}' confidence {} outside [0, 1]",
                kp.name, kp.confidence
            )));
        }
        frame.set(
            index,
            Point2::new(S::from_f64_c(kp.x), S::from_f64_c(kp.y)),
            S::from_f64_c(kp.confidence),
        );
    }
    Ok(ReadReference {
        frame,
        topology,
        width: doc.width,
        height: doc.height,
    })
}

/// Canonical serialization of a detector-style single frame. Useful for
/// writing fixtures and for services echoing references.
pub fn write_reference<S: Scalar>(
    frame: &KeypointFrame<S>,
    topology: &SkeletonTopology,
    width: u32,
    height: u32,
) -> Vec<u8> {
    let doc = DetectorDoc {
        format_version: FORMAT_VERSION,
        topology: topology.name().to_string(),
        width,
        height,
        keypoints: (0..topology.len())
            .map(|i| DetectorKeypoint {
                name: topology.keypoint_name(i).to_string(),
                x: frame.position(i).x.as_f64(),
                y: frame.position(i).y.as_f64(),
                confidence: frame.confidence(i).as_f64(),
            })
            .collect(),
    };
    to_canonical_bytes(&doc)
}

pub fn write_motion3d<S: Scalar>(clip: &MotionClip3D<S>) -> Vec<u8> {
    let doc = Motion3dDoc {
        format_version: FORMAT_VERSION,
        fps: clip.fps().as_f64(),
        joint_count: clip.joint_count(),
        frame_count: clip.len(),
        frames: clip
            .frames()
            .iter()
            .map(|f| Frame3dArrays {
                x: f.iter().map(|p| p.x.as_f64()).collect(),
                y: f.iter().map(|p| p.y.as_f64()).collect(),
                z: f.iter().map(|p| p.z.as_f64()).collect(),
            })
            .collect(),
    };
    to_canonical_bytes(&doc)
}

pub fn read_motion3d<S: Scalar>(bytes: &[u8]) -> Result<MotionClip3D<S>> {
    let doc: Motion3dDoc = parse(bytes)?;
    check_version(doc.format_version)?;
    if doc.frame_count != doc.frames.len() {
        return Err(Error::ParseError(format!(
            "header frame_count {} does not match {} frames",
            doc.frame_count,
            doc.frames.len()
        )));
    }
    let frames = doc
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.x.len() != doc.joint_count
                || f.y.len() != doc.joint_count
                || f.z.len() != doc.joint_count
            {
                return Err(Error::ParseError(format!(
                    "frame {i} arrays do not match joint_count {}",
                    doc.joint_count
                )));
            }
            Ok(f.x
                .iter()
                .zip(&f.y)
                .zip(&f.z)
                .map(|((&x, &y), &z)| {
                    Point3::new(S::from_f64_c(x), S::from_f64_c(y), S::from_f64_c(z))
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    if !(doc.fps > 0.0) {
        return Err(Error::ParseError(format!("fps {} must be positive", doc.fps)));
    }
    MotionClip3D::new(frames, S::from_f64_c(doc.fps)).map_err(|e| Error::ParseError(e.to_string()))
}
