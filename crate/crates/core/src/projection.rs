//! Orthographic projection of 3D joint clips into 2D keypoint clips.
//!
//! The projection drops z, optionally flips y (model space is y-up, image
//! space is y-down), then scales and translates the *whole clip* uniformly so
//! the union bounding box over all frames fits a target box. One scale and
//! offset per clip; per-frame fitting would jitter the apparent body size.

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::scalar::Scalar;
use crate::skeleton::{KeypointFrame, MotionClip, MotionClip3D, SkeletonTopology};
use std::sync::Arc;

/// Normalized target box the projected body is fitted into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBox<S> {
    pub center_x: S,
    pub center_y: S,
    pub half_width: S,
    pub half_height: S,
}

impl<S: Scalar> FitBox<S> {
    pub fn new(center_x: S, center_y: S, half_width: S, half_height: S) -> Result<Self> {
        if !(half_width > S::zero() && half_height > S::zero()) {
            return Err(Error::InvalidConfig(
                "fit box half extents must be positive".into(),
            ));
        }
        let inside = |v: S| v >= S::zero() && v <= S::one();
        if !(inside(center_x - half_width)
            && inside(center_x + half_width)
            && inside(center_y - half_height)
            && inside(center_y + half_height))
        {
            return Err(Error::InvalidConfig(
                "fit box must lie within [0, 1] x [0, 1]".into(),
            ));
        }
        Ok(Self {
            center_x,
            center_y,
            half_width,
            half_height,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig<S> {
    /// Negate y after dropping z. Defaults on: generator model space is y-up.
    pub flip_y: bool,
    /// Target box; `None` leaves raw projected coordinates.
    pub fit_box: Option<FitBox<S>>,
}

impl<S: Scalar> Default for ProjectionConfig<S> {
    fn default() -> Self {
        Self {
            flip_y: true,
            fit_box: Some(default_fit_box()),
        }
    }
}

/// Centered box with a 0.35 x 0.45 half extent, leaving margin for the
/// affine alignment stage to move the body toward the reference.
pub fn default_fit_box<S: Scalar>() -> FitBox<S> {
    FitBox::new(
        S::half(),
        S::half(),
        S::from_f64_c(0.35),
        S::from_f64_c(0.45),
    )
    .expect("default fit box is valid")
}

/// Projects a 3D joint clip onto the body keypoints of `topology`.
///
/// Joint order must match the topology's body keypoint order; every joint
/// projects with confidence 1, non-body keypoints come out absent.
pub fn project<S: Scalar>(
    clip3d: &MotionClip3D<S>,
    config: &ProjectionConfig<S>,
    topology: Arc<SkeletonTopology>,
) -> Result<MotionClip<S>> {
    if clip3d.is_empty() {
        return Err(Error::EmptyClip);
    }
    let body: Vec<usize> = topology.body_indices().collect();
    if clip3d.joint_count() != body.len() {
        return Err(Error::JointCountMismatch {
            expected: body.len(),
            found: clip3d.joint_count(),
        });
    }

    let flip = if config.flip_y { -S::one() } else { S::one() };
    let dropped: Vec<Vec<Point2<S>>> = clip3d
        .frames()
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|j| Point2::new(j.x, flip * j.y))
                .collect()
        })
        .collect();

    let map = match &config.fit_box {
        Some(fit) => clip_fit_transform(&dropped, fit),
        None => FitTransform::identity(),
    };

    let frames = dropped
        .iter()
        .map(|points| {
            let mut out = KeypointFrame::absent(topology.len());
            for (joint, &kp) in points.iter().zip(&body) {
                out.set(kp, map.apply(*joint), S::one());
            }
            out
        })
        .collect();
    MotionClip::new(topology, frames, clip3d.fps())
}

struct FitTransform<S> {
    scale: S,
    offset: Point2<S>,
}

impl<S: Scalar> FitTransform<S> {
    fn identity() -> Self {
        Self {
            scale: S::one(),
            offset: Point2::new(S::zero(), S::zero()),
        }
    }

    fn apply(&self, p: Point2<S>) -> Point2<S> {
        p.scale(self.scale) + self.offset
    }
}

/// Uniform scale + offset mapping the union bounding box of all frames into
/// the fit box, aspect ratio preserved (letterboxed on the loose axis).
fn clip_fit_transform<S: Scalar>(frames: &[Vec<Point2<S>>], fit: &FitBox<S>) -> FitTransform<S> {
    let mut min = Point2::new(S::infinity(), S::infinity());
    let mut max = Point2::new(S::neg_infinity(), S::neg_infinity());
    for p in frames.iter().flatten() {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let width = max.x - min.x;
    let height = max.y - min.y;
    let sx = (width > S::zero()).then(|| S::two() * fit.half_width / width);
    let sy = (height > S::zero()).then(|| S::two() * fit.half_height / height);
    let scale = match (sx, sy) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => S::one(), // single point: center it unscaled
    };
    let box_center = Point2::new(fit.center_x, fit.center_y);
    let bbox_center = Point2::new(
        min.x + (max.x - min.x) * S::half(),
        min.y + (max.y - min.y) * S::half(),
    );
    FitTransform {
        scale,
        offset: box_center - bbox_center.scale(scale),
    }
}
