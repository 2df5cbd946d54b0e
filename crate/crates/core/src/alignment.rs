//! Affine alignment of generated keypoints to the reference body.
//!
//! The vertical scale and offset come from a degree-1 least-squares fit of
//! detected y-coordinates against reference y-coordinates; the horizontal
//! scale is the vertical scale corrected by the frame and reference aspect
//! ratios; the horizontal offset is the mean residual. One parameter set is
//! fitted per clip and applied to every frame.

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::scalar::Scalar;
use crate::skeleton::{KeypointFrame, MotionClip};

/// Fitted affine parameters: per-axis scale and offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams<S> {
    pub a_x: S,
    pub a_y: S,
    pub b_x: S,
    pub b_y: S,
}

impl<S: Scalar> AffineParams<S> {
    pub fn identity() -> Self {
        Self {
            a_x: S::one(),
            a_y: S::one(),
            b_x: S::zero(),
            b_y: S::zero(),
        }
    }

    pub fn apply(&self, p: Point2<S>) -> Point2<S> {
        Point2::new(self.a_x * p.x + self.b_x, self.a_y * p.y + self.b_y)
    }

    /// Inverse transform; meaningful only for non-degenerate scales.
    pub fn inverse(&self) -> Self {
        Self {
            a_x: S::one() / self.a_x,
            a_y: S::one() / self.a_y,
            b_x: -self.b_x / self.a_x,
            b_y: -self.b_y / self.a_y,
        }
    }
}

/// Pixel dimensions of the skeleton video frame and of the reference image.
/// They enter the math only through dimensionless ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub frame_height: u32,
    pub frame_width: u32,
    pub ref_height: u32,
    pub ref_width: u32,
}

impl FrameGeometry {
    pub fn new(frame_height: u32, frame_width: u32, ref_height: u32, ref_width: u32) -> Result<Self> {
        if frame_height == 0 || frame_width == 0 || ref_height == 0 || ref_width == 0 {
            return Err(Error::InvalidConfig(
                "frame geometry dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            frame_height,
            frame_width,
            ref_height,
            ref_width,
        })
    }

    pub fn square(side: u32) -> Self {
        Self::new(side, side, side, side).expect("positive side")
    }
}

/// Degree-1 least-squares fit of `a*y_detected + b ~ y_reference`, solved by
/// the closed-form normal equations.
pub fn fit_y<S: Scalar>(y_detected: &[S], y_reference: &[S]) -> Result<(S, S)> {
    if y_detected.len() != y_reference.len() {
        return Err(Error::DimensionMismatch(y_detected.len(), y_reference.len()));
    }
    let n = y_detected.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} samples, need at least 2")));
    }
    let nf = S::from_usize(n).expect("sample count fits scalar");
    let mean_d = y_detected.iter().fold(S::zero(), |a, &v| a + v) / nf;
    let mean_r = y_reference.iter().fold(S::zero(), |a, &v| a + v) / nf;
    let mut var_d = S::zero();
    let mut cov = S::zero();
    for (&d, &r) in y_detected.iter().zip(y_reference) {
        var_d = var_d + (d - mean_d) * (d - mean_d);
        cov = cov + (d - mean_d) * (r - mean_r);
    }
    if var_d == S::zero() {
        return Err(Error::DegenerateFit(
            "zero variance in detected y-coordinates".into(),
        ));
    }
    let a = cov / var_d;
    let b = mean_r - a * mean_d;
    Ok((a, b))
}

/// Horizontal scale from the vertical scale and the two aspect ratios.
/// Rearranged as a_y * (f_w * ref_w) / (f_h * ref_h) so integer pixel
/// products stay exact in floating point.
pub fn derive_x_scale<S: Scalar>(a_y: S, geom: &FrameGeometry) -> S {
    let num = S::from_u32(geom.frame_width).expect("width fits scalar")
        * S::from_u32(geom.ref_width).expect("width fits scalar");
    let den = S::from_u32(geom.frame_height).expect("height fits scalar")
        * S::from_u32(geom.ref_height).expect("height fits scalar");
    a_y * num / den
}

/// Horizontal offset: mean of the reference-minus-scaled-detected differences.
pub fn fit_x_offset<S: Scalar>(x_detected: &[S], x_reference: &[S], a_x: S) -> Result<S> {
    if x_detected.len() != x_reference.len() {
        return Err(Error::DimensionMismatch(x_detected.len(), x_reference.len()));
    }
    if x_detected.is_empty() {
        return Err(Error::EmptyInput);
    }
    let nf = S::from_usize(x_detected.len()).expect("sample count fits scalar");
    let sum = x_detected
        .iter()
        .zip(x_reference)
        .fold(S::zero(), |acc, (&d, &r)| acc + (r - d * a_x));
    Ok(sum / nf)
}

/// Applies one parameter set to every present keypoint of every frame.
/// Absent keypoints (confidence 0) are left untouched.
pub fn apply_affine<S: Scalar>(clip: &MotionClip<S>, params: &AffineParams<S>) -> MotionClip<S> {
    clip.map_frames(|frame| {
        let mut out = frame.clone();
        for i in 0..frame.len() {
            if frame.is_present(i) {
                out.set_position(i, params.apply(frame.position(i)));
            }
        }
        Ok(out)
    })
    .expect("frame shape unchanged")
}

/// Which clip frame supplies the correspondences for the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignOptions {
    pub fit_frame: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        // Planning pins clip boundaries to the reference pose, so the first
        // frame is the natural correspondence source.
        Self { fit_frame: 0 }
    }
}

/// Fits the affine parameters between `clip`'s fit frame and `reference`,
/// then applies them to the whole clip.
pub fn align_clip<S: Scalar>(
    clip: &MotionClip<S>,
    reference: &KeypointFrame<S>,
    geom: &FrameGeometry,
) -> Result<(MotionClip<S>, AffineParams<S>)> {
    align_clip_with(clip, reference, geom, AlignOptions::default())
}

pub fn align_clip_with<S: Scalar>(
    clip: &MotionClip<S>,
    reference: &KeypointFrame<S>,
    geom: &FrameGeometry,
    options: AlignOptions,
) -> Result<(MotionClip<S>, AffineParams<S>)> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    let topology = clip.topology();
    if reference.len() != topology.len() {
        return Err(Error::TopologyMismatch(format!(
            "reference frame has {} keypoints, clip topology '{}' has {}",
            reference.len(),
            topology.name(),
            topology.len()
        )));
    }
    let frame = clip.frame(options.fit_frame.min(clip.len() - 1));

    // Correspondences: body keypoints visible in both frames.
    let common: Vec<usize> = topology
        .body_indices()
        .filter(|&i| frame.is_present(i) && reference.is_present(i))
        .collect();
    if common.len() < 2 {
        return Err(Error::InsufficientCorrespondences {
            needed: 2,
            found: common.len(),
        });
    }

    let y_d: Vec<S> = common.iter().map(|&i| frame.position(i).y).collect();
    let y_r: Vec<S> = common.iter().map(|&i| reference.position(i).y).collect();
    let (a_y, b_y) = match fit_y(&y_d, &y_r) {
        Ok(fit) => fit,
        Err(Error::DegenerateFit(_)) => bbox_fallback(frame, reference, topology)?,
        Err(e) => return Err(e),
    };
    if a_y <= S::zero() {
        return Err(Error::DegenerateFit(format!(
            "fitted vertical scale {a_y} is not positive (reference inverted?)"
        )));
    }

    let a_x = derive_x_scale(a_y, geom);
    let x_d: Vec<S> = common.iter().map(|&i| frame.position(i).x).collect();
    let x_r: Vec<S> = common.iter().map(|&i| reference.position(i).x).collect();
    let b_x = fit_x_offset(&x_d, &x_r, a_x)?;

    let params = AffineParams { a_x, a_y, b_x, b_y };
    Ok((apply_affine(clip, &params), params))
}

/// Zero-variance fallback: scale by the ratio of the visible body
/// bounding-box heights and match body centroids. Preserves the fit's
/// intent when the correspondence line fit is singular.
fn bbox_fallback<S: Scalar>(
    detected: &KeypointFrame<S>,
    reference: &KeypointFrame<S>,
    topology: &crate::skeleton::SkeletonTopology,
) -> Result<(S, S)> {
    let visible_ys = |f: &KeypointFrame<S>| -> Vec<S> {
        topology
            .body_indices()
            .filter(|&i| f.is_present(i))
            .map(|i| f.position(i).y)
            .collect()
    };
    let extent = |ys: &[S]| {
        let min = ys.iter().fold(S::infinity(), |a, &v| a.min(v));
        let max = ys.iter().fold(S::neg_infinity(), |a, &v| a.max(v));
        max - min
    };
    let mean = |ys: &[S]| {
        ys.iter().fold(S::zero(), |a, &v| a + v) / S::from_usize(ys.len()).expect("fits scalar")
    };
    let ys_d = visible_ys(detected);
    let ys_r = visible_ys(reference);
    if ys_d.is_empty() || ys_r.is_empty() {
        return Err(Error::DegenerateFit("no visible body keypoints".into()));
    }
    let h_d = extent(&ys_d);
    let h_r = extent(&ys_r);
    if h_d == S::zero() || h_r == S::zero() {
        return Err(Error::DegenerateFit(
            "bounding-box fallback failed: zero body height".into(),
        ));
    }
    let a_y = h_r / h_d;
    let b_y = mean(&ys_r) - a_y * mean(&ys_d);
    Ok((a_y, b_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{topologies, KeypointFrame};

    fn body_frame(points: &[(f64, f64)]) -> KeypointFrame<f64> {
        let topo = topologies::body18();
        let mut f = KeypointFrame::absent(topo.len());
        for (i, (x, y)) in points.iter().enumerate() {
            f.set(i, Point2::new(*x, *y), 1.0);
        }
        f
    }

    #[test]
    fn fit_y_identity_on_identical_data() {
        let ys = [0.1, 0.5, 0.9];
        let (a, b) = fit_y(&ys, &ys).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!(b.abs() < 1e-12);
    }

    // Exact line through collinear points: y_r = 2*y_d + 1. Normal equations
    // by hand: mean_d=1, mean_r=3, var=2, cov=4 -> a=2, b=1.
    #[test]
    fn fit_y_exact_line() {
        let (a, b) = fit_y(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_y_zero_variance_is_degenerate() {
        assert!(matches!(
            fit_y(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn fit_y_single_sample_is_degenerate() {
        assert!(matches!(
            fit_y(&[1.0], &[1.0]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn residual_orthogonality() {
        let y_d = [0.12, 0.35, 0.48, 0.77, 0.91];
        let y_r = [0.20, 0.42, 0.50, 0.88, 1.02];
        let (a, b) = fit_y(&y_d, &y_r).unwrap();
        let mut sum_r = 0.0;
        let mut sum_ry = 0.0;
        for (&d, &r) in y_d.iter().zip(&y_r) {
            let res = a * d + b - r;
            sum_r += res;
            sum_ry += res * d;
        }
        assert!(sum_r.abs() < 1e-9);
        assert!(sum_ry.abs() < 1e-9);
    }

    // The training resolution 1024x576 with a same-ratio reference:
    // a_x = 2 / ((16/9)^2) = 81/128 = 0.6328125, exact in binary.
    #[test]
    fn x_scale_at_training_resolution() {
        let geom = FrameGeometry::new(1024, 576, 1024, 576).unwrap();
        assert_eq!(derive_x_scale(2.0f64, &geom), 0.6328125);
        assert_eq!(derive_x_scale(2.0f32, &geom), 0.6328125f32);
    }

    #[test]
    fn x_scale_unity_for_squares() {
        let geom = FrameGeometry::square(512);
        assert_eq!(derive_x_scale(1.0f64, &geom), 1.0);
    }

    // Ratios cancel: frame ratio 2, reference ratio 0.5.
    #[test]
    fn x_scale_ratio_cancellation() {
        let geom = FrameGeometry::new(200, 100, 100, 200).unwrap();
        assert_eq!(derive_x_scale(3.0f64, &geom), 3.0);
    }

    #[test]
    fn x_offset_zero_for_identical() {
        assert_eq!(fit_x_offset(&[0.2, 0.8], &[0.2, 0.8], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn x_offset_mean_of_differences() {
        assert_eq!(fit_x_offset(&[0.0, 1.0], &[0.5, 1.5], 1.0).unwrap(), 0.5);
        assert_eq!(fit_x_offset(&[1.0], &[0.0], 2.0).unwrap(), -2.0);
    }

    #[test]
    fn x_offset_empty_rejected() {
        assert!(matches!(
            fit_x_offset::<f64>(&[], &[], 1.0),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn apply_identity_is_noop() {
        let topo = topologies::body18();
        let f = body_frame(&[(0.1, 0.2), (0.3, 0.4)]);
        let clip = MotionClip::new(topo, vec![f], 24.0).unwrap();
        let out = apply_affine(&clip, &AffineParams::identity());
        assert_eq!(out, clip);
    }

    #[test]
    fn apply_affine_arithmetic() {
        let p = AffineParams {
            a_x: 2.0,
            a_y: 0.5,
            b_x: 0.1,
            b_y: 0.05,
        };
        let q = p.apply(Point2::new(0.2, 0.4));
        assert!((q.x - 0.5).abs() < 1e-15);
        assert!((q.y - 0.25).abs() < 1e-15);
    }

    #[test]
    fn apply_affine_skips_absent_keypoints() {
        let topo = topologies::body18();
        let mut f = KeypointFrame::absent(topo.len());
        f.set(0, Point2::new(0.3, 0.3), 1.0);
        f.set_position(1, Point2::new(0.9, 0.9)); // confidence stays 0
        let clip = MotionClip::new(topo, vec![f], 24.0).unwrap();
        let p = AffineParams {
            a_x: 2.0,
            a_y: 2.0,
            b_x: 0.0,
            b_y: 0.0,
        };
        let out = apply_affine(&clip, &p);
        assert_eq!(out.frame(0).position(1), Point2::new(0.9, 0.9));
        assert_eq!(out.frame(0).position(0), Point2::new(0.6, 0.6));
    }

    #[test]
    fn self_alignment_is_identity() {
        let points: Vec<(f64, f64)> = (0..18)
            .map(|i| (0.3 + 0.02 * i as f64, 0.2 + 0.04 * i as f64))
            .collect();
        let f = body_frame(&points);
        let clip = MotionClip::new(topologies::body18(), vec![f.clone()], 24.0).unwrap();
        let (aligned, params) = align_clip(&clip, &f, &FrameGeometry::square(512)).unwrap();
        assert!((params.a_x - 1.0).abs() < 1e-12);
        assert!((params.a_y - 1.0).abs() < 1e-12);
        assert!(params.b_x.abs() < 1e-12);
        assert!(params.b_y.abs() < 1e-12);
        for i in 0..f.len() {
            let d = aligned.frame(0).position(i) - f.position(i);
            assert!(d.x.abs() < 1e-12 && d.y.abs() < 1e-12);
        }
    }

    #[test]
    fn half_scale_clip_fits_double() {
        let reference: Vec<(f64, f64)> = (0..18)
            .map(|i| (0.5 + 0.3 * ((i * 7 % 5) as f64 / 4.0 - 0.5), 0.1 + 0.05 * i as f64))
            .collect();
        let detected: Vec<(f64, f64)> = reference
            .iter()
            .map(|(x, y)| (0.5 + (x - 0.5) / 2.0, 0.5 + (y - 0.5) / 2.0))
            .collect();
        let clip = MotionClip::new(
            topologies::body18(),
            vec![body_frame(&detected)],
            24.0,
        )
        .unwrap();
        let (_, params) =
            align_clip(&clip, &body_frame(&reference), &FrameGeometry::square(256)).unwrap();
        assert!((params.a_y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_visible_keypoint_is_insufficient() {
        let topo = topologies::body18();
        let mut reference = KeypointFrame::absent(topo.len());
        reference.set(1, Point2::new(0.5, 0.5), 1.0);
        let clip = MotionClip::new(
            topo,
            vec![body_frame(&[(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)])],
            24.0,
        )
        .unwrap();
        assert!(matches!(
            align_clip(&clip, &reference, &FrameGeometry::square(64)),
            Err(Error::InsufficientCorrespondences { .. })
        ));
    }

    #[test]
    fn zero_variance_falls_back_to_bbox() {
        // Detected ys all equal -> line fit singular; bbox fallback also
        // fails because detected height is zero.
        let detected = [(0.1, 0.5), (0.2, 0.5), (0.3, 0.5)];
        let reference = [(0.1, 0.2), (0.2, 0.5), (0.3, 0.8)];
        let clip = MotionClip::new(
            topologies::body18(),
            vec![body_frame(&detected)],
            24.0,
        )
        .unwrap();
        assert!(matches!(
            align_clip(&clip, &body_frame(&reference), &FrameGeometry::square(64)),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn inverted_reference_rejected() {
        let detected: Vec<(f64, f64)> = (0..6).map(|i| (0.5, 0.1 * i as f64)).collect();
        let reference: Vec<(f64, f64)> = (0..6).map(|i| (0.5, 0.5 - 0.1 * i as f64)).collect();
        let clip = MotionClip::new(
            topologies::body18(),
            vec![body_frame(&detected)],
            24.0,
        )
        .unwrap();
        assert!(matches!(
            align_clip(&clip, &body_frame(&reference), &FrameGeometry::square(64)),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn all_frames_share_one_parameter_set() {
        let topo = topologies::body18();
        let base: Vec<(f64, f64)> = (0..18).map(|i| (0.2 + 0.03 * i as f64, 0.1 + 0.04 * i as f64)).collect();
        let shifted: Vec<(f64, f64)> = base.iter().map(|(x, y)| (x + 0.05, y + 0.02)).collect();
        let clip = MotionClip::new(
            topo,
            vec![body_frame(&base), body_frame(&shifted)],
            24.0,
        )
        .unwrap();
        let reference = body_frame(&base);
        let (aligned, params) = align_clip(&clip, &reference, &FrameGeometry::square(100)).unwrap();
        // Frame 1 must be transformed by the same params fitted on frame 0.
        for i in 0..18 {
            let expected = params.apply(clip.frame(1).position(i));
            let got = aligned.frame(1).position(i);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let p = AffineParams {
            a_x: 1.7,
            a_y: 0.6,
            b_x: -0.2,
            b_y: 0.33,
        };
        let inv = p.inverse();
        let x = Point2::new(0.42, 0.77);
        let rt = inv.apply(p.apply(x));
        assert!((rt.x - x.x).abs() < 1e-12 && (rt.y - x.y).abs() < 1e-12);
    }

    #[test]
    fn degenerate_correspondences_with_body_extent_use_bbox_fallback() {
        let topo = topologies::body18();
        // Correspondence set (both visible): keypoints 0..3, detected at one
        // height. Detected frame has extra visible points spanning height.
        let mut detected = KeypointFrame::absent(topo.len());
        let mut reference = KeypointFrame::absent(topo.len());
        for i in 0..3 {
            detected.set(i, Point2::new(0.2 + 0.1 * i as f64, 0.4), 1.0);
            reference.set(i, Point2::new(0.2 + 0.1 * i as f64, 0.2 + 0.1 * i as f64), 1.0);
        }
        detected.set(5, Point2::new(0.5, 0.2), 1.0);
        detected.set(8, Point2::new(0.5, 0.6), 1.0);
        let clip = MotionClip::new(topo, vec![detected], 24.0).unwrap();
        let (_, params) =
            align_clip(&clip, &reference, &FrameGeometry::square(64)).unwrap();
        // ref bbox height 0.2 over ys {0.2,0.3,0.4}; detected 0.4 over
        // {0.4,0.4,0.4,0.2,0.6} -> a_y = 0.5.
        assert!((params.a_y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_oracle_confirms_least_squares_optimality() {
        // Brute-force oracle: the closed-form fit must beat a 101x101 grid
        // spanning +/-20% around the fitted parameters.
        let y_d: Vec<f64> = (0..18).map(|i| 0.05 + 0.05 * i as f64).collect();
        let y_r: Vec<f64> = y_d
            .iter()
            .enumerate()
            .map(|(i, y)| 1.4 * y + 0.1 + if i % 2 == 0 { 0.01 } else { -0.01 })
            .collect();
        let (a, b) = fit_y(&y_d, &y_r).unwrap();
        let residual = |aa: f64, bb: f64| -> f64 {
            y_d.iter()
                .zip(&y_r)
                .map(|(&d, &r)| {
                    let e = aa * d + bb - r;
                    e * e
                })
                .sum()
        };
        let best = residual(a, b);
        for i in 0..101 {
            for j in 0..101 {
                let aa = a * (0.8 + 0.4 * i as f64 / 100.0);
                let bb = if b.abs() > 1e-12 {
                    b * (0.8 + 0.4 * j as f64 / 100.0)
                } else {
                    -0.2 + 0.4 * j as f64 / 100.0
                };
                assert!(best <= residual(aa, bb) + 1e-12);
            }
        }
    }
}
