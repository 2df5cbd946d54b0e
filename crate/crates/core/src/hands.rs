//! Hand completion for handless pose clips.
//!
//! Two routes behind one contract: a deterministic template that poses a
//! rigid 21-joint hand off each frame's forearm, and a client for an external
//! adapter service that synthesizes hand motion. Either way the body motion
//! in the input clip must come through untouched.

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::io;
use crate::scalar::Scalar;
use crate::services;
use crate::skeleton::{topologies, KeypointFrame, KeypointGroup, MotionClip, SkeletonTopology};
use serde_json::json;

/// Confidence written on synthesized hand keypoints, distinguishing them
/// from detected ones downstream.
pub const TEMPLATE_CONFIDENCE: f64 = 0.9;

/// Maximum body-keypoint drift an external adapter response may introduce,
/// in normalized coordinates.
pub const BODY_DRIFT_TOLERANCE: f64 = 0.01;

/// Hand joint count: wrist plus four joints for each of five fingers.
pub const HAND_JOINTS: usize = 21;

/// 21 keypoint offsets in a wrist-local frame: origin at the wrist, x-axis
/// along the elbow-to-wrist direction, unit length = forearm length. The
/// right hand mirrors the left across the local x-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTemplate<S> {
    offsets: [Point2<S>; HAND_JOINTS],
}

impl<S: Scalar> HandTemplate<S> {
    pub fn new(offsets: [Point2<S>; HAND_JOINTS]) -> Result<Self> {
        if offsets[0] != Point2::new(S::zero(), S::zero()) {
            return Err(Error::InvalidConfig(
                "hand template wrist offset must be the origin".into(),
            ));
        }
        let bound = S::from_f64_c(1.2);
        for (i, o) in offsets.iter().enumerate() {
            if o.norm() > bound {
                return Err(Error::InvalidConfig(format!(
                    "hand template offset {i} exceeds 1.2 forearm lengths"
                )));
            }
        }
        Ok(Self { offsets })
    }

    /// Default variant: fingers extended past the wrist with a slight spread,
    /// thumb angled off the local +y side.
    pub fn relaxed_open() -> Self {
        let p = |x: f64, y: f64| Point2::new(S::from_f64_c(x), S::from_f64_c(y));
        let offsets = [
            p(0.0, 0.0), // wrist
            // thumb
            p(0.15, 0.18),
            p(0.30, 0.30),
            p(0.42, 0.38),
            p(0.52, 0.44),
            // index
            p(0.45, 0.15),
            p(0.62, 0.19),
            p(0.74, 0.21),
            p(0.84, 0.22),
            // middle
            p(0.46, 0.05),
            p(0.65, 0.06),
            p(0.79, 0.065),
            p(0.90, 0.07),
            // ring
            p(0.45, -0.05),
            p(0.62, -0.06),
            p(0.75, -0.065),
            p(0.85, -0.07),
            // little
            p(0.42, -0.15),
            p(0.55, -0.18),
            p(0.64, -0.20),
            p(0.72, -0.22),
        ];
        Self::new(offsets).expect("relaxed-open template satisfies its own invariants")
    }

    pub fn offsets(&self) -> &[Point2<S>; HAND_JOINTS] {
        &self.offsets
    }

    /// Joint position for offset `j` given the wrist position and the
    /// elbow-to-wrist forearm vector. Mirrored across the forearm for the
    /// right hand.
    fn place(&self, j: usize, wrist: Point2<S>, forearm: Point2<S>, mirror: bool) -> Point2<S> {
        let x_axis = forearm;
        let y_axis = if mirror {
            -forearm.perp()
        } else {
            forearm.perp()
        };
        let o = self.offsets[j];
        wrist + x_axis.scale(o.x) + y_axis.scale(o.y)
    }
}

impl<S: Scalar> Default for HandTemplate<S> {
    fn default() -> Self {
        Self::relaxed_open()
    }
}

struct HandSlots {
    elbow: usize,
    wrist: usize,
    joints: Vec<usize>,
    mirror: bool,
}

fn hand_slots(topology: &SkeletonTopology) -> Result<Vec<HandSlots>> {
    if !topology.has_hands() {
        return Err(Error::TopologyMismatch(format!(
            "topology '{}' has no hand keypoint groups",
            topology.name()
        )));
    }
    let mut out = Vec::new();
    for (side, mirror) in [("left", false), ("right", true)] {
        let need = |name: String| {
            topology
                .index_of(&name)
                .ok_or_else(|| Error::TopologyMismatch(format!("missing keypoint '{name}'")))
        };
        let joints = (0..HAND_JOINTS)
            .map(|j| need(topologies::hand_joint_name(side, j)))
            .collect::<Result<Vec<_>>>()?;
        out.push(HandSlots {
            elbow: need(format!("{side}_elbow"))?,
            wrist: need(format!("{side}_wrist"))?,
            joints,
            mirror,
        });
    }
    Ok(out)
}

/// Fills the hand groups of every frame from the template, oriented and
/// scaled by that frame's forearm. Clips without hand slots are lifted onto
/// the full topology first. Body and face keypoints are copied bit-exact;
/// a hand whose elbow or wrist is absent (or whose forearm has zero length)
/// is left absent in that frame.
pub fn complete_hands_template<S: Scalar>(
    clip: &MotionClip<S>,
    template: &HandTemplate<S>,
) -> Result<MotionClip<S>> {
    let clip = if clip.topology().has_hands() {
        clip.clone()
    } else {
        clip.embed_into(topologies::full())?
    };
    let slots = hand_slots(clip.topology())?;
    let confidence = S::from_f64_c(TEMPLATE_CONFIDENCE);
    clip.map_frames(|frame| {
        let mut out = frame.clone();
        for hand in &slots {
            let usable = frame.is_present(hand.elbow) && frame.is_present(hand.wrist);
            let wrist = frame.position(hand.wrist);
            let forearm = wrist - frame.position(hand.elbow);
            if !usable || forearm.norm() == S::zero() {
                for &j in &hand.joints {
                    out.set_absent(j);
                }
                continue;
            }
            for (j, &slot) in hand.joints.iter().enumerate() {
                out.set(
                    slot,
                    template.place(j, wrist, forearm, hand.mirror),
                    confidence,
                );
            }
        }
        Ok(out)
    })
}

/// Sends the handless clip and the reference frame to the adapter service
/// and validates the response against the contract: same frame count and
/// fps, hand groups present, and body keypoints unchanged within
/// [`BODY_DRIFT_TOLERANCE`].
pub fn complete_hands_external<S: Scalar>(
    clip: &MotionClip<S>,
    reference: &KeypointFrame<S>,
    endpoint: &str,
) -> Result<MotionClip<S>> {
    let request = json!({
        "format_version": io::FORMAT_VERSION,
        "clip": io::clip_to_doc(clip, 0, 0),
        "reference": serde_json::from_slice::<serde_json::Value>(
            &io::write_reference(reference, clip.topology(), 0, 0),
        )
        .expect("reference serializes to JSON"),
    });
    let response = services::post_json(endpoint, &request)?;
    let clip_value = response
        .get("clip")
        .cloned()
        .ok_or_else(|| Error::ContractViolation("adapter response missing 'clip'".into()))?;
    let completed = io::clip_from_value::<S>(clip_value)
        .map_err(|e| Error::ContractViolation(format!("adapter clip invalid: {e}")))?
        .clip;
    validate_adapter_response(clip, &completed)?;
    Ok(completed)
}

fn validate_adapter_response<S: Scalar>(
    request: &MotionClip<S>,
    response: &MotionClip<S>,
) -> Result<()> {
    if response.len() != request.len() {
        return Err(Error::ContractViolation(format!(
            "frame count changed: sent {}, received {}",
            request.len(),
            response.len()
        )));
    }
    if response.fps() != request.fps() {
        return Err(Error::ContractViolation(format!(
            "fps changed: sent {}, received {}",
            request.fps(),
            response.fps()
        )));
    }
    if !response.topology().has_hands() {
        return Err(Error::ContractViolation(format!(
            "response topology '{}' has no hand groups",
            response.topology().name()
        )));
    }
    let tolerance = S::from_f64_c(BODY_DRIFT_TOLERANCE);
    let req_topo = request.topology();
    let res_topo = response.topology();
    for i in req_topo.body_indices() {
        let name = req_topo.keypoint_name(i);
        let j = res_topo.index_of(name).ok_or_else(|| {
            Error::ContractViolation(format!("response lost body keypoint '{name}'"))
        })?;
        for (f, (req_frame, res_frame)) in
            request.frames().iter().zip(response.frames()).enumerate()
        {
            if req_frame.is_present(i) != res_frame.is_present(j) {
                return Err(Error::ContractViolation(format!(
                    "presence of body keypoint '{name}' changed in frame {f}"
                )));
            }
            if req_frame.is_present(i) {
                let drift = (res_frame.position(j) - req_frame.position(i)).norm();
                if drift > tolerance {
                    return Err(Error::ContractViolation(format!(
                        "body keypoint '{name}' drifted {drift} in frame {f} (tolerance {tolerance})"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handless_clip(points: &[(&str, f64, f64)], frames: usize) -> MotionClip<f64> {
        let topo = topologies::body18();
        let mut frame = KeypointFrame::absent(topo.len());
        for (name, x, y) in points {
            frame.set(topo.index_of(name).unwrap(), Point2::new(*x, *y), 1.0);
        }
        MotionClip::new(topo, vec![frame; frames], 24.0).unwrap()
    }

    #[test]
    fn fingertip_scales_with_forearm() {
        // Custom template with a single fingertip at local (0.5, 0):
        // forearm (0,0)->(0.1,0) puts it at (0.15, 0).
        let mut offsets = [Point2::new(0.0f64, 0.0); HAND_JOINTS];
        offsets[12] = Point2::new(0.5, 0.0); // middle fingertip
        let template = HandTemplate::new(offsets).unwrap();
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.5),
                ("left_elbow", 0.0, 0.0),
                ("left_wrist", 0.1, 0.0),
            ],
            1,
        );
        let out = complete_hands_template(&clip, &template).unwrap();
        let topo = out.topology();
        let tip = topo.index_of("left_middle_4").unwrap();
        let p = out.frame(0).position(tip);
        assert!((p.x - 0.15).abs() < 1e-15);
        assert!(p.y.abs() < 1e-15);
        assert_eq!(out.frame(0).confidence(tip), 0.9);
    }

    #[test]
    fn fingertip_rotates_with_forearm() {
        let mut offsets = [Point2::new(0.0f64, 0.0); HAND_JOINTS];
        offsets[12] = Point2::new(0.5, 0.0);
        let template = HandTemplate::new(offsets).unwrap();
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.5),
                ("left_elbow", 0.0, 0.0),
                ("left_wrist", 0.0, 0.1),
            ],
            1,
        );
        let out = complete_hands_template(&clip, &template).unwrap();
        let tip = out.topology().index_of("left_middle_4").unwrap();
        let p = out.frame(0).position(tip);
        assert!(p.x.abs() < 1e-15);
        assert!((p.y - 0.15).abs() < 1e-15);
    }

    #[test]
    fn absent_elbow_leaves_hand_absent() {
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.5),
                ("left_wrist", 0.1, 0.0),
                ("right_elbow", 0.8, 0.3),
                ("right_wrist", 0.9, 0.4),
            ],
            1,
        );
        let out = complete_hands_template(&clip, &HandTemplate::default()).unwrap();
        let topo = out.topology();
        let left_tip = topo.index_of("left_middle_4").unwrap();
        let right_tip = topo.index_of("right_middle_4").unwrap();
        assert!(!out.frame(0).is_present(left_tip));
        assert!(out.frame(0).is_present(right_tip));
    }

    #[test]
    fn body_keypoints_bit_identical() {
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.2),
                ("left_elbow", 0.61, 0.41),
                ("left_wrist", 0.63, 0.57),
                ("nose", 0.5, 0.1),
            ],
            3,
        );
        let out = complete_hands_template(&clip, &HandTemplate::default()).unwrap();
        let body = clip.topology();
        let full = out.topology();
        for i in body.body_indices() {
            let j = full.index_of(body.keypoint_name(i)).unwrap();
            for (a, b) in clip.frames().iter().zip(out.frames()) {
                assert_eq!(a.position(i), b.position(j));
                assert_eq!(a.confidence(i), b.confidence(j));
            }
        }
    }

    #[test]
    fn completed_wrist_coincides_with_body_wrist() {
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.2),
                ("left_elbow", 0.6, 0.4),
                ("left_wrist", 0.58, 0.55),
            ],
            1,
        );
        let out = complete_hands_template(&clip, &HandTemplate::default()).unwrap();
        let topo = out.topology();
        let body_wrist = topo.index_of("left_wrist").unwrap();
        let hand_wrist = topo.index_of("left_hand_wrist").unwrap();
        let d = out.frame(0).position(hand_wrist) - out.frame(0).position(body_wrist);
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn right_hand_mirrors_left() {
        // Both forearms along +x; mirrored template -> thumb offsets with
        // opposite local y land on opposite image-y sides.
        let clip = handless_clip(
            &[
                ("neck", 0.5, 0.1),
                ("left_elbow", 0.2, 0.5),
                ("left_wrist", 0.3, 0.5),
                ("right_elbow", 0.6, 0.5),
                ("right_wrist", 0.7, 0.5),
            ],
            1,
        );
        let out = complete_hands_template(&clip, &HandTemplate::default()).unwrap();
        let topo = out.topology();
        let lt = out
            .frame(0)
            .position(topo.index_of("left_thumb_4").unwrap());
        let rt = out
            .frame(0)
            .position(topo.index_of("right_thumb_4").unwrap());
        assert!((lt.y - 0.5) * (rt.y - 0.5) < 0.0);
    }

    #[test]
    fn template_invariants_enforced() {
        let mut offsets = [Point2::new(0.0f64, 0.0); HAND_JOINTS];
        offsets[0] = Point2::new(0.1, 0.0);
        assert!(HandTemplate::new(offsets).is_err());
        let mut offsets = [Point2::new(0.0f64, 0.0); HAND_JOINTS];
        offsets[5] = Point2::new(1.3, 0.0);
        assert!(HandTemplate::new(offsets).is_err());
    }

    #[test]
    fn intra_hand_distances_scale_with_forearm() {
        // Two frames with different forearm lengths; pairwise hand distances
        // divided by forearm length must match across frames.
        let topo = topologies::body18();
        let mut f0 = KeypointFrame::absent(topo.len());
        f0.set(topo.index_of("neck").unwrap(), Point2::new(0.5, 0.1), 1.0);
        f0.set(topo.index_of("left_elbow").unwrap(), Point2::new(0.2, 0.4), 1.0);
        f0.set(topo.index_of("left_wrist").unwrap(), Point2::new(0.3, 0.4), 1.0);
        let mut f1 = KeypointFrame::absent(topo.len());
        f1.set(topo.index_of("neck").unwrap(), Point2::new(0.5, 0.1), 1.0);
        f1.set(topo.index_of("left_elbow").unwrap(), Point2::new(0.2, 0.4), 1.0);
        f1.set(topo.index_of("left_wrist").unwrap(), Point2::new(0.2, 0.6), 1.0);
        let clip = MotionClip::new(topo, vec![f0, f1], 24.0).unwrap();
        let out = complete_hands_template(&clip, &HandTemplate::default()).unwrap();
        let full = out.topology().clone();
        let joints: Vec<usize> = (0..HAND_JOINTS)
            .map(|j| full.index_of(&topologies::hand_joint_name("left", j)).unwrap())
            .collect();
        let forearm = [0.1, 0.2];
        for a in 0..HAND_JOINTS {
            for b in (a + 1)..HAND_JOINTS {
                let d0 =
                    (out.frame(0).position(joints[a]) - out.frame(0).position(joints[b])).norm();
                let d1 =
                    (out.frame(1).position(joints[a]) - out.frame(1).position(joints[b])).norm();
                assert!((d0 / forearm[0] - d1 / forearm[1]).abs() < 1e-9);
            }
        }
    }
}
