//! Anchor-point bone-length retargeting.
//!
//! The neck is held fixed. Walking the canonical bone table from the root
//! outward, each body bone is rescaled along its current direction to the
//! length measured from the reference body, and the child's whole subtree is
//! translated rigidly by the child's displacement. Directions never change,
//! relative positions inside a subtree never change, and after one pass every
//! measured bone has exactly the reference length.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::skeleton::{KeypointFrame, KeypointGroup, MotionClip, SkeletonTopology};

/// Target body-bone lengths measured from a reference frame. Indexed by the
/// topology's bone table; non-body bones and bones whose endpoints were
/// absent in the reference are masked.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneLengthProfile<S> {
    lengths: Vec<S>,
    masked: Vec<bool>,
}

impl<S: Scalar> BoneLengthProfile<S> {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Target length for bone `index`, `None` when masked.
    pub fn target(&self, index: usize) -> Option<S> {
        (!self.masked[index]).then(|| self.lengths[index])
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.masked[index]
    }

    /// Overrides one bone's target length (unmasks it).
    pub fn set_target(&mut self, index: usize, length: S) {
        self.lengths[index] = length;
        self.masked[index] = false;
    }
}

/// Measures every body bone of `topology` on `reference`. Bones with an
/// absent endpoint are masked rather than failing.
pub fn measure_profile<S: Scalar>(
    reference: &KeypointFrame<S>,
    topology: &SkeletonTopology,
) -> Result<BoneLengthProfile<S>> {
    if reference.len() != topology.len() {
        return Err(Error::TopologyMismatch(format!(
            "reference has {} keypoints, topology '{}' has {}",
            reference.len(),
            topology.name(),
            topology.len()
        )));
    }
    let mut lengths = vec![S::zero(); topology.bones().len()];
    let mut masked = vec![true; topology.bones().len()];
    for (i, bone) in topology.body_bones() {
        if reference.is_present(bone.parent) && reference.is_present(bone.child) {
            lengths[i] = reference.bone_length(i, topology)?;
            masked[i] = false;
        }
    }
    Ok(BoneLengthProfile { lengths, masked })
}

/// Rescales one frame to the profile. The neck stays bitwise fixed; masked
/// bones (and bones whose endpoints are absent in this frame) keep their
/// generated geometry; face keypoints never move.
pub fn retarget_frame<S: Scalar>(
    frame: &KeypointFrame<S>,
    profile: &BoneLengthProfile<S>,
    topology: &SkeletonTopology,
) -> Result<KeypointFrame<S>> {
    if frame.len() != topology.len() {
        return Err(Error::TopologyMismatch(format!(
            "frame has {} keypoints, topology '{}' has {}",
            frame.len(),
            topology.name(),
            topology.len()
        )));
    }
    if profile.len() != topology.bones().len() {
        return Err(Error::TopologyMismatch(format!(
            "profile covers {} bones, topology '{}' has {}",
            profile.len(),
            topology.name(),
            topology.bones().len()
        )));
    }
    let root = topology.root();
    if !frame.is_present(root) {
        return Err(Error::MissingAnchor(
            topology.keypoint_name(root).to_string(),
        ));
    }

    let mut out = frame.clone();
    // The canonical bone table is in pre-order: a bone is finalized before
    // any bone inside its child's subtree, which makes lengths exact.
    for (bone_index, bone) in topology.body_bones() {
        let target = match profile.target(bone_index) {
            Some(t) => t,
            None => continue,
        };
        if !frame.is_present(bone.parent) || !frame.is_present(bone.child) {
            continue;
        }
        let parent = out.position(bone.parent);
        let child = out.position(bone.child);
        let direction = child - parent;
        let length = direction.norm();
        if length == S::zero() {
            return Err(Error::ZeroLengthBone(bone_index));
        }
        let new_child = parent + direction.scale(target / length);
        let delta = new_child - child;
        if delta.x == S::zero() && delta.y == S::zero() {
            continue;
        }
        for &k in topology.subtree(bone.child) {
            debug_assert_ne!(topology.group(k), KeypointGroup::Face);
            out.set_position(k, out.position(k) + delta);
        }
    }
    Ok(out)
}

/// Per-frame retargeting of a whole clip against one profile.
pub fn retarget_clip<S: Scalar>(
    clip: &MotionClip<S>,
    profile: &BoneLengthProfile<S>,
) -> Result<MotionClip<S>> {
    clip.map_frames(|f| retarget_frame(f, profile, clip.topology()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point2;
    use crate::skeleton::topologies;

    fn frame_with(
        topo: &SkeletonTopology,
        points: &[(&str, f64, f64)],
    ) -> KeypointFrame<f64> {
        let mut f = KeypointFrame::absent(topo.len());
        for (name, x, y) in points {
            f.set(topo.index_of(name).unwrap(), Point2::new(*x, *y), 1.0);
        }
        f
    }

    #[test]
    fn profile_masks_absent_bones() {
        let topo = topologies::body18();
        let reference = frame_with(
            &topo,
            &[
                ("neck", 0.5, 0.2),
                ("left_shoulder", 0.6, 0.2),
                ("left_elbow", 0.6, 0.4),
            ],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        let forearm = topo
            .bones()
            .iter()
            .position(|b| {
                b.parent == topo.index_of("left_elbow").unwrap()
                    && b.child == topo.index_of("left_wrist").unwrap()
            })
            .unwrap();
        assert!(profile.is_masked(forearm));
        let upper = topo
            .bones()
            .iter()
            .position(|b| {
                b.parent == topo.index_of("left_shoulder").unwrap()
                    && b.child == topo.index_of("left_elbow").unwrap()
            })
            .unwrap();
        assert_eq!(profile.target(upper), Some(0.2));
    }

    #[test]
    fn profile_measures_euclidean_lengths() {
        let topo = topologies::body18();
        let reference = frame_with(
            &topo,
            &[("left_shoulder", 0.4, 0.2), ("left_elbow", 0.4, 0.5), ("neck", 0.5, 0.2)],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        let upper = topo
            .bones()
            .iter()
            .position(|b| {
                b.parent == topo.index_of("left_shoulder").unwrap()
                    && b.child == topo.index_of("left_elbow").unwrap()
            })
            .unwrap();
        assert!((profile.target(upper).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn full_confidence_reference_masks_nothing() {
        let topo = topologies::body18();
        let points: Vec<(String, f64, f64)> = (0..18)
            .map(|i| {
                (
                    topo.keypoint_name(i).to_string(),
                    0.1 + 0.04 * i as f64,
                    0.1 + 0.03 * ((i * 5) % 7) as f64,
                )
            })
            .collect();
        let named: Vec<(&str, f64, f64)> =
            points.iter().map(|(n, x, y)| (n.as_str(), *x, *y)).collect();
        let reference = frame_with(&topo, &named);
        let profile = measure_profile(&reference, &topo).unwrap();
        for (i, _) in topo.body_bones() {
            assert!(!profile.is_masked(i));
        }
    }

    // Frozen by hand-executing the subtree translation rule: rescaling
    // neck->shoulder from 0.1 to 0.2 moves the shoulder to (0.2, 0) and
    // carries the elbow by the same (0.1, 0).
    #[test]
    fn subtree_translates_rigidly() {
        let topo = topologies::body18();
        let frame = frame_with(
            &topo,
            &[
                ("neck", 0.0, 0.0),
                ("left_shoulder", 0.1, 0.0),
                ("left_elbow", 0.1, 0.1),
            ],
        );
        let reference = frame_with(
            &topo,
            &[
                ("neck", 0.0, 0.0),
                ("left_shoulder", 0.2, 0.0),
                ("left_elbow", 0.2, 0.1),
            ],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        let out = retarget_frame(&frame, &profile, &topo).unwrap();
        let shoulder = topo.index_of("left_shoulder").unwrap();
        let elbow = topo.index_of("left_elbow").unwrap();
        assert!((out.position(shoulder).x - 0.2).abs() < 1e-15);
        assert!(out.position(shoulder).y.abs() < 1e-15);
        assert!((out.position(elbow).x - 0.2).abs() < 1e-15);
        assert!((out.position(elbow).y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn matching_lengths_are_a_fixed_point() {
        let topo = topologies::body18();
        let frame = frame_with(
            &topo,
            &[
                ("neck", 0.5, 0.2),
                ("left_shoulder", 0.62, 0.21),
                ("left_elbow", 0.66, 0.38),
                ("left_wrist", 0.65, 0.52),
            ],
        );
        let profile = measure_profile(&frame, &topo).unwrap();
        let out = retarget_frame(&frame, &profile, &topo).unwrap();
        for i in 0..frame.len() {
            let d = out.position(i) - frame.position(i);
            assert!(d.x.abs() < 1e-12 && d.y.abs() < 1e-12);
        }
    }

    #[test]
    fn missing_neck_is_an_error() {
        let topo = topologies::body18();
        let frame = frame_with(&topo, &[("left_shoulder", 0.5, 0.5)]);
        let profile = measure_profile(&frame, &topo).unwrap();
        assert!(matches!(
            retarget_frame(&frame, &profile, &topo),
            Err(Error::MissingAnchor(_))
        ));
    }

    #[test]
    fn coincident_endpoints_on_unmasked_bone_fail() {
        let topo = topologies::body18();
        let frame = frame_with(
            &topo,
            &[("neck", 0.5, 0.5), ("left_shoulder", 0.5, 0.5)],
        );
        let reference = frame_with(
            &topo,
            &[("neck", 0.4, 0.4), ("left_shoulder", 0.5, 0.4)],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        assert!(matches!(
            retarget_frame(&frame, &profile, &topo),
            Err(Error::ZeroLengthBone(_))
        ));
    }

    #[test]
    fn face_group_never_moves() {
        let topo = topologies::body18_face5();
        let mut frame = frame_with(
            &topo,
            &[
                ("neck", 0.5, 0.3),
                ("left_shoulder", 0.6, 0.3),
                ("face_nose", 0.5, 0.1),
            ],
        );
        frame.set(
            topo.index_of("face_left_eye").unwrap(),
            Point2::new(0.52, 0.08),
            1.0,
        );
        let reference = frame_with(
            &topo,
            &[("neck", 0.5, 0.3), ("left_shoulder", 0.8, 0.3)],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        let out = retarget_frame(&frame, &profile, &topo).unwrap();
        let nose = topo.index_of("face_nose").unwrap();
        let eye = topo.index_of("face_left_eye").unwrap();
        assert_eq!(out.position(nose), frame.position(nose));
        assert_eq!(out.position(eye), frame.position(eye));
        // while the shoulder did move
        let shoulder = topo.index_of("left_shoulder").unwrap();
        assert!((out.position(shoulder).x - 0.8).abs() < 1e-12);
    }

    #[test]
    fn hands_ride_the_wrist_untouched_internally() {
        let topo = topologies::full();
        let mut frame = frame_with(
            &topo,
            &[
                ("neck", 0.5, 0.2),
                ("left_shoulder", 0.6, 0.2),
                ("left_elbow", 0.6, 0.4),
                ("left_wrist", 0.6, 0.6),
            ],
        );
        let hand_wrist = topo.index_of("left_hand_wrist").unwrap();
        let thumb = topo.index_of("left_thumb_1").unwrap();
        frame.set(hand_wrist, Point2::new(0.6, 0.6), 0.9);
        frame.set(thumb, Point2::new(0.63, 0.62), 0.9);
        let reference = frame_with(
            &topo,
            &[
                ("neck", 0.5, 0.2),
                ("left_shoulder", 0.6, 0.2),
                ("left_elbow", 0.6, 0.4),
                ("left_wrist", 0.6, 0.7), // forearm 0.3 instead of 0.2
            ],
        );
        let profile = measure_profile(&reference, &topo).unwrap();
        let out = retarget_frame(&frame, &profile, &topo).unwrap();
        let wrist = topo.index_of("left_wrist").unwrap();
        // wrist moved down by 0.1; hand offsets relative to wrist unchanged
        assert!((out.position(wrist).y - 0.7).abs() < 1e-12);
        let rel_before = frame.position(thumb) - frame.position(hand_wrist);
        let rel_after = out.position(thumb) - out.position(hand_wrist);
        assert!((rel_before.x - rel_after.x).abs() < 1e-12);
        assert!((rel_before.y - rel_after.y).abs() < 1e-12);
        assert_eq!(out.position(hand_wrist), out.position(wrist));
    }
}
