//! Skeleton topologies, keypoint frames, and motion clips.
//!
//! A topology names its keypoints, tags each with a group (body, face, or one
//! of the hands), and connects them with parent->child bones. Bones form a
//! forest; the body subgraph is a tree rooted at the neck. Face keypoints are
//! deliberately left out of the bone tree, and hand keypoints attach as a
//! subtree under the corresponding body wrist.

use crate::error::{Error, Result};
use crate::geom::{Point2, Point3};
use crate::scalar::Scalar;
use std::collections::HashSet;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeypointGroup {
    Body,
    Face,
    HandLeft,
    HandRight,
}

impl KeypointGroup {
    pub fn is_hand(self) -> bool {
        matches!(self, KeypointGroup::HandLeft | KeypointGroup::HandRight)
    }
}

/// A parent->child edge in the skeleton forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
}

#[derive(Debug, PartialEq, Eq)]
pub struct SkeletonTopology {
    name: String,
    names: Vec<String>,
    groups: Vec<KeypointGroup>,
    bones: Vec<Bone>,
    root: usize,
    /// subtree()'s reachability sets, precomputed per keypoint.
    subtrees: Vec<Vec<usize>>,
}

impl SkeletonTopology {
    /// Builds and validates a topology. Bone order is significant: it is the
    /// canonical traversal order for retargeting and rendering.
    pub fn new(
        name: &str,
        keypoints: Vec<(String, KeypointGroup)>,
        bones: Vec<Bone>,
        root: usize,
    ) -> Result<Self> {
        let n = keypoints.len();
        let mut seen = HashSet::new();
        for (kp_name, _) in &keypoints {
            if !seen.insert(kp_name.clone()) {
                return Err(Error::InvalidTopology(format!(
                    "duplicate keypoint name '{kp_name}'"
                )));
            }
        }
        if root >= n {
            return Err(Error::InvalidTopology(format!(
                "root index {root} out of range"
            )));
        }
        if keypoints[root].1 != KeypointGroup::Body {
            return Err(Error::InvalidTopology(
                "root keypoint must belong to the body group".into(),
            ));
        }
        let mut parent_count = vec![0usize; n];
        for bone in &bones {
            if bone.parent >= n || bone.child >= n {
                return Err(Error::InvalidTopology(format!(
                    "bone ({}, {}) out of range",
                    bone.parent, bone.child
                )));
            }
            if keypoints[bone.parent].1 == KeypointGroup::Face
                || keypoints[bone.child].1 == KeypointGroup::Face
            {
                return Err(Error::InvalidTopology(
                    "face keypoints do not participate in the bone tree".into(),
                ));
            }
            parent_count[bone.child] += 1;
            if parent_count[bone.child] > 1 {
                return Err(Error::InvalidTopology(format!(
                    "keypoint {} has more than one parent",
                    bone.child
                )));
            }
        }
        if parent_count[root] != 0 {
            return Err(Error::InvalidTopology("root must have no parent".into()));
        }
        let topo = Self {
            name: name.to_string(),
            names: keypoints.iter().map(|(n, _)| n.clone()).collect(),
            groups: keypoints.iter().map(|(_, g)| *g).collect(),
            bones,
            root,
            subtrees: Vec::new(),
        };
        topo.check_tree()?;
        let subtrees = (0..n).map(|i| topo.compute_subtree(i)).collect();
        Ok(Self { subtrees, ..topo })
    }

    /// Every non-face keypoint must reach the root through unique parent
    /// edges, and the edges must be acyclic.
    fn check_tree(&self) -> Result<()> {
        let reachable = self.compute_subtree(self.root);
        let reachable: HashSet<usize> = reachable.into_iter().collect();
        if reachable.len() + self.face_indices().count() != self.names.len() {
            return Err(Error::InvalidTopology(
                "non-face keypoints must all be reachable from the root".into(),
            ));
        }
        // Acyclicity: a child with one parent each and n_edges == n_reachable - 1.
        if self.bones.len() + 1 != reachable.len() {
            return Err(Error::InvalidTopology(
                "bone edges must form a tree over non-face keypoints".into(),
            ));
        }
        Ok(())
    }

    fn compute_subtree(&self, start: usize) -> Vec<usize> {
        let mut out = vec![start];
        let mut stack = vec![start];
        let mut visited = HashSet::from([start]);
        while let Some(node) = stack.pop() {
            for bone in &self.bones {
                if bone.parent == node && visited.insert(bone.child) {
                    out.push(bone.child);
                    stack.push(bone.child);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn keypoint_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn group(&self, index: usize) -> KeypointGroup {
        self.groups[index]
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn body_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices_of(KeypointGroup::Body)
    }

    pub fn face_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices_of(KeypointGroup::Face)
    }

    pub fn indices_of(&self, group: KeypointGroup) -> impl Iterator<Item = usize> + '_ {
        self.groups
            .iter()
            .enumerate()
            .filter(move |(_, g)| **g == group)
            .map(|(i, _)| i)
    }

    pub fn body_count(&self) -> usize {
        self.body_indices().count()
    }

    /// Bones whose both endpoints are body keypoints, in canonical order.
    /// These are the bones measured and rescaled by retargeting.
    pub fn body_bones(&self) -> impl Iterator<Item = (usize, Bone)> + '_ {
        self.bones.iter().enumerate().filter_map(|(i, b)| {
            (self.groups[b.parent] == KeypointGroup::Body
                && self.groups[b.child] == KeypointGroup::Body)
                .then_some((i, *b))
        })
    }

    pub fn has_hands(&self) -> bool {
        self.groups.iter().any(|g| g.is_hand())
    }

    /// The keypoint and all its descendants in the bone forest, sorted by
    /// index. Hand keypoints ride under their wrist.
    pub fn subtree(&self, keypoint: usize) -> &[usize] {
        &self.subtrees[keypoint]
    }
}

/// Canonical topology constructors and the name registry used by the
/// interchange format.
pub mod topologies {
    use super::*;

    pub const BODY18: &str = "body18";
    pub const BODY18_FACE5: &str = "body18-face5";
    pub const FULL: &str = "full";

    pub const NECK: &str = "neck";

    const BODY18_NAMES: [&str; 18] = [
        "nose",
        "neck",
        "right_shoulder",
        "right_elbow",
        "right_wrist",
        "left_shoulder",
        "left_elbow",
        "left_wrist",
        "right_hip",
        "right_knee",
        "right_ankle",
        "left_hip",
        "left_knee",
        "left_ankle",
        "right_eye",
        "left_eye",
        "right_ear",
        "left_ear",
    ];

    /// Canonical body bone table, pre-order from the neck: head chain, left
    /// arm, right arm, left leg, right leg.
    const BODY18_BONES: [(usize, usize); 17] = [
        (1, 0),   // neck -> nose
        (0, 15),  // nose -> left_eye
        (15, 17), // left_eye -> left_ear
        (0, 14),  // nose -> right_eye
        (14, 16), // right_eye -> right_ear
        (1, 5),   // neck -> left_shoulder
        (5, 6),   // left_shoulder -> left_elbow
        (6, 7),   // left_elbow -> left_wrist
        (1, 2),   // neck -> right_shoulder
        (2, 3),   // right_shoulder -> right_elbow
        (3, 4),   // right_elbow -> right_wrist
        (1, 11),  // neck -> left_hip
        (11, 12), // left_hip -> left_knee
        (12, 13), // left_knee -> left_ankle
        (1, 8),   // neck -> right_hip
        (8, 9),   // right_hip -> right_knee
        (9, 10),  // right_knee -> right_ankle
    ];

    const FINGERS: [&str; 5] = ["thumb", "index", "middle", "ring", "little"];

    fn body18_keypoints() -> Vec<(String, KeypointGroup)> {
        BODY18_NAMES
            .iter()
            .map(|n| (n.to_string(), KeypointGroup::Body))
            .collect()
    }

    fn body18_bones() -> Vec<Bone> {
        BODY18_BONES
            .iter()
            .map(|&(parent, child)| Bone { parent, child })
            .collect()
    }

    /// 18 body keypoints in the OpenPose ordering, rooted at the neck.
    pub fn body18() -> Arc<SkeletonTopology> {
        Arc::new(
            SkeletonTopology::new(BODY18, body18_keypoints(), body18_bones(), 1)
                .expect("canonical body18 is valid"),
        )
    }

    /// body18 plus the 5-point face group used as generator guidance.
    pub fn body18_face5() -> Arc<SkeletonTopology> {
        let mut keypoints = body18_keypoints();
        for n in [
            "face_nose",
            "face_left_eye",
            "face_right_eye",
            "face_left_ear",
            "face_right_ear",
        ] {
            keypoints.push((n.to_string(), KeypointGroup::Face));
        }
        Arc::new(
            SkeletonTopology::new(BODY18_FACE5, keypoints, body18_bones(), 1)
                .expect("canonical body18-face5 is valid"),
        )
    }

    /// Name of hand joint `j` (0 = wrist, then 4 joints per finger).
    pub fn hand_joint_name(side: &str, j: usize) -> String {
        if j == 0 {
            return format!("{side}_hand_wrist");
        }
        let finger = FINGERS[(j - 1) / 4];
        format!("{side}_{finger}_{}", (j - 1) % 4 + 1)
    }

    /// 18 body + 68 face + 21 left-hand + 21 right-hand keypoints.
    pub fn full() -> Arc<SkeletonTopology> {
        let mut keypoints = body18_keypoints();
        for i in 0..68 {
            keypoints.push((format!("face_{i:02}"), KeypointGroup::Face));
        }
        let mut bones = body18_bones();
        for (side, group, body_wrist) in [
            ("left", KeypointGroup::HandLeft, 7usize),
            ("right", KeypointGroup::HandRight, 4usize),
        ] {
            let base = keypoints.len();
            for j in 0..21 {
                keypoints.push((hand_joint_name(side, j), group));
            }
            bones.push(Bone {
                parent: body_wrist,
                child: base,
            });
            for finger in 0..5 {
                let mut prev = base;
                for joint in 0..4 {
                    let child = base + 1 + finger * 4 + joint;
                    bones.push(Bone {
                        parent: prev,
                        child,
                    });
                    prev = child;
                }
            }
        }
        Arc::new(
            SkeletonTopology::new(FULL, keypoints, bones, 1).expect("canonical full is valid"),
        )
    }

    /// Resolves a topology name from the interchange format.
    pub fn by_name(name: &str) -> Result<Arc<SkeletonTopology>> {
        match name {
            BODY18 => Ok(body18()),
            BODY18_FACE5 => Ok(body18_face5()),
            FULL => Ok(full()),
            other => Err(Error::UnknownTopology(other.to_string())),
        }
    }
}

/// Per-keypoint 2D positions with presence confidence for one time step.
/// Positions are normalized image coordinates (origin top-left, y down),
/// nominally in [0, 1]; confidence 0 means the keypoint is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame<S> {
    positions: Vec<Point2<S>>,
    confidence: Vec<S>,
}

impl<S: Scalar> KeypointFrame<S> {
    pub fn new(positions: Vec<Point2<S>>, confidence: Vec<S>) -> Result<Self> {
        if positions.len() != confidence.len() {
            return Err(Error::InvalidFrame(format!(
                "{} positions vs {} confidences",
                positions.len(),
                confidence.len()
            )));
        }
        for (i, &c) in confidence.iter().enumerate() {
            if !(c >= S::zero() && c <= S::one()) {
                return Err(Error::InvalidFrame(format!(
                    "confidence {c} at keypoint {i} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            positions,
            confidence,
        })
    }

    /// A frame of `len` absent keypoints at the origin.
    pub fn absent(len: usize) -> Self {
        Self {
            positions: vec![Point2::default(); len],
            confidence: vec![S::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, index: usize) -> Point2<S> {
        self.positions[index]
    }

    pub fn confidence(&self, index: usize) -> S {
        self.confidence[index]
    }

    pub fn is_present(&self, index: usize) -> bool {
        self.confidence[index] > S::zero()
    }

    pub fn positions(&self) -> &[Point2<S>] {
        &self.positions
    }

    pub fn confidences(&self) -> &[S] {
        &self.confidence
    }

    pub fn set_position(&mut self, index: usize, p: Point2<S>) {
        self.positions[index] = p;
    }

    pub fn set(&mut self, index: usize, p: Point2<S>, confidence: S) {
        self.positions[index] = p;
        self.confidence[index] = confidence;
    }

    pub fn set_absent(&mut self, index: usize) {
        self.confidence[index] = S::zero();
    }

    /// Euclidean length of `bone` in this frame.
    pub fn bone_length(&self, bone_index: usize, topology: &SkeletonTopology) -> Result<S> {
        let bone = topology.bones()[bone_index];
        for end in [bone.parent, bone.child] {
            if !self.is_present(end) {
                return Err(Error::MissingKeypoint(end));
            }
        }
        Ok((self.positions[bone.child] - self.positions[bone.parent]).norm())
    }
}

/// An ordered sequence of keypoint frames at a fixed frame rate, all
/// conforming to one topology. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip<S> {
    topology: Arc<SkeletonTopology>,
    frames: Vec<KeypointFrame<S>>,
    fps: S,
}

impl<S: Scalar> MotionClip<S> {
    pub fn new(
        topology: Arc<SkeletonTopology>,
        frames: Vec<KeypointFrame<S>>,
        fps: S,
    ) -> Result<Self> {
        if !(fps > S::zero()) {
            return Err(Error::InvalidFrame(format!("fps {fps} must be positive")));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != topology.len() {
                return Err(Error::TopologyMismatch(format!(
                    "frame {i} has {} keypoints, topology '{}' has {}",
                    f.len(),
                    topology.name(),
                    topology.len()
                )));
            }
        }
        Ok(Self {
            topology,
            frames,
            fps,
        })
    }

    pub fn topology(&self) -> &Arc<SkeletonTopology> {
        &self.topology
    }

    pub fn frames(&self) -> &[KeypointFrame<S>] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &KeypointFrame<S> {
        &self.frames[index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> S {
        self.fps
    }

    /// Rebuilds the clip with frames produced by `f`.
    pub fn map_frames<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&KeypointFrame<S>) -> Result<KeypointFrame<S>>,
    {
        let frames = self
            .frames
            .iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.topology.clone(), frames, self.fps)
    }

    /// Lifts this clip onto a larger topology by keypoint name. Keypoints
    /// without a counterpart in the target are dropped; target keypoints with
    /// no source are absent (confidence 0).
    pub fn embed_into(&self, target: Arc<SkeletonTopology>) -> Result<Self> {
        let mapping: Vec<Option<usize>> = (0..target.len())
            .map(|i| self.topology.index_of(target.keypoint_name(i)))
            .collect();
        if !self
            .topology
            .body_indices()
            .all(|i| target.index_of(self.topology.keypoint_name(i)).is_some())
        {
            return Err(Error::TopologyMismatch(format!(
                "'{}' body keypoints do not all exist in '{}'",
                self.topology.name(),
                target.name()
            )));
        }
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut out = KeypointFrame::absent(target.len());
                for (ti, si) in mapping.iter().enumerate() {
                    if let Some(si) = si {
                        out.set(ti, f.position(*si), f.confidence(*si));
                    }
                }
                out
            })
            .collect();
        Self::new(target, frames, self.fps)
    }
}

/// Per-frame 3D joint positions in model space (y-up), the raw output
/// contract of an external text-to-motion generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip3D<S> {
    frames: Vec<Vec<Point3<S>>>,
    fps: S,
}

impl<S: Scalar> MotionClip3D<S> {
    pub fn new(frames: Vec<Vec<Point3<S>>>, fps: S) -> Result<Self> {
        if !(fps > S::zero()) {
            return Err(Error::InvalidFrame(format!("fps {fps} must be positive")));
        }
        if let Some(first) = frames.first() {
            let k = first.len();
            if let Some(bad) = frames.iter().position(|f| f.len() != k) {
                return Err(Error::InvalidFrame(format!(
                    "frame {bad} has {} joints, frame 0 has {k}",
                    frames[bad].len()
                )));
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Vec<Point3<S>>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn fps(&self) -> S {
        self.fps
    }
}
