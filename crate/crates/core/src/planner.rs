//! Motion-text planning and clip concatenation.
//!
//! Long motion texts are divided into ordered segments, one clip is generated
//! per segment elsewhere, and the clips are joined back together with their
//! boundary frames pinned to the reference pose so the junctions are
//! seamless.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::services;
use crate::skeleton::{KeypointFrame, MotionClip};
use serde_json::json;

/// Split connectives, tried in order at each scan position. Word
/// connectives only match at word boundaries.
const CONNECTIVES: [&str; 5] = ["then", "after that", "and then", ";", ". "];

/// Identifier of the committed prompt template sent to the LLM service.
pub const PROMPT_TEMPLATE_ID: &str = "segment-motion-text/v1";

/// The prompt template itself, versioned alongside its id. `{text}` is
/// replaced with the input motion text.
pub const PROMPT_TEMPLATE: &str = "You split motion descriptions into short, sequential, \
self-contained motion segments. Reply with one segment per line and nothing else. \
Split this motion description:\n{text}";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSource {
    RuleBased,
    Llm,
    /// The LLM response was malformed and the rule-based splitter was used.
    LlmFallback,
}

/// Ordered motion-text segments plus the original input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionPlan {
    pub segments: Vec<String>,
    pub source_text: String,
    pub source: PlanSource,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn connective_at(text: &str, byte_pos: usize) -> Option<usize> {
    let rest = &text[byte_pos..];
    for connective in CONNECTIVES {
        let candidate = match rest.get(..connective.len()) {
            Some(c) => c,
            None => continue,
        };
        if !candidate.eq_ignore_ascii_case(connective) {
            continue;
        }
        let wordlike = connective.chars().all(|c| is_word_char(c) || c == ' ');
        if wordlike {
            let prev_ok = text[..byte_pos]
                .chars()
                .next_back()
                .map_or(true, |c| !is_word_char(c));
            let next_ok = rest[connective.len()..]
                .chars()
                .next()
                .map_or(true, |c| !is_word_char(c));
            if !(prev_ok && next_ok) {
                continue;
            }
        }
        return Some(connective.len());
    }
    None
}

fn trim_segment(s: &str) -> &str {
    s.trim().trim_matches(|c| matches!(c, ',' | ';' | '.')).trim()
}

/// Deterministic splitter: scans left to right and cuts at every connective
/// occurrence, trimming whitespace and joining punctuation from the pieces.
/// A text with no connectives yields itself as the single segment.
pub fn plan_rule_based(text: &str) -> Result<MotionPlan> {
    if text.trim().is_empty() {
        return Err(Error::BlankInput);
    }
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut pos = 0usize;
    while pos < text.len() {
        if !text.is_char_boundary(pos) {
            pos += 1;
            continue;
        }
        if let Some(len) = connective_at(text, pos) {
            let piece = trim_segment(&text[start..pos]);
            if !piece.is_empty() {
                segments.push(piece.to_string());
            }
            pos += len;
            start = pos;
        } else {
            pos += 1;
        }
    }
    let piece = trim_segment(&text[start..]);
    if !piece.is_empty() {
        segments.push(piece.to_string());
    }
    if segments.is_empty() {
        // Connectives and punctuation only; treat like no split points.
        segments.push(text.trim().to_string());
    }
    Ok(MotionPlan {
        segments,
        source_text: text.to_string(),
        source: PlanSource::RuleBased,
    })
}

/// Splits an LLM text reply into segments: one per line or '|'-delimited,
/// with list bullets and numbering stripped.
fn parse_llm_reply(reply: &str) -> Vec<String> {
    reply
        .split(['\n', '|'])
        .map(|line| {
            let line = line.trim();
            let line = line
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches(['.', ')', '-', '*'])
                .trim();
            line.to_string()
        })
        .filter(|line| !line.is_empty())
        .collect()
}

/// Asks the LLM service to divide the text. Malformed replies degrade to
/// the rule-based splitter with the fallback flagged in the plan source;
/// transport failures are errors.
pub fn plan_llm(text: &str, endpoint: &str) -> Result<MotionPlan> {
    if text.trim().is_empty() {
        return Err(Error::BlankInput);
    }
    let request = json!({
        "template_id": PROMPT_TEMPLATE_ID,
        "text": text,
    });
    let reply = match services::post_json(endpoint, &request) {
        Ok(response) => response
            .get("response")
            .and_then(|v| v.as_str())
            .map(str::to_string),
        Err(Error::ContractViolation(_)) => None,
        Err(e) => return Err(e),
    };
    let segments = reply.as_deref().map(parse_llm_reply).unwrap_or_default();
    if segments.is_empty() {
        log::warn!("LLM reply malformed or empty; falling back to rule-based planning");
        let mut plan = plan_rule_based(text)?;
        plan.source = PlanSource::LlmFallback;
        return Ok(plan);
    }
    Ok(MotionPlan {
        segments,
        source_text: text.to_string(),
        source: PlanSource::Llm,
    })
}

/// How clip boundaries are pinned to the reference pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPolicy<S> {
    /// Frames linearly interpolated toward the reference at each end.
    pub blend_frames: usize,
    /// Maximum per-keypoint deviation of boundary frames from the reference.
    pub boundary_tolerance: S,
}

impl<S: Scalar> BoundaryPolicy<S> {
    pub fn new(blend_frames: usize, boundary_tolerance: S) -> Result<Self> {
        if !(boundary_tolerance > S::zero()) {
            return Err(Error::InvalidConfig(
                "boundary tolerance must be positive".into(),
            ));
        }
        Ok(Self {
            blend_frames,
            boundary_tolerance,
        })
    }
}

impl<S: Scalar> Default for BoundaryPolicy<S> {
    fn default() -> Self {
        Self {
            blend_frames: 3,
            boundary_tolerance: S::from_f64_c(1e-6),
        }
    }
}

/// Blend of `frame` toward `reference` at interpolation parameter `t`
/// (t = 0 is the pure reference pose).
fn blend_frame<S: Scalar>(
    reference: &KeypointFrame<S>,
    frame: &KeypointFrame<S>,
    t: S,
) -> KeypointFrame<S> {
    let mut out = frame.clone();
    let u = S::one() - t;
    for i in 0..frame.len() {
        match (reference.is_present(i), frame.is_present(i)) {
            (true, true) => out.set(
                i,
                reference.position(i).lerp(frame.position(i), t),
                u * reference.confidence(i) + t * frame.confidence(i),
            ),
            (true, false) => out.set(i, reference.position(i), u * reference.confidence(i)),
            _ => {}
        }
    }
    out
}

/// Concatenates per-segment clips into one clip whose first frame, last
/// frame, and every junction equal the reference pose. Each clip's first and
/// last `min(blend_frames, len/2)` frames are interpolated from the
/// reference; the duplicated reference frame at each junction is dropped, so
/// the output has `sum(len) - junctions` frames.
pub fn concat_clips<S: Scalar>(
    clips: &[MotionClip<S>],
    reference: &KeypointFrame<S>,
    policy: &BoundaryPolicy<S>,
) -> Result<MotionClip<S>> {
    let first = clips.first().ok_or(Error::EmptyClip)?;
    for clip in clips {
        if clip.is_empty() {
            return Err(Error::EmptyClip);
        }
        if clip.topology() != first.topology() {
            return Err(Error::TopologyMismatch(format!(
                "'{}' vs '{}'",
                clip.topology().name(),
                first.topology().name()
            )));
        }
        if clip.fps() != first.fps() {
            return Err(Error::FpsMismatch(
                first.fps().as_f64(),
                clip.fps().as_f64(),
            ));
        }
    }
    if reference.len() != first.topology().len() {
        return Err(Error::TopologyMismatch(format!(
            "reference has {} keypoints, clips have {}",
            reference.len(),
            first.topology().len()
        )));
    }

    let mut frames: Vec<KeypointFrame<S>> = Vec::new();
    for (ci, clip) in clips.iter().enumerate() {
        let len = clip.len();
        let k = policy.blend_frames.min(len / 2);
        let mut blended: Vec<KeypointFrame<S>> = clip.frames().to_vec();
        for i in 0..k {
            let t = S::from_usize(i).expect("fits scalar") / S::from_usize(k).expect("fits scalar");
            blended[i] = blend_frame(reference, &blended[i], t);
            let j = len - 1 - i;
            blended[j] = blend_frame(reference, &blended[j], t);
        }
        // Drop the duplicated reference frame at the junction.
        let skip = usize::from(ci > 0);
        frames.extend(blended.into_iter().skip(skip));
    }
    MotionClip::new(first.topology().clone(), frames, first.fps())
}

/// Checks that the first, last, and junction frames of a concatenated clip
/// match the reference within the policy tolerance on reference-visible
/// body keypoints.
pub fn validate_boundaries<S: Scalar>(
    clip: &MotionClip<S>,
    reference: &KeypointFrame<S>,
    policy: &BoundaryPolicy<S>,
    junctions: &[usize],
) -> Result<()> {
    let topology = clip.topology();
    let mut check_frames = vec![0, clip.len() - 1];
    check_frames.extend_from_slice(junctions);
    for &f in &check_frames {
        for i in topology.body_indices() {
            if !reference.is_present(i) {
                continue;
            }
            let d = (clip.frame(f).position(i) - reference.position(i)).norm();
            if d > policy.boundary_tolerance {
                return Err(Error::ContractViolation(format!(
                    "frame {f} keypoint '{}' deviates {d} from the reference pose",
                    topology.keypoint_name(i)
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point2;
    use crate::skeleton::topologies;

    #[test]
    fn no_connectives_single_segment() {
        let plan = plan_rule_based("a man is running").unwrap();
        assert_eq!(plan.segments, vec!["a man is running"]);
        assert_eq!(plan.source, PlanSource::RuleBased);
    }

    // Frozen by applying the connective table by hand.
    #[test]
    fn splits_on_then() {
        let plan = plan_rule_based("a man waves, then he jumps, then he walks").unwrap();
        assert_eq!(plan.segments, vec!["a man waves", "he jumps", "he walks"]);
    }

    #[test]
    fn splits_on_and_then_consuming_and() {
        let plan = plan_rule_based("a man waves and then he jumps").unwrap();
        assert_eq!(plan.segments, vec!["a man waves", "he jumps"]);
    }

    #[test]
    fn splits_on_semicolon_and_sentence() {
        let plan = plan_rule_based("she runs; she stops. after that she sits").unwrap();
        assert_eq!(plan.segments, vec!["she runs", "she stops", "she sits"]);
    }

    #[test]
    fn connective_inside_word_not_split() {
        let plan = plan_rule_based("they strengthen their arms").unwrap();
        assert_eq!(plan.segments, vec!["they strengthen their arms"]);
    }

    #[test]
    fn blank_input_rejected() {
        assert!(matches!(plan_rule_based("  "), Err(Error::BlankInput)));
        assert!(matches!(plan_rule_based(""), Err(Error::BlankInput)));
    }

    #[test]
    fn case_insensitive_connectives() {
        let plan = plan_rule_based("a man waves, THEN he jumps").unwrap();
        assert_eq!(plan.segments, vec!["a man waves", "he jumps"]);
    }

    #[test]
    fn rejoined_segments_cover_source_tokens() {
        let text = "a person waves the right hand, then walks forward; after that they jump. \
                    and then they sit down";
        let plan = plan_rule_based(text).unwrap();
        let joined = plan.segments.join(" ").to_lowercase();
        let connective_words = ["then", "after", "that", "and"];
        for token in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            if connective_words.contains(&token) {
                continue;
            }
            assert!(joined.contains(token), "token '{token}' lost");
        }
    }

    fn tiny_clip(len: usize, value: f64) -> MotionClip<f64> {
        let topo = topologies::body18();
        let frames: Vec<KeypointFrame<f64>> = (0..len)
            .map(|i| {
                let mut f = KeypointFrame::absent(topo.len());
                for k in 0..topo.len() {
                    f.set(
                        k,
                        Point2::new(value + 0.01 * i as f64, 0.1 + 0.02 * k as f64),
                        1.0,
                    );
                }
                f
            })
            .collect();
        MotionClip::new(topo, frames, 24.0).unwrap()
    }

    fn reference_frame() -> KeypointFrame<f64> {
        let topo = topologies::body18();
        let mut f = KeypointFrame::absent(topo.len());
        for k in 0..topo.len() {
            f.set(k, Point2::new(0.5, 0.1 + 0.02 * k as f64), 1.0);
        }
        f
    }

    #[test]
    fn two_clips_drop_one_junction_frame() {
        let clips = vec![tiny_clip(14, 0.3), tiny_clip(14, 0.6)];
        let policy = BoundaryPolicy::new(2, 1e-6).unwrap();
        let out = concat_clips(&clips, &reference_frame(), &policy).unwrap();
        assert_eq!(out.len(), 27);
    }

    #[test]
    fn single_clip_k0_already_at_reference_is_noop() {
        let topo = topologies::body18();
        let reference = reference_frame();
        let mut frames = vec![reference.clone(); 4];
        frames[1] = tiny_clip(1, 0.4).frame(0).clone();
        frames[2] = tiny_clip(1, 0.45).frame(0).clone();
        let clip = MotionClip::new(topo, frames, 24.0).unwrap();
        let policy = BoundaryPolicy::new(0, 1e-6).unwrap();
        let out = concat_clips(std::slice::from_ref(&clip), &reference, &policy).unwrap();
        assert_eq!(out, clip);
    }

    #[test]
    fn fps_mismatch_rejected() {
        let topo = topologies::body18();
        let a = tiny_clip(6, 0.3);
        let frames = a.frames().to_vec();
        let b = MotionClip::new(topo, frames, 30.0).unwrap();
        assert!(matches!(
            concat_clips(&[a, b], &reference_frame(), &BoundaryPolicy::default()),
            Err(Error::FpsMismatch(_, _))
        ));
    }

    #[test]
    fn topology_mismatch_rejected() {
        let a = tiny_clip(6, 0.3);
        let b = a.embed_into(topologies::full()).unwrap();
        assert!(matches!(
            concat_clips(&[a, b], &reference_frame(), &BoundaryPolicy::default()),
            Err(Error::TopologyMismatch(_))
        ));
    }

    #[test]
    fn boundaries_equal_reference_and_interior_untouched() {
        let clips = vec![tiny_clip(10, 0.2), tiny_clip(8, 0.7), tiny_clip(9, 0.4)];
        let reference = reference_frame();
        let policy = BoundaryPolicy::new(3, 1e-6).unwrap();
        let out = concat_clips(&clips, &reference, &policy).unwrap();
        assert_eq!(out.len(), 10 + 8 + 9 - 2);
        // Junction frame indices: end of each non-final clip in the output.
        let junctions = [9, 9 + 7];
        validate_boundaries(&out, &reference, &policy, &junctions).unwrap();
        // Interior frames (farther than k from both ends) are bit-identical.
        let interior = out.frame(4);
        let source = clips[0].frame(4);
        assert_eq!(interior, source);
    }

    #[test]
    fn parse_llm_reply_formats() {
        assert_eq!(parse_llm_reply("A|B|C"), vec!["A", "B", "C"]);
        assert_eq!(parse_llm_reply("1. walk\n2. jump\n"), vec!["walk", "jump"]);
        assert_eq!(parse_llm_reply("- sit\n- stand"), vec!["sit", "stand"]);
        assert!(parse_llm_reply("  \n \n").is_empty());
    }
}
