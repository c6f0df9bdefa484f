//! Max-pooled video representation.

use crate::atoms::AtomSet;
use crate::error::{Error, Result};
use crate::ingest::SegmentHistogram;
use crate::phrases::{phrase_response_from_matrix, MotionPhrase};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRepresentation {
    pub video_id: String,
    /// Atom part (one max-pooled response per atom) followed by one response per phrase.
    pub vector: Vec<f64>,
}

impl VideoRepresentation {
    /// `video_id<TAB>v1,v2,...`
    pub fn dump_line(&self) -> String {
        format!("{}\t{}", self.video_id, crate::ingest::format_vector(&self.vector))
    }
}

/// Encodes a video from its atom response matrix `responses[atom][segment]`.
pub fn encode_responses(
    video_id: &str,
    responses: &[Vec<f64>],
    phrases: &[MotionPhrase],
    l2_normalize: bool,
) -> Result<VideoRepresentation> {
    if responses.is_empty() {
        return Err(Error::invalid("model has no atoms"));
    }
    let mut vector = Vec::with_capacity(responses.len() + phrases.len());
    for row in responses {
        if row.is_empty() {
            return Err(Error::invalid(format!("video {video_id} has no segments")));
        }
        vector.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    for p in phrases {
        vector.push(phrase_response_from_matrix(p, responses)?);
    }
    if l2_normalize {
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            vector.iter_mut().for_each(|v| *v /= norm);
        }
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("representation of {video_id}")));
    }
    Ok(VideoRepresentation {
        video_id: video_id.to_string(),
        vector,
    })
}

/// Max-pools atom responses over the video's segments, then appends phrase responses.
pub fn encode_video(
    video_id: &str,
    video_segments: &[SegmentHistogram],
    atoms: &AtomSet,
    phrases: &[MotionPhrase],
    l2_normalize: bool,
) -> Result<VideoRepresentation> {
    if video_segments.is_empty() {
        return Err(Error::invalid(format!("video {video_id} has no segments")));
    }
    encode_responses(video_id, &atoms.response_matrix(video_segments)?, phrases, l2_normalize)
}
