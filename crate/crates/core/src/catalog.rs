//! Video population and Zipf popularity.
//!
//! Videos are identified by their popularity rank: video 1 is the most
//! requested, video N the least.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Zipf exponent for web-object popularity.
pub const DEFAULT_ALPHA: f64 = 0.986;

/// 1-based video identifier. Equal to the video's popularity rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VideoId(pub u32);

impl VideoId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl std::fmt::Display for VideoId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub id: VideoId,
    /// Playback length in minutes.
    pub length_min: u32,
    pub rank: u32,
}

/// The N videos, sorted by rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    videos: Vec<Video>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn get(&self, id: VideoId) -> Option<&Video> {
        if id.0 == 0 {
            return None;
        }
        self.videos.get(id.index())
    }

    pub fn contains(&self, id: VideoId) -> bool {
        self.get(id).is_some()
    }

    pub fn length_of(&self, id: VideoId) -> u32 {
        self.videos[id.index()].length_min
    }

    pub fn total_minutes(&self) -> u64 {
        self.videos.iter().map(|v| u64::from(v.length_min)).sum()
    }
}

/// Zipf request distribution over a catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    pub alpha: f64,
    /// `weights[i]` is the request probability of video `i + 1`.
    pub weights: Vec<f64>,
    /// Aggregate request rate, requests per minute.
    pub total_rate: f64,
    pub per_video_rate: Vec<f64>,
}

impl PopularityModel {
    pub fn probability(&self, id: VideoId) -> f64 {
        self.weights[id.index()]
    }

    pub fn rate(&self, id: VideoId) -> f64 {
        self.per_video_rate[id.index()]
    }
}

/// Normalized Zipf weights `p_i = i^-alpha / sum_j j^-alpha` for `i = 1..=n_videos`.
pub fn zipf_weights(n_videos: usize, alpha: f64) -> Result<Vec<f64>> {
    if n_videos == 0 {
        return Err(Error::invalid("zipf_weights: n_videos must be at least 1"));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::invalid(format!(
            "zipf_weights: alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        return Ok(vec![1.0 / n_videos as f64; n_videos]);
    }
    let raw: Vec<f64> = (1..=n_videos).map(|i| (i as f64).powf(-alpha)).collect();
    let norm: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// Builds the catalog and its popularity model from per-video lengths.
///
/// `lengths[i]` is the length of the video with rank `i + 1`.
pub fn build_catalog(
    lengths: &[u32],
    alpha: f64,
    total_rate: f64,
) -> Result<(Catalog, PopularityModel)> {
    if lengths.is_empty() {
        return Err(Error::invalid("build_catalog: empty video list"));
    }
    if let Some(pos) = lengths.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!(
            "build_catalog: video {} has zero length",
            pos + 1
        )));
    }
    if !(total_rate.is_finite() && total_rate > 0.0) {
        return Err(Error::invalid(format!(
            "build_catalog: total_rate must be positive, got {total_rate}"
        )));
    }
    let weights = zipf_weights(lengths.len(), alpha)?;
    let per_video_rate = weights.iter().map(|p| p * total_rate).collect();
    let videos = lengths
        .iter()
        .enumerate()
        .map(|(i, &length_min)| Video {
            id: VideoId(i as u32 + 1),
            length_min,
            rank: i as u32 + 1,
        })
        .collect();
    Ok((
        Catalog { videos },
        PopularityModel {
            alpha,
            weights,
            total_rate,
            per_video_rate,
        },
    ))
}
