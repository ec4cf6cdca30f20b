//! Saturation-triggered replication.
//!
//! A saturated server polls its neighbors. A neighbor that holds the video
//! and has spare capacity takes the request directly. Failing that, an idle
//! neighbor without the video is elected by expected QoS and receives a
//! copy. When every neighbor is saturated nothing happens.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::stream::{ServerId, VideoId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicationError {
    #[error("no neighbor reports")]
    NoReports,
    #[error("no QoS score for candidate {0}")]
    MissingScore(ServerId),
    #[error("source does not hold {0}")]
    SourceMissing(VideoId),
    #[error("target already holds or is receiving {0}")]
    AlreadyHeld(VideoId),
    #[error("target catalog is full ({capacity} videos)")]
    CatalogFull { capacity: usize },
    #[error("source speed must be positive")]
    BadSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborReport {
    pub server_id: ServerId,
    pub has_video: bool,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationDecision {
    /// An able holder serves the request; no copy is made.
    Redirect(ServerId),
    /// Copy the video to this idle non-holder.
    Replicate(ServerId),
    NoAction,
}

fn best<T: Scalar>(
    candidates: impl Iterator<Item = ServerId>,
    qos_scores: &HashMap<ServerId, T>,
) -> Result<Option<ServerId>, ReplicationError> {
    let mut chosen: Option<(T, ServerId)> = None;
    for id in candidates {
        let score = *qos_scores.get(&id).ok_or(ReplicationError::MissingScore(id))?;
        let better = match chosen {
            None => true,
            Some((s, cid)) => score > s || (score == s && id < cid),
        };
        if better {
            chosen = Some((score, id));
        }
    }
    Ok(chosen.map(|(_, id)| id))
}

/// Elects a target for a saturated server from its neighbors' reports.
/// Redirect beats Replicate; within a kind the highest QoS score wins, ties
/// going to the lowest server id.
pub fn handle_saturation<T: Scalar>(
    reports: &[NeighborReport],
    qos_scores: &HashMap<ServerId, T>,
) -> Result<SaturationDecision, ReplicationError> {
    if reports.is_empty() {
        return Err(ReplicationError::NoReports);
    }
    let holders = reports
        .iter()
        .filter(|r| r.has_video && !r.saturated)
        .map(|r| r.server_id);
    if let Some(id) = best(holders, qos_scores)? {
        return Ok(SaturationDecision::Redirect(id));
    }
    let idle = reports
        .iter()
        .filter(|r| !r.has_video && !r.saturated)
        .map(|r| r.server_id);
    Ok(best(idle, qos_scores)?.map_or(SaturationDecision::NoAction, SaturationDecision::Replicate))
}

/// Videos stored on one server. Videos still being copied in count against
/// the capacity but cannot be served yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoCatalog {
    capacity: usize,
    ready: BTreeSet<VideoId>,
    incoming: BTreeSet<VideoId>,
}

impl VideoCatalog {
    pub fn new(capacity: usize) -> Self {
        VideoCatalog {
            capacity,
            ready: BTreeSet::new(),
            incoming: BTreeSet::new(),
        }
    }

    pub fn with_videos(
        capacity: usize,
        videos: impl IntoIterator<Item = VideoId>,
    ) -> Result<Self, ReplicationError> {
        let mut c = Self::new(capacity);
        for v in videos {
            c.insert(v)?;
        }
        Ok(c)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ready.len() + self.incoming.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    /// Servable now.
    pub fn holds(&self, video: VideoId) -> bool {
        self.ready.contains(&video)
    }

    pub fn is_receiving(&self, video: VideoId) -> bool {
        self.incoming.contains(&video)
    }

    pub fn videos(&self) -> impl Iterator<Item = VideoId> + '_ {
        self.ready.iter().copied()
    }

    pub fn insert(&mut self, video: VideoId) -> Result<(), ReplicationError> {
        if self.holds(video) || self.is_receiving(video) {
            return Err(ReplicationError::AlreadyHeld(video));
        }
        if self.is_full() {
            return Err(ReplicationError::CatalogFull {
                capacity: self.capacity,
            });
        }
        self.ready.insert(video);
        Ok(())
    }

    /// Marks an incoming copy as servable. Returns false if none was pending.
    pub fn complete(&mut self, video: VideoId) -> bool {
        if self.incoming.remove(&video) {
            self.ready.insert(video);
            true
        } else {
            false
        }
    }
}

/// Starts copying `video` from `source` to `target`. The target reserves a
/// catalog slot immediately and can serve the video after the returned
/// transfer delay, `frame_count / source_speed`.
pub fn apply_replication<T: Scalar>(
    source: &VideoCatalog,
    source_speed: T,
    target: &mut VideoCatalog,
    video: VideoId,
    frame_count: u64,
) -> Result<T, ReplicationError> {
    if !source.holds(video) {
        return Err(ReplicationError::SourceMissing(video));
    }
    if target.holds(video) || target.is_receiving(video) {
        return Err(ReplicationError::AlreadyHeld(video));
    }
    if target.is_full() {
        return Err(ReplicationError::CatalogFull {
            capacity: target.capacity,
        });
    }
    if !(source_speed > T::zero()) {
        return Err(ReplicationError::BadSpeed);
    }
    target.incoming.insert(video);
    Ok(T::from_count(frame_count) / source_speed)
}
