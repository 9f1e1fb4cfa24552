//! The five-step context migration run by the eManager.
//!
//! I   prepare: the destination creates a queue for the context and acks.
//! II  stop: the source stops accepting events for the context and acks.
//! III remap: after `delta` ticks the eManager flips its map and sends
//!     `migrate` to the source.
//! IV  transfer: the source queues `migrate_c` behind the requests already
//!     waiting at the context; once it reaches the head the state moves.
//! V   done: the destination runs the events it deferred.

use serde::{Deserialize, Serialize};

use aeon_core::engine::EventId;
use aeon_core::graph::ContextId;

use crate::cluster::ServerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationPhase {
    Prepare,
    Stop,
    Remap,
    Transfer,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Migration {
    pub ctx: ContextId,
    pub src: ServerId,
    pub dst: ServerId,
    pub phase: MigrationPhase,
    pub started: u64,
    /// Tick the source stopped accepting events.
    pub stopped_at: Option<u64>,
    /// Tick the eManager learned of the stop.
    pub stop_acked_at: Option<u64>,
    /// Earliest tick the map may flip.
    pub delta_deadline: Option<u64>,
    pub flipped_at: Option<u64>,
    /// Tick `migrate_c` was queued at the source.
    pub migrate_queued_at: Option<u64>,
    pub transfer_started_at: Option<u64>,
    pub transfer_ticks: u64,
    pub done_at: Option<u64>,
    /// Client events the destination holds until the state arrives.
    #[serde(skip)]
    pub queued_at_dst: Vec<u64>,
    /// Events whose requests were at the context when `migrate_c` was queued.
    #[serde(skip)]
    pub ahead: Vec<EventId>,
    /// Events refused by the source while stopped, by tick.
    pub refusals: Vec<u64>,
}

impl Migration {
    pub fn new(ctx: ContextId, src: ServerId, dst: ServerId, now: u64) -> Self {
        Migration {
            ctx,
            src,
            dst,
            phase: MigrationPhase::Prepare,
            started: now,
            stopped_at: None,
            stop_acked_at: None,
            delta_deadline: None,
            flipped_at: None,
            migrate_queued_at: None,
            transfer_started_at: None,
            transfer_ticks: 0,
            done_at: None,
            queued_at_dst: Vec::new(),
            ahead: Vec::new(),
            refusals: Vec::new(),
        }
    }

    /// Moves to the next phase; phases only ever increase.
    pub fn advance(&mut self, to: MigrationPhase) {
        assert!(to > self.phase, "migration of {} cannot go from {:?} to {:?}", self.ctx, self.phase, to);
        self.phase = to;
    }

    pub fn stopped(&self) -> bool {
        self.stopped_at.is_some() && self.done_at.is_none()
    }

    pub fn flipped(&self) -> bool {
        self.flipped_at.is_some()
    }

    /// The source has received `migrate` and forwards to the destination.
    pub fn src_knows_dst(&self) -> bool {
        self.migrate_queued_at.is_some()
    }

    pub fn transferring(&self) -> bool {
        self.transfer_started_at.is_some() && self.done_at.is_none()
    }

    /// Ticks during which a new event for the context could be neither run
    /// nor queued: from the stop until the map flip.
    pub fn unavailable_ticks(&self) -> Option<u64> {
        Some(self.flipped_at? - self.stopped_at?)
    }
}
