//! Sender and receiver state machines.
//!
//! A session has two phases. The agreement phase sends one confirmable
//! request carrying the session parameters and retransmits it with binary
//! exponential backoff until an ACK arrives. The block phase then makes
//! exactly N paced transmissions; each samples a block i.i.d. from the
//! plan's probabilities and sends its K fragments as non-confirmable
//! packets. Nothing in the block phase is ever retransmitted.

mod link;
mod receiver;
mod sampler;
mod sender;

pub use link::InProcessLink;
pub use receiver::{
    serve, Ingest, IngestEvent, ReceptionReport, ReceptionStats, Receiver, ReceiverConfig,
    ReceiverPhase, SharedReceiver,
};
pub use sampler::Sampler;
pub use sender::{AgreementOutcome, Sender, SenderConfig, SenderPhase};

use std::io::Write;
use std::time::Duration;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::image::ImageError;
use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("agreement failed after {requests_sent} requests")]
    AgreementFailed { requests_sent: u32 },
    #[error("no agreement request arrived in time")]
    AgreementTimeout,
    #[error("operation needs phase {expected}, state is in {actual}")]
    WrongPhase {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("finalize at {now:?} before deadline {deadline:?} with blocks missing")]
    FinalizeTooEarly { now: Duration, deadline: Duration },
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("block phase aborted after {} transmissions: {source}", log.records.len())]
    BlockPhase {
        log: Box<SendLog>,
        source: Box<ProtocolError>,
    },
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// One block transmission: K fragment packets of a single sampled block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendRecord {
    pub sequence: u32,
    pub block_id: u32,
    /// Offset of the send from the start of the block phase.
    pub timestamp: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SendLog {
    pub records: Vec<SendRecord>,
    pub packets_sent: u64,
    /// Wall (or virtual) time from the first pacing slot to the last send.
    pub duration: Duration,
}

impl SendLog {
    pub const SCHEMA: &'static str = "# stocoap send-log v1";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-block transmission counts.
    pub fn counts(&self, block_count: usize) -> Vec<u32> {
        let mut counts = vec![0; block_count];
        for r in &self.records {
            counts[r.block_id as usize] += 1;
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::SCHEMA)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sequence", "block_id", "timestamp_us"])?;
        for r in &self.records {
            w.write_record([
                r.sequence.to_string(),
                r.block_id.to_string(),
                r.timestamp.as_micros().to_string(),
            ])?;
        }
        w.flush()
    }
}
