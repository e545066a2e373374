use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use super::{ProtocolError, Result};
use crate::channel::{Clock, Transport};
use crate::image::{pixel_filling_rate, reassemble, BlockGrid, BlockPayload, PartialImage};
use crate::wire::{self, AgreementRequest, Body, DataLayout, Packet, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverConfig {
    /// Byte written into every missing block.
    pub fill: u8,
    /// Extra send intervals to wait past the expected end of transmission.
    pub guard_intervals: u32,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            fill: 0,
            guard_intervals: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverPhase {
    AwaitingAgreement,
    Receiving,
    Finalized,
}

impl ReceiverPhase {
    fn name(self) -> &'static str {
        match self {
            ReceiverPhase::AwaitingAgreement => "AwaitingAgreement",
            ReceiverPhase::Receiving => "Receiving",
            ReceiverPhase::Finalized => "Finalized",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceptionStats {
    pub datagrams: u64,
    pub requests: u64,
    pub fragments_accepted: u64,
    pub duplicate_fragments: u64,
    pub undecodable: u64,
    pub late: u64,
    pub ignored: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestEvent {
    Agreed,
    /// A retransmitted request for the current session; the ACK is repeated.
    RepeatedAgreement,
    Fragment {
        block_id: u32,
        fragment_index: u32,
        completed: bool,
    },
    Duplicate,
    Late,
    Undecodable(WireError),
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingest {
    pub event: IngestEvent,
    /// Datagram to send back to the peer, if any.
    pub reply: Option<Vec<u8>>,
}

impl Ingest {
    fn quiet(event: IngestEvent) -> Self {
        Self { event, reply: None }
    }
}

#[derive(Debug, Clone)]
struct Session {
    request: AgreementRequest,
    request_message_id: u16,
    layout: DataLayout,
    grid: BlockGrid,
    deadline: Duration,
    ack: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
struct BlockSlot {
    have: Vec<bool>,
    filled: u32,
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionReport {
    pub session_id: u16,
    pub block_count: usize,
    pub received: Vec<bool>,
    pub unique_blocks: usize,
    pub pixel_filling_rate: f64,
    pub stats: ReceptionStats,
    pub deadline: Duration,
    pub finalized_at: Duration,
}

impl ReceptionReport {
    pub const SCHEMA: &'static str = "# stocoap reception-report v1";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::SCHEMA)?;
        let s = &self.stats;
        writeln!(
            out,
            "# session_id={} blocks={} unique_blocks={} pixel_filling_rate={} datagrams={} \
             fragments_accepted={} duplicate_fragments={} undecodable={} late={}",
            self.session_id,
            self.block_count,
            self.unique_blocks,
            self.pixel_filling_rate,
            s.datagrams,
            s.fragments_accepted,
            s.duplicate_fragments,
            s.undecodable,
            s.late
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["block_id", "received"])?;
        for (id, &got) in self.received.iter().enumerate() {
            w.write_record([id.to_string(), (got as u8).to_string()])?;
        }
        w.flush()
    }
}

/// Receiver state for one session. Single owner; wrap in [`SharedReceiver`]
/// to hand it between threads.
#[derive(Debug, Clone)]
pub struct Receiver {
    config: ReceiverConfig,
    phase: ReceiverPhase,
    session: Option<Session>,
    slots: Vec<BlockSlot>,
    complete_blocks: usize,
    stats: ReceptionStats,
    output: Option<(PartialImage, ReceptionReport)>,
}

impl Receiver {
    pub fn new(config: ReceiverConfig) -> Self {
        Self {
            config,
            phase: ReceiverPhase::AwaitingAgreement,
            session: None,
            slots: Vec::new(),
            complete_blocks: 0,
            stats: ReceptionStats::default(),
            output: None,
        }
    }

    pub fn phase(&self) -> ReceiverPhase {
        self.phase
    }

    pub fn stats(&self) -> ReceptionStats {
        self.stats
    }

    pub fn deadline(&self) -> Option<Duration> {
        self.session.as_ref().map(|s| s.deadline)
    }

    pub fn agreement(&self) -> Option<&AgreementRequest> {
        self.session.as_ref().map(|s| &s.request)
    }

    pub fn layout(&self) -> Option<DataLayout> {
        self.session.as_ref().map(|s| s.layout)
    }

    pub fn complete_blocks(&self) -> usize {
        self.complete_blocks
    }

    pub fn is_block_received(&self, id: usize) -> bool {
        self.slots.get(id).is_some_and(|s| {
            let k = s.have.len() as u32;
            k > 0 && s.filled == k
        })
    }

    pub fn is_complete(&self) -> bool {
        self.session.is_some() && self.complete_blocks == self.slots.len()
    }

    pub fn can_finalize(&self, now: Duration) -> bool {
        match (&self.phase, &self.session) {
            (ReceiverPhase::Finalized, _) => true,
            (ReceiverPhase::Receiving, Some(s)) => self.is_complete() || now >= s.deadline,
            _ => false,
        }
    }

    /// Processes one datagram arriving at `now`. Never fails: undecodable,
    /// late and foreign packets are counted and dropped.
    pub fn ingest(&mut self, bytes: &[u8], now: Duration) -> Ingest {
        self.stats.datagrams += 1;
        if self.phase == ReceiverPhase::Finalized {
            self.stats.ignored += 1;
            return Ingest::quiet(IngestEvent::Ignored);
        }
        let layout = self.session.as_ref().map(|s| s.layout);
        let packet = match wire::decode(bytes, layout.as_ref()) {
            Ok(p) => p,
            Err(e) => {
                self.stats.undecodable += 1;
                return Ingest::quiet(IngestEvent::Undecodable(e));
            }
        };
        match packet.body {
            Body::Request(req) => self.on_request(packet.base.message_id, req, now),
            Body::Block(frag) => {
                let deadline = self.session.as_ref().map(|s| s.deadline).unwrap_or_default();
                if now > deadline {
                    self.stats.late += 1;
                    return Ingest::quiet(IngestEvent::Late);
                }
                self.on_fragment(
                    frag.header.block_id as usize,
                    frag.header.fragment_index as usize,
                    &frag.data,
                )
            }
            Body::Ack(_) => {
                self.stats.ignored += 1;
                Ingest::quiet(IngestEvent::Ignored)
            }
        }
    }

    fn on_request(&mut self, message_id: u16, req: AgreementRequest, now: Duration) -> Ingest {
        self.stats.requests += 1;
        if let Some(s) = &self.session {
            return if s.request == req && s.request_message_id == message_id {
                Ingest {
                    event: IngestEvent::RepeatedAgreement,
                    reply: Some(s.ack.clone()),
                }
            } else {
                self.stats.ignored += 1;
                Ingest::quiet(IngestEvent::Ignored)
            };
        }
        if let Err(e) = req.validate() {
            self.stats.undecodable += 1;
            return Ingest::quiet(IngestEvent::Undecodable(e));
        }
        let grid = match BlockGrid::new(
            req.width as usize,
            req.height as usize,
            req.channels as usize,
            req.block_width as usize,
            req.block_height as usize,
        ) {
            Ok(g) => g,
            Err(e) => {
                self.stats.undecodable += 1;
                return Ingest::quiet(IngestEvent::Undecodable(WireError::InvalidAgreement(
                    e.to_string(),
                )));
            }
        };
        let interval = Duration::from_micros(req.send_interval_us as u64);
        let deadline = now
            + interval * req.total_transmissions
            + interval * self.config.guard_intervals;
        let ack = wire::encode(&Packet::ack(message_id, req.session_id))
            .expect("ack always encodes");
        self.slots = vec![BlockSlot::default(); grid.block_count()];
        self.session = Some(Session {
            request: req,
            request_message_id: message_id,
            layout: req.layout(),
            grid,
            deadline,
            ack: ack.clone(),
        });
        self.phase = ReceiverPhase::Receiving;
        Ingest {
            event: IngestEvent::Agreed,
            reply: Some(ack),
        }
    }

    fn on_fragment(&mut self, block_id: usize, index: usize, data: &[u8]) -> Ingest {
        let layout = self.session.as_ref().expect("fragments decode only in session").layout;
        let k = layout.fragments as usize;
        let slot = &mut self.slots[block_id];
        if slot.have.is_empty() {
            slot.have = vec![false; k];
            slot.bytes = vec![0; k * layout.packet_size];
        }
        if slot.have[index] {
            self.stats.duplicate_fragments += 1;
            return Ingest::quiet(IngestEvent::Duplicate);
        }
        slot.have[index] = true;
        slot.filled += 1;
        let at = index * layout.packet_size;
        slot.bytes[at..at + layout.packet_size].copy_from_slice(data);
        self.stats.fragments_accepted += 1;
        let completed = slot.filled as usize == k;
        if completed {
            self.complete_blocks += 1;
        }
        Ingest::quiet(IngestEvent::Fragment {
            block_id: block_id as u32,
            fragment_index: index as u32,
            completed,
        })
    }

    /// Reassembles the image once the deadline has passed or every block is
    /// complete. The result is frozen; later calls return the same output.
    pub fn finalize(&mut self, now: Duration) -> Result<(PartialImage, ReceptionReport)> {
        if let Some(out) = &self.output {
            return Ok(out.clone());
        }
        let session = match (&self.phase, &self.session) {
            (ReceiverPhase::Receiving, Some(s)) => s,
            _ => {
                return Err(ProtocolError::WrongPhase {
                    expected: "Receiving",
                    actual: self.phase.name(),
                })
            }
        };
        if now < session.deadline && !self.is_complete() {
            return Err(ProtocolError::FinalizeTooEarly {
                now,
                deadline: session.deadline,
            });
        }
        let k = session.layout.fragments;
        let received: Vec<bool> = self
            .slots
            .iter()
            .map(|s| !s.have.is_empty() && s.filled == k)
            .collect();
        let payloads: Vec<BlockPayload> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(id, _)| received[*id])
            .map(|(id, s)| BlockPayload {
                block_id: id,
                bytes: s.bytes.clone(),
            })
            .collect();
        let partial = reassemble(&session.grid, &payloads, self.config.fill)?;
        let report = ReceptionReport {
            session_id: session.request.session_id,
            block_count: self.slots.len(),
            unique_blocks: partial.unique_blocks(),
            pixel_filling_rate: pixel_filling_rate(&partial),
            received,
            stats: self.stats,
            deadline: session.deadline,
            finalized_at: now,
        };
        self.phase = ReceiverPhase::Finalized;
        self.output = Some((partial, report));
        Ok(self.output.clone().expect("just set"))
    }
}

/// A receiver that can be handed between threads; every access holds the lock.
#[derive(Debug, Clone)]
pub struct SharedReceiver(Arc<Mutex<Receiver>>);

impl SharedReceiver {
    pub fn new(receiver: Receiver) -> Self {
        Self(Arc::new(Mutex::new(receiver)))
    }

    pub fn lock(&self) -> MutexGuard<'_, Receiver> {
        self.0.lock().expect("receiver lock poisoned")
    }

    pub fn ingest(&self, bytes: &[u8], now: Duration) -> Ingest {
        self.lock().ingest(bytes, now)
    }

    pub fn finalize(&self, now: Duration) -> Result<(PartialImage, ReceptionReport)> {
        self.lock().finalize(now)
    }
}

/// Receive loop: waits up to `agreement_wait` for a session, then ingests
/// until the deadline or until every block is complete, and finalizes.
pub fn serve<T, C>(
    receiver: &mut Receiver,
    transport: &mut T,
    clock: &C,
    agreement_wait: Duration,
) -> Result<(PartialImage, ReceptionReport)>
where
    T: Transport + ?Sized,
    C: Clock + ?Sized,
{
    let give_up = clock.now() + agreement_wait;
    loop {
        let now = clock.now();
        let until = match receiver.deadline() {
            Some(d) => {
                if receiver.can_finalize(now) {
                    break;
                }
                d
            }
            None if now >= give_up => return Err(ProtocolError::AgreementTimeout),
            None => give_up,
        };
        match transport.recv_until(until) {
            Ok(Some(bytes)) => {
                if let Some(reply) = receiver.ingest(&bytes, clock.now()).reply {
                    transport.send(&reply)?;
                }
            }
            Ok(None) => {}
            Err(crate::channel::ChannelError::Closed) => {
                if receiver.deadline().is_none() {
                    return Err(ProtocolError::AgreementTimeout);
                }
                clock.sleep_until(receiver.deadline().unwrap_or_default());
            }
            Err(e) => return Err(e.into()),
        }
    }
    receiver.finalize(clock.now())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::Packet;

    fn request(blocks_w: u16, k_packet: u16) -> AgreementRequest {
        // 4x2 grayscale, 2x1 blocks => 4 blocks of 2 bytes.
        AgreementRequest {
            session_id: 9,
            block_id_bits: 2,
            channels: 1,
            width: 4,
            height: 2,
            block_width: blocks_w,
            block_height: 1,
            packet_size: k_packet,
            total_transmissions: 10,
            send_interval_us: 1000,
        }
    }

    fn agreed(packet_size: u16) -> Receiver {
        let mut r = Receiver::new(ReceiverConfig::default());
        let bytes = wire::encode(&Packet::request(5, request(2, packet_size))).unwrap();
        let out = r.ingest(&bytes, Duration::ZERO);
        assert_eq!(out.event, IngestEvent::Agreed);
        assert!(out.reply.is_some());
        r
    }

    fn frag(r: &Receiver, block: u32, index: u32, data: Vec<u8>) -> Vec<u8> {
        let h = r.layout().unwrap().bt_header(block, index);
        wire::encode(&Packet::fragment(0, h, data)).unwrap()
    }

    #[test]
    fn deadline_from_agreement() {
        let r = agreed(2);
        // 10 transmissions + 50 guard intervals of 1 ms.
        assert_eq!(r.deadline(), Some(Duration::from_millis(60)));
    }

    #[test]
    fn duplicate_fragment_is_noop() {
        let mut r = agreed(2);
        let pkt = frag(&r, 1, 0, vec![7, 8]);
        let first = r.ingest(&pkt, Duration::from_millis(1));
        assert!(matches!(first.event, IngestEvent::Fragment { completed: true, .. }));
        let before = (r.complete_blocks(), r.slots[1].bytes.clone());
        assert_eq!(r.ingest(&pkt, Duration::from_millis(2)).event, IngestEvent::Duplicate);
        assert_eq!((r.complete_blocks(), r.slots[1].bytes.clone()), before);
        assert_eq!(r.stats().duplicate_fragments, 1);
    }

    #[test]
    fn block_needs_all_fragments() {
        let mut r = agreed(1);
        assert_eq!(r.layout().unwrap().fragments, 2);
        let p = frag(&r, 3, 0, vec![1]);
        r.ingest(&p, Duration::from_millis(1));
        assert!(!r.is_block_received(3));
        let p = frag(&r, 3, 1, vec![2]);
        r.ingest(&p, Duration::from_millis(1));
        assert!(r.is_block_received(3));
    }

    #[test]
    fn late_and_garbage_are_dropped() {
        let mut r = agreed(2);
        let p = frag(&r, 0, 0, vec![1, 1]);
        assert_eq!(r.ingest(&p, Duration::from_millis(61)).event, IngestEvent::Late);
        assert!(matches!(
            r.ingest(&[0xff], Duration::ZERO).event,
            IngestEvent::Undecodable(WireError::ShortHeader(1))
        ));
        assert_eq!(r.stats().late, 1);
        assert_eq!(r.stats().undecodable, 1);
        assert_eq!(r.complete_blocks(), 0);
    }

    #[test]
    fn repeated_request_repeats_ack() {
        let mut r = agreed(2);
        let bytes = wire::encode(&Packet::request(5, request(2, 2))).unwrap();
        let out = r.ingest(&bytes, Duration::from_millis(3));
        assert_eq!(out.event, IngestEvent::RepeatedAgreement);
        assert_eq!(r.deadline(), Some(Duration::from_millis(60)));
        let mut other = request(2, 2);
        other.session_id = 10;
        let bytes = wire::encode(&Packet::request(6, other)).unwrap();
        assert_eq!(r.ingest(&bytes, Duration::ZERO).event, IngestEvent::Ignored);
    }

    #[test]
    fn finalize_rules() {
        let mut r = Receiver::new(ReceiverConfig::default());
        assert!(matches!(r.finalize(Duration::from_secs(9)), Err(ProtocolError::WrongPhase { .. })));
        let mut r = agreed(2);
        assert!(matches!(
            r.finalize(Duration::from_millis(10)),
            Err(ProtocolError::FinalizeTooEarly { .. })
        ));
        let (img, report) = r.finalize(Duration::from_millis(60)).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0));
        assert_eq!(report.unique_blocks, 0);
        assert_eq!(report.received, vec![false; 4]);
        // Frozen after finalization.
        let p = frag(&r, 0, 0, vec![1, 1]);
        assert_eq!(r.ingest(&p, Duration::from_millis(1)).event, IngestEvent::Ignored);
        assert_eq!(r.finalize(Duration::from_secs(1)).unwrap().1, report);
    }

    #[test]
    fn early_finalize_when_complete() {
        let mut r = agreed(2);
        for b in 0..4 {
            let p = frag(&r, b, 0, vec![b as u8 + 1; 2]);
            r.ingest(&p, Duration::from_millis(1));
        }
        assert!(r.can_finalize(Duration::from_millis(2)));
        let (img, report) = r.finalize(Duration::from_millis(2)).unwrap();
        assert_eq!(img.pixels(), &[1, 1, 2, 2, 3, 3, 4, 4]);
        assert_eq!(report.pixel_filling_rate, 1.0);
    }

    #[test]
    fn shared_receiver_across_threads() {
        let shared = SharedReceiver::new(agreed(2));
        let frames: Vec<Vec<u8>> = (0..4).map(|b| frag(&shared.lock(), b, 0, vec![9, 9])).collect();
        let handles: Vec<_> = frames
            .into_iter()
            .map(|f| {
                let s = shared.clone();
                std::thread::spawn(move || {
                    s.ingest(&f, Duration::from_millis(1));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let expiry = shared.clone();
        let out = std::thread::spawn(move || expiry.finalize(Duration::from_millis(60)))
            .join()
            .unwrap()
            .unwrap();
        assert_eq!(out.1.unique_blocks, 4);
    }
}
