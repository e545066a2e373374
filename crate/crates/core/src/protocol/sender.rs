use std::sync::Arc;
use std::time::Duration;

use super::{ProtocolError, Result, Sampler, SendLog, SendRecord};
use crate::channel::{Clock, Transport};
use crate::image::{BlockGrid, BlockPayload};
use crate::model::TransmissionPlan;
use crate::wire::{self, AgreementRequest, Body, DataLayout, Packet};

#[derive(Debug, Clone, PartialEq)]
pub struct SenderConfig {
    pub session_id: u16,
    pub seed: u64,
    pub send_interval: Duration,
    /// First ACK timeout; doubles on every retransmission.
    pub ack_timeout: Duration,
    pub max_retransmits: u32,
}

impl Default for SenderConfig {
    fn default() -> Self {
        Self {
            session_id: 1,
            seed: 0,
            send_interval: Duration::from_millis(1),
            ack_timeout: Duration::from_secs(2),
            max_retransmits: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderPhase {
    Agreeing,
    Transmitting,
    Done,
}

impl SenderPhase {
    fn name(self) -> &'static str {
        match self {
            SenderPhase::Agreeing => "Agreeing",
            SenderPhase::Transmitting => "Transmitting",
            SenderPhase::Done => "Done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgreementOutcome {
    pub requests_sent: u32,
    pub established_at: Duration,
}

pub struct Sender {
    phase: SenderPhase,
    plan: TransmissionPlan,
    grid: BlockGrid,
    blocks: Arc<Vec<BlockPayload>>,
    layout: DataLayout,
    sampler: Sampler,
    config: SenderConfig,
    sent_count: u32,
    next_message_id: u16,
    requests_sent: u32,
}

impl Sender {
    /// `blocks` must be the tiling of the image in id order.
    pub fn new(
        plan: TransmissionPlan,
        grid: BlockGrid,
        blocks: Arc<Vec<BlockPayload>>,
        config: SenderConfig,
    ) -> Result<Self> {
        let bad = |msg: String| Err(ProtocolError::InvalidSession(msg));
        if plan.block_count() != grid.block_count() || blocks.len() != grid.block_count() {
            return bad(format!(
                "plan has {} blocks, grid {}, payloads {}",
                plan.block_count(),
                grid.block_count(),
                blocks.len()
            ));
        }
        if plan.sizing.block_size != grid.block_bytes() {
            return bad(format!(
                "plan block size {} != grid block size {}",
                plan.sizing.block_size,
                grid.block_bytes()
            ));
        }
        let dims = [grid.width, grid.height, grid.block_width, grid.block_height];
        if dims.iter().any(|&d| d > u16::MAX as usize) || grid.channels > u8::MAX as usize {
            return bad(format!("image geometry {dims:?} does not fit the agreement fields"));
        }
        if config.send_interval.is_zero() || config.send_interval.as_micros() > u32::MAX as u128 {
            return bad("send interval must be positive and fit in 32-bit microseconds".into());
        }
        let layout = DataLayout {
            block_count: grid.block_count() as u32,
            fragments: plan.fragments_per_block,
            packet_size: plan.channel.packet_size(),
        };
        let sampler = Sampler::new(plan.probabilities(), config.seed)?;
        let sender = Self {
            phase: SenderPhase::Agreeing,
            plan,
            grid,
            blocks,
            layout,
            sampler,
            config,
            sent_count: 0,
            next_message_id: 0,
            requests_sent: 0,
        };
        sender.agreement_request().validate()?;
        Ok(sender)
    }

    pub fn phase(&self) -> SenderPhase {
        self.phase
    }

    pub fn plan(&self) -> &TransmissionPlan {
        &self.plan
    }

    pub fn layout(&self) -> DataLayout {
        self.layout
    }

    pub fn sent_count(&self) -> u32 {
        self.sent_count
    }

    pub fn requests_sent(&self) -> u32 {
        self.requests_sent
    }

    pub fn agreement_request(&self) -> AgreementRequest {
        let g = &self.grid;
        AgreementRequest {
            session_id: self.config.session_id,
            block_id_bits: self.layout.block_id_bits(),
            channels: g.channels as u8,
            width: g.width as u16,
            height: g.height as u16,
            block_width: g.block_width as u16,
            block_height: g.block_height as u16,
            packet_size: self.layout.packet_size as u16,
            total_transmissions: self.plan.total_transmissions,
            send_interval_us: self.config.send_interval.as_micros() as u32,
        }
    }

    fn take_message_id(&mut self) -> u16 {
        let id = self.next_message_id;
        self.next_message_id = self.next_message_id.wrapping_add(1);
        id
    }

    fn expect_phase(&self, expected: SenderPhase) -> Result<()> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(ProtocolError::WrongPhase {
                expected: expected.name(),
                actual: self.phase.name(),
            })
        }
    }

    /// Confirmable agreement with binary exponential backoff. ACKs with a
    /// foreign session id or message id are ignored.
    pub fn run_agreement<T, C>(&mut self, transport: &mut T, clock: &C) -> Result<AgreementOutcome>
    where
        T: Transport + ?Sized,
        C: Clock + ?Sized,
    {
        self.expect_phase(SenderPhase::Agreeing)?;
        let message_id = self.take_message_id();
        let request = wire::encode(&Packet::request(message_id, self.agreement_request()))?;
        let mut timeout = self.config.ack_timeout;
        for _ in 0..=self.config.max_retransmits {
            transport.send(&request)?;
            self.requests_sent += 1;
            let deadline = clock.now() + timeout;
            while let Some(bytes) = transport.recv_until(deadline)? {
                let Ok(packet) = wire::decode(&bytes, None) else {
                    continue;
                };
                if let Body::Ack(ack) = packet.body {
                    if ack.session_id == self.config.session_id
                        && packet.base.message_id == message_id
                    {
                        self.phase = SenderPhase::Transmitting;
                        return Ok(AgreementOutcome {
                            requests_sent: self.requests_sent,
                            established_at: clock.now(),
                        });
                    }
                }
            }
            timeout *= 2;
        }
        Err(ProtocolError::AgreementFailed {
            requests_sent: self.requests_sent,
        })
    }

    fn fragments_of(&mut self, block_id: usize) -> Result<Vec<Vec<u8>>> {
        let blocks = Arc::clone(&self.blocks);
        let bytes = &blocks[block_id].bytes;
        bytes
            .chunks_exact(self.layout.packet_size)
            .enumerate()
            .map(|(i, chunk)| {
                let header = self.layout.bt_header(block_id as u32, i as u32);
                let id = self.take_message_id();
                Ok(wire::encode(&Packet::fragment(id, header, chunk.to_vec()))?)
            })
            .collect()
    }

    /// Exactly N paced transmissions, each one freshly sampled block. Slot
    /// `k` is scheduled at `start + k * interval`, so pacing error does not
    /// accumulate.
    pub fn run_block_phase<T, C>(&mut self, transport: &mut T, clock: &C) -> Result<SendLog>
    where
        T: Transport + ?Sized,
        C: Clock + ?Sized,
    {
        self.expect_phase(SenderPhase::Transmitting)?;
        let total = self.plan.total_transmissions;
        let interval = self.config.send_interval;
        let mut log = SendLog {
            records: Vec::with_capacity(total as usize),
            ..SendLog::default()
        };
        let start = clock.now();
        for sequence in 0..total {
            clock.sleep_until(start + interval * sequence);
            let block_id = self.sampler.sample();
            let frames = match self.fragments_of(block_id) {
                Ok(f) => f,
                Err(e) => return Err(abort(log, e)),
            };
            if let Err(e) = transport.send_attempt(&frames) {
                return Err(abort(log, e.into()));
            }
            let now = clock.now();
            log.packets_sent += frames.len() as u64;
            log.records.push(SendRecord {
                sequence,
                block_id: block_id as u32,
                timestamp: now - start,
            });
            log.duration = now - start;
            self.sent_count += 1;
        }
        self.phase = SenderPhase::Done;
        Ok(log)
    }
}

fn abort(log: SendLog, source: ProtocolError) -> ProtocolError {
    ProtocolError::BlockPhase {
        log: Box::new(log),
        source: Box::new(source),
    }
}
