//! Datagram transports and loss models.
//!
//! A [`Transport`] moves opaque datagrams. Loss is layered on with [`Lossy`],
//! driven by a seeded [`LossProcess`]:
//!
//! * `SimPacket` drops every datagram independently with probability `L`.
//! * `SimBlock` treats each `send_attempt` of K datagrams as one unit and
//!   drops it with probability `L^K`, so the unit survives with `1 - L^K`.
//! * `Scripted` drops exactly the listed 1-based datagram sequence numbers.

mod clock;
mod sim;
mod udp;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use sim::{sim_pair, SimEndpoint};
pub use udp::UdpTransport;

use std::collections::BTreeSet;
use std::str::FromStr;
use std::time::Duration;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel closed")]
    Closed,
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid channel config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

pub trait Transport {
    /// Sends one datagram. Delivery is not guaranteed.
    fn send(&mut self, datagram: &[u8]) -> Result<()>;

    /// Sends the K fragments of one block attempt back to back.
    fn send_attempt(&mut self, datagrams: &[Vec<u8>]) -> Result<()> {
        for d in datagrams {
            self.send(d)?;
        }
        Ok(())
    }

    /// Waits until clock time `deadline` for the next datagram; `Ok(None)`
    /// when the deadline passes first.
    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        (**self).send(datagram)
    }

    fn send_attempt(&mut self, datagrams: &[Vec<u8>]) -> Result<()> {
        (**self).send_attempt(datagrams)
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        (**self).recv_until(deadline)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        (**self).send(datagram)
    }

    fn send_attempt(&mut self, datagrams: &[Vec<u8>]) -> Result<()> {
        (**self).send_attempt(datagrams)
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        (**self).recv_until(deadline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelMode {
    Udp,
    SimPacket,
    SimBlock,
    Scripted,
}

impl FromStr for ChannelMode {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "udp" => Ok(ChannelMode::Udp),
            "sim-packet" | "simpacket" | "packet" => Ok(ChannelMode::SimPacket),
            "sim-block" | "simblock" | "block" => Ok(ChannelMode::SimBlock),
            "scripted" | "script" => Ok(ChannelMode::Scripted),
            other => Err(ChannelError::Config(format!("unknown channel mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelMode::Udp => "udp",
            ChannelMode::SimPacket => "sim-packet",
            ChannelMode::SimBlock => "sim-block",
            ChannelMode::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub loss_rate: f64,
    pub seed: u64,
    pub delay: Option<Duration>,
    pub drop_script: BTreeSet<u64>,
}

impl ChannelConfig {
    pub fn new(mode: ChannelMode, loss_rate: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            mode,
            loss_rate,
            seed,
            delay: None,
            drop_script: BTreeSet::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scripted(drops: impl IntoIterator<Item = u64>) -> Self {
        Self {
            mode: ChannelMode::Scripted,
            loss_rate: 0.0,
            seed: 0,
            delay: None,
            drop_script: drops.into_iter().collect(),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(ChannelError::Config(format!(
                "loss rate {} outside [0, 1]",
                self.loss_rate
            )));
        }
        Ok(())
    }

    /// The drop process this config applies to outgoing datagrams. UDP mode
    /// applies `SimPacket`-style emulated loss when `loss_rate > 0`.
    pub fn loss_process(&self) -> LossProcess {
        match self.mode {
            ChannelMode::Udp if self.loss_rate == 0.0 => LossProcess::lossless(),
            ChannelMode::Udp | ChannelMode::SimPacket => {
                LossProcess::per_packet(self.loss_rate, self.seed)
            }
            ChannelMode::SimBlock => LossProcess::per_attempt(self.loss_rate, self.seed),
            ChannelMode::Scripted => LossProcess::scripted(self.drop_script.iter().copied()),
        }
    }
}

/// Uniform draw in `[0, 1)` from the top 53 bits of a 64-bit word.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
enum LossKind {
    Lossless,
    PerPacket { loss: f64, rng: ChaCha8Rng },
    PerAttempt { loss: f64, rng: ChaCha8Rng },
    Scripted { drops: BTreeSet<u64> },
}

/// Seeded drop decisions. Identical seed and send sequence give identical
/// decisions.
#[derive(Debug, Clone)]
pub struct LossProcess {
    kind: LossKind,
    sent: u64,
    dropped: u64,
}

impl LossProcess {
    fn from_kind(kind: LossKind) -> Self {
        Self {
            kind,
            sent: 0,
            dropped: 0,
        }
    }

    pub fn lossless() -> Self {
        Self::from_kind(LossKind::Lossless)
    }

    pub fn per_packet(loss: f64, seed: u64) -> Self {
        Self::from_kind(LossKind::PerPacket {
            loss,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn per_attempt(loss: f64, seed: u64) -> Self {
        Self::from_kind(LossKind::PerAttempt {
            loss,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn scripted(drops: impl IntoIterator<Item = u64>) -> Self {
        Self::from_kind(LossKind::Scripted {
            drops: drops.into_iter().collect(),
        })
    }

    /// Datagrams seen so far.
    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Decides the fate of an attempt of `count` datagrams; `true` = deliver.
    pub fn decide(&mut self, count: usize) -> Vec<bool> {
        let first_seq = self.sent + 1;
        self.sent += count as u64;
        let fate: Vec<bool> = match &mut self.kind {
            LossKind::Lossless => vec![true; count],
            LossKind::PerPacket { loss, rng } => {
                (0..count).map(|_| unit_f64(rng) >= *loss).collect()
            }
            LossKind::PerAttempt { loss, rng } => {
                let drop_prob = loss.powi(count as i32);
                let keep = unit_f64(rng) >= drop_prob;
                vec![keep; count]
            }
            LossKind::Scripted { drops } => (0..count as u64)
                .map(|i| !drops.contains(&(first_seq + i)))
                .collect(),
        };
        self.dropped += fate.iter().filter(|keep| !**keep).count() as u64;
        fate
    }
}

/// A transport whose outgoing datagrams pass through a [`LossProcess`].
pub struct Lossy<T> {
    inner: T,
    loss: LossProcess,
}

impl<T: Transport> Lossy<T> {
    pub fn new(inner: T, loss: LossProcess) -> Self {
        Self { inner, loss }
    }

    pub fn loss(&self) -> &LossProcess {
        &self.loss
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Lossy<T> {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        if self.loss.decide(1)[0] {
            self.inner.send(datagram)?;
        }
        Ok(())
    }

    fn send_attempt(&mut self, datagrams: &[Vec<u8>]) -> Result<()> {
        let fate = self.loss.decide(datagrams.len());
        for (d, keep) in datagrams.iter().zip(fate) {
            if keep {
                self.inner.send(d)?;
            }
        }
        Ok(())
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        self.inner.recv_until(deadline)
    }
}
