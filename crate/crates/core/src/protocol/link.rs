use std::collections::VecDeque;
use std::time::Duration;

use super::{Receiver, ReceiverConfig};
use crate::channel::{Clock, LossProcess, Result, Transport, VirtualClock};
use crate::wire::MessageType;

/// Sender-side transport with the receiver embedded, on a virtual clock.
///
/// Each datagram that survives the forward loss is ingested at
/// `send time + delay`; receiver replies pass the reverse loss and become
/// readable at `send time + 2 * delay`. With `reliable_control` the CON
/// request and its ACK are delivered whatever the loss process decides; they
/// still consume a sequence number, so scripted drop lists count them.
pub struct InProcessLink {
    receiver: Receiver,
    clock: VirtualClock,
    forward: LossProcess,
    reverse: LossProcess,
    delay: Duration,
    reliable_control: bool,
    replies: VecDeque<(Duration, Vec<u8>)>,
}

fn is_control(datagram: &[u8]) -> bool {
    datagram
        .first()
        .is_some_and(|b| (b >> 4) & 0b11 != MessageType::NonConfirmable as u8)
}

impl InProcessLink {
    pub fn new(receiver: Receiver, clock: VirtualClock, forward: LossProcess) -> Self {
        Self {
            receiver,
            clock,
            forward,
            reverse: LossProcess::lossless(),
            delay: Duration::ZERO,
            reliable_control: false,
            replies: VecDeque::new(),
        }
    }

    pub fn lossless(config: ReceiverConfig, clock: VirtualClock) -> Self {
        Self::new(Receiver::new(config), clock, LossProcess::lossless())
    }

    pub fn with_reverse(mut self, reverse: LossProcess) -> Self {
        self.reverse = reverse;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_reliable_control(mut self, reliable: bool) -> Self {
        self.reliable_control = reliable;
        self
    }

    pub fn receiver(&self) -> &Receiver {
        &self.receiver
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn forward_loss(&self) -> &LossProcess {
        &self.forward
    }

    pub fn into_receiver(self) -> Receiver {
        self.receiver
    }

    fn deliver(&mut self, datagram: &[u8]) {
        let now = self.clock.now();
        let ingest = self.receiver.ingest(datagram, now + self.delay);
        if let Some(reply) = ingest.reply {
            let keep = self.reverse.decide(1)[0] || (self.reliable_control && is_control(&reply));
            if keep {
                self.replies.push_back((now + self.delay * 2, reply));
            }
        }
    }
}

impl Transport for InProcessLink {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        if self.forward.decide(1)[0] || (self.reliable_control && is_control(datagram)) {
            self.deliver(datagram);
        }
        Ok(())
    }

    fn send_attempt(&mut self, datagrams: &[Vec<u8>]) -> Result<()> {
        let fate = self.forward.decide(datagrams.len());
        for (d, keep) in datagrams.iter().zip(fate) {
            if keep {
                self.deliver(d);
            }
        }
        Ok(())
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        match self.replies.front() {
            Some((at, _)) if *at <= deadline => {
                let (at, reply) = self.replies.pop_front().expect("front exists");
                self.clock.advance_to(at);
                Ok(Some(reply))
            }
            _ => {
                self.clock.advance_to(deadline);
                Ok(None)
            }
        }
    }
}
