use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{ChannelError, Clock, Result, SystemClock, Transport};

#[derive(Default)]
struct Queue {
    items: VecDeque<(Duration, Vec<u8>)>,
    writer_closed: bool,
}

#[derive(Default)]
struct Pipe {
    queue: Mutex<Queue>,
    ready: Condvar,
}

/// One end of an in-memory datagram pipe. The two ends may live on different
/// threads. Datagrams are delivered FIFO, never duplicated, after a fixed
/// delay measured on the system clock.
pub struct SimEndpoint {
    outbound: Arc<Pipe>,
    inbound: Arc<Pipe>,
    delay: Duration,
    clock: SystemClock,
}

/// Connected endpoints `(a, b)` sharing one clock origin.
pub fn sim_pair(delay: Duration, clock: SystemClock) -> (SimEndpoint, SimEndpoint) {
    let ab = Arc::new(Pipe::default());
    let ba = Arc::new(Pipe::default());
    (
        SimEndpoint {
            outbound: ab.clone(),
            inbound: ba.clone(),
            delay,
            clock,
        },
        SimEndpoint {
            outbound: ba,
            inbound: ab,
            delay,
            clock,
        },
    )
}

impl SimEndpoint {
    pub fn clock(&self) -> SystemClock {
        self.clock
    }
}

impl Drop for SimEndpoint {
    fn drop(&mut self) {
        if let Ok(mut q) = self.outbound.queue.lock() {
            q.writer_closed = true;
        }
        self.outbound.ready.notify_all();
    }
}

impl Transport for SimEndpoint {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        let at = self.clock.now() + self.delay;
        let mut q = self.outbound.queue.lock().expect("pipe poisoned");
        q.items.push_back((at, datagram.to_vec()));
        drop(q);
        self.outbound.ready.notify_all();
        Ok(())
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        let mut q = self.inbound.queue.lock().expect("pipe poisoned");
        loop {
            let now = self.clock.now();
            let wake = match q.items.front() {
                Some((at, _)) if *at <= now => {
                    return Ok(q.items.pop_front().map(|(_, d)| d));
                }
                Some((at, _)) => (*at).min(deadline),
                None if q.writer_closed => return Err(ChannelError::Closed),
                None => deadline,
            };
            if now >= deadline {
                return Ok(None);
            }
            let (guard, _) = self
                .inbound
                .ready
                .wait_timeout(q, wake.saturating_sub(now).max(Duration::from_micros(1)))
                .expect("pipe poisoned");
            q = guard;
        }
    }
}
