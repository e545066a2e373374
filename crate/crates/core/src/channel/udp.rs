use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use super::{ChannelError, Clock, Result, SystemClock, Transport};

const MAX_DATAGRAM: usize = 65_536;

/// Plain UDP datagrams. With no fixed peer, replies go to whoever sent the
/// most recent datagram.
pub struct UdpTransport {
    socket: UdpSocket,
    peer: Option<SocketAddr>,
    clock: SystemClock,
    buf: Vec<u8>,
}

impl UdpTransport {
    pub fn bind(addr: impl ToSocketAddrs, clock: SystemClock) -> Result<Self> {
        Ok(Self {
            socket: UdpSocket::bind(addr)?,
            peer: None,
            clock,
            buf: vec![0; MAX_DATAGRAM],
        })
    }

    pub fn connect(mut self, peer: impl ToSocketAddrs) -> Result<Self> {
        let addr = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ChannelError::Config("peer address did not resolve".into()))?;
        self.peer = Some(addr);
        Ok(self)
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    pub fn peer(&self) -> Option<SocketAddr> {
        self.peer
    }
}

impl Transport for UdpTransport {
    fn send(&mut self, datagram: &[u8]) -> Result<()> {
        let peer = self
            .peer
            .ok_or_else(|| ChannelError::Config("no peer to send to".into()))?;
        self.socket.send_to(datagram, peer)?;
        Ok(())
    }

    fn recv_until(&mut self, deadline: Duration) -> Result<Option<Vec<u8>>> {
        let now = self.clock.now();
        if now >= deadline {
            return Ok(None);
        }
        self.socket
            .set_read_timeout(Some((deadline - now).max(Duration::from_micros(1))))?;
        match self.socket.recv_from(&mut self.buf) {
            Ok((len, from)) => {
                self.peer = Some(from);
                Ok(Some(self.buf[..len].to_vec()))
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_roundtrip() {
        let clock = SystemClock::new();
        let mut server = UdpTransport::bind("127.0.0.1:0", clock).unwrap();
        let addr = server.local_addr().unwrap();
        let mut client = UdpTransport::bind("127.0.0.1:0", clock)
            .unwrap()
            .connect(addr)
            .unwrap();
        client.send(b"ping").unwrap();
        let got = server.recv_until(clock.now() + Duration::from_secs(2)).unwrap();
        assert_eq!(got.unwrap(), b"ping");
        server.send(b"pong").unwrap();
        let got = client.recv_until(clock.now() + Duration::from_secs(2)).unwrap();
        assert_eq!(got.unwrap(), b"pong");
        assert_eq!(client.recv_until(clock.now() + Duration::from_millis(5)).unwrap(), None);
    }
}
