//! Message transports. A transport moves opaque message payloads in order;
//! framing and encryption are the transport's business.
//!
//! [`FramedTransport`] works over any `Read + Write` stream, so an encrypted
//! stream (for example a TLS session) can be dropped in where a plain
//! `TcpStream` is used here.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::ProtocolError;

/// Frames above this size are refused before allocation.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

pub trait Transport {
    fn send(&mut self, payload: &[u8]) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Vec<u8>, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, payload: &[u8]) -> Result<(), ProtocolError> {
        (**self).send(payload)
    }

    fn recv(&mut self) -> Result<Vec<u8>, ProtocolError> {
        (**self).recv()
    }
}

/// In-process transport over channels.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl ChannelTransport {
    pub fn pair() -> (ChannelTransport, ChannelTransport) {
        let (tx_a, rx_b) = channel();
        let (tx_b, rx_a) = channel();
        (
            ChannelTransport { tx: tx_a, rx: rx_a },
            ChannelTransport { tx: tx_b, rx: rx_b },
        )
    }
}

impl Transport for ChannelTransport {
    fn send(&mut self, payload: &[u8]) -> Result<(), ProtocolError> {
        self.tx
            .send(payload.to_vec())
            .map_err(|_| ProtocolError::TransportError("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.rx
            .recv()
            .map_err(|_| ProtocolError::TransportError("peer hung up".into()))
    }
}

/// u32 big-endian length prefix followed by the payload.
pub struct FramedTransport<S> {
    stream: S,
}

pub type TcpTransport = FramedTransport<TcpStream>;

fn io_err(e: io::Error) -> ProtocolError {
    ProtocolError::TransportError(e.to_string())
}

impl<S: Read + Write> FramedTransport<S> {
    pub fn new(stream: S) -> Self {
        FramedTransport { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl FramedTransport<TcpStream> {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        Ok(FramedTransport::new(stream))
    }

    /// Accept one connection; one session per connection.
    pub fn accept(listener: &TcpListener) -> Result<Self, ProtocolError> {
        let (stream, peer) = listener.accept().map_err(io_err)?;
        log::info!("accepted connection from {peer}");
        stream.set_nodelay(true).map_err(io_err)?;
        Ok(FramedTransport::new(stream))
    }
}

impl<S: Read + Write> Transport for FramedTransport<S> {
    fn send(&mut self, payload: &[u8]) -> Result<(), ProtocolError> {
        let len = u32::try_from(payload.len())
            .ok()
            .filter(|&n| n <= MAX_FRAME_LEN)
            .ok_or_else(|| ProtocolError::ProtocolViolation(format!("frame of {} bytes too large", payload.len())))?;
        self.stream.write_all(&len.to_be_bytes()).map_err(io_err)?;
        self.stream.write_all(payload).map_err(io_err)?;
        self.stream.flush().map_err(io_err)
    }

    fn recv(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len).map_err(io_err)?;
        let len = u32::from_be_bytes(len);
        if len > MAX_FRAME_LEN {
            return Err(ProtocolError::ProtocolViolation(format!(
                "declared frame length {len} too large"
            )));
        }
        let mut buf = vec![0u8; len as usize];
        self.stream.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf)
    }
}

/// Wraps a transport and keeps a copy of every payload sent and received.
pub struct RecordingTransport<T> {
    inner: T,
    pub sent: Vec<Vec<u8>>,
    pub received: Vec<Vec<u8>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            sent: Vec::new(),
            received: Vec::new(),
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&mut self, payload: &[u8]) -> Result<(), ProtocolError> {
        self.inner.send(payload)?;
        self.sent.push(payload.to_vec());
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let p = self.inner.recv()?;
        self.received.push(p.clone());
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn channel_pair_is_duplex() {
        let (mut a, mut b) = ChannelTransport::pair();
        a.send(b"ping").unwrap();
        assert_eq!(b.recv().unwrap(), b"ping");
        b.send(b"pong").unwrap();
        assert_eq!(a.recv().unwrap(), b"pong");
        drop(b);
        assert!(matches!(a.recv(), Err(ProtocolError::TransportError(_))));
    }

    #[test]
    fn framing_layout() {
        let mut t = FramedTransport::new(Cursor::new(Vec::new()));
        t.send(b"abc").unwrap();
        let bytes = t.into_inner().into_inner();
        assert_eq!(bytes, vec![0, 0, 0, 3, b'a', b'b', b'c']);
        let mut r = FramedTransport::new(Cursor::new(bytes));
        assert_eq!(r.recv().unwrap(), b"abc");
        assert!(matches!(r.recv(), Err(ProtocolError::TransportError(_))));
    }

    #[test]
    fn oversized_frame_refused() {
        let mut r = FramedTransport::new(Cursor::new(vec![0xff, 0xff, 0xff, 0xff]));
        assert!(matches!(r.recv(), Err(ProtocolError::ProtocolViolation(_))));
    }

    #[test]
    fn tcp_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut s = TcpTransport::accept(&listener).unwrap();
            let m = s.recv().unwrap();
            s.send(&m).unwrap();
        });
        let mut c = RecordingTransport::new(TcpTransport::connect(addr).unwrap());
        c.send(b"echo").unwrap();
        assert_eq!(c.recv().unwrap(), b"echo");
        h.join().unwrap();
        assert_eq!(c.sent, vec![b"echo".to_vec()]);
        assert_eq!(c.received, vec![b"echo".to_vec()]);
    }
}
