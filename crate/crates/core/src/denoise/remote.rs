//! VXDN/1 client: a denoiser and codec served over TCP.

use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{Denoiser, LatentCodec};
use crate::error::{Error, Result};
use crate::protocol::{
    decode_tensor, read_message, transport, write_message, Hello, Message, MessageType,
    PROTOCOL_VERSION,
};
use crate::schedule::ScheduleKind;
use crate::tensor::Frame;

#[derive(Clone, Debug)]
pub struct RemoteOptions {
    /// Applied to connect, read and write.
    pub timeout: Duration,
    /// Maximum simultaneous connections; one request in flight on each.
    pub pool_size: usize,
    /// Announced in HELLO so the server can reject a schedule mismatch.
    pub schedule: Option<(usize, ScheduleKind)>,
    /// Latent downsampling the remote codec applies.
    pub spatial_factor: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout: Duration::from_secs(30),
            pool_size: 1,
            schedule: None,
            spatial_factor: 1,
        }
    }
}

#[derive(Debug)]
struct Pool {
    address: String,
    options: RemoteOptions,
    state: Mutex<PoolState>,
    available: Condvar,
}

#[derive(Debug, Default)]
struct PoolState {
    idle: Vec<TcpStream>,
    open: usize,
}

impl Pool {
    fn new(address: &str, options: RemoteOptions) -> Result<Arc<Self>> {
        if options.pool_size == 0 {
            return Err(Error::param("connection pool size must be ≥ 1"));
        }
        let pool = Arc::new(Pool {
            address: address.to_string(),
            options,
            state: Mutex::new(PoolState::default()),
            available: Condvar::new(),
        });
        // Fail fast on unreachable servers and handshake errors.
        let conn = pool.connect()?;
        let mut st = pool.state.lock().unwrap();
        st.open = 1;
        st.idle.push(conn);
        drop(st);
        Ok(pool)
    }

    fn connect(&self) -> Result<TcpStream> {
        let addrs: Vec<_> = self
            .address
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("{}: {e}", self.address)))?
            .collect();
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, self.options.timeout) {
                Ok(mut stream) => {
                    stream
                        .set_read_timeout(Some(self.options.timeout))
                        .map_err(transport)?;
                    stream
                        .set_write_timeout(Some(self.options.timeout))
                        .map_err(transport)?;
                    stream.set_nodelay(true).map_err(transport)?;
                    handshake(&mut stream, &self.options)?;
                    return Ok(stream);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Transport(match last {
            Some(e) => format!("{}: {e}", self.address),
            None => format!("{}: no addresses", self.address),
        }))
    }

    /// Sends one request and waits for its response on a pooled connection.
    /// Connections that saw a transport or protocol failure are discarded.
    fn request(&self, msg: &Message) -> Result<Message> {
        let mut stream = {
            let mut st = self.state.lock().unwrap();
            loop {
                if let Some(s) = st.idle.pop() {
                    break Some(s);
                }
                if st.open < self.options.pool_size {
                    st.open += 1;
                    break None;
                }
                st = self.available.wait(st).unwrap();
            }
        };
        if stream.is_none() {
            match self.connect() {
                Ok(s) => stream = Some(s),
                Err(e) => {
                    self.release(None);
                    return Err(e);
                }
            }
        }
        let mut stream = stream.unwrap();
        let result = write_message(&mut stream, msg)
            .map_err(transport)
            .and_then(|_| read_message(&mut stream));
        match result {
            Ok(reply) => {
                self.release(Some(stream));
                Ok(reply)
            }
            Err(e) => {
                self.release(None);
                Err(e)
            }
        }
    }

    fn release(&self, stream: Option<TcpStream>) {
        let mut st = self.state.lock().unwrap();
        match stream {
            Some(s) => st.idle.push(s),
            None => st.open -= 1,
        }
        drop(st);
        self.available.notify_one();
    }

    fn tensor_call(
        &self,
        req: MessageType,
        resp: MessageType,
        t: u32,
        frame: &Frame,
    ) -> Result<Frame> {
        let reply = self.request(&Message::tensor(req, t, frame))?;
        match reply.kind {
            k if k == resp => Ok(decode_tensor(&reply.payload)?.1),
            MessageType::Error => Err(Error::Remote(
                String::from_utf8_lossy(&reply.payload).into_owned(),
            )),
            other => Err(Error::Protocol(format!(
                "expected {resp:?}, server sent {other:?}"
            ))),
        }
    }
}

fn handshake(stream: &mut TcpStream, options: &RemoteOptions) -> Result<()> {
    let hello = Hello {
        version: PROTOCOL_VERSION,
        schedule: options.schedule.map(|(t, k)| (t as u32, k)),
    };
    write_message(stream, &Message::new(MessageType::Hello, hello.encode())).map_err(transport)?;
    let reply = read_message(stream)?;
    match reply.kind {
        MessageType::Hello => {
            let back = Hello::decode(&reply.payload)?;
            if back.version != PROTOCOL_VERSION {
                return Err(Error::Protocol(format!(
                    "server speaks version {}",
                    back.version
                )));
            }
            Ok(())
        }
        MessageType::Error => Err(Error::Remote(
            String::from_utf8_lossy(&reply.payload).into_owned(),
        )),
        other => Err(Error::Protocol(format!("expected HELLO, got {other:?}"))),
    }
}

/// Denoiser whose predictions come from a VXDN/1 server.
#[derive(Clone, Debug)]
pub struct RemoteDenoiser {
    pool: Arc<Pool>,
}

impl RemoteDenoiser {
    pub fn connect(address: &str, options: RemoteOptions) -> Result<Self> {
        Ok(RemoteDenoiser {
            pool: Pool::new(address, options)?,
        })
    }

    /// Codec served over the same connections.
    pub fn codec(&self) -> RemoteCodec {
        RemoteCodec {
            pool: Arc::clone(&self.pool),
        }
    }
}

impl Denoiser for RemoteDenoiser {
    fn eps(&self, z: &Frame, t: usize) -> Result<Frame> {
        let eps = self
            .pool
            .tensor_call(MessageType::EpsReq, MessageType::EpsResp, t as u32, z)?;
        if eps.shape() != z.shape() {
            return Err(Error::Protocol(format!(
                "EPS_RESP shape {} does not match request {}",
                eps.shape(),
                z.shape()
            )));
        }
        Ok(eps)
    }

    fn name(&self) -> String {
        format!("remote:{}", self.pool.address)
    }
}

/// Latent codec served by a VXDN/1 server.
#[derive(Clone, Debug)]
pub struct RemoteCodec {
    pool: Arc<Pool>,
}

impl RemoteCodec {
    pub fn connect(address: &str, options: RemoteOptions) -> Result<Self> {
        Ok(RemoteCodec {
            pool: Pool::new(address, options)?,
        })
    }
}

impl LatentCodec for RemoteCodec {
    fn encode(&self, x: &Frame) -> Result<Frame> {
        self.pool
            .tensor_call(MessageType::EncReq, MessageType::EncResp, 0, x)
    }

    fn decode(&self, z: &Frame) -> Result<Frame> {
        self.pool
            .tensor_call(MessageType::DecReq, MessageType::DecResp, 0, z)
    }

    fn spatial_factor(&self) -> usize {
        self.pool.options.spatial_factor
    }

    fn name(&self) -> String {
        format!("remote:{}", self.pool.address)
    }
}
