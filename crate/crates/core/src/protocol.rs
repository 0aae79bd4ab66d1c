//! VXDN/1: length-prefixed binary messages between the solver and a
//! denoiser server.
//!
//! Every message is `[u32 LE payload_length][u8 type][payload]`, where the
//! length counts payload bytes only. Tensor payloads are
//! `u32 t, u32 c, u32 h, u32 w` followed by `c·h·w` little-endian `f32`.
//! ENC/DEC messages carry `t = 0`.
//!
//! HELLO carries the protocol version byte. A client may append `u32 T` and
//! a `u8` schedule kind so the server can refuse a schedule it does not
//! share; servers must accept the bare one-byte form.
//!
//! [`MockServer`] implements the server side with analytic models and is
//! what the client tests talk to.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::denoise::gaussian_prior_eps;
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::tensor::{Frame, FrameShape};

pub const PROTOCOL_VERSION: u8 = 1;
/// Upper bound on a single payload.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    EpsReq = 2,
    EpsResp = 3,
    EncReq = 4,
    EncResp = 5,
    DecReq = 6,
    DecResp = 7,
    Error = 8,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        use MessageType::*;
        Some(match b {
            1 => Hello,
            2 => EpsReq,
            3 => EpsResp,
            4 => EncReq,
            5 => EncResp,
            6 => DecReq,
            7 => DecResp,
            8 => Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        Message { kind, payload }
    }

    pub fn error(text: &str) -> Self {
        Message::new(MessageType::Error, text.as_bytes().to_vec())
    }

    pub fn tensor(kind: MessageType, t: u32, frame: &Frame) -> Self {
        Message::new(kind, encode_tensor(t, frame))
    }

    /// Whole message, header included, as one buffer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }
}

/// HELLO payload: version, then optionally the schedule length and kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    pub schedule: Option<(u32, ScheduleKind)>,
}

fn kind_byte(kind: ScheduleKind) -> u8 {
    match kind {
        ScheduleKind::ScaledLinear => 0,
        ScheduleKind::Linear => 1,
        ScheduleKind::Cosine => 2,
    }
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.version];
        if let Some((steps, kind)) = self.schedule {
            out.extend_from_slice(&steps.to_le_bytes());
            out.push(kind_byte(kind));
        }
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        match payload.len() {
            1 => Ok(Hello {
                version: payload[0],
                schedule: None,
            }),
            6 => {
                let steps = u32::from_le_bytes(payload[1..5].try_into().unwrap());
                let kind = match payload[5] {
                    0 => ScheduleKind::ScaledLinear,
                    1 => ScheduleKind::Linear,
                    2 => ScheduleKind::Cosine,
                    other => {
                        return Err(Error::Protocol(format!(
                            "unknown schedule kind byte {other}"
                        )))
                    }
                };
                Ok(Hello {
                    version: payload[0],
                    schedule: Some((steps, kind)),
                })
            }
            n => Err(Error::Protocol(format!("HELLO payload of {n} bytes"))),
        }
    }
}

pub fn encode_tensor(t: u32, frame: &Frame) -> Vec<u8> {
    let s = frame.shape();
    let mut out = Vec::with_capacity(16 + 4 * s.len());
    for v in [t, s.c as u32, s.h as u32, s.w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in frame.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_tensor(payload: &[u8]) -> Result<(u32, Frame)> {
    if payload.len() < 16 {
        return Err(Error::Protocol(format!(
            "tensor payload of {} bytes is shorter than its header",
            payload.len()
        )));
    }
    let word = |i: usize| u32::from_le_bytes(payload[4 * i..4 * i + 4].try_into().unwrap());
    let (t, c, h, w) = (
        word(0),
        word(1) as usize,
        word(2) as usize,
        word(3) as usize,
    );
    let shape = FrameShape::new(c, h, w);
    let expected = shape
        .len()
        .checked_mul(4)
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Protocol("tensor dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Protocol(format!(
            "tensor {shape} needs {expected} payload bytes, got {}",
            payload.len()
        )));
    }
    let data = payload[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((t, Frame::new(shape, data)?))
}

/// Writes one message with a single `write_all`.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&msg.to_bytes())?;
    w.flush()
}

/// Reads one message. I/O failures (including EOF and timeouts) surface as
/// [`Error::Transport`]; malformed headers as [`Error::Protocol`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message> {
    let mut header = [0u8; 5];
    r.read_exact(&mut header).map_err(transport)?;
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let kind = MessageType::from_byte(header[4])
        .ok_or_else(|| Error::Protocol(format!("unknown message type {}", header[4])))?;
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "payload of {len} bytes exceeds limit"
        )));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(transport)?;
    Ok(Message { kind, payload })
}

pub(crate) fn transport(e: io::Error) -> Error {
    Error::Transport(e.to_string())
}

/// Model served by [`MockServer`].
#[derive(Clone, Debug)]
pub enum MockModel {
    /// `ε̂ = 0`.
    Zero,
    /// `ε̂ = √(1−ᾱ_t)·z` over the given schedule.
    GaussianPrior(NoiseSchedule),
    /// Sends half of every EPS response, then closes the connection.
    TruncateResponses,
    /// Never answers EPS requests.
    Stall,
    /// Answers EPS requests with a tensor of the wrong shape.
    WrongShape,
}

/// Threaded VXDN/1 server over analytic models, for tests and local runs.
/// ENC/DEC requests are answered with the identity map.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port and starts accepting.
    pub fn start(model: MockModel) -> Result<Self> {
        Self::bind("127.0.0.1:0", model)
    }

    pub fn bind(addr: &str, model: MockModel) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let accept_thread = thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let model = model.clone();
                thread::spawn(move || {
                    let _ = serve_connection(stream, &model);
                });
            }
        });
        Ok(MockServer {
            addr,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

/// Serves one connection until EOF or a malformed frame. Responses go out in
/// request order.
pub fn serve_connection(mut stream: TcpStream, model: &MockModel) -> Result<()> {
    loop {
        let msg = match read_message(&mut stream) {
            Ok(m) => m,
            Err(Error::Protocol(text)) => {
                let _ = write_message(&mut stream, &Message::error(&text));
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
            Err(_) => return Ok(()),
        };
        let reply = match msg.kind {
            MessageType::Hello => handle_hello(&msg.payload, model),
            MessageType::EpsReq => match model {
                MockModel::TruncateResponses => {
                    let (t, z) = decode_tensor(&msg.payload)?;
                    let bytes = Message::tensor(MessageType::EpsResp, t, &z).to_bytes();
                    stream.write_all(&bytes[..bytes.len() / 2])?;
                    let _ = stream.shutdown(Shutdown::Both);
                    return Ok(());
                }
                MockModel::Stall => {
                    thread::sleep(Duration::from_secs(30));
                    return Ok(());
                }
                _ => handle_eps(&msg.payload, model),
            },
            MessageType::EncReq => decode_tensor(&msg.payload)
                .map(|(_, f)| Message::tensor(MessageType::EncResp, 0, &f)),
            MessageType::DecReq => decode_tensor(&msg.payload)
                .map(|(_, f)| Message::tensor(MessageType::DecResp, 0, &f)),
            other => Err(Error::Protocol(format!("unexpected {other:?} from client"))),
        };
        match reply {
            Ok(m) => write_message(&mut stream, &m)?,
            Err(Error::Protocol(text)) => {
                let _ = write_message(&mut stream, &Message::error(&text));
                let _ = stream.shutdown(Shutdown::Both);
                return Ok(());
            }
            Err(e) => write_message(&mut stream, &Message::error(&e.to_string()))?,
        }
    }
}

fn handle_hello(payload: &[u8], model: &MockModel) -> Result<Message> {
    let hello = Hello::decode(payload)?;
    if hello.version != PROTOCOL_VERSION {
        return Err(Error::Remote(format!(
            "unsupported protocol version {}",
            hello.version
        )));
    }
    if let (Some((steps, kind)), MockModel::GaussianPrior(schedule)) = (hello.schedule, model) {
        if steps as usize != schedule.steps() || kind != schedule.kind() {
            return Err(Error::Remote(format!(
                "schedule mismatch: client T={steps} {kind:?}, server T={} {:?}",
                schedule.steps(),
                schedule.kind()
            )));
        }
    }
    Ok(Message::new(
        MessageType::Hello,
        Hello {
            version: PROTOCOL_VERSION,
            schedule: None,
        }
        .encode(),
    ))
}

fn handle_eps(payload: &[u8], model: &MockModel) -> Result<Message> {
    let (t, z) = decode_tensor(payload)?;
    let eps = match model {
        MockModel::GaussianPrior(schedule) => gaussian_prior_eps(&z, t as usize, schedule)?,
        MockModel::WrongShape => {
            let s = z.shape();
            Frame::zeros(FrameShape::new(s.c, s.h + 1, s.w))
        }
        _ => Frame::zeros(z.shape()),
    };
    Ok(Message::tensor(MessageType::EpsResp, t, &eps))
}
