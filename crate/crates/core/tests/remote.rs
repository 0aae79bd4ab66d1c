mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;

use vidsolve_core::denoise::{
    Denoiser, GaussianPriorDenoiser, IdentityCodec, LatentCodec, RemoteCodec, RemoteDenoiser,
    RemoteOptions,
};
use vidsolve_core::ops::{Task, TaskSpec};
use vidsolve_core::pipeline::{degrade, reconstruct, SolverConfig};
use vidsolve_core::protocol::{
    decode_tensor, read_message, write_message, Hello, Message, MessageType, MockModel, MockServer,
    PROTOCOL_VERSION,
};
use vidsolve_core::schedule::{make_schedule, ScheduleKind};
use vidsolve_core::{Error, Frame, FrameShape, Shape};

fn random_frame(shape: FrameShape, seed: u64) -> Frame {
    let data = gaussian_vec(shape.len(), seed)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Frame::new(shape, data).unwrap()
}

fn connect(server: &MockServer, options: RemoteOptions) -> RemoteDenoiser {
    RemoteDenoiser::connect(&server.addr().to_string(), options).unwrap()
}

fn raw_client(server: &MockServer) -> TcpStream {
    let mut s = TcpStream::connect(server.addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let hello = Hello {
        version: PROTOCOL_VERSION,
        schedule: None,
    };
    write_message(&mut s, &Message::new(MessageType::Hello, hello.encode())).unwrap();
    assert_eq!(read_message(&mut s).unwrap().kind, MessageType::Hello);
    s
}

#[test]
fn zero_model_returns_zero() {
    let server = MockServer::start(MockModel::Zero).unwrap();
    let den = connect(&server, RemoteOptions::default());
    for (i, t) in [1usize, 7, 25, 1000].into_iter().enumerate() {
        let z = random_frame(FrameShape::new(4, 3, 5), i as u64);
        let eps = den.eps(&z, t).unwrap();
        assert_eq!(eps.shape(), z.shape());
        assert!(eps.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gaussian_prior_is_bit_identical_to_local() {
    let schedule = make_schedule(25, ScheduleKind::ScaledLinear).unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule.clone())).unwrap();
    let remote = connect(&server, RemoteOptions::default());
    let local = GaussianPriorDenoiser::new(schedule);
    let mut r = rng(5);
    for i in 0..100 {
        let shape = FrameShape::new(
            r.random_range(1..5),
            r.random_range(1..12),
            r.random_range(1..12),
        );
        let z = random_frame(shape, 1000 + i);
        let t = r.random_range(1..=25);
        let a = remote.eps(&z, t).unwrap();
        let b = local.eps(&z, t).unwrap();
        assert!(a.bit_eq(&b), "request {i} at t={t}");
    }
}

#[test]
fn randomized_requests_have_correct_framing() {
    let schedule = make_schedule(25, ScheduleKind::Cosine).unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule.clone())).unwrap();
    let mut s = raw_client(&server);
    let mut r = rng(9);
    for i in 0..100u64 {
        let shape = FrameShape::new(
            r.random_range(1..4),
            r.random_range(1..9),
            r.random_range(1..9),
        );
        let z = random_frame(shape, i);
        let t: u32 = r.random_range(1..=25);
        let (req, resp, sent_t) = match i % 3 {
            0 => (MessageType::EpsReq, MessageType::EpsResp, t),
            1 => (MessageType::EncReq, MessageType::EncResp, 0),
            _ => (MessageType::DecReq, MessageType::DecResp, 0),
        };
        write_message(&mut s, &Message::tensor(req, sent_t, &z)).unwrap();
        let reply = read_message(&mut s).unwrap();
        assert_eq!(reply.kind, resp, "request {i}");
        assert_eq!(reply.payload.len(), 16 + 4 * shape.len());
        let (back_t, f) = decode_tensor(&reply.payload).unwrap();
        assert_eq!(back_t, sent_t);
        assert_eq!(f.shape(), shape);
        if req == MessageType::EpsReq {
            let scale = schedule.sqrt_one_minus(t as usize);
            for (e, v) in f.data().iter().zip(z.data()) {
                assert_eq!(*e, (scale * *v as f64) as f32);
            }
        } else {
            assert!(f.bit_eq(&z));
        }
    }
}

#[test]
fn pipelined_requests_are_answered_in_order() {
    let server = MockServer::start(MockModel::Zero).unwrap();
    let mut s = raw_client(&server);
    let shapes: Vec<_> = (1..=5).map(|k| FrameShape::new(1, k, k + 1)).collect();
    let mut burst = Vec::new();
    for (i, &sh) in shapes.iter().enumerate() {
        burst.extend(
            Message::tensor(MessageType::EpsReq, i as u32 + 1, &Frame::zeros(sh)).to_bytes(),
        );
    }
    s.write_all(&burst).unwrap();
    for (i, &sh) in shapes.iter().enumerate() {
        let (t, f) = decode_tensor(&read_message(&mut s).unwrap().payload).unwrap();
        assert_eq!((t, f.shape()), (i as u32 + 1, sh));
    }
}

#[test]
fn malformed_frame_gets_error_then_close() {
    let server = MockServer::start(MockModel::Zero).unwrap();
    let mut s = raw_client(&server);
    // Declares a 3×4×4 tensor but carries 3 floats.
    let mut payload = Vec::new();
    for v in [1u32, 3, 4, 4] {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    payload.extend_from_slice(&[0u8; 12]);
    write_message(&mut s, &Message::new(MessageType::EpsReq, payload)).unwrap();
    let reply = read_message(&mut s).unwrap();
    assert_eq!(reply.kind, MessageType::Error);
    assert!(!reply.payload.is_empty());
    let mut rest = Vec::new();
    assert_eq!(s.read_to_end(&mut rest).unwrap_or(0), 0);

    let mut s = raw_client(&server);
    s.write_all(&[0, 0, 0, 0, 99]).unwrap();
    assert_eq!(read_message(&mut s).unwrap().kind, MessageType::Error);
    let mut rest = Vec::new();
    assert_eq!(s.read_to_end(&mut rest).unwrap_or(0), 0);
}

#[test]
fn truncated_response_is_transport_error() {
    let server = MockServer::start(MockModel::TruncateResponses).unwrap();
    let den = connect(&server, RemoteOptions::default());
    let err = den
        .eps(&random_frame(FrameShape::new(2, 4, 4), 1), 3)
        .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

#[test]
fn stalled_server_times_out_as_transport_error() {
    let server = MockServer::start(MockModel::Stall).unwrap();
    let options = RemoteOptions {
        timeout: Duration::from_millis(300),
        ..Default::default()
    };
    let den = connect(&server, options);
    let start = Instant::now();
    let err = den
        .eps(&Frame::zeros(FrameShape::new(1, 2, 2)), 1)
        .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn wrong_response_shape_is_protocol_error() {
    let server = MockServer::start(MockModel::WrongShape).unwrap();
    let den = connect(&server, RemoteOptions::default());
    let err = den
        .eps(&Frame::zeros(FrameShape::new(1, 3, 3)), 2)
        .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn schedule_mismatch_is_refused_at_handshake() {
    let schedule = make_schedule(25, ScheduleKind::ScaledLinear).unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule)).unwrap();
    let addr = server.addr().to_string();
    let ok = RemoteOptions {
        schedule: Some((25, ScheduleKind::ScaledLinear)),
        ..Default::default()
    };
    assert!(RemoteDenoiser::connect(&addr, ok).is_ok());
    for schedule in [(50, ScheduleKind::ScaledLinear), (25, ScheduleKind::Cosine)] {
        let bad = RemoteOptions {
            schedule: Some(schedule),
            ..Default::default()
        };
        let err = RemoteDenoiser::connect(&addr, bad).unwrap_err();
        assert!(
            matches!(&err, Error::Remote(m) if m.contains("mismatch")),
            "{err}"
        );
    }
}

#[test]
fn unreachable_server_is_transport_error() {
    let addr = {
        let server = MockServer::start(MockModel::Zero).unwrap();
        server.addr().to_string()
    };
    let options = RemoteOptions {
        timeout: Duration::from_millis(300),
        ..Default::default()
    };
    let err = RemoteDenoiser::connect(&addr, options).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}

#[test]
fn remote_codec_is_identity_on_mock() {
    let server = MockServer::start(MockModel::Zero).unwrap();
    let codec = RemoteCodec::connect(&server.addr().to_string(), RemoteOptions::default()).unwrap();
    let x = random_frame(FrameShape::new(3, 6, 5), 2);
    assert!(codec.encode(&x).unwrap().bit_eq(&x));
    assert!(codec.decode(&x).unwrap().bit_eq(&x));
    assert_eq!(codec.spatial_factor(), 1);
}

#[test]
fn pool_serves_concurrent_callers() {
    let schedule = make_schedule(25, ScheduleKind::ScaledLinear).unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule.clone())).unwrap();
    let options = RemoteOptions {
        pool_size: 3,
        ..Default::default()
    };
    let remote = Arc::new(connect(&server, options));
    let local = GaussianPriorDenoiser::new(schedule);
    let handles: Vec<_> = (0..6u64)
        .map(|w| {
            let remote = Arc::clone(&remote);
            let local = local.clone();
            thread::spawn(move || {
                for i in 0..10 {
                    let z = random_frame(FrameShape::new(2, 5, 5), 100 * w + i);
                    let t = 1 + (i as usize % 25);
                    assert!(remote
                        .eps(&z, t)
                        .unwrap()
                        .bit_eq(&local.eps(&z, t).unwrap()));
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
}

#[test]
fn remote_pipeline_matches_local() {
    let cfg = SolverConfig {
        workers: Some(3),
        ..Default::default()
    };
    let schedule = cfg.noise_schedule().unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule.clone())).unwrap();
    let options = RemoteOptions {
        pool_size: 3,
        schedule: Some((schedule.steps(), schedule.kind())),
        ..Default::default()
    };
    let remote = connect(&server, options);
    let x = smooth_video(Shape::new(4, 3, 16, 16), 3);
    let m = degrade(&x, &TaskSpec::new(Task::Deblur, 2)).unwrap();
    let a = m.record.operator().unwrap();
    let local = reconstruct(
        &m.video,
        &a,
        &cfg,
        &GaussianPriorDenoiser::new(schedule),
        &IdentityCodec,
    )
    .unwrap();
    let over_wire = reconstruct(&m.video, &a, &cfg, &remote, &remote.codec()).unwrap();
    assert!(over_wire.video.bit_eq(&local.video));
}

#[test]
fn server_error_text_reaches_the_caller() {
    let schedule = make_schedule(25, ScheduleKind::ScaledLinear).unwrap();
    let server = MockServer::start(MockModel::GaussianPrior(schedule)).unwrap();
    let den = connect(&server, RemoteOptions::default());
    let z = Frame::zeros(FrameShape::new(1, 2, 2));
    let err = den.eps(&z, 26).unwrap_err();
    assert!(
        matches!(&err, Error::Remote(m) if m.contains("26")),
        "{err}"
    );
    // The connection stays usable after an application-level error.
    assert!(den.eps(&z, 25).is_ok());
}
