use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use perceptloco_steering::protocol::{Command, CommandMessage, ErrorCode, ServerMessage, Snapshot};
use perceptloco_steering::{spawn, ServerConfig, ServerHandle};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn start(speed: f64) -> ServerHandle {
    spawn(ServerConfig { listen: "127.0.0.1:0".into(), speed, ..Default::default() }).unwrap()
}

fn connect(addr: SocketAddr) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

fn next(ws: &mut Client) -> ServerMessage {
    loop {
        match ws.read().expect("server message") {
            Message::Text(t) => return ServerMessage::parse(&t).expect("valid server message"),
            Message::Ping(_) | Message::Pong(_) => {}
            other => panic!("unexpected frame {other:?}"),
        }
    }
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text.to_string())).unwrap();
}

/// Reply to the command with `id`, collecting snapshots seen on the way.
fn reply(ws: &mut Client, id: u64, snapshots: &mut Vec<Snapshot>) -> ServerMessage {
    loop {
        match next(ws) {
            ServerMessage::Snapshot(s) => snapshots.push(s),
            m @ (ServerMessage::Ack { id: Some(i), .. } | ServerMessage::Error { id: Some(i), .. }) if i == id => {
                return m
            }
            _ => {}
        }
    }
}

fn command(ws: &mut Client, id: u64, c: Command) -> f64 {
    send(ws, &CommandMessage::new(c).with_id(id).to_json());
    match reply(ws, id, &mut Vec::new()) {
        ServerMessage::Ack { time, .. } => time,
        other => panic!("expected ack, got {other:?}"),
    }
}

fn snapshots_until(ws: &mut Client, t: f64) -> Vec<Snapshot> {
    let mut out = Vec::new();
    loop {
        if let ServerMessage::Snapshot(s) = next(ws) {
            let done = s.time >= t;
            out.push(s);
            if done {
                return out;
            }
        }
    }
}

#[test]
fn greets_with_version() {
    let server = start(1.0);
    let mut ws = connect(server.local_addr());
    match next(&mut ws) {
        ServerMessage::Hello { version, snapshot_hz, .. } => assert_eq!((version, snapshot_hz), (1, 20.0)),
        other => panic!("{other:?}"),
    }
    server.shutdown();
}

#[test]
fn set_gait_reaches_measured_frequency_within_a_second() {
    let server = start(1.0);
    let mut ws = connect(server.local_addr());
    let t0 = command(&mut ws, 1, Command::SetGait { frequency: 2.5, duty: None });
    let snaps = snapshots_until(&mut ws, t0 + 1.0);
    let last = snaps.last().unwrap();
    let f = last.measured_frequency.expect("a full cycle has elapsed");
    assert!((f - 2.5).abs() / 2.5 < 0.02, "measured {f} Hz at t = {}", last.time);
    // rate: one snapshot per two control steps
    let dt: Vec<f64> = snaps.windows(2).map(|w| w[1].time - w[0].time).collect();
    assert!(dt.iter().all(|d| (d - 0.05).abs() < 1e-9), "{dt:?}");
    server.shutdown();
}

#[test]
fn pause_and_resume_keep_time_continuous() {
    let server = start(1.0);
    let mut ws = connect(server.local_addr());
    let before = snapshots_until(&mut ws, 0.3);
    let paused_at = command(&mut ws, 1, Command::Pause);
    // drain anything emitted before the pause took effect
    let mut late = Vec::new();
    let t_wait = Instant::now();
    while t_wait.elapsed() < Duration::from_millis(400) {
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if let Ok(ServerMessage::Snapshot(s)) = ServerMessage::parse(&t) {
                    late.push(s);
                }
            }
            Ok(_) => {}
            Err(_) => {}
        }
    }
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    assert!(late.iter().all(|s| s.time <= paused_at + 1e-9), "snapshots during pause: {late:?}");
    let resumed_at = command(&mut ws, 2, Command::Resume);
    assert_eq!(resumed_at, paused_at);
    let after = snapshots_until(&mut ws, resumed_at + 0.2);
    let last_before = late.last().or(before.last()).unwrap();
    let gap = after[0].time - last_before.time;
    assert!(gap > 0.0 && gap <= 0.05 + 1e-9, "time jumped by {gap}");
    assert_eq!(after[0].seq, last_before.seq + 1);
    server.shutdown();
}

#[test]
fn velocity_command_settles_after_two_seconds() {
    let server = start(4.0);
    let mut ws = connect(server.local_addr());
    let t0 = command(&mut ws, 1, Command::SetVelocity { vx: 0.6, vy: 0.0 });
    let snaps = snapshots_until(&mut ws, t0 + 2.0);
    let v = snaps.last().unwrap().measured_velocity[0];
    assert!((v - 0.6).abs() / 0.6 < 0.01, "{v}");
    server.shutdown();
}

#[test]
fn bad_messages_get_structured_errors_and_keep_the_connection() {
    let server = start(4.0);
    let mut ws = connect(server.local_addr());
    let cases = [
        ("{\"version\":1,\"id\":1,\"kind\":\"warp\"}", ErrorCode::Malformed),
        ("{\"version\":1,\"id\":2,\"kind\":\"set_gait\",\"frequency\":5}", ErrorCode::OutOfRange),
        ("{\"version\":1,\"id\":3,\"kind\":\"set_velocity\",\"vx\":0,\"vy\":2}", ErrorCode::OutOfRange),
        ("{\"version\":9,\"id\":4,\"kind\":\"pause\"}", ErrorCode::UnsupportedVersion),
        ("{\"id\":5,\"kind\":\"pause\"}", ErrorCode::Malformed),
    ];
    for (k, (text, code)) in cases.iter().enumerate() {
        send(&mut ws, text);
        match reply(&mut ws, k as u64 + 1, &mut Vec::new()) {
            ServerMessage::Error { code: c, reason, .. } => {
                assert_eq!(c, *code, "{text}");
                assert!(!reason.is_empty());
            }
            other => panic!("{text}: {other:?}"),
        }
    }
    send(&mut ws, "this is not json");
    loop {
        if let ServerMessage::Error { code, id, .. } = next(&mut ws) {
            assert_eq!((code, id), (ErrorCode::Malformed, None));
            break;
        }
    }
    ws.send(Message::binary(vec![1u8, 2, 3])).unwrap();
    loop {
        if let ServerMessage::Error { code, .. } = next(&mut ws) {
            assert_eq!(code, ErrorCode::Malformed);
            break;
        }
    }
    // still connected and commandable
    command(&mut ws, 10, Command::SetGait { frequency: 3.0, duty: Some(0.6) });
    server.shutdown();
}

#[test]
fn newline_separated_commands_apply_in_order() {
    let server = start(4.0);
    let mut ws = connect(server.local_addr());
    let frame = [
        CommandMessage::new(Command::SetGait { frequency: 1.5, duty: None }).with_id(1).to_json(),
        CommandMessage::new(Command::SetGait { frequency: 3.5, duty: None }).with_id(2).to_json(),
    ]
    .join("\n");
    send(&mut ws, &frame);
    let mut snaps = Vec::new();
    assert!(matches!(reply(&mut ws, 1, &mut snaps), ServerMessage::Ack { .. }));
    let t = match reply(&mut ws, 2, &mut snaps) {
        ServerMessage::Ack { time, .. } => time,
        other => panic!("{other:?}"),
    };
    let snaps = snapshots_until(&mut ws, t + 0.6);
    assert_eq!(snaps.last().unwrap().commanded_frequency, 3.5);
    server.shutdown();
}

#[test]
fn clients_share_one_simulation_and_reconnects_continue_it() {
    let server = start(4.0);
    let addr = server.local_addr();
    let mut a = connect(addr);
    let mut b = connect(addr);
    command(&mut a, 1, Command::SetVelocity { vx: 0.5, vy: 0.0 });
    let sa = snapshots_until(&mut a, 1.0).pop().unwrap();
    let sb = snapshots_until(&mut b, sa.time + 0.2).pop().unwrap();
    // b sees the command sent by a
    assert_eq!(sb.commanded_velocity, [0.5, 0.0]);
    drop(b);
    let t_drop = sa.time;
    let mut c = connect(addr);
    let sc = snapshots_until(&mut c, t_drop + 0.5).pop().unwrap();
    assert!(sc.seq > sa.seq && sc.time > sa.time);
    assert_eq!(sc.episode, 0, "reconnect must not restart the simulation");
    assert!(sc.position[0] > sa.position[0]);
    server.shutdown();
}

#[test]
fn a_stalled_client_does_not_block_the_loop() {
    let server = start(8.0);
    let addr = server.local_addr();
    // handshake by hand, then never read again
    let mut raw = TcpStream::connect(addr).unwrap();
    raw.write_all(
        format!(
            "GET / HTTP/1.1\r\nHost: {addr}\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n\
             Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        .as_bytes(),
    )
    .unwrap();
    let mut buf = [0u8; 16];
    raw.read_exact(&mut buf).unwrap();
    assert!(buf.starts_with(b"HTTP/1.1 101"));
    let mut ws = connect(addr);
    let start = Instant::now();
    let snaps = snapshots_until(&mut ws, 6.0);
    assert!(snaps.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    assert!(start.elapsed() < Duration::from_secs(5), "{:?}", start.elapsed());
    drop(raw);
    server.shutdown();
}

#[test]
fn occupied_port_is_reported() {
    let server = start(1.0);
    let err = spawn(ServerConfig { listen: server.local_addr().to_string(), ..Default::default() });
    assert!(err.is_err());
    server.shutdown();
}
