//! WebSocket front end around a single [`Session`] loop.
//!
//! Threads: one acceptor, one simulation loop, one per client. Clients talk
//! to the loop through a single ordered command queue; the loop hands each
//! client its outgoing messages through a bounded queue and drops messages
//! for clients that fall behind, so nobody can stall the simulation.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use perceptloco::gait::CONTROL_DT;
use tungstenite::{Message, WebSocket};

use crate::protocol::{split_messages, CommandMessage, ErrorCode, ProtocolError, ServerMessage, PROTOCOL_VERSION};
use crate::session::{Session, SessionConfig};

/// Outgoing messages buffered per client before new ones are dropped.
pub const CLIENT_QUEUE: usize = 256;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: String,
    pub session: SessionConfig,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { listen: "127.0.0.1:8765".into(), session: SessionConfig::default(), speed: 1.0 }
    }
}

enum LoopEvent {
    Connect { client: u64, outbox: SyncSender<String> },
    Text { client: u64, text: String },
    Disconnect { client: u64 },
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop.store(true, Ordering::SeqCst);
        }
    }
}

/// Binds the listener and starts the loop; returns once both are running.
pub fn spawn(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    if !(config.speed > 0.0 && config.speed.is_finite()) {
        return Err(ProtocolError::new(ErrorCode::Invalid, format!("speed must be positive, got {}", config.speed)).into());
    }
    let session = Session::new(config.session.clone())?;
    let listener =
        TcpListener::bind(&config.listen).map_err(|source| ServerError::Bind { addr: config.listen.clone(), source })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (events, inbox) = mpsc::channel();
    let period = Duration::from_secs_f64(CONTROL_DT / config.speed);

    let loop_stop = stop.clone();
    let sim = thread::Builder::new()
        .name("steering-loop".into())
        .spawn(move || run_loop(session, inbox, period, &loop_stop))?;
    let accept_stop = stop.clone();
    let acceptor = thread::Builder::new()
        .name("steering-accept".into())
        .spawn(move || accept_loop(listener, events, &accept_stop))?;
    log::info!("steering server listening on ws://{addr}");
    Ok(ServerHandle { addr, stop, threads: vec![sim, acceptor] })
}

fn accept_loop(listener: TcpListener, events: Sender<LoopEvent>, stop: &Arc<AtomicBool>) {
    let mut next_id = 0u64;
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                next_id += 1;
                let (id, events, stop) = (next_id, events.clone(), stop.clone());
                log::info!("client {id} connected from {peer}");
                match thread::Builder::new()
                    .name(format!("steering-client-{id}"))
                    .spawn(move || client_loop(stream, id, events, &stop))
                {
                    Ok(h) => clients.push(h),
                    Err(e) => log::warn!("cannot start client thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        clients.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in clients {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn client_loop(stream: TcpStream, client: u64, events: Sender<LoopEvent>, stop: &Arc<AtomicBool>) {
    let setup = stream
        .set_nonblocking(false)
        .and_then(|()| stream.set_read_timeout(Some(Duration::from_secs(5))))
        .and_then(|()| stream.set_write_timeout(Some(Duration::from_secs(5))));
    if let Err(e) = setup {
        log::warn!("client {client}: {e}");
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("client {client}: handshake failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL)) {
        log::warn!("client {client}: {e}");
        return;
    }
    let (outbox, outgoing) = mpsc::sync_channel(CLIENT_QUEUE);
    if events.send(LoopEvent::Connect { client, outbox }).is_err() {
        return;
    }
    if let Err(e) = serve_client(&mut ws, client, &events, &outgoing, stop) {
        log::info!("client {client} closed: {e}");
    }
    let _ = events.send(LoopEvent::Disconnect { client });
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn serve_client(
    ws: &mut WebSocket<TcpStream>,
    client: u64,
    events: &Sender<LoopEvent>,
    outgoing: &Receiver<String>,
    stop: &Arc<AtomicBool>,
) -> Result<(), tungstenite::Error> {
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if events.send(LoopEvent::Text { client, text: text.to_string() }).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Binary(_)) => {
                let e = ProtocolError::new(ErrorCode::Malformed, "binary frames are not supported; send JSON text");
                ws.send(Message::text(e.to_message().to_json()))?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
        loop {
            match outgoing.try_recv() {
                Ok(text) => ws.write(Message::text(text))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        match ws.flush() {
            Err(e) if !is_timeout(&e) => return Err(e),
            _ => {}
        }
    }
    Ok(())
}

struct Client {
    id: u64,
    outbox: SyncSender<String>,
    dropped: u64,
}

impl Client {
    /// False once the client is gone.
    fn offer(&mut self, text: String) -> bool {
        match self.outbox.try_send(text) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                self.dropped += 1;
                if self.dropped.is_power_of_two() {
                    log::warn!("client {} is slow; {} messages dropped", self.id, self.dropped);
                }
                true
            }
            Err(TrySendError::Disconnected(_)) => false,
        }
    }
}

fn handle_text(session: &mut Session, text: &str) -> ServerMessage {
    let result = CommandMessage::parse(text).and_then(|m| {
        session.apply(&m.command).map_err(|e| e.with_id(m.id))?;
        Ok(m)
    });
    match result {
        Ok(m) => ServerMessage::Ack {
            version: PROTOCOL_VERSION,
            id: m.id,
            command: m.command.kind().to_string(),
            time: session.time(),
        },
        Err(e) => e.to_message(),
    }
}

fn run_loop(mut session: Session, inbox: Receiver<LoopEvent>, period: Duration, stop: &Arc<AtomicBool>) {
    let mut clients: Vec<Client> = Vec::new();
    let mut deadline = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        // Commands land between control steps, in arrival order.
        while let Ok(event) = inbox.try_recv() {
            match event {
                LoopEvent::Connect { client, outbox } => {
                    let mut c = Client { id: client, outbox, dropped: 0 };
                    let hello = ServerMessage::Hello {
                        version: PROTOCOL_VERSION,
                        snapshot_hz: session.config().snapshot_hz,
                        paused: session.is_paused(),
                        time: session.time(),
                    };
                    if c.offer(hello.to_json()) {
                        clients.push(c);
                    }
                }
                LoopEvent::Text { client, text } => {
                    let replies: Vec<String> =
                        split_messages(&text).map(|m| handle_text(&mut session, m).to_json()).collect();
                    if let Some(c) = clients.iter_mut().find(|c| c.id == client) {
                        for r in replies {
                            c.offer(r);
                        }
                    }
                }
                LoopEvent::Disconnect { client } => clients.retain(|c| c.id != client),
            }
        }
        match session.tick() {
            Ok(Some(snapshot)) => {
                let text = ServerMessage::Snapshot(snapshot).to_json();
                clients.retain_mut(|c| c.offer(text.clone()));
            }
            Ok(None) => {}
            Err(e) => log::error!("simulation step failed: {e}"),
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > 10 * period {
            // fell far behind; do not try to catch up in a burst
            deadline = now;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_handling_acks_and_rejects() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        match handle_text(&mut s, r#"{"version":1,"id":3,"kind":"set_gait","frequency":2.5}"#) {
            ServerMessage::Ack { id, command, .. } => assert_eq!((id, command.as_str()), (Some(3), "set_gait")),
            other => panic!("{other:?}"),
        }
        match handle_text(&mut s, r#"{"version":1,"id":4,"kind":"set_gait","frequency":7}"#) {
            ServerMessage::Error { id, code, .. } => assert_eq!((id, code), (Some(4), ErrorCode::OutOfRange)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_speed_is_rejected() {
        let cfg = ServerConfig { listen: "127.0.0.1:0".into(), speed: 0.0, ..Default::default() };
        assert!(matches!(spawn(cfg), Err(ServerError::Config(_))));
    }
}
