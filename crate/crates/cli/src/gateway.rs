//! Live WebSocket service around one engine.
//!
//! One owner thread holds the [`World`], paces ticks to the wall clock and
//! applies client commands between ticks. Each client session runs on its
//! own thread and talks to the owner only through channels; broadcasts are
//! serialized once and shared as `Arc<str>`.

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};
use vocsync::{Command, ValidConfig, World};

use crate::protocol::{parse_commands, Frame};

/// Frames buffered per session before the session starts losing frames.
const SESSION_BUFFER: usize = 4096;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayOptions {
    /// Simulated milliseconds per wall-clock millisecond.
    pub speed: f64,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self { speed: 1.0 }
    }
}

enum Inbound {
    Join { id: u64, tx: SyncSender<Arc<str>> },
    Commands { id: u64, commands: Vec<Command> },
    Leave { id: u64 },
}

/// A bound, not yet running gateway.
pub struct Gateway {
    listener: TcpListener,
    config: ValidConfig,
    options: GatewayOptions,
}

/// Handle to a running gateway. Dropping it stops the service.
pub struct GatewayHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Gateway {
    pub fn bind(
        addr: impl ToSocketAddrs,
        config: ValidConfig,
        options: GatewayOptions,
    ) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            config,
            options,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Starts the engine and accept threads.
    pub fn spawn(self) -> io::Result<GatewayHandle> {
        let addr = self.listener.local_addr()?;
        self.listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let (inbound_tx, inbound_rx) = mpsc::channel();

        let world = World::new(&self.config);
        let options = self.options;
        let engine_stop = Arc::clone(&stop);
        let engine = thread::Builder::new()
            .name("vocsync-engine".into())
            .spawn(move || Engine::new(world, options).run(inbound_rx, &engine_stop))?;

        let accept_stop = Arc::clone(&stop);
        let listener = self.listener;
        let acceptor = thread::Builder::new()
            .name("vocsync-accept".into())
            .spawn(move || accept_loop(listener, inbound_tx, &accept_stop))?;

        info!("serving on ws://{addr}");
        Ok(GatewayHandle {
            addr,
            stop,
            threads: vec![engine, acceptor],
        })
    }
}

impl GatewayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the service stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {
        drop(self);
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

struct Engine {
    world: World,
    speed: f64,
    seq: u64,
    sessions: BTreeMap<u64, SyncSender<Arc<str>>>,
}

impl Engine {
    fn new(world: World, options: GatewayOptions) -> Self {
        Self {
            world,
            speed: options.speed,
            seq: 0,
            sessions: BTreeMap::new(),
        }
    }

    fn tick_budget(&self) -> Duration {
        Duration::from_secs_f64(self.world.sim().tick_ms / 1000.0 / self.speed)
    }

    fn run(mut self, inbound: Receiver<Inbound>, stop: &AtomicBool) {
        let mut deadline = Instant::now() + self.tick_budget();
        while !stop.load(Ordering::SeqCst) {
            // Commands arriving before the deadline land between this tick and the next.
            loop {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                match inbound.recv_timeout((deadline - now).min(POLL * 4)) {
                    Ok(msg) => self.handle(msg),
                    Err(RecvTimeoutError::Timeout) => {
                        if stop.load(Ordering::SeqCst) {
                            return;
                        }
                    }
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            }
            while let Ok(msg) = inbound.try_recv() {
                self.handle(msg);
            }
            if !self.world.is_paused() {
                let out = self.world.step(1);
                for event in out.events {
                    let seq = self.next_seq();
                    self.broadcast(&Frame::Onset { seq, event });
                }
                for snapshot in out.snapshots {
                    let seq = self.next_seq();
                    self.broadcast(&Frame::Snapshot { seq, snapshot });
                }
            }
            // Behind schedule: keep every tick and let the simulated clock slew.
            deadline = (deadline + self.tick_budget()).max(Instant::now());
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn handle(&mut self, msg: Inbound) {
        match msg {
            Inbound::Join { id, tx } => {
                let hello = Frame::hello(self.seq, self.world.scenario());
                if tx.try_send(hello.to_json().into()).is_ok() {
                    debug!("session {id} joined");
                    self.sessions.insert(id, tx);
                }
            }
            Inbound::Leave { id } => {
                self.sessions.remove(&id);
                debug!("session {id} left");
            }
            Inbound::Commands { id, commands } => {
                let resets = commands.iter().any(|c| matches!(c, Command::Reset { .. }));
                let mut staged = self.world.clone();
                let applied = commands
                    .into_iter()
                    .try_for_each(|c| staged.inject_command(c));
                match applied {
                    Ok(()) => {
                        self.world = staged;
                        if resets {
                            let seq = self.next_seq();
                            self.broadcast(&Frame::hello(seq, self.world.scenario()));
                        }
                    }
                    Err(e) => {
                        if let Some(tx) = self.sessions.get(&id) {
                            let _ = tx.try_send(
                                Frame::Rejected {
                                    reason: e.to_string(),
                                }
                                .to_json()
                                .into(),
                            );
                        }
                    }
                }
            }
        }
    }

    fn broadcast(&mut self, frame: &Frame) {
        let text: Arc<str> = frame.to_json().into();
        self.sessions
            .retain(|id, tx| match tx.try_send(Arc::clone(&text)) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    warn!(
                        "session {id} is not keeping up; dropping frame {:?}",
                        frame.seq()
                    );
                    true
                }
                Err(TrySendError::Disconnected(_)) => false,
            });
    }
}

fn accept_loop(listener: TcpListener, inbound: Sender<Inbound>, stop: &Arc<AtomicBool>) {
    let ids = AtomicU64::new(0);
    let mut sessions: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = ids.fetch_add(1, Ordering::Relaxed);
                let inbound = inbound.clone();
                let stop = Arc::clone(stop);
                let spawned = thread::Builder::new()
                    .name(format!("vocsync-session-{id}"))
                    .spawn(move || {
                        if let Err(e) = session(id, stream, &inbound, &stop) {
                            debug!("session {id} ({peer}) ended: {e}");
                        }
                        let _ = inbound.send(Inbound::Leave { id });
                    });
                match spawned {
                    Ok(h) => sessions.push(h),
                    Err(e) => warn!("could not start session thread: {e}"),
                }
                sessions.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => warn!("accept failed: {e}"),
        }
    }
    for h in sessions {
        let _ = h.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

#[allow(clippy::result_large_err)]
fn session(
    id: u64,
    stream: TcpStream,
    inbound: &Sender<Inbound>,
    stop: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;

    let (tx, rx) = mpsc::sync_channel::<Arc<str>>(SESSION_BUFFER);
    if inbound.send(Inbound::Join { id, tx }).is_err() {
        return Ok(());
    }
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => match parse_commands(text.as_str()) {
                Ok(commands) => {
                    if inbound.send(Inbound::Commands { id, commands }).is_err() {
                        return Ok(());
                    }
                }
                Err(reason) => ws.write(Message::text(Frame::Error { reason }.to_json()))?,
            },
            Ok(Message::Binary(_)) => ws.write(Message::text(
                Frame::Error {
                    reason: "binary frames are not supported".into(),
                }
                .to_json(),
            ))?,
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return Ok(());
            }
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        loop {
            match rx.try_recv() {
                Ok(frame) => ws.write(Message::text(frame.as_ref()))?,
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        match ws.flush() {
            Ok(()) => {}
            Err(e) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
    }
}
