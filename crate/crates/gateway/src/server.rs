//! Interactive session: the engine on its own thread, a TCP listener, and
//! one handler thread per connection.
//!
//! Handlers never touch the engine. Queries and directives travel over a
//! channel that the engine thread drains only between events; the event
//! stream is served from an append-only buffer the engine thread fills after
//! every event.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use mcs_core::engine::{DecisionStatus, Engine, OverrideDirective, Rejection, RunRecord, WorldSnapshot};

use crate::api::{projected, ApiEvent, Request, Response};
use crate::GatewayError;

enum Command {
    GetState(Sender<WorldSnapshot>),
    Override(OverrideDirective, Sender<Result<DecisionStatus, Rejection>>),
}

#[derive(Default)]
struct Hub {
    events: Vec<ApiEvent>,
    finished: bool,
}

struct Shared {
    hub: Mutex<Hub>,
    changed: Condvar,
    commands: Mutex<Option<Sender<Command>>>,
    final_state: Mutex<Option<WorldSnapshot>>,
    stopping: AtomicBool,
}

impl Shared {
    fn sender(&self) -> Option<Sender<Command>> {
        self.commands.lock().expect("lock").clone()
    }
}

/// Simulated seconds advanced per wall-clock second; `None` runs as fast as
/// the engine can.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pace(pub Option<f64>);

impl Pace {
    pub fn from_speedup(speedup: f64) -> Self {
        Pace((speedup > 0.0).then_some(speedup))
    }
}

pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    engine: Option<JoinHandle<Result<RunRecord, GatewayError>>>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` and starts the engine. Port 0 picks a free port.
    pub fn start(engine: Engine, addr: &str, pace: Pace) -> Result<Self, GatewayError> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            hub: Mutex::new(Hub::default()),
            changed: Condvar::new(),
            commands: Mutex::new(Some(tx)),
            final_state: Mutex::new(None),
            stopping: AtomicBool::new(false),
        });
        let sh = Arc::clone(&shared);
        let engine = thread::spawn(move || drive(engine, rx, &sh, pace));
        let sh = Arc::clone(&shared);
        let accept = thread::spawn(move || {
            for conn in listener.incoming() {
                if sh.stopping.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(conn) = conn {
                    let sh = Arc::clone(&sh);
                    thread::spawn(move || {
                        let _ = handle(conn, &sh);
                    });
                }
            }
        });
        Ok(Server { addr, shared, engine: Some(engine), accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the run ends. The listener keeps serving the final state
    /// and the complete stream until [`Server::shutdown`].
    pub fn wait(&mut self) -> Result<RunRecord, GatewayError> {
        let h = self.engine.take().ok_or(GatewayError::Unavailable)?;
        h.join().map_err(|_| GatewayError::Input("engine thread panicked".into()))?
    }

    /// Stops accepting connections. Open streams still receive their end
    /// marker.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

fn publish(eng: &Engine, shared: &Shared, published: &mut usize) {
    let log = eng.log();
    if *published == log.len() {
        return;
    }
    let mut hub = shared.hub.lock().expect("lock");
    for e in &log[*published..] {
        if projected(&e.event) {
            let seq = hub.events.len() as u64 + 1;
            hub.events.push(ApiEvent { seq, log_seq: e.seq, time: e.time, event: e.event.clone() });
        }
    }
    *published = log.len();
    shared.changed.notify_all();
}

fn apply(eng: &mut Engine, cmd: Command, shared: &Shared, published: &mut usize) {
    match cmd {
        Command::GetState(reply) => {
            let _ = reply.send(eng.snapshot());
        }
        Command::Override(d, reply) => {
            let r = eng.apply_override(d);
            // events caused by the directive are streamed before the verdict
            publish(eng, shared, published);
            let _ = reply.send(r);
        }
    }
}

fn drive(mut eng: Engine, rx: Receiver<Command>, shared: &Shared, pace: Pace) -> Result<RunRecord, GatewayError> {
    let start = Instant::now();
    let mut published = 0;
    let result = (|| {
        loop {
            while let Ok(cmd) = rx.try_recv() {
                apply(&mut eng, cmd, shared, &mut published);
            }
            if let (Some(speedup), Some(t)) = (pace.0, eng.next_event_time()) {
                let due = start + Duration::from_secs_f64(t.as_secs_f64() / speedup);
                loop {
                    let now = Instant::now();
                    if now >= due {
                        break;
                    }
                    match rx.recv_timeout(due - now) {
                        Ok(cmd) => apply(&mut eng, cmd, shared, &mut published),
                        Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
            }
            let more = eng.step()?;
            publish(&eng, shared, &mut published);
            if !more {
                return Ok(());
            }
        }
    })();
    *shared.final_state.lock().expect("lock") = Some(eng.snapshot());
    shared.commands.lock().expect("lock").take();
    // commands that raced the end are answered with a finished-run verdict
    while let Ok(cmd) = rx.try_recv() {
        apply(&mut eng, cmd, shared, &mut published);
    }
    shared.hub.lock().expect("lock").finished = true;
    shared.changed.notify_all();
    result.map_err(GatewayError::Engine)?;
    Ok(eng.finish()?)
}

fn write_line(w: &mut impl Write, r: &Response) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(r).map_err(std::io::Error::other)?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()
}

fn unavailable() -> Response {
    Response::Error { code: "unavailable".into(), message: "no active run".into() }
}

fn handle(conn: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let reader = BufReader::new(conn.try_clone()?);
    let mut w = conn;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                write_line(&mut w, &Response::Error { code: "bad_request".into(), message: e.to_string() })?;
                continue;
            }
        };
        match req {
            Request::GetState => {
                let (tx, rx) = mpsc::channel();
                let state = shared.sender().and_then(|s| s.send(Command::GetState(tx)).ok()).and_then(|_| rx.recv().ok());
                let state = state.or_else(|| shared.final_state.lock().expect("lock").clone());
                let resp = state.map_or_else(unavailable, |state| Response::State { state });
                write_line(&mut w, &resp)?;
            }
            Request::Override { directive } => {
                let id = directive.decision_id.clone();
                let (tx, rx) = mpsc::channel();
                let verdict =
                    shared.sender().and_then(|s| s.send(Command::Override(directive, tx)).ok()).and_then(|_| rx.recv().ok());
                let resp = match verdict {
                    Some(Ok(status)) => Response::Verdict { decision_id: id, status },
                    Some(Err(rej)) if rej.reason == "run_finished" => unavailable(),
                    Some(Err(rej)) => Response::Rejected { decision_id: rej.decision_id, reason: rej.reason },
                    None => unavailable(),
                };
                write_line(&mut w, &resp)?;
            }
            Request::Stream { from_seq } => return stream(&mut w, shared, from_seq),
        }
    }
    Ok(())
}

fn stream(w: &mut TcpStream, shared: &Shared, from_seq: u64) -> std::io::Result<()> {
    let mut next = from_seq as usize;
    loop {
        let (batch, finished) = {
            let mut hub = shared.hub.lock().expect("lock");
            while hub.events.len() <= next && !hub.finished {
                hub = shared.changed.wait(hub).expect("lock");
            }
            let batch = hub.events.get(next..).map(<[ApiEvent]>::to_vec).unwrap_or_default();
            (batch, hub.finished)
        };
        for event in batch {
            next = event.seq as usize;
            write_line(w, &Response::Event { event })?;
        }
        if finished {
            let last = shared.hub.lock().expect("lock").events.len();
            if next >= last {
                return write_line(w, &Response::End { last_seq: last as u64 });
            }
        }
    }
}
