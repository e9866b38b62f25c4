//! Instruction service: one thread and one [`Session`] per connection.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use coteach_core::engine::{compute_metrics, EngineModel, Session, SessionConfig, SessionLog};
use coteach_core::kinematics::Machine;
use coteach_core::task::TaskConfig;
use coteach_core::{Vec4, DEFAULT_RATE_HZ};

use crate::formats::{save_session_log, write_bytes};
use crate::protocol::{ClientMessage, EventMessage, ServerMessage, StateMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TickMode {
    /// Fixed-rate wall-clock ticks; the latest input is held between ticks.
    Realtime,
    /// One tick per input message, as fast as the client sends.
    Lockstep,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub tick: TickMode,
    pub rate_hz: f64,
    /// Session `n` gets seed `seed + n` unless its hello names one.
    pub seed: u64,
    /// Start joint angles of every session.
    pub home: Vec4,
    pub log_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            tick: TickMode::Realtime,
            rate_hz: DEFAULT_RATE_HZ,
            seed: 0,
            home: coteach_core::demo::ExpertScript::truck_loading().home,
            log_dir: None,
        }
    }
}

pub struct Server {
    model: Arc<EngineModel>,
    task: TaskConfig,
    machine: Machine,
    config: ServerConfig,
    sessions: AtomicU64,
}

enum Inbound {
    Line(String),
    Closed,
}

impl Server {
    pub fn new(
        model: Arc<EngineModel>,
        task: TaskConfig,
        machine: Machine,
        config: ServerConfig,
    ) -> Result<Self> {
        // fail at startup rather than on the first connection
        Session::start(
            model.clone(),
            task.clone(),
            machine,
            session_config(&config, 0, Default::default()),
        )
        .map_err(|e| anyhow!("model does not fit task: {e}"))?;
        Ok(Self {
            model,
            task,
            machine,
            config,
            sessions: AtomicU64::new(0),
        })
    }

    /// Accepts connections forever.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let server = self.clone();
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = server.handle(stream) {
                    eprintln!("session {peer:?}: {e:#}");
                }
            });
        }
        Ok(())
    }

    /// Binds and serves on a background thread. Returns the bound address.
    pub fn spawn(self, addr: impl ToSocketAddrs) -> Result<SocketAddr> {
        let listener = TcpListener::bind(addr).context("bind")?;
        let local = listener.local_addr()?;
        let server = Arc::new(self);
        thread::spawn(move || server.serve(listener));
        Ok(local)
    }

    fn handle(&self, stream: TcpStream) -> Result<()> {
        stream.set_nodelay(true).ok();
        let reader = BufReader::new(stream.try_clone()?);
        let writer = BufWriter::new(stream.try_clone()?);
        let id = self.sessions.fetch_add(1, Ordering::Relaxed);
        let result = self.run_session(reader, writer, id);
        // unblocks the reader thread and signals EOF to the client
        let _ = stream.shutdown(Shutdown::Both);
        result
    }

    /// Drives one session over any line stream until `end`, EOF or a
    /// protocol violation.
    pub fn run_session<R, W>(&self, reader: R, mut out: W, id: u64) -> Result<()>
    where
        R: BufRead + Send + 'static,
        W: Write,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                if tx.send(Inbound::Line(line)).is_err() {
                    return;
                }
            }
            let _ = tx.send(Inbound::Closed);
        });

        let mut session = match rx.recv() {
            Ok(Inbound::Line(line)) => match ClientMessage::parse(&line) {
                Ok(ClientMessage::Hello { style, seed }) => {
                    let cfg = session_config(
                        &self.config,
                        seed.unwrap_or(self.config.seed.wrapping_add(id)),
                        style,
                    );
                    match Session::start(self.model.clone(), self.task.clone(), self.machine, cfg) {
                        Ok(s) => s,
                        Err(e) => return fail(&mut out, format!("cannot start session: {e}")),
                    }
                }
                Ok(_) => return fail(&mut out, "expected hello".into()),
                Err(e) => return fail(&mut out, format!("{e:#}")),
            },
            _ => return Ok(()),
        };
        send(
            &mut out,
            &ServerMessage::State(StateMessage::new(0, session.sim())),
        )?;
        send(
            &mut out,
            &ServerMessage::Instruction(session.instruction().clone()),
        )?;
        out.flush()?;

        let period = Duration::from_secs_f64(1.0 / self.config.rate_hz);
        let mut held = [0.0; 4];
        let mut last_seq = 0u64;
        let mut next_tick = Instant::now() + period;
        loop {
            let inbound = match self.config.tick {
                TickMode::Lockstep => rx.recv().unwrap_or(Inbound::Closed),
                TickMode::Realtime => {
                    match rx.recv_timeout(next_tick.saturating_duration_since(Instant::now())) {
                        Ok(m) => m,
                        Err(RecvTimeoutError::Timeout) => {
                            next_tick += period;
                            tick(&mut session, &mut out, &held, last_seq)?;
                            continue;
                        }
                        Err(RecvTimeoutError::Disconnected) => Inbound::Closed,
                    }
                }
            };
            let line = match inbound {
                Inbound::Line(l) => l,
                Inbound::Closed => break,
            };
            match ClientMessage::parse(&line) {
                Ok(ClientMessage::Input { seq, axes }) => {
                    if seq <= last_seq {
                        return fail(
                            &mut out,
                            format!("input seq {seq} does not follow {last_seq}"),
                        );
                    }
                    last_seq = seq;
                    held = axes;
                    if self.config.tick == TickMode::Lockstep {
                        tick(&mut session, &mut out, &held, last_seq)?;
                    }
                }
                Ok(ClientMessage::End) => break,
                Ok(ClientMessage::Hello { .. }) => return fail(&mut out, "duplicate hello".into()),
                Err(e) => return fail(&mut out, format!("{e:#}")),
            }
        }
        self.finish(session.into_log(), &mut out, id)
    }

    fn finish<W: Write>(&self, log: SessionLog, out: &mut W, id: u64) -> Result<()> {
        let metrics =
            compute_metrics(&log, self.model.subgoals()).map_err(|e| anyhow!("metrics: {e}"))?;
        // the client may already be gone
        let _ = send(out, &ServerMessage::Metrics(metrics)).and_then(|_| Ok(out.flush()?));
        if let Some(dir) = &self.config.log_dir {
            let mut buf = Vec::new();
            save_session_log(&log, &mut buf)?;
            write_bytes(&dir.join(format!("session-{id}.jsonl")), &buf)?;
        }
        Ok(())
    }
}

fn session_config(
    config: &ServerConfig,
    seed: u64,
    style: coteach_core::engine::InstructionStyle,
) -> SessionConfig {
    SessionConfig {
        seed,
        style,
        home: config.home,
        dt: 1.0 / config.rate_hz,
    }
}

fn tick<W: Write>(session: &mut Session, out: &mut W, axes: &Vec4, seq: u64) -> Result<()> {
    let (instruction, events) = match session.step(axes) {
        Ok(r) => r,
        Err(e) => return fail(out, format!("simulation: {e}")),
    };
    send(
        out,
        &ServerMessage::State(StateMessage::new(seq, session.sim())),
    )?;
    for e in &events {
        send(out, &ServerMessage::Event(EventMessage::from(e)))?;
    }
    send(out, &ServerMessage::Instruction(instruction))?;
    out.flush()?;
    Ok(())
}

fn send<W: Write>(out: &mut W, msg: &ServerMessage) -> Result<()> {
    out.write_all(msg.to_line().as_bytes()).context("send")
}

fn fail<W: Write>(out: &mut W, msg: String) -> Result<()> {
    let _ = send(out, &ServerMessage::Error { msg: msg.clone() });
    let _ = out.flush();
    Err(anyhow!("protocol error: {msg}"))
}
