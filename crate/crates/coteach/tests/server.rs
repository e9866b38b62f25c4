mod common;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::{noiseless_model, Client};
use coteach::protocol::ServerMessage;
use coteach::server::{Server, ServerConfig, TickMode};
use coteach_core::engine::{trajectory_axes, EngineModel, Instruction};
use coteach_core::kinematics::Machine;
use coteach_core::task::TaskConfig;

fn start(
    model: Arc<EngineModel>,
    tick: TickMode,
    log_dir: Option<std::path::PathBuf>,
) -> SocketAddr {
    let config = ServerConfig {
        tick,
        seed: 100,
        log_dir,
        ..ServerConfig::default()
    };
    Server::new(
        model,
        TaskConfig::truck_loading(),
        Machine::default(),
        config,
    )
    .unwrap()
    .spawn("127.0.0.1:0")
    .unwrap()
}

/// Sends one input and collects messages up to and including its instruction.
fn step(c: &mut Client, seq: u64, axes: [f64; 4]) -> Vec<ServerMessage> {
    c.input(seq, axes);
    let mut out = Vec::new();
    loop {
        let m = c.recv().expect("server closed mid-step");
        let done = matches!(m, ServerMessage::Instruction(_));
        out.push(m);
        if done {
            return out;
        }
    }
}

fn hello(c: &mut Client, line: &str) -> Instruction {
    c.send(line);
    assert!(matches!(c.recv(), Some(ServerMessage::State(s)) if s.seq == 0));
    match c.recv() {
        Some(ServerMessage::Instruction(i)) => i,
        other => panic!("expected instruction, got {other:?}"),
    }
}

#[test]
fn zero_input_session_reports_no_cycles() {
    let (model, _) = noiseless_model(1, 1);
    let addr = start(model, TickMode::Lockstep, None);
    let mut c = Client::connect(addr);
    let first = hello(&mut c, r#"{"type":"hello","style":"bars"}"#);
    assert_eq!(first.seq, 0);
    let msgs = step(&mut c, 1, [0.0; 4]);
    assert!(matches!(&msgs[0], ServerMessage::State(s) if s.seq == 1));
    c.send(r#"{"type":"end"}"#);
    match c.drain().as_slice() {
        [ServerMessage::Metrics(m)] => {
            assert!(m.cycle_times.is_empty() && m.dump_heights.is_empty());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn scripted_cycle_completes_one_cycle() {
    let (model, demo) = noiseless_model(1, 1);
    let dir = tempfile::tempdir().unwrap();
    let addr = start(model, TickMode::Lockstep, Some(dir.path().to_path_buf()));
    let mut c = Client::connect(addr);
    hello(&mut c, r#"{"type":"hello","style":"circles"}"#);
    let mut dumped = 0;
    for (k, axes) in trajectory_axes(&demo, &Machine::default())
        .into_iter()
        .enumerate()
    {
        for m in step(&mut c, k as u64 + 1, axes) {
            match m {
                ServerMessage::Event(e) if e.kind == coteach_core::sim::EventKind::Dumped => {
                    dumped += 1
                }
                ServerMessage::Instruction(i) => {
                    assert_eq!(i.style, coteach_core::engine::InstructionStyle::Circles);
                    for (a, d) in i.per_axis.iter().zip(i.desired.directions()) {
                        assert_eq!(a.direction, d);
                    }
                }
                _ => {}
            }
        }
    }
    assert_eq!(dumped, 1);
    c.send(r#"{"type":"end"}"#);
    let msgs = c.drain();
    let ServerMessage::Metrics(m) = &msgs[0] else {
        panic!("{msgs:?}")
    };
    assert_eq!(m.cycle_times.len(), 1);
    assert!((m.cycle_times[0] - 296.0 * 0.04).abs() < 1e-6);
    assert_eq!(m.erroneous_actions_per_cycle, [0], "{m:?}");
    // the session log lands once the metrics are out
    let log = dir.path().join("session-0.jsonl");
    for _ in 0..100 {
        if log.exists() {
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    let replayed = coteach::formats::load_session_log(std::fs::File::open(log).unwrap()).unwrap();
    assert_eq!(replayed.records.len(), demo.len());
}

fn instruction_stream(addr: SocketAddr, seed: u64, inputs: usize) -> Vec<String> {
    let mut c = Client::connect(addr);
    c.send(&format!(
        r#"{{"type":"hello","style":"bars","seed":{seed}}}"#
    ));
    let mut lines = Vec::new();
    for _ in 0..2 {
        lines.push(c.line().unwrap());
    }
    for k in 1..=inputs {
        c.input(k as u64, [-1.0, 0.0, 0.0, 0.0]);
        loop {
            let l = c.line().unwrap();
            let done = l.contains(r#""type":"instruction""#);
            lines.push(l);
            if done {
                break;
            }
        }
    }
    c.send(r#"{"type":"end"}"#);
    lines.extend(std::iter::from_fn(|| c.line()));
    lines
}

#[test]
fn concurrent_sessions_are_independent_and_replays_are_exact() {
    let (model, _) = noiseless_model(1, 1);
    let addr = start(model, TickMode::Lockstep, None);
    let handles: Vec<_> = [1u64, 2, 1]
        .into_iter()
        .map(|seed| thread::spawn(move || instruction_stream(addr, seed, 40)))
        .collect();
    let streams: Vec<Vec<String>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(
        streams[0], streams[2],
        "same inputs and seed must give identical bytes"
    );
    assert_ne!(streams[0], streams[1]);
    assert_eq!(streams[0].len(), streams[1].len());
}

#[test]
fn protocol_violation_closes_only_that_session() {
    let (model, _) = noiseless_model(1, 1);
    let addr = start(model, TickMode::Lockstep, None);
    let mut good = Client::connect(addr);
    hello(&mut good, r#"{"type":"hello","style":"bars"}"#);

    let mut early = Client::connect(addr);
    early.input(1, [0.0; 4]);
    assert!(matches!(
        early.drain().as_slice(),
        [ServerMessage::Error { .. }]
    ));

    let mut bad = Client::connect(addr);
    hello(&mut bad, r#"{"type":"hello"}"#);
    step(&mut bad, 5, [0.0; 4]);
    bad.input(5, [0.0; 4]);
    match bad.drain().as_slice() {
        [ServerMessage::Error { msg }] => assert!(msg.contains("seq"), "{msg}"),
        other => panic!("{other:?}"),
    }

    let mut out_of_range = Client::connect(addr);
    hello(&mut out_of_range, r#"{"type":"hello"}"#);
    out_of_range.send(r#"{"type":"input","seq":1,"axes":[0,0,3,0]}"#);
    assert!(matches!(
        out_of_range.drain().as_slice(),
        [ServerMessage::Error { .. }]
    ));

    step(&mut good, 1, [0.0; 4]);
    good.send(r#"{"type":"end"}"#);
    assert!(matches!(
        good.drain().as_slice(),
        [ServerMessage::Metrics(_)]
    ));
}

#[test]
fn realtime_sessions_tick_without_input() {
    let (model, _) = noiseless_model(1, 1);
    let addr = start(model, TickMode::Realtime, None);
    let mut c = Client::connect(addr);
    hello(&mut c, r#"{"type":"hello","style":"bars"}"#);
    thread::sleep(Duration::from_millis(300));
    c.send(r#"{"type":"end"}"#);
    let msgs = c.drain();
    let states = msgs
        .iter()
        .filter(|m| matches!(m, ServerMessage::State(_)))
        .count();
    assert!(states >= 3, "only {states} ticks in 300 ms");
    assert!(matches!(msgs.last(), Some(ServerMessage::Metrics(_))));
}

#[test]
fn server_rejects_a_model_for_another_layout() {
    let (model, _) = noiseless_model(1, 1);
    let mut task = TaskConfig::truck_loading();
    task.objects[1].center = [0.0, 2.0, 0.0];
    assert!(Server::new(model, task, Machine::default(), ServerConfig::default()).is_err());
}
