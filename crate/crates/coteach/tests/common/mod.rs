#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use coteach::pipeline::{gen_demos, learn, segment_demos, DemoOptions, SegmentOptions};
use coteach::protocol::ServerMessage;
use coteach_core::demo::ExpertScript;
use coteach_core::engine::EngineModel;
use coteach_core::kinematics::Machine;
use coteach_core::task::TaskConfig;
use coteach_core::trajectory::Trajectory;

/// Model learned from noiseless scripted demos, plus the first demo.
pub fn noiseless_model(demos: usize, cycles: usize) -> (Arc<EngineModel>, Trajectory) {
    let task = TaskConfig::truck_loading();
    let opts = DemoOptions {
        demos,
        cycles,
        noise_std: 0.0,
        seed: 0,
    };
    let demos = gen_demos(
        &ExpertScript::truck_loading(),
        &task,
        &Machine::default(),
        &opts,
    )
    .unwrap();
    let trajs: Vec<Trajectory> = demos.into_iter().map(|d| d.0).collect();
    let seg = segment_demos(
        &trajs,
        &SegmentOptions {
            min_len: 3,
            eta: None,
            seed: 0,
            per_demo: false,
        },
    )
    .unwrap();
    let model = learn(&seg.segments, seg.clusters, &task, None, 3).unwrap();
    (Arc::new(model), trajs.into_iter().next().unwrap())
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(20)))
            .unwrap();
        stream.set_nodelay(true).unwrap();
        Self {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
        }
    }

    pub fn send(&mut self, line: &str) {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    pub fn input(&mut self, seq: u64, axes: [f64; 4]) {
        let msg = serde_json::json!({"type": "input", "seq": seq, "axes": axes});
        self.send(&msg.to_string());
    }

    /// Next raw line, or `None` at end of stream.
    pub fn line(&mut self) -> Option<String> {
        let mut s = String::new();
        match self.reader.read_line(&mut s) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(s),
        }
    }

    pub fn recv(&mut self) -> Option<ServerMessage> {
        self.line().map(|l| ServerMessage::parse(&l).unwrap())
    }

    /// Reads until the stream closes.
    pub fn drain(&mut self) -> Vec<ServerMessage> {
        std::iter::from_fn(|| self.recv()).collect()
    }
}
