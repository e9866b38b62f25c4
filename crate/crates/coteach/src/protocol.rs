//! Newline-delimited JSON messages exchanged with an operator console.
//!
//! Client to server: `hello`, `input`, `end`. Server to client: `state`,
//! `instruction`, `event`, `metrics`, `error`. Every message is one JSON
//! object on one line with a `type` field.

use anyhow::{bail, Context, Result};
use coteach_core::engine::{Instruction, InstructionStyle, Metrics};
use coteach_core::sim::{EventKind, SimEvent, SimState};
use coteach_core::Vec4;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        style: InstructionStyle,
        /// Overrides the server-assigned session seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Input {
        seq: u64,
        axes: Vec4,
    },
    End,
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self> {
        let msg: Self = serde_json::from_str(line).context("malformed message")?;
        if let ClientMessage::Input { axes, .. } = &msg {
            if !axes
                .iter()
                .all(|a| a.is_finite() && (-1.0..=1.0).contains(a))
            {
                bail!("axes must lie in [-1, 1], got {axes:?}");
            }
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    /// Sequence number of the last input applied, 0 before any input.
    pub seq: u64,
    pub t: f64,
    pub q: Vec4,
    pub v: Vec4,
    pub ee: Vec4,
    pub bucket_load: f64,
    pub truck_fill: f64,
}

impl StateMessage {
    pub fn new(seq: u64, sim: &SimState) -> Self {
        Self {
            seq,
            t: sim.joint.t,
            q: sim.joint.q,
            v: sim.joint.v,
            ee: sim.pose.to_array(),
            bucket_load: sim.bucket_load,
            truck_fill: sim.truck_fill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMessage {
    pub kind: EventKind,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_height: Option<f64>,
}

impl From<&SimEvent> for EventMessage {
    fn from(e: &SimEvent) -> Self {
        Self {
            kind: e.kind,
            t: e.t,
            dump_height: e.dump_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    State(StateMessage),
    Instruction(Instruction),
    Event(EventMessage),
    Metrics(Metrics),
    Error { msg: String },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).context("malformed server message")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"hello","style":"circles"}"#).unwrap(),
            ClientMessage::Hello {
                style: InstructionStyle::Circles,
                seed: None
            }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"input","seq":3,"axes":[0,1,-1,0.5]}"#).unwrap(),
            ClientMessage::Input {
                seq: 3,
                axes: [0.0, 1.0, -1.0, 0.5]
            }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"end"}"#).unwrap(),
            ClientMessage::End
        );
    }

    #[test]
    fn bad_client_messages() {
        for line in [
            r#"{"type":"input","seq":1,"axes":[0,0,0]}"#,
            r#"{"type":"input","seq":1,"axes":[0,0,0,2]}"#,
            r#"{"type":"hello","style":"stars"}"#,
            r#"{"type":"launch"}"#,
            "not json",
        ] {
            assert!(ClientMessage::parse(line).is_err(), "{line}");
        }
    }

    #[test]
    fn server_messages_are_tagged_lines() {
        let line = ServerMessage::Error { msg: "x".into() }.to_line();
        assert_eq!(line, "{\"type\":\"error\",\"msg\":\"x\"}\n");
        let m = ServerMessage::Metrics(Metrics::default()).to_line();
        assert!(
            m.starts_with(r#"{"type":"metrics","cycle_times":[]"#),
            "{m}"
        );
        assert_eq!(
            ServerMessage::parse(&m).unwrap(),
            ServerMessage::Metrics(Metrics::default())
        );
    }
}
