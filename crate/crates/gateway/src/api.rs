//! Operator API wire protocol: one JSON object per line over TCP.
//!
//! Requests carry an `op` tag:
//!
//! | request | response |
//! |---|---|
//! | `{"op":"get_state"}` | `{"type":"state","state":WorldSnapshot}` |
//! | `{"op":"override","directive":OverrideDirective}` | `{"type":"verdict",...}` or `{"type":"rejected",...}` |
//! | `{"op":"stream","from_seq":N}` | `{"type":"event","event":ApiEvent}` lines, then `{"type":"end","last_seq":M}` |
//!
//! Failures are `{"type":"error","code":...,"message":...}` with code
//! `bad_request` or `unavailable`. A `stream` request turns the connection
//! into a push channel: every event with `seq > from_seq` is sent in order,
//! live events follow as the run advances, and `end` closes the stream once
//! the run has finished.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};

use mcs_core::engine::{DecisionStatus, LogEntry, LogEvent, OverrideDirective, WorldSnapshot};
use mcs_core::SimTime;

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    GetState,
    Stream {
        #[serde(default)]
        from_seq: u64,
    },
    Override {
        directive: OverrideDirective,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    State { state: WorldSnapshot },
    Event { event: ApiEvent },
    End { last_seq: u64 },
    Verdict { decision_id: String, status: DecisionStatus },
    Rejected { decision_id: String, reason: String },
    Error { code: String, message: String },
}

/// One entry of the operator stream. `seq` counts stream events from 1;
/// `log_seq` points back into the engine log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEvent {
    pub seq: u64,
    pub log_seq: u64,
    pub time: SimTime,
    pub event: LogEvent,
}

/// Whether a log entry is operator-visible. Transport chatter, per-reading
/// records, frames and the oracle snapshots used for scoring stay internal.
pub fn projected(event: &LogEvent) -> bool {
    matches!(
        event,
        LogEvent::FailureInject { .. }
            | LogEvent::Alert { .. }
            | LogEvent::IncidentOpened { .. }
            | LogEvent::DecisionIssued { .. }
            | LogEvent::DecisionResolved { .. }
            | LogEvent::WindowExpired { .. }
            | LogEvent::OverrideRejected { .. }
            | LogEvent::Forecast { .. }
            | LogEvent::Dispatch { .. }
            | LogEvent::DispatchArrival { .. }
            | LogEvent::IncidentResolved { .. }
            | LogEvent::ScenarioEnd { .. }
    )
}

/// The stream a client would receive for a complete log.
pub fn project_log(log: &[LogEntry]) -> Vec<ApiEvent> {
    log.iter()
        .filter(|e| projected(&e.event))
        .enumerate()
        .map(|(i, e)| ApiEvent { seq: i as u64 + 1, log_seq: e.seq, time: e.time, event: e.event.clone() })
        .collect()
}

/// Blocking line-protocol client.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, GatewayError> {
        let writer = TcpStream::connect(addr)?;
        Ok(Client { reader: BufReader::new(writer.try_clone()?), writer })
    }

    pub fn send(&mut self, req: &Request) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(req)?;
        line.push(b'\n');
        self.writer.write_all(&line)?;
        Ok(())
    }

    /// Next response line; `None` when the server closed the connection.
    pub fn recv(&mut self) -> Result<Option<Response>, GatewayError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&line)?))
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, GatewayError> {
        self.send(req)?;
        self.recv()?.ok_or(GatewayError::Unavailable)
    }

    pub fn get_state(&mut self) -> Result<WorldSnapshot, GatewayError> {
        match self.call(&Request::GetState)? {
            Response::State { state } => Ok(state),
            other => Err(GatewayError::Input(format!("unexpected response {other:?}"))),
        }
    }

    pub fn override_decision(&mut self, directive: OverrideDirective) -> Result<Response, GatewayError> {
        self.call(&Request::Override { directive })
    }

    /// Subscribes; read events with [`Client::next_event`].
    pub fn stream(mut self, from_seq: u64) -> Result<EventStream, GatewayError> {
        self.send(&Request::Stream { from_seq })?;
        Ok(EventStream { client: self, ended: false })
    }
}

pub struct EventStream {
    client: Client,
    ended: bool,
}

impl EventStream {
    /// Next event, or `None` once the run ended and the stream drained.
    pub fn next_event(&mut self) -> Result<Option<ApiEvent>, GatewayError> {
        if self.ended {
            return Ok(None);
        }
        match self.client.recv()? {
            Some(Response::Event { event }) => Ok(Some(event)),
            Some(Response::End { .. }) | None => {
                self.ended = true;
                Ok(None)
            }
            Some(other) => Err(GatewayError::Input(format!("unexpected response {other:?}"))),
        }
    }

    /// Reads to the end of the run.
    pub fn collect_all(mut self) -> Result<Vec<ApiEvent>, GatewayError> {
        let mut out = Vec::new();
        while let Some(e) = self.next_event()? {
            out.push(e);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let r: Request = serde_json::from_str(r#"{"op":"stream","from_seq":4}"#).unwrap();
        assert_eq!(r, Request::Stream { from_seq: 4 });
        let r: Request = serde_json::from_str(r#"{"op":"stream"}"#).unwrap();
        assert_eq!(r, Request::Stream { from_seq: 0 });
        assert_eq!(serde_json::to_string(&Request::GetState).unwrap(), r#"{"op":"get_state"}"#);
        assert!(serde_json::from_str::<Request>(r#"{"op":"reboot"}"#).is_err());
    }

    #[test]
    fn projection_numbers_from_one_and_skips_internal_events() {
        let log = vec![
            LogEntry { seq: 0, time: SimTime(0), event: LogEvent::WindowExpired { decision_id: "a".into() } },
            LogEntry {
                seq: 1,
                time: SimTime(5),
                event: LogEvent::Frame { frame_id: 1, incidents: vec![] },
            },
            LogEntry { seq: 2, time: SimTime(9), event: LogEvent::WindowExpired { decision_id: "b".into() } },
        ];
        let p = project_log(&log);
        assert_eq!(p.iter().map(|e| (e.seq, e.log_seq)).collect::<Vec<_>>(), vec![(1, 0), (2, 2)]);
    }
}
