use std::fmt;

use serde::{Deserialize, Serialize};

use super::EngineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Tx,
    Rx,
    /// Taken off the interface by a packet-capture program.
    Capture,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Tx => "tx",
            Direction::Rx => "rx",
            Direction::Capture => "cap",
        })
    }
}

/// What a traced frame is, as far as the handshake report cares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameTag {
    Syn,
    SynAck,
    Ack,
    Data,
    Arp,
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameTag::Syn => "SYN",
            FrameTag::SynAck => "SYN-ACK",
            FrameTag::Ack => "ACK",
            FrameTag::Data => "DATA",
            FrameTag::Arp => "ARP",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time_ns: u64,
    pub node: String,
    pub iface: String,
    pub dir: Direction,
    pub flow: Option<u32>,
    pub tag: FrameTag,
    pub summary: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flow = self.flow.map_or_else(|| "-".to_string(), |id| id.to_string());
        write!(
            f,
            "{:.9} {} {} {} {} {} {}",
            self.time_ns as f64 / 1e9,
            self.node,
            self.iface,
            self.dir,
            flow,
            self.tag,
            self.summary
        )
    }
}

/// Interfaces a flow's first frame crossed in each direction, server side
/// excluded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub uplink: Vec<String>,
    pub downlink: Vec<String>,
}

impl fmt::Display for PathReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "uplink:   {}", self.uplink.join(" -> "))?;
        write!(f, "downlink: {}", self.downlink.join(" -> "))
    }
}

pub(crate) fn path_of(trace: &[TraceEntry], flow: u32, tag: FrameTag, server: &str) -> Vec<String> {
    let mut path: Vec<String> = Vec::new();
    for e in trace.iter().filter(|e| e.flow == Some(flow) && e.tag == tag && e.node != server) {
        if path.last() != Some(&e.iface) {
            path.push(e.iface.clone());
        }
    }
    path
}

pub(crate) fn handshake_report(trace: &[TraceEntry], flow: u32, server: &str) -> Result<PathReport, EngineError> {
    if !trace.iter().any(|e| e.flow == Some(flow)) {
        return Err(EngineError::FlowNotFound(flow));
    }
    let uplink = path_of(trace, flow, FrameTag::Syn, server);
    let downlink = path_of(trace, flow, FrameTag::SynAck, server);
    let delivered = trace
        .iter()
        .any(|e| e.flow == Some(flow) && e.tag == FrameTag::Ack && e.node == server && e.dir == Direction::Rx);
    if uplink.is_empty() || downlink.is_empty() || !delivered {
        return Err(EngineError::FlowIncomplete(flow));
    }
    Ok(PathReport { uplink, downlink })
}
