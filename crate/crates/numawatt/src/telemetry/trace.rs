//! Line-delimited trace file format, version 1.
//!
//! The first line is a header `{version, topology:{sockets, cpu_map,
//! clk_tck}}`; every following line is one frame. Decoding is
//! bit-deterministic, so the same file always replays to the same frame
//! sequence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{TelemetryFrame, TelemetrySource, Topology};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub topology: Topology,
}

/// Streaming reader over a v1 trace.
pub struct TraceReader<R: BufRead> {
    input: R,
    topology: Topology,
    /// Index of the next frame (0-based), for error messages.
    next_index: usize,
    last_ts: Option<f64>,
    truncated: bool,
    buf: String,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut header_line = String::new();
        input
            .read_line(&mut header_line)
            .map_err(|e| Error::io("<trace>", e))?;
        if header_line.trim().is_empty() {
            return Err(Error::InvalidTrace("missing header line".into()));
        }
        let header: TraceHeader = serde_json::from_str(header_line.trim_end())
            .map_err(|e| Error::InvalidTrace(format!("bad header: {e}")))?;
        if header.version != TRACE_VERSION {
            return Err(Error::InvalidTrace(format!(
                "trace version {} unsupported; supported versions: {TRACE_VERSION}",
                header.version
            )));
        }
        header.topology.validate()?;
        Ok(TraceReader {
            input,
            topology: header.topology,
            next_index: 0,
            last_ts: None,
            truncated: false,
            buf: String::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Whether the trace ended on a truncated final frame.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Decodes the next frame, or returns `None` at end of trace.
    pub fn next_frame(&mut self) -> Result<Option<TelemetryFrame>> {
        self.buf.clear();
        let n = self
            .input
            .read_line(&mut self.buf)
            .map_err(|e| Error::io("<trace>", e))?;
        if n == 0 {
            return Ok(None);
        }
        let complete = self.buf.ends_with('\n');
        let line = self.buf.trim_end();
        if line.is_empty() {
            return self.next_frame();
        }
        let frame: TelemetryFrame = match serde_json::from_str(line) {
            Ok(f) => f,
            Err(_) if !complete => {
                // Partial final line: treat as end-of-trace, but remember it.
                self.truncated = true;
                return Ok(None);
            }
            Err(e) => {
                return Err(Error::TraceFormat {
                    frame: self.next_index,
                    message: e.to_string(),
                })
            }
        };
        frame.validate(&self.topology).map_err(|e| Error::TraceFormat {
            frame: self.next_index,
            message: e.to_string(),
        })?;
        if let Some(last) = self.last_ts {
            if frame.ts <= last {
                return Err(Error::TraceFormat {
                    frame: self.next_index,
                    message: format!(
                        "timestamp monotonicity violation: {} after {}",
                        frame.ts, last
                    ),
                });
            }
        }
        self.last_ts = Some(frame.ts);
        self.next_index += 1;
        Ok(Some(frame))
    }
}

/// Trace-backed telemetry source.
pub struct ReplaySource<R: BufRead> {
    reader: TraceReader<R>,
}

impl ReplaySource<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ReplaySource {
            reader: TraceReader::open(path)?,
        })
    }
}

impl<R: BufRead> ReplaySource<R> {
    pub fn new(input: R) -> Result<Self> {
        Ok(ReplaySource {
            reader: TraceReader::new(input)?,
        })
    }

    pub fn truncated(&self) -> bool {
        self.reader.truncated()
    }
}

impl<R: BufRead> TelemetrySource for ReplaySource<R> {
    fn topology(&self) -> &Topology {
        self.reader.topology()
    }

    fn next_frame(&mut self) -> Result<Option<TelemetryFrame>> {
        self.reader.next_frame()
    }
}

/// Streaming writer for v1 traces.
pub struct TraceWriter<W: Write> {
    out: W,
    frames: usize,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, topology: &Topology) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::new(BufWriter::new(file), topology)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, topology: &Topology) -> Result<Self> {
        topology.validate()?;
        let header = TraceHeader {
            version: TRACE_VERSION,
            topology: topology.clone(),
        };
        serde_json::to_writer(&mut out, &header).map_err(|e| Error::InvalidTrace(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        Ok(TraceWriter { out, frames: 0 })
    }

    pub fn write_frame(&mut self, frame: &TelemetryFrame) -> Result<()> {
        serde_json::to_writer(&mut self.out, frame)
            .map_err(|e| Error::InvalidTrace(e.to_string()))?;
        self.out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> usize {
        self.frames
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(self.out)
    }
}

/// Reads a whole trace into memory; convenient for tests and small files.
pub fn read_all(mut reader: impl Read) -> Result<(Topology, Vec<TelemetryFrame>)> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<trace>", e))?;
    let mut tr = TraceReader::new(std::io::Cursor::new(text))?;
    let mut frames = Vec::new();
    while let Some(f) = tr.next_frame()? {
        frames.push(f);
    }
    Ok((tr.topology.clone(), frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SocketId;
    use crate::telemetry::{RaplDomain, RaplReading};

    fn topo() -> Topology {
        Topology {
            sockets: 2,
            cpu_map: vec![0, 0, 1, 1],
            clk_tck: 100,
        }
    }

    fn frame(ts: f64) -> TelemetryFrame {
        TelemetryFrame {
            ts,
            rapl: vec![RaplReading {
                socket: SocketId(0),
                domain: RaplDomain::Package,
                uj: 100,
                max_uj: 1000,
            }],
            host_ticks: vec![0, 0],
            tasks: vec![],
            numa: vec![],
            per_cpu_ticks: None,
        }
    }

    fn roundtrip(frames: &[TelemetryFrame]) -> Vec<u8> {
        let mut w = TraceWriter::new(Vec::new(), &topo()).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn three_frames_then_eof() {
        let bytes = roundtrip(&[frame(0.0), frame(0.01), frame(0.02)]);
        let mut r = TraceReader::new(std::io::Cursor::new(bytes)).unwrap();
        let mut n = 0;
        while let Some(f) = r.next_frame().unwrap() {
            assert!((f.ts - n as f64 * 0.01).abs() < 1e-12);
            n += 1;
        }
        assert_eq!(n, 3);
        assert!(!r.truncated());
    }

    #[test]
    fn empty_trace_is_immediate_eof() {
        let bytes = roundtrip(&[]);
        let mut r = TraceReader::new(std::io::Cursor::new(bytes)).unwrap();
        assert!(r.next_frame().unwrap().is_none());
    }

    #[test]
    fn out_of_order_timestamp_is_an_error() {
        let bytes = roundtrip(&[frame(0.02), frame(0.01)]);
        let mut r = TraceReader::new(std::io::Cursor::new(bytes)).unwrap();
        r.next_frame().unwrap();
        let err = r.next_frame().unwrap_err();
        assert!(err.to_string().contains("monotonicity"));
    }

    #[test]
    fn truncated_final_frame_ends_with_warning() {
        let mut bytes = roundtrip(&[frame(0.0), frame(0.01)]);
        // Chop the trailing newline and half the final frame.
        bytes.truncate(bytes.len() - 30);
        let mut r = TraceReader::new(std::io::Cursor::new(bytes)).unwrap();
        assert!(r.next_frame().unwrap().is_some());
        assert!(r.next_frame().unwrap().is_none());
        assert!(r.truncated());
    }

    #[test]
    fn malformed_line_cites_frame_index() {
        let mut bytes = roundtrip(&[frame(0.0)]);
        bytes.extend_from_slice(b"{not json}\n");
        let mut r = TraceReader::new(std::io::Cursor::new(bytes)).unwrap();
        r.next_frame().unwrap();
        match r.next_frame().unwrap_err() {
            Error::TraceFormat { frame, .. } => assert_eq!(frame, 1),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = r#"{"version":9,"topology":{"sockets":1,"cpu_map":[0],"clk_tck":100}}"#;
        let err = match TraceReader::new(std::io::Cursor::new(format!("{text}\n"))) {
            Err(e) => e,
            Ok(_) => panic!("version mismatch accepted"),
        };
        assert!(err.to_string().contains("supported versions"));
    }

    #[test]
    fn replay_is_deterministic() {
        let bytes = roundtrip(&[frame(0.0), frame(0.01)]);
        let decode = |b: &[u8]| {
            let mut r = TraceReader::new(std::io::Cursor::new(b.to_vec())).unwrap();
            let mut out = vec![];
            while let Some(f) = r.next_frame().unwrap() {
                out.push(f);
            }
            out
        };
        assert_eq!(decode(&bytes), decode(&bytes));
    }
}
