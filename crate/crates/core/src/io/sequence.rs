//! JSON-lines skeleton streams: a header line, then one frame per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Convention, Frame, JointLayout, LayoutKind, SkeletonSequence};

pub const SEQUENCE_VERSION: u32 = 1;

/// Upper bound on joints accepted from a header.
const MAX_JOINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceHeader {
    pub version: u32,
    pub capture_rate: f64,
    pub joint_count: usize,
    pub layout: LayoutKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_names: Option<Vec<String>>,
}

impl SequenceHeader {
    pub fn for_sequence(seq: &SkeletonSequence) -> Self {
        Self::new(seq.layout(), seq.capture_rate())
    }

    pub fn new(layout: &JointLayout, capture_rate: f64) -> Self {
        SequenceHeader {
            version: SEQUENCE_VERSION,
            capture_rate,
            joint_count: layout.joint_count,
            layout: layout.kind,
            convention: layout.convention,
            root: (layout.root != 0).then_some(layout.root),
            joint_names: layout.names.clone(),
        }
    }

    pub fn joint_layout(&self) -> Result<JointLayout> {
        let layout = JointLayout {
            joint_count: self.joint_count,
            names: self.joint_names.clone(),
            kind: self.layout,
            convention: self.convention,
            root: self.root.unwrap_or(0),
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        if self.version != SEQUENCE_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: SEQUENCE_VERSION,
            });
        }
        if !(self.capture_rate.is_finite() && self.capture_rate > 0.0) {
            return Err(Error::Parse(format!("capture rate must be positive, got {}", self.capture_rate)));
        }
        if self.joint_count > MAX_JOINTS {
            return Err(Error::Parse(format!("joint count {} exceeds {MAX_JOINTS}", self.joint_count)));
        }
        self.joint_layout().map_err(|e| Error::Parse(format!("sequence header: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    frame: u64,
    coords: Vec<f64>,
}

/// Incremental reader, usable on a live stream.
pub struct SequenceReader<R> {
    lines: std::io::Lines<R>,
    header: SequenceHeader,
    line_no: usize,
    last: Option<u64>,
}

impl<R: BufRead> SequenceReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut line_no = 0;
        let header = loop {
            line_no += 1;
            match lines.next() {
                None => return Err(Error::Parse("sequence file has no header".into())),
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break serde_json::from_str::<SequenceHeader>(&l).map_err(|e| Error::Parse(format!("sequence header: {e}")))?;
                    }
                }
            }
        };
        header.validate()?;
        Ok(SequenceReader {
            lines,
            header,
            line_no,
            last: None,
        })
    }

    pub fn header(&self) -> &SequenceHeader {
        &self.header
    }

    /// Next frame, or `None` at end of input.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            self.line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            return self.parse_frame(&line).map(Some);
        }
    }

    fn parse_frame(&mut self, line: &str) -> Result<Frame> {
        let n = self.line_no;
        let f: FrameLine = serde_json::from_str(line).map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
        if self.last.is_some_and(|prev| f.frame <= prev) {
            return Err(Error::Parse(format!("line {n}: frame index {} is not increasing", f.frame)));
        }
        let expected = 3 * self.header.joint_count;
        if f.coords.len() != expected {
            return Err(Error::Parse(format!("line {n}: {} coordinates, expected {expected}", f.coords.len())));
        }
        if f.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("line {n}: non-finite coordinate")));
        }
        self.last = Some(f.frame);
        Ok(f.coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

impl<R: BufRead> Iterator for SequenceReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

pub fn read_sequence<R: BufRead>(reader: R) -> Result<SkeletonSequence> {
    let mut r = SequenceReader::new(reader)?;
    let layout = r.header().joint_layout()?;
    let cr = r.header().capture_rate;
    let frames = r.by_ref().collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::Parse("sequence file has no frames".into()));
    }
    SkeletonSequence::new(frames, cr, layout)
}

pub fn parse_sequence(text: &str) -> Result<SkeletonSequence> {
    read_sequence(text.as_bytes())
}

pub fn write_header<W: Write>(out: &mut W, header: &SequenceHeader) -> Result<()> {
    serde_json::to_writer(&mut *out, header).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_frame<W: Write>(out: &mut W, index: usize, frame: &Frame) -> Result<()> {
    let line = FrameLine {
        frame: index as u64,
        coords: frame.iter().flatten().copied().collect(),
    };
    serde_json::to_writer(&mut *out, &line).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_sequence<W: Write>(out: &mut W, seq: &SkeletonSequence) -> Result<()> {
    write_header(out, &SequenceHeader::for_sequence(seq))?;
    for (i, f) in seq.frames().iter().enumerate() {
        write_frame(out, i, f)?;
    }
    Ok(())
}

pub fn sequence_string(seq: &SkeletonSequence) -> String {
    let mut buf = Vec::new();
    write_sequence(&mut buf, seq).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
