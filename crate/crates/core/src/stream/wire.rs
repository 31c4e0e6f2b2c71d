//! Line-oriented text encoding of a device stream.
//!
//! ```text
//! H <uid> <dd/mm/yyyy:hh:mm[:ss]> <epoch>
//! S <tranVid> <recVid>[,<recVid>...]
//! G <x>
//! E
//! ```

use std::fmt;

use thiserror::Error;

use crate::model::{Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    MalformedHeader,
    MalformedSample,
    MalformedGap,
    UnknownRecordTag,
    TruncatedStream,
    TrailingGarbage,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::MalformedHeader => "malformed header",
            ParseErrorKind::MalformedSample => "malformed sample",
            ParseErrorKind::MalformedGap => "malformed gap",
            ParseErrorKind::UnknownRecordTag => "unknown record tag",
            ParseErrorKind::TruncatedStream => "truncated stream",
            ParseErrorKind::TrailingGarbage => "trailing garbage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset of the start of the offending line.
    pub offset: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamRecord {
    Header { uid: UserId, start: Timestamp, epoch: u64 },
    Sample { tran_vid: u64, rec_vids: Vec<u64> },
    Gap { x: u64 },
    End,
}

impl fmt::Display for StreamRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamRecord::Header { uid, start, epoch } => write!(f, "H {uid} {start} {epoch}"),
            StreamRecord::Sample { tran_vid, rec_vids } => {
                write!(f, "S {tran_vid} ")?;
                for (i, v) in rec_vids.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            StreamRecord::Gap { x } => write!(f, "G {x}"),
            StreamRecord::End => f.write_str("E"),
        }
    }
}

/// Encodes records one per line.
pub fn encode(records: &[StreamRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

fn err(kind: ParseErrorKind, offset: usize, detail: impl Into<String>) -> ParseError {
    ParseError {
        kind,
        offset,
        detail: detail.into(),
    }
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a [u8]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.bytes[start..];
        let (line, step) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += step;
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        Some((start, line))
    }
}

fn parse_line(offset: usize, line: &[u8]) -> Result<StreamRecord, ParseError> {
    let text =
        std::str::from_utf8(line).map_err(|_| err(ParseErrorKind::UnknownRecordTag, offset, "line is not UTF-8"))?;
    let mut fields = text.split(' ');
    let tag = fields.next().unwrap_or("");
    let fields: Vec<&str> = fields.collect();
    match tag {
        "H" => {
            let bad = |d: String| err(ParseErrorKind::MalformedHeader, offset, d);
            let [uid, start, epoch] = fields[..] else {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            };
            let uid: UserId = uid.parse().map_err(|e| bad(format!("{e}")))?;
            let start: Timestamp = start.parse().map_err(|e| bad(format!("{e}")))?;
            let epoch: u64 = epoch.parse().map_err(|_| bad(format!("bad epoch {epoch:?}")))?;
            Ok(StreamRecord::Header { uid, start, epoch })
        }
        "S" => {
            let bad = |d: String| err(ParseErrorKind::MalformedSample, offset, d);
            let [tran, recs] = fields[..] else {
                return Err(bad(format!("expected 2 fields, found {}", fields.len())));
            };
            let tran_vid: u64 = tran.parse().map_err(|_| bad(format!("bad transmitter id {tran:?}")))?;
            let rec_vids = recs
                .split(',')
                .map(|v| v.parse::<u64>().map_err(|_| bad(format!("bad receiver id {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(StreamRecord::Sample { tran_vid, rec_vids })
        }
        "G" => {
            let bad = |d: String| err(ParseErrorKind::MalformedGap, offset, d);
            let [x] = fields[..] else {
                return Err(bad(format!("expected 1 field, found {}", fields.len())));
            };
            match x.parse::<u64>() {
                Ok(x) if x >= 1 => Ok(StreamRecord::Gap { x }),
                _ => Err(bad(format!("gap must be a positive integer, got {x:?}"))),
            }
        }
        "E" if fields.is_empty() => Ok(StreamRecord::End),
        "E" => Err(err(
            ParseErrorKind::UnknownRecordTag,
            offset,
            "end record takes no fields",
        )),
        other => Err(err(
            ParseErrorKind::UnknownRecordTag,
            offset,
            format!("unknown tag {:?}", other.chars().take(16).collect::<String>()),
        )),
    }
}

/// Parses exactly one stream; anything after its end record other than
/// blank lines is rejected.
pub fn parse_stream(bytes: &[u8]) -> Result<Vec<StreamRecord>, ParseError> {
    let mut lines = Lines { bytes, pos: 0 };
    let (records, _) = parse_one(&mut lines)?
        .ok_or_else(|| err(ParseErrorKind::MalformedHeader, 0, "empty input, expected a header"))?;
    for (offset, line) in lines {
        if !line.iter().all(u8::is_ascii_whitespace) {
            return Err(err(ParseErrorKind::TrailingGarbage, offset, "data after end record"));
        }
    }
    Ok(records)
}

/// Parses one stream from the current position. Returns `None` at end of
/// input (blank lines are skipped before the header).
fn parse_one(lines: &mut Lines<'_>) -> Result<Option<(Vec<StreamRecord>, usize)>, ParseError> {
    let header = loop {
        let Some((offset, line)) = lines.next() else {
            return Ok(None);
        };
        if line.is_empty() {
            continue;
        }
        match parse_line(offset, line) {
            Ok(h @ StreamRecord::Header { .. }) => break (offset, h),
            Ok(_) => {
                return Err(err(
                    ParseErrorKind::MalformedHeader,
                    offset,
                    "stream does not begin with a header",
                ))
            }
            Err(e) if line.first() == Some(&b'H') => return Err(e),
            Err(e) if e.kind == ParseErrorKind::UnknownRecordTag => return Err(e),
            Err(_) => {
                return Err(err(
                    ParseErrorKind::MalformedHeader,
                    offset,
                    "stream does not begin with a header",
                ))
            }
        }
    };
    let start = header.0;
    let mut records = vec![header.1];
    for (offset, line) in lines.by_ref() {
        match parse_line(offset, line)? {
            StreamRecord::Header { .. } => {
                return Err(err(
                    ParseErrorKind::TruncatedStream,
                    offset,
                    "header before end of previous stream",
                ))
            }
            StreamRecord::End => {
                records.push(StreamRecord::End);
                return Ok(Some((records, start)));
            }
            r => records.push(r),
        }
    }
    Err(err(
        ParseErrorKind::TruncatedStream,
        bytes_len(lines),
        "missing end record",
    ))
}

fn bytes_len(lines: &Lines<'_>) -> usize {
    lines.bytes.len()
}

/// Parses a file holding any number of streams. A malformed stream yields an
/// error and parsing resumes at the next header line.
pub fn parse_streams(bytes: &[u8]) -> Vec<Result<Vec<StreamRecord>, ParseError>> {
    let mut out = Vec::new();
    let mut lines = Lines { bytes, pos: 0 };
    loop {
        match parse_one(&mut lines) {
            Ok(Some((records, _))) => out.push(Ok(records)),
            Ok(None) => break,
            Err(e) => {
                out.push(Err(e.clone()));
                // resynchronize on the next header line after the error
                lines.pos = if e.kind == ParseErrorKind::TruncatedStream && bytes[e.offset..].starts_with(b"H ") {
                    e.offset
                } else {
                    resync_point(bytes, e.offset)
                };
            }
        }
    }
    out
}

fn resync_point(bytes: &[u8], from: usize) -> usize {
    let mut lines = Lines { bytes, pos: from };
    lines.next();
    lines
        .find(|(_, line)| line.starts_with(b"H "))
        .map_or(bytes.len(), |(offset, _)| offset)
}
