//! Records CSV: the pulse-by-pulse exchange format.
//!
//! ```text
//! shot,m1,m2
//! 0,2,1
//! 1,0,0
//! ```
//!
//! One row per pulse, unsigned decimal integers, UTF-8, LF line endings.
//! Shot indices start at 0 and strictly increase. The reader also tolerates
//! CRLF line endings and a missing final newline; the writer never emits them.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::montecarlo::{Provenance, PulseRecord, PulseRecordSet};
use crate::{Error, Result};

pub const HEADER: &str = "shot,m1,m2";

pub fn write_records<W: Write>(set: &PulseRecordSet, mut out: W) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in set.iter() {
        writeln!(out, "{},{},{}", r.shot, r.m1, r.m2)?;
    }
    out.flush()
}

pub fn records_to_string(set: &PulseRecordSet) -> String {
    let mut buf = Vec::with_capacity(16 * (set.len() + 1));
    write_records(set, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("records CSV is ASCII")
}

fn unsigned<T: std::str::FromStr>(field: &str) -> Option<T> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    field.parse().ok()
}

/// Parses records CSV text. `source` names the input in error messages and
/// in the resulting provenance.
pub fn parse_records(text: &str, source: &str) -> Result<PulseRecordSet> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    match lines.next() {
        Some(HEADER) => {}
        Some(other) => {
            return Err(Error::parse(
                source,
                1,
                format!("expected header {HEADER:?}, found {other:?}"),
            ))
        }
        None => return Err(Error::parse(source, 1, "missing header")),
    }
    if body == HEADER {
        return PulseRecordSet::new(
            Vec::new(),
            Provenance::File {
                source: source.into(),
            },
        );
    }

    let mut records = Vec::new();
    let mut prev: Option<u64> = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let mut fields = line.split(',');
        let (Some(a), Some(b), Some(c), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 3 fields, found {line:?}"),
            ));
        };
        let shot: u64 = unsigned(a)
            .ok_or_else(|| Error::parse(source, lineno, format!("invalid shot index {a:?}")))?;
        let m1: u32 = unsigned(b)
            .ok_or_else(|| Error::parse(source, lineno, format!("invalid count m1 {b:?}")))?;
        let m2: u32 = unsigned(c)
            .ok_or_else(|| Error::parse(source, lineno, format!("invalid count m2 {c:?}")))?;
        match prev {
            None if shot != 0 => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("first shot index must be 0, found {shot}"),
                ))
            }
            Some(p) if shot <= p => {
                return Err(Error::parse(
                    source,
                    lineno,
                    format!("shot index {shot} does not increase past {p}"),
                ))
            }
            _ => {}
        }
        prev = Some(shot);
        records.push(PulseRecord { shot, m1, m2 });
    }
    PulseRecordSet::new(
        records,
        Provenance::File {
            source: source.into(),
        },
    )
}

pub fn read_records(path: &Path) -> Result<PulseRecordSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_records(&text, &path.display().to_string())
}
