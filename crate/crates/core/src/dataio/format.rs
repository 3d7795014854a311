//! Newline-delimited JSON dataset files.
//!
//! Line 1 is the header object; every further line is one record
//! `{"s": [..], "a": [..], "r": x, "s2": [..], "done": 0|1}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ParseErrorKind, Result};
use crate::oorb::Transition;
use crate::orchestrator::References;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub env_name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub n_records: usize,
    pub behavior_tag: String,
    pub generator_seed: u64,
    /// Behavior tags of the concatenated parts, in file order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub records: Vec<Transition>,
}

impl DatasetFile {
    pub fn check(&self) -> Result<()> {
        let h = &self.header;
        if h.n_records != self.records.len() {
            return Err(Error::DimensionMismatch {
                context: "record count",
                expected: h.n_records,
                actual: self.records.len(),
            });
        }
        for t in &self.records {
            for (context, expected, actual) in [
                ("record state", h.obs_dim, t.state.len()),
                ("record action", h.act_dim, t.action.len()),
                ("record next state", h.obs_dim, t.next_state.len()),
            ] {
                if expected != actual {
                    return Err(Error::DimensionMismatch {
                        context,
                        expected,
                        actual,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    s: &'a [f64],
    a: &'a [f64],
    r: f64,
    s2: &'a [f64],
    done: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    s2: Vec<f64>,
    done: Value,
}

pub fn write_dataset(path: &Path, dataset: &DatasetFile) -> Result<()> {
    dataset.check()?;
    let io = |e| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    let json = |e: serde_json::Error| Error::io(path, e.into());
    serde_json::to_writer(&mut out, &dataset.header).map_err(json)?;
    out.write_all(b"\n").map_err(io)?;
    for t in &dataset.records {
        let rec = RecordOut {
            s: &t.state,
            a: &t.action,
            r: t.reward,
            s2: &t.next_state,
            done: t.terminal as u8,
        };
        serde_json::to_writer(&mut out, &rec).map_err(json)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn parse_header(line: &str) -> std::result::Result<DatasetHeader, ParseErrorKind> {
    let value: Value = serde_json::from_str(line).map_err(|e| ParseErrorKind::Malformed(e.to_string()))?;
    // check the version before the remaining fields, whose layout may differ between versions
    let found = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| ParseErrorKind::Malformed("header lacks an integer format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(ParseErrorKind::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| ParseErrorKind::Malformed(e.to_string()))
}

fn parse_record(line: &str, h: &DatasetHeader) -> std::result::Result<Transition, ParseErrorKind> {
    let rec: RecordIn = serde_json::from_str(line).map_err(|e| ParseErrorKind::Malformed(e.to_string()))?;
    for (field, expected, actual) in [
        ("s", h.obs_dim, rec.s.len()),
        ("a", h.act_dim, rec.a.len()),
        ("s2", h.obs_dim, rec.s2.len()),
    ] {
        if expected != actual {
            return Err(ParseErrorKind::Dimension {
                field,
                expected,
                actual,
            });
        }
    }
    let terminal = match rec.done.as_u64() {
        Some(0) => false,
        Some(1) => true,
        _ => return Err(ParseErrorKind::BadDoneFlag(rec.done.to_string())),
    };
    Ok(Transition {
        state: rec.s,
        action: rec.a,
        reward: rec.r,
        next_state: rec.s2,
        terminal,
    })
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, kind| Error::Parse {
        path: path.to_path_buf(),
        line,
        kind,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        None => return Err(parse(1, ParseErrorKind::Malformed("empty file".into()))),
        Some(l) => parse_header(&l.map_err(|e| Error::io(path, e))?).map_err(|k| parse(1, k))?,
    };
    let mut records = Vec::with_capacity(header.n_records.min(1 << 20));
    let mut line_no = 1;
    for line in lines {
        line_no += 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if records.len() == header.n_records {
            return Err(parse(
                line_no,
                ParseErrorKind::TrailingRecords {
                    declared: header.n_records,
                },
            ));
        }
        records.push(parse_record(&line, &header).map_err(|k| parse(line_no, k))?);
    }
    if records.len() < header.n_records {
        // the first missing record would have been on this line
        return Err(parse(
            records.len() + 2,
            ParseErrorKind::Truncated {
                declared: header.n_records,
                found: records.len(),
            },
        ));
    }
    Ok(DatasetFile { header, records })
}

/// Reference returns as stored next to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub env: String,
    pub episodes: usize,
    pub seed: u64,
    pub random: f64,
    pub expert: f64,
}

impl ReferenceFile {
    pub fn references(&self) -> References {
        References {
            random: self.random,
            expert: self.expert,
        }
    }
}

pub fn write_references(path: &Path, refs: &ReferenceFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(refs).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_references(path: &Path) -> Result<ReferenceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        kind: ParseErrorKind::Malformed(e.to_string()),
    })
}
