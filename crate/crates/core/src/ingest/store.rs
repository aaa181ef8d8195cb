//! Versioned on-disk report store.
//!
//! JSON Lines: the first line is a header object
//! `{"format":"apifeat-reports","version":1,"count":N}`, followed by one
//! serialized [`Report`] per line. Readers reject other formats and any
//! major version they do not know.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::Report;
use crate::error::{Error, Result};

pub const REPORTS_FORMAT: &str = "apifeat-reports";
pub const REPORTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    count: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

pub fn write_reports<W: Write>(w: W, reports: &[Report]) -> Result<()> {
    write_reports_with_meta(w, reports, &BTreeMap::new())
}

/// Like [`write_reports`], with free-form metadata in the header line.
pub fn write_reports_with_meta<W: Write>(
    mut w: W,
    reports: &[Report],
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let header = Header {
        format: REPORTS_FORMAT.into(),
        version: REPORTS_VERSION,
        count: reports.len(),
        meta: meta.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::format(e.to_string()))?;
    w.write_all(b"\n")?;
    for r in reports {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports<R: Read>(r: R) -> Result<Vec<Report>> {
    let mut lines = BufReader::new(r).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format("empty report store"))??;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| Error::format(format!("bad header: {e}")))?;
    if header.format != REPORTS_FORMAT || header.version != REPORTS_VERSION {
        return Err(Error::format(format!(
            "unsupported store {} v{}",
            header.format, header.version
        )));
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("record {}: {e}", i + 1)))?,
        );
    }
    if out.len() != header.count {
        return Err(Error::format(format!(
            "header promises {} records, found {}",
            header.count,
            out.len()
        )));
    }
    Ok(out)
}
