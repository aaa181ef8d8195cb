use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Label, Month};
use crate::error::Result;

/// One manifest row: `sample_id,label,month`. Lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub label: Label,
    pub month: Month,
}

pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(writer: W, entries: &[ManifestEntry]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for e in entries {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let text = "sample_id,label,month\na1,goodware,2019-01\nb2, Emotet ,2019-02\n";
        let rows = read_manifest(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].label.is_goodware());
        assert_eq!(rows[1].label.as_str(), "Emotet");
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        assert_eq!(read_manifest(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn bad_month_rejected() {
        assert!(read_manifest("sample_id,label,month\na,x,2019-13\n".as_bytes()).is_err());
    }
}
