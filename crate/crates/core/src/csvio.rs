//! CSV helpers shared by the path formats: `#`-prefixed comment lines carry
//! provenance before the header and status records after the last row.

use std::io::{Read, Write};

use crate::{Error, Result};

pub(crate) fn write_table<W: Write>(
    mut out: W,
    preamble: &[String],
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
    footer: &[String],
) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(header)?;
    for row in rows {
        // `Display` for f64 is the shortest representation that parses back bit-exactly.
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    drop(w);
    for line in footer {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Read a numeric table, checking the header. Returns rows and comment lines.
pub(crate) fn read_table<R: Read>(
    input: R,
    header: &[&str],
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found.len() < header.len() || found.iter().zip(header).any(|(f, h)| f != h) {
        return Err(Error::Invalid(format!(
            "expected CSV columns {header:?}, found {found:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .take(header.len())
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Invalid(format!("row {}: {f:?}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Invalid(format!("row {} has {} fields", i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((rows, comments))
}
