//! Raw interaction logs and the TSV interchange format.
//!
//! The format is UTF-8 with the header `user_id<TAB>item_id<TAB>timestamp<TAB>category`.
//! The category column may be empty, timestamps are integer seconds and lines
//! starting with `#` are comments.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TSV_HEADER: &str = "user_id\titem_id\ttimestamp\tcategory";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Tsv,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub rows: Vec<RawInteraction>,
}

impl InteractionLog {
    pub fn new(rows: Vec<RawInteraction>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorts rows by `(user, timestamp)`, keeping the file order of ties.
    pub fn canonicalize(&mut self) {
        self.rows
            .sort_by(|a, b| a.user.cmp(&b.user).then(a.timestamp.cmp(&b.timestamp)));
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.user,
                r.item,
                r.timestamp,
                r.category.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_tsv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn load_interactions(path: &Path, format: LogFormat) -> Result<InteractionLog> {
    match format {
        LogFormat::Tsv => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            parse_tsv(BufReader::new(file))
        }
    }
}

pub fn parse_tsv<R: BufRead>(reader: R) -> Result<InteractionLog> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || (line.trim().is_empty() && seen_header) {
            continue;
        }
        if !seen_header {
            if line != TSV_HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("missing header, expected {TSV_HEADER:?}"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let timestamp = fields[2].trim().parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("timestamp {:?} is not an integer", fields[2]),
        })?;
        let category = fields
            .get(3)
            .filter(|c| !c.is_empty())
            .map(|c| c.to_string());
        rows.push(RawInteraction {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            timestamp,
            category,
        });
    }
    if !seen_header {
        return Err(Error::Parse {
            line: last_line.max(1),
            message: "missing header".into(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(InteractionLog { rows })
}
