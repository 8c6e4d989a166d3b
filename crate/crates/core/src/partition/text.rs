//! Two-line partition file format:
//!
//! ```text
//! K 4
//! 0 1 0 2
//! ```
//!
//! The second line holds one label per element as a restricted growth
//! string, so every partition has exactly one spelling.

use std::fmt;

use super::Partition;

/// Parse failure with a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based starting columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

pub fn parse_partition(text: &str) -> Result<Partition, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header) = lines.next().ok_or_else(|| err(1, 1, "empty input"))?;
    let header_no = header_no + 1;
    let head = tokens(header);
    match head.as_slice() {
        [(_, "K"), (col, value)] => {
            let k: usize = value
                .parse()
                .map_err(|_| err(header_no, *col, format!("expected an integer, found `{value}`")))?;
            let (labels_no, labels_line) = match lines.next() {
                Some((n, l)) => (n + 1, l),
                None if k == 0 => return Ok(Partition::singletons(0)),
                None => return Err(err(header_no + 1, 1, "missing label line")),
            };
            let toks = tokens(labels_line);
            if toks.len() != k {
                let col = toks.get(k).map_or(labels_line.len() + 1, |t| t.0);
                return Err(err(
                    labels_no,
                    col,
                    format!("expected {k} labels, found {}", toks.len()),
                ));
            }
            let mut labels = Vec::with_capacity(k);
            let mut next_new = 0usize;
            for (col, tok) in toks {
                let label: usize = tok
                    .parse()
                    .map_err(|_| err(labels_no, col, format!("`{tok}` is not a label")))?;
                if label > next_new {
                    return Err(err(
                        labels_no,
                        col,
                        format!("label {label} skips {next_new}; labels must be a restricted growth string"),
                    ));
                }
                if label == next_new {
                    next_new += 1;
                }
                labels.push(label);
            }
            if let Some((n, l)) = lines.next() {
                return Err(err(n + 1, 1, format!("unexpected trailing content `{}`", l.trim())));
            }
            Ok(Partition::from_labels(&labels))
        }
        [(col, other), ..] if *other != "K" => Err(err(header_no, *col, "expected header `K <integer>`")),
        _ => Err(err(header_no, 1, "expected header `K <integer>`")),
    }
}
