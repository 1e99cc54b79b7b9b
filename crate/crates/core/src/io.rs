//! Shared text-format helpers: number formatting and the commented CSV
//! layout used by traces and data sets.
//!
//! Layout:
//!
//! ```text
//! # unit=us
//! # key=value          (optional further metadata)
//! abscissa,value
//! 1.0,0.99
//! ```

use crate::error::{Error, Result};

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text of `x` rounded to 12 significant digits; scientific
/// notation outside `[1e-6, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    let a = r.abs();
    if a == 0.0 || !a.is_finite() || (1e-6..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Parsed commented CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CommentedCsv {
    /// `key=value` pairs from `#` lines, in file order.
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    /// Each row with the 1-based source line it came from.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl CommentedCsv {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn parse_commented_csv(text: &str, source_name: &str) -> Result<CommentedCsv> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut meta = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        match &header {
            None => {
                header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            }
            Some(h) => {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != h.len() {
                    return Err(err(
                        lineno,
                        format!("expected {} columns, found {}", h.len(), fields.len()),
                    ));
                }
                let values = fields
                    .iter()
                    .map(|f| {
                        f.parse::<f64>()
                            .map_err(|_| err(lineno, format!("`{f}` is not a number")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push((lineno, values));
            }
        }
    }
    let header = header.ok_or_else(|| err(1, "empty input: no header line".into()))?;
    Ok(CommentedCsv { meta, header, rows })
}

pub fn write_commented_csv(meta: &[(String, String)], header: &[&str], columns: &[&[f64]]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| fmt_num(c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
