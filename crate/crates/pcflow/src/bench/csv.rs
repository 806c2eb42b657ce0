//! CSV emission and parsing for the benchmark harness.
//!
//! Files start with a metadata header block of `# key: value` lines, then a
//! column-name row, then data rows. The run schema is
//! `step,wall_ms,energy,rhs_evals,accepted,rejected,test_acc`: training rows
//! leave `test_acc` empty, periodic accuracy rows carry only `step` and
//! `test_acc`. The theory schema is
//! `t_max,step,theory,numerical,gap,test_acc` with every column filled.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{RunRow, SweepCell, TheoryRow};

pub const RUN_COLUMNS: &str = "step,wall_ms,energy,rhs_evals,accepted,rejected,test_acc";
pub const SWEEP_COLUMNS: &str = "solver,depth,dt,t_max,n_ok,n_failed,mean_acc,sd_acc";
pub const THEORY_COLUMNS: &str = "t_max,step,theory,numerical,gap,test_acc";

/// Writes `contents` to `path` atomically (temp file + rename in-place).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    tmp_name.push_str(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn header(mode: &str, meta: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# pcflow {mode}\n"));
    for (key, value) in meta {
        out.push_str(&format!("# {key}: {value}\n"));
    }
    out
}

pub fn render_run_csv(meta: &[(String, String)], rows: &[RunRow]) -> String {
    let mut out = header("run", meta);
    out.push_str(RUN_COLUMNS);
    out.push('\n');
    for row in rows {
        match row {
            RunRow::Train(r) => out.push_str(&format!(
                "{},{:.6},{},{},{},{},\n",
                r.step, r.wall_ms, r.energy, r.rhs_evaluations, r.accepted, r.rejected
            )),
            RunRow::Accuracy { step, accuracy } => {
                out.push_str(&format!("{step},,,,,,{accuracy}\n"))
            }
        }
    }
    out
}

pub fn render_sweep_csv(meta: &[(String, String)], cells: &[SweepCell]) -> String {
    let mut out = header("sweep", meta);
    out.push_str(SWEEP_COLUMNS);
    out.push('\n');
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell.solver,
            cell.depth,
            cell.dt,
            cell.t_max,
            cell.accuracies.len(),
            cell.failures.len(),
            cell.mean_accuracy(),
            cell.sd_accuracy(),
        ));
    }
    out
}

pub fn render_theory_csv(meta: &[(String, String)], rows: &[TheoryRow]) -> String {
    let mut out = header("theory", meta);
    out.push_str(THEORY_COLUMNS);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t_max, r.step, r.theoretical, r.numerical, r.gap, r.test_accuracy
        ));
    }
    out
}

/// A parsed CSV produced by this tool. Cells are kept as raw strings; use
/// [`ParsedCsv::cell_f64`] for numeric access.
#[derive(Clone, Debug, Default)]
pub struct ParsedCsv {
    pub mode: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedCsv {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let idx = self.column_index(column)?;
        let cell = self.rows[row][idx].as_str();
        (!cell.is_empty()).then_some(cell)
    }

    pub fn cell_f64(&self, row: usize, column: &str) -> Option<f64> {
        self.cell(row, column)?.parse().ok()
    }
}

/// Parses a CSV written by this tool, reporting malformed lines with their
/// line numbers.
pub fn parse_csv(path: &Path) -> Result<ParsedCsv> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let display = path.display().to_string();
    let mut parsed = ParsedCsv::default();
    let mut saw_columns = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if idx == 0 {
                let mut parts = comment.split_whitespace();
                if parts.next() != Some("pcflow") {
                    return Err(Error::CsvFormat {
                        path: display,
                        line: lineno,
                        details: "first line must be `# pcflow <mode>`".into(),
                    });
                }
                parsed.mode = parts.next().unwrap_or("").to_string();
                if parsed.mode.is_empty() {
                    return Err(Error::CsvFormat {
                        path: display,
                        line: lineno,
                        details: "missing mode on the `# pcflow` line".into(),
                    });
                }
            } else if let Some((key, value)) = comment.split_once(':') {
                parsed
                    .meta
                    .push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        if parsed.mode.is_empty() {
            return Err(Error::CsvFormat {
                path: display,
                line: lineno,
                details: "data before the `# pcflow <mode>` header".into(),
            });
        }
        if !saw_columns {
            parsed.columns = line.split(',').map(str::to_string).collect();
            saw_columns = true;
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != parsed.columns.len() {
            return Err(Error::CsvFormat {
                path: display,
                line: lineno,
                details: format!(
                    "{} cells in a {}-column file",
                    cells.len(),
                    parsed.columns.len()
                ),
            });
        }
        parsed.rows.push(cells);
    }
    if !saw_columns {
        return Err(Error::CsvFormat {
            path: display,
            line: text.lines().count().max(1),
            details: "no column row found".into(),
        });
    }
    Ok(parsed)
}
