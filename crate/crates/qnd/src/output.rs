//! CSV and JSON writers. Floats are written with 17 significant digits.

use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}
impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Self::Int(x as i64)
    }
}
impl From<u64> for Field {
    fn from(x: u64) -> Self {
        Self::Int(x as i64)
    }
}
impl From<bool> for Field {
    fn from(x: bool) -> Self {
        Self::Text(x.to_string())
    }
}
impl From<&str> for Field {
    fn from(x: &str) -> Self {
        Self::Text(x.into())
    }
}
impl From<String> for Field {
    fn from(x: String) -> Self {
        Self::Text(x)
    }
}
impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(x: Option<T>) -> Self {
        x.map_or(Self::Empty, Into::into)
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Self::Float(x) => fmt_f64(*x),
            Self::Int(i) => i.to_string(),
            Self::Empty => String::new(),
            Self::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Self::Text(s) => s.clone(),
        }
    }
}

/// In-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Field::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// I/O failure with the path involved.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError { path: path.to_path_buf(), source }
}

/// Output directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, IoError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, IoError> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, table: &Table) -> Result<PathBuf, IoError> {
        self.write_text(name, &table.render())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, IoError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write_text(name, &text)
    }

    /// One JSON document per line.
    pub fn write_json_lines<T: Serialize>(&self, name: &str, values: &[T]) -> Result<PathBuf, IoError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        for v in values {
            serde_json::to_writer(&mut w, v).map_err(|e| IoError { path: path.clone(), source: e.into() })?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }
}
