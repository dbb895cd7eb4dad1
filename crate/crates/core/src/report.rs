//! Plain-text output helpers shared by the library and the command line.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// Lossless decimal rendering: 17 significant digits in scientific form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Minimal CSV writer; fields are never quoted, so callers keep text
/// columns free of commas.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[Field<'_>]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        let line: Vec<String> = fields.iter().map(Field::render).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub enum Field<'a> {
    Text(&'a str),
    Int(i64),
    Float(f64),
}

impl Field<'_> {
    fn render(&self) -> String {
        match self {
            Field::Text(s) => (*s).to_string(),
            Field::Int(i) => i.to_string(),
            Field::Float(v) => fmt_f64(*v),
        }
    }
}

impl From<f64> for Field<'_> {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<usize> for Field<'_> {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl<'a> From<&'a str> for Field<'a> {
    fn from(v: &'a str) -> Self {
        Field::Text(v)
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [std::f64::consts::PI, 1.0 / 3.0, -2.5e-300, 0.1 + 0.2] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_rows() {
        let mut w = CsvWriter::new(Vec::new(), &["name", "n", "v"]).unwrap();
        w.row(&["hat".into(), 3usize.into(), 0.5.into()]).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, "name,n,v\nhat,3,5.0000000000000000e-1\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("strip-report-{}", std::process::id()));
        let path = dir.join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        fs::remove_dir_all(&dir).unwrap();
    }
}
