//! CSV emission. Every file opens with `#` comment lines naming the tool
//! version, command, config hash and seeds; nothing time-dependent is written,
//! so identical inputs give byte-identical files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub struct Provenance<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seeds: &'a [u64],
}

impl Provenance<'_> {
    pub fn write<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "# squeezesim {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# config_sha256: {}", self.config_hash)?;
        writeln!(out, "# seeds: {}", seeds.join(","))
    }
}

/// Opens `path`, or stdout when absent.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Shortest round-trip representation in scientific notation.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Quotes a free-text CSV field.
pub fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.5e-21), "1.5e-21");
        assert_eq!(num(148.0), "1.48e2");
        assert_eq!(text("a, b"), "\"a, b\"");
        assert_eq!(text("plain"), "plain");
    }

    #[test]
    fn header_lines() {
        let mut buf = Vec::new();
        Provenance {
            command: "sweep",
            config_hash: "ab",
            seeds: &[1, 2],
        }
        .write(&mut buf)
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# squeezesim "));
        assert!(s.contains("# seeds: 1,2\n"));
    }
}
