//! CSV and manifest emission.
//!
//! CSV files are RFC-4180 style: comma separated, one header row, LF line
//! endings. Floating-point values are written with 17 significant digits so
//! re-parsing a report reproduces the doubles exactly. All files are written
//! atomically (temp file + rename).

use rlhf_lab_core::config::fnv1a64;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// 17 significant digits; round-trips any finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Builds a CSV body from a header and rows of preformatted fields.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Run manifest written next to every output artifact. The config echo is
/// embedded verbatim between `config_begin`/`config_end`, and `config_hash`
/// is the FNV-1a hash of exactly those echoed bytes.
pub struct Manifest<'a> {
    pub command: String,
    pub master_seed: u64,
    pub jobs: Option<usize>,
    pub config_echo: &'a str,
    pub started_utc: String,
    pub finished_utc: String,
    pub exit_status: i32,
}

impl Manifest<'_> {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "manifest_version=1");
        let _ = writeln!(out, "tool=rlhf-lab {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "master_seed={}", self.master_seed);
        match self.jobs {
            Some(j) => {
                let _ = writeln!(out, "jobs={j}");
            }
            None => {
                let _ = writeln!(out, "jobs=auto");
            }
        }
        let _ = writeln!(out, "started_utc={}", self.started_utc);
        let _ = writeln!(out, "finished_utc={}", self.finished_utc);
        let _ = writeln!(out, "exit_status={}", self.exit_status);
        let _ = writeln!(
            out,
            "config_hash={:016x}",
            fnv1a64(self.config_echo.as_bytes())
        );
        let _ = writeln!(out, "config_begin");
        out.push_str(self.config_echo);
        let _ = writeln!(out, "config_end");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.5e-17, 123456.789, -0.0, 1e300] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn csv_uses_lf_only() {
        let body = csv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(body, "a,b\n1,2\n");
        assert!(!body.contains('\r'));
    }
}
