//! Flat-file output. Every float is written as `{:.16e}` (17 significant
//! digits) so identical runs give identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use dissipham::verify::{ReportEntry, VerificationReport};
use serde::Serialize;
use serde_json::value::RawValue;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to a temporary sibling of `path`, then renames it into
/// place, so readers never see a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Self {
            columns: header.len(),
            text,
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        for (j, &x) in values.iter().enumerate() {
            if j > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{x:.16e}");
        }
        self.text.push('\n');
    }

    /// A row whose leading cells are preformatted (integers, labels).
    pub fn mixed_row(&mut self, cells: &[String], values: &[f64]) {
        debug_assert_eq!(cells.len() + values.len(), self.columns);
        self.text.push_str(&cells.join(","));
        for &x in values {
            if !self.text.ends_with('\n') {
                self.text.push(',');
            }
            let _ = write!(self.text, "{x:.16e}");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Serialize)]
struct JsonEntry<'a> {
    check: &'a str,
    scenario: &'a str,
    residual: Box<RawValue>,
    tolerance: Box<RawValue>,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a str>,
}

// Finite values become JSON numbers with 17 significant digits; the rest
// become strings, which plain JSON numbers cannot express.
fn json_number(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() {
        fmt_f64(x)
    } else {
        serde_json::to_string(&x.to_string()).expect("string serializes")
    };
    RawValue::from_string(text).expect("valid JSON literal")
}

pub fn report_json(report: &VerificationReport) -> String {
    let entries: Vec<JsonEntry> = report
        .entries
        .iter()
        .map(|e: &ReportEntry| JsonEntry {
            check: e.check.id(),
            scenario: &e.scenario,
            residual: json_number(e.residual),
            tolerance: json_number(e.tolerance),
            passed: e.passed,
            detail: e.detail.as_deref(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("report serializes");
    s.push('\n');
    s
}
