use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::run::{LatencyReport, RunReport};
use crate::error::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const LATENCY_JSON: &str = "latency.json";

/// SHA-256 over each input framed as a git blob (`blob <len>\0<bytes>`),
/// chained in order.
pub fn content_hash(inputs: &[Vec<u8>]) -> String {
    let mut outer = Sha256::new();
    for bytes in inputs {
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", bytes.len()).as_bytes());
        h.update(bytes);
        outer.update(h.finalize());
    }
    hex::encode(outer.finalize())
}

fn fmt2(v: Option<f64>) -> String {
    v.map_or_else(|| "FAILED".to_string(), |x| format!("{x:.2}"))
}

/// One row per (strategy, student) plus a Selected row per strategy.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from("strategy,model,test_mean,test_stderr,val_mean,n_ok,n_failed,average_rank\n");
    for row in &report.summary {
        let rank = if row.model == "selected" {
            report.ranks.iter().find(|r| r.strategy == row.strategy).map_or(String::new(), |r| format!("{:.2}", r.average_rank))
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.strategy,
            row.model,
            fmt2(row.test_mean),
            fmt2(row.test_stderr),
            fmt2(row.val_mean),
            row.n_ok,
            row.n_failed,
            rank
        );
    }
    out
}

fn write(path: PathBuf, contents: &[u8]) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Write `report.json`, `report.csv` and (timings, kept apart so the report
/// stays reproducible) `latency.json` into `dir`.
pub fn emit_report(report: &RunReport, latency: Option<&LatencyReport>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let mut written = vec![
        write(dir.join(REPORT_JSON), serde_json::to_string_pretty(report)?.as_bytes())?,
        write(dir.join(REPORT_CSV), report_csv(report).as_bytes())?,
    ];
    if let Some(l) = latency {
        written.push(write(dir.join(LATENCY_JSON), serde_json::to_string_pretty(l)?.as_bytes())?);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let s = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    Ok(serde_json::from_str(&s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_framing() {
        // `git hash-object` of "hello\n" under SHA-256 object format.
        let mut h = Sha256::new();
        h.update(b"blob 6\0hello\n");
        let single = hex::encode(h.finalize());
        assert_eq!(single, "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
        assert_ne!(content_hash(&[b"a".to_vec(), b"b".to_vec()]), content_hash(&[b"b".to_vec(), b"a".to_vec()]));
    }
}
