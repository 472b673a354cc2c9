//! `softgrad export`: per-frame particle snapshot files from a run.

use std::fs;
use std::path::{Path, PathBuf};

use softgrad_core::mpm::snapshot;

use crate::error::{io_err, CliError, CliResult};
use crate::run::read_records;

/// Inclusive frame range; `None` means every frame.
pub fn parse_frames(s: &str) -> Result<Option<(usize, usize)>, String> {
    if s == "all" {
        return Ok(None);
    }
    let (a, b) = s.split_once("..").ok_or_else(|| format!("frame range `{s}` is not of the form A..B or `all`"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad frame `{a}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad frame `{b}`"))?;
    if a > b {
        return Err(format!("empty frame range {a}..{b}"));
    }
    Ok(Some((a, b)))
}

/// Writes `frame_<t>.sgsnap` for every selected step of `record` into `out`.
pub fn cmd_export(record: &Path, frames: Option<(usize, usize)>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let records = read_records(record)?;
    let (a, b) = frames.unwrap_or((0, records.len().saturating_sub(1)));
    let dir = record.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut streams: Vec<(String, Vec<u8>)> = Vec::new();
    let mut written = Vec::new();
    for t in a..=b {
        let rec = records.iter().find(|r| r.t == t).ok_or_else(|| CliError::Usage(format!("{}: no record for frame {t}", record.display())))?;
        let sref = rec.snapshot.as_ref().ok_or_else(|| {
            CliError::Usage(format!("{}: frame {t} has no snapshot; rerun with `snapshots = true`", record.display()))
        })?;
        if !streams.iter().any(|(f, _)| *f == sref.file) {
            let p = dir.join(&sref.file);
            let bytes = fs::read(&p).map_err(|e| CliError::Usage(format!("missing snapshot {}: {e}", p.display())))?;
            streams.push((sref.file.clone(), bytes));
        }
        let bytes = &streams.iter().find(|(f, _)| *f == sref.file).expect("loaded above").1;
        let blocks = snapshot::split_stream(bytes).map_err(|e| CliError::Usage(format!("{}: {e}", sref.file)))?;
        let block = blocks.get(sref.block).ok_or_else(|| CliError::Usage(format!("{}: missing snapshot block {}", sref.file, sref.block)))?;
        snapshot::decode(block).map_err(|e| CliError::Usage(format!("{} block {}: {e}", sref.file, sref.block)))?;
        let p = out.join(format!("frame_{t:05}.sgsnap"));
        fs::write(&p, block).map_err(|e| io_err(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
