use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoredImpression;
use crate::error::{Error, Result};

pub const SCORES_FILE: &str = "scores.jsonl";
const SCORES_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    kind: String,
    count: usize,
}

/// One impression per line after a metadata line.
pub fn write_scores(scores: &[ScoredImpression], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let meta = Meta {
        format_version: SCORES_VERSION,
        kind: "scores".into(),
        count: scores.len(),
    };
    serde_json::to_writer(&mut w, &meta).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for s in scores {
        serde_json::to_writer(&mut w, s).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredImpression>> {
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse(1, "missing metadata line".into()))?
        .map_err(|e| Error::io(path, e))?;
    let meta: Meta = serde_json::from_str(&first).map_err(|e| parse(1, format!("metadata: {e}")))?;
    if meta.kind != "scores" || meta.format_version != SCORES_VERSION {
        return Err(parse(1, format!("not a version {SCORES_VERSION} scores file")));
    }
    let mut out = Vec::with_capacity(meta.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.push(serde_json::from_str(&line).map_err(|e| parse(i + 2, e.to_string()))?);
    }
    if out.len() != meta.count {
        return Err(parse(
            out.len() + 2,
            format!("truncated: expected {} scores, found {}", meta.count, out.len()),
        ));
    }
    Ok(out)
}
