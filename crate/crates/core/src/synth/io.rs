use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{group_records, Dataset, Item, ItemCatalog, RequestRecord, SynthConfig, UserProfile};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const REQUESTS_FILE: &str = "requests.jsonl";

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    kind: String,
    seed: u64,
    config: SynthConfig,
    count: usize,
}

fn write_lines<T: Serialize>(
    path: &Path,
    kind: &str,
    seed: u64,
    config: &SynthConfig,
    count: usize,
    rows: impl Iterator<Item = T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let meta = Meta {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        seed,
        config: config.clone(),
        count,
    };
    let io = |e: std::io::Error| Error::io(path, e);
    let ser = |e: serde_json::Error| Error::io(path, e.into());
    serde_json::to_writer(&mut w, &meta).map_err(ser)?;
    w.write_all(b"\n").map_err(io)?;
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(ser)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_lines(
        &dir.join(CATALOG_FILE),
        "catalog",
        ds.seed,
        &ds.config,
        ds.catalog.len(),
        ds.catalog.items.iter(),
    )?;
    write_lines(&dir.join(USERS_FILE), "users", ds.seed, &ds.config, ds.users.len(), ds.users.iter())?;
    write_lines(
        &dir.join(REQUESTS_FILE),
        "requests",
        ds.seed,
        &ds.config,
        ds.num_impressions(),
        ds.requests.iter().flat_map(|r| r.records()),
    )
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Read a metadata-headed line file, verifying kind, version and count.
fn read_lines<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Meta, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing metadata line"))?
        .map_err(|e| Error::io(path, e))?;
    let meta: Meta = serde_json::from_str(&first).map_err(|e| parse_err(path, 1, format!("metadata: {e}")))?;
    if meta.kind != kind {
        return Err(parse_err(path, 1, format!("expected a {kind} file, found {}", meta.kind)));
    }
    if meta.format_version != FORMAT_VERSION {
        return Err(parse_err(path, 1, format!("unsupported format_version {}", meta.format_version)));
    }
    let mut rows = Vec::with_capacity(meta.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row = serde_json::from_str(&line).map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        rows.push(row);
    }
    if rows.len() != meta.count {
        return Err(parse_err(
            path,
            rows.len() + 2,
            format!("truncated: metadata announces {} records, found {}", meta.count, rows.len()),
        ));
    }
    Ok((meta, rows))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let (meta, items): (Meta, Vec<Item>) = read_lines(&dir.join(CATALOG_FILE), "catalog")?;
    let (_, users): (Meta, Vec<UserProfile>) = read_lines(&dir.join(USERS_FILE), "users")?;
    let (_, records): (Meta, Vec<RequestRecord>) = read_lines(&dir.join(REQUESTS_FILE), "requests")?;
    let ds = Dataset {
        seed: meta.seed,
        catalog: ItemCatalog {
            items,
            num_clusters: meta.config.num_clusters,
        },
        config: meta.config,
        users,
        requests: group_records(records)?,
    };
    ds.validate()?;
    Ok(ds)
}
