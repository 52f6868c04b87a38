use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntentDistribution, SimilarityTable};
use crate::error::{Error, Result};
use crate::synth::{Dataset, FORMAT_VERSION};

pub const LABELS_FILE: &str = "labels.jsonl";

/// Ground-truth intent per request, aligned with `Dataset::requests`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntentLabels {
    pub n: usize,
    pub labels: Vec<Option<Vec<f64>>>,
}

impl IntentLabels {
    pub fn labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn skipped(&self) -> usize {
        self.labels.len() - self.labeled()
    }

    pub fn get(&self, request_index: usize) -> Option<&[f64]> {
        self.labels.get(request_index).and_then(|l| l.as_deref())
    }
}

pub fn label_dataset(ds: &Dataset, sims: &SimilarityTable, n: usize) -> Result<IntentLabels> {
    let labels = ds
        .requests
        .iter()
        .map(|r| {
            let levels = r
                .clicked()
                .map(|t| sims.level(r.trigger_item_id, t, n))
                .collect::<Result<Vec<_>>>()?;
            Ok(IntentDistribution::from_levels(&levels, n)?.map(|d| d.probs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntentLabels { n, labels })
}

#[derive(Serialize, Deserialize)]
struct LabelsMeta {
    format_version: u32,
    kind: String,
    n: usize,
    count: usize,
    skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    request_id: usize,
    intent_label: Vec<f64>,
}

pub fn write_labels(labels: &IntentLabels, ds: &Dataset, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let meta = LabelsMeta {
        format_version: FORMAT_VERSION,
        kind: "labels".into(),
        n: labels.n,
        count: labels.labeled(),
        skipped: labels.skipped(),
    };
    serde_json::to_writer(&mut w, &meta).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for (req, label) in ds.requests.iter().zip(&labels.labels) {
        if let Some(l) = label {
            let row = LabelRow {
                request_id: req.request_id,
                intent_label: l.clone(),
            };
            serde_json::to_writer(&mut w, &row).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_labels(path: &Path, ds: &Dataset) -> Result<IntentLabels> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| perr(1, "missing metadata line".into()))?
        .map_err(|e| Error::io(path, e))?;
    let meta: LabelsMeta = serde_json::from_str(&first).map_err(|e| perr(1, format!("metadata: {e}")))?;
    if meta.kind != "labels" {
        return Err(perr(1, format!("expected a labels file, found {}", meta.kind)));
    }
    let index: HashMap<usize, usize> = ds
        .requests
        .iter()
        .enumerate()
        .map(|(i, r)| (r.request_id, i))
        .collect();
    let mut labels = vec![None; ds.requests.len()];
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row: LabelRow = serde_json::from_str(&line).map_err(|e| perr(i + 2, e.to_string()))?;
        if row.intent_label.len() != meta.n {
            return Err(perr(i + 2, format!("label has {} levels, expected {}", row.intent_label.len(), meta.n)));
        }
        let k = *index
            .get(&row.request_id)
            .ok_or_else(|| perr(i + 2, format!("unknown request {}", row.request_id)))?;
        labels[k] = Some(row.intent_label);
        count += 1;
    }
    if count != meta.count {
        return Err(perr(count + 2, format!("truncated: expected {} labels, found {count}", meta.count)));
    }
    Ok(IntentLabels { n: meta.n, labels })
}
