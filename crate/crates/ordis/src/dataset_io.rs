//! On-disk dataset: a record file plus a JSON manifest in one directory.
//!
//! `records.csv` starts with the line `# ordis-dataset v1`, then a column
//! header, then one record per line:
//!
//! ```text
//! sequence_id,t,location,uc,x0,x1,...
//! 0,0,0,1,-0.112358,...
//! ```
//!
//! `uc` is `0`, `1` or `null`. Features carry exactly six decimals, which is
//! the precision the generator rounds to, so a save/load round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ordis_core::seqgen::{Dataset, DatasetManifest, SequenceRecord, Split, FEATURE_DECIMALS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_HEADER: &str = "# ordis-dataset v1";
const MANIFEST_FORMAT: &str = "ordis-manifest v1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    n_sequences: usize,
    record_count: usize,
    lengths: Vec<usize>,
    splits: Vec<String>,
    labeled: Vec<(u32, u32)>,
    labeled_ratio: f64,
    seed: u64,
    config_hash: String,
    records_hash: String,
}

impl ManifestFile {
    fn from_manifest(m: &DatasetManifest) -> Self {
        ManifestFile {
            format: MANIFEST_FORMAT.into(),
            n_sequences: m.n_sequences(),
            record_count: m.record_count(),
            lengths: m.lengths.clone(),
            splits: m.splits.iter().map(|s| s.name().to_string()).collect(),
            labeled: m.labeled.clone(),
            labeled_ratio: m.labeled_ratio,
            seed: m.seed,
            config_hash: m.config_hash.clone(),
            records_hash: m.records_hash.clone(),
        }
    }

    fn into_manifest(self, path: &Path) -> Result<DatasetManifest> {
        let splits = self
            .splits
            .iter()
            .map(|s| Split::parse(s).ok_or_else(|| Error::corrupt(path, format!("unknown split `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if self.lengths.len() != self.n_sequences || self.lengths.iter().sum::<usize>() != self.record_count {
            return Err(Error::corrupt(path, "sequence lengths disagree with the counts"));
        }
        Ok(DatasetManifest {
            lengths: self.lengths,
            splits,
            labeled: self.labeled,
            labeled_ratio: self.labeled_ratio,
            seed: self.seed,
            config_hash: self.config_hash,
            records_hash: self.records_hash,
        })
    }
}

fn format_record(out: &mut String, r: &SequenceRecord) {
    let uc = r.uc.map_or_else(|| "null".to_string(), |u| u.to_string());
    let _ = write!(out, "{},{},{},{}", r.sequence_id, r.t, r.location, uc);
    for v in &r.features {
        let _ = write!(out, ",{:.*}", FEATURE_DECIMALS as usize, v);
    }
    out.push('\n');
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let width = dataset.records.first().map_or(0, |r| r.features.len());
    let mut text = String::with_capacity(dataset.records.len() * (width * 11 + 16));
    text.push_str(RECORDS_HEADER);
    text.push('\n');
    text.push_str("sequence_id,t,location,uc");
    for k in 0..width {
        let _ = write!(text, ",x{k}");
    }
    text.push('\n');
    for r in &dataset.records {
        format_record(&mut text, r);
    }
    let records_path = dir.join(RECORDS_FILE);
    fs::write(&records_path, text).map_err(Error::io(&records_path))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&ManifestFile::from_manifest(&dataset.manifest))
        .expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(Error::io(&manifest_path))
}

fn parse_record(line: &str, width: usize, path: &Path, lineno: usize) -> Result<SequenceRecord> {
    let bad = |what: &str| Error::corrupt(path, format!("line {lineno}: {what}"));
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != width + 4 {
        return Err(bad(&format!("expected {} fields, found {}", width + 4, fields.len())));
    }
    let location: u8 = fields[2].parse().map_err(|_| bad("bad location"))?;
    if location > 2 {
        return Err(bad("location out of range"));
    }
    let uc = match fields[3] {
        "null" => None,
        "0" => Some(0),
        "1" => Some(1),
        _ => return Err(bad("bad uc label")),
    };
    Ok(SequenceRecord {
        sequence_id: fields[0].parse().map_err(|_| bad("bad sequence id"))?,
        t: fields[1].parse().map_err(|_| bad("bad time index"))?,
        location,
        uc,
        features: fields[4..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad feature value"))?,
    })
}

/// Loads and verifies a dataset directory written by [`save`].
pub fn load(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = fs::read_to_string(&manifest_path).map_err(Error::io(&manifest_path))?;
    let file: ManifestFile =
        serde_json::from_str(&json).map_err(|e| Error::corrupt(&manifest_path, e.to_string()))?;
    if file.format != MANIFEST_FORMAT {
        return Err(Error::Version { path: manifest_path, found: file.format, expected: MANIFEST_FORMAT });
    }
    let manifest = file.into_manifest(&manifest_path)?;

    let records_path = dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&records_path).map_err(Error::io(&records_path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(RECORDS_HEADER) => {}
        Some(other) if other.starts_with("# ordis-dataset") => {
            return Err(Error::Version { path: records_path, found: other.into(), expected: RECORDS_HEADER });
        }
        _ => return Err(Error::corrupt(&records_path, "missing dataset header")),
    }
    let columns = lines.next().ok_or_else(|| Error::corrupt(&records_path, "missing column header"))?;
    let width = columns.split(',').count().saturating_sub(4);
    if !columns.starts_with("sequence_id,t,location,uc") {
        return Err(Error::corrupt(&records_path, "unexpected column header"));
    }
    if !text.ends_with('\n') {
        return Err(Error::corrupt(&records_path, "file does not end with a newline (truncated?)"));
    }
    let records = lines
        .enumerate()
        .map(|(i, line)| parse_record(line, width, &records_path, i + 3))
        .collect::<Result<Vec<_>>>()?;
    if records.len() != manifest.record_count() {
        return Err(Error::corrupt(
            &records_path,
            format!("{} records, manifest lists {}", records.len(), manifest.record_count()),
        ));
    }
    let dataset = Dataset { records, manifest };
    dataset.verify()?;
    Ok(dataset)
}
