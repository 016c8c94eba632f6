//! File formats.
//!
//! * Event sequences: CSV `t,d` with 1-based dimension marks, plus a JSON
//!   sidecar `{"T": .., "K": ..}` next to it (same stem, `.json`).
//! * Parameters: JSON `{mu, alpha, excitation}` with `alpha[parent][child]`.
//! * Branching: CSV `child_index,parent_index`, 1-based, 0 for immigrants.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventSequence, HawkesParams};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Sidecar {
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    t: f64,
    d: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchRow {
    child_index: usize,
    parent_index: usize,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

/// Writes the event CSV and its sidecar.
pub fn write_sequence(seq: &EventSequence, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for (&t, &d) in seq.times().iter().zip(seq.dims()) {
        w.serialize(EventRow { t, d: d + 1 })?;
    }
    if seq.is_empty() {
        w.write_record(["t", "d"])?;
    }
    w.flush()?;
    write_json(&Sidecar { horizon: seq.horizon(), k: seq.num_dims() }, &sidecar_path(csv_path))
}

/// Reads an event CSV together with its sidecar.
pub fn read_sequence(csv_path: &Path) -> Result<EventSequence> {
    let side: Sidecar = read_json(&sidecar_path(csv_path))?;
    let mut r = csv::Reader::from_path(csv_path)?;
    let mut times = Vec::new();
    let mut dims = Vec::new();
    for (line, row) in r.deserialize::<EventRow>().enumerate() {
        let row = row?;
        if row.d == 0 || row.d > side.k {
            return Err(Error::InvalidSequence(format!(
                "{}: row {}: dimension {} outside 1..={}",
                csv_path.display(),
                line + 2,
                row.d,
                side.k
            )));
        }
        times.push(row.t);
        dims.push(row.d - 1);
    }
    EventSequence::new(times, dims, side.horizon, side.k)
}

pub fn write_params(params: &HawkesParams, path: &Path) -> Result<()> {
    write_json(params, path)
}

pub fn read_params(path: &Path) -> Result<HawkesParams> {
    read_json(path)
}

/// Writes 0-based parents as 1-based indices with 0 for immigrants.
pub fn write_branching(parents: &[Option<usize>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (j, p) in parents.iter().enumerate() {
        w.serialize(BranchRow { child_index: j + 1, parent_index: p.map_or(0, |i| i + 1) })?;
    }
    if parents.is_empty() {
        w.write_record(["child_index", "parent_index"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branching(path: &Path) -> Result<Vec<Option<usize>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut parents = Vec::new();
    for row in r.deserialize::<BranchRow>() {
        let row = row?;
        if row.child_index != parents.len() + 1 {
            return Err(Error::Contract(format!(
                "{}: expected child {} but found {}",
                path.display(),
                parents.len() + 1,
                row.child_index
            )));
        }
        parents.push(row.parent_index.checked_sub(1));
    }
    Ok(parents)
}
