//! JSON-lines dataset files: one [`DeploymentSequence`] per line.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{DeploymentSequence, EdgeKind, NodeKind};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
}

fn invalid(line: usize, field: String, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        line,
        field,
        message: message.into(),
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DeploymentSequence>, DatasetError> {
    read_dataset_from(File::open(path)?)
}

/// Parses every line; any malformed or inconsistent line fails the whole
/// read so callers never see a partial dataset.
pub fn read_dataset_from(reader: impl Read) -> Result<Vec<DeploymentSequence>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let dep: DeploymentSequence =
            serde_path_to_error::deserialize(&mut de).map_err(|e| {
                let field = e.path().to_string();
                invalid(line_no, field, e.into_inner().to_string())
            })?;
        validate(&dep, line_no)?;
        out.push(dep);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, deployments: &[DeploymentSequence]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(&mut w, deployments)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset_to(mut w: impl Write, deployments: &[DeploymentSequence]) -> Result<(), DatasetError> {
    for dep in deployments {
        serde_json::to_writer(&mut w, dep).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn validate(dep: &DeploymentSequence, line: usize) -> Result<(), DatasetError> {
    if !(dep.t_g.is_finite() && dep.t_g > 0.0) {
        return Err(invalid(line, "t_g".into(), "must be positive"));
    }
    let mut last_t = None;
    for (si, snap) in dep.snapshots.iter().enumerate() {
        let at = |f: String| format!("snapshots[{si}].{f}");
        if last_t.is_some_and(|t| snap.t <= t) {
            return Err(invalid(line, at("t".into()), "snapshots must be strictly ordered"));
        }
        last_t = Some(snap.t);

        let mut kinds = HashMap::new();
        for (ni, n) in snap.nodes.iter().enumerate() {
            let f = |name: &str| at(format!("nodes[{ni}].{name}"));
            if kinds.insert(n.id, n.kind).is_some() {
                return Err(invalid(line, f("id"), format!("duplicate node id {}", n.id)));
            }
            if !(n.x.is_finite() && n.y.is_finite() && n.airtime.is_finite() && n.sinr.is_finite()) {
                return Err(invalid(line, f("x"), "non-finite value"));
            }
            if let Some(c) = n.channels {
                if !c.is_valid() {
                    return Err(invalid(
                        line,
                        f("channels"),
                        format!("invalid channels: primary {} range [{}, {}]", c.primary, c.range.lo, c.range.hi),
                    ));
                }
            }
            if n.is_ap() && n.ap.is_some() {
                return Err(invalid(line, f("ap"), "an AP cannot be attached"));
            }
            if !(0.0..=1.0).contains(&n.airtime) {
                return Err(invalid(line, f("airtime"), "must lie in [0, 1]"));
            }
        }
        for (ni, n) in snap.nodes.iter().enumerate() {
            if let Some(ap) = n.ap {
                if kinds.get(&ap) != Some(&NodeKind::Ap) {
                    return Err(invalid(line, at(format!("nodes[{ni}].ap")), format!("{ap} is not an AP")));
                }
            }
        }
        let mut linked = HashSet::new();
        for (ei, e) in snap.edges.iter().enumerate() {
            let f = |name: &str| at(format!("edges[{ei}].{name}"));
            let (Some(ku), Some(kv)) = (kinds.get(&e.u), kinds.get(&e.v)) else {
                return Err(invalid(line, f("u"), "unknown endpoint"));
            };
            if !(e.distance.is_finite() && e.distance >= 0.0) {
                return Err(invalid(line, f("distance"), "must be finite and nonnegative"));
            }
            if !(e.rssi.is_finite() && e.interference.is_finite()) {
                return Err(invalid(line, f("rssi"), "non-finite value"));
            }
            match e.kind {
                EdgeKind::ApAp if *ku != NodeKind::Ap || *kv != NodeKind::Ap => {
                    return Err(invalid(line, f("kind"), "AP-AP edge with a non-AP endpoint"));
                }
                EdgeKind::ApSta => {
                    let sta = snap.nodes.iter().find(|n| n.id == e.v);
                    if *ku != NodeKind::Ap || sta.map(|s| s.ap) != Some(Some(e.u)) {
                        return Err(invalid(line, f("v"), "AP-STA edge must join an STA to its serving AP"));
                    }
                    if !linked.insert(e.v) {
                        return Err(invalid(line, f("v"), "STA has more than one AP-STA edge"));
                    }
                }
                _ => {}
            }
        }
        let labelled = !snap.labels.is_empty();
        for (ni, n) in snap.nodes.iter().enumerate() {
            if n.is_sta() && n.ap.is_some() {
                if !linked.contains(&n.id) {
                    return Err(invalid(line, at(format!("nodes[{ni}].ap")), "attached STA has no AP-STA edge"));
                }
                if labelled && !snap.labels.contains_key(&n.id) {
                    return Err(invalid(line, at("labels".into()), format!("missing label for STA {}", n.id)));
                }
            }
        }
        for (id, y) in &snap.labels {
            if kinds.get(id) != Some(&NodeKind::Sta) {
                return Err(invalid(line, at(format!("labels.{id}")), "label for a non-STA node"));
            }
            if !(y.is_finite() && *y >= 0.0) {
                return Err(invalid(line, at(format!("labels.{id}")), "throughput must be finite and >= 0"));
            }
        }
    }
    Ok(())
}
