//! Topology persistence: a JSON description plus a binary weight file.
//!
//! The binary file holds every recurrent weight (edge order) followed by every
//! input-projection weight, each a little-endian `f64`. The JSON records the
//! weight file name and its SHA-256 so a mismatched pair is detected on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Topology;
use crate::util::sha256_hex;
use crate::{Error, Result};

const FORMAT: &str = "spike-reservoir-topology/1";

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    format: String,
    seed: u64,
    grid_dims: [usize; 3],
    n_inputs: usize,
    excitatory: Vec<bool>,
    edges: Vec<[u32; 2]>,
    input_projection: Vec<[u32; 2]>,
    excitatory_range: [f64; 2],
    inhibitory_range: [f64; 2],
    weights_file: String,
    weights_sha256: String,
}

/// Path of the binary weight file that accompanies `json_path`.
pub fn weights_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("weights.bin")
}

pub fn save_topology(topology: &Topology, json_path: &Path) -> Result<()> {
    let bin_path = weights_path(json_path);
    let mut blob = Vec::with_capacity(8 * (topology.weights.len() + topology.input_weights.len()));
    for w in topology.weights.iter().chain(&topology.input_weights) {
        blob.extend_from_slice(&w.to_le_bytes());
    }
    let file = TopologyFile {
        format: FORMAT.into(),
        seed: topology.seed,
        grid_dims: topology.grid_dims,
        n_inputs: topology.n_inputs,
        excitatory: topology.excitatory.clone(),
        edges: topology
            .pre
            .iter()
            .zip(&topology.post)
            .map(|(&p, &q)| [p, q])
            .collect(),
        input_projection: topology
            .input_unit
            .iter()
            .zip(&topology.input_target)
            .map(|(&u, &q)| [u, q])
            .collect(),
        excitatory_range: topology.excitatory_range,
        inhibitory_range: topology.inhibitory_range,
        weights_file: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        weights_sha256: sha256_hex(&blob),
    };
    std::fs::write(&bin_path, &blob).map_err(|e| Error::io(&bin_path, e))?;
    let json = serde_json::to_vec_pretty(&file)?;
    std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
}

pub fn load_topology(json_path: &Path) -> Result<Topology> {
    let text = std::fs::read(json_path).map_err(|e| Error::io(json_path, e))?;
    let file: TopologyFile =
        serde_json::from_slice(&text).map_err(|e| Error::format(json_path, e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::format(
            json_path,
            format!("unsupported format {:?}", file.format),
        ));
    }
    let bin_path = json_path.with_file_name(&file.weights_file);
    let blob = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if sha256_hex(&blob) != file.weights_sha256 {
        return Err(Error::format(
            &bin_path,
            "weight file does not match its topology JSON (sha256)",
        ));
    }
    let expected = file.edges.len() + file.input_projection.len();
    if blob.len() != 8 * expected {
        return Err(Error::format(
            &bin_path,
            format!("expected {expected} weights, found {} bytes", blob.len()),
        ));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let edges = file
        .edges
        .iter()
        .map(|&[p, q]| (p, q, values.next().unwrap_or_default()))
        .collect();
    let input = file
        .input_projection
        .iter()
        .map(|&[u, q]| (u, q, values.next().unwrap_or_default()))
        .collect();
    Topology::from_parts(
        file.grid_dims,
        file.excitatory,
        edges,
        file.n_inputs,
        input,
        file.excitatory_range,
        file.inhibitory_range,
        file.seed,
    )
}
