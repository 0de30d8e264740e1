//! Versioned file formats for networks and activation statistics.
//!
//! Binary network layout (all integers and floats little-endian):
//!
//! ```text
//! magic     4 bytes  b"SLPN"
//! version   u32      1
//! n_layers  u32      number of layer widths (>= 2)
//! widths    u64 * n_layers
//! weights   f64 * sum(arch[l+1] * arch[l]), matrix by matrix, row-major
//! ```
//!
//! The JSON layout is `{"format": "sleepnet-network", "version": 1,
//! "arch": [...], "weights": [[row-major values of matrix 0], ...]}`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActivationStats, Network};

pub const NETWORK_MAGIC: &[u8; 4] = b"SLPN";
pub const FORMAT_VERSION: u32 = 1;

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let n_weights: usize = net.weights().iter().map(|w| w.len()).sum();
    let mut out = Vec::with_capacity(12 + 8 * (net.arch().len() + n_weights));
    out.extend_from_slice(NETWORK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.arch().len() as u32).to_le_bytes());
    for &w in net.arch() {
        out.extend_from_slice(&(w as u64).to_le_bytes());
    }
    for w in net.weights() {
        for v in w.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let out = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::Format(format!("network file truncated at byte {}", self.bytes.len()))
        })?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != NETWORK_MAGIC {
        return Err(Error::Format("not a sleepnet network file".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported network version {version}")));
    }
    let n_layers = c.u32()? as usize;
    if n_layers < 2 {
        return Err(Error::Format(format!("{n_layers} layers")));
    }
    let arch = (0..n_layers)
        .map(|_| c.u64().map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(n_layers - 1);
    for pair in arch.windows(2) {
        let (cols, rows) = (pair[0], pair[1]);
        let values = (0..rows * cols)
            .map(|_| c.f64())
            .collect::<Result<Vec<_>>>()?;
        weights.push(Array2::from_shape_vec((rows, cols), values).expect("length matches"));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after weights",
            bytes.len() - c.pos
        )));
    }
    Network::from_weights(weights)
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    format: String,
    version: u32,
    arch: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

pub fn network_to_json(net: &Network) -> Result<String> {
    let doc = NetworkJson {
        format: "sleepnet-network".into(),
        version: FORMAT_VERSION,
        arch: net.arch().to_vec(),
        weights: net.weights().iter().map(|w| w.iter().copied().collect()).collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn network_from_json(s: &str) -> Result<Network> {
    let doc: NetworkJson = serde_json::from_str(s)?;
    if doc.format != "sleepnet-network" || doc.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported network document {} v{}",
            doc.format, doc.version
        )));
    }
    if doc.arch.len() < 2 || doc.weights.len() != doc.arch.len() - 1 {
        return Err(Error::Format("arch and weight count disagree".into()));
    }
    let weights = doc
        .arch
        .windows(2)
        .zip(doc.weights)
        .map(|(pair, values)| {
            Array2::from_shape_vec((pair[1], pair[0]), values)
                .map_err(|e| Error::Format(format!("weight matrix shape: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_weights(weights)
}

/// Picks binary or JSON by extension (`.json` means JSON).
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_json(path) {
        network_to_json(net)?.into_bytes()
    } else {
        network_to_bytes(net)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_json(path) {
        network_from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        network_from_bytes(&bytes)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Serialize, Deserialize)]
struct StatsJson {
    format: String,
    version: u32,
    #[serde(flatten)]
    stats: ActivationStats,
}

pub fn save_stats(stats: &ActivationStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = StatsJson {
        format: "sleepnet-stats".into(),
        version: FORMAT_VERSION,
        stats: stats.clone(),
    };
    fs::write(path, serde_json::to_string(&doc)?).map_err(|e| Error::io(path, e))
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<ActivationStats> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: StatsJson = serde_json::from_str(&s)?;
    if doc.format != "sleepnet-stats" || doc.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported stats document {} v{}",
            doc.format, doc.version
        )));
    }
    Ok(doc.stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let net = Network::init(&[7, 5, 3], 12).unwrap();
        let back = network_from_bytes(&network_to_bytes(&net)).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn json_round_trip() {
        let net = Network::init(&[4, 6, 2], 5).unwrap();
        let back = network_from_json(&network_to_json(&net).unwrap()).unwrap();
        for (a, b) in net.weights().iter().zip(back.weights()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn binary_rejects_truncation_and_bad_magic() {
        let bytes = network_to_bytes(&Network::init(&[3, 2], 0).unwrap());
        assert!(network_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(network_from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(network_from_bytes(&long).is_err());
    }
}
