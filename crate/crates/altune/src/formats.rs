//! Versioned on-disk formats.
//!
//! Binary containers (datasets, weights) share one layout:
//!
//! ```text
//! magic (4 bytes) | major u16 LE | minor u16 LE | header length u32 LE | JSON header | payload (f64 LE)
//! ```
//!
//! JSON records carry a `format_version` string `"major.minor"`. Readers
//! accept any minor version of a known major and reject everything else.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use altune_core::beamsim::{BeamFactors, DatasetConfig, SampleRecord};
use altune_core::net::{NetworkSpec, NetworkWeights};
use altune_core::{AxisPair, ImageGrid, MachineParams, ProjectionSet, N_PARAMS};
use serde::{Deserialize, Serialize};

pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;
pub const DATASET_MAGIC: [u8; 4] = *b"ALTD";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"ALTW";

/// `"major.minor"` of everything this build writes.
pub fn format_version() -> String {
    format!("{FORMAT_MAJOR}.{FORMAT_MINOR}")
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not a {expected} file (bad magic)")]
    BadMagic { path: String, expected: &'static str },
    #[error("{path}: unsupported format version {found} (this build reads {FORMAT_MAJOR}.x)")]
    UnsupportedVersion { path: String, found: String },
    #[error("{path}: malformed header: {msg}")]
    Header { path: String, msg: String },
    #[error("{path}: truncated or oversized payload: expected {expected} values, found {found}")]
    Payload { path: String, expected: usize, found: usize },
    #[error("{path}: {source}")]
    Content { path: String, source: altune_core::Error },
}

type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.display().to_string(), source }
}

fn content_err(path: &Path) -> impl FnOnce(altune_core::Error) -> FormatError + '_ {
    move |source| FormatError::Content { path: path.display().to_string(), source }
}

/// Checks a `"major.minor"` string against [`FORMAT_MAJOR`].
pub fn check_version(path: &Path, version: &str) -> Result<()> {
    let major = version.split('.').next().and_then(|m| m.parse::<u16>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(FormatError::UnsupportedVersion { path: path.display().to_string(), found: version.to_string() })
    }
}

fn write_container<H: Serialize>(path: &Path, magic: [u8; 4], header: &H, payload: &[f64]) -> Result<()> {
    let header = serde_json::to_vec(header).map_err(|e| FormatError::Header {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(io_err(path));
    write(&magic)?;
    write(&FORMAT_MAJOR.to_le_bytes())?;
    write(&FORMAT_MINOR.to_le_bytes())?;
    write(&(header.len() as u32).to_le_bytes())?;
    write(&header)?;
    for v in payload {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(io_err(path))
}

fn read_container<H: for<'de> Deserialize<'de>>(path: &Path, magic: [u8; 4], kind: &'static str) -> Result<(H, Vec<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let p = || path.display().to_string();
    if bytes.len() < 12 || bytes[..4] != magic {
        return Err(FormatError::BadMagic { path: p(), expected: kind });
    }
    let major = u16::from_le_bytes([bytes[4], bytes[5]]);
    let minor = u16::from_le_bytes([bytes[6], bytes[7]]);
    check_version(path, &format!("{major}.{minor}"))?;
    let hlen = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(FormatError::Header { path: p(), msg: "header extends past end of file".into() });
    }
    let header: H = serde_json::from_slice(&body[..hlen]).map_err(|e| FormatError::Header { path: p(), msg: e.to_string() })?;
    let payload = &body[hlen..];
    if payload.len() % 8 != 0 {
        return Err(FormatError::Payload { path: p(), expected: payload.len() / 8 + 1, found: payload.len() / 8 });
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    config: DatasetConfig,
    n_records: usize,
    /// Values per record, for a cheap consistency check.
    record_len: usize,
}

fn record_len(cfg: &DatasetConfig) -> usize {
    let g = &cfg.grid;
    N_PARAMS + altune_core::beamsim::N_FACTORS + 1 + g.input_size * g.input_size + cfg.channels.len() * g.output_size * g.output_size
}

/// Writes `records` generated under `cfg`. Record layout: params, beam
/// factors, captured mass, input pixels, then each channel's pixels.
pub fn write_dataset(path: &Path, cfg: &DatasetConfig, records: &[SampleRecord]) -> Result<()> {
    let len = record_len(cfg);
    let mut payload = Vec::with_capacity(len * records.len());
    for r in records {
        payload.extend_from_slice(r.params.as_slice());
        payload.extend_from_slice(&r.factors.0);
        payload.push(r.min_captured_mass);
        payload.extend_from_slice(r.input.pixels());
        for &pair in &cfg.channels {
            let img = r.outputs.get(pair).ok_or_else(|| FormatError::Header {
                path: path.display().to_string(),
                msg: format!("record lacks channel {pair}"),
            })?;
            payload.extend_from_slice(img.pixels());
        }
    }
    if payload.len() != len * records.len() {
        return Err(FormatError::Payload { path: path.display().to_string(), expected: len * records.len(), found: payload.len() });
    }
    let header = DatasetHeader { config: cfg.clone(), n_records: records.len(), record_len: len };
    write_container(path, DATASET_MAGIC, &header, &payload)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetConfig, Vec<SampleRecord>)> {
    let (h, values): (DatasetHeader, _) = read_container(path, DATASET_MAGIC, "dataset")?;
    let cfg = h.config;
    let len = record_len(&cfg);
    if h.record_len != len || values.len() != len * h.n_records {
        return Err(FormatError::Payload { path: path.display().to_string(), expected: len * h.n_records, found: values.len() });
    }
    let g = &cfg.grid;
    let (ni, no) = (g.input_size * g.input_size, g.output_size * g.output_size);
    let records = values
        .chunks_exact(len)
        .map(|rec| {
            let (params, rest) = rec.split_at(N_PARAMS);
            let (factors, rest) = rest.split_at(altune_core::beamsim::N_FACTORS);
            let (mass, rest) = rest.split_at(1);
            let (input, mut rest) = rest.split_at(ni);
            let input = ImageGrid::new(g.input_size, g.input_size, input.to_vec(), g.input_extent)?;
            let mut channels: Vec<(AxisPair, ImageGrid)> = Vec::with_capacity(cfg.channels.len());
            for &pair in &cfg.channels {
                let (px, tail) = rest.split_at(no);
                rest = tail;
                channels.push((pair, ImageGrid::new(g.output_size, g.output_size, px.to_vec(), g.extent(pair))?));
            }
            Ok(SampleRecord {
                input,
                params: MachineParams(params.try_into().unwrap()),
                outputs: ProjectionSet::new(channels)?,
                factors: BeamFactors(factors.try_into().unwrap()),
                min_captured_mass: mass[0],
            })
        })
        .collect::<std::result::Result<Vec<_>, altune_core::Error>>()
        .map_err(content_err(path))?;
    Ok((cfg, records))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsHeader {
    spec: NetworkSpec,
    n_weights: usize,
    checksum: u64,
}

pub fn write_weights(path: &Path, w: &NetworkWeights) -> Result<()> {
    let header = WeightsHeader { spec: w.spec().clone(), n_weights: w.len(), checksum: w.checksum() };
    write_container(path, WEIGHTS_MAGIC, &header, w.as_slice())
}

/// Reads weights and verifies the stored checksum.
pub fn read_weights(path: &Path) -> Result<NetworkWeights> {
    let (h, values): (WeightsHeader, _) = read_container(path, WEIGHTS_MAGIC, "weights")?;
    if values.len() != h.n_weights {
        return Err(FormatError::Payload { path: path.display().to_string(), expected: h.n_weights, found: values.len() });
    }
    let w = NetworkWeights::from_flat(&h.spec, values).map_err(content_err(path))?;
    if w.checksum() != h.checksum {
        return Err(FormatError::Header {
            path: path.display().to_string(),
            msg: format!("checksum {:016x} does not match stored {:016x}", w.checksum(), h.checksum),
        });
    }
    Ok(w)
}

/// Raw numeric dump of one image, the source of truth behind each PGM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageDump {
    pub format_version: String,
    pub pair: AxisPair,
    pub image: ImageGrid,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Header {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// 8-bit binary PGM, scaled so the brightest pixel is 255. Row 0 of the
/// grid (lowest second-axis value) is written at the bottom.
pub fn write_pgm(path: &Path, img: &ImageGrid) -> Result<()> {
    let max = img.pixels().iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for row in (0..img.height()).rev() {
        for col in 0..img.width() {
            out.push((img.get(col, row) * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, out).map_err(io_err(path))
}
