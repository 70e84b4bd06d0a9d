//! Checkpoint files: a `DFPO1` magic line, a UTF-8 key-value header (the
//! config echo plus `ckpt.stage`, `ckpt.created_unix`, and `ckpt.shapes`), a
//! `---` delimiter, and a binary block of length-prefixed little-endian f64
//! parameters followed by an FNV-1a checksum of the parameter bytes.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use dfpo_core::net::{Activation, ScoreNet};
use dfpo_core::rng::fnv1a64;
use thiserror::Error;

pub const MAGIC: &str = "DFPO1";
const DELIMITER: &[u8] = b"\n---\n";

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("checkpoint i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: first line is not `{MAGIC}`")]
    Magic,
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
}

impl CkptError {
    /// True when the failure is a missing file rather than corrupt contents.
    pub fn is_not_found(&self) -> bool {
        matches!(self, CkptError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CkptError {
    CkptError::Io { path: path.display().to_string(), source }
}

/// A loaded checkpoint: the embedded config text (everything in the header
/// except the `ckpt.*` bookkeeping keys), training progress, declared
/// parameter shapes, and the verified flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    /// Stages completed when the checkpoint was written (0 = untrained).
    pub stage: usize,
    pub created_unix: u64,
    /// `(rows, cols)` per tensor in flat order: layer weights then biases.
    pub shapes: Vec<(usize, usize)>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    /// Layer widths implied by the shape list.
    pub fn widths(&self) -> Result<Vec<usize>, CkptError> {
        widths_from_shapes(&self.shapes)
    }

    /// Activation recorded in the embedded config.
    pub fn activation(&self) -> Result<Activation, CkptError> {
        let value = header_value(&self.config_text, "net.activation")
            .ok_or_else(|| CkptError::Header("missing net.activation".into()))?;
        Activation::parse(value)
            .ok_or_else(|| CkptError::Header(format!("unknown activation `{value}`")))
    }

    /// Reconstruct the network from the stored shapes and parameters.
    pub fn rebuild_net(&self) -> Result<ScoreNet, CkptError> {
        let widths = self.widths()?;
        ScoreNet::from_flat_params(widths, self.activation()?, &self.params)
            .map_err(|e| CkptError::Shape(e.to_string()))
    }
}

/// Find `key = value` in header text; returns the trimmed value.
pub fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|line| {
        let (k, v) = line.split_once('=')?;
        if k.trim() == key {
            Some(v.trim())
        } else {
            None
        }
    })
}

fn shapes_of(net: &ScoreNet) -> Vec<(usize, usize)> {
    let widths = net.widths();
    let mut shapes = Vec::with_capacity(2 * (widths.len() - 1));
    for l in 0..widths.len() - 1 {
        shapes.push((widths[l + 1], widths[l]));
        shapes.push((1, widths[l + 1]));
    }
    shapes
}

fn format_shapes(shapes: &[(usize, usize)]) -> String {
    let parts: Vec<String> = shapes.iter().map(|(r, c)| format!("{r}x{c}")).collect();
    parts.join(",")
}

fn parse_shapes(text: &str) -> Result<Vec<(usize, usize)>, CkptError> {
    text.split(',')
        .map(|part| {
            let (r, c) = part
                .trim()
                .split_once('x')
                .ok_or_else(|| CkptError::Header(format!("bad shape entry `{part}`")))?;
            let rows = r.parse().map_err(|_| CkptError::Header(format!("bad shape entry `{part}`")))?;
            let cols = c.parse().map_err(|_| CkptError::Header(format!("bad shape entry `{part}`")))?;
            Ok((rows, cols))
        })
        .collect()
}

/// Recover layer widths from the shape list, validating that weight and bias
/// shapes chain consistently.
fn widths_from_shapes(shapes: &[(usize, usize)]) -> Result<Vec<usize>, CkptError> {
    if shapes.is_empty() || !shapes.len().is_multiple_of(2) {
        return Err(CkptError::Shape(format!(
            "expected weight/bias shape pairs, found {} entries",
            shapes.len()
        )));
    }
    let mut widths = vec![shapes[0].1];
    for pair in shapes.chunks(2) {
        let (w_rows, w_cols) = pair[0];
        let (b_rows, b_cols) = pair[1];
        if *widths.last().unwrap() != w_cols {
            return Err(CkptError::Shape(format!(
                "weight shape {w_rows}x{w_cols} does not chain from previous layer width {}",
                widths.last().unwrap()
            )));
        }
        if b_rows != 1 || b_cols != w_rows {
            return Err(CkptError::Shape(format!(
                "bias shape {b_rows}x{b_cols} does not match weight shape {w_rows}x{w_cols}"
            )));
        }
        widths.push(w_rows);
    }
    Ok(widths)
}

/// Write a checkpoint. `config_text` is the canonical config echo; it is
/// stored verbatim ahead of the `ckpt.*` bookkeeping keys.
pub fn save_checkpoint(
    path: &Path,
    config_text: &str,
    stage: usize,
    net: &ScoreNet,
) -> Result<(), CkptError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    let created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let shapes = shapes_of(net);
    let params = net.flat_params();

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(config_text);
    if !config_text.is_empty() && !config_text.ends_with('\n') {
        header.push('\n');
    }
    header.push_str(&format!("ckpt.stage = {stage}\n"));
    header.push_str(&format!("ckpt.created_unix = {created_unix}\n"));
    header.push_str(&format!("ckpt.shapes = {}", format_shapes(&shapes)));

    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(DELIMITER);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    let param_start = bytes.len();
    for v in &params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = fnv1a64(&bytes[param_start..]);
    bytes.extend_from_slice(&checksum.to_le_bytes());

    std::fs::write(path, &bytes).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CkptError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;

    let split = find_delimiter(&bytes)
        .ok_or_else(|| CkptError::Header("missing `---` header delimiter".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| CkptError::Header("header is not valid UTF-8".into()))?;
    let binary = &bytes[split + DELIMITER.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(CkptError::Magic);
    }
    let mut config_text = String::new();
    let mut stage = None;
    let mut created_unix = None;
    let mut shapes = None;
    for line in lines {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CkptError::Header(format!("bad header line `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "ckpt.stage" => {
                stage = Some(value.parse().map_err(|_| CkptError::Header(format!("bad stage `{value}`")))?)
            }
            "ckpt.created_unix" => {
                created_unix =
                    Some(value.parse().map_err(|_| CkptError::Header(format!("bad timestamp `{value}`")))?)
            }
            "ckpt.shapes" => shapes = Some(parse_shapes(value)?),
            _ => {
                config_text.push_str(line);
                config_text.push('\n');
            }
        }
    }
    let stage = stage.ok_or_else(|| CkptError::Header("missing ckpt.stage".into()))?;
    let created_unix = created_unix.ok_or_else(|| CkptError::Header("missing ckpt.created_unix".into()))?;
    let shapes = shapes.ok_or_else(|| CkptError::Header("missing ckpt.shapes".into()))?;

    // Validate the declared count against the header shapes before touching
    // any parameter bytes.
    if binary.len() < 8 {
        return Err(CkptError::Truncated("missing parameter count".into()));
    }
    let count = u64::from_le_bytes(binary[..8].try_into().unwrap()) as usize;
    let declared: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if count != declared {
        return Err(CkptError::Shape(format!(
            "header shapes declare {declared} parameters but the block is length-prefixed with {count}"
        )));
    }
    let expected_len = 8 + count * 8 + 8;
    if binary.len() < expected_len {
        return Err(CkptError::Truncated(format!(
            "parameter block holds {} bytes, expected {expected_len}",
            binary.len()
        )));
    }
    if binary.len() > expected_len {
        return Err(CkptError::Truncated(format!(
            "{} trailing bytes after the checksum",
            binary.len() - expected_len
        )));
    }

    let param_bytes = &binary[8..8 + count * 8];
    let stored = u64::from_le_bytes(binary[8 + count * 8..].try_into().unwrap());
    let computed = fnv1a64(param_bytes);
    if stored != computed {
        return Err(CkptError::Checksum { stored, computed });
    }
    let params: Vec<f64> = param_bytes
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
        .collect();

    Ok(Checkpoint { config_text, stage, created_unix, shapes, params })
}

fn find_delimiter(bytes: &[u8]) -> Option<usize> {
    bytes.windows(DELIMITER.len()).position(|w| w == DELIMITER)
}

/// Save then reload a network, returning the reloaded copy. Load verifies the
/// checksum; the caller can assert bitwise equality of parameters.
pub fn checkpoint_roundtrip(net: &ScoreNet, path: &Path) -> Result<ScoreNet, CkptError> {
    let config_text = format!("net.activation = {}\n", net.activation().name());
    save_checkpoint(path, &config_text, 0, net)?;
    load_checkpoint(path)?.rebuild_net()
}
