//! Model container: `CVOAM1` magic, little-endian u32 header length, UTF-8
//! JSON header, then every tensor as raw little-endian f32 in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Network, NetworkError, Tensor, Weights};
use crate::corpus::PhoneInventory;
use crate::features::MelConfig;
use crate::segmenter::WindowMs;

pub const MAGIC: &str = "CVOAM1";
const FORMAT_VERSION: u32 = 1;

/// Everything besides the weights that is needed to score new audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub inventory: PhoneInventory,
    pub window_ms: WindowMs,
    pub mel: MelConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    network: Network<f32>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    architecture: Architecture,
    inventory: PhoneInventory,
    window_ms: WindowMs,
    mel: MelConfig,
    tensors: Vec<TensorEntry>,
}

impl Model {
    /// Bundle a network with its metadata; the input shape must match the
    /// mel/window settings and the output width the inventory size.
    pub fn new(network: Network<f32>, meta: ModelMeta) -> Result<Self, NetworkError> {
        let arch = network.architecture();
        if arch.input_height != meta.mel.n_mels || arch.input_width != meta.window_ms.frames() {
            return Err(NetworkError::ShapeMismatch(format!(
                "network input {}x{} does not match {} mels x {} frames",
                arch.input_height,
                arch.input_width,
                meta.mel.n_mels,
                meta.window_ms.frames()
            )));
        }
        if arch.classes != meta.inventory.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "network has {} outputs, inventory has {} consonants",
                arch.classes,
                meta.inventory.len()
            )));
        }
        Ok(Model { network, meta })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NetworkError> {
        let arch = self.network.architecture();
        let header = Header {
            magic: MAGIC.to_string(),
            version: FORMAT_VERSION,
            architecture: arch.clone(),
            inventory: self.meta.inventory.clone(),
            window_ms: self.meta.window_ms,
            mel: self.meta.mel.clone(),
            tensors: arch
                .param_shapes()?
                .into_iter()
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| NetworkError::CorruptFile(format!("header encoding: {e}")))?;
        let n_values: usize = self
            .network
            .weights()
            .tensors()
            .iter()
            .map(|t| t.len())
            .sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + 4 * n_values);
        out.extend_from_slice(MAGIC.as_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.network.weights().tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        let corrupt = |msg: &str| NetworkError::CorruptFile(msg.to_string());
        let prefix = &MAGIC.as_bytes()[..MAGIC.len() - 1];
        if bytes.len() < MAGIC.len() || &bytes[..prefix.len()] != prefix {
            return Err(corrupt("missing magic"));
        }
        if bytes[..MAGIC.len()] != *MAGIC.as_bytes() {
            return Err(NetworkError::VersionMismatch(
                String::from_utf8_lossy(&bytes[..MAGIC.len()]).into_owned(),
            ));
        }
        let rest = &bytes[MAGIC.len()..];
        if rest.len() < 4 {
            return Err(corrupt("truncated header length"));
        }
        let header_len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let rest = &rest[4..];
        if rest.len() < header_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| NetworkError::CorruptFile(format!("header: {e}")))?;
        if header.magic != MAGIC || header.version != FORMAT_VERSION {
            return Err(NetworkError::VersionMismatch(format!(
                "{} version {}",
                header.magic, header.version
            )));
        }
        let expected = header
            .architecture
            .param_shapes()
            .map_err(|e| NetworkError::ShapeMismatch(e.to_string()))?;
        if expected.len() != header.tensors.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "architecture needs {} tensors, header lists {}",
                expected.len(),
                header.tensors.len()
            )));
        }
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(NetworkError::ShapeMismatch(format!(
                    "{name} {shape:?} declared as {} {:?}",
                    entry.name, entry.shape
                )));
            }
        }
        let mut data = &rest[header_len..];
        let mut weights = Weights::<f32>::zeros(&header.architecture)?;
        for (t, (_, shape)) in weights.tensors_mut().into_iter().zip(&expected) {
            let n: usize = shape.iter().product();
            if data.len() < 4 * n {
                return Err(corrupt("truncated tensor data"));
            }
            let values = data[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            *t = Tensor::from_vec(shape, values)?;
            data = &data[4 * n..];
        }
        if !data.is_empty() {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        let network = Network::new(header.architecture, weights)?;
        Model::new(
            network,
            ModelMeta {
                inventory: header.inventory,
                window_ms: header.window_ms,
                mel: header.mel,
            },
        )
    }
}

pub fn write_model<W: Write>(model: &Model, mut writer: W) -> Result<(), NetworkError> {
    let bytes = model.to_bytes()?;
    writer.write_all(&bytes).map_err(|source| NetworkError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// Write the model atomically (temporary sibling file, then rename).
pub fn save_model(model: &Model, path: &Path) -> Result<(), NetworkError> {
    let bytes = model.to_bytes()?;
    let io = |source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, &bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

pub fn load_model(path: &Path) -> Result<Model, NetworkError> {
    let bytes = fs::read(path).map_err(|source| NetworkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Model::from_bytes(&bytes)
}
