//! Binary checkpoint format shared by the stage-1 encoder, the group head,
//! and the baseline classifier.
//!
//! Layout: 8-byte magic, u32 little-endian JSON header length, JSON header
//! (config echo, tensor names and shapes, loss/accuracy curves), then raw
//! f64 little-endian tensor data in header order, parameters first, buffers
//! after. The encoder fingerprint is the SHA-256 of the tensor byte block.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use patchgroup_core::nn::{Encoder, EncoderConfig, Stack};
use patchgroup_core::tensor::Tensor;
use patchgroup_core::Error as CoreError;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"PGCHKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// What this checkpoint holds: "encoder", "head", or "baseline".
    pub kind: String,
    /// Serialized config echo (shape depends on `kind`).
    pub config: serde_json::Value,
    pub params: Vec<TensorInfo>,
    pub buffers: Vec<TensorInfo>,
    /// Named curves (per-epoch series) recorded during training.
    pub curves: serde_json::Map<String, serde_json::Value>,
}

pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<Tensor>,
    pub buffers: Vec<Tensor>,
    /// Hex SHA-256 over the tensor byte block.
    pub fingerprint: String,
}

fn tensor_bytes(tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn fingerprint_of(params: &[&Tensor], buffers: &[&Tensor]) -> String {
    let mut h = Sha256::new();
    h.update(tensor_bytes(params));
    h.update(tensor_bytes(buffers));
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    named_params: &[(String, &Tensor)],
    named_buffers: &[(String, &Tensor)],
    curves: &[(&str, &[f64])],
) -> Result<String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let header = CheckpointHeader {
        kind: kind.to_string(),
        config,
        params: named_params
            .iter()
            .map(|(n, t)| TensorInfo { name: n.clone(), shape: t.shape().to_vec() })
            .collect(),
        buffers: named_buffers
            .iter()
            .map(|(n, t)| TensorInfo { name: n.clone(), shape: t.shape().to_vec() })
            .collect(),
        curves: curves
            .iter()
            .map(|(n, c)| (n.to_string(), serde_json::json!(c)))
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CliError::Format(format!("checkpoint header: {e}")))?;
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(CliError::io(path.display().to_string()))?,
    );
    let io_err = |e: std::io::Error| CliError::Io { path: path.display().to_string(), source: e };
    file.write_all(MAGIC).map_err(io_err)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    file.write_all(&header_json).map_err(io_err)?;
    let p: Vec<&Tensor> = named_params.iter().map(|(_, t)| *t).collect();
    let b: Vec<&Tensor> = named_buffers.iter().map(|(_, t)| *t).collect();
    let block_p = tensor_bytes(&p);
    let block_b = tensor_bytes(&b);
    file.write_all(&block_p).map_err(io_err)?;
    file.write_all(&block_b).map_err(io_err)?;
    file.flush().map_err(io_err)?;

    let mut h = Sha256::new();
    h.update(&block_p);
    h.update(&block_b);
    Ok(h.finalize().iter().map(|x| format!("{x:02x}")).collect())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(CliError::io(path.display().to_string()))?,
    );
    let io_err = |e: std::io::Error| CliError::Io { path: path.display().to_string(), source: e };
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(CliError::Format(format!(
            "{} is not a patchgroup checkpoint",
            path.display()
        )));
    }
    let mut len4 = [0u8; 4];
    file.read_exact(&mut len4).map_err(io_err)?;
    let hlen = u32::from_le_bytes(len4) as usize;
    let mut hbuf = vec![0u8; hlen];
    file.read_exact(&mut hbuf).map_err(io_err)?;
    let header: CheckpointHeader = serde_json::from_slice(&hbuf)
        .map_err(|e| CliError::Format(format!("{}: bad header: {e}", path.display())))?;

    let read_block = |file: &mut dyn Read, infos: &[TensorInfo]| -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(infos.len());
        for info in infos {
            let n: usize = info.shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            file.read_exact(&mut raw)
                .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push(Tensor::from_vec(&info.shape, data)?);
        }
        Ok(out)
    };
    let params = read_block(&mut file, &header.params)?;
    let buffers = read_block(&mut file, &header.buffers)?;
    let fingerprint = fingerprint_of(
        &params.iter().collect::<Vec<_>>(),
        &buffers.iter().collect::<Vec<_>>(),
    );
    Ok(Checkpoint { header, params, buffers, fingerprint })
}

// ---------------------------------------------------------------------------
// Encoder-specific helpers
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct EncoderConfigEcho {
    pub backbone: String,
    pub output_dim: usize,
    pub projection_dim: usize,
    pub projection_mlp: bool,
}

impl EncoderConfigEcho {
    pub fn from_config(cfg: &EncoderConfig) -> Self {
        EncoderConfigEcho {
            backbone: cfg.backbone.as_str().to_string(),
            output_dim: cfg.output_dim,
            projection_dim: cfg.projection_dim,
            projection_mlp: cfg.projection_mlp,
        }
    }

    pub fn to_config(&self) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            backbone: patchgroup_core::nn::Backbone::parse(&self.backbone)?,
            output_dim: self.output_dim,
            projection_dim: self.projection_dim,
            projection_mlp: self.projection_mlp,
        })
    }
}

/// Save the trained encoder (trunk + projection) plus its loss curve.
pub fn save_encoder(
    path: &Path,
    encoder: &Encoder,
    loss_curve: &[f64],
    best_epoch: usize,
) -> Result<String> {
    let names = encoder.param_names();
    let params = encoder.params();
    let named: Vec<(String, &Tensor)> =
        names.into_iter().zip(params.into_iter()).collect();
    let trunk_buffers = encoder.trunk.buffers();
    let proj_buffers = encoder.proj.buffers();
    let mut named_buffers: Vec<(String, &Tensor)> = Vec::new();
    for (i, b) in trunk_buffers.into_iter().enumerate() {
        named_buffers.push((format!("trunk.buf.{i}"), b));
    }
    for (i, b) in proj_buffers.into_iter().enumerate() {
        named_buffers.push((format!("proj.buf.{i}"), b));
    }
    let mut config = serde_json::to_value(EncoderConfigEcho::from_config(&encoder.cfg))
        .map_err(|e| CliError::Format(e.to_string()))?;
    config["best_epoch"] = serde_json::json!(best_epoch);
    save(
        path,
        "encoder",
        config,
        &named,
        &named_buffers,
        &[("train_loss", loss_curve)],
    )
}

/// Rebuild the encoder from a checkpoint; weights and buffers restored.
pub fn load_encoder(path: &Path) -> Result<(Encoder, CheckpointHeader, String)> {
    let ck = load(path)?;
    if ck.header.kind != "encoder" {
        return Err(CliError::Format(format!(
            "{} holds a {:?} checkpoint, expected an encoder",
            path.display(),
            ck.header.kind
        )));
    }
    let echo: EncoderConfigEcho = serde_json::from_value(ck.header.config.clone())
        .map_err(|e| CliError::Format(format!("{}: config echo: {e}", path.display())))?;
    let cfg = echo.to_config()?;
    let mut encoder = Encoder::init(&cfg, patchgroup_core::rng::StreamKey::new(0))?;
    restore_params(&mut encoder.params_mut(), &ck.params, path)?;
    let mut bufs = encoder.trunk.buffers_mut();
    bufs.extend(encoder.proj.buffers_mut());
    restore_params(&mut bufs, &ck.buffers, path)?;
    Ok((encoder, ck.header, ck.fingerprint))
}

/// Save a classifier stack (group head or baseline).
pub fn save_stack(
    path: &Path,
    kind: &str,
    stack: &Stack,
    config: serde_json::Value,
    curves: &[(&str, &[f64])],
) -> Result<String> {
    let params = stack.params();
    let named: Vec<(String, &Tensor)> = params
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("p{i}"), t))
        .collect();
    let buffers = stack.buffers();
    let named_buffers: Vec<(String, &Tensor)> = buffers
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("b{i}"), t))
        .collect();
    save(path, kind, config, &named, &named_buffers, curves)
}

/// Restore a stack whose architecture the caller has already rebuilt.
pub fn restore_stack(stack: &mut Stack, ck: &Checkpoint, path: &Path) -> Result<()> {
    restore_params(&mut stack.params_mut(), &ck.params, path)?;
    restore_params(&mut stack.buffers_mut(), &ck.buffers, path)?;
    Ok(())
}

fn restore_params(dst: &mut [&mut Tensor], src: &[Tensor], path: &Path) -> Result<()> {
    if dst.len() != src.len() {
        return Err(CliError::Core(CoreError::Integrity(format!(
            "{}: checkpoint has {} tensors, model expects {}",
            path.display(),
            src.len(),
            dst.len()
        ))));
    }
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        if d.shape() != s.shape() {
            return Err(CliError::Core(CoreError::Integrity(format!(
                "{}: tensor shape {:?} does not match model {:?}",
                path.display(),
                s.shape(),
                d.shape()
            ))));
        }
        d.data_mut().copy_from_slice(s.data());
    }
    Ok(())
}
