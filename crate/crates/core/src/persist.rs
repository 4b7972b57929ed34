//! Model archives and metrics reports.
//!
//! Model archive layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BAE1"
//! 4       4     u32 format version (currently 1)
//! 8       4     u32 header length H
//! 12      H     JSON header: num_encoders, trained_stages,
//!               encoder_spec, decoder_spec
//! 12+H    ..    payload: for each encoder then the decoder:
//!                 u64 Adam step counter, then per parameterized layer
//!                 the weight, bias and Adam moment tensors (m_w, v_w,
//!                 m_b, v_b) as raw f64 little-endian in spec order
//! end     32    SHA-256 over every preceding byte
//! ```
//!
//! Tensor shapes are implied by the specs in the header, so the payload is
//! raw numbers only and load(save(model)) is bitwise exact.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{EnsembleModel, TraceRow};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"BAE1";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArchiveHeader {
    num_encoders: usize,
    trained_stages: usize,
    encoder_spec: NetworkSpec,
    decoder_spec: NetworkSpec,
}

pub fn save_model(model: &EnsembleModel, path: &Path) -> Result<()> {
    let header = ArchiveHeader {
        num_encoders: model.encoders.len(),
        trained_stages: model.trained_stages,
        encoder_spec: model.encoders[0].spec.clone(),
        decoder_spec: model.decoder.spec.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION)?;
    buf.write_u32::<LittleEndian>(header_json.len() as u32)?;
    buf.extend_from_slice(&header_json);
    for net in model.encoders.iter().chain(std::iter::once(&model.decoder)) {
        write_network(&mut buf, net)?;
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EnsembleModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 44 {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: 0,
            reason: "file too short for an archive".into(),
        });
    }
    let (payload, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != checksum {
        return Err(Error::Checksum);
    }

    let mut cur = Cursor::new(payload);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: 0,
            reason: format!("bad magic {magic:?}"),
        });
    }
    let version = cur.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = cur.read_u32::<LittleEndian>()? as usize;
    let mut header_json = vec![0u8; header_len];
    cur.read_exact(&mut header_json)?;
    let header: ArchiveHeader = serde_json::from_slice(&header_json)?;

    let mut encoders = Vec::with_capacity(header.num_encoders);
    for _ in 0..header.num_encoders {
        encoders.push(read_network(&mut cur, &header.encoder_spec)?);
    }
    let decoder = read_network(&mut cur, &header.decoder_spec)?;
    Ok(EnsembleModel {
        encoders,
        decoder,
        trained_stages: header.trained_stages,
    })
}

fn write_network(buf: &mut Vec<u8>, net: &Network) -> Result<()> {
    buf.write_u64::<LittleEndian>(net.step)?;
    for (p, m) in net.params.iter().zip(&net.moments) {
        let (Some(p), Some(m)) = (p, m) else { continue };
        for t in [&p.weight, &p.bias, &m.m_weight, &m.v_weight, &m.m_bias, &m.v_bias] {
            write_tensor(buf, t)?;
        }
    }
    Ok(())
}

fn read_network(cur: &mut Cursor<&[u8]>, spec: &NetworkSpec) -> Result<Network> {
    let mut net = Network::init(spec.clone(), crate::network::InitScheme::PaperNormal, 0)?;
    net.step = cur.read_u64::<LittleEndian>()?;
    for i in 0..net.params.len() {
        let (Some(p), Some(m)) = (net.params[i].as_mut(), net.moments[i].as_mut()) else {
            continue;
        };
        for t in [
            &mut p.weight,
            &mut p.bias,
            &mut m.m_weight,
            &mut m.v_weight,
            &mut m.m_bias,
            &mut m.v_bias,
        ] {
            read_tensor(cur, t)?;
        }
    }
    Ok(net)
}

fn write_tensor(buf: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    for &v in t.data() {
        buf.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor(cur: &mut Cursor<&[u8]>, t: &mut Tensor) -> Result<()> {
    for v in t.data_mut() {
        *v = cur.read_f64::<LittleEndian>().map_err(|_| Error::Format {
            path: "<archive>".into(),
            offset: cur.position(),
            reason: "truncated payload".into(),
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reports

/// One metric value with its context (stage, class, reducer, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub context: String,
}

/// Metrics record emitted by the evaluation pipelines: configuration
/// snapshot, named metric values and the per-iteration training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub config: serde_json::Value,
    pub metrics: Vec<MetricRecord>,
    pub trace: Vec<TraceRow>,
}

impl EvalReport {
    pub fn new(run_id: &str) -> Self {
        EvalReport {
            run_id: run_id.to_string(),
            config: serde_json::Value::Null,
            metrics: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: EvalReport) {
        self.metrics.extend(other.metrics);
        self.trace.extend(other.trace);
    }
}

/// Writes `report.json` plus flat delimited tables: `metrics.csv` and, when
/// a trace is present, `trace.csv` with per-iteration validation loss.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(report)?;
    std::fs::write(dir.join("report.json"), json)?;

    let mut metrics = std::fs::File::create(dir.join("metrics.csv"))?;
    writeln!(metrics, "name,value,context")?;
    for m in &report.metrics {
        writeln!(metrics, "{},{:.17e},{}", m.name, m.value, m.context)?;
    }

    if !report.trace.is_empty() {
        let mut trace = std::fs::File::create(dir.join("trace.csv"))?;
        writeln!(trace, "stage,iteration,train_mse,val_mse")?;
        for r in &report.trace {
            let val = r.val_mse.map(|v| format!("{v:.17e}")).unwrap_or_default();
            writeln!(trace, "{},{},{:.17e},{}", r.stage, r.iteration, r.train_mse, val)?;
        }
    }
    Ok(())
}

pub fn load_report(dir: &Path) -> Result<EvalReport> {
    let bytes = std::fs::read(dir.join("report.json"))?;
    Ok(serde_json::from_slice(&bytes)?)
}
