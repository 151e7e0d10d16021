//! Binary checkpoint format.
//!
//! ```text
//! "PCGM" | version u32 | config (u32 len + UTF-8 text)
//! | layer count u32 | per layer: name, trainable u8, weight, bias
//! | adam flag u8 [ t u64 | lr, β1, β2, ε f64 | per layer: m_w, v_w, m_b, v_b ]
//! | CRC32 of everything before it
//! ```
//!
//! Tensors are `ndim u32 | dims u32… | f32 LE values`; all integers are LE.
//! Parameters are stored at 32-bit precision, so a save/load round trip
//! rounds weights to the nearest f32.

use std::path::Path;

use super::{AdamConfig, AdamState, LayerParams, Model, ModelConfig, Moments, NnError, Tensor};

const MAGIC: &[u8; 4] = b"PCGM";
const VERSION: u32 = 1;

/// A model plus, optionally, the optimizer state that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Checkpoint {
        Checkpoint {
            model,
            optimizer: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, encode_checkpoint(self)).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint, NnError> {
        let bytes = std::fs::read(path).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        decode_checkpoint(&bytes, path)
    }

    /// Rounds parameters and optimizer moments to the stored precision, so
    /// that the in-memory value equals what a reload would produce.
    pub fn quantized(&self) -> Checkpoint {
        decode_checkpoint(&encode_checkpoint(self), Path::new("<memory>"))
            .expect("round trip of a freshly encoded checkpoint")
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_values(out: &mut Vec<u8>, shape: &[usize], data: &[f64]) {
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, &ck.model.config.to_string());
    let layers: Vec<&LayerParams> = ck.model.params.iter().flatten().collect();
    put_u32(&mut out, layers.len() as u32);
    for p in &layers {
        put_str(&mut out, &p.name);
        out.push(p.trainable as u8);
        put_values(&mut out, p.weight.shape(), p.weight.data());
        put_values(&mut out, p.bias.shape(), p.bias.data());
    }
    match &ck.optimizer {
        None => out.push(0),
        Some(st) => {
            out.push(1);
            out.extend_from_slice(&st.t.to_le_bytes());
            for v in [
                st.config.learning_rate,
                st.config.beta1,
                st.config.beta2,
                st.config.epsilon,
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for (mo, p) in st.moments.iter().flatten().zip(&layers) {
                put_values(&mut out, p.weight.shape(), &mo.m_weight);
                put_values(&mut out, p.weight.shape(), &mo.v_weight);
                put_values(&mut out, p.bias.shape(), &mo.m_bias);
                put_values(&mut out, p.bias.shape(), &mo.v_bias);
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "unexpected end of data".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8".to_string())
    }

    fn tensor(&mut self) -> Result<Tensor, String> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(format!("implausible tensor rank {ndim}"));
        }
        let shape = (0..ndim)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= self.bytes.len()))
            .ok_or("implausible tensor size")?;
        let raw = self.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Tensor::new(shape, data).map_err(|e| e.to_string())
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint, NnError> {
    decode(bytes).map_err(|reason| NnError::CheckpointCorrupt {
        path: path.to_path_buf(),
        reason,
    })
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err("missing PCGM header".into());
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err("CRC mismatch".into());
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let config: ModelConfig = r.string()?.parse().map_err(|e: NnError| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    let names = config.param_layer_names();
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(format!(
            "{count} parameter layers stored, config has {}",
            names.len()
        ));
    }
    let mut params: Vec<Option<LayerParams>> = vec![None; config.layers.len()];
    for (idx, expected) in &names {
        let name = r.string()?;
        if &name != expected {
            return Err(format!("layer `{name}` where `{expected}` was expected"));
        }
        let trainable = r.u8()? != 0;
        let weight = r.tensor()?;
        let bias = r.tensor()?;
        params[*idx] = Some(LayerParams {
            name,
            weight,
            bias,
            trainable,
        });
    }
    let model = Model { config, params };
    let reference = Model::zeroed(&model.config).map_err(|e| e.to_string())?;
    for (a, b) in model.params.iter().flatten().zip(reference.params.iter().flatten()) {
        if a.weight.shape() != b.weight.shape() || a.bias.shape() != b.bias.shape() {
            return Err(format!("tensor shapes for `{}` disagree with the config", a.name));
        }
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let config = AdamConfig {
                learning_rate: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                epsilon: r.f64()?,
            };
            let mut moments = Vec::with_capacity(model.params.len());
            for p in &model.params {
                moments.push(match p {
                    None => None,
                    Some(p) => {
                        let mut next = |len: usize| -> Result<Vec<f64>, String> {
                            let t = r.tensor()?;
                            if t.len() != len {
                                return Err(format!("moment size mismatch for `{}`", p.name));
                            }
                            Ok(t.into_data())
                        };
                        Some(Moments {
                            m_weight: next(p.weight.len())?,
                            v_weight: next(p.weight.len())?,
                            m_bias: next(p.bias.len())?,
                            v_bias: next(p.bias.len())?,
                        })
                    }
                });
            }
            Some(AdamState { config, t, moments })
        }
        f => return Err(format!("bad optimizer flag {f}")),
    };
    if r.pos != body.len() {
        return Err("trailing bytes after optimizer block".into());
    }
    Ok(Checkpoint { model, optimizer })
}
