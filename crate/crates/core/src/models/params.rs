//! Parameter storage, gradients, and the binary checkpoint container.
//!
//! Parameters are stored as `f32`; arithmetic happens in `f64` and the update
//! result is rounded back. Checkpoints are a magic string, a JSON header and
//! the raw little-endian tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Param {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| x as f64).collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Registers a tensor initialized uniformly in `[-scale, scale]`.
    pub fn add_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> usize {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..=scale) as f32)
            .collect();
        self.push(name, rows, cols, data)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.push(name, rows, cols, vec![0.0; rows * cols])
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f32>) -> usize {
        self.params.push(Param {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        self.params.len() - 1
    }

    pub fn get(&self, slot: usize) -> &Param {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Param {
        &mut self.params[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// `θ ← θ + step·g` for every slot with a gradient.
    pub fn apply(&mut self, grads: &Grads, step: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.slots) {
            if let Some(g) = g {
                for (x, d) in p.data.iter_mut().zip(&g.data) {
                    *x = (*x as f64 + step * d) as f32;
                }
            }
        }
    }

    /// SHA-256 over names, shapes and raw bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            h.update((p.rows as u64).to_le_bytes());
            h.update((p.cols as u64).to_le_bytes());
            for x in &p.data {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn tensor_meta(&self) -> Vec<TensorMeta> {
        self.params
            .iter()
            .map(|p| TensorMeta {
                name: p.name.clone(),
                shape: [p.rows, p.cols],
            })
            .collect()
    }

    /// Replaces values from tensors in the same layout.
    pub fn load_values(&mut self, metas: &[TensorMeta], data: Vec<Vec<f32>>) -> Result<()> {
        if metas.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                metas.len()
            )));
        }
        for ((p, m), d) in self.params.iter_mut().zip(metas).zip(data) {
            if p.name != m.name || [p.rows, p.cols] != m.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} [{}, {}]",
                    m.name, m.shape, p.name, p.rows, p.cols
                )));
            }
            p.data = d;
        }
        Ok(())
    }

    /// Copies values of the listed slots from `other` (same layout).
    pub fn copy_slots_from(&mut self, other: &ParamSet, slots: &[usize]) {
        for &s in slots {
            self.params[s].data.clone_from(&other.params[s].data);
        }
    }
}

/// Per-slot gradients; untouched slots stay `None`.
#[derive(Debug, Clone)]
pub struct Grads {
    pub slots: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    pub fn new(params: &ParamSet) -> Self {
        Grads {
            slots: vec![None; params.len()],
            shapes: params.params.iter().map(|p| (p.rows, p.cols)).collect(),
        }
    }

    fn slot_mut(&mut self, slot: usize) -> &mut Matrix {
        let (r, c) = self.shapes[slot];
        self.slots[slot].get_or_insert_with(|| Matrix::zeros(r, c))
    }

    pub fn accumulate(&mut self, slot: usize, g: &Matrix) {
        self.slot_mut(slot).add_assign(g);
    }

    pub fn accumulate_rows(&mut self, slot: usize, ids: &[usize], g: &Matrix) {
        let m = self.slot_mut(slot);
        for (r, &id) in ids.iter().enumerate() {
            let src = g.row(r);
            for (o, x) in m.row_mut(id).iter_mut().zip(src) {
                *o += x;
            }
        }
    }

    /// `self += w·other`
    pub fn add_scaled(&mut self, other: &Grads, w: f64) {
        for (slot, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.slot_mut(slot).add_scaled(g, w);
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .flat_map(|m| m.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn get(&self, slot: usize) -> Option<&Matrix> {
        self.slots[slot].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub vocab_hash: String,
    pub seed: u64,
    pub tensors: Vec<TensorMeta>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

const MAGIC: &[u8; 8] = b"CAUSAUGK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let header = serde_json::to_vec(&self.header)?;
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        write(&VERSION.to_le_bytes())?;
        write(&(header.len() as u32).to_le_bytes())?;
        write(&header)?;
        for t in &self.data {
            let mut buf = Vec::with_capacity(t.len() * 4);
            for x in t {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            write(&buf)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + hlen {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + hlen])?;
        let mut off = 16 + hlen;
        let mut data = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let n = t.shape[0] * t.shape[1];
            if bytes.len() < off + 4 * n {
                return Err(bad(&format!("truncated tensor {}", t.name)));
            }
            data.push(
                bytes[off..off + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            off += 4 * n;
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Checkpoint { header, data })
    }
}
