//! Named parameter storage with Adam moments, and its on-disk formats.
//!
//! Two encodings are supported. The JSON form is what model files embed. The
//! binary form (`PSTB` magic, little-endian) is a compact, bit-exact snapshot
//! of the full optimizer state.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const PARAM_FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 4] = b"PSTB";

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub m: Matrix,
    pub v: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter with zeroed moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter `{name}`")));
        }
        let (r, c) = value.shape();
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        Ok(ParamId(id))
    }

    /// Registers a parameter drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        self.insert(name, value)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub(crate) fn bump_step(&mut self) {
        self.step += 1;
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// A zeroed gradient buffer keyed like this store.
    pub fn zero_grads(&self) -> Grads {
        Grads {
            entries: self
                .params
                .iter()
                .map(|p| (p.name.clone(), Matrix::zeros(p.value.rows(), p.value.cols())))
                .collect(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(StoreFile::from(self)).expect("param store is always serializable")
    }

    pub fn from_json_value(value: serde_json::Value) -> std::result::Result<Self, String> {
        let file: StoreFile = serde_json::from_value(value).map_err(|e| e.to_string())?;
        file.into_store()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&StoreFile::from(self)).expect("param store is always serializable")
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, String> {
        let file: StoreFile = serde_json::from_str(s).map_err(|e| e.to_string())?;
        file.into_store()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&PARAM_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            let name = p.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(p.value.rows() as u64).to_le_bytes())?;
            w.write_all(&(p.value.cols() as u64).to_le_bytes())?;
            for m in [&p.value, &p.m, &p.v] {
                for x in m.as_slice() {
                    w.write_all(&x.to_bits().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::result::Result<Self, String> {
        let io = |e: std::io::Error| e.to_string();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != BINARY_MAGIC {
            return Err("not a parameter store (bad magic)".into());
        }
        let version = read_u32(&mut r).map_err(io)?;
        if version != PARAM_FORMAT_VERSION {
            return Err(format!("unsupported parameter store version {version}"));
        }
        let step = read_u64(&mut r).map_err(io)?;
        let count = read_u32(&mut r).map_err(io)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r).map_err(io)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|e| e.to_string())?;
            let rows = read_u64(&mut r).map_err(io)? as usize;
            let cols = read_u64(&mut r).map_err(io)? as usize;
            let mut read_matrix = || -> std::result::Result<Matrix, String> {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(f64::from_bits(read_u64(&mut r).map_err(io)?));
                }
                Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
            };
            let value = read_matrix()?;
            let m = read_matrix()?;
            let v = read_matrix()?;
            let id = store.insert(name, value).map_err(|e| e.to_string())?;
            let p = &mut store.params[id.0];
            p.m = m;
            p.v = v;
        }
        store.step = step;
        Ok(store)
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Gradient buffer with the same keys and shapes as a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    entries: Vec<(String, Matrix)>,
}

impl Grads {
    /// Builds a gradient set from explicit `(name, gradient)` pairs, e.g. from an
    /// external source. Keys are validated against the store when applied.
    pub fn from_entries(entries: Vec<(String, Matrix)>) -> Self {
        Grads { entries }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn entries(&self) -> &[(String, Matrix)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Matrix)] {
        &mut self.entries
    }

    pub fn zero(&mut self) {
        self.entries.iter_mut().for_each(|(_, m)| m.fill(0.0));
    }

    pub fn scale(&mut self, k: f64) {
        self.entries.iter_mut().for_each(|(_, m)| m.scale(k));
    }

    pub fn add_assign(&mut self, other: &Grads) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::contract("gradient sets have different key counts"));
        }
        for ((n1, a), (n2, b)) in self.entries.iter_mut().zip(&other.entries) {
            if n1 != n2 {
                return Err(Error::contract(format!("gradient key `{n1}` vs `{n2}`")));
            }
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, m)| m.is_finite())
    }

    /// Checks that the keys and shapes line up with `store`, in order.
    pub fn check_against(&self, store: &ParamStore) -> Result<()> {
        for p in store.params() {
            if !self.entries.iter().any(|(n, _)| *n == p.name) {
                return Err(Error::contract(format!("missing gradient for `{}`", p.name)));
            }
        }
        for (i, (name, g)) in self.entries.iter().enumerate() {
            let Some(p) = store.params().get(i).filter(|p| p.name == *name) else {
                return Err(Error::contract(format!("unexpected gradient key `{name}`")));
            };
            if g.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "gradient",
                    left: p.value.shape(),
                    right: g.shape(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    format: String,
    version: u32,
    step: u64,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<Vec<f64>>,
}

impl From<&ParamStore> for StoreFile {
    fn from(store: &ParamStore) -> Self {
        StoreFile {
            format: "paramstore".into(),
            version: PARAM_FORMAT_VERSION,
            step: store.step,
            params: store
                .params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.as_slice().to_vec(),
                    m: Some(p.m.as_slice().to_vec()),
                    v: Some(p.v.as_slice().to_vec()),
                })
                .collect(),
        }
    }
}

impl StoreFile {
    fn into_store(self) -> std::result::Result<ParamStore, String> {
        if self.format != "paramstore" {
            return Err(format!("unexpected format tag `{}`", self.format));
        }
        if self.version != PARAM_FORMAT_VERSION {
            return Err(format!("unsupported parameter store version {}", self.version));
        }
        let mut store = ParamStore::new();
        for e in self.params {
            let mk = |data: Vec<f64>| Matrix::from_vec(e.rows, e.cols, data).map_err(|e| e.to_string());
            let value = mk(e.values)?;
            let m = match e.m {
                Some(m) => mk(m)?,
                None => Matrix::zeros(e.rows, e.cols),
            };
            let v = match e.v {
                Some(v) => mk(v)?,
                None => Matrix::zeros(e.rows, e.cols),
            };
            let id = store.insert(e.name, value).map_err(|e| e.to_string())?;
            store.params[id.0].m = m;
            store.params[id.0].v = v;
        }
        store.step = self.step;
        Ok(store)
    }
}
