use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;

use super::Tensor;
use crate::error::{GpaError, Result};

const MAGIC: &[u8; 4] = b"GPAP";
const VERSION: u32 = 1;

/// Named tensors in insertion order. Also used for gradient maps, which
/// share the names and shapes of the parameters they belong to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Merges two sets with disjoint names.
    pub fn merged(&self, other: &ParamSet) -> Self {
        let mut out = self.clone();
        for (k, t) in other.iter() {
            out.insert(k.clone(), t.clone());
        }
        out
    }

    /// The subset of entries whose names start with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, t)| (k.clone(), t.clone()))
                .collect(),
        }
    }

    fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(GpaError::Shape(format!(
                "parameter sets differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (k, t) in self.iter() {
            match other.get(k) {
                Some(o) if o.shape() == t.shape() => {}
                _ => return Err(GpaError::Shape(format!("parameter `{k}` missing or reshaped"))),
            }
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) -> Result<()> {
        self.check_compatible(other)?;
        for (k, t) in self.tensors.iter_mut() {
            let o = &other.tensors[k];
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += alpha * b;
            }
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), t.map(|v| v * alpha)))
                .collect(),
        }
    }

    pub fn dot(&self, other: &ParamSet) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .tensors
            .iter()
            .map(|(k, t)| {
                t.data()
                    .iter()
                    .zip(other.tensors[k].data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.tensors.values().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(k, _)| k.as_str())
    }

    /// Flat view of all values in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Mutable access to the `i`-th scalar in flatten order.
    pub fn value_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in self.tensors.values_mut() {
            if i < t.len() {
                return &mut t.data_mut()[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        fn take<const N: usize>(bytes: &mut &[u8]) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            bytes
                .read_exact(&mut buf)
                .map_err(|_| GpaError::Checkpoint("truncated parameter file".into()))?;
            Ok(buf)
        }
        if &take::<4>(&mut bytes)? != MAGIC {
            return Err(GpaError::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut bytes)?);
        if version != VERSION {
            return Err(GpaError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(&mut bytes)?) as usize;
        let mut out = ParamSet::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(take(&mut bytes)?) as usize;
            if bytes.len() < len {
                return Err(GpaError::Checkpoint("truncated parameter name".into()));
            }
            let name = std::str::from_utf8(&bytes[..len])
                .map_err(|_| GpaError::Checkpoint("parameter name is not UTF-8".into()))?
                .to_owned();
            bytes = &bytes[len..];
            let rank = u32::from_le_bytes(take(&mut bytes)?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take(&mut bytes)?) as usize);
            }
            let n: usize = shape.iter().product();
            if bytes.len() < n * 8 {
                return Err(GpaError::Checkpoint(format!("truncated values for `{name}`")));
            }
            let data = bytes[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            bytes = &bytes[n * 8..];
            out.insert(name, Tensor::new(shape, data)?);
        }
        if !bytes.is_empty() {
            return Err(GpaError::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Glorot-uniform `[fan_in, fan_out]` weight matrix.
pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::matrix(fan_in, fan_out, data).unwrap()
}
