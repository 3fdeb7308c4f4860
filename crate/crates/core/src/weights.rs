//! Weight container format, validation and deterministic initialization.
//!
//! Container layout: magic `SSDW`, u32 LE version (1), u32 LE manifest byte
//! length, JSON manifest, then a raw little-endian f32 blob. Manifest entries
//! are contiguous: each offset continues where the previous entry ended and
//! the entry sizes sum to the blob length.
//!
//! Conv weights are stored `[kH, kW, inC, outC]`, depthwise `[kH, kW, C, 1]`,
//! biases `[C]`. Batch-norm parameters may be stored pre-folded (preferred)
//! or as `<layer>.bn.{gamma,beta,mean,variance,epsilon}` entries which are
//! folded into `<layer>.weight` / `<layer>.bias` at load time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::tensor::BATCHNORM_DEFAULT_EPSILON;
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SSDW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightManifest {
    pub entries: Vec<ManifestEntry>,
}

/// A named tensor held by a [`WeightStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightTensor {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Immutable named-tensor lookup backing the network.
#[derive(Debug, Clone, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, WeightTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Weights(format!(
                "{name}: data length {} != shape product {expect}",
                data.len()
            )));
        }
        self.tensors.insert(name, WeightTensor { shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total f32 element count across all tensors.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(WeightTensor::element_count).sum()
    }

    /// Serializes the store to container bytes. Entries are laid out in
    /// name order with contiguous offsets.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset,
                dtype: "f32".to_string(),
            });
            offset += (t.element_count() * 4) as u64;
        }
        let manifest =
            serde_json::to_vec(&WeightManifest { entries }).expect("manifest serialization");

        let mut out = Vec::with_capacity(12 + manifest.len() + offset as usize);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Parses container bytes; validates structure and folds any stored
    /// batch-norm parameters into their layer weights.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::corrupt("weight container shorter than header"));
        }
        if &bytes[0..4] != WEIGHTS_MAGIC {
            return Err(Error::corrupt("bad magic, expected SSDW"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(Error::corrupt(format!("unsupported version {version}")));
        }
        let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + manifest_len {
            return Err(Error::corrupt("manifest extends past end of file"));
        }
        let manifest: WeightManifest = serde_json::from_slice(&bytes[12..12 + manifest_len])
            .map_err(|e| Error::parse(format!("manifest: {e}")))?;
        let blob = &bytes[12 + manifest_len..];

        let mut store = WeightStore::new();
        let mut expected_offset = 0u64;
        for entry in &manifest.entries {
            if entry.dtype != "f32" {
                return Err(Error::Weights(format!(
                    "{}: unsupported dtype {}",
                    entry.name, entry.dtype
                )));
            }
            if entry.offset != expected_offset {
                return Err(Error::Weights(format!(
                    "{}: offset {} overlaps or leaves a gap (expected {})",
                    entry.name, entry.offset, expected_offset
                )));
            }
            let count: usize = entry.shape.iter().product();
            let byte_len = count * 4;
            let start = entry.offset as usize;
            if start + byte_len > blob.len() {
                return Err(Error::Weights(format!(
                    "{}: extends past end of blob",
                    entry.name
                )));
            }
            let data: Vec<f32> = blob[start..start + byte_len]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if data.iter().any(|v| v.is_nan()) {
                return Err(Error::Weights(format!("{}: NaN in blob", entry.name)));
            }
            store.insert(entry.name.clone(), entry.shape.clone(), data)?;
            expected_offset += byte_len as u64;
        }
        if expected_offset != blob.len() as u64 {
            return Err(Error::corrupt(format!(
                "blob length {} != manifest total {}",
                blob.len(),
                expected_offset
            )));
        }
        store.fold_stored_batchnorm()?;
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Folds every `<layer>.bn.*` group into `<layer>.weight`/`<layer>.bias`.
    ///
    /// The output-channel axis of the weight is axis 3, or axis 2 for
    /// depthwise tensors shaped `[kH, kW, C, 1]`.
    fn fold_stored_batchnorm(&mut self) -> Result<()> {
        let layers: Vec<String> = self
            .tensors
            .keys()
            .filter_map(|n| n.strip_suffix(".bn.gamma").map(str::to_string))
            .collect();

        for layer in layers {
            let take = |store: &mut Self, part: &str| -> Result<WeightTensor> {
                store
                    .remove(&format!("{layer}.bn.{part}"))
                    .ok_or_else(|| Error::Weights(format!("{layer}.bn.{part}: missing")))
            };
            let gamma = take(self, "gamma")?;
            let beta = take(self, "beta")?;
            let mean = take(self, "mean")?;
            let variance = take(self, "variance")?;
            let epsilon = match self.remove(&format!("{layer}.bn.epsilon")) {
                Some(t) => t.data.first().copied().unwrap_or(BATCHNORM_DEFAULT_EPSILON),
                None => BATCHNORM_DEFAULT_EPSILON,
            };
            let c = gamma.data.len();
            if beta.data.len() != c || mean.data.len() != c || variance.data.len() != c {
                return Err(Error::Weights(format!("{layer}: bn array lengths differ")));
            }

            let weight_name = format!("{layer}.weight");
            let weight = self
                .remove(&weight_name)
                .ok_or_else(|| Error::Weights(format!("{weight_name}: missing for bn fold")))?;
            if weight.shape.len() != 4 {
                return Err(Error::Weights(format!("{weight_name}: bn fold needs rank-4 weight")));
            }
            let depthwise = weight.shape[3] == 1 && weight.shape[2] == c;
            let axis = if depthwise { 2 } else { 3 };
            if weight.shape[axis] != c {
                return Err(Error::Weights(format!(
                    "{weight_name}: output channels {} != bn length {c}",
                    weight.shape[axis]
                )));
            }

            let scale: Vec<f32> = gamma
                .data
                .iter()
                .zip(&variance.data)
                .map(|(&g, &v)| g / (v + epsilon).sqrt())
                .collect();

            let mut wdata = weight.data;
            // stride of the channel axis in the flat layout
            let axis_stride: usize = weight.shape[axis + 1..].iter().product();
            for (i, w) in wdata.iter_mut().enumerate() {
                let ch = (i / axis_stride) % c;
                *w *= scale[ch];
            }

            let bias_name = format!("{layer}.bias");
            let old_bias = match self.remove(&bias_name) {
                Some(t) => t.data,
                None => vec![0.0; c],
            };
            let new_bias: Vec<f32> = (0..c)
                .map(|i| beta.data[i] + (old_bias[i] - mean.data[i]) * scale[i])
                .collect();

            self.insert(weight_name, weight.shape, wdata)?;
            self.insert(bias_name, vec![c], new_bias)?;
        }
        Ok(())
    }
}

/// Outcome of checking a store against the architecture's required tensors.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks that every required (name, shape) pair is present with the exact
/// shape. Extra entries are reported as warnings.
pub fn validate_against_architecture(
    store: &WeightStore,
    required: &[(String, Vec<usize>)],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (name, shape) in required {
        match store.get(name) {
            None => report.errors.push(format!("missing entry: {name}")),
            Some(t) if &t.shape != shape => report.errors.push(format!(
                "{name}: expected shape {shape:?}, got {:?}",
                t.shape
            )),
            Some(_) => {}
        }
    }
    let known: std::collections::BTreeSet<&str> =
        required.iter().map(|(n, _)| n.as_str()).collect();
    for name in store.names() {
        if !known.contains(name) {
            report.warnings.push(format!("unused entry: {name}"));
        }
    }
    report
}

/// Fills every required tensor from a pinned PRNG with uniform values scaled
/// by `1/sqrt(fan_in)`. Same seed, same bytes.
///
/// fan_in is the product of all dims except the last for rank >= 2 tensors,
/// and the length itself for rank-1 tensors.
pub fn init_random(seed: u64, required: &[(String, Vec<usize>)]) -> WeightStore {
    let mut rng = SplitMix64::new(seed);
    let mut store = WeightStore::new();
    for (name, shape) in required {
        let count: usize = shape.iter().product();
        let fan_in: usize = if shape.len() >= 2 {
            shape[..shape.len() - 1].iter().product()
        } else {
            count
        };
        let scale = 1.0 / (fan_in.max(1) as f32).sqrt();
        let data: Vec<f32> = (0..count).map(|_| scale * rng.next_signed_unit_f32()).collect();
        store
            .insert(name.clone(), shape.clone(), data)
            .expect("shape/data agree by construction");
    }
    store
}
