//! `CCPS` named-tensor container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "CCPS" version entry_count
//!   { name_len name_bytes rank extent* f32_payload* } * entry_count
//! metadata_count
//!   { key_len key_bytes value_len value_bytes } * metadata_count
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::capsnet::ModelParams;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CCPS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a CCPS file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported CCPS version {0}")]
    UnknownVersion(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),
    #[error("duplicate metadata key `{0}`")]
    DuplicateKey(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("missing entry `{0}`")]
    MissingEntry(String),
    #[error("missing metadata `{0}`")]
    MissingMetadata(String),
    #[error("tensor `{name}`: checkpoint shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("unknown model slot `{0}`")]
    UnknownSlot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    entries: Vec<(String, Tensor<f32>)>,
    pub metadata: BTreeMap<String, String>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            entries: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<(), CheckpointError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(CheckpointError::DuplicateName(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>, CheckpointError> {
        self.get(name).ok_or_else(|| CheckpointError::MissingEntry(name.to_string()))
    }

    pub fn entries(&self) -> &[(String, Tensor<f32>)] {
        &self.entries
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::MissingMetadata(key.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.format_version);
        put_u32(&mut out, self.entries.len() as u32);
        for (name, t) in &self.entries {
            put_str(&mut out, name);
            put_u32(&mut out, t.rank() as u32);
            for &e in t.shape() {
                put_u32(&mut out, e as u32);
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        put_u32(&mut out, self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnknownVersion(version));
        }
        let count = r.u32("entry count")?;
        let mut ckpt = Checkpoint {
            format_version: version,
            ..Default::default()
        };
        for _ in 0..count {
            let name = r.string("entry name")?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u32("extent")? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` extents overflow")))?;
            let raw = r.take(
                len.checked_mul(4)
                    .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` payload overflow")))?,
                "payload",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(format!("`{name}`: {e}")))?;
            ckpt.push(name, tensor)?;
        }
        let meta_count = r.u32("metadata count")?;
        for _ in 0..meta_count {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            if ckpt.metadata.insert(k.clone(), v).is_some() {
                return Err(CheckpointError::DuplicateKey(k));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ckpt)
    }

    /// Writes through a temporary file in the target directory, then renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Source names of the two transferred VGG-19 convolutions and the model slots they fill.
///
/// `conv1_1` must already be collapsed to one input channel (sum the RGB
/// kernels over the channel axis) before it is written to a `CCPS` file.
pub const VGG_NAME_MAP: [(&str, &str); 4] = [
    ("vgg.conv1_1.weight", "conv1.weight"),
    ("vgg.conv1_1.bias", "conv1.bias"),
    ("vgg.conv1_2.weight", "conv2.weight"),
    ("vgg.conv1_2.bias", "conv2.bias"),
];

/// Copies `(source, slot)` pairs from a checkpoint into a copy of `model`.
///
/// Slots not named in the map keep their values; nothing is frozen.
pub fn import_external(
    ckpt: &Checkpoint,
    model: &ModelParams<f32>,
    name_map: &[(&str, &str)],
) -> Result<ModelParams<f32>, CheckpointError> {
    let mut out = model.clone();
    for &(src, dst) in name_map {
        let tensor = ckpt.require(src)?;
        let slot = out
            .slot_mut(dst)
            .ok_or_else(|| CheckpointError::UnknownSlot(dst.to_string()))?;
        if slot.shape() != tensor.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: src.to_string(),
                found: tensor.shape().to_vec(),
                expected: slot.shape().to_vec(),
            });
        }
        *slot = tensor.clone();
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CheckpointError::Truncated(format!("{what} at byte {} needs {n} bytes", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, CheckpointError> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Malformed(format!("{what} is not UTF-8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_checkpoint_is_minimal() {
        let bytes = Checkpoint::new().to_bytes();
        assert_eq!(bytes, b"CCPS\x01\0\0\0\0\0\0\0\0\0\0\0");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), Checkpoint::new());
    }

    #[test]
    fn byte_layout_is_exact() {
        let mut c = Checkpoint::new();
        c.push("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
        c.metadata.insert("k".into(), "v".into());
        let mut expected = b"CCPS".to_vec();
        for v in [1u32, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.push(b'w');
        for v in [1u32, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'k');
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'v');
        assert_eq!(c.to_bytes(), expected);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut c = Checkpoint::new();
        c.push("a", Tensor::full(&[3], 1.0)).unwrap();
        let good = c.to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::UnknownVersion(9))));
        assert!(matches!(
            Checkpoint::from_bytes(&good[..good.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = Checkpoint::new();
        c.push("a", Tensor::full(&[1], 1.0)).unwrap();
        assert!(matches!(c.push("a", Tensor::full(&[1], 2.0)), Err(CheckpointError::DuplicateName(_))));
        // hand-craft a file carrying the same name twice
        let mut bytes = b"CCPS".to_vec();
        for v in [1u32, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for _ in 0..2 {
            bytes.extend_from_slice(&1u32.to_le_bytes());
            bytes.push(b'a');
            bytes.extend_from_slice(&1u32.to_le_bytes());
            bytes.extend_from_slice(&1u32.to_le_bytes());
            bytes.extend_from_slice(&0.5f32.to_le_bytes());
        }
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::DuplicateName(n)) if n == "a"));
    }

    #[test]
    fn save_then_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ccps");
        let mut c = Checkpoint::new();
        c.push("conv1.weight", Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.25)).unwrap();
        c.metadata.insert("epoch".into(), "3".into());
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    fn arb_checkpoint() -> impl Strategy<Value = Checkpoint> {
        let entry = (
            "[a-z][a-z0-9_.]{0,12}",
            prop::collection::vec(1usize..4, 0..4),
            any::<u64>(),
        );
        (
            prop::collection::vec(entry, 0..5),
            prop::collection::btree_map("[a-z]{1,6}", ".{0,10}", 0..4),
        )
            .prop_map(|(entries, metadata)| {
                let mut c = Checkpoint::new();
                for (name, shape, seed) in entries {
                    let len: usize = shape.iter().product();
                    let data = (0..len)
                        .map(|i| f32::from_bits((seed as u32).wrapping_add((i as u32).wrapping_mul(2654435761)) & 0x7f7f_ffff))
                        .collect();
                    let _ = c.push(name, Tensor::new(shape, data).unwrap());
                }
                c.metadata = metadata;
                c
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(c in arb_checkpoint()) {
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back.entries().len(), c.entries().len());
            for ((n1, t1), (n2, t2)) in back.entries().iter().zip(c.entries()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                prop_assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }
}
