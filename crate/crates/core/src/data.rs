//! Training corpora: manifests, gray/Lab patch pairs and seeded batch order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorspace::{denormalize_lab, lab_to_rgb, normalize_lab, rgb_to_lab, RgbPixel};
use crate::netpbm::{load_image, Image, NetpbmError};
use crate::patches::{slice, PatchError};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: NetpbmError },
    #[error("{0}: expected a color (P6) image")]
    NotColor(PathBuf),
    #[error("{0}: expected a grayscale (P5) image")]
    NotGray(PathBuf),
    #[error("gray image {gray:?} is {gh}x{gw} but color image {color:?} is {ch}x{cw}")]
    DimensionMismatch {
        color: PathBuf,
        gray: PathBuf,
        ch: usize,
        cw: usize,
        gh: usize,
        gw: usize,
    },
    #[error("expected a [3, H, W] Lab tensor, got {0:?}")]
    NotLab(Vec<usize>),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub color: PathBuf,
    #[serde(default)]
    pub gray: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_n() -> usize {
    9
}

fn default_seed() -> u64 {
    42
}

impl DatasetManifest {
    /// Reads a manifest; relative image paths are taken relative to the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for r in &mut m.records {
            r.color = base.join(&r.color);
            r.gray = r.gray.as_ref().map(|g| base.join(g));
        }
        Ok(m)
    }
}

/// One co-located training example.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    /// `[1, n, n]` in `[0, 1]`.
    pub gray: Tensor<f32>,
    /// `[3, n, n]` normalized Lab.
    pub lab: Tensor<f32>,
    /// Index of the manifest record the patch came from.
    pub source: usize,
    /// Row-major index in that record's patch grid.
    pub index: usize,
}

/// Normalized Lab planes `[3, H, W]` of an 8-bit color image.
pub fn image_to_lab(img: &Image) -> Tensor<f32> {
    let hw = img.height() * img.width();
    let mut out = vec![0f32; 3 * hw];
    for i in 0..hw {
        let lab = rgb_to_lab(RgbPixel::new(img.plane(0)[i], img.plane(1)[i], img.plane(2)[i]));
        for (c, v) in normalize_lab(lab).into_iter().enumerate() {
            out[c * hw + i] = v as f32;
        }
    }
    Tensor::new(vec![3, img.height(), img.width()], out).expect("image extents are positive")
}

/// 8-bit color image from normalized Lab planes `[3, H, W]`.
pub fn lab_to_image(lab: &Tensor<f32>) -> Result<Image, DataError> {
    let (h, w) = match *lab.shape() {
        [3, h, w] => (h, w),
        _ => return Err(DataError::NotLab(lab.shape().to_vec())),
    };
    let hw = h * w;
    let d = lab.data();
    let mut out = vec![0u8; 3 * hw];
    for i in 0..hw {
        let p = lab_to_rgb(denormalize_lab([d[i], d[hw + i], d[2 * hw + i]].map(f64::from)));
        out[i] = p.r;
        out[hw + i] = p.g;
        out[2 * hw + i] = p.b;
    }
    Ok(Image::new(3, h, w, out).expect("three planes of h·w samples"))
}

/// Gray plane `[1, H, W]` in `[0, 1]` from an 8-bit grayscale image.
pub fn gray_to_tensor(img: &Image) -> Tensor<f32> {
    let data = img.plane(0).iter().map(|&v| f32::from(v) / 255.0).collect();
    Tensor::new(vec![1, img.height(), img.width()], data).expect("image extents are positive")
}

/// 8-bit grayscale image from a `[1, H, W]` plane in `[0, 1]`.
pub fn tensor_to_gray(plane: &Tensor<f32>) -> Image {
    let (h, w) = (plane.shape()[1], plane.shape()[2]);
    let data = plane.data().iter().map(|&v| crate::colorspace::quantize(f64::from(v))).collect();
    Image::new(1, h, w, data).expect("one plane of h·w samples")
}

fn load(path: &Path) -> Result<Image, DataError> {
    load_image(path).map_err(|source| DataError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Streams patch pairs record by record in manifest order.
///
/// Records whose grayscale file does not match the color image's size are
/// skipped and counted; any other failure is yielded as an error and the
/// stream moves on to the next record.
pub struct Pairs<'a> {
    records: std::iter::Enumerate<std::slice::Iter<'a, Record>>,
    n: usize,
    pending: std::vec::IntoIter<PatchPair>,
    skipped: usize,
}

impl Pairs<'_> {
    /// Records skipped so far because of a gray/color size mismatch.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn record_pairs(&self, source: usize, record: &Record) -> Result<Vec<PatchPair>, DataError> {
        let color = load(&record.color)?;
        if color.channels() != 3 {
            return Err(DataError::NotColor(record.color.clone()));
        }
        let lab = image_to_lab(&color);
        let gray = match &record.gray {
            Some(path) => {
                let g = load(path)?;
                if g.channels() != 1 {
                    return Err(DataError::NotGray(path.clone()));
                }
                if (g.height(), g.width()) != (color.height(), color.width()) {
                    return Err(DataError::DimensionMismatch {
                        color: record.color.clone(),
                        gray: path.clone(),
                        ch: color.height(),
                        cw: color.width(),
                        gh: g.height(),
                        gw: g.width(),
                    });
                }
                gray_to_tensor(&g)
            }
            None => {
                let hw = color.height() * color.width();
                Tensor::new(vec![1, color.height(), color.width()], lab.data()[..hw].to_vec())
                    .expect("L plane of the Lab tensor")
            }
        };
        let n = self.n;
        let (gp, grid) = slice(&gray, n)?;
        let (lp, _) = slice(&lab, n)?;
        Ok((0..grid.count())
            .map(|index| PatchPair {
                gray: Tensor::new(vec![1, n, n], gp.data()[index * n * n..(index + 1) * n * n].to_vec())
                    .expect("patch extents"),
                lab: Tensor::new(vec![3, n, n], lp.data()[index * 3 * n * n..(index + 1) * 3 * n * n].to_vec())
                    .expect("patch extents"),
                source,
                index,
            })
            .collect())
    }
}

impl Iterator for Pairs<'_> {
    type Item = Result<PatchPair, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(p) = self.pending.next() {
                return Some(Ok(p));
            }
            let (source, record) = self.records.next()?;
            match self.record_pairs(source, record) {
                Ok(pairs) => self.pending = pairs.into_iter(),
                Err(e @ DataError::DimensionMismatch { .. }) => {
                    log::warn!("skipping record {source}: {e}");
                    self.skipped += 1;
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

pub fn build_pairs(manifest: &DatasetManifest, n: usize) -> Pairs<'_> {
    Pairs {
        records: manifest.records.iter().enumerate(),
        n,
        pending: Vec::new().into_iter(),
        skipped: 0,
    }
}

/// Batches of item indices in a permutation fixed by `(seed, epoch)`; the last batch may be short.
pub fn shuffle_batches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Stacks the chosen pairs into `[B, 1, n, n]` gray and `[B, 3, n, n]` Lab batches.
pub fn stack_batch(pairs: &[PatchPair], indices: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let n = pairs[indices[0]].gray.shape()[1];
    let mut gray = Vec::with_capacity(indices.len() * n * n);
    let mut lab = Vec::with_capacity(indices.len() * 3 * n * n);
    for &i in indices {
        gray.extend_from_slice(pairs[i].gray.data());
        lab.extend_from_slice(pairs[i].lab.data());
    }
    (
        Tensor::new(vec![indices.len(), 1, n, n], gray).expect("uniform patch size"),
        Tensor::new(vec![indices.len(), 3, n, n], lab).expect("uniform patch size"),
    )
}
