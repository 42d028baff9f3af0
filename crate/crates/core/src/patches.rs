//! Non-overlapping n×n tiling of `[C, H, W]` images and its inverse.
//!
//! Images whose sides are not multiples of `n` are reflect-padded on the
//! bottom and right (mirror without repeating the edge pixel) before tiling;
//! reassembly crops the padding away again.

use thiserror::Error;

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("patch size must be at least 1")]
    ZeroPatch,
    #[error("expected a [C, H, W] image, got shape {0:?}")]
    NotAnImage(Vec<usize>),
    #[error("patch size {n} needs more padding than a {h}x{w} image can reflect")]
    PaddingImpossible { n: usize, h: usize, w: usize },
    #[error("grid expects {expected} patches of shape [{channels}, {n}, {n}], got {found:?}")]
    CountMismatch {
        expected: usize,
        channels: usize,
        n: usize,
        found: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub original_height: usize,
    pub original_width: usize,
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, n: usize) -> Result<Self, PatchError> {
        if n == 0 {
            return Err(PatchError::ZeroPatch);
        }
        if n > 2 * height.min(width) {
            return Err(PatchError::PaddingImpossible { n, h: height, w: width });
        }
        let rows = height.div_ceil(n);
        let cols = width.div_ceil(n);
        Ok(PatchGrid {
            original_height: height,
            original_width: width,
            n,
            rows,
            cols,
            pad_bottom: rows * n - height,
            pad_right: cols * n - width,
        })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major patch index.
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Source coordinate for a possibly padded coordinate, mirrored about the last pixel.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

fn image_dims<T: Scalar>(image: &Tensor<T>) -> Result<(usize, usize, usize), PatchError> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(PatchError::NotAnImage(image.shape().to_vec())),
    }
}

/// Splits an image into `[rows·cols, C, n, n]` patches in row-major order.
pub fn slice<T: Scalar>(image: &Tensor<T>, n: usize) -> Result<(Tensor<T>, PatchGrid), PatchError> {
    let (c, h, w) = image_dims(image)?;
    let grid = PatchGrid::new(h, w, n)?;
    let mut out = Tensor::zeros(&[grid.count(), c, n, n]);
    let src = image.data();
    let dst = out.data_mut();
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let p = grid.index(pr, pc);
            for ch in 0..c {
                for y in 0..n {
                    let sy = reflect(pr * n + y, h);
                    for x in 0..n {
                        let sx = reflect(pc * n + x, w);
                        dst[((p * c + ch) * n + y) * n + x] = src[(ch * h + sy) * w + sx];
                    }
                }
            }
        }
    }
    Ok((out, grid))
}

/// Places patches back on the grid and crops the padding.
pub fn reassemble<T: Scalar>(patches: &Tensor<T>, grid: &PatchGrid) -> Result<Tensor<T>, PatchError> {
    let n = grid.n;
    let (count, c) = match *patches.shape() {
        [count, c, ph, pw] if ph == n && pw == n => (count, c),
        _ => {
            return Err(PatchError::CountMismatch {
                expected: grid.count(),
                channels: patches.shape().get(1).copied().unwrap_or(0),
                n,
                found: patches.shape().to_vec(),
            })
        }
    };
    if count != grid.count() {
        return Err(PatchError::CountMismatch {
            expected: grid.count(),
            channels: c,
            n,
            found: patches.shape().to_vec(),
        });
    }
    let (h, w) = (grid.original_height, grid.original_width);
    let mut out = Tensor::zeros(&[c, h, w]);
    let src = patches.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let (pr, py) = (y / n, y % n);
            for x in 0..w {
                let (pc, px) = (x / n, x % n);
                let p = grid.index(pr, pc);
                dst[(ch * h + y) * w + x] = src[((p * c + ch) * n + py) * n + px];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(&[c, h, w], |i| i as f32)
    }

    #[test]
    fn exact_fit_is_single_patch() {
        let img = image(3, 9, 9);
        let (p, g) = slice(&img, 9).unwrap();
        assert_eq!(p.shape(), &[1, 3, 9, 9]);
        assert_eq!(p.data(), img.data());
        assert_eq!((g.pad_bottom, g.pad_right), (0, 0));
        assert_eq!(reassemble(&p, &g).unwrap(), img);
    }

    #[test]
    fn tall_image_stacks_row_major() {
        let img = image(1, 18, 9);
        let (p, g) = slice(&img, 9).unwrap();
        assert_eq!((g.rows, g.cols), (2, 1));
        assert_eq!(p.data()[..81], img.data()[..81]);
        assert_eq!(p.data()[81..], img.data()[81..]);
    }

    #[test]
    fn non_multiple_grid_geometry() {
        let img = image(2, 10, 13);
        let (p, g) = slice(&img, 9).unwrap();
        assert_eq!((g.rows, g.cols, g.pad_bottom, g.pad_right), (2, 2, 8, 5));
        assert_eq!(reassemble(&p, &g).unwrap(), img);
        // row 10 of the padded image mirrors row 8
        let bottom_left = grid_pixel(&p, &g, 0, 10, 0);
        assert_eq!(bottom_left, img.data()[8 * 13]);
    }

    fn grid_pixel(p: &Tensor<f32>, g: &PatchGrid, ch: usize, y: usize, x: usize) -> f32 {
        let n = g.n;
        let c = p.shape()[1];
        let idx = g.index(y / n, x / n);
        p.data()[((idx * c + ch) * n + y % n) * n + x % n]
    }

    #[test]
    fn permuted_patches_differ() {
        let img = image(1, 18, 18);
        let (p, g) = slice(&img, 9).unwrap();
        let mut swapped = p.clone();
        swapped.data_mut()[..81].copy_from_slice(&p.data()[81..162]);
        swapped.data_mut()[81..162].copy_from_slice(&p.data()[..81]);
        assert_ne!(reassemble(&swapped, &g).unwrap(), img);
    }

    #[test]
    fn error_paths() {
        assert_eq!(slice(&image(1, 4, 4), 9).unwrap_err(), PatchError::PaddingImpossible { n: 9, h: 4, w: 4 });
        assert_eq!(slice(&image(1, 4, 4), 0).unwrap_err(), PatchError::ZeroPatch);
        let (p, g) = slice(&image(1, 18, 9), 9).unwrap();
        let short = Tensor::new(vec![1, 1, 9, 9], p.data()[..81].to_vec()).unwrap();
        assert!(matches!(reassemble(&short, &g), Err(PatchError::CountMismatch { .. })));
        assert!(matches!(
            slice(&Tensor::<f32>::zeros(&[9, 9]), 9),
            Err(PatchError::NotAnImage(_))
        ));
    }

    #[test]
    fn thin_images_still_pad() {
        // a single row reflects onto itself
        let img = image(1, 1, 5);
        let (p, g) = slice(&img, 2).unwrap();
        assert_eq!((g.rows, g.cols), (1, 3));
        assert_eq!(reassemble(&p, &g).unwrap(), img);
    }

    #[test]
    fn random_37_by_53() {
        let img = Tensor::from_fn(&[3, 37, 53], |i| ((i * 7919) % 1000) as f32 / 1000.0);
        let (p, g) = slice(&img, 9).unwrap();
        assert_eq!(reassemble(&p, &g).unwrap(), img);
    }

    proptest! {
        #[test]
        fn slice_reassemble_identity(h in 1usize..=64, w in 1usize..=64, n_seed in 0usize..1000, seed in any::<u32>()) {
            let n = 1 + n_seed % h.min(w);
            let img = Tensor::<f32>::from_fn(&[2, h, w], |i| (i as u32 ^ seed) as f32);
            let (p, g) = slice(&img, n).unwrap();
            prop_assert_eq!(p.shape()[0], g.rows * g.cols);
            prop_assert!(g.pad_bottom < n && g.pad_right < n);
            prop_assert_eq!(reassemble(&p, &g).unwrap(), img);
        }
    }
}
