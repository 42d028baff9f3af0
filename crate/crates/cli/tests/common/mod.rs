#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use colorcaps_core::data::{image_to_lab, tensor_to_gray};
use colorcaps_core::netpbm::{write_image, Image};
use colorcaps_core::Tensor;

/// Smooth synthetic color image: horizontal red ramp, vertical green ramp, rippled blue.
pub fn smooth_color(h: usize, w: usize) -> Image {
    let mut data = vec![0u8; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (fx, fy) = (x as f64 / (w - 1) as f64, y as f64 / (h - 1) as f64);
            data[i] = (60.0 + 150.0 * fx) as u8;
            data[h * w + i] = (200.0 - 120.0 * fy) as u8;
            data[2 * h * w + i] = (90.0 + 60.0 * (1.5 * (fx + fy)).sin().abs()) as u8;
        }
    }
    Image::new(3, h, w, data).unwrap()
}

/// 8-bit lightness plane of a color image.
pub fn lightness(img: &Image) -> Image {
    let lab = image_to_lab(img);
    let hw = img.height() * img.width();
    tensor_to_gray(&Tensor::new(vec![1, img.height(), img.width()], lab.data()[..hw].to_vec()).unwrap())
}

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub color: PathBuf,
    pub gray: PathBuf,
}

/// One 36×36 color image with its lightness PGM: 16 patches of 9×9.
pub fn tiny_corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let color = smooth_color(36, 36);
    let color_path = dir.path().join("scene.ppm");
    let gray_path = dir.path().join("scene.pgm");
    write_image(&color_path, &color).unwrap();
    write_image(&gray_path, &lightness(&color)).unwrap();
    let manifest = dir.path().join("manifest.json");
    fs::write(
        &manifest,
        r#"{"records": [{"color": "scene.ppm", "gray": "scene.pgm"}], "n": 9, "seed": 42}"#,
    )
    .unwrap();
    Corpus {
        dir,
        manifest,
        color: color_path,
        gray: gray_path,
    }
}

pub fn cli(args: &[&str]) -> i32 {
    colorcaps_cli::run(std::iter::once("colorcaps").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a `loss.csv` as floats.
pub fn read_losses(path: &Path) -> Vec<f32> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

/// Narrow front end and decoder for quick runs.
pub const SMALL_MODEL: [&str; 6] = [
    "--conv-channels",
    "8",
    "--primary-capsule-count",
    "4",
    "--decoder-hidden",
    "16,32",
];
