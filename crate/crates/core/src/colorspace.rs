//! sRGB (8-bit) ↔ CIE Lab under D65, and the affine map between Lab units and `[0, 1]`.

/// D65 reference white, 2° observer.
pub const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// Linear sRGB → XYZ (D65).
pub const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Exact inverse of [`RGB_TO_XYZ`].
pub const XYZ_TO_RGB: [[f64; 3]; 3] = invert3(RGB_TO_XYZ);

const DELTA: f64 = 6.0 / 29.0;
const GAMMA_KNEE: f64 = 0.04045;

pub const AB_MIN: f64 = -128.0;
pub const AB_MAX: f64 = 127.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RgbPixel {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl RgbPixel {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        RgbPixel { r, g, b }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabPixel {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabPixel {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        LabPixel { l, a, b }
    }
}

const fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv = 1.0 / det;
    [
        [
            c00 * inv,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv,
        ],
        [
            c01 * inv,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv,
        ],
        [
            c02 * inv,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv,
        ],
    ]
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Gamma-encoded sRGB component in `[0, 1]` to linear light.
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= GAMMA_KNEE {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(c: f64) -> f64 {
    if c <= GAMMA_KNEE / 12.92 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

pub fn rgb_to_lab(p: RgbPixel) -> LabPixel {
    let lin = [p.r, p.g, p.b].map(|c| srgb_to_linear(f64::from(c) / 255.0));
    let xyz = mul(&RGB_TO_XYZ, lin);
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(xyz[i] / WHITE[i]));
    LabPixel {
        l: (116.0 * fy - 16.0).clamp(0.0, 100.0),
        a: (500.0 * (fx - fy)).clamp(AB_MIN, AB_MAX),
        b: (200.0 * (fy - fz)).clamp(AB_MIN, AB_MAX),
    }
}

/// Inverse of [`rgb_to_lab`], clamping out-of-gamut colors and rounding half up.
pub fn lab_to_rgb(p: LabPixel) -> RgbPixel {
    let fy = (p.l + 16.0) / 116.0;
    let fx = fy + p.a / 500.0;
    let fz = fy - p.b / 200.0;
    let xyz = [fx, fy, fz].map(lab_f_inv);
    let xyz = [xyz[0] * WHITE[0], xyz[1] * WHITE[1], xyz[2] * WHITE[2]];
    let [r, g, b] = mul(&XYZ_TO_RGB, xyz).map(|c| quantize(linear_to_srgb(c)));
    RgbPixel { r, g, b }
}

/// `[0, 1]` → 8-bit, round half up; NaN maps to 0.
pub fn quantize(c: f64) -> u8 {
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    (c * 255.0 + 0.5).floor() as u8
}

/// Lab units to `[0, 1]³`: `L/100`, `(a+128)/255`, `(b+128)/255`.
pub fn normalize_lab(p: LabPixel) -> [f64; 3] {
    [p.l / 100.0, (p.a - AB_MIN) / 255.0, (p.b - AB_MIN) / 255.0]
}

pub fn denormalize_lab(v: [f64; 3]) -> LabPixel {
    LabPixel {
        l: v[0] * 100.0,
        a: v[1] * 255.0 + AB_MIN,
        b: v[2] * 255.0 + AB_MIN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent colorimetry: per-channel scalar code, inverse-gamma by a
    /// branch on the encoded value, Lab via explicit cube-root comparisons.
    fn oracle_lab(r: u8, g: u8, b: u8) -> [f64; 3] {
        fn lin(v: u8) -> f64 {
            let c = v as f64 / 255.0;
            if c > 0.04045 {
                ((c + 0.055) / 1.055).powf(2.4)
            } else {
                c / 12.92
            }
        }
        let (rl, gl, bl) = (lin(r), lin(g), lin(b));
        let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
        let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
        let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        let f = |t: f64| if t > eps { t.powf(1.0 / 3.0) } else { (kappa * t + 16.0) / 116.0 };
        let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    #[test]
    fn white_and_black_anchors() {
        let w = rgb_to_lab(RgbPixel::new(255, 255, 255));
        assert!((w.l - 100.0).abs() <= 0.02 && w.a.abs() <= 0.02 && w.b.abs() <= 0.02, "{w:?}");
        assert_eq!(rgb_to_lab(RgbPixel::new(0, 0, 0)), LabPixel::new(0.0, 0.0, 0.0));
        assert_eq!(lab_to_rgb(LabPixel::new(100.0, 0.0, 0.0)), RgbPixel::new(255, 255, 255));
    }

    #[test]
    fn red_matches_independent_oracle() {
        let lab = rgb_to_lab(RgbPixel::new(255, 0, 0));
        let o = oracle_lab(255, 0, 0);
        assert!((lab.l - o[0]).abs() < 1e-3 && (lab.a - o[1]).abs() < 1e-3 && (lab.b - o[2]).abs() < 1e-3);
        assert!((lab.l - 53.24).abs() < 0.01 && (lab.a - 80.09).abs() < 0.01, "{lab:?}");
    }

    #[test]
    fn matrix_inverse_is_exact_enough() {
        let p = mul(&XYZ_TO_RGB, mul(&RGB_TO_XYZ, [0.2, 0.5, 0.9]));
        assert!((p[0] - 0.2).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14 && (p[2] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn gray_levels_round_trip_and_increase() {
        let mut last_l = -1.0;
        for v in 0..=255u8 {
            let p = RgbPixel::new(v, v, v);
            let lab = rgb_to_lab(p);
            assert_eq!(lab_to_rgb(lab), p);
            assert!(lab.l > last_l);
            last_l = lab.l;
        }
    }

    #[test]
    fn out_of_gamut_is_clamped() {
        let p = lab_to_rgb(LabPixel::new(50.0, 127.0, -128.0));
        assert_eq!(p, RgbPixel::new(p.r, p.g, p.b));
        let q = lab_to_rgb(LabPixel::new(100.0, 127.0, 127.0));
        assert_eq!(q.r, 255);
    }

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize_lab(LabPixel::new(0.0, -128.0, -128.0)), [0.0, 0.0, 0.0]);
        assert_eq!(normalize_lab(LabPixel::new(100.0, 127.0, 127.0)), [1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(l in 0.0f64..=100.0, a in -128.0f64..=127.0, b in -128.0f64..=127.0) {
            let back = denormalize_lab(normalize_lab(LabPixel::new(l, a, b)));
            prop_assert!((back.l - l).abs() < 1e-5 && (back.a - a).abs() < 1e-5 && (back.b - b).abs() < 1e-5);
        }

        #[test]
        fn lab_ranges_hold(r: u8, g: u8, b: u8) {
            let lab = rgb_to_lab(RgbPixel::new(r, g, b));
            prop_assert!((0.0..=100.0).contains(&lab.l));
            prop_assert!((AB_MIN..=AB_MAX).contains(&lab.a) && (AB_MIN..=AB_MAX).contains(&lab.b));
            let o = oracle_lab(r, g, b);
            prop_assert!((lab.l - o[0]).abs() < 1e-3);
        }
    }
}
