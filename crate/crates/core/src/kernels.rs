//! The 36 augmentation elements and their pairwise composition.
//!
//! Elements are listed kind by kind with ascending magnitudes; the three
//! magnitude-free kinds occupy catalog slots 33, 34 and 35. An operation is an
//! ordered pair of elements with index `36 * first + second`.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{to_u8, ImageBuffer};

pub const NUM_ELEMENTS: usize = 36;
pub const NUM_OPERATIONS: usize = NUM_ELEMENTS * NUM_ELEMENTS;

/// Constant used for pixels sampled from outside the source image.
pub const FILL: f64 = 128.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKind {
    HorizontalShear,
    VerticalShear,
    HorizontalTranslate,
    VerticalTranslate,
    Rotate,
    ColorAdjust,
    Posterize,
    Solarize,
    Contrast,
    Sharpness,
    Brightness,
    AutoContrast,
    Equalize,
    Invert,
}

impl ElementKind {
    pub const ALL: [ElementKind; 14] = [
        ElementKind::HorizontalShear,
        ElementKind::VerticalShear,
        ElementKind::HorizontalTranslate,
        ElementKind::VerticalTranslate,
        ElementKind::Rotate,
        ElementKind::ColorAdjust,
        ElementKind::Posterize,
        ElementKind::Solarize,
        ElementKind::Contrast,
        ElementKind::Sharpness,
        ElementKind::Brightness,
        ElementKind::AutoContrast,
        ElementKind::Equalize,
        ElementKind::Invert,
    ];

    pub fn magnitudes(self) -> &'static [f64] {
        use ElementKind::*;
        match self {
            HorizontalShear | VerticalShear => &[0.1, 0.2, 0.3],
            HorizontalTranslate | VerticalTranslate => &[0.15, 0.3, 0.45],
            Rotate => &[10.0, 20.0, 30.0],
            ColorAdjust => &[0.3, 0.6, 0.9],
            Posterize => &[4.4, 5.6, 6.8],
            Solarize => &[26.0, 102.0, 179.0],
            Contrast | Sharpness | Brightness => &[1.3, 1.6, 1.9],
            AutoContrast | Equalize | Invert => &[],
        }
    }

    pub fn is_geometric(self) -> bool {
        use ElementKind::*;
        matches!(
            self,
            HorizontalShear | VerticalShear | HorizontalTranslate | VerticalTranslate | Rotate
        )
    }

    pub fn name(self) -> &'static str {
        use ElementKind::*;
        match self {
            HorizontalShear => "HorizontalShear",
            VerticalShear => "VerticalShear",
            HorizontalTranslate => "HorizontalTranslate",
            VerticalTranslate => "VerticalTranslate",
            Rotate => "Rotate",
            ColorAdjust => "ColorAdjust",
            Posterize => "Posterize",
            Solarize => "Solarize",
            Contrast => "Contrast",
            Sharpness => "Sharpness",
            Brightness => "Brightness",
            AutoContrast => "AutoContrast",
            Equalize => "Equalize",
            Invert => "Invert",
        }
    }

    pub fn from_name(name: &str) -> Option<ElementKind> {
        ElementKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Direction of a geometric transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AugElement {
    pub kind: ElementKind,
    pub magnitude_index: Option<u8>,
    /// Whether the sign drawn at apply time is honored (geometric kinds only).
    pub signed: bool,
}

impl AugElement {
    pub fn magnitude(&self) -> Option<f64> {
        self.magnitude_index
            .map(|i| self.kind.magnitudes()[i as usize])
    }

    /// Position of this element in [`element_catalog`].
    pub fn index(&self) -> usize {
        let kind_pos = ElementKind::ALL
            .iter()
            .position(|k| *k == self.kind)
            .expect("kind listed in ALL");
        match self.magnitude_index {
            Some(m) => kind_pos * 3 + m as usize,
            None => 33 + (kind_pos - 11),
        }
    }

    pub fn from_index(index: usize, signed: bool) -> Result<AugElement> {
        if index >= NUM_ELEMENTS {
            return Err(Error::InvalidArgument(format!(
                "element index {index} out of range 0..{NUM_ELEMENTS}"
            )));
        }
        let (kind, magnitude_index) = if index < 33 {
            (ElementKind::ALL[index / 3], Some((index % 3) as u8))
        } else {
            (ElementKind::ALL[11 + index - 33], None)
        };
        Ok(AugElement {
            kind,
            magnitude_index,
            signed: signed && kind.is_geometric(),
        })
    }

    pub fn label(&self) -> String {
        match self.magnitude() {
            Some(m) => format!("{}({m})", self.kind),
            None => self.kind.to_string(),
        }
    }
}

/// The 36 candidate elements in catalog order, with random geometric direction.
pub fn element_catalog() -> Vec<AugElement> {
    element_catalog_with(true)
}

pub fn element_catalog_with(signed: bool) -> Vec<AugElement> {
    (0..NUM_ELEMENTS)
        .map(|i| AugElement::from_index(i, signed).expect("in range"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AugOperation {
    pub first: AugElement,
    pub second: AugElement,
}

impl AugOperation {
    pub fn index(&self) -> usize {
        NUM_ELEMENTS * self.first.index() + self.second.index()
    }

    pub fn from_index(k: usize, signed: bool) -> Result<AugOperation> {
        if k >= NUM_OPERATIONS {
            return Err(Error::InvalidArgument(format!(
                "operation index {k} out of range 0..{NUM_OPERATIONS}"
            )));
        }
        Ok(AugOperation {
            first: AugElement::from_index(k / NUM_ELEMENTS, signed)?,
            second: AugElement::from_index(k % NUM_ELEMENTS, signed)?,
        })
    }

    pub fn contains_kind(&self, kind: ElementKind) -> bool {
        self.first.kind == kind || self.second.kind == kind
    }
}

/// Applies one element. The sign only matters for signed geometric elements.
pub fn apply_element(img: &ImageBuffer, e: &AugElement, sign: Sign) -> ImageBuffer {
    let sign = if e.signed && e.kind.is_geometric() {
        sign
    } else {
        Sign::Plus
    };
    apply_kind(img, e.kind, e.magnitude().unwrap_or(0.0), sign)
}

/// Applies the first element, then the second.
pub fn apply_operation(img: &ImageBuffer, op: &AugOperation, signs: [Sign; 2]) -> ImageBuffer {
    let mid = apply_element(img, &op.first, signs[0]);
    apply_element(&mid, &op.second, signs[1])
}

/// Applies a kind at an arbitrary magnitude. Magnitude is ignored by
/// AutoContrast, Equalize and Invert.
pub fn apply_kind(img: &ImageBuffer, kind: ElementKind, magnitude: f64, sign: Sign) -> ImageBuffer {
    use ElementKind::*;
    let s = sign.value();
    let (h, w) = (img.height() as f64, img.width() as f64);
    let cy = (h - 1.0) / 2.0;
    let cx = (w - 1.0) / 2.0;
    match kind {
        HorizontalShear => warp(img, |x, y| (x + s * magnitude * (y - cy), y)),
        VerticalShear => warp(img, |x, y| (x, y + s * magnitude * (x - cx))),
        HorizontalTranslate => {
            let shift = s * magnitude * w;
            warp(img, |x, y| (x - shift, y))
        }
        VerticalTranslate => {
            let shift = s * magnitude * h;
            warp(img, |x, y| (x, y - shift))
        }
        Rotate => {
            let (sin, cos) = (s * magnitude).to_radians().sin_cos();
            warp(img, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
            })
        }
        ColorAdjust => color_adjust(img, magnitude),
        Posterize => posterize(img, magnitude.floor() as u32),
        Solarize => map_samples(img, |v| {
            if v as f64 >= magnitude {
                255 - v
            } else {
                v
            }
        }),
        Contrast => {
            let n = (img.height() * img.width()) as f64;
            let mean = luma_plane(img).iter().sum::<f64>() / n;
            blend_with(img, magnitude, |_| mean)
        }
        Sharpness => {
            let smooth = smoothed(img);
            blend_with(img, magnitude, |i| smooth[i])
        }
        Brightness => blend_with(img, magnitude, |_| 0.0),
        AutoContrast => autocontrast(img),
        Equalize => equalize(img),
        Invert => map_samples(img, |v| 255 - v),
    }
}

fn map_samples(img: &ImageBuffer, f: impl Fn(u8) -> u8) -> ImageBuffer {
    let mut out = img.clone();
    out.pixels_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

/// Inverse-mapped resampling: `src(x, y)` gives the source coordinate for
/// output pixel centre `(x, y)`. Bilinear, constant fill outside the image.
fn warp(img: &ImageBuffer, src: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let sample = |yy: i64, xx: i64, c: usize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
            FILL
        } else {
            img.get(yy as usize, xx as usize, c) as f64
        }
    };
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let (xs, ys) = src(x as f64, y as f64);
            let (x0, y0) = (xs.floor(), ys.floor());
            let (fx, fy) = (xs - x0, ys - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..ch {
                let top = (1.0 - fx) * sample(y0, x0, c) + fx * sample(y0, x0 + 1, c);
                let bottom = (1.0 - fx) * sample(y0 + 1, x0, c) + fx * sample(y0 + 1, x0 + 1, c);
                out.set(y, x, c, to_u8((1.0 - fy) * top + fy * bottom));
            }
        }
    }
    out
}

/// ITU-R 601 luma per pixel; the sample itself for single-channel images.
fn luma_plane(img: &ImageBuffer) -> Vec<f64> {
    let ch = img.channels();
    img.pixels()
        .chunks_exact(ch)
        .map(|p| {
            if ch == 1 {
                p[0] as f64
            } else {
                0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
            }
        })
        .collect()
}

fn color_adjust(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let ch = img.channels();
    let luma = luma_plane(img);
    let mut out = img.clone();
    for (i, v) in out.pixels_mut().iter_mut().enumerate() {
        let g = luma[i / ch];
        *v = to_u8(g + factor * (*v as f64 - g));
    }
    out
}

/// `degenerate + factor * (img - degenerate)` where `degenerate(i)` is indexed
/// by flat sample position.
fn blend_with(img: &ImageBuffer, factor: f64, degenerate: impl Fn(usize) -> f64) -> ImageBuffer {
    let mut out = img.clone();
    for (i, v) in out.pixels_mut().iter_mut().enumerate() {
        let d = degenerate(i);
        *v = to_u8(d + factor * (*v as f64 - d));
    }
    out
}

/// 3x3 smoothing with centre weight 5 (sum 13); border pixels keep their value.
fn smoothed(img: &ImageBuffer) -> Vec<f64> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut out: Vec<f64> = img.pixels().iter().map(|&v| v as f64).collect();
    if h < 3 || w < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..ch {
                let mut acc = 4.0 * img.get(y, x, c) as f64;
                for yy in y - 1..=y + 1 {
                    for xx in x - 1..=x + 1 {
                        acc += img.get(yy, xx, c) as f64;
                    }
                }
                out[img.index(y, x, c)] = acc / 13.0;
            }
        }
    }
    out
}

fn posterize(img: &ImageBuffer, bits: u32) -> ImageBuffer {
    let bits = bits.min(8);
    let mask = if bits == 0 { 0 } else { 0xFFu8 << (8 - bits) };
    map_samples(img, |v| v & mask)
}

fn per_channel(img: &ImageBuffer, lut_for: impl Fn(&[u8]) -> Option<[u8; 256]>) -> ImageBuffer {
    let ch = img.channels();
    let mut out = img.clone();
    for c in 0..ch {
        let samples: Vec<u8> = img.pixels().iter().skip(c).step_by(ch).copied().collect();
        if let Some(lut) = lut_for(&samples) {
            out.pixels_mut()
                .iter_mut()
                .skip(c)
                .step_by(ch)
                .for_each(|v| *v = lut[*v as usize]);
        }
    }
    out
}

fn autocontrast(img: &ImageBuffer) -> ImageBuffer {
    per_channel(img, |samples| {
        let lo = *samples.iter().min()?;
        let hi = *samples.iter().max()?;
        if lo == hi {
            return None;
        }
        let scale = 255.0 / (hi - lo) as f64;
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = to_u8((v as f64 - lo as f64) * scale);
        }
        Some(lut)
    })
}

fn equalize(img: &ImageBuffer) -> ImageBuffer {
    per_channel(img, |samples| {
        let mut hist = [0u64; 256];
        for &v in samples {
            hist[v as usize] += 1;
        }
        if hist.iter().filter(|&&n| n > 0).count() <= 1 {
            return None;
        }
        let total = samples.len() as f64;
        let mut lut = [0u8; 256];
        let mut cdf = 0u64;
        for (v, slot) in lut.iter_mut().enumerate() {
            cdf += hist[v];
            *slot = to_u8(255.0 * cdf as f64 / total);
        }
        Some(lut)
    })
}
