//! Scalar reference for the augmentation kernels: every output sample is
//! computed on its own from the source image, with no shared helpers from the
//! library.

use autoaug::kernels::ElementKind;
use autoaug::ImageBuffer;

fn byte(v: f64) -> u8 {
    let r = if v >= 0.0 { (v + 0.5).floor() } else { (v - 0.5).ceil() };
    if r < 0.0 {
        0
    } else if r > 255.0 {
        255
    } else {
        r as u8
    }
}

fn at(img: &ImageBuffer, y: i64, x: i64, c: usize) -> f64 {
    let inside = y >= 0 && x >= 0 && (y as usize) < img.height() && (x as usize) < img.width();
    if inside {
        img.pixels()[(y as usize * img.width() + x as usize) * img.channels() + c] as f64
    } else {
        128.0
    }
}

fn bilinear(img: &ImageBuffer, xs: f64, ys: f64, c: usize) -> u8 {
    let x0 = xs.floor();
    let y0 = ys.floor();
    let ax = xs - x0;
    let ay = ys - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v00 = at(img, yi, xi, c);
    let v01 = at(img, yi, xi + 1, c);
    let v10 = at(img, yi + 1, xi, c);
    let v11 = at(img, yi + 1, xi + 1, c);
    let top = (1.0 - ax) * v00 + ax * v01;
    let bottom = (1.0 - ax) * v10 + ax * v11;
    byte((1.0 - ay) * top + ay * bottom)
}

fn luma(img: &ImageBuffer, y: usize, x: usize) -> f64 {
    if img.channels() == 1 {
        return at(img, y as i64, x as i64, 0);
    }
    let r = at(img, y as i64, x as i64, 0);
    let g = at(img, y as i64, x as i64, 1);
    let b = at(img, y as i64, x as i64, 2);
    0.299 * r + 0.587 * g + 0.114 * b
}

fn channel_values(img: &ImageBuffer, c: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.push(at(img, y as i64, x as i64, c) as u8);
        }
    }
    out
}

fn sample(img: &ImageBuffer, kind: ElementKind, m: f64, s: f64, y: usize, x: usize, c: usize) -> u8 {
    let h = img.height() as f64;
    let w = img.width() as f64;
    let cy = (h - 1.0) / 2.0;
    let cx = (w - 1.0) / 2.0;
    let (xf, yf) = (x as f64, y as f64);
    let v = at(img, y as i64, x as i64, c);
    match kind {
        ElementKind::HorizontalShear => bilinear(img, xf + s * m * (yf - cy), yf, c),
        ElementKind::VerticalShear => bilinear(img, xf, yf + s * m * (xf - cx), c),
        ElementKind::HorizontalTranslate => bilinear(img, xf - s * m * w, yf, c),
        ElementKind::VerticalTranslate => bilinear(img, xf, yf - s * m * h, c),
        ElementKind::Rotate => {
            let a = s * m * std::f64::consts::PI / 180.0;
            let xs = cx + a.cos() * (xf - cx) + a.sin() * (yf - cy);
            let ys = cy - a.sin() * (xf - cx) + a.cos() * (yf - cy);
            bilinear(img, xs, ys, c)
        }
        ElementKind::ColorAdjust => {
            let g = luma(img, y, x);
            byte(g + m * (v - g))
        }
        ElementKind::Posterize => {
            let bits = m.floor() as u32;
            let step = 2f64.powi(8 - bits as i32);
            ((v / step).floor() * step) as u8
        }
        ElementKind::Solarize => {
            if v >= m {
                (255.0 - v) as u8
            } else {
                v as u8
            }
        }
        ElementKind::Contrast => {
            let mut total = 0.0;
            for yy in 0..img.height() {
                for xx in 0..img.width() {
                    total += luma(img, yy, xx);
                }
            }
            let mean = total / (h * w);
            byte(mean + m * (v - mean))
        }
        ElementKind::Sharpness => {
            let border = y == 0 || x == 0 || y + 1 == img.height() || x + 1 == img.width();
            let smooth = if border || img.height() < 3 || img.width() < 3 {
                v
            } else {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let wgt = if dy == 0 && dx == 0 { 5.0 } else { 1.0 };
                        acc += wgt * at(img, y as i64 + dy, x as i64 + dx, c);
                    }
                }
                acc / 13.0
            };
            byte(smooth + m * (v - smooth))
        }
        ElementKind::Brightness => byte(m * v),
        ElementKind::AutoContrast => {
            let vals = channel_values(img, c);
            let lo = *vals.iter().min().unwrap() as f64;
            let hi = *vals.iter().max().unwrap() as f64;
            if lo == hi {
                v as u8
            } else {
                byte((v - lo) * (255.0 / (hi - lo)))
            }
        }
        ElementKind::Equalize => {
            let vals = channel_values(img, c);
            let first = vals[0];
            if vals.iter().all(|&q| q == first) {
                return v as u8;
            }
            let below = vals.iter().filter(|&&q| q as f64 <= v).count() as f64;
            byte(255.0 * below / vals.len() as f64)
        }
        ElementKind::Invert => (255.0 - v) as u8,
    }
}

/// Reference output of one kind at a given magnitude and direction (+1 or -1).
pub fn reference(img: &ImageBuffer, kind: ElementKind, magnitude: f64, direction: f64) -> ImageBuffer {
    ImageBuffer::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        sample(img, kind, magnitude, direction, y, x, c)
    })
    .unwrap()
}
