//! Search cost in normalized iterations: models trained x images per model x
//! epochs / reference batch size.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const REFERENCE_BATCH: u64 = 1024;

/// Rounds to `digits` significant figures, halves away from zero.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - exp);
    let r = (x * scale).round() / scale;
    // Re-parse through the decimal form to drop representation noise.
    format!("{:.*e}", (digits - 1) as usize, r).parse().unwrap_or(r)
}

/// `models * images * epochs / ref_batch`, rounded to 3 significant figures.
pub fn cost_iterations(models: u64, images: u64, epochs: u64, ref_batch: u64) -> Result<f64> {
    if models == 0 || images == 0 || epochs == 0 || ref_batch == 0 {
        return Err(Error::InvalidArgument(
            "cost inputs must all be positive".into(),
        ));
    }
    let raw = models as f64 * images as f64 * epochs as f64 / ref_batch as f64;
    Ok(round_sig(raw, 3))
}

/// Formats a 3-significant-figure value as `7.03e6`, dropping trailing zeros.
pub fn format_sig(x: f64) -> String {
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    format!("{mantissa}e{exp}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub method: String,
    pub dataset: String,
    pub models: u64,
    pub images: u64,
    pub epochs: u64,
    pub iterations: f64,
}

impl CostRow {
    pub fn new(method: &str, dataset: &str, models: u64, images: u64, epochs: u64) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            dataset: dataset.into(),
            models,
            images,
            epochs,
            iterations: cost_iterations(models, images, epochs, REFERENCE_BATCH)?,
        })
    }
}

/// The published comparison: fixed-policy search with 15000 child models
/// against 8 (CIFAR-10) and 4 (ImageNet) online trajectories.
pub fn paper_preset() -> Vec<CostRow> {
    [
        ("AutoAugment", "CIFAR-10", 15_000, 4_000, 120),
        ("AutoAugment", "ImageNet", 15_000, 6_000, 200),
        ("online", "CIFAR-10", 8, 50_000, 300),
        ("online", "ImageNet", 4, 1_280_000, 150),
    ]
    .into_iter()
    .map(|(m, d, n, i, e)| CostRow::new(m, d, n, i, e).expect("positive preset"))
    .collect()
}

/// Speed-up of `slow` over `fast`: the ratio of the two table values rounded to
/// 3 significant figures, then to the nearest integer (halves away from zero).
/// Returns `(ratio, rounded)`.
pub fn speedup(slow: f64, fast: f64) -> (f64, u64) {
    let ratio = round_sig(slow / fast, 3);
    (ratio, ratio.round() as u64)
}

pub fn render_table(rows: &[CostRow]) -> String {
    let mut out = String::new();
    let header = ["method", "dataset", "models", "images", "epochs", "iterations"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.dataset.clone(),
                r.models.to_string(),
                r.images.to_string(),
                r.epochs.to_string(),
                format_sig(r.iterations),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    for row in &body {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out.push('\n');
    for dataset in ["CIFAR-10", "ImageNet"] {
        let find = |m: &str| rows.iter().find(|r| r.method == m && r.dataset == dataset);
        let (Some(slow), Some(fast)) = (find("AutoAugment"), find("online")) else {
            continue;
        };
        let (ratio, rounded) = speedup(slow.iterations, fast.iterations);
        write!(
            out,
            "speed-up {dataset}: {rounded}x ({} / {} = {ratio})",
            format_sig(slow.iterations),
            format_sig(fast.iterations)
        )
        .unwrap();
        if (ratio - rounded as f64).abs() >= 0.5 - 1e-9 {
            out.push_str(" [note: exact half, rounded up]");
        }
        out.push('\n');
    }
    writeln!(
        out,
        "iterations = models x images x epochs / {REFERENCE_BATCH}, 3 significant figures"
    )
    .unwrap();
    out
}
