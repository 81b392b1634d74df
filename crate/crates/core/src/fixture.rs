//! Golden image fixtures: a `height width channels` text line, then raw bytes.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub fn write_fixture<W: Write>(mut out: W, img: &ImageBuffer) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", img.height(), img.width(), img.channels())?;
    out.write_all(img.pixels())
}

pub fn read_fixture<R: Read>(input: R) -> Result<ImageBuffer> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::format("fixture", e.to_string()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format("fixture", format!("header {header:?}: {e}")))?;
    let [h, w, c] = dims[..] else {
        return Err(Error::format(
            "fixture",
            format!("expected 3 dimensions, got {header:?}"),
        ));
    };
    let mut pixels = Vec::new();
    reader
        .read_to_end(&mut pixels)
        .map_err(|e| Error::format("fixture", e.to_string()))?;
    if pixels.len() != h * w * c {
        return Err(Error::format(
            "fixture",
            format!("{} payload bytes for {h}x{w}x{c}", pixels.len()),
        ));
    }
    ImageBuffer::new(h, w, c, pixels)
}

pub fn save_fixture(path: &Path, img: &ImageBuffer) -> Result<()> {
    let mut buf = Vec::new();
    write_fixture(&mut buf, img).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_fixture(path: &Path) -> Result<ImageBuffer> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_fixture(file)
}
