//! Checkpoints: a text header describing the model, then the weights as
//! little-endian f64.
//!
//! ```text
//! autoaug-checkpoint 1
//! model mlp:64
//! input 8 8 1
//! classes 2
//! mean 127.5
//! std 40.25
//! layer dense1.weight 64,64
//! layer dense1.bias 64
//! ...
//! data 4290
//! <4290 * 8 bytes>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::{Architecture, InputShape, ModelWeights, Network, ParamShape};
use super::standardize::Standardizer;

const MAGIC: &str = "autoaug-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub input: InputShape,
    pub classes: usize,
    pub standardizer: Standardizer,
    pub weights: ModelWeights,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network> {
        let net = Network::new(self.architecture, self.input, self.classes)?;
        if net.layout() != self.weights.layout() {
            return Err(Error::format(
                "checkpoint",
                "layer layout does not match the declared model",
            ));
        }
        Ok(net)
    }
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "model {}", ckpt.architecture)?;
    let i = ckpt.input;
    writeln!(out, "input {} {} {}", i.height, i.width, i.channels)?;
    writeln!(out, "classes {}", ckpt.classes)?;
    writeln!(out, "mean {}", join(&ckpt.standardizer.mean, " "))?;
    writeln!(out, "std {}", join(&ckpt.standardizer.std, " "))?;
    for p in ckpt.weights.layout() {
        writeln!(out, "layer {} {}", p.name, join(&p.shape, ","))?;
    }
    writeln!(out, "data {}", ckpt.weights.len())?;
    for v in ckpt.weights.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn bad(message: impl Into<String>) -> Error {
    Error::format("checkpoint", message)
}

fn parse_list<T: std::str::FromStr>(s: &str, sep: char) -> Result<Vec<T>> {
    s.split(sep)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| bad(format!("bad value {t:?}"))))
        .collect()
}

fn parse_architecture(s: &str) -> Result<Architecture> {
    match s.split_once(':') {
        Some(("mlp", hidden)) => Ok(Architecture::Mlp {
            hidden: hidden.parse().map_err(|_| bad(format!("bad model {s:?}")))?,
        }),
        None if s == "smallcnn" => Ok(Architecture::SmallCnn),
        _ => Err(bad(format!("unknown model {s:?}"))),
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<R>| -> Result<String> {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
        if n == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(bad("missing magic line"));
    }
    let mut field = |reader: &mut BufReader<R>, key: &str| -> Result<String> {
        let l = next_line(reader)?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ => Err(bad(format!("expected `{key}` line, found {l:?}"))),
        }
    };
    let architecture = parse_architecture(&field(&mut reader, "model")?)?;
    let dims: Vec<usize> = parse_list(&field(&mut reader, "input")?, ' ')?;
    let [height, width, channels] = dims[..] else {
        return Err(bad("input needs 3 dimensions"));
    };
    let classes: usize = field(&mut reader, "classes")?
        .parse()
        .map_err(|_| bad("bad class count"))?;
    let mean = parse_list(&field(&mut reader, "mean")?, ' ')?;
    let std = parse_list(&field(&mut reader, "std")?, ' ')?;
    let mut layout = Vec::new();
    let count = loop {
        let l = next_line(&mut reader)?;
        match l.split_once(' ') {
            Some(("layer", rest)) => {
                let (name, shape) = rest
                    .rsplit_once(' ')
                    .ok_or_else(|| bad(format!("bad layer line {l:?}")))?;
                layout.push(ParamShape {
                    name: name.to_string(),
                    shape: parse_list(shape, ',')?,
                });
            }
            Some(("data", n)) => break n.parse::<usize>().map_err(|_| bad("bad data count"))?,
            _ => return Err(bad(format!("unexpected header line {l:?}"))),
        }
    };
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| bad(e.to_string()))?;
    if bytes.len() != count * 8 {
        return Err(bad(format!(
            "{} payload bytes for {count} values",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let ckpt = Checkpoint {
        architecture,
        input: InputShape {
            height,
            width,
            channels,
        },
        classes,
        standardizer: Standardizer { mean, std },
        weights: ModelWeights::new(values, layout)?,
    };
    if ckpt.standardizer.mean.len() != channels || ckpt.standardizer.std.len() != channels {
        return Err(bad("standardization statistics do not match channel count"));
    }
    ckpt.network()?;
    Ok(ckpt)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(file)
}
