use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// flatten -> dense(hidden) -> ReLU -> dense(classes)
    Mlp { hidden: usize },
    /// conv3x3(16) -> ReLU -> maxpool2 -> conv3x3(32) -> ReLU -> maxpool2 -> dense(classes)
    SmallCnn,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Mlp { .. } => "mlp",
            Architecture::SmallCnn => "smallcnn",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Mlp { hidden } => write!(f, "mlp:{hidden}"),
            Architecture::SmallCnn => f.write_str("smallcnn"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamShape {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter vector plus the per-tensor layout it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    values: Vec<f64>,
    layout: Vec<ParamShape>,
}

impl ModelWeights {
    pub fn new(values: Vec<f64>, layout: Vec<ParamShape>) -> Result<Self> {
        let expected: usize = layout.iter().map(ParamShape::numel).sum();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} weight values for a layout of {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamShape] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Standardized network inputs (channel-planar) with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_len: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_len: usize) -> Result<Self> {
        if input_len == 0 || inputs.len() != labels.len() * input_len {
            return Err(Error::Shape(format!(
                "{} input values for {} labels of width {input_len}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            input_len,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    /// Rows `indices` of this batch, in order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_len);
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        Batch {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            input_len: self.input_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer {
    Dense {
        input: usize,
        output: usize,
        offset: usize,
    },
    Conv3x3 {
        in_c: usize,
        out_c: usize,
        height: usize,
        width: usize,
        offset: usize,
    },
    Relu,
    MaxPool2 {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Layer {
    #[cfg(test)]
    pub(crate) fn out_len(&self, input_len: usize) -> usize {
        match *self {
            Layer::Dense { output, .. } => output,
            Layer::Conv3x3 {
                out_c,
                height,
                width,
                ..
            } => out_c * height * width,
            Layer::Relu => input_len,
            Layer::MaxPool2 {
                channels,
                height,
                width,
            } => channels * (height / 2) * (width / 2),
        }
    }
}

/// Fixed-architecture classifier with hand-written forward and backward passes.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    input: InputShape,
    classes: usize,
    layers: Vec<Layer>,
    layout: Vec<ParamShape>,
}

/// Scores for a batch plus the per-sample activations needed for backprop.
#[derive(Clone, Debug)]
pub struct Forward {
    pub scores: Vec<f64>,
    pub classes: usize,
    activations: Vec<Vec<Vec<f64>>>,
}

impl Forward {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.classes..(i + 1) * self.classes]
    }
}

impl Network {
    pub fn new(arch: Architecture, input: InputShape, classes: usize) -> Result<Self> {
        if input.is_empty() || classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs a non-empty input and at least 2 classes (got {input:?}, {classes})"
            )));
        }
        let mut layers = Vec::new();
        let mut layout = Vec::new();
        let mut offset = 0;
        let mut dense = |name: &str, input: usize, output: usize, layers: &mut Vec<Layer>| {
            layers.push(Layer::Dense {
                input,
                output,
                offset,
            });
            layout.push(ParamShape {
                name: format!("{name}.weight"),
                shape: vec![output, input],
            });
            layout.push(ParamShape {
                name: format!("{name}.bias"),
                shape: vec![output],
            });
            offset += output * input + output;
        };
        match arch {
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::InvalidArgument("mlp hidden width is zero".into()));
                }
                dense("dense1", input.len(), hidden, &mut layers);
                layers.push(Layer::Relu);
                dense("dense2", hidden, classes, &mut layers);
            }
            Architecture::SmallCnn => {
                let (h, w) = (input.height, input.width);
                if h < 4 || w < 4 {
                    return Err(Error::InvalidArgument(format!(
                        "smallcnn needs at least 4x4 inputs, got {h}x{w}"
                    )));
                }
                let mut conv_layout = Vec::new();
                let mut conv = |name: &str, in_c, out_c, height, width, offset: &mut usize| {
                    conv_layout.push(ParamShape {
                        name: format!("{name}.weight"),
                        shape: vec![out_c, in_c, 3, 3],
                    });
                    conv_layout.push(ParamShape {
                        name: format!("{name}.bias"),
                        shape: vec![out_c],
                    });
                    let layer = Layer::Conv3x3 {
                        in_c,
                        out_c,
                        height,
                        width,
                        offset: *offset,
                    };
                    *offset += out_c * in_c * 9 + out_c;
                    layer
                };
                let mut off = 0;
                let c1 = conv("conv1", input.channels, 16, h, w, &mut off);
                let (h2, w2) = (h / 2, w / 2);
                let c2 = conv("conv2", 16, 32, h2, w2, &mut off);
                let (h4, w4) = (h2 / 2, w2 / 2);
                layers.extend([
                    c1,
                    Layer::Relu,
                    Layer::MaxPool2 {
                        channels: 16,
                        height: h,
                        width: w,
                    },
                    c2,
                    Layer::Relu,
                    Layer::MaxPool2 {
                        channels: 32,
                        height: h2,
                        width: w2,
                    },
                ]);
                let flat = 32 * h4 * w4;
                let dense_offset = off;
                layers.push(Layer::Dense {
                    input: flat,
                    output: classes,
                    offset: dense_offset,
                });
                layout = conv_layout;
                layout.push(ParamShape {
                    name: "dense.weight".into(),
                    shape: vec![classes, flat],
                });
                layout.push(ParamShape {
                    name: "dense.bias".into(),
                    shape: vec![classes],
                });
            }
        }
        Ok(Self {
            arch,
            input,
            classes,
            layers,
            layout,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_layers(input: InputShape, classes: usize, layers: Vec<Layer>) -> Self {
        let mut layout = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            match *l {
                Layer::Dense { input, output, .. } => {
                    layout.push(ParamShape {
                        name: format!("l{i}.weight"),
                        shape: vec![output, input],
                    });
                    layout.push(ParamShape {
                        name: format!("l{i}.bias"),
                        shape: vec![output],
                    });
                }
                Layer::Conv3x3 { in_c, out_c, .. } => {
                    layout.push(ParamShape {
                        name: format!("l{i}.weight"),
                        shape: vec![out_c, in_c, 3, 3],
                    });
                    layout.push(ParamShape {
                        name: format!("l{i}.bias"),
                        shape: vec![out_c],
                    });
                }
                _ => {}
            }
        }
        Self {
            arch: Architecture::Mlp { hidden: 0 },
            input,
            classes,
            layers,
            layout,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layout(&self) -> &[ParamShape] {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.iter().map(ParamShape::numel).sum()
    }

    pub fn zero_weights(&self) -> ModelWeights {
        ModelWeights {
            values: vec![0.0; self.num_params()],
            layout: self.layout.clone(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelWeights {
        let mut values = Vec::with_capacity(self.num_params());
        for p in &self.layout {
            if p.name.ends_with(".bias") {
                values.extend(std::iter::repeat_n(0.0, p.numel()));
                continue;
            }
            let receptive: usize = p.shape[2..].iter().product();
            let fan_in = p.shape[1] * receptive;
            let fan_out = p.shape[0] * receptive;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..p.numel()).map(|_| rng.random_range(-limit..limit)));
        }
        ModelWeights {
            values,
            layout: self.layout.clone(),
        }
    }

    fn check(&self, w: &ModelWeights, batch: &Batch) -> Result<()> {
        if w.layout != self.layout {
            return Err(Error::Shape("weights layout does not match network".into()));
        }
        if batch.input_len != self.input.len() {
            return Err(Error::Shape(format!(
                "batch inputs of width {} for a network expecting {}",
                batch.input_len,
                self.input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, w: &ModelWeights, batch: &Batch) -> Result<Forward> {
        self.check(w, batch)?;
        let mut scores = Vec::with_capacity(batch.len() * self.classes);
        let mut activations = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let acts = self.forward_sample(&w.values, batch.sample(i));
            scores.extend_from_slice(acts.last().unwrap());
            activations.push(acts);
        }
        Ok(Forward {
            scores,
            classes: self.classes,
            activations,
        })
    }

    /// Scores only, without keeping activations.
    pub fn scores(&self, w: &ModelWeights, batch: &Batch) -> Result<Vec<f64>> {
        self.check(w, batch)?;
        let mut scores = Vec::with_capacity(batch.len() * self.classes);
        for i in 0..batch.len() {
            let mut x = batch.sample(i).to_vec();
            for layer in &self.layers {
                x = layer_forward(layer, &w.values, &x);
            }
            scores.extend_from_slice(&x);
        }
        Ok(scores)
    }

    fn forward_sample(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let next = layer_forward(layer, params, acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, w: &ModelWeights, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::Shape(format!(
                "label {bad} for {} classes",
                self.classes
            )));
        }
        let fwd = self.forward(w, batch)?;
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; w.values.len()];
        for (i, acts) in fwd.activations.iter().enumerate() {
            let scores = fwd.row(i);
            let y = batch.labels[i];
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() + max - scores[y];
            let mut upstream: Vec<f64> = exps.iter().map(|e| e / z / n).collect();
            upstream[y] -= 1.0 / n;
            for (l, layer) in self.layers.iter().enumerate().rev() {
                upstream = layer_backward(layer, &w.values, &acts[l], &upstream, &mut grad);
            }
        }
        let loss = loss / n;
        if !loss.is_finite() {
            // Step context is filled in by the caller.
            return Err(Error::NonFiniteLoss {
                loss,
                trajectory: 0,
                outer_step: 0,
                inner_step: 0,
            });
        }
        Ok((loss, grad))
    }

    /// Argmax predictions; ties go to the lowest class index.
    pub fn predict(&self, w: &ModelWeights, batch: &Batch) -> Result<Vec<usize>> {
        let scores = self.scores(w, batch)?;
        Ok(scores.chunks_exact(self.classes).map(argmax).collect())
    }

    /// Fraction of samples whose argmax prediction matches the label.
    pub fn evaluate_accuracy(&self, w: &ModelWeights, val: &Batch) -> Result<f64> {
        if val.is_empty() {
            return Err(Error::InvalidArgument("empty validation set".into()));
        }
        let predictions = self.predict(w, val)?;
        let correct = predictions
            .iter()
            .zip(&val.labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(correct as f64 / val.len() as f64)
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn layer_forward(layer: &Layer, params: &[f64], x: &[f64]) -> Vec<f64> {
    match *layer {
        Layer::Dense {
            input,
            output,
            offset,
        } => {
            let weights = &params[offset..offset + input * output];
            let bias = &params[offset + input * output..offset + input * output + output];
            (0..output)
                .map(|o| {
                    let row = &weights[o * input..(o + 1) * input];
                    bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        }
        Layer::Conv3x3 {
            in_c,
            out_c,
            height,
            width,
            offset,
        } => {
            let weights = &params[offset..offset + out_c * in_c * 9];
            let bias = &params[offset + out_c * in_c * 9..offset + out_c * in_c * 9 + out_c];
            let plane = height * width;
            let mut out = vec![0.0; out_c * plane];
            for o in 0..out_c {
                let dst = &mut out[o * plane..(o + 1) * plane];
                dst.iter_mut().for_each(|v| *v = bias[o]);
                for i in 0..in_c {
                    let src = &x[i * plane..(i + 1) * plane];
                    let k = &weights[(o * in_c + i) * 9..(o * in_c + i + 1) * 9];
                    for y in 0..height {
                        for xx in 0..width {
                            let mut acc = 0.0;
                            for dy in 0..3 {
                                let sy = y as isize + dy as isize - 1;
                                if sy < 0 || sy >= height as isize {
                                    continue;
                                }
                                for dx in 0..3 {
                                    let sx = xx as isize + dx as isize - 1;
                                    if sx < 0 || sx >= width as isize {
                                        continue;
                                    }
                                    acc += k[dy * 3 + dx] * src[sy as usize * width + sx as usize];
                                }
                            }
                            dst[y * width + xx] += acc;
                        }
                    }
                }
            }
            out
        }
        Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
        Layer::MaxPool2 {
            channels,
            height,
            width,
        } => {
            let (oh, ow) = (height / 2, width / 2);
            let mut out = Vec::with_capacity(channels * oh * ow);
            for c in 0..channels {
                for y in 0..oh {
                    for xx in 0..ow {
                        let (_, v) = pool_argmax(x, c, height, width, y, xx);
                        out.push(v);
                    }
                }
            }
            out
        }
    }
}

fn pool_argmax(x: &[f64], c: usize, height: usize, width: usize, y: usize, xx: usize) -> (usize, f64) {
    let base = c * height * width;
    let mut best = (base + 2 * y * width + 2 * xx, f64::NEG_INFINITY);
    for dy in 0..2 {
        for dx in 0..2 {
            let idx = base + (2 * y + dy) * width + 2 * xx + dx;
            if x[idx] > best.1 {
                best = (idx, x[idx]);
            }
        }
    }
    best
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the layer input.
fn layer_backward(
    layer: &Layer,
    params: &[f64],
    x: &[f64],
    upstream: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    match *layer {
        Layer::Dense {
            input,
            output,
            offset,
        } => {
            let weights = &params[offset..offset + input * output];
            let mut dx = vec![0.0; input];
            for o in 0..output {
                let g = upstream[o];
                if g == 0.0 {
                    continue;
                }
                let row = &weights[o * input..(o + 1) * input];
                let grow = &mut grad[offset + o * input..offset + (o + 1) * input];
                for j in 0..input {
                    grow[j] += g * x[j];
                    dx[j] += g * row[j];
                }
                grad[offset + input * output + o] += g;
            }
            dx
        }
        Layer::Conv3x3 {
            in_c,
            out_c,
            height,
            width,
            offset,
        } => {
            let plane = height * width;
            let mut dx = vec![0.0; in_c * plane];
            for o in 0..out_c {
                let up = &upstream[o * plane..(o + 1) * plane];
                grad[offset + out_c * in_c * 9 + o] += up.iter().sum::<f64>();
                for i in 0..in_c {
                    let kbase = offset + (o * in_c + i) * 9;
                    let src = &x[i * plane..(i + 1) * plane];
                    for y in 0..height {
                        for xx in 0..width {
                            let g = up[y * width + xx];
                            if g == 0.0 {
                                continue;
                            }
                            for dy in 0..3 {
                                let sy = y as isize + dy as isize - 1;
                                if sy < 0 || sy >= height as isize {
                                    continue;
                                }
                                for dx_ in 0..3 {
                                    let sx = xx as isize + dx_ as isize - 1;
                                    if sx < 0 || sx >= width as isize {
                                        continue;
                                    }
                                    let s = sy as usize * width + sx as usize;
                                    grad[kbase + dy * 3 + dx_] += g * src[s];
                                    dx[i * plane + s] += g * params[kbase + dy * 3 + dx_];
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        Layer::Relu => x
            .iter()
            .zip(upstream)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        Layer::MaxPool2 {
            channels,
            height,
            width,
        } => {
            let (oh, ow) = (height / 2, width / 2);
            let mut dx = vec![0.0; x.len()];
            for c in 0..channels {
                for y in 0..oh {
                    for xx in 0..ow {
                        let (idx, _) = pool_argmax(x, c, height, width, y, xx);
                        dx[idx] += upstream[(c * oh + y) * ow + xx];
                    }
                }
            }
            dx
        }
    }
}
