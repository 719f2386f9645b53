//! The conditional noise predictor.
//!
//! Architecture: flatten the image, concatenate a sinusoidal timestep
//! embedding and a learned class embedding (row 0 is the null class), run
//! two SiLU hidden layers, and reshape a linear head back to the image.
//! The head is zero-initialized so a fresh model predicts exactly zero.
//!
//! Parameters live in one flat `Vec<f64>` described by named blocks; the
//! backward pass accumulates into an equally shaped gradient buffer. The
//! forward pass records the activations it needs (`Tape`) so gradients are
//! exact reverse-mode derivatives.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub hidden_width: usize,
    pub time_embed_dim: usize,
    pub class_embed_dim: usize,
    /// Number of real classes K; valid labels are 0..=K with 0 = null.
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn desk_default(channels: usize, height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            channels,
            height,
            width,
            hidden_width: 256,
            time_embed_dim: 32,
            class_embed_dim: 16,
            num_classes,
        }
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn input_dim(&self) -> usize {
        self.image_len() + self.time_embed_dim + self.class_embed_dim
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "image dims must be positive, got {}x{}x{}",
                self.channels,
                self.height,
                self.width
            )));
        }
        if self.hidden_width == 0 || self.num_classes == 0 {
            return Err(Error::InvalidArgument(
                "hidden width and class count must be positive".into(),
            ));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "time embedding dimension must be even and >= 2, got {}",
                self.time_embed_dim
            )));
        }
        if self.class_embed_dim == 0 {
            return Err(Error::InvalidArgument(
                "class embedding dimension must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Named view into the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    cfg: ModelConfig,
    blocks: Vec<ParamBlock>,
    params: Vec<f64>,
}

/// Activations recorded by `forward_traced`, consumed by `backward`.
pub(crate) struct Tape {
    z0: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
    label: usize,
}

fn layout(cfg: &ModelConfig) -> Vec<ParamBlock> {
    let d = cfg.image_len();
    let input = cfg.input_dim();
    let h = cfg.hidden_width;
    let rows = cfg.num_classes + 1;
    let ce = cfg.class_embed_dim;
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut push = |name: &'static str, shape: Vec<usize>| {
        let len: usize = shape.iter().product();
        blocks.push(ParamBlock {
            name,
            shape,
            offset,
            len,
        });
        offset += len;
    };
    push("w1", vec![h, input]);
    push("b1", vec![h]);
    push("w2", vec![h, h]);
    push("b2", vec![h]);
    push("w3", vec![d, h]);
    push("b3", vec![d]);
    push("class_embed", vec![rows, ce]);
    blocks
}

fn silu(x: f64) -> f64 {
    x / (1.0 + libm::exp(-x))
}

fn silu_derivative(x: f64) -> f64 {
    let sig = 1.0 / (1.0 + libm::exp(-x));
    sig * (1.0 + x * (1.0 - sig))
}

/// y = W z + b for a row-major (out x inp) matrix.
fn affine(w: &[f64], b: &[f64], z: &[f64], out: &mut [f64]) {
    let inp = z.len();
    for (o, (row, bias)) in w.chunks_exact(inp).zip(b).enumerate() {
        out[o] = bias + row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>();
    }
}

impl DenoiserModel {
    /// Fresh model: variance-scaled uniform hidden layers, zero biases,
    /// zero head, small uniform class embeddings.
    pub fn init<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let blocks = layout(&cfg);
        let total: usize = blocks.iter().map(|b| b.len).sum();
        let mut params = vec![0.0; total];
        for block in &blocks {
            let slice = &mut params[block.offset..block.offset + block.len];
            match block.name {
                "w1" | "w2" => {
                    let fan_in = block.shape[1] as f64;
                    let fan_out = block.shape[0] as f64;
                    let bound = libm::sqrt(6.0 / (fan_in + fan_out));
                    for v in slice {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                "class_embed" => {
                    for v in slice {
                        *v = rng.random_range(-0.1..0.1);
                    }
                }
                // biases and the head stay zero
                _ => {}
            }
        }
        Ok(Self {
            cfg,
            blocks,
            params,
        })
    }

    /// Rebuild a model from a flat parameter vector (checkpoint loading).
    pub fn from_parts(cfg: ModelConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let blocks = layout(&cfg);
        let total: usize = blocks.iter().map(|b| b.len).sum();
        if params.len() != total {
            return Err(Error::InvalidArgument(alloc::format!(
                "parameter vector has length {}, expected {total}",
                params.len()
            )));
        }
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            cfg,
            blocks,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn param_blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn block_values(&self, block: &ParamBlock) -> &[f64] {
        &self.params[block.offset..block.offset + block.len]
    }

    fn block(&self, name: &str) -> &ParamBlock {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .expect("fixed layout")
    }

    fn values(&self, name: &str) -> &[f64] {
        let b = self.block(name);
        &self.params[b.offset..b.offset + b.len]
    }

    fn check_inputs(&self, x: &ImageTensor, t: usize, label: usize) -> Result<()> {
        if x.shape() != (self.cfg.channels, self.cfg.height, self.cfg.width) {
            return Err(Error::ShapeMismatch {
                left_channels: x.channels(),
                left_height: x.height(),
                left_width: x.width(),
                right_channels: self.cfg.channels,
                right_height: self.cfg.height,
                right_width: self.cfg.width,
            });
        }
        if t == 0 {
            return Err(Error::TimestepOutOfRange {
                t,
                lo: 1,
                hi: usize::MAX,
            });
        }
        if label > self.cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                max: self.cfg.num_classes,
            });
        }
        Ok(())
    }

    fn build_input(&self, x: &ImageTensor, t: usize, label: usize) -> Vec<f64> {
        let d = self.cfg.image_len();
        let te = self.cfg.time_embed_dim;
        let ce = self.cfg.class_embed_dim;
        let mut z0 = vec![0.0; d + te + ce];
        z0[..d].copy_from_slice(x.data());
        time_embedding(t, te, &mut z0[d..d + te]);
        let emb = self.values("class_embed");
        z0[d + te..].copy_from_slice(&emb[label * ce..(label + 1) * ce]);
        z0
    }

    pub(crate) fn forward_traced(
        &self,
        x: &ImageTensor,
        t: usize,
        label: usize,
    ) -> Result<(ImageTensor, Tape)> {
        self.check_inputs(x, t, label)?;
        let h = self.cfg.hidden_width;
        let d = self.cfg.image_len();
        let z0 = self.build_input(x, t, label);
        let mut pre1 = vec![0.0; h];
        affine(self.values("w1"), self.values("b1"), &z0, &mut pre1);
        let h1: Vec<f64> = pre1.iter().map(|&v| silu(v)).collect();
        let mut pre2 = vec![0.0; h];
        affine(self.values("w2"), self.values("b2"), &h1, &mut pre2);
        let h2: Vec<f64> = pre2.iter().map(|&v| silu(v)).collect();
        let mut out = vec![0.0; d];
        affine(self.values("w3"), self.values("b3"), &h2, &mut out);
        let image = ImageTensor::new(self.cfg.channels, self.cfg.height, self.cfg.width, out)?;
        Ok((
            image,
            Tape {
                z0,
                pre1,
                h1,
                pre2,
                h2,
                label,
            },
        ))
    }

    /// Deterministic prediction for (x, t, label).
    pub fn forward(&self, x: &ImageTensor, t: usize, label: usize) -> Result<ImageTensor> {
        Ok(self.forward_traced(x, t, label)?.0)
    }

    /// Accumulate d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub(crate) fn backward(&self, tape: &Tape, d_out: &[f64], grads: &mut [f64]) {
        let cfg = &self.cfg;
        let h = cfg.hidden_width;
        let d = cfg.image_len();
        let input = cfg.input_dim();
        let te = cfg.time_embed_dim;
        let ce = cfg.class_embed_dim;

        let w3 = self.values("w3");
        let w2 = self.values("w2");
        let w1 = self.values("w1");
        let (b_w1, b_b1, b_w2, b_b2, b_w3, b_b3, b_emb) = (
            self.block("w1").offset,
            self.block("b1").offset,
            self.block("w2").offset,
            self.block("b2").offset,
            self.block("w3").offset,
            self.block("b3").offset,
            self.block("class_embed").offset,
        );

        // head
        let mut d_h2 = vec![0.0; h];
        for o in 0..d {
            let g = d_out[o];
            if g != 0.0 {
                let row = &w3[o * h..(o + 1) * h];
                let grow = &mut grads[b_w3 + o * h..b_w3 + (o + 1) * h];
                for j in 0..h {
                    grow[j] += g * tape.h2[j];
                    d_h2[j] += row[j] * g;
                }
            }
            grads[b_b3 + o] += g;
        }

        // second hidden layer
        let mut d_h1 = vec![0.0; h];
        for o in 0..h {
            let g = d_h2[o] * silu_derivative(tape.pre2[o]);
            if g != 0.0 {
                let row = &w2[o * h..(o + 1) * h];
                let grow = &mut grads[b_w2 + o * h..b_w2 + (o + 1) * h];
                for j in 0..h {
                    grow[j] += g * tape.h1[j];
                    d_h1[j] += row[j] * g;
                }
            }
            grads[b_b2 + o] += g;
        }

        // first hidden layer; only the class-embedding slice of d_z0 matters
        let mut d_z0_emb = vec![0.0; ce];
        for o in 0..h {
            let g = d_h1[o] * silu_derivative(tape.pre1[o]);
            if g != 0.0 {
                let row = &w1[o * input..(o + 1) * input];
                let grow = &mut grads[b_w1 + o * input..b_w1 + (o + 1) * input];
                for j in 0..input {
                    grow[j] += g * tape.z0[j];
                }
                for j in 0..ce {
                    d_z0_emb[j] += row[d + te + j] * g;
                }
            }
            grads[b_b1 + o] += g;
        }

        let emb_row = b_emb + tape.label * ce;
        for j in 0..ce {
            grads[emb_row + j] += d_z0_emb[j];
        }
    }
}

/// Standard sinusoidal embedding: half sines, half cosines, geometric
/// frequency ladder from 1 down to 1/10000.
fn time_embedding(t: usize, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    let t = t as f64;
    for i in 0..half {
        let exponent = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = libm::exp(-libm::log(10000.0) * exponent);
        out[i] = libm::sin(t * freq);
        out[half + i] = libm::cos(t * freq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha;

    fn micro_cfg() -> ModelConfig {
        ModelConfig {
            channels: 1,
            height: 2,
            width: 2,
            hidden_width: 3,
            time_embed_dim: 4,
            class_embed_dim: 2,
            num_classes: 2,
        }
    }

    #[test]
    fn zero_head_means_zero_output() {
        let mut rng = chacha(1);
        let model = DenoiserModel::init(micro_cfg(), &mut rng).unwrap();
        let x = ImageTensor::randn(1, 2, 2, &mut rng);
        let out = model.forward(&x, 3, 1).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = chacha(2);
        let mut model = DenoiserModel::init(micro_cfg(), &mut rng).unwrap();
        // randomize the head so the output is nontrivial
        for v in model.params_mut().iter_mut() {
            *v += 0.01;
        }
        let x = ImageTensor::randn(1, 2, 2, &mut rng);
        let a = model.forward(&x, 5, 2).unwrap();
        let b = model.forward(&x, 5, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_validation() {
        let mut rng = chacha(3);
        let model = DenoiserModel::init(micro_cfg(), &mut rng).unwrap();
        let x = ImageTensor::zeros(1, 2, 2);
        assert!(matches!(
            model.forward(&x, 1, 3).unwrap_err(),
            Error::LabelOutOfRange { label: 3, max: 2 }
        ));
        assert!(model.forward(&x, 0, 1).is_err());
        let bad = ImageTensor::zeros(1, 4, 4);
        assert!(model.forward(&bad, 1, 1).is_err());
    }

    #[test]
    fn from_parts_round_trip() {
        let mut rng = chacha(4);
        let model = DenoiserModel::init(micro_cfg(), &mut rng).unwrap();
        let rebuilt =
            DenoiserModel::from_parts(model.config().clone(), model.params().to_vec()).unwrap();
        assert_eq!(model, rebuilt);
        assert!(DenoiserModel::from_parts(micro_cfg(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn block_layout_covers_params() {
        let mut rng = chacha(5);
        let model = DenoiserModel::init(micro_cfg(), &mut rng).unwrap();
        let total: usize = model.param_blocks().iter().map(|b| b.len).sum();
        assert_eq!(total, model.param_count());
        let mut offset = 0;
        for b in model.param_blocks() {
            assert_eq!(b.offset, offset);
            assert_eq!(b.len, b.shape.iter().product::<usize>());
            offset += b.len;
        }
    }

    #[test]
    fn time_embedding_range() {
        let mut buf = [0.0; 8];
        time_embedding(500, 8, &mut buf);
        assert!(buf.iter().all(|v| v.abs() <= 1.0));
        let mut buf2 = [0.0; 8];
        time_embedding(499, 8, &mut buf2);
        assert_ne!(buf, buf2);
    }
}
