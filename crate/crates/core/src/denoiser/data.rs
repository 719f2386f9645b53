//! Procedural desk-scale dataset: per-class shapes (filled squares, disks,
//! horizontal stripes, vertical stripes) at class-dependent positions with
//! per-sample jitter, values in [-1, 1]. No external downloads; every
//! sample is a pure function of (seed, index).

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::chacha_stream;
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let shape = images[0].shape();
        if images.iter().any(|im| im.shape() != shape) {
            return Err(Error::InvalidArgument(
                "dataset images must share one shape".into(),
            ));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &ImageTensor {
        &self.images[i]
    }

    /// Label in 1..=K.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.images[0].shape()
    }
}

/// Generate `count` images of `size` x `size`, labels cycling 1..=num_classes.
pub fn synthetic_shapes(
    count: usize,
    channels: usize,
    size: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Empty("dataset"));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    if size < 4 {
        return Err(Error::InvalidArgument(alloc::format!(
            "image size {size} too small for the shape generator (need >= 4)"
        )));
    }
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = 1 + (i % num_classes);
        let mut rng = chacha_stream(seed, i as u64);
        let grid = render_class(label, size, &mut rng);
        let mut data = Vec::with_capacity(channels * size * size);
        for _ in 0..channels {
            data.extend_from_slice(&grid);
        }
        images.push(ImageTensor::new(channels, size, size, data)?);
        labels.push(label);
    }
    Dataset::new(images, labels)
}

fn render_class<R: Rng + ?Sized>(label: usize, size: usize, rng: &mut R) -> Vec<f64> {
    let mut grid = alloc::vec![-1.0; size * size];
    let amplitude = rng.random_range(0.6..1.0);
    let archetype = (label - 1) % 4;
    // class-dependent base offset so higher archetype repeats stay distinct
    let shift = (label - 1) / 4;
    match archetype {
        0 => {
            // filled square
            let side = size / 2;
            let max_corner = size - side;
            let r0 = (rng.random_range(0..max_corner) + shift) % (max_corner.max(1));
            let c0 = rng.random_range(0..max_corner);
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    grid[r * size + c] = amplitude;
                }
            }
        }
        1 => {
            // filled disk
            let radius = size as f64 / 4.0;
            let jitter = size as f64 / 8.0;
            let cy = size as f64 / 2.0 + rng.random_range(-jitter..jitter);
            let cx = size as f64 / 2.0 + rng.random_range(-jitter..jitter);
            for r in 0..size {
                for c in 0..size {
                    let dy = r as f64 + 0.5 - cy;
                    let dx = c as f64 + 0.5 - cx;
                    if dy * dy + dx * dx <= radius * radius {
                        grid[r * size + c] = amplitude;
                    }
                }
            }
        }
        2 => {
            // horizontal stripes, period 4
            let phase = rng.random_range(0..4);
            for r in 0..size {
                if (r + phase) % 4 < 2 {
                    for c in 0..size {
                        grid[r * size + c] = amplitude;
                    }
                }
            }
        }
        _ => {
            // vertical stripes, period 4
            let phase = rng.random_range(0..4);
            for c in 0..size {
                if (c + phase) % 4 < 2 {
                    for r in 0..size {
                        grid[r * size + c] = amplitude;
                    }
                }
            }
        }
    }
    grid
}
