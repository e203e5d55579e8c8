//! Image-shaped tensors: the value type every primitive operates on.

use std::fmt;

/// Height x width x channels, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape { height, width, channels }
    }

    pub fn numel(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Flat index of (y, x, c).
    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Dense H x W x C array of 64-bit reals, row-major.
///
/// Values are plain data; gradients live on the [`Graph`](super::Graph) that
/// recorded the computation, keyed by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            shape.numel(),
            "tensor data length {} does not match shape {}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        let shape = Shape::new(height, width, channels);
        Tensor { shape, data: vec![0.0; shape.numel()] }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        let shape = Shape::new(height, width, channels);
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(Shape::new(1, 1, 1), vec![value])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.shape.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.shape.idx(y, x, c);
        self.data[i] = value;
    }

    /// The single value of a 1x1x1 tensor.
    pub fn scalar_value(&self) -> f64 {
        assert!(self.shape.is_scalar(), "expected scalar tensor, found {}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Tensor {
        Tensor::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Largest absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch: {} vs {}", self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean of squared differences over every element.
    pub fn mse(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch: {} vs {}", self.shape, other.shape);
        let n = self.numel() as f64;
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let mut t = Tensor::zeros(2, 3, 2);
        t.set(1, 2, 1, 7.0);
        assert_eq!(t.data()[(3 + 2) * 2 + 1], 7.0);
        assert_eq!(t.at(1, 2, 1), 7.0);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn length_mismatch_is_rejected() {
        Tensor::new(Shape::new(2, 2, 1), vec![0.0; 3]);
    }

    #[test]
    fn mse_counts_every_element() {
        let a = Tensor::zeros(1, 2, 2);
        let mut b = Tensor::zeros(1, 2, 2);
        b.set(0, 1, 1, 2.0);
        assert_eq!(a.mse(&b), 1.0);
    }
}
