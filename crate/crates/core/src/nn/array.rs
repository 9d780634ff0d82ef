//! Dense array types: rank-3 activations, matrices, and parameter tensors.

use num_traits::Float;
use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use crate::{Error, Result};

/// Element type for all numeric code in the crate. Implemented for `f32`
/// (training) and `f64` (gradient checks and metrics).
pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}

/// An n-dimensional parameter tensor (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![F::zero(); n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor: shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Rank-3 activation array with dims (batch, channels, time), row-major so
/// each `(batch, channel)` time series is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Array3<F> {
    batch: usize,
    channels: usize,
    time: usize,
    data: Vec<F>,
}

impl<F: Scalar> Array3<F> {
    pub fn zeros(batch: usize, channels: usize, time: usize) -> Self {
        assert!(batch >= 1 && channels >= 1 && time >= 1, "array3 dims must be >= 1");
        Array3 { batch, channels, time, data: vec![F::zero(); batch * channels * time] }
    }

    pub fn from_vec(batch: usize, channels: usize, time: usize, data: Vec<F>) -> Result<Self> {
        if batch * channels * time != data.len() {
            return Err(Error::Shape(format!(
                "array3: dims ({batch}, {channels}, {time}) want {} elements, got {}",
                batch * channels * time,
                data.len()
            )));
        }
        Ok(Array3 { batch, channels, time, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Contiguous time series of one `(batch, channel)` pair.
    #[inline]
    pub fn series(&self, b: usize, c: usize) -> &[F] {
        let start = (b * self.channels + c) * self.time;
        &self.data[start..start + self.time]
    }

    #[inline]
    pub fn series_mut(&mut self, b: usize, c: usize) -> &mut [F] {
        let start = (b * self.channels + c) * self.time;
        &mut self.data[start..start + self.time]
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> F {
        self.data[(b * self.channels + c) * self.time + t]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, t: usize) -> &mut F {
        &mut self.data[(b * self.channels + c) * self.time + t]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Flatten each batch element's (channels x time) block into one row.
    pub fn flatten_rows(&self) -> Mat<F> {
        Mat {
            rows: self.batch,
            cols: self.channels * self.time,
            data: self.data.clone(),
        }
    }

    /// One batch element as a (1, channels, time) view copy.
    pub fn single(&self, b: usize) -> Array3<F> {
        let stride = self.channels * self.time;
        Array3 {
            batch: 1,
            channels: self.channels,
            time: self.time,
            data: self.data[b * stride..(b + 1) * stride].to_vec(),
        }
    }
}

/// Row-major 2D matrix, used for flattened activations, latent codes and
/// logits (rows = batch).
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "mat: dims ({rows}, {cols}) want {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut F {
        &mut self.data[r * self.cols + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Reinterpret each row as a (channels x time) block.
    pub fn into_array3(self, channels: usize, time: usize) -> Result<Array3<F>> {
        if channels * time != self.cols {
            return Err(Error::Shape(format!(
                "mat→array3: {} cols cannot split into {channels} channels x {time} time",
                self.cols
            )));
        }
        Ok(Array3 { batch: self.rows, channels, time, data: self.data })
    }
}
