//! Discrete calculus on the pixel grid.
//!
//! Pixel spacing is 1. Axis 0 runs along a row (`x`, column index), axis 1
//! runs down the image (`y`, row index). First-order partials are forward
//! differences that vanish on the last column/row (replicate boundary), and
//! an `h`-fold partial is the composition of `h` first-order ones, so every
//! constant image lies in the kernel of every order.
//!
//! A [`JetField`] stacks, per pixel, the partials of orders `1..=d` in
//! lexicographic multi-index order, lower orders first: for `d = 2` the
//! six channels are `∂x, ∂y, ∂x∂x, ∂x∂y, ∂y∂x, ∂y∂y`.

use crate::error::{Error, Result};

/// Highest differential order supported by [`hessian_stack`].
pub const MAX_ORDER: usize = 3;

/// Number of jet channels for derivatives of orders `1..=d` in two dimensions.
pub const fn channel_count(d: usize) -> usize {
    (1 << (d + 1)) - 2
}

/// First channel of the order-`h` block.
pub(crate) const fn block_offset(h: usize) -> usize {
    (1 << h) - 2
}

pub(crate) fn check_order(d: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&d) {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(d))
    }
}

/// A real-valued `width × height` raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::ImageTooSmall { width, height });
        }
        if values.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::constant(width, height, 0.0)
    }

    /// Builds an image from `f(x, y)`, `x` the column and `y` the row.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Internal constructor for buffers already known to be well formed.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            })
        }
    }

    /// Euclidean inner product over all pixels.
    pub fn dot(&self, other: &Image) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Sum of squared pixel differences.
    pub fn squared_distance(&self, other: &Image) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Image) -> f64 {
        self.squared_distance(other).sqrt()
    }

    /// Mean pixel value, accumulated relative to the first pixel so that
    /// constant images return their value exactly.
    pub fn mean(&self) -> f64 {
        let first = self.values[0];
        first + self.values.iter().map(|v| v - first).sum::<f64>() / self.values.len() as f64
    }

    /// Pixelwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Image, b: f64) -> Result<Image> {
        self.check_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Image::new(self.width, self.height, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Per-pixel stacks of `channels` values, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JetField {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl JetField {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
        }
    }

    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::BufferLength {
                expected: width * height * channels,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("jet field"));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.channels)
    }

    pub fn pixels_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.values.chunks_exact_mut(self.channels)
    }

    pub fn dot(&self, other: &JetField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Copies channel `c` out as a plane of `width × height` values.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len();
        let mut field = Self::zeros(width, height, channels);
        for (c, plane) in planes.iter().enumerate() {
            for (p, &v) in plane.iter().enumerate() {
                field.values[p * channels + c] = v;
            }
        }
        field
    }
}

/// Forward difference along `axis`, zero on the last column (axis 0) or row (axis 1).
fn forward_difference(src: &[f64], width: usize, height: usize, axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            out[i] = match axis {
                0 if x + 1 < width => src[i + 1] - src[i],
                1 if y + 1 < height => src[i + width] - src[i],
                _ => 0.0,
            };
        }
    }
    out
}

/// Exact transpose of [`forward_difference`], accumulated into `out`.
fn add_forward_difference_transpose(
    v: &[f64],
    width: usize,
    height: usize,
    axis: usize,
    out: &mut [f64],
) {
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let mut acc = 0.0;
            match axis {
                0 => {
                    if x + 1 < width {
                        acc -= v[i];
                    }
                    if x >= 1 {
                        acc += v[i - 1];
                    }
                }
                _ => {
                    if y + 1 < height {
                        acc -= v[i];
                    }
                    if y >= 1 {
                        acc += v[i - width];
                    }
                }
            }
            out[i] += acc;
        }
    }
}

/// All partial differences of orders `1..=d`, see the module docs for layout.
pub fn hessian_stack(img: &Image, d: usize) -> Result<JetField> {
    check_order(d)?;
    let (w, h) = (img.width(), img.height());
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(channel_count(d));
    let mut level = vec![img.values().to_vec()];
    for _ in 1..=d {
        let next: Vec<Vec<f64>> = level
            .iter()
            .flat_map(|parent| (0..2).map(move |axis| forward_difference(parent, w, h, axis)))
            .collect();
        planes.extend(next.iter().cloned());
        level = next;
    }
    Ok(JetField::from_planes(w, h, &planes))
}

/// Transpose of [`hessian_stack`] with respect to the plain Euclidean inner products.
pub fn hessian_adjoint(field: &JetField, d: usize) -> Result<Image> {
    check_order(d)?;
    let expected = channel_count(d);
    if field.channels() != expected {
        return Err(Error::ChannelMismatch {
            expected,
            actual: field.channels(),
        });
    }
    let (w, h) = (field.width(), field.height());
    let level_planes = |order: usize| -> Vec<Vec<f64>> {
        (0..1 << order)
            .map(|k| field.channel_plane(block_offset(order) + k))
            .collect()
    };

    let mut acc = level_planes(d);
    for order in (1..=d).rev() {
        let mut parents = if order > 1 {
            level_planes(order - 1)
        } else {
            vec![vec![0.0; w * h]]
        };
        for (m, parent) in parents.iter_mut().enumerate() {
            for axis in 0..2 {
                add_forward_difference_transpose(&acc[2 * m + axis], w, h, axis, parent);
            }
        }
        acc = parents;
    }
    let values = acc.pop().expect("one plane remains");
    Ok(Image::from_raw(w, h, values))
}
