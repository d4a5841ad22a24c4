//! Dilated causal Haar convolution.
//!
//! Scale `j` looks at the frames `x_t, x_{t-2^j}, …, x_{t-2^j(K-1)}` and
//! weights them with the `K` Haar taps. Frames before the start of the
//! sequence are zero. Time indices here are zero-based: `t` ranges over
//! `0..T` and `x_{t-i}` with `t < i` is padding.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletBank {
    taps: Vec<f64>,
    num_scales: usize,
}

impl WaveletBank {
    /// Discrete Haar step of length `kernel_size`: `+1` on the first
    /// `ceil(K/2)` taps, `−1` on the rest.
    pub fn haar(kernel_size: usize, num_scales: usize) -> Result<Self> {
        if kernel_size < 1 || num_scales < 1 {
            return Err(Error::Parameter(format!(
                "wavelet bank needs K >= 1 and J >= 1 (got K={kernel_size}, J={num_scales})"
            )));
        }
        if num_scales > 32 {
            return Err(Error::Parameter(format!("J={num_scales} is too large")));
        }
        let positive = kernel_size.div_ceil(2);
        let taps = (0..kernel_size)
            .map(|k| if k < positive { 1.0 } else { -1.0 })
            .collect();
        Ok(Self { taps, num_scales })
    }

    pub fn kernel_size(&self) -> usize {
        self.taps.len()
    }

    pub fn num_scales(&self) -> usize {
        self.num_scales
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Frame offsets read by scale `j`: `2^j·k` for `k = 0..K`.
    pub fn offsets(&self, scale: usize) -> impl Iterator<Item = usize> {
        let stride = 1usize << scale;
        (0..self.taps.len()).map(move |k| k * stride)
    }

    /// Number of input frames spanned by scale `j`.
    pub fn receptive_field(&self, scale: usize) -> usize {
        (1usize << scale) * (self.taps.len() - 1) + 1
    }

    fn check_scale(&self, scale: usize) -> Result<()> {
        if scale >= self.num_scales {
            return Err(Error::Parameter(format!(
                "scale {scale} out of range for J={}",
                self.num_scales
            )));
        }
        Ok(())
    }

    /// Scale-`j` filtered input at time `t`.
    ///
    /// `frames` is a `T×n` row-major sequence of `n`-dimensional frames.
    pub fn scaled_input_at(
        &self,
        frames: &[f64],
        dim: usize,
        t: usize,
        scale: usize,
    ) -> Result<Vec<f64>> {
        self.check_scale(scale)?;
        check_time(frames, dim, t)?;
        let mut out = vec![0.0; dim];
        self.accumulate(frames, dim, t, scale, &mut out);
        Ok(out)
    }

    /// All scales at time `t` as a `[J×n]` tensor (row `j` is scale `j`).
    pub fn scaled_input_all(&self, frames: &[f64], dim: usize, t: usize) -> Result<Tensor> {
        check_time(frames, dim, t)?;
        let mut out = Tensor::zeros(self.num_scales, dim);
        for (j, row) in out.data_mut().chunks_mut(dim.max(1)).enumerate() {
            self.accumulate(frames, dim, t, j, row);
        }
        Ok(out)
    }

    fn accumulate(&self, frames: &[f64], dim: usize, t: usize, scale: usize, out: &mut [f64]) {
        let stride = 1usize << scale;
        for (k, &h) in self.taps.iter().enumerate() {
            let back = k * stride;
            if back > t {
                break;
            }
            let frame = &frames[(t - back) * dim..(t - back + 1) * dim];
            for (o, x) in out.iter_mut().zip(frame) {
                *o += x * h;
            }
        }
    }
}

fn check_time(frames: &[f64], dim: usize, t: usize) -> Result<()> {
    if dim == 0 || frames.len() % dim != 0 {
        return Err(Error::Usage(format!(
            "sequence of {} values is not a whole number of {dim}-dimensional frames",
            frames.len()
        )));
    }
    let steps = frames.len() / dim;
    if t >= steps {
        return Err(Error::Usage(format!(
            "time index {t} out of range for a sequence of {steps} frames"
        )));
    }
    Ok(())
}
