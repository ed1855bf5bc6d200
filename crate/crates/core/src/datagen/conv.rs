use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::LinearLayer;

/// A 2-D convolution over a CHW tensor.
///
/// `weights` is laid out `[out][in][kh][kw]`, `bias` has one entry per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub input_hw: (usize, usize),
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvSpec {
    pub fn output_hw(&self) -> Result<(usize, usize)> {
        let (h, w) = self.input_hw;
        let (kh, kw) = self.kernel;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if self.stride == 0 || kh == 0 || kw == 0 || kh > ph || kw > pw {
            return Err(Error::Config("kernel does not fit the padded input".into()));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    /// Direct evaluation on a CHW input.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (oh, ow) = self.output_hw()?;
        let (h, w) = self.input_hw;
        let (kh, kw) = self.kernel;
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_channels {
                        for a in 0..kh {
                            for b in 0..kw {
                                let y = (r * self.stride + a) as isize - self.padding as isize;
                                let x_ = (c * self.stride + b) as isize - self.padding as isize;
                                if y < 0 || x_ < 0 || y >= h as isize || x_ >= w as isize {
                                    continue;
                                }
                                let wi = ((o * self.in_channels + i) * kh + a) * kw + b;
                                acc += self.weights[wi] * x[(i * h + y as usize) * w + x_ as usize];
                            }
                        }
                    }
                    out[(o * oh + r) * ow + c] = acc;
                }
            }
        }
        Ok(out)
    }
}

/// Dense matrix of a convolution, with the fraction of zero weights.
pub fn conv_to_linear(spec: &ConvSpec) -> Result<(LinearLayer, f64)> {
    let (oh, ow) = spec.output_hw()?;
    let (h, w) = spec.input_hw;
    let (kh, kw) = spec.kernel;
    if spec.weights.len() != spec.out_channels * spec.in_channels * kh * kw {
        return Err(Error::Dimension {
            expected: spec.out_channels * spec.in_channels * kh * kw,
            got: spec.weights.len(),
        });
    }
    if spec.bias.len() != spec.out_channels {
        return Err(Error::Dimension {
            expected: spec.out_channels,
            got: spec.bias.len(),
        });
    }
    let rows = spec.out_channels * oh * ow;
    let cols = spec.in_channels * h * w;
    let mut m = DMatrix::zeros(rows, cols);
    let mut bias = DVector::zeros(rows);
    for o in 0..spec.out_channels {
        for r in 0..oh {
            for c in 0..ow {
                let row = (o * oh + r) * ow + c;
                bias[row] = spec.bias[o];
                for i in 0..spec.in_channels {
                    for a in 0..kh {
                        for b in 0..kw {
                            let y = (r * spec.stride + a) as isize - spec.padding as isize;
                            let x = (c * spec.stride + b) as isize - spec.padding as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let col = (i * h + y as usize) * w + x as usize;
                            m[(row, col)] += spec.weights[((o * spec.in_channels + i) * kh + a) * kw + b];
                        }
                    }
                }
            }
        }
    }
    let layer = LinearLayer::new(m, bias)?;
    let sparsity = layer.sparsity();
    Ok((layer, sparsity))
}
