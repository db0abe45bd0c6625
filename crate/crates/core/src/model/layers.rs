//! Channel-major (`[c][y][x]`) tensor kernels with exact backward passes.

/// Zero-padded `k x k` convolution (`k` odd) that preserves spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn w(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + c) * self.kernel + ky) * self.kernel + kx]
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_channels * h * w);
        let plane = h * w;
        let r = (self.kernel / 2) as isize;
        let mut out = vec![0.0; self.out_channels * plane];
        for o in 0..self.out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(self.bias[o]);
            for c in 0..self.in_channels {
                let src = &input[c * plane..(c + 1) * plane];
                for ky in 0..self.kernel {
                    for kx in 0..self.kernel {
                        let wv = self.w(o, c, ky, kx);
                        let (dy, dx) = (ky as isize - r, kx as isize - r);
                        let (x0, x1) = overlap(w, dx);
                        for (y, sy) in rows(h, dy) {
                            let d = &mut dst[y * w + x0..y * w + x1];
                            let s = &src[sy * w + (x0 as isize + dx) as usize..];
                            for (a, b) in d.iter_mut().zip(s) {
                                *a += wv * b;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad_w`/`grad_b` and, when
    /// requested, returns the gradient with respect to the input.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        input: &[f64],
        d_out: &[f64],
        h: usize,
        w: usize,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        need_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let plane = h * w;
        let r = (self.kernel / 2) as isize;
        let mut d_in = need_input_grad.then(|| vec![0.0; self.in_channels * plane]);
        for o in 0..self.out_channels {
            let g = &d_out[o * plane..(o + 1) * plane];
            grad_b[o] += g.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let src = &input[c * plane..(c + 1) * plane];
                for ky in 0..self.kernel {
                    for kx in 0..self.kernel {
                        let (dy, dx) = (ky as isize - r, kx as isize - r);
                        let (x0, x1) = overlap(w, dx);
                        let wi = ((o * self.in_channels + c) * self.kernel + ky) * self.kernel + kx;
                        let wv = self.weight[wi];
                        let mut acc = 0.0;
                        for (y, sy) in rows(h, dy) {
                            let gy = &g[y * w + x0..y * w + x1];
                            let off = sy * w + (x0 as isize + dx) as usize;
                            let s = &src[off..off + (x1 - x0)];
                            acc += gy.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(d_in) = d_in.as_mut() {
                                let di = &mut d_in[c * plane + off..c * plane + off + (x1 - x0)];
                                for (a, b) in di.iter_mut().zip(gy) {
                                    *a += wv * b;
                                }
                            }
                        }
                        grad_w[wi] += acc;
                    }
                }
            }
        }
        d_in
    }
}

/// Output columns `[x0, x1)` whose source column `x + dx` is inside `[0, w)`.
fn overlap(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx.max(0)).max(x0 as isize) as usize;
    (x0, x1)
}

/// Pairs `(y, y + dy)` with both rows inside `[0, h)`.
fn rows(h: usize, dy: isize) -> impl Iterator<Item = (usize, usize)> {
    (0..h).filter_map(move |y| {
        let sy = y as isize + dy;
        (sy >= 0 && (sy as usize) < h).then_some((y, sy as usize))
    })
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Multiplies `grad` by the ReLU derivative at pre-activation `z`.
pub fn relu_backward(z: &[f64], grad: &mut [f64]) {
    for (g, &v) in grad.iter_mut().zip(z) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 2x2 mean pooling; `h` and `w` must be even.
pub fn mean_pool2(x: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; channels * ho * wo];
    for c in 0..channels {
        for y in 0..ho {
            for xo in 0..wo {
                let base = c * h * w + 2 * y * w + 2 * xo;
                out[c * ho * wo + y * wo + xo] =
                    0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
            }
        }
    }
    out
}

pub fn mean_pool2_backward(grad: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                out[c * h * w + y * w + x] = 0.25 * grad[c * ho * wo + (y / 2) * wo + x / 2];
            }
        }
    }
    out
}

/// Nearest-neighbour 2x upsampling of an `h x w` map.
pub fn upsample2(x: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; channels * ho * wo];
    for c in 0..channels {
        for y in 0..ho {
            for xo in 0..wo {
                out[c * ho * wo + y * wo + xo] = x[c * h * w + (y / 2) * w + xo / 2];
            }
        }
    }
    out
}

/// Backward of [`upsample2`]; `h x w` is the small (pre-upsampling) size.
pub fn upsample2_backward(grad: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        for y in 0..ho {
            for xo in 0..wo {
                out[c * h * w + (y / 2) * w + xo / 2] += grad[c * ho * wo + y * wo + xo];
            }
        }
    }
    out
}
