use super::Tensor;
use crate::{Error, Result};

/// Spatial output size of a cross-correlation, or `None` when the kernel does
/// not fit inside the padded input.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `W x + b` for a single vector.
pub fn dense_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (m, n) = match *w.shape() {
        [m, n] => (m, n),
        _ => return Err(Error::Dimension(format!("weight must be 2-D, got {:?}", w.shape()))),
    };
    if b.numel() != m || x.numel() != n {
        return Err(Error::Dimension(format!("W is {m}x{n}, b has {} values, x has {}", b.numel(), x.numel())));
    }
    let out = linear_batch(&x.to_f64().into_data(), 1, n, w.to_f64().data(), b.to_f64().data());
    Ok(Tensor::from_vec(out).to_f32())
}

/// Zero-padded cross-correlation of a `C×H×W` input with an
/// `OutC×InC×kH×kW` kernel. Activation is left to the caller.
pub fn conv2d_forward(kernel: &Tensor, bias: &Tensor, input: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let &[cout, cin, kh, kw] = kernel.shape() else {
        return Err(Error::Dimension(format!("kernel must be 4-D, got {:?}", kernel.shape())));
    };
    let &[c, h, w] = input.shape() else {
        return Err(Error::Dimension(format!("input must be C×H×W, got {:?}", input.shape())));
    };
    if c != cin {
        return Err(Error::Dimension(format!("input has {c} channels, kernel expects {cin}")));
    }
    if bias.numel() != cout {
        return Err(Error::Dimension(format!("bias has {} values, expected {cout}", bias.numel())));
    }
    let geom = ConvGeom::new(cin, h, w, cout, kh, kw, stride, padding)?;
    let out = conv2d_batch(&input.to_f64().into_data(), 1, &geom, kernel.to_f64().data(), bias.to_f64().data());
    Tensor::new(vec![cout, geom.out_h, geom.out_w], out).map(|t| t.to_f32())
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Batched `x Wᵀ + b`; `x` is `batch×n`, `w` is `m×n`.
pub(crate) fn linear_batch(x: &[f64], batch: usize, n: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    debug_assert_eq!(w.len(), m * n);
    debug_assert_eq!(x.len(), batch * n);
    let mut out = Vec::with_capacity(batch * m);
    for row in x.chunks_exact(n.max(1)).take(batch) {
        for (wr, &bias) in w.chunks_exact(n.max(1)).zip(b) {
            let acc: f64 = wr.iter().zip(row).map(|(a, b)| a * b).sum();
            out.push(acc + bias);
        }
    }
    out
}

/// Returns `(dx, dw, db)` for [`linear_batch`].
pub(crate) fn linear_batch_backward(
    x: &[f64],
    batch: usize,
    n: usize,
    w: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = grad_out.len() / batch.max(1);
    let mut dx = vec![0.0; batch * n];
    let mut dw = vec![0.0; m * n];
    let mut db = vec![0.0; m];
    for s in 0..batch {
        let xr = &x[s * n..(s + 1) * n];
        let gr = &grad_out[s * m..(s + 1) * m];
        let dxr = &mut dx[s * n..(s + 1) * n];
        for (o, &g) in gr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &w[o * n..(o + 1) * n];
            let dwr = &mut dw[o * n..(o + 1) * n];
            for i in 0..n {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        k_h: usize,
        k_w: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (Some(out_h), Some(out_w)) =
            (conv_output_size(in_h, k_h, stride, pad), conv_output_size(in_w, k_w, stride, pad))
        else {
            return Err(Error::Dimension(format!(
                "{k_h}×{k_w} kernel (stride {stride}, padding {pad}) does not fit a {in_h}×{in_w} input"
            )));
        };
        Ok(Self { in_c, in_h, in_w, out_c, k_h, k_w, stride, pad, out_h, out_w })
    }

    fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Input coordinate touched by output `(oy, ox)` and kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }
}

pub(crate) fn conv2d_batch(x: &[f64], batch: usize, g: &ConvGeom, kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let (il, ol) = (g.in_len(), g.out_len());
    let mut out = vec![0.0; batch * ol];
    for s in 0..batch {
        let xs = &x[s * il..(s + 1) * il];
        let os = &mut out[s * ol..(s + 1) * ol];
        for oc in 0..g.out_c {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = bias[oc];
                    for ic in 0..g.in_c {
                        let kbase = ((oc * g.in_c) + ic) * g.k_h * g.k_w;
                        let xbase = ic * g.in_h * g.in_w;
                        for ky in 0..g.k_h {
                            for kx in 0..g.k_w {
                                if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                                    acc += kernel[kbase + ky * g.k_w + kx] * xs[xbase + y * g.in_w + xx];
                                }
                            }
                        }
                    }
                    os[(oc * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    out
}

/// Returns `(dx, dkernel, dbias)` for [`conv2d_batch`].
pub(crate) fn conv2d_batch_backward(
    x: &[f64],
    batch: usize,
    g: &ConvGeom,
    kernel: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (il, ol) = (g.in_len(), g.out_len());
    let mut dx = vec![0.0; batch * il];
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; g.out_c];
    for s in 0..batch {
        let xs = &x[s * il..(s + 1) * il];
        let gs = &grad_out[s * ol..(s + 1) * ol];
        let dxs = &mut dx[s * il..(s + 1) * il];
        for oc in 0..g.out_c {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let go = gs[(oc * g.out_h + oy) * g.out_w + ox];
                    if go == 0.0 {
                        continue;
                    }
                    db[oc] += go;
                    for ic in 0..g.in_c {
                        let kbase = ((oc * g.in_c) + ic) * g.k_h * g.k_w;
                        let xbase = ic * g.in_h * g.in_w;
                        for ky in 0..g.k_h {
                            for kx in 0..g.k_w {
                                if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                                    let ki = kbase + ky * g.k_w + kx;
                                    let xi = xbase + y * g.in_w + xx;
                                    dk[ki] += go * xs[xi];
                                    dxs[xi] += go * kernel[ki];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}
