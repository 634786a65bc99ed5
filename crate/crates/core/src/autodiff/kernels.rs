//! Raw numeric kernels over flat row-major buffers.

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in row.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// `a[m×k]ᵀ · b[m×n]` → `[k×n]`.
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &mut c[p * n..(p + 1) * n];
            for (cj, bj) in row.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// `a[m×n] · b[k×n]ᵀ` → `[m×k]`.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            c[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

/// Geometry of a batched valid convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.kw) / self.stride + 1
    }
}

pub fn conv2d_forward(input: &[f64], kernels: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; g.batch * g.c_out * oh * ow];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let obase = (b * g.c_out + o) * oh * ow;
            for c in 0..g.c_in {
                let ibase = (b * g.c_in + c) * g.h * g.w;
                let kbase = (o * g.c_in + c) * g.kh * g.kw;
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let kv = kernels[kbase + ki * g.kw + kj];
                        for i in 0..oh {
                            let irow = ibase + (i * g.stride + ki) * g.w + kj;
                            let orow = obase + i * ow;
                            for j in 0..ow {
                                out[orow + j] += kv * input[irow + j * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(grad_input, grad_kernels)`.
pub fn conv2d_backward(
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
) -> (Vec<f64>, Vec<f64>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut gi = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernels.len()];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let obase = (b * g.c_out + o) * oh * ow;
            for c in 0..g.c_in {
                let ibase = (b * g.c_in + c) * g.h * g.w;
                let kbase = (o * g.c_in + c) * g.kh * g.kw;
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let kv = kernels[kbase + ki * g.kw + kj];
                        let mut acc = 0.0;
                        for i in 0..oh {
                            let irow = ibase + (i * g.stride + ki) * g.w + kj;
                            let orow = obase + i * ow;
                            for j in 0..ow {
                                let go = grad_out[orow + j];
                                acc += go * input[irow + j * g.stride];
                                gi[irow + j * g.stride] += go * kv;
                            }
                        }
                        gk[kbase + ki * g.kw + kj] += acc;
                    }
                }
            }
        }
    }
    (gi, gk)
}

/// Per-window maxima of `planes` images of `h×w`, plus the flat input index
/// of each maximum (first index wins on ties).
pub fn maxpool_forward(
    input: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base + i * window * w + j * window;
                for di in 0..window {
                    for dj in 0..window {
                        let idx = base + (i * window + di) * w + j * window + dj;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}
