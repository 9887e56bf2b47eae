//! Batched 2-D convolution via im2col and a single GEMM per call.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayD, ArrayView2, ArrayViewMut2, IxDyn};

/// Stride, zero padding and dilation of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeom {
    /// Stride 1 with "same" padding for an odd kernel of side `k`.
    pub fn same(k: usize, dilation: usize) -> Self {
        Self { stride: 1, pad: dilation * (k - 1) / 2, dilation }
    }

    pub fn output_side(&self, input: usize, k: usize) -> usize {
        let span = self.dilation * (k - 1) + 1;
        (input + 2 * self.pad - span) / self.stride + 1
    }
}

struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn dims(x: &[usize], w: &[usize], g: ConvGeom) -> Dims {
    assert_eq!(x.len(), 4, "conv input must be NCHW");
    assert_eq!(w.len(), 4, "conv kernel must be OCKK");
    assert_eq!(x[1], w[1], "conv channel mismatch: input {} kernel {}", x[1], w[1]);
    Dims {
        n: x[0],
        c: x[1],
        h: x[2],
        w: x[3],
        o: w[0],
        kh: w[2],
        kw: w[3],
        oh: g.output_side(x[2], w[2]),
        ow: g.output_side(x[3], w[3]),
    }
}

fn im2col(x: &[f64], d: &Dims, g: ConvGeom) -> Vec<f64> {
    let cols_w = d.n * d.oh * d.ow;
    let mut cols = vec![0.0; d.c * d.kh * d.kw * cols_w];
    for ci in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let dst = &mut cols[row * cols_w..(row + 1) * cols_w];
                for ni in 0..d.n {
                    let src = &x[(ni * d.c + ci) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..d.oh {
                        let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let srow = &src[iy as usize * d.w..][..d.w];
                        let drow = &mut dst[(ni * d.oh + oy) * d.ow..][..d.ow];
                        for (ox, slot) in drow.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj * g.dilation) as isize - g.pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                *slot = srow[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], d: &Dims, g: ConvGeom) -> Vec<f64> {
    let cols_w = d.n * d.oh * d.ow;
    let mut x = vec![0.0; d.n * d.c * d.h * d.w];
    for ci in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let src = &cols[row * cols_w..(row + 1) * cols_w];
                for ni in 0..d.n {
                    let dst = &mut x[(ni * d.c + ci) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..d.oh {
                        let iy = (oy * g.stride + ki * g.dilation) as isize - g.pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let srow = &src[(ni * d.oh + oy) * d.ow..][..d.ow];
                        let drow = &mut dst[iy as usize * d.w..][..d.w];
                        for (ox, v) in srow.iter().enumerate() {
                            let ix = (ox * g.stride + kj * g.dilation) as isize - g.pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                drow[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn forward(x: &ArrayD<f64>, w: &ArrayD<f64>, b: Option<&ArrayD<f64>>, g: ConvGeom) -> ArrayD<f64> {
    let d = dims(x.shape(), w.shape(), g);
    let x = x.as_standard_layout();
    let w = w.as_standard_layout();
    let cols = im2col(x.as_slice().expect("standard layout"), &d, g);
    let k = d.c * d.kh * d.kw;
    let plane = d.oh * d.ow;
    let cols_w = d.n * plane;
    let wm = ArrayView2::from_shape((d.o, k), w.as_slice().expect("standard layout")).expect("kernel view");
    let cm = ArrayView2::from_shape((k, cols_w), &cols).expect("cols view");
    let mut out_mat = vec![0.0; d.o * cols_w];
    {
        let mut om = ArrayViewMut2::from_shape((d.o, cols_w), &mut out_mat).expect("out view");
        general_mat_mul(1.0, &wm, &cm, 0.0, &mut om);
    }
    let bias = b.map(|b| b.iter().copied().collect::<Vec<_>>());
    let mut out = vec![0.0; d.n * d.o * plane];
    for ni in 0..d.n {
        for oi in 0..d.o {
            let bv = bias.as_ref().map_or(0.0, |b| b[oi]);
            let src = &out_mat[oi * cols_w + ni * plane..][..plane];
            let dst = &mut out[(ni * d.o + oi) * plane..][..plane];
            for (dv, sv) in dst.iter_mut().zip(src) {
                *dv = sv + bv;
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[d.n, d.o, d.oh, d.ow]), out).expect("conv output shape")
}

pub(crate) struct ConvGrads {
    pub dx: Option<ArrayD<f64>>,
    pub dw: Option<ArrayD<f64>>,
    pub db: Option<ArrayD<f64>>,
}

pub(crate) fn backward(
    x: &ArrayD<f64>,
    w: &ArrayD<f64>,
    gy: &ArrayD<f64>,
    g: ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads {
    let d = dims(x.shape(), w.shape(), g);
    let k = d.c * d.kh * d.kw;
    let plane = d.oh * d.ow;
    let cols_w = d.n * plane;
    let gy = gy.as_standard_layout();
    let gys = gy.as_slice().expect("standard layout");
    // [N,O,P] -> [O, N*P]
    let mut gm = vec![0.0; d.o * cols_w];
    for ni in 0..d.n {
        for oi in 0..d.o {
            gm[oi * cols_w + ni * plane..][..plane].copy_from_slice(&gys[(ni * d.o + oi) * plane..][..plane]);
        }
    }
    let gmv = ArrayView2::from_shape((d.o, cols_w), &gm).expect("grad view");

    let db = need.2.then(|| {
        let sums: Vec<f64> = (0..d.o).map(|oi| gm[oi * cols_w..(oi + 1) * cols_w].iter().sum()).collect();
        ArrayD::from_shape_vec(IxDyn(&[d.o]), sums).expect("bias grad")
    });

    let dw = if need.1 {
        let x = x.as_standard_layout();
        let cols = im2col(x.as_slice().expect("standard layout"), &d, g);
        let cm = ArrayView2::from_shape((k, cols_w), &cols).expect("cols view");
        let mut dwv = vec![0.0; d.o * k];
        {
            let mut dm = ArrayViewMut2::from_shape((d.o, k), &mut dwv).expect("dw view");
            general_mat_mul(1.0, &gmv, &cm.t(), 0.0, &mut dm);
        }
        Some(ArrayD::from_shape_vec(IxDyn(&[d.o, d.c, d.kh, d.kw]), dwv).expect("dw shape"))
    } else {
        None
    };

    let dx = if need.0 {
        let w = w.as_standard_layout();
        let wm = ArrayView2::from_shape((d.o, k), w.as_slice().expect("standard layout")).expect("kernel view");
        let mut dcols = vec![0.0; k * cols_w];
        {
            let mut dc = ArrayViewMut2::from_shape((k, cols_w), &mut dcols).expect("dcols view");
            general_mat_mul(1.0, &wm.t(), &gmv, 0.0, &mut dc);
        }
        let dx = col2im(&dcols, &d, g);
        Some(ArrayD::from_shape_vec(IxDyn(&[d.n, d.c, d.h, d.w]), dx).expect("dx shape"))
    } else {
        None
    };

    ConvGrads { dx, dw, db }
}
