//! Convolution kernels (im2col + GEMM). 2D convolution runs through the 3D
//! path with a unit-depth kernel.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        batch: usize,
        cin: usize,
        cout: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 || kernel[a] == 0 {
                return Err(Error::Shape("zero stride or kernel extent".into()));
            }
            let padded = input[a] + 2 * pad[a];
            if padded < kernel[a] {
                return Err(Error::Shape(format!(
                    "kernel extent {} exceeds padded input {padded} on axis {a}",
                    kernel[a]
                )));
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Ok(ConvGeom {
            batch,
            cin,
            cout,
            input,
            kernel,
            stride,
            pad,
            output,
        })
    }

    fn in_vol(&self) -> usize {
        self.input.iter().product()
    }

    fn out_vol(&self) -> usize {
        self.output.iter().product()
    }

    fn patch(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }
}

/// `c[m x n] = beta * c + a[m x k] * b[k x n]`, with optional transposes of
/// the row-major operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the m*k, k*n and m*n elements the
    // strides address, as asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let ov = g.out_vol();
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let dst = &mut cols[row * ov..(row + 1) * ov];
                    let mut o = 0;
                    for oz in 0..od {
                        let iz = (oz * sd + kz) as isize - pd as isize;
                        for oy in 0..oh {
                            let iy = (oy * sh + ky) as isize - ph as isize;
                            let valid = iz >= 0 && iz < id as isize && iy >= 0 && iy < ih as isize;
                            let base = if valid {
                                (iz as usize * ih + iy as usize) * iw
                            } else {
                                0
                            };
                            for ox in 0..ow {
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                dst[o] = if valid && ix >= 0 && ix < iw as isize {
                                    xc[base + ix as usize]
                                } else {
                                    0.0
                                };
                                o += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let ov = g.out_vol();
    let mut row = 0;
    for c in 0..g.cin {
        let dxc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let src = &cols[row * ov..(row + 1) * ov];
                    let mut o = 0;
                    for oz in 0..od {
                        let iz = (oz * sd + kz) as isize - pd as isize;
                        for oy in 0..oh {
                            let iy = (oy * sh + ky) as isize - ph as isize;
                            if iz < 0 || iz >= id as isize || iy < 0 || iy >= ih as isize {
                                o += ow;
                                continue;
                            }
                            let base = (iz as usize * ih + iy as usize) * iw;
                            for ox in 0..ow {
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                if ix >= 0 && ix < iw as isize {
                                    dxc[base + ix as usize] += src[o];
                                }
                                o += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.kernel == [1, 1, 1] && g.stride == [1, 1, 1] && g.pad == [0, 0, 0]
}

pub(crate) fn forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (iv, ov, patch) = (g.in_vol(), g.out_vol(), g.patch());
    let mut out = vec![0.0; g.batch * g.cout * ov];
    let mut cols = if is_pointwise(g) {
        Vec::new()
    } else {
        vec![0.0; patch * ov]
    };
    for n in 0..g.batch {
        let xn = &x[n * g.cin * iv..(n + 1) * g.cin * iv];
        let cols_ref: &[f64] = if is_pointwise(g) {
            xn
        } else {
            im2col(xn, g, &mut cols);
            &cols
        };
        let on = &mut out[n * g.cout * ov..(n + 1) * g.cout * ov];
        gemm(g.cout, patch, ov, w, false, cols_ref, false, on, 0.0);
    }
    out
}

/// Returns `(dx, dw)` for the requested sides.
pub(crate) fn backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (iv, ov, patch) = (g.in_vol(), g.out_vol(), g.patch());
    let mut dx = need_dx.then(|| vec![0.0; g.batch * g.cin * iv]);
    let mut dw = need_dw.then(|| vec![0.0; g.cout * patch]);
    let pointwise = is_pointwise(g);
    let mut cols = vec![0.0; if pointwise { 0 } else { patch * ov }];
    let mut dcols = vec![0.0; if need_dx && !pointwise { patch * ov } else { 0 }];
    for n in 0..g.batch {
        let xn = &x[n * g.cin * iv..(n + 1) * g.cin * iv];
        let dyn_ = &dy[n * g.cout * ov..(n + 1) * g.cout * ov];
        if let Some(dw) = dw.as_mut() {
            let cols_ref: &[f64] = if pointwise {
                xn
            } else {
                im2col(xn, g, &mut cols);
                &cols
            };
            gemm(g.cout, ov, patch, dyn_, false, cols_ref, true, dw, 1.0);
        }
        if let Some(dx) = dx.as_mut() {
            let dxn = &mut dx[n * g.cin * iv..(n + 1) * g.cin * iv];
            if pointwise {
                gemm(patch, g.cout, ov, w, true, dyn_, false, dxn, 1.0);
            } else {
                gemm(patch, g.cout, ov, w, true, dyn_, false, &mut dcols, 0.0);
                col2im(&dcols, g, dxn);
            }
        }
    }
    (dx, dw)
}
