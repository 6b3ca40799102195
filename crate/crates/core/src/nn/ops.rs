//! Dense kernels used by the residual network: GEMM, im2col convolution,
//! and their adjoints.

/// Row-major matrix view, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> Mat<'a> {
    /// `data` laid out as `rows x cols`.
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer size");
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a * b + beta * c` with `c` row-major `m x n`.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "inner dimensions");
    assert_eq!(c.len(), m * n, "output buffer size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: shapes and buffer lengths were checked above, and the strides
    // describe exactly those row-major buffers.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_hw: usize,
    pub out_hw: usize,
}

impl ConvGeom {
    pub fn new(in_c: usize, out_c: usize, kernel: usize, stride: usize, in_hw: usize) -> Self {
        let pad = kernel / 2;
        let out_hw = (in_hw + 2 * pad - kernel) / stride + 1;
        Self {
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            in_hw,
            out_hw,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_hw * self.in_hw
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_hw * self.out_hw
    }

    pub fn out_pixels(&self) -> usize {
        self.out_hw * self.out_hw
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_c, self.in_c, self.kernel, self.kernel]
    }

    /// Unfolds one `[in_c, h, w]` sample into `[patch_len, out_pixels]`.
    #[cfg(test)]
    pub fn im2col(&self, x: &[f32], cols: &mut [f32]) {
        self.im2col_strided(x, cols, self.out_pixels(), 0);
    }

    /// Unfolds one sample into columns `offset..offset + out_pixels` of a
    /// row-major matrix whose rows are `stride` long.
    fn im2col_strided(&self, x: &[f32], cols: &mut [f32], stride: usize, offset: usize) {
        let (k, s, p, hw, ohw) = (self.kernel, self.stride, self.pad, self.in_hw, self.out_hw);
        let npix = ohw * ohw;
        for c in 0..self.in_c {
            let plane = &x[c * hw * hw..(c + 1) * hw * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let start = row * stride + offset;
                    let dst = &mut cols[start..start + npix];
                    for oy in 0..ohw {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let line = &mut dst[oy * ohw..(oy + 1) * ohw];
                        if iy < 0 || iy >= hw as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * hw..(iy as usize + 1) * hw];
                        // ix = ox * s + kx - p is inside the row for ox in lo..hi
                        let lo = (p.saturating_sub(kx)).div_ceil(s).min(ohw);
                        let hi = ((hw + p - kx).div_ceil(s)).clamp(lo, ohw);
                        line[..lo].fill(0.0);
                        line[hi..].fill(0.0);
                        let first = lo * s + kx - p;
                        if s == 1 {
                            line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (j, v) in line[lo..hi].iter_mut().enumerate() {
                                *v = src[first + j * s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters columns back, accumulating.
    #[cfg(test)]
    pub fn col2im(&self, cols: &[f32], dx: &mut [f32]) {
        self.col2im_strided(cols, self.out_pixels(), 0, dx);
    }

    fn col2im_strided(&self, cols: &[f32], stride: usize, offset: usize, dx: &mut [f32]) {
        let (k, s, p, hw, ohw) = (self.kernel, self.stride, self.pad, self.in_hw, self.out_hw);
        let npix = ohw * ohw;
        for c in 0..self.in_c {
            let plane = &mut dx[c * hw * hw..(c + 1) * hw * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let start = row * stride + offset;
                    let src = &cols[start..start + npix];
                    for oy in 0..ohw {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= hw as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * hw..(iy as usize + 1) * hw];
                        for ox in 0..ohw {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < hw as isize {
                                dst[ix as usize] += src[oy * ohw + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Columns of the whole batch side by side: `[patch_len, batch * out_pixels]`.
    fn batch_cols(&self, x: &[f32], batch: usize) -> Vec<f32> {
        let npix = self.out_pixels();
        let width = batch * npix;
        let mut cols = vec![0.0f32; self.patch_len() * width];
        for n in 0..batch {
            let xs = &x[n * self.in_len()..(n + 1) * self.in_len()];
            self.im2col_strided(xs, &mut cols, width, n * npix);
        }
        cols
    }

    /// Batched forward: `out[n] = W * im2col(x[n]) + b`.
    pub fn forward(&self, weight: &[f32], bias: &[f32], x: &[f32], batch: usize, out: &mut [f32]) {
        let npix = self.out_pixels();
        let width = batch * npix;
        let cols = self.batch_cols(x, batch);
        let mut y = vec![0.0f32; self.out_c * width];
        gemm(
            Mat::new(weight, self.out_c, self.patch_len()),
            Mat::new(&cols, self.patch_len(), width),
            0.0,
            &mut y,
        );
        for n in 0..batch {
            for (oc, b) in bias.iter().enumerate() {
                let src = &y[oc * width + n * npix..oc * width + (n + 1) * npix];
                let dst = &mut out[(n * self.out_c + oc) * npix..(n * self.out_c + oc + 1) * npix];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
    }

    /// Batched backward. Accumulates into `dw`/`db`; overwrites `dx` if given.
    pub fn backward(
        &self,
        weight: &[f32],
        x: &[f32],
        dout: &[f32],
        batch: usize,
        dw: &mut [f32],
        db: &mut [f32],
        dx: Option<&mut [f32]>,
    ) {
        let npix = self.out_pixels();
        let plen = self.patch_len();
        let width = batch * npix;
        // dout regrouped channel-major: [out_c, batch * out_pixels]
        let mut d = vec![0.0f32; self.out_c * width];
        for n in 0..batch {
            for oc in 0..self.out_c {
                let src = &dout[(n * self.out_c + oc) * npix..(n * self.out_c + oc + 1) * npix];
                d[oc * width + n * npix..oc * width + (n + 1) * npix].copy_from_slice(src);
            }
        }
        for (oc, g) in db.iter_mut().enumerate() {
            *g += d[oc * width..(oc + 1) * width].iter().sum::<f32>();
        }
        let cols = self.batch_cols(x, batch);
        gemm(
            Mat::new(&d, self.out_c, width),
            Mat::new(&cols, plen, width).t(),
            1.0,
            dw,
        );
        if let Some(dx) = dx {
            let mut dcols = cols;
            gemm(
                Mat::new(weight, self.out_c, plen).t(),
                Mat::new(&d, self.out_c, width),
                0.0,
                &mut dcols,
            );
            dx.fill(0.0);
            for n in 0..batch {
                let dxs = &mut dx[n * self.in_len()..(n + 1) * self.in_len()];
                self.col2im_strided(&dcols, width, n * npix, dxs);
            }
        }
    }
}
