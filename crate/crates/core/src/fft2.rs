//! Minimal 2-D complex FFT over row-major buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(w: usize, h: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            w,
            h,
            row_fwd: p.plan_fft_forward(w),
            col_fwd: p.plan_fft_forward(h),
            row_inv: p.plan_fft_inverse(w),
            col_inv: p.plan_fft_inverse(h),
        }
    }

    fn run(&self, buf: &mut [Complex<f64>], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        debug_assert_eq!(buf.len(), self.w * self.h);
        for row in buf.chunks_exact_mut(self.w) {
            rows.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                col[y] = buf[y * self.w + x];
            }
            cols.process(&mut col);
            for y in 0..self.h {
                buf[y * self.w + x] = col[y];
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &*self.row_fwd, &*self.col_fwd);
    }

    /// Unnormalized inverse; divide by `w*h` for the true inverse.
    pub fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &*self.row_inv, &*self.col_inv);
    }
}
