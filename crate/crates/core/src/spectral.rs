//! 2-D discrete Fourier transform helpers.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward 2-D DFT (unnormalized) of a real row-major raster.
pub fn fft2_real(width: usize, height: usize, data: &[f64]) -> Vec<Complex<f64>> {
    assert_eq!(data.len(), width * height);
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft_forward(width);
        row_fft.process(&mut buf);

        let col_fft = planner.plan_fft_forward(height);
        let mut column = vec![Complex::new(0.0, 0.0); height];
        for col in 0..width {
            for (row, c) in column.iter_mut().enumerate() {
                *c = buf[row * width + col];
            }
            col_fft.process(&mut column);
            for (row, c) in column.iter().enumerate() {
                buf[row * width + col] = *c;
            }
        }
    });
    buf
}

/// Magnitude spectrum of a real raster, fftshifted so that DC sits at
/// `(height / 2, width / 2)`.
pub fn shifted_magnitude(width: usize, height: usize, data: &[f64]) -> Vec<f64> {
    let spectrum = fft2_real(width, height, data);
    let mut out = vec![0.0; width * height];
    for row in 0..height {
        let sr = (row + height / 2) % height;
        for col in 0..width {
            let sc = (col + width / 2) % width;
            out[sr * width + sc] = spectrum[row * width + col].norm();
        }
    }
    out
}

/// Signed frequency `(u, v)` of a shifted bin `(row, col)`; `u` runs along rows.
#[inline]
pub fn centered_frequency(width: usize, height: usize, row: usize, col: usize) -> (i64, i64) {
    (row as i64 - (height / 2) as i64, col as i64 - (width / 2) as i64)
}

/// Shifted bin index holding frequency `(u, v)`.
#[inline]
pub fn shifted_index(width: usize, height: usize, u: i64, v: i64) -> usize {
    let row = (u + (height / 2) as i64).rem_euclid(height as i64) as usize;
    let col = (v + (width / 2) as i64).rem_euclid(width as i64) as usize;
    row * width + col
}
