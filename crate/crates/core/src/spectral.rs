//! Fourier collocation machinery: axis-wise FFTs, spectral derivatives and
//! flat-metric mode-space solves used as preconditioners.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use crate::grid::GridChart;

/// FFT plans and scratch space bound to one grid chart.
pub struct Fft4 {
    chart: GridChart,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex64>>,
    line: RefCell<Vec<Complex64>>,
}

impl Fft4 {
    pub fn new(chart: GridChart) -> Self {
        let mut planner = FftPlanner::new();
        let n = chart.resolution();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            chart,
            forward,
            inverse,
            scratch: RefCell::new(vec![Complex64::default(); scratch_len]),
            line: RefCell::new(vec![Complex64::default(); n]),
        }
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    /// In-place FFT of every grid line along `axis`. The inverse direction
    /// includes the `1/n` normalisation.
    pub fn transform_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.chart.resolution();
        let strides = self.chart.strides();
        let stride = strides[axis];
        let mut line = self.line.borrow_mut();
        let mut scratch = self.scratch.borrow_mut();
        let plan = if forward { &self.forward } else { &self.inverse };
        let scale = 1.0 / n as f64;
        // Enumerate the starting offsets of all n^3 lines along `axis`.
        let outer: Vec<usize> = (0..4).filter(|a| *a != axis).collect();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let base =
                        a * strides[outer[0]] + b * strides[outer[1]] + c * strides[outer[2]];
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = data[base + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    if forward {
                        for (t, l) in line.iter().enumerate() {
                            data[base + t * stride] = *l;
                        }
                    } else {
                        for (t, l) in line.iter().enumerate() {
                            data[base + t * stride] = *l * scale;
                        }
                    }
                }
            }
        }
    }

    /// Spectral partial derivative of a real nodal field along one axis.
    pub fn deriv(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let mut data: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.transform_axis(&mut data, axis, true);
        let n = self.chart.resolution();
        let strides = self.chart.strides();
        let stride = strides[axis];
        let outer: Vec<usize> = (0..4).filter(|a| *a != axis).collect();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let base =
                        a * strides[outer[0]] + b * strides[outer[1]] + c * strides[outer[2]];
                    for m in 0..n {
                        let k = self.chart.wavenumber(axis, m);
                        let v = data[base + m * stride];
                        data[base + m * stride] = Complex64::new(-k * v.im, k * v.re);
                    }
                }
            }
        }
        self.transform_axis(&mut data, axis, false);
        data.iter().map(|v| v.re).collect()
    }

    /// Full 4-dimensional forward transform of a real field.
    pub fn forward4(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        for axis in 0..4 {
            self.transform_axis(&mut data, axis, true);
        }
        data
    }

    /// Full 4-dimensional inverse transform, returning the real part.
    pub fn inverse4(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        for axis in 0..4 {
            self.transform_axis(&mut data, axis, false);
        }
        data.iter().map(|v| v.re).collect()
    }

    /// Applies a real multiplier `f(k1, k2, k3, k4)` in mode space, with
    /// magnitude wavenumbers (Nyquist modes at their true frequency) so that
    /// preconditioner symbols treat them as high-frequency content.
    pub fn mode_multiply(&self, values: &[f64], f: impl Fn([f64; 4]) -> f64) -> Vec<f64> {
        let mut data = self.forward4(values);
        for (idx, v) in data.iter_mut().enumerate() {
            let mi = self.chart.multi_index(idx);
            let k: [f64; 4] =
                std::array::from_fn(|a| self.chart.wavenumber_magnitude(a, mi[a]));
            *v *= f(k);
        }
        self.inverse4(data)
    }

    /// Solves `(-Laplacian_flat + shift) u = rhs` in mode space.
    ///
    /// With `shift = 0` the zero mode is projected out (the solve is the
    /// pseudo-inverse on mean-zero data).
    pub fn inverse_helmholtz(&self, rhs: &[f64], shift: f64) -> Vec<f64> {
        self.mode_multiply(rhs, |k| {
            let k2 = k.iter().map(|x| x * x).sum::<f64>();
            if k2 + shift <= 0.0 {
                0.0
            } else {
                1.0 / (k2 + shift)
            }
        })
    }

    /// Zeroes every mode on a Nyquist plane (index `n/2` on some axis);
    /// the spectral derivative annihilates those, so dropping them keeps
    /// right-hand sides inside the range of the discrete operators.
    pub fn strip_nyquist(&self, values: &[f64]) -> Vec<f64> {
        let half = self.chart.resolution() / 2;
        let mut data = self.forward4(values);
        for (idx, v) in data.iter_mut().enumerate() {
            let mi = self.chart.multi_index(idx);
            if mi.iter().any(|m| *m == half) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse4(data)
    }

    /// Removes all Fourier modes at or above the Nyquist-safe band `cutoff`
    /// (in units of integer frequency). Used to produce band-limited fields.
    pub fn band_limit(&self, values: &[f64], cutoff: isize) -> Vec<f64> {
        let n = self.chart.resolution() as isize;
        let mut data = self.forward4(values);
        for (idx, v) in data.iter_mut().enumerate() {
            let mi = self.chart.multi_index(idx);
            for a in 0..4 {
                let m = mi[a] as isize;
                let freq = if m <= n / 2 { m } else { m - n };
                if freq.abs() > cutoff {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.inverse4(data)
    }
}
