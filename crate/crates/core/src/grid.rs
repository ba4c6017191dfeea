//! The discretised flat 4-torus on which all fields live.

use crate::error::{Error, Result};

/// A uniform periodic grid on `T^4 = R^4 / (L_1 Z x ... x L_4 Z)`.
///
/// `n` nodes per axis (even, at least 4), `n^4` points in total. Points are
/// indexed row-major with the fourth axis fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridChart {
    n: usize,
    periods: [f64; 4],
}

impl GridChart {
    pub fn new(n: usize, periods: [f64; 4]) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid resolution must be even and >= 4, got {n}"
            )));
        }
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config(format!("invalid periods {periods:?}")));
        }
        Ok(Self { n, periods })
    }

    /// Unit periods.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, [1.0; 4])
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> [f64; 4] {
        self.periods
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n * self.n * self.n
    }

    /// Coordinate volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.periods.iter().product::<f64>() / self.num_points() as f64
    }

    /// Strides of the row-major layout (axis 3 fastest).
    pub fn strides(&self) -> [usize; 4] {
        let n = self.n;
        [n * n * n, n * n, n, 1]
    }

    pub fn index_of(&self, i: [usize; 4]) -> usize {
        let s = self.strides();
        i[0] * s[0] + i[1] * s[1] + i[2] * s[2] + i[3] * s[3]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 4] {
        let n = self.n;
        let i3 = idx % n;
        let r = idx / n;
        let i2 = r % n;
        let r = r / n;
        let i1 = r % n;
        let i0 = r / n;
        [i0, i1, i2, i3]
    }

    /// Coordinates of the grid node with the given flat index.
    pub fn point(&self, idx: usize) -> [f64; 4] {
        let mi = self.multi_index(idx);
        std::array::from_fn(|a| mi[a] as f64 * self.periods[a] / self.n as f64)
    }

    /// Magnitude of the angular wavenumber of mode `m`, with the Nyquist
    /// mode at its true frequency. For preconditioner symbols; the
    /// derivative multiplier is [`Self::wavenumber`].
    pub fn wavenumber_magnitude(&self, axis: usize, m: usize) -> f64 {
        let n = self.n;
        let freq = m.min(n - m);
        2.0 * std::f64::consts::PI * freq as f64 / self.periods[axis]
    }

    /// Angular wavenumber of Fourier mode `m` along `axis`, with the Nyquist
    /// mode mapped to zero so that differentiation stays skew-adjoint.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        let n = self.n;
        let half = n / 2;
        let freq = if m < half {
            m as isize
        } else if m == half {
            0
        } else {
            m as isize - n as isize
        };
        2.0 * std::f64::consts::PI * freq as f64 / self.periods[axis]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let chart = GridChart::unit(4).unwrap();
        for idx in 0..chart.num_points() {
            assert_eq!(chart.index_of(chart.multi_index(idx)), idx);
        }
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(GridChart::unit(3).is_err());
        assert!(GridChart::unit(2).is_err());
        assert!(GridChart::new(8, [1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn wavenumbers_cover_symmetric_band() {
        let chart = GridChart::unit(8).unwrap();
        let ks: Vec<f64> = (0..8).map(|m| chart.wavenumber(0, m)).collect();
        let tau = 2.0 * std::f64::consts::PI;
        assert_eq!(ks[0], 0.0);
        assert!((ks[1] - tau).abs() < 1e-12);
        assert!((ks[7] + tau).abs() < 1e-12);
        // Nyquist zeroed.
        assert_eq!(ks[4], 0.0);
    }
}
