//! Tensor fields over a [`GridChart`]: differential forms, metrics and
//! almost complex structure fields.
//!
//! Fields are immutable after construction; every operation allocates a fresh
//! output, so read-only concurrent use is safe.

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::grid::GridChart;
use crate::pointwise::{AcsValue, MetricValue, TwoFormValue, PAIRS};

/// Number of components of a degree-`p` form in dimension 4.
pub const COMP_COUNT: [usize; 5] = [1, 4, 6, 4, 1];

/// Ordered index sets labelling form components, degree by degree.
pub const INDEX_SETS: [&[&[usize]]; 5] = [
    &[&[]],
    &[&[0], &[1], &[2], &[3]],
    &[&[0, 1], &[0, 2], &[0, 3], &[1, 2], &[1, 3], &[2, 3]],
    &[&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]],
    &[&[0, 1, 2, 3]],
];

/// Component position of a sorted index set within its degree.
pub fn set_index(degree: usize, set: &[usize]) -> usize {
    INDEX_SETS[degree]
        .iter()
        .position(|s| *s == set)
        .unwrap_or_else(|| panic!("not an ordered degree-{degree} index set: {set:?}"))
}

/// A differential form of degree `p` sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    chart: GridChart,
    degree: usize,
    comps: Vec<Vec<f64>>,
}

/// Degree-0 fields are plain functions on the grid.
pub type ScalarField = FormField;

impl FormField {
    pub fn zeros(chart: GridChart, degree: usize) -> Self {
        assert!(degree <= 4, "degree {degree} > 4");
        let m = chart.num_points();
        Self {
            chart,
            degree,
            comps: vec![vec![0.0; m]; COMP_COUNT[degree]],
        }
    }

    /// Builds a field by evaluating `f(point, component)` at every node.
    pub fn from_fn(chart: GridChart, degree: usize, mut f: impl FnMut([f64; 4], usize) -> f64) -> Self {
        let mut out = Self::zeros(chart, degree);
        for c in 0..COMP_COUNT[degree] {
            for idx in 0..chart.num_points() {
                out.comps[c][idx] = f(chart.point(idx), c);
            }
        }
        out
    }

    pub fn scalar_from_fn(chart: GridChart, mut f: impl FnMut([f64; 4]) -> f64) -> Self {
        Self::from_fn(chart, 0, |x, _| f(x))
    }

    /// A constant field with the given component values.
    pub fn constant(chart: GridChart, degree: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), COMP_COUNT[degree]);
        let m = chart.num_points();
        Self {
            chart,
            degree,
            comps: values.iter().map(|v| vec![*v; m]).collect(),
        }
    }

    /// A constant 2-form field.
    pub fn constant_two_form(chart: GridChart, value: &TwoFormValue) -> Self {
        Self::constant(chart, 2, value.components())
    }

    pub fn from_components(chart: GridChart, degree: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != COMP_COUNT[degree] {
            return Err(Error::Io(format!(
                "degree-{degree} field needs {} components, got {}",
                COMP_COUNT[degree],
                comps.len()
            )));
        }
        let m = chart.num_points();
        for c in &comps {
            if c.len() != m {
                return Err(Error::Io(format!(
                    "component length {} does not match grid size {m}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Io("field contains non-finite values".into()));
            }
        }
        Ok(Self { chart, degree, comps })
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    /// The 2-form value at a node. Panics unless `degree == 2`.
    pub fn two_form_at(&self, idx: usize) -> TwoFormValue {
        assert_eq!(self.degree, 2);
        TwoFormValue::new(std::array::from_fn(|c| self.comps[c][idx]))
    }

    pub fn set_two_form_at(&mut self, idx: usize, v: &TwoFormValue) {
        assert_eq!(self.degree, 2);
        for (c, val) in v.components().iter().enumerate() {
            self.comps[c][idx] = *val;
        }
    }

    pub fn value_at(&self, idx: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[idx]).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.comps {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.degree, other.degree);
        let mut out = self.clone();
        for (c, oc) in out.comps.iter_mut().zip(other.comps.iter()) {
            for (v, w) in c.iter_mut().zip(oc.iter()) {
                *v += *w;
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Adds `s * other` in place.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.degree, other.degree);
        for (c, oc) in self.comps.iter_mut().zip(other.comps.iter()) {
            for (v, w) in c.iter_mut().zip(oc.iter()) {
                *v += s * *w;
            }
        }
    }

    /// Multiplies every component pointwise by a scalar field.
    pub fn scale_pointwise(&self, s: &ScalarField) -> Self {
        assert_eq!(s.degree, 0);
        let sv = &s.comps[0];
        let mut out = self.clone();
        for c in &mut out.comps {
            for (v, w) in c.iter_mut().zip(sv.iter()) {
                *v *= *w;
            }
        }
        out
    }

    /// Largest absolute component value.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Plain coefficient l2 norm (no metric weights); for residual reporting.
    pub fn coeff_norm(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn mean(&self) -> f64 {
        assert_eq!(self.degree, 0);
        let v = &self.comps[0];
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Cached pointwise data derived from a metric field: inverse, volume density
/// and a flatness flag that lets flat-metric paths skip index raising.
#[derive(Clone, Debug)]
pub struct MetricAux {
    pub ginv: Vec<Matrix4<f64>>,
    pub sqrt_det: Vec<f64>,
    pub euclidean: bool,
}

/// A Riemannian metric sampled at the grid nodes.
///
/// Validated symmetric positive definite at construction.
#[derive(Clone, Debug)]
pub struct MetricField {
    chart: GridChart,
    /// Ten independent components, `(i, j)` with `i <= j`, lexicographic.
    comps: [Vec<f64>; 10],
}

/// The `(i, j)` pairs (with `i <= j`) labelling metric components.
pub const SYM_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

impl MetricField {
    pub fn flat(chart: GridChart) -> Self {
        let m = chart.num_points();
        let comps = std::array::from_fn(|k| {
            let (i, j) = SYM_PAIRS[k];
            vec![if i == j { 1.0 } else { 0.0 }; m]
        });
        Self { chart, comps }
    }

    /// A constant metric field.
    pub fn constant(chart: GridChart, g: &MetricValue) -> Self {
        let m = chart.num_points();
        let gm = g.matrix();
        let comps = std::array::from_fn(|k| {
            let (i, j) = SYM_PAIRS[k];
            vec![gm[(i, j)]; m]
        });
        Self { chart, comps }
    }

    /// The conformally flat metric `e^{2u} delta`.
    pub fn conformally_flat(u: &ScalarField) -> Self {
        let chart = *u.chart();
        let m = chart.num_points();
        let uv = u.comp(0);
        let comps = std::array::from_fn(|k| {
            let (i, j) = SYM_PAIRS[k];
            if i == j {
                uv.iter().map(|x| (2.0 * x).exp()).collect()
            } else {
                vec![0.0; m]
            }
        });
        Self { chart, comps }
    }

    pub fn from_fn(chart: GridChart, mut f: impl FnMut([f64; 4]) -> Matrix4<f64>) -> Result<Self> {
        let m = chart.num_points();
        let mut comps: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; m]);
        for idx in 0..m {
            let gm = f(chart.point(idx));
            MetricValue::new(gm)?;
            for (k, &(i, j)) in SYM_PAIRS.iter().enumerate() {
                comps[k][idx] = 0.5 * (gm[(i, j)] + gm[(j, i)]);
            }
        }
        Ok(Self { chart, comps })
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    pub fn matrix_at(&self, idx: usize) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (k, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            m[(i, j)] = self.comps[k][idx];
            m[(j, i)] = self.comps[k][idx];
        }
        m
    }

    pub fn value_at(&self, idx: usize) -> MetricValue {
        MetricValue::new(self.matrix_at(idx)).expect("validated at construction")
    }

    pub fn comp(&self, k: usize) -> &[f64] {
        &self.comps[k]
    }

    /// Precomputes inverse and volume density at every node.
    pub fn aux(&self) -> Result<MetricAux> {
        let m = self.chart.num_points();
        let mut ginv = Vec::with_capacity(m);
        let mut sqrt_det = Vec::with_capacity(m);
        let mut euclidean = true;
        for idx in 0..m {
            let gm = self.matrix_at(idx);
            let det = gm.determinant();
            if det <= 0.0 {
                return Err(Error::DegenerateMetric(format!(
                    "det g = {det:.3e} at node {idx}"
                )));
            }
            let inv = gm
                .try_inverse()
                .ok_or_else(|| Error::DegenerateMetric(format!("singular at node {idx}")))?;
            if euclidean && (gm - Matrix4::identity()).abs().max() > 1e-14 {
                euclidean = false;
            }
            ginv.push(inv);
            sqrt_det.push(det.sqrt());
        }
        Ok(MetricAux {
            ginv,
            sqrt_det,
            euclidean,
        })
    }

    /// Pointwise rescaling by a positive factor field.
    pub fn scaled_pointwise(&self, factors: &ScalarField) -> Result<Self> {
        let fv = factors.comp(0);
        if fv.iter().any(|v| *v <= 0.0) {
            return Err(Error::DegenerateMetric(
                "conformal factor must be positive".into(),
            ));
        }
        let comps = std::array::from_fn(|k| {
            self.comps[k]
                .iter()
                .zip(fv.iter())
                .map(|(g, f)| g * f)
                .collect()
        });
        Ok(Self {
            chart: self.chart,
            comps,
        })
    }

    /// Pointwise metric average making the result `j`-compatible.
    pub fn average_with(&self, j: &AcsField) -> Self {
        let m = self.chart.num_points();
        let mut comps: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0; m]);
        for idx in 0..m {
            let g = self.matrix_at(idx);
            let jm = j.matrix_at(idx);
            let avg = 0.5 * (g + jm.transpose() * g * jm);
            for (k, &(i, jx)) in SYM_PAIRS.iter().enumerate() {
                comps[k][idx] = avg[(i, jx)];
            }
        }
        Self {
            chart: self.chart,
            comps,
        }
    }
}

/// An almost complex structure sampled at the grid nodes.
///
/// Validated `J^2 = -Id` (and orientation, via the Pfaffian of the
/// fundamental form when built from a metric) at construction.
#[derive(Clone, Debug)]
pub struct AcsField {
    chart: GridChart,
    /// Sixteen components, row-major.
    comps: Vec<Vec<f64>>,
}

impl AcsField {
    pub fn constant(chart: GridChart, j: &AcsValue) -> Self {
        let m = chart.num_points();
        let jm = j.matrix();
        let comps = (0..16)
            .map(|k| vec![jm[(k / 4, k % 4)]; m])
            .collect();
        Self { chart, comps }
    }

    pub fn standard(chart: GridChart) -> Self {
        Self::constant(chart, &AcsValue::standard())
    }

    pub fn from_values(chart: GridChart, values: Vec<Matrix4<f64>>) -> Result<Self> {
        let m = chart.num_points();
        if values.len() != m {
            return Err(Error::Io("wrong number of nodes".into()));
        }
        let mut comps: Vec<Vec<f64>> = (0..16).map(|_| vec![0.0; m]).collect();
        for (idx, jm) in values.iter().enumerate() {
            AcsValue::new(*jm)?;
            for (k, comp) in comps.iter_mut().enumerate() {
                comp[idx] = jm[(k / 4, k % 4)];
            }
        }
        Ok(Self { chart, comps })
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    pub fn matrix_at(&self, idx: usize) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.comps[r * 4 + c][idx])
    }

    pub fn value_at(&self, idx: usize) -> AcsValue {
        AcsValue::new(self.matrix_at(idx)).expect("validated at construction")
    }

    pub fn comp(&self, k: usize) -> &[f64] {
        &self.comps[k]
    }

    pub fn neg(&self) -> Self {
        Self {
            chart: self.chart,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().map(|v| -v).collect())
                .collect(),
        }
    }

    /// Largest pointwise deviation from `other` (or from `-other`).
    pub fn distance_to_signed(&self, other: &Self) -> (f64, f64) {
        let mut plus = 0.0_f64;
        let mut minus = 0.0_f64;
        for (a, b) in self.comps.iter().zip(other.comps.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                plus = plus.max((x - y).abs());
                minus = minus.max((x + y).abs());
            }
        }
        (plus, minus)
    }

    /// Sup-norm of the compatibility defect with `g`.
    pub fn compatibility_residual(&self, g: &MetricField) -> f64 {
        let mut worst = 0.0_f64;
        for idx in 0..self.chart.num_points() {
            let gm = g.matrix_at(idx);
            let jm = self.matrix_at(idx);
            let defect = (jm.transpose() * gm * jm - gm).norm() / gm.norm();
            worst = worst.max(defect);
        }
        worst
    }

    /// The fundamental form field `omega(.,.) = g(J., .)`.
    pub fn fundamental_form(&self, g: &MetricField) -> Result<FormField> {
        let residual = self.compatibility_residual(g);
        if residual > crate::pointwise::DEFAULT_TOL {
            return Err(Error::IncompatiblePair {
                residual,
                tol: crate::pointwise::DEFAULT_TOL,
            });
        }
        let mut out = FormField::zeros(self.chart, 2);
        for idx in 0..self.chart.num_points() {
            let m = self.matrix_at(idx).transpose() * g.matrix_at(idx);
            for (c, &(i, j)) in PAIRS.iter().enumerate() {
                out.comp_mut(c)[idx] = m[(i, j)];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_round_trip() {
        let chart = GridChart::unit(4).unwrap();
        let beta = TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3));
        let f = FormField::constant_two_form(chart, &beta);
        assert_eq!(f.two_form_at(17), beta);
    }

    #[test]
    fn flat_metric_aux_is_euclidean() {
        let chart = GridChart::unit(4).unwrap();
        let g = MetricField::flat(chart);
        let aux = g.aux().unwrap();
        assert!(aux.euclidean);
        assert!((aux.sqrt_det[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conformal_metric_density() {
        let chart = GridChart::unit(4).unwrap();
        let u = FormField::scalar_from_fn(chart, |x| 0.1 * (2.0 * std::f64::consts::PI * x[0]).cos());
        let g = MetricField::conformally_flat(&u);
        let aux = g.aux().unwrap();
        assert!(!aux.euclidean);
        let idx = 7;
        let expect = (4.0 * u.comp(0)[idx]).exp();
        assert!((aux.sqrt_det[idx] - expect).abs() < 1e-12);
    }

    #[test]
    fn fundamental_form_field_flat() {
        let chart = GridChart::unit(4).unwrap();
        let g = MetricField::flat(chart);
        let j = AcsField::standard(chart);
        let omega = j.fundamental_form(&g).unwrap();
        let expect = TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3));
        assert!(omega.sub(&FormField::constant_two_form(chart, &expect)).max_abs() < 1e-15);
    }
}
