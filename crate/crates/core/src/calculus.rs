//! Discrete exterior calculus on the torus: exterior derivative (spectral),
//! Hodge star (pointwise), codifferential, Laplacian, wedge products and the
//! L2 pairings every solver builds on.

use crate::error::{Error, Result};
use crate::field::{FormField, MetricAux, ScalarField, COMP_COUNT, INDEX_SETS, set_index};
use crate::pointwise::perm_sign;
use crate::spectral::Fft4;

/// Exterior derivative via spectral differentiation.
///
/// `d . d = 0` to round-off; errors with [`Error::DegreeOverflow`] on 4-forms.
pub fn ext_d(field: &FormField, fft: &Fft4) -> Result<FormField> {
    let p = field.degree();
    if p >= 4 {
        return Err(Error::DegreeOverflow(p));
    }
    // Differentiate each input component along each axis once.
    let m = field.chart().num_points();
    let mut derivs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(COMP_COUNT[p]);
    for c in 0..COMP_COUNT[p] {
        derivs.push((0..4).map(|axis| fft.deriv(field.comp(c), axis)).collect());
    }
    let mut out = FormField::zeros(*field.chart(), p + 1);
    for (jj, jset) in INDEX_SETS[p + 1].iter().enumerate() {
        let target = out.comp_mut(jj);
        for (k, &axis) in jset.iter().enumerate() {
            let rest: Vec<usize> = jset
                .iter()
                .copied()
                .filter(|t| *t != axis)
                .collect();
            let src = &derivs[set_index(p, &rest)][axis];
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for idx in 0..m {
                target[idx] += sign * src[idx];
            }
        }
    }
    Ok(out)
}

/// Transpose of [`ext_d`] in the plain componentwise dot product.
///
/// Spectral differentiation is exactly skew-adjoint, so this is an exact
/// matrix transpose; on the flat metric it coincides with the codifferential.
pub fn ext_d_transpose(field: &FormField, fft: &Fft4) -> FormField {
    let q = field.degree();
    assert!(q >= 1, "transpose of d maps degree >= 1");
    let p = q - 1;
    let m = field.chart().num_points();
    let mut derivs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(COMP_COUNT[q]);
    for c in 0..COMP_COUNT[q] {
        derivs.push((0..4).map(|axis| fft.deriv(field.comp(c), axis)).collect());
    }
    let mut out = FormField::zeros(*field.chart(), p);
    for (ii, iset) in INDEX_SETS[p].iter().enumerate() {
        let target = out.comp_mut(ii);
        for axis in 0..4 {
            if iset.contains(&axis) {
                continue;
            }
            let mut joined: Vec<usize> = iset.to_vec();
            joined.push(axis);
            joined.sort_unstable();
            let k = joined.iter().position(|t| *t == axis).unwrap();
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            let src = &derivs[set_index(q, &joined)][axis];
            for idx in 0..m {
                target[idx] += sign * src[idx];
            }
        }
    }
    out
}

/// Determinant of the `p x p` minor `ginv[I, K]`: the induced metric on
/// degree-p components.
pub(crate) fn gram_minor(ginv: &nalgebra::Matrix4<f64>, iset: &[usize], kset: &[usize]) -> f64 {
    match iset.len() {
        0 => 1.0,
        1 => ginv[(iset[0], kset[0])],
        2 => {
            ginv[(iset[0], kset[0])] * ginv[(iset[1], kset[1])]
                - ginv[(iset[0], kset[1])] * ginv[(iset[1], kset[0])]
        }
        3 => {
            let a = |r: usize, c: usize| ginv[(iset[r], kset[c])];
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        }
        4 => ginv.determinant(),
        _ => unreachable!(),
    }
}

/// Hodge star of a `p`-form field for the metric behind `aux` and the
/// reference orientation `e1^e2^e3^e4`.
pub fn hodge_star_field(field: &FormField, aux: &MetricAux) -> FormField {
    star_impl(field, aux, false)
}

/// Transpose of the pointwise star matrix (plain componentwise pairing).
pub fn hodge_star_field_transpose(field: &FormField, aux: &MetricAux) -> FormField {
    star_impl(field, aux, true)
}

fn star_impl(field: &FormField, aux: &MetricAux, transpose: bool) -> FormField {
    // The forward star maps degree p to q = 4 - p; its transpose receives a
    // q-form and returns a p-form.
    let p = if transpose {
        4 - field.degree()
    } else {
        field.degree()
    };
    let q = 4 - p;
    let chart = *field.chart();
    let m = chart.num_points();
    let out_deg = if transpose { p } else { q };
    let mut out = FormField::zeros(chart, out_deg);
    // Star matrix rows: (*alpha)_J = sqrt(g) eps(K, J) sum_L G^{K L} alpha_L,
    // with K the complement of J.
    let complements: Vec<(usize, Vec<usize>, f64)> = INDEX_SETS[q]
        .iter()
        .enumerate()
        .map(|(jj, jset)| {
            let comp: Vec<usize> = (0..4).filter(|t| !jset.contains(t)).collect();
            let mut perm: Vec<usize> = comp.clone();
            perm.extend_from_slice(jset);
            (jj, comp, perm_sign(&perm))
        })
        .collect();
    for idx in 0..m {
        let ginv = &aux.ginv[idx];
        let rho = aux.sqrt_det[idx];
        for (jj, comp, sign) in &complements {
            for (ll, lset) in INDEX_SETS[p].iter().enumerate() {
                let entry = rho * sign * gram_minor(ginv, comp, lset);
                if transpose {
                    out.comp_mut(ll)[idx] += entry * field.comp(*jj)[idx];
                } else {
                    out.comp_mut(*jj)[idx] += entry * field.comp(ll)[idx];
                }
            }
        }
    }
    out
}

/// Codifferential `delta = -* d *` (all degrees, dimension 4).
pub fn codiff(field: &FormField, aux: &MetricAux, fft: &Fft4) -> Result<FormField> {
    let p = field.degree();
    assert!(p >= 1, "codifferential needs degree >= 1");
    let starred = hodge_star_field(field, aux);
    let d_starred = ext_d(&starred, fft)?;
    Ok(hodge_star_field(&d_starred, aux).scale(-1.0))
}

/// Hodge Laplacian `d delta + delta d`.
pub fn laplacian(field: &FormField, aux: &MetricAux, fft: &Fft4) -> Result<FormField> {
    let p = field.degree();
    let mut out = FormField::zeros(*field.chart(), p);
    if p >= 1 {
        out = out.add(&ext_d(&codiff(field, aux, fft)?, fft)?);
    }
    if p <= 3 {
        out = out.add(&codiff(&ext_d(field, fft)?, aux, fft)?);
    }
    Ok(out)
}

/// Pointwise inner product field `<a, b>_g`.
pub fn pointwise_inner(a: &FormField, b: &FormField, aux: &MetricAux) -> ScalarField {
    assert_eq!(a.degree(), b.degree());
    let p = a.degree();
    let chart = *a.chart();
    let m = chart.num_points();
    let mut out = FormField::zeros(chart, 0);
    let target = out.comp_mut(0);
    if aux.euclidean {
        for c in 0..COMP_COUNT[p] {
            let (ac, bc) = (a.comp(c), b.comp(c));
            for idx in 0..m {
                target[idx] += ac[idx] * bc[idx];
            }
        }
    } else {
        for idx in 0..m {
            let ginv = &aux.ginv[idx];
            let mut s = 0.0;
            for (ii, iset) in INDEX_SETS[p].iter().enumerate() {
                for (kk, kset) in INDEX_SETS[p].iter().enumerate() {
                    s += a.comp(ii)[idx] * gram_minor(ginv, iset, kset) * b.comp(kk)[idx];
                }
            }
            target[idx] = s;
        }
    }
    out
}

/// Integral of a scalar field against the Riemannian volume.
pub fn integrate_scalar(s: &ScalarField, aux: &MetricAux) -> f64 {
    let dv = s.chart().cell_volume();
    s.comp(0)
        .iter()
        .zip(aux.sqrt_det.iter())
        .map(|(v, rho)| v * rho)
        .sum::<f64>()
        * dv
}

/// L2 inner product of two fields of equal degree.
pub fn l2_inner(a: &FormField, b: &FormField, aux: &MetricAux) -> f64 {
    integrate_scalar(&pointwise_inner(a, b, aux), aux)
}

pub fn l2_norm(a: &FormField, aux: &MetricAux) -> f64 {
    l2_inner(a, a, aux).max(0.0).sqrt()
}

/// Wedge product of two form fields.
pub fn wedge(a: &FormField, b: &FormField) -> FormField {
    let p = a.degree();
    let q = b.degree();
    assert!(p + q <= 4, "wedge degree overflow");
    let chart = *a.chart();
    let m = chart.num_points();
    let mut out = FormField::zeros(chart, p + q);
    for (jj, jset) in INDEX_SETS[p + q].iter().enumerate() {
        // All ways to split J into a p-subset and its complement.
        let masks = subset_masks(jset.len(), p);
        let target = out.comp_mut(jj);
        for mask in masks {
            let mut iset = Vec::with_capacity(p);
            let mut kset = Vec::with_capacity(q);
            for (t, &j) in jset.iter().enumerate() {
                if mask & (1 << t) != 0 {
                    iset.push(j);
                } else {
                    kset.push(j);
                }
            }
            let mut perm = iset.clone();
            perm.extend_from_slice(&kset);
            // Sign of the shuffle relative to the sorted J.
            let sign = shuffle_sign(&perm, jset);
            let ac = a.comp(set_index(p, &iset));
            let bc = b.comp(set_index(q, &kset));
            for idx in 0..m {
                target[idx] += sign * ac[idx] * bc[idx];
            }
        }
    }
    out
}

fn subset_masks(len: usize, count: usize) -> Vec<u32> {
    (0u32..(1 << len))
        .filter(|mask| mask.count_ones() as usize == count)
        .collect()
}

/// Sign of the permutation rearranging `perm` into `sorted`.
fn shuffle_sign(perm: &[usize], sorted: &[usize]) -> f64 {
    let positions: Vec<usize> = perm
        .iter()
        .map(|v| sorted.iter().position(|s| s == v).unwrap())
        .collect();
    perm_sign(&positions)
}

/// Integral of a 4-form over the torus (a density; no metric involved).
pub fn integrate_top(field: &FormField) -> f64 {
    assert_eq!(field.degree(), 4);
    field.comp(0).iter().sum::<f64>() * field.chart().cell_volume()
}

/// Integral of `a ^ b` for forms of complementary degree.
pub fn integrate_wedge(a: &FormField, b: &FormField) -> f64 {
    integrate_top(&wedge(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MetricField;
    use crate::grid::GridChart;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    fn random_band_limited(chart: GridChart, degree: usize, seed: u64) -> FormField {
        let fft = Fft4::new(chart);
        let mut rng = StdRng::seed_from_u64(seed);
        let mut f = FormField::from_fn(chart, degree, |_, _| rng.random_range(-1.0..1.0));
        for c in 0..COMP_COUNT[degree] {
            let smooth = fft.band_limit(f.comp(c), 2);
            f.comp_mut(c).copy_from_slice(&smooth);
        }
        f
    }

    #[test]
    fn d_of_constant_two_form_vanishes() {
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let f = FormField::constant(chart, 2, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let df = ext_d(&f, &fft).unwrap();
        assert!(df.max_abs() < 1e-12);
    }

    #[test]
    fn d_coordinate_example() {
        // d(sin(2 pi x1) e2) = 2 pi cos(2 pi x1) e1 ^ e2.
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let mut f = FormField::zeros(chart, 1);
        for idx in 0..chart.num_points() {
            f.comp_mut(1)[idx] = (TAU * chart.point(idx)[0]).sin();
        }
        let df = ext_d(&f, &fft).unwrap();
        for idx in 0..chart.num_points() {
            let expect = TAU * (TAU * chart.point(idx)[0]).cos();
            assert!((df.comp(0)[idx] - expect).abs() < 1e-9);
            for c in 1..6 {
                assert!(df.comp(c)[idx].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn d_squared_vanishes_to_round_off() {
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        for degree in 0..=2 {
            let f = random_band_limited(chart, degree, 5 + degree as u64);
            let ddf = ext_d(&ext_d(&f, &fft).unwrap(), &fft).unwrap();
            assert!(
                ddf.max_abs() < 1e-10 * (1.0 + f.max_abs()),
                "degree {degree}: |ddf| = {:.3e}",
                ddf.max_abs()
            );
        }
    }

    #[test]
    fn d_overflows_on_top_degree() {
        let chart = GridChart::unit(4).unwrap();
        let fft = Fft4::new(chart);
        let f = FormField::zeros(chart, 4);
        assert!(matches!(ext_d(&f, &fft), Err(Error::DegreeOverflow(4))));
    }

    #[test]
    fn transpose_matches_codiff_on_flat_metric() {
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let aux = MetricField::flat(chart).aux().unwrap();
        for degree in 1..=3 {
            let f = random_band_limited(chart, degree, 11 + degree as u64);
            let a = codiff(&f, &aux, &fft).unwrap();
            let b = ext_d_transpose(&f, &fft);
            assert!(a.sub(&b).max_abs() < 1e-10 * (1.0 + f.max_abs()));
        }
    }

    #[test]
    fn transpose_is_the_adjoint() {
        // <d a, b> = <a, d^T b> in the plain componentwise pairing.
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let a = random_band_limited(chart, 1, 21);
        let b = random_band_limited(chart, 2, 22);
        let da = ext_d(&a, &fft).unwrap();
        let dtb = ext_d_transpose(&b, &fft);
        let dot = |x: &FormField, y: &FormField| -> f64 {
            x.comps()
                .iter()
                .zip(y.comps())
                .flat_map(|(xc, yc)| xc.iter().zip(yc.iter()))
                .map(|(u, v)| u * v)
                .sum()
        };
        let lhs = dot(&da, &b);
        let rhs = dot(&a, &dtb);
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn codiff_adjointness_on_smooth_metric() {
        let chart = GridChart::unit(16).unwrap();
        let fft = Fft4::new(chart);
        let u = FormField::scalar_from_fn(chart, |x| {
            0.15 * (TAU * x[0]).cos() + 0.1 * (TAU * x[1]).sin() * (TAU * x[3]).cos()
        });
        let g = MetricField::conformally_flat(&u);
        let aux = g.aux().unwrap();
        let a = random_band_limited(chart, 1, 31);
        let b = random_band_limited(chart, 2, 32);
        let da = ext_d(&a, &fft).unwrap();
        let delta_b = codiff(&b, &aux, &fft).unwrap();
        let lhs = l2_inner(&da, &b, &aux);
        let rhs = l2_inner(&a, &delta_b, &aux);
        let scale = l2_norm(&da, &aux) * l2_norm(&b, &aux);
        assert!(
            (lhs - rhs).abs() < 1e-8 * (1.0 + scale),
            "adjointness defect {:.3e}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn codiff_of_constant_flat_vanishes() {
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let aux = MetricField::flat(chart).aux().unwrap();
        let omega = FormField::constant(chart, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = codiff(&omega, &aux, &fft).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn stokes_pairing() {
        // integral d a ^ b = integral a ^ d b for degrees (1, 2),
        // from d(a ^ b) = da ^ b - a ^ db and periodicity.
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let a = random_band_limited(chart, 1, 41);
        let b = random_band_limited(chart, 2, 42);
        let lhs = integrate_wedge(&ext_d(&a, &fft).unwrap(), &b);
        let rhs = integrate_wedge(&a, &ext_d(&b, &fft).unwrap());
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn star_squares_correctly_for_all_degrees() {
        let chart = GridChart::unit(8).unwrap();
        let u = FormField::scalar_from_fn(chart, |x| 0.1 * (TAU * x[2]).sin());
        let aux = MetricField::conformally_flat(&u).aux().unwrap();
        // ** = (-1)^{p(4-p)}: +1 on even degrees, -1 on odd.
        for (degree, sign) in [(0, 1.0), (1, -1.0), (2, 1.0), (3, -1.0), (4, 1.0)] {
            let f = random_band_limited(chart, degree, 51 + degree as u64);
            let ss = hodge_star_field(&hodge_star_field(&f, &aux), &aux);
            assert!(
                ss.sub(&f.scale(sign)).max_abs() < 1e-10 * (1.0 + f.max_abs()),
                "degree {degree}"
            );
        }
    }

    #[test]
    fn wedge_pairing_matches_star_inner_product() {
        // a ^ b = <a, *b> dV for 2-forms.
        let chart = GridChart::unit(8).unwrap();
        let u = FormField::scalar_from_fn(chart, |x| 0.12 * (TAU * x[1]).cos());
        let aux = MetricField::conformally_flat(&u).aux().unwrap();
        let a = random_band_limited(chart, 2, 61);
        let b = random_band_limited(chart, 2, 62);
        let lhs = integrate_wedge(&a, &b);
        let rhs = l2_inner(&a, &hodge_star_field(&b, &aux), &aux);
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn star_transpose_is_the_adjoint() {
        let chart = GridChart::unit(8).unwrap();
        let u = FormField::scalar_from_fn(chart, |x| 0.2 * (TAU * x[0]).sin());
        let aux = MetricField::conformally_flat(&u).aux().unwrap();
        let dot = |x: &FormField, y: &FormField| -> f64 {
            x.comps()
                .iter()
                .zip(y.comps())
                .flat_map(|(xc, yc)| xc.iter().zip(yc.iter()))
                .map(|(u, v)| u * v)
                .sum()
        };
        for degree in 0..=4usize {
            let a = random_band_limited(chart, degree, 70 + degree as u64);
            let b = random_band_limited(chart, 4 - degree, 80 + degree as u64);
            let lhs = dot(&hodge_star_field(&a, &aux), &b);
            let rhs = dot(&a, &hodge_star_field_transpose(&b, &aux));
            assert!(
                (lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()),
                "degree {degree}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn laplacian_of_eigenmode() {
        let chart = GridChart::unit(8).unwrap();
        let fft = Fft4::new(chart);
        let aux = MetricField::flat(chart).aux().unwrap();
        let f = FormField::scalar_from_fn(chart, |x| (TAU * x[0]).sin());
        let lap = laplacian(&f, &aux, &fft).unwrap();
        let expect = f.scale(TAU * TAU);
        assert!(lap.sub(&expect).max_abs() < 1e-9);
    }
}
