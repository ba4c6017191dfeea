//! Explicit families of almost complex structures over the flat torus: the
//! norm-constrained deformations `f omega + r alpha`, the Lee and conformal
//! choices of `(r, f)`, the twisted variant preserving a common class, the
//! three-function torus family with its rank formula for `h^-`, and the
//! intersection-dimension computation for metric related pairs.

use nalgebra::DMatrix;

use crate::anti_invariant::{
    acs_field_from_form, anti_invariance_defect, h_minus_rank_test, j_act_field,
};
use crate::calculus::{ext_d, integrate_scalar, pointwise_inner};
use crate::error::{Error, Result};
use crate::field::{AcsField, FormField, MetricField, ScalarField};
use crate::grid::GridChart;
use crate::hodge::{sd_harmonic_basis, SolverParams};
use crate::pointwise::TwoFormValue;
use crate::spectral::Fft4;

/// Relative eigenvalue threshold for numerical span ranks.
pub const RANK_TOL: f64 = 1e-8;

/// Sign choice in the square-root branch of a family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn check_closed_anti_invariant(
    alpha: &FormField,
    j: &AcsField,
    context: &str,
) -> Result<()> {
    let defect = anti_invariance_defect(alpha, j);
    if defect > 1e-8 {
        return Err(Error::InputNotAntiInvariant {
            residual: defect,
            tol: 1e-8,
        });
    }
    let fft = Fft4::new(*alpha.chart());
    let d = ext_d(alpha, &fft)?;
    if d.max_abs() > 1e-8 * (1.0 + alpha.max_abs()) {
        return Err(Error::NormViolation(format!(
            "{context}: alpha is not closed (|d alpha| = {:.3e})",
            d.max_abs()
        )));
    }
    Ok(())
}

/// `omega~ = f omega + r alpha` with `f = sign (1 - r^2 |alpha|^2 / 2)^{1/2}`.
///
/// Errors with [`Error::NormViolation`] when `r^2 |alpha|^2 >= 2` somewhere.
/// Where `r` vanishes the output agrees with `sign * J` bit for bit.
pub fn build_from_alpha(
    g: &MetricField,
    omega: &FormField,
    alpha: &FormField,
    r: &ScalarField,
    sign: Sign,
) -> Result<AcsField> {
    let j = acs_field_from_form(g, omega)?;
    check_closed_anti_invariant(alpha, &j, "build_from_alpha")?;
    let aux = g.aux()?;
    let alpha_sq = pointwise_inner(alpha, alpha, &aux);
    let chart = *g.chart();
    let mut form = FormField::zeros(chart, 2);
    for idx in 0..chart.num_points() {
        let rr = r.comp(0)[idx];
        let a2 = alpha_sq.comp(0)[idx];
        let margin = 2.0 - rr * rr * a2;
        if margin <= 0.0 {
            return Err(Error::NormViolation(format!(
                "r^2 |alpha|^2 = {:.6} >= 2 at node {idx}",
                rr * rr * a2
            )));
        }
        let f = sign.factor() * (margin / 2.0).sqrt();
        let v = omega
            .two_form_at(idx)
            .scale(f)
            .add(&alpha.two_form_at(idx).scale(rr));
        form.set_two_form_at(idx, &v);
    }
    acs_field_from_form(g, &form)
}

/// The Lee choice `r = 4 / (2 + |alpha|^2)`,
/// `f = sign (2 - |alpha|^2) / (2 + |alpha|^2)`; the norm constraint holds
/// identically in `|alpha|^2`.
pub fn lee_structure(
    g: &MetricField,
    omega: &FormField,
    alpha: &FormField,
    sign: Sign,
) -> Result<AcsField> {
    let j = acs_field_from_form(g, omega)?;
    check_closed_anti_invariant(alpha, &j, "lee_structure")?;
    let aux = g.aux()?;
    let alpha_sq = pointwise_inner(alpha, alpha, &aux);
    let chart = *g.chart();
    let mut form = FormField::zeros(chart, 2);
    for idx in 0..chart.num_points() {
        let a2 = alpha_sq.comp(0)[idx];
        let r = 4.0 / (2.0 + a2);
        let f = sign.factor() * (2.0 - a2) / (2.0 + a2);
        let v = omega
            .two_form_at(idx)
            .scale(f)
            .add(&alpha.two_form_at(idx).scale(r));
        form.set_two_form_at(idx, &v);
    }
    acs_field_from_form(g, &form)
}

/// The conformal choice `r = f = sign-adjusted sqrt(2)/sqrt(2 + |alpha|^2)`:
/// the fundamental form is pointwise proportional to `sign * omega + alpha`.
pub fn conformal_structure(
    g: &MetricField,
    omega: &FormField,
    alpha: &FormField,
    sign: Sign,
) -> Result<AcsField> {
    let j = acs_field_from_form(g, omega)?;
    check_closed_anti_invariant(alpha, &j, "conformal_structure")?;
    let aux = g.aux()?;
    let alpha_sq = pointwise_inner(alpha, alpha, &aux);
    let chart = *g.chart();
    let mut form = FormField::zeros(chart, 2);
    for idx in 0..chart.num_points() {
        let a2 = alpha_sq.comp(0)[idx];
        let c = (2.0 / (2.0 + a2)).sqrt();
        let v = omega
            .two_form_at(idx)
            .scale(sign.factor() * c)
            .add(&alpha.two_form_at(idx).scale(c));
        form.set_two_form_at(idx, &v);
    }
    acs_field_from_form(g, &form)
}

/// `omega~ = f omega + r J alpha`: the twist keeping `alpha` anti-invariant
/// for the new structure, hence `[alpha]` in the intersection of the two
/// anti-invariant cohomologies.
pub fn twisted_from_alpha(
    g: &MetricField,
    omega: &FormField,
    alpha: &FormField,
    r: &ScalarField,
) -> Result<AcsField> {
    let j = acs_field_from_form(g, omega)?;
    check_closed_anti_invariant(alpha, &j, "twisted_from_alpha")?;
    let j_alpha = j_act_field(alpha, &j)?;
    let aux = g.aux()?;
    let alpha_sq = pointwise_inner(alpha, alpha, &aux);
    let chart = *g.chart();
    let mut form = FormField::zeros(chart, 2);
    for idx in 0..chart.num_points() {
        let rr = r.comp(0)[idx];
        let a2 = alpha_sq.comp(0)[idx];
        let margin = 2.0 - rr * rr * a2;
        if margin <= 0.0 {
            return Err(Error::NormViolation(format!(
                "r^2 |alpha|^2 = {:.6} >= 2 at node {idx}",
                rr * rr * a2
            )));
        }
        let f = (margin / 2.0).sqrt();
        let v = omega
            .two_form_at(idx)
            .scale(f)
            .add(&j_alpha.two_form_at(idx).scale(rr));
        form.set_two_form_at(idx, &v);
    }
    acs_field_from_form(g, &form)
}

/// The flat-torus three-function family `omega_{f,l,s} = f omega + l beta
/// + s J beta` over the hyperkaehler base (`beta = e13 - e24`, `|beta|^2 =
/// 2`), with the closed-form prediction
/// `h^- = 3 - rank Span(f', l', s')`, `f' = 2f`, `l' = 2l`, `s' = 2s`.
///
/// The inputs must satisfy `2 f^2 + |beta|^2 (l^2 + s^2) = 2` pointwise.
pub fn torus_family(
    f: &ScalarField,
    l: &ScalarField,
    s: &ScalarField,
) -> Result<(AcsField, usize)> {
    let chart = *f.chart();
    let g = MetricField::flat(chart);
    let omega = FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3)),
    );
    let beta = FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3)),
    );
    let j_beta = FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 3).add(&TwoFormValue::basis(1, 2)),
    );
    let mut form = FormField::zeros(chart, 2);
    for idx in 0..chart.num_points() {
        let (fv, lv, sv) = (f.comp(0)[idx], l.comp(0)[idx], s.comp(0)[idx]);
        let norm = 2.0 * fv * fv + 2.0 * (lv * lv + sv * sv);
        if (norm - 2.0).abs() > 1e-10 {
            return Err(Error::NormViolation(format!(
                "2f^2 + |beta|^2(l^2+s^2) = {norm:.12} != 2 at node {idx}"
            )));
        }
        let v = omega
            .two_form_at(idx)
            .scale(fv)
            .add(&beta.two_form_at(idx).scale(lv))
            .add(&j_beta.two_form_at(idx).scale(sv));
        form.set_two_form_at(idx, &v);
    }
    let acs = acs_field_from_form(&g, &form)?;
    let f_prime = f.scale(2.0);
    let l_prime = l.scale(2.0);
    let s_prime = s.scale(2.0);
    let rank = rank_span(&[&f_prime, &l_prime, &s_prime], RANK_TOL)?;
    Ok((acs, 3 - rank))
}

/// The two-constant family with `h^- = 2` on the flat torus:
/// `f = sqrt(2) w`, `l = sqrt(2) k1 w`, `s = sqrt(2) k2 w` with
/// `w = (2 + 2 (k1^2 + k2^2))^{-1/2}`. The norm constraint holds identically.
pub fn h2_family(chart: GridChart, k1: f64, k2: f64) -> (ScalarField, ScalarField, ScalarField) {
    let w = 1.0 / (2.0 + 2.0 * (k1 * k1 + k2 * k2)).sqrt();
    let sqrt2 = 2.0_f64.sqrt();
    (
        FormField::constant(chart, 0, &[sqrt2 * w]),
        FormField::constant(chart, 0, &[sqrt2 * k1 * w]),
        FormField::constant(chart, 0, &[sqrt2 * k2 * w]),
    )
}

/// Rank of the span of scalar fields in L2: the number of eigenvalues of
/// their Gram matrix above `tol` times the largest.
pub fn rank_span(functions: &[&ScalarField], tol: f64) -> Result<usize> {
    if functions.is_empty() {
        return Ok(0);
    }
    let chart = *functions[0].chart();
    let aux = MetricField::flat(chart).aux()?;
    let k = functions.len();
    let gram = DMatrix::from_fn(k, k, |r, c| {
        integrate_scalar(&functions[r].scale_pointwise(functions[c]), &aux)
    });
    let eig = (0.5 * (&gram + gram.transpose())).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, b| a.max(*b));
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(eig.eigenvalues.iter().filter(|v| **v > tol * max).count())
}

/// Dimension of `H^-_{J1} intersect H^-_{J2}` for two g-compatible
/// structures: the joint null space of the pointwise-orthogonality
/// constraints against both fundamental forms, inside the self-dual harmonic
/// space. Never exceeds 1 for distinct structures.
pub fn intersection_dim(
    j1: &AcsField,
    j2: &AcsField,
    g: &MetricField,
    params: &SolverParams,
) -> Result<usize> {
    let (plus, minus) = j1.distance_to_signed(j2);
    if plus < 1e-10 || minus < 1e-10 {
        return Err(Error::IdenticalStructures);
    }
    let aux = g.aux()?;
    let sd = sd_harmonic_basis(g, params)?;
    let omega1 = j1.fundamental_form(g)?;
    let omega2 = j2.fundamental_form(g)?;
    let mut m = DMatrix::<f64>::zeros(3, 3);
    for omega in [&omega1, &omega2] {
        let traces: Vec<ScalarField> = sd
            .iter()
            .map(|psi| pointwise_inner(psi, omega, &aux))
            .collect();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] += integrate_scalar(&traces[r].scale_pointwise(&traces[c]), &aux);
            }
        }
    }
    let eig = (0.5 * (&m + m.transpose())).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, b| a.max(*b));
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|v| **v < RANK_TOL * max)
        .count())
}

/// Smallest eigenvalue over the grid of the symmetrised pairing
/// `(X, Y) -> sigma(X, JY)`: positive when `sigma` tames `J`.
pub fn taming_margin(sigma: &FormField, j: &AcsField) -> f64 {
    let chart = *sigma.chart();
    let mut worst = f64::INFINITY;
    for idx in 0..chart.num_points() {
        let sm = sigma.two_form_at(idx).matrix();
        let jm = j.matrix_at(idx);
        // sigma(X, JY) = X^T S J Y; symmetrise.
        let b = sm * jm;
        let sym = 0.5 * (b + b.transpose());
        let min = sym.symmetric_eigenvalues().min();
        worst = worst.min(min);
    }
    worst
}

/// A smooth compactly supported periodic bump `a * exp(1 - 1/(1 - u^2))` in
/// the scaled distance `u` from `center`, vanishing outside `radius`.
pub fn bump(chart: GridChart, center: [f64; 4], radius: f64, amplitude: f64) -> ScalarField {
    let periods = chart.periods();
    FormField::scalar_from_fn(chart, move |x| {
        let mut d2 = 0.0;
        for a in 0..4 {
            let mut d = (x[a] - center[a]).abs() % periods[a];
            if d > periods[a] / 2.0 {
                d = periods[a] - d;
            }
            d2 += d * d;
        }
        let u2 = d2 / (radius * radius);
        if u2 >= 1.0 {
            0.0
        } else {
            amplitude * (1.0 - 1.0 / (1.0 - u2)).exp()
        }
    })
}

/// Convenience: the grid `h^-` of a family instance through the rank-test
/// oracle (used to cross-check predictions cheaply in tests).
pub fn measured_h_minus_oracle(j: &AcsField, params: &SolverParams) -> Result<usize> {
    let g = MetricField::flat(*j.chart());
    h_minus_rank_test(&g, j, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anti_invariant::{flat_reference, h_minus, EigOptions};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    fn beta_field(chart: GridChart) -> FormField {
        FormField::constant_two_form(
            chart,
            &TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3)),
        )
    }

    #[test]
    fn build_from_alpha_zero_r_is_plus_minus_j() {
        let chart = GridChart::unit(4).unwrap();
        let (g, j, omega) = flat_reference(chart);
        let zero = FormField::zeros(chart, 0);
        let built = build_from_alpha(&g, &omega, &beta_field(chart), &zero, Sign::Plus).unwrap();
        let (plus, _) = built.distance_to_signed(&j);
        assert_eq!(plus, 0.0);
        let built = build_from_alpha(&g, &omega, &beta_field(chart), &zero, Sign::Minus).unwrap();
        let (_, minus) = built.distance_to_signed(&j);
        assert_eq!(minus, 0.0);
    }

    #[test]
    fn build_from_alpha_is_identity_outside_support() {
        let chart = GridChart::unit(8).unwrap();
        let (g, j, omega) = flat_reference(chart);
        let r = bump(chart, [0.5, 0.5, 0.5, 0.5], 0.3, 0.6);
        let built = build_from_alpha(&g, &omega, &beta_field(chart), &r, Sign::Plus).unwrap();
        let mut outside_checked = false;
        for idx in 0..chart.num_points() {
            if r.comp(0)[idx] == 0.0 {
                let diff = (built.matrix_at(idx) - j.matrix_at(idx)).abs().max();
                assert_eq!(diff, 0.0, "must match bit for bit outside the support");
                outside_checked = true;
            }
        }
        assert!(outside_checked);
    }

    #[test]
    fn build_from_alpha_rejects_norm_violation() {
        let chart = GridChart::unit(4).unwrap();
        let (g, _, omega) = flat_reference(chart);
        let big = FormField::constant(chart, 0, &[1.1]);
        assert!(matches!(
            build_from_alpha(&g, &omega, &beta_field(chart), &big, Sign::Plus),
            Err(Error::NormViolation(_))
        ));
    }

    #[test]
    fn lee_structure_limits() {
        let chart = GridChart::unit(4).unwrap();
        let (g, j, omega) = flat_reference(chart);
        // alpha = 0: r = 2, f = 1, omega~ = omega.
        let zero = FormField::zeros(chart, 2);
        let built = lee_structure(&g, &omega, &zero, Sign::Plus).unwrap();
        assert_eq!(built.distance_to_signed(&j).0, 0.0);
        // |alpha|^2 = 2: r = 1, f = 0, omega~ = alpha exactly.
        let beta = beta_field(chart);
        let built = lee_structure(&g, &omega, &beta, Sign::Plus).unwrap();
        let expect = crate::anti_invariant::acs_field_from_form(&g, &beta).unwrap();
        assert!(built.distance_to_signed(&expect).0 < 1e-14);
    }

    #[test]
    fn lee_structure_constant_alpha_h_minus_is_two() {
        // On the flat torus a closed anti-invariant alpha is constant, the
        // Lee structure is another constant complex structure, and the rank
        // formula gives h^- = 3 - rank{0, 2|a|, 2|b|-ish} = 2. The grid
        // kernel count and the rank oracle agree on 2.
        let chart = GridChart::unit(8).unwrap();
        let (g, _, omega) = flat_reference(chart);
        let built = lee_structure(&g, &omega, &beta_field(chart), Sign::Plus).unwrap();
        let report = h_minus(&g, &built, &EigOptions::default()).unwrap();
        assert_eq!(report.kernel_dim, 2, "eigenvalues {:?}", report.eigenvalues);
        assert_eq!(
            measured_h_minus_oracle(&built, &SolverParams::default()).unwrap(),
            2
        );
    }

    #[test]
    fn conformal_structure_examples() {
        let chart = GridChart::unit(4).unwrap();
        let (g, j, omega) = flat_reference(chart);
        let zero = FormField::zeros(chart, 2);
        let built = conformal_structure(&g, &omega, &zero, Sign::Minus).unwrap();
        assert_eq!(built.distance_to_signed(&j).1, 0.0);
        // Constant |alpha|^2 = 2: omega~ = (omega + alpha)/sqrt(2), and
        // omega + alpha is a compatible symplectic form for the result.
        let beta = beta_field(chart);
        let built = conformal_structure(&g, &omega, &beta, Sign::Plus).unwrap();
        let sigma = omega.add(&beta);
        assert!(taming_margin(&sigma, &built) > 0.9);
        let expect = crate::anti_invariant::acs_field_from_form(
            &g,
            &sigma.scale(1.0 / 2.0_f64.sqrt()),
        )
        .unwrap();
        assert!(built.distance_to_signed(&expect).0 < 1e-14);
    }

    #[test]
    fn twisted_alpha_stays_anti_invariant_and_intersects_in_one_class() {
        let chart = GridChart::unit(8).unwrap();
        let (g, j, omega) = flat_reference(chart);
        let beta = beta_field(chart);
        let r = bump(chart, [0.3, 0.6, 0.5, 0.2], 0.35, 0.5);
        let twisted = twisted_from_alpha(&g, &omega, &beta, &r).unwrap();
        assert!(anti_invariance_defect(&beta, &twisted) < 1e-10);
        assert_eq!(
            intersection_dim(&j, &twisted, &g, &SolverParams::default()).unwrap(),
            1
        );
        // r = 0 reduces to J.
        let zero = FormField::zeros(chart, 0);
        let same = twisted_from_alpha(&g, &omega, &beta, &zero).unwrap();
        assert_eq!(same.distance_to_signed(&j).0, 0.0);
    }

    #[test]
    fn torus_family_constant_is_standard() {
        let chart = GridChart::unit(8).unwrap();
        let one = FormField::constant(chart, 0, &[1.0]);
        let zero = FormField::zeros(chart, 0);
        let (acs, predicted) = torus_family(&one, &zero, &zero).unwrap();
        assert_eq!(predicted, 2);
        let j = AcsField::standard(chart);
        assert!(acs.distance_to_signed(&j).0 < 1e-14);
    }

    #[test]
    fn torus_family_rank_two_instance() {
        let chart = GridChart::unit(8).unwrap();
        let f = FormField::scalar_from_fn(chart, |x| (TAU * x[0]).cos());
        let l = FormField::scalar_from_fn(chart, |x| (TAU * x[0]).sin());
        let s = FormField::zeros(chart, 0);
        let (acs, predicted) = torus_family(&f, &l, &s).unwrap();
        assert_eq!(predicted, 1);
        // Grid agreement through both methods.
        let g = MetricField::flat(chart);
        let report = h_minus(&g, &acs, &EigOptions::default()).unwrap();
        assert_eq!(report.kernel_dim, 1, "eigenvalues {:?}", report.eigenvalues);
        assert_eq!(
            measured_h_minus_oracle(&acs, &SolverParams::default()).unwrap(),
            1
        );
    }

    #[test]
    fn torus_family_rank_three_instance() {
        let chart = GridChart::unit(8).unwrap();
        let a = 0.55;
        let l = FormField::scalar_from_fn(chart, |x| a * (TAU * x[0]).cos());
        let s = FormField::scalar_from_fn(chart, |x| a * (TAU * x[1]).sin());
        let f = {
            let mut f = FormField::zeros(chart, 0);
            for idx in 0..chart.num_points() {
                let lv = l.comp(0)[idx];
                let sv = s.comp(0)[idx];
                f.comp_mut(0)[idx] = (1.0 - lv * lv - sv * sv).sqrt();
            }
            f
        };
        let (acs, predicted) = torus_family(&f, &l, &s).unwrap();
        assert_eq!(predicted, 0);
        assert_eq!(
            measured_h_minus_oracle(&acs, &SolverParams::default()).unwrap(),
            0
        );
    }

    #[test]
    fn torus_family_rejects_norm_violation() {
        let chart = GridChart::unit(4).unwrap();
        let one = FormField::constant(chart, 0, &[1.0]);
        assert!(matches!(
            torus_family(&one, &one, &one),
            Err(Error::NormViolation(_))
        ));
    }

    #[test]
    fn h2_family_values() {
        let chart = GridChart::unit(8).unwrap();
        let (f, l, s) = h2_family(chart, 0.0, 0.0);
        assert!((f.comp(0)[0] - 1.0).abs() < 1e-15);
        assert_eq!(l.comp(0)[0], 0.0);
        assert_eq!(s.comp(0)[0], 0.0);
        let (f, l, s) = h2_family(chart, 1.0, 0.0);
        let r = 0.5_f64.sqrt();
        assert!((f.comp(0)[0] - r).abs() < 1e-15);
        assert!((l.comp(0)[0] - r).abs() < 1e-15);
        assert_eq!(s.comp(0)[0], 0.0);
        // Norm residual is zero identically for random parameters.
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let (k1, k2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (f, l, s) = h2_family(chart, k1, k2);
            let norm = 2.0 * f.comp(0)[0] * f.comp(0)[0]
                + 2.0 * (l.comp(0)[0] * l.comp(0)[0] + s.comp(0)[0] * s.comp(0)[0]);
            assert!((norm - 2.0).abs() < 1e-12);
            let (_, predicted) = torus_family(&f, &l, &s).unwrap();
            assert_eq!(predicted, 2);
        }
    }

    #[test]
    fn rank_span_examples() {
        let chart = GridChart::unit(8).unwrap();
        let zero = FormField::zeros(chart, 0);
        assert_eq!(rank_span(&[&zero, &zero], RANK_TOL).unwrap(), 0);
        let one = FormField::constant(chart, 0, &[1.0]);
        let x_dep = FormField::scalar_from_fn(chart, |x| 1.0 + (TAU * x[0]).sin());
        assert_eq!(rank_span(&[&one, &x_dep], RANK_TOL).unwrap(), 2);
        let sin = FormField::scalar_from_fn(chart, |x| (TAU * x[0]).sin());
        let scaled = sin.scale(3.0);
        assert_eq!(rank_span(&[&sin, &scaled], RANK_TOL).unwrap(), 1);
    }

    #[test]
    fn rank_span_invariant_under_recombination() {
        let chart = GridChart::unit(8).unwrap();
        let f1 = FormField::scalar_from_fn(chart, |x| (TAU * x[0]).sin());
        let f2 = FormField::scalar_from_fn(chart, |x| (TAU * x[1]).cos());
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..5 {
            let (a, b, c, d): (f64, f64, f64, f64) = (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            if (a * d - b * c).abs() < 0.1 {
                continue;
            }
            let g1 = f1.scale(a).add(&f2.scale(b));
            let g2 = f1.scale(c).add(&f2.scale(d));
            assert_eq!(rank_span(&[&g1, &g2], RANK_TOL).unwrap(), 2);
        }
    }

    #[test]
    fn intersection_dim_rejects_identical() {
        let chart = GridChart::unit(8).unwrap();
        let (g, j, _) = flat_reference(chart);
        let jm = j.neg();
        assert!(matches!(
            intersection_dim(&j, &jm, &g, &SolverParams::default()),
            Err(Error::IdenticalStructures)
        ));
    }

    #[test]
    fn intersection_dim_generic_pairs_bounded_by_one() {
        let chart = GridChart::unit(8).unwrap();
        let g = MetricField::flat(chart);
        let j_std = AcsField::standard(chart);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..3 {
            let a = rng.random_range(0.2..0.5);
            let p = rng.random_range(0.0..1.0);
            let l = FormField::scalar_from_fn(chart, |x| a * (TAU * (x[0] + p)).cos());
            let s = FormField::scalar_from_fn(chart, |x| a * (TAU * (x[1] + p)).sin());
            let mut f = FormField::zeros(chart, 0);
            for idx in 0..chart.num_points() {
                let lv = l.comp(0)[idx];
                let sv = s.comp(0)[idx];
                f.comp_mut(0)[idx] = (1.0 - lv * lv - sv * sv).sqrt();
            }
            let (acs, _) = torus_family(&f, &l, &s).unwrap();
            let dim = intersection_dim(&j_std, &acs, &g, &SolverParams::default()).unwrap();
            assert!(dim <= 1, "intersection dimension {dim} violates the bound");
        }
    }
}
