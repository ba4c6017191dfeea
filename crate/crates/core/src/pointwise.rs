//! Pointwise (single tangent space) linear algebra of metrics, almost complex
//! structures and 2-forms in dimension 4.
//!
//! Everything here is exact linear algebra on one fiber: the splitting of
//! 2-forms into J-invariant and J-anti-invariant parts, the Hodge star and the
//! self-dual/anti-self-dual splitting, the twistor-fiber correspondence
//! between unit-norm self-dual forms and compatible almost complex structures,
//! and the metric averaging that turns an arbitrary metric into a compatible
//! one. The grid modules apply these maps at every node.
//!
//! Conventions, fixed once for the whole crate:
//! * the reference volume form is `e1^e2^e3^e4`; every almost complex
//!   structure must induce this orientation (positive Pfaffian of its
//!   fundamental form);
//! * `|omega|^2 = 2` for a fundamental form, i.e. each unit `e^i ^ e^j` has
//!   norm 1;
//! * `J` acts on anti-invariant forms by `(J beta)(X, Y) = -beta(JX, Y)`.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// Relative tolerance used for algebraic identity checks on exact inputs.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Ordered index pairs labelling the six components of a 2-form.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Component index of the ordered pair `(i, j)`, `i < j`.
pub fn pair_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 1) => 0,
        (0, 2) => 1,
        (0, 3) => 2,
        (1, 2) => 3,
        (1, 3) => 4,
        (2, 3) => 5,
        _ => panic!("not an ordered pair: ({i}, {j})"),
    }
}

/// A positive definite symmetric bilinear form on one tangent space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    m: Matrix4<f64>,
}

impl MetricValue {
    /// Builds a metric value, checking symmetry and positive definiteness.
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let asym = (m - m.transpose()).norm();
        if asym > DEFAULT_TOL * (1.0 + m.norm()) {
            return Err(Error::DegenerateMetric(format!(
                "not symmetric (defect {asym:.3e})"
            )));
        }
        let sym = 0.5 * (m + m.transpose());
        let eig = sym.symmetric_eigenvalues();
        let min = eig.min();
        if min <= 0.0 {
            return Err(Error::DegenerateMetric(format!(
                "eigenvalue {min:.3e} <= 0"
            )));
        }
        Ok(Self { m: sym })
    }

    pub fn euclidean() -> Self {
        Self {
            m: Matrix4::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Matrix4<f64> {
        self.m.try_inverse().expect("positive definite")
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// `sqrt(det g)`, the volume density.
    pub fn vol_density(&self) -> f64 {
        self.det().sqrt()
    }

    pub fn apply(&self, x: &Vector4<f64>, y: &Vector4<f64>) -> f64 {
        (self.m * y).dot(x)
    }
}

/// An almost complex structure on one tangent space: `J * J = -Id`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcsValue {
    m: Matrix4<f64>,
}

impl AcsValue {
    /// Builds an almost complex structure value, checking `J^2 = -Id`.
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let defect = (m * m + Matrix4::identity()).norm();
        if defect > DEFAULT_TOL * (1.0 + m.norm_squared()) {
            return Err(Error::NotOnTwistorFiber(format!(
                "J^2 + Id has norm {defect:.3e}"
            )));
        }
        Ok(Self { m })
    }

    /// The standard structure `J e1 = e2, J e3 = e4`.
    pub fn standard() -> Self {
        let mut m = Matrix4::zeros();
        m[(1, 0)] = 1.0;
        m[(0, 1)] = -1.0;
        m[(3, 2)] = 1.0;
        m[(2, 3)] = -1.0;
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn neg(&self) -> Self {
        Self { m: -self.m }
    }

    pub fn apply(&self, x: &Vector4<f64>) -> Vector4<f64> {
        self.m * x
    }

    /// Residual of the compatibility condition `g(J., J.) = g(.,.)`.
    pub fn compatibility_residual(&self, g: &MetricValue) -> f64 {
        let gm = g.matrix();
        let pulled = self.m.transpose() * gm * self.m;
        (pulled - gm).norm() / gm.norm()
    }

    pub fn is_compatible(&self, g: &MetricValue, tol: f64) -> bool {
        self.compatibility_residual(g) <= tol
    }
}

/// A 2-form on one tangent space, stored as its six ordered components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoFormValue {
    c: [f64; 6],
}

impl TwoFormValue {
    pub fn new(c: [f64; 6]) -> Self {
        Self { c }
    }

    pub fn zero() -> Self {
        Self { c: [0.0; 6] }
    }

    /// The form `e^i ^ e^j` for `i < j`.
    pub fn basis(i: usize, j: usize) -> Self {
        let mut c = [0.0; 6];
        c[pair_index(i, j)] = 1.0;
        Self { c }
    }

    pub fn components(&self) -> &[f64; 6] {
        &self.c
    }

    pub fn component(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Less => self.c[pair_index(i, j)],
            Greater => -self.c[pair_index(j, i)],
            Equal => 0.0,
        }
    }

    /// The antisymmetric matrix `A` with `A[i][j] = alpha(e_i, e_j)`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            m[(i, j)] = self.c[k];
            m[(j, i)] = -self.c[k];
        }
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let mut c = [0.0; 6];
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            c[k] = 0.5 * (m[(i, j)] - m[(j, i)]);
        }
        Self { c }
    }

    pub fn apply(&self, x: &Vector4<f64>, y: &Vector4<f64>) -> f64 {
        (self.matrix() * y).dot(x)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        for v in &mut c {
            *v *= s;
        }
        Self { c }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut c = self.c;
        for (v, w) in c.iter_mut().zip(other.c.iter()) {
            *v += w;
        }
        Self { c }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Pullback `alpha(J., J.)`, the involution defining the type splitting.
    pub fn pullback(&self, j: &AcsValue) -> Self {
        let a = self.matrix();
        let jm = j.matrix();
        Self::from_matrix(&(jm.transpose() * a * jm))
    }

    /// Euclidean-coefficient norm, used only for relative residuals.
    pub fn coeff_norm(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Pfaffian with respect to the reference volume form:
    /// `alpha ^ alpha = 2 Pf(alpha) e1234`.
    pub fn pfaffian(&self) -> f64 {
        self.c[0] * self.c[5] - self.c[1] * self.c[4] + self.c[2] * self.c[3]
    }
}

/// Inner product of 2-forms induced by `g`, in the convention where each
/// unit `e^i ^ e^j` of an orthonormal coframe has norm 1.
pub fn inner(a: &TwoFormValue, b: &TwoFormValue, g: &MetricValue) -> f64 {
    let ginv = g.inverse();
    let am = a.matrix();
    let bm = b.matrix();
    // <a,b> = 1/2 tr(g^-1 A g^-1 B^T)
    0.5 * (ginv * am * ginv * bm.transpose()).trace()
}

pub fn norm_sq(a: &TwoFormValue, g: &MetricValue) -> f64 {
    inner(a, a, g)
}

/// Splits a 2-form into its J-invariant and J-anti-invariant parts.
///
/// The parts recombine to the input, `inv(J., J.) = inv` and
/// `anti(J., J.) = -anti`.
pub fn split_j(alpha: &TwoFormValue, j: &AcsValue) -> (TwoFormValue, TwoFormValue) {
    let pulled = alpha.pullback(j);
    let inv = alpha.add(&pulled).scale(0.5);
    let anti = alpha.sub(&inv);
    (inv, anti)
}

/// Residual measuring the failure of `beta` to be J-anti-invariant.
pub fn anti_invariance_residual(beta: &TwoFormValue, j: &AcsValue) -> f64 {
    let (inv, _) = split_j(beta, j);
    inv.coeff_norm() / (1.0 + beta.coeff_norm())
}

/// The complex structure of the anti-invariant bundle:
/// `(J beta)(X, Y) = -beta(JX, Y)`.
///
/// Squares to `-Id` on anti-invariant forms.
pub fn j_act(beta: &TwoFormValue, j: &AcsValue) -> Result<TwoFormValue> {
    j_act_with_tol(beta, j, DEFAULT_TOL)
}

pub fn j_act_with_tol(beta: &TwoFormValue, j: &AcsValue, tol: f64) -> Result<TwoFormValue> {
    let residual = anti_invariance_residual(beta, j);
    if residual > tol {
        return Err(Error::InputNotAntiInvariant { residual, tol });
    }
    Ok(j_act_unchecked(beta, j))
}

/// `j_act` without the anti-invariance precondition check. The output is only
/// meaningful (antisymmetric) on anti-invariant input.
pub fn j_act_unchecked(beta: &TwoFormValue, j: &AcsValue) -> TwoFormValue {
    let b = beta.matrix();
    let jm = j.matrix();
    // (J beta)_{xy} = -beta(Jx, y): rows transform.
    let m = -(jm.transpose() * b);
    TwoFormValue::from_matrix(&m)
}

/// Hodge star on 2-forms for the metric `g` and the reference orientation.
pub fn hodge_star(alpha: &TwoFormValue, g: &MetricValue) -> Result<TwoFormValue> {
    let det = g.det();
    if det <= 0.0 {
        return Err(Error::DegenerateMetric(format!("det g = {det:.3e}")));
    }
    let ginv = g.inverse();
    let rho = det.sqrt();
    let mut out = [0.0; 6];
    for (jj, &(j0, j1)) in PAIRS.iter().enumerate() {
        // K = complement of J in {0,1,2,3}, with the sign of (K, J).
        let comp: Vec<usize> = (0..4).filter(|t| *t != j0 && *t != j1).collect();
        let (k0, k1) = (comp[0], comp[1]);
        let sign = perm_sign(&[k0, k1, j0, j1]);
        // alpha^{k0 k1} raised with g^{-1}: sum over ordered pairs L.
        let mut raised = 0.0;
        for (ll, &(l0, l1)) in PAIRS.iter().enumerate() {
            let minor = ginv[(k0, l0)] * ginv[(k1, l1)] - ginv[(k0, l1)] * ginv[(k1, l0)];
            raised += minor * alpha.components()[ll];
        }
        out[jj] = rho * sign * raised;
    }
    Ok(TwoFormValue::new(out))
}

/// Sign of the permutation taking `(0,1,2,3)` to `p`; zero if not a permutation.
pub fn perm_sign(p: &[usize]) -> f64 {
    let mut sign = 1.0;
    for a in 0..p.len() {
        for b in (a + 1)..p.len() {
            if p[a] == p[b] {
                return 0.0;
            }
            if p[a] > p[b] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Self-dual part `(alpha + *alpha)/2`.
pub fn sd_part(alpha: &TwoFormValue, g: &MetricValue) -> Result<TwoFormValue> {
    Ok(alpha.add(&hodge_star(alpha, g)?).scale(0.5))
}

/// Fundamental form `omega(.,.) = g(J., .)` of a compatible pair.
pub fn fundamental_form(g: &MetricValue, j: &AcsValue) -> Result<TwoFormValue> {
    fundamental_form_with_tol(g, j, DEFAULT_TOL)
}

pub fn fundamental_form_with_tol(
    g: &MetricValue,
    j: &AcsValue,
    tol: f64,
) -> Result<TwoFormValue> {
    let residual = j.compatibility_residual(g);
    if residual > tol {
        return Err(Error::IncompatiblePair { residual, tol });
    }
    let m = j.matrix().transpose() * g.matrix();
    Ok(TwoFormValue::from_matrix(&m))
}

/// Recovers the almost complex structure from a point of the twistor fiber:
/// a g-self-dual 2-form with `|omega|^2_g = 2`.
///
/// Inverse of [`fundamental_form`].
pub fn acs_from_form(g: &MetricValue, omega_tilde: &TwoFormValue) -> Result<AcsValue> {
    acs_from_form_with_tol(g, omega_tilde, DEFAULT_TOL)
}

pub fn acs_from_form_with_tol(
    g: &MetricValue,
    omega_tilde: &TwoFormValue,
    tol: f64,
) -> Result<AcsValue> {
    let n2 = norm_sq(omega_tilde, g);
    if (n2 - 2.0).abs() > tol * 2.0 {
        return Err(Error::NotOnTwistorFiber(format!(
            "|omega|^2 = {n2:.12} != 2"
        )));
    }
    let star = hodge_star(omega_tilde, g)?;
    let sd_defect = star.sub(omega_tilde).coeff_norm() / omega_tilde.coeff_norm();
    if sd_defect > tol {
        return Err(Error::NotOnTwistorFiber(format!(
            "self-duality defect {sd_defect:.3e}"
        )));
    }
    // omega = J^T g  =>  J = g^-1 omega^T = -g^-1 omega.
    let jm = -(g.inverse() * omega_tilde.matrix());
    AcsValue::new(jm)
}

/// Averages `g` over `J`: `g_J(.,.) = (g(.,.) + g(J., J.)) / 2`.
///
/// The result is J-compatible and positive definite, and fixes `g` when the
/// pair is already compatible.
pub fn average_metric(g: &MetricValue, j: &AcsValue) -> MetricValue {
    let gm = g.matrix();
    let jm = j.matrix();
    let avg = 0.5 * (gm + jm.transpose() * gm * jm);
    MetricValue::new(avg).expect("average of a metric is a metric")
}

/// Orthogonal bases adapted to a compatible pair `(g, J)`:
/// the fundamental form, a basis of the anti-invariant bundle and a basis of
/// the anti-self-dual bundle, all of pointwise square norm 2.
#[derive(Clone, Debug)]
pub struct SplitBasis {
    pub omega: TwoFormValue,
    pub minus_basis: [TwoFormValue; 2],
    pub asd_basis: [TwoFormValue; 3],
}

impl SplitBasis {
    /// Builds the adapted basis from an orthonormal frame
    /// `(u1, J u1, u3, J u3)` seeded by `e1` and `e3`.
    pub fn adapted(g: &MetricValue, j: &AcsValue) -> Result<Self> {
        let residual = j.compatibility_residual(g);
        if residual > DEFAULT_TOL {
            return Err(Error::IncompatiblePair {
                residual,
                tol: DEFAULT_TOL,
            });
        }
        let e1 = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let e3 = Vector4::new(0.0, 0.0, 1.0, 0.0);
        let u1 = &e1 / g.apply(&e1, &e1).sqrt();
        let u2 = j.apply(&u1);
        // Project the seed for the second complex line off span(u1, u2).
        let mut v = e3;
        v -= u1 * g.apply(&v, &u1);
        v -= u2 * g.apply(&v, &u2);
        let n2 = g.apply(&v, &v);
        if n2 < 1e-8 {
            return Err(Error::FrameDegenerate(format!(
                "residual norm^2 of the frame seed is {n2:.3e}"
            )));
        }
        let u3 = v / n2.sqrt();
        let u4 = j.apply(&u3);
        let frame = [u1, u2, u3, u4];
        // Dual coframe theta^i = g(u_i, .).
        let theta: Vec<Vector4<f64>> = frame.iter().map(|u| g.matrix() * u).collect();
        let wedge = |a: usize, b: usize| -> TwoFormValue {
            let m = theta[a] * theta[b].transpose() - theta[b] * theta[a].transpose();
            TwoFormValue::from_matrix(&m)
        };
        let omega = wedge(0, 1).add(&wedge(2, 3));
        let phi = wedge(0, 2).sub(&wedge(1, 3));
        let jphi = wedge(0, 3).add(&wedge(1, 2));
        let asd = [
            wedge(0, 1).sub(&wedge(2, 3)),
            wedge(0, 2).add(&wedge(1, 3)),
            wedge(0, 3).sub(&wedge(1, 2)),
        ];
        Ok(Self {
            omega,
            minus_basis: [phi, jphi],
            asd_basis: asd,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_metric(rng: &mut StdRng) -> MetricValue {
        let a = Matrix4::from_fn(|_, _| rng.random_range(-0.5..0.5));
        MetricValue::new(a.transpose() * a + Matrix4::identity() * 2.0).unwrap()
    }

    fn random_two_form(rng: &mut StdRng) -> TwoFormValue {
        TwoFormValue::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
    }

    /// A random g-compatible structure through the twistor fiber over g.
    fn random_compatible_acs(rng: &mut StdRng, g: &MetricValue) -> AcsValue {
        loop {
            let raw = random_two_form(rng);
            let sd = sd_part(&raw, g).unwrap();
            let n2 = norm_sq(&sd, g);
            if n2 < 1e-3 {
                continue;
            }
            let omega = sd.scale((2.0 / n2).sqrt());
            return acs_from_form(g, &omega).unwrap();
        }
    }

    #[test]
    fn split_fundamental_form_is_invariant() {
        let g = MetricValue::euclidean();
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        let (inv, anti) = split_j(&omega, &j);
        assert!(inv.sub(&omega).coeff_norm() < 1e-14);
        assert!(anti.coeff_norm() < 1e-14);
    }

    #[test]
    fn split_e13_standard() {
        let j = AcsValue::standard();
        let alpha = TwoFormValue::basis(0, 2);
        let (inv, anti) = split_j(&alpha, &j);
        let expect_inv = TwoFormValue::basis(0, 2).add(&TwoFormValue::basis(1, 3)).scale(0.5);
        let expect_anti = TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3)).scale(0.5);
        assert!(inv.sub(&expect_inv).coeff_norm() < 1e-15);
        assert!(anti.sub(&expect_anti).coeff_norm() < 1e-15);
    }

    #[test]
    fn split_recombines_and_is_orthogonal() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &g);
            let alpha = random_two_form(&mut rng);
            let (inv, anti) = split_j(&alpha, &j);
            assert!(inv.add(&anti).sub(&alpha).coeff_norm() < 1e-12);
            // Idempotent.
            let (inv2, anti_of_inv) = split_j(&inv, &j);
            assert!(inv2.sub(&inv).coeff_norm() < 1e-12);
            assert!(anti_of_inv.coeff_norm() < 1e-12);
            // Orthogonal in the g-inner product.
            assert!(inner(&inv, &anti, &g).abs() < 1e-11);
        }
    }

    #[test]
    fn j_act_matches_coordinate_example() {
        let j = AcsValue::standard();
        let beta = TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3));
        let out = j_act(&beta, &j).unwrap();
        let expect = TwoFormValue::basis(0, 3).add(&TwoFormValue::basis(1, 2));
        assert!(out.sub(&expect).coeff_norm() < 1e-15);
    }

    #[test]
    fn j_act_squares_to_minus_identity() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &g);
            let raw = random_two_form(&mut rng);
            let (_, beta) = split_j(&raw, &j);
            let twice = j_act(&j_act(&beta, &j).unwrap(), &j).unwrap();
            assert!(twice.add(&beta).coeff_norm() < 1e-11 * (1.0 + beta.coeff_norm()));
            // g-isometry of the anti-invariant bundle.
            let jb = j_act(&beta, &j).unwrap();
            assert!((norm_sq(&jb, &g) - norm_sq(&beta, &g)).abs() < 1e-10);
        }
    }

    #[test]
    fn j_act_rejects_invariant_input() {
        let j = AcsValue::standard();
        let omega = TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3));
        assert!(matches!(
            j_act(&omega, &j),
            Err(Error::InputNotAntiInvariant { .. })
        ));
    }

    #[test]
    fn j_act_of_zero_is_zero() {
        let j = AcsValue::standard();
        let out = j_act(&TwoFormValue::zero(), &j).unwrap();
        assert_eq!(out.coeff_norm(), 0.0);
    }

    #[test]
    fn star_flat_examples() {
        let g = MetricValue::euclidean();
        let a = hodge_star(&TwoFormValue::basis(0, 1), &g).unwrap();
        assert!(a.sub(&TwoFormValue::basis(2, 3)).coeff_norm() < 1e-15);
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        let so = hodge_star(&omega, &g).unwrap();
        assert!(so.sub(&omega).coeff_norm() < 1e-14);
    }

    #[test]
    fn star_is_an_involutive_isometry() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_metric(&mut rng);
            let alpha = random_two_form(&mut rng);
            let s = hodge_star(&alpha, &g).unwrap();
            let ss = hodge_star(&s, &g).unwrap();
            assert!(ss.sub(&alpha).coeff_norm() < 1e-11 * (1.0 + alpha.coeff_norm()));
            assert!((inner(&s, &s, &g) - inner(&alpha, &alpha, &g)).abs() < 1e-10);
        }
    }

    #[test]
    fn fundamental_form_flat() {
        let g = MetricValue::euclidean();
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        let expect = TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3));
        assert!(omega.sub(&expect).coeff_norm() < 1e-15);
        assert!((norm_sq(&omega, &g) - 2.0).abs() < 1e-14);
        let neg = fundamental_form(&g, &j.neg()).unwrap();
        assert!(neg.add(&expect).coeff_norm() < 1e-15);
    }

    #[test]
    fn fundamental_form_norm_and_duality_random() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &g);
            let omega = fundamental_form(&g, &j).unwrap();
            assert!((norm_sq(&omega, &g) - 2.0).abs() < 1e-10);
            let star = hodge_star(&omega, &g).unwrap();
            assert!(star.sub(&omega).coeff_norm() < 1e-10);
            let (_, anti) = split_j(&omega, &j);
            assert!(anti.coeff_norm() < 1e-11);
        }
    }

    #[test]
    fn fundamental_form_rejects_incompatible() {
        let g = MetricValue::new(Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 1.0, 1.0)))
            .unwrap();
        let j = AcsValue::standard();
        assert!(matches!(
            fundamental_form(&g, &j),
            Err(Error::IncompatiblePair { .. })
        ));
    }

    #[test]
    fn acs_from_form_round_trip() {
        let g = MetricValue::euclidean();
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        let back = acs_from_form(&g, &omega).unwrap();
        assert!((back.matrix() - j.matrix()).norm() < 1e-14);
        let back_neg = acs_from_form(&g, &omega.scale(-1.0)).unwrap();
        assert!((back_neg.matrix() + j.matrix()).norm() < 1e-14);
    }

    #[test]
    fn acs_from_form_off_axis_fiber_point() {
        let g = MetricValue::euclidean();
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        let beta = TwoFormValue::basis(0, 2).sub(&TwoFormValue::basis(1, 3));
        let mix = omega.add(&beta).scale(1.0 / 2.0_f64.sqrt());
        assert!((norm_sq(&mix, &g) - 2.0).abs() < 1e-12);
        let jt = acs_from_form(&g, &mix).unwrap();
        let sq = jt.matrix() * jt.matrix() + Matrix4::identity();
        assert!(sq.norm() < 1e-12);
        assert!(jt.compatibility_residual(&g) < 1e-12);
        let back = fundamental_form(&g, &jt).unwrap();
        assert!(back.sub(&mix).coeff_norm() < 1e-12);
    }

    #[test]
    fn acs_from_form_rejects_off_fiber_input() {
        let g = MetricValue::euclidean();
        // Anti-self-dual: wrong orientation side of the twistor space.
        let asd = TwoFormValue::basis(0, 1).sub(&TwoFormValue::basis(2, 3));
        assert!(matches!(
            acs_from_form(&g, &asd),
            Err(Error::NotOnTwistorFiber(_))
        ));
        // Wrong norm.
        let j = AcsValue::standard();
        let omega = fundamental_form(&g, &j).unwrap();
        assert!(matches!(
            acs_from_form(&g, &omega.scale(1.1)),
            Err(Error::NotOnTwistorFiber(_))
        ));
    }

    #[test]
    fn average_metric_examples() {
        let j = AcsValue::standard();
        let g = MetricValue::new(Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 1.0, 1.0)))
            .unwrap();
        let avg = average_metric(&g, &j);
        let expect = Matrix4::from_diagonal(&Vector4::new(1.5, 1.5, 1.0, 1.0));
        assert!((avg.matrix() - expect).norm() < 1e-14);
        // Fixed point on a compatible metric.
        let flat = MetricValue::euclidean();
        let fixed = average_metric(&flat, &j);
        assert!((fixed.matrix() - flat.matrix()).norm() < 1e-15);
    }

    #[test]
    fn average_metric_is_compatible() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &MetricValue::euclidean());
            let avg = average_metric(&g, &j);
            assert!(j.compatibility_residual(&avg) < 1e-12);
        }
    }

    #[test]
    fn adapted_basis_spans_and_normalises() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..10 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &g);
            let basis = SplitBasis::adapted(&g, &j).unwrap();
            let omega = fundamental_form(&g, &j).unwrap();
            assert!(basis.omega.sub(&omega).coeff_norm() < 1e-10);
            let mut all = vec![basis.omega];
            all.extend_from_slice(&basis.minus_basis);
            all.extend_from_slice(&basis.asd_basis);
            for (a, fa) in all.iter().enumerate() {
                assert!((norm_sq(fa, &g) - 2.0).abs() < 1e-10, "norm of entry {a}");
                for fb in all.iter().skip(a + 1) {
                    assert!(inner(fa, fb, &g).abs() < 1e-10);
                }
            }
            // Anti-invariant entries are anti-invariant and self-dual.
            for b in &basis.minus_basis {
                assert!(anti_invariance_residual(b, &j) < 1e-10);
                let s = hodge_star(b, &g).unwrap();
                assert!(s.sub(b).coeff_norm() < 1e-9);
            }
            // ASD entries are anti-self-dual.
            for b in &basis.asd_basis {
                let s = hodge_star(b, &g).unwrap();
                assert!(s.add(b).coeff_norm() < 1e-9);
            }
        }
    }

    #[test]
    fn invariant_plus_span_decomposition() {
        // Lambda^+_J = span(omega) + Lambda^-_g: the invariant projection of a
        // random form agrees with its (omega-component + ASD-part).
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..10 {
            let g = random_metric(&mut rng);
            let j = random_compatible_acs(&mut rng, &g);
            let basis = SplitBasis::adapted(&g, &j).unwrap();
            let alpha = random_two_form(&mut rng);
            let (inv, _) = split_j(&alpha, &j);
            let omega_part = basis.omega.scale(inner(&alpha, &basis.omega, &g) / 2.0);
            let mut asd_part = TwoFormValue::zero();
            for b in &basis.asd_basis {
                asd_part = asd_part.add(&b.scale(inner(&alpha, b, &g) / 2.0));
            }
            assert!(inv.sub(&omega_part.add(&asd_part)).coeff_norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn prop_split_idempotent(c in proptest::array::uniform6(-10.0f64..10.0)) {
            let j = AcsValue::standard();
            let alpha = TwoFormValue::new(c);
            let (inv, anti) = split_j(&alpha, &j);
            prop_assert!(inv.add(&anti).sub(&alpha).coeff_norm() < 1e-12 * (1.0 + alpha.coeff_norm()));
            let (inv2, rest) = split_j(&inv, &j);
            prop_assert!(inv2.sub(&inv).coeff_norm() < 1e-12 * (1.0 + alpha.coeff_norm()));
            prop_assert!(rest.coeff_norm() < 1e-12 * (1.0 + alpha.coeff_norm()));
        }

        #[test]
        fn prop_star_isometry_flat(c in proptest::array::uniform6(-10.0f64..10.0)) {
            let g = MetricValue::euclidean();
            let alpha = TwoFormValue::new(c);
            let s = hodge_star(&alpha, &g).unwrap();
            prop_assert!((inner(&s, &s, &g) - inner(&alpha, &alpha, &g)).abs()
                < 1e-12 * (1.0 + inner(&alpha, &alpha, &g)));
        }
    }
}
