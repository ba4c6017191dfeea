//! The elliptic operator `psi -> (d delta psi)''` on J-anti-invariant
//! 2-forms, whose kernel consists of the closed anti-invariant forms. Its
//! numerically detected kernel dimension is `h^-_J`; `h^+_J` follows from
//! `h^+ + h^- = b_2`. A rank test inside the self-dual harmonic space serves
//! as an independent oracle for the same number.
//!
//! The operator is assembled matrix-free over the global two-component frame
//! `(phi, J phi)` of the anti-invariant bundle; the discrete operator is the
//! exact similarity-symmetrised normal form of `psi -> delta psi`, so its
//! kernel is exactly the discretely closed anti-invariant fields.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    ext_d, ext_d_transpose, hodge_star_field, hodge_star_field_transpose, l2_norm,
    laplacian, pointwise_inner, integrate_scalar,
};
use crate::error::{Error, Result};
use crate::field::{AcsField, FormField, MetricAux, MetricField, ScalarField};
use crate::grid::GridChart;
use crate::hodge::{pcg_vec, sd_harmonic_basis, subspace_smallest, L2Weights, SolverParams};
use crate::pointwise::{acs_from_form_with_tol, sd_part, TwoFormValue};
use crate::spectral::Fft4;

/// Pointwise J-anti-invariant part of a 2-form field.
pub fn anti_part_field(alpha: &FormField, j: &AcsField) -> FormField {
    assert_eq!(alpha.degree(), 2);
    let mut out = FormField::zeros(*alpha.chart(), 2);
    for idx in 0..alpha.chart().num_points() {
        let a = alpha.two_form_at(idx);
        let jv = j.value_at(idx);
        let (_, anti) = crate::pointwise::split_j(&a, &jv);
        out.set_two_form_at(idx, &anti);
    }
    out
}

/// Pointwise J-invariant part of a 2-form field.
pub fn invariant_part_field(alpha: &FormField, j: &AcsField) -> FormField {
    alpha.sub(&anti_part_field(alpha, j))
}

/// Sup-norm of the invariant component, as an anti-invariance defect.
pub fn anti_invariance_defect(alpha: &FormField, j: &AcsField) -> f64 {
    invariant_part_field(alpha, j).max_abs() / (1.0 + alpha.max_abs())
}

/// Pointwise `j_act` on an anti-invariant 2-form field.
pub fn j_act_field(beta: &FormField, j: &AcsField) -> Result<FormField> {
    let defect = anti_invariance_defect(beta, j);
    if defect > 1e-8 {
        return Err(Error::InputNotAntiInvariant {
            residual: defect,
            tol: 1e-8,
        });
    }
    let mut out = FormField::zeros(*beta.chart(), 2);
    for idx in 0..beta.chart().num_points() {
        let b = beta.two_form_at(idx);
        let jv = j.value_at(idx);
        out.set_two_form_at(idx, &crate::pointwise::j_act_unchecked(&b, &jv));
    }
    Ok(out)
}

/// A global smooth frame `(phi, J phi)` of the anti-invariant bundle,
/// both of pointwise square norm 2.
#[derive(Clone, Debug)]
pub struct AntiFrame {
    pub phi: FormField,
    pub j_phi: FormField,
}

fn two_form_inner_at(
    a: &TwoFormValue,
    b: &TwoFormValue,
    ginv: &nalgebra::Matrix4<f64>,
) -> f64 {
    use crate::field::INDEX_SETS;
    let mut s = 0.0;
    for (ii, iset) in INDEX_SETS[2].iter().enumerate() {
        for (kk, kset) in INDEX_SETS[2].iter().enumerate() {
            s += a.components()[ii]
                * crate::calculus::gram_minor(ginv, iset, kset)
                * b.components()[kk];
        }
    }
    s
}

/// Builds the global anti-invariant frame for a compatible pair `(g, J)` on a
/// grid whose metric has a constant self-dual bundle (flat, constant and
/// conformally constant metrics; the grid models used here).
///
/// The construction trivialises the self-dual bundle by three constant forms,
/// reads the twistor section of `J` as a unit 3-vector field `v`, and takes
/// the cross product with a constant axis kept uniformly transverse to `v`.
/// Degenerate cases are rejected, never patched pointwise.
pub fn anti_frame(g: &MetricField, j: &AcsField) -> Result<AntiFrame> {
    let chart = *g.chart();
    let aux = g.aux()?;
    let m = chart.num_points();
    // Constant self-dual trivialisation taken from the base-point metric.
    let g0 = g.value_at(0);
    let mut sigma: Vec<TwoFormValue> = Vec::new();
    for seed in [(0usize, 1usize), (0, 2), (0, 3)] {
        let raw = TwoFormValue::basis(seed.0, seed.1);
        let sd = sd_part(&raw, &g0)?;
        let n2 = crate::pointwise::norm_sq(&sd, &g0);
        if n2 < 0.1 {
            return Err(Error::FrameDegenerate(format!(
                "self-dual seed e{}^e{} degenerates",
                seed.0 + 1,
                seed.1 + 1
            )));
        }
        sigma.push(sd);
    }
    // The trivialisation must stay self-dual across the grid.
    for (idx, ginv) in aux.ginv.iter().enumerate().step_by((m / 64).max(1)) {
        let gx = g.value_at(idx);
        for s in &sigma {
            let star = crate::pointwise::hodge_star(s, &gx)?;
            let defect = star.sub(s).coeff_norm() / s.coeff_norm();
            if defect > 1e-8 {
                return Err(Error::FrameDegenerate(format!(
                    "self-dual bundle varies across the grid (defect {defect:.3e})"
                )));
            }
        }
        let _ = ginv;
    }
    let omega = j.fundamental_form(g)?;
    // Pointwise orthonormalisation of the trivialisation and coordinates of
    // the twistor section.
    let mut v = vec![[0.0_f64; 3]; m];
    let mut frames: Vec<[TwoFormValue; 3]> = Vec::with_capacity(m);
    for idx in 0..m {
        let ginv = &aux.ginv[idx];
        let mut e: Vec<TwoFormValue> = Vec::with_capacity(3);
        for s in &sigma {
            let mut w = *s;
            for prev in &e {
                let c = two_form_inner_at(&w, prev, ginv);
                w = w.sub(&prev.scale(c));
            }
            let n2 = two_form_inner_at(&w, &w, ginv);
            if n2 < 1e-12 {
                return Err(Error::FrameDegenerate(
                    "self-dual trivialisation degenerates pointwise".into(),
                ));
            }
            e.push(w.scale(1.0 / n2.sqrt()));
        }
        let om = omega.two_form_at(idx);
        for a in 0..3 {
            v[idx][a] = two_form_inner_at(&om, &e[a], ginv) / 2.0_f64.sqrt();
        }
        frames.push([e[0], e[1], e[2]]);
    }
    // A constant axis transverse to the section everywhere.
    let candidates: [[f64; 3]; 6] = [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.57735026919, 0.81649658092],
        [0.57735026919, 0.57735026919, 0.57735026919],
        [0.70710678119, -0.70710678119, 0.0],
    ];
    let mut axis = None;
    for cand in candidates {
        let worst = v
            .iter()
            .map(|vv| (vv[0] * cand[0] + vv[1] * cand[1] + vv[2] * cand[2]).abs())
            .fold(0.0_f64, f64::max);
        if worst <= 0.9 {
            axis = Some(cand);
            break;
        }
    }
    let axis = axis.ok_or_else(|| {
        Error::FrameDegenerate("no constant axis transverse to the twistor section".into())
    })?;
    let mut phi = FormField::zeros(chart, 2);
    for idx in 0..m {
        let vv = v[idx];
        let cross = [
            vv[1] * axis[2] - vv[2] * axis[1],
            vv[2] * axis[0] - vv[0] * axis[2],
            vv[0] * axis[1] - vv[1] * axis[0],
        ];
        let norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let mut p = TwoFormValue::zero();
        for a in 0..3 {
            p = p.add(&frames[idx][a].scale(2.0_f64.sqrt() * cross[a] / norm));
        }
        phi.set_two_form_at(idx, &p);
    }
    let j_phi = j_act_field(&phi, j)?;
    // Contract checks.
    let defect = anti_invariance_defect(&phi, j);
    if defect > 1e-8 {
        return Err(Error::FrameDegenerate(format!(
            "frame anti-invariance defect {defect:.3e}"
        )));
    }
    Ok(AntiFrame { phi, j_phi })
}

/// The operator `P(psi) = (d delta psi)''` applied to an anti-invariant
/// 2-form field.
pub fn p_apply(psi: &FormField, g: &MetricField, j: &AcsField) -> Result<FormField> {
    let defect = anti_invariance_defect(psi, j);
    if defect > 1e-8 {
        return Err(Error::InputNotAntiInvariant {
            residual: defect,
            tol: 1e-8,
        });
    }
    let aux = g.aux()?;
    let fft = Fft4::new(*psi.chart());
    let delta = crate::calculus::codiff(psi, &aux, &fft)?;
    let d_delta = ext_d(&delta, &fft)?;
    Ok(anti_part_field(&d_delta, j))
}

/// The same operator through the alternative expression
/// `P(psi) = Laplacian(psi)/2 - <Laplacian(psi), omega> omega / 4`,
/// valid since anti-invariant forms are self-dual and pointwise orthogonal
/// to the fundamental form.
pub fn p_apply_via_laplacian(
    psi: &FormField,
    g: &MetricField,
    j: &AcsField,
) -> Result<FormField> {
    let aux = g.aux()?;
    let fft = Fft4::new(*psi.chart());
    let omega = j.fundamental_form(g)?;
    let lap = laplacian(psi, &aux, &fft)?;
    let trace = pointwise_inner(&lap, &omega, &aux);
    let correction = omega.scale_pointwise(&trace).scale(0.25);
    Ok(lap.scale(0.5).sub(&correction))
}

/// The matrix-free symmetric realisation of `P` on frame coefficients.
///
/// Spectral differentiation maps the Nyquist modes to zero, which would hand
/// the discrete operator a spurious kernel of pure-Nyquist fields. A penalty
/// on the Nyquist content of the embedded 2-form pushes those artifacts to
/// the top of the spectrum; genuine kernel fields are smooth and carry no
/// Nyquist energy.
pub struct AntiInvariantOperator {
    chart: GridChart,
    fft: Fft4,
    aux: MetricAux,
    frame: AntiFrame,
    w1: L2Weights,
    m_minus_half: Vec<f64>,
    nyquist_penalty: std::cell::Cell<f64>,
}

impl AntiInvariantOperator {
    pub fn new(g: &MetricField, j: &AcsField) -> Result<Self> {
        let residual = j.compatibility_residual(g);
        if residual > 1e-8 {
            return Err(Error::IncompatiblePair {
                residual,
                tol: 1e-8,
            });
        }
        let chart = *g.chart();
        let aux = g.aux()?;
        let frame = anti_frame(g, j)?;
        let w1 = L2Weights::new(&chart, &aux, 1);
        let dv = chart.cell_volume();
        let m_minus_half: Vec<f64> = aux
            .sqrt_det
            .iter()
            .map(|rho| 1.0 / (2.0 * rho * dv).sqrt())
            .collect();
        Ok(Self {
            chart,
            fft: Fft4::new(chart),
            aux,
            frame,
            w1,
            m_minus_half,
            nyquist_penalty: std::cell::Cell::new(0.0),
        })
    }

    /// Zeroes every mode whose index hits the Nyquist plane on some axis.
    fn nyquist_part(&self, f: &FormField) -> FormField {
        let n = self.chart.resolution();
        let half = n / 2;
        let mut out = FormField::zeros(self.chart, f.degree());
        for c in 0..f.comps().len() {
            let mut data = self.fft.forward4(f.comp(c));
            for (idx, v) in data.iter_mut().enumerate() {
                let mi = self.chart.multi_index(idx);
                if !mi.iter().any(|m| *m == half) {
                    *v = rustfft::num_complex::Complex64::new(0.0, 0.0);
                }
            }
            let vals = self.fft.inverse4(data);
            out.comp_mut(c).copy_from_slice(&vals);
        }
        out
    }

    pub fn dim(&self) -> usize {
        2 * self.chart.num_points()
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    /// The anti-invariant 2-form field of a similarity-frame coefficient
    /// vector `v = M^{1/2} (p, q)`.
    pub fn field_from_vec(&self, v: &[f64]) -> FormField {
        let m = self.chart.num_points();
        let mut out = FormField::zeros(self.chart, 2);
        for c in 0..6 {
            let phi_c = self.frame.phi.comp(c);
            let jphi_c = self.frame.j_phi.comp(c);
            let target = out.comp_mut(c);
            for idx in 0..m {
                let p = v[idx] * self.m_minus_half[idx];
                let q = v[m + idx] * self.m_minus_half[idx];
                target[idx] = p * phi_c[idx] + q * jphi_c[idx];
            }
        }
        out
    }

    fn vec_from_field(&self, psi: &FormField) -> Vec<f64> {
        let m = self.chart.num_points();
        let mut out = vec![0.0; 2 * m];
        for c in 0..6 {
            let phi_c = self.frame.phi.comp(c);
            let jphi_c = self.frame.j_phi.comp(c);
            let src = psi.comp(c);
            for idx in 0..m {
                out[idx] += phi_c[idx] * src[idx];
                out[m + idx] += jphi_c[idx] * src[idx];
            }
        }
        for idx in 0..m {
            out[idx] *= self.m_minus_half[idx];
            out[m + idx] *= self.m_minus_half[idx];
        }
        out
    }

    /// Sets the penalty coefficient once the operator scale is known.
    pub fn set_nyquist_penalty(&self, coeff: f64) {
        self.nyquist_penalty.set(coeff);
    }

    /// One application of the symmetrised operator.
    ///
    /// The quadratic form is `|delta psi|^2_{L2} + c |Q psi|^2` with `Q` the
    /// Nyquist projection, so the operator is symmetric positive
    /// semidefinite with kernel the discretely closed anti-invariant fields
    /// of the resolvable band.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let psi = self.field_from_vec(v);
        // delta = -*' d *
        let s2 = hodge_star_field(&psi, &self.aux);
        let d3 = ext_d(&s2, &self.fft).expect("degree 2");
        let a = hodge_star_field(&d3, &self.aux).scale(-1.0);
        // weighted L2 on 1-forms
        let b = self.w1.apply_half(&self.w1.apply_half(&a));
        // transpose chain
        let t3 = hodge_star_field_transpose(&b, &self.aux);
        let t2 = ext_d_transpose(&t3, &self.fft);
        let c = hodge_star_field_transpose(&t2, &self.aux).scale(-1.0);
        let mut out = self.vec_from_field(&c);
        let pen = self.nyquist_penalty.get();
        if pen > 0.0 {
            let q = self.nyquist_part(&psi);
            let extra = self.vec_from_field(&q);
            for (o, e) in out.iter_mut().zip(extra.iter()) {
                *o += pen * e;
            }
        }
        out
    }

    /// Largest-eigenvalue estimate by power iteration.
    pub fn lambda_max(&self, iters: usize, seed: u64) -> f64 {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let av = self.apply(&v);
            let norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm
                / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = av.iter().map(|x| x / norm).collect();
        }
        lambda
    }
}

/// Eigensolver options for the kernel detection.
#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    pub block: usize,
    pub max_outer: usize,
    pub seed: u64,
    pub inner: SolverParams,
    /// Relative kernel threshold: eigenvalues below `rel_threshold *
    /// lambda_max` count as zero.
    pub rel_threshold: f64,
    /// Required separation between the zero cluster and the first nonzero
    /// eigenvalue.
    pub required_gap: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            block: 6,
            max_outer: 60,
            seed: 7,
            inner: SolverParams {
                tol: 1e-10,
                max_iter: 400,
            },
            rel_threshold: 1e-6,
            required_gap: 1e3,
        }
    }
}

/// Eigenvalue diagnostics of one kernel detection run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub gap_ratio: f64,
    pub tolerance: f64,
    pub resolution: usize,
    #[serde(skip)]
    pub lambda_max: f64,
    #[serde(skip)]
    pub ritz_residuals: Vec<f64>,
}

/// `h^-_J`: kernel dimension of `P`, with the eigenvalue evidence.
pub fn h_minus(g: &MetricField, j: &AcsField, opts: &EigOptions) -> Result<SpectralReport> {
    Ok(h_minus_detailed(g, j, opts)?.0)
}

/// Kernel detection returning the kernel representative fields as well.
pub fn h_minus_detailed(
    g: &MetricField,
    j: &AcsField,
    opts: &EigOptions,
) -> Result<(SpectralReport, Vec<FormField>)> {
    let op = AntiInvariantOperator::new(g, j)?;
    let lambda_max = op.lambda_max(12, opts.seed.wrapping_add(1));
    if lambda_max <= 0.0 {
        return Err(Error::SolverDivergence(
            "operator norm estimate vanished".into(),
        ));
    }
    // Penalise spurious Nyquist null modes to the top of the spectrum. The
    // coefficient makes a pure Nyquist field score about lambda_max.
    op.set_nyquist_penalty(lambda_max * op.chart().cell_volume());
    let sigma = 1e-3 * lambda_max;
    let chart = op.chart;
    let fft = Fft4::new(chart);
    let apply_a = |v: &[f64]| op.apply(v);
    let precond = |r: &[f64]| -> Vec<f64> {
        let m = chart.num_points();
        let mut out = vec![0.0; 2 * m];
        for half in 0..2 {
            let slice = &r[half * m..(half + 1) * m];
            let solved = fft.mode_multiply(slice, |k| {
                let k2 = k.iter().map(|x| x * x).sum::<f64>();
                1.0 / (0.5 * k2 + sigma)
            });
            out[half * m..(half + 1) * m].copy_from_slice(&solved);
        }
        out
    };
    // Inverse applications recur on slowly rotating subspace columns; a
    // round-robin warm start reuses the previous sweep's solution.
    let warm: std::cell::RefCell<Vec<Vec<f64>>> = std::cell::RefCell::new(Vec::new());
    let call_counter = std::cell::Cell::new(0usize);
    let apply_binv = |rhs: &[f64]| -> Result<Vec<f64>> {
        let shifted = |v: &[f64]| -> Vec<f64> {
            let mut av = apply_a(v);
            for (a, b) in av.iter_mut().zip(v.iter()) {
                *a += sigma * b;
            }
            av
        };
        let norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let slot = call_counter.get() % opts.block;
        call_counter.set(call_counter.get() + 1);
        let guess = warm.borrow().get(slot).cloned();
        let sol = crate::hodge::pcg_vec_from(
            &shifted,
            &precond,
            rhs,
            &opts.inner,
            1e-14 * norm,
            guess.as_deref(),
        )?;
        {
            let mut w = warm.borrow_mut();
            while w.len() <= slot {
                w.push(Vec::new());
            }
            w[slot] = sol.clone();
        }
        Ok(sol)
    };
    let (theta, vectors, residuals) =
        subspace_smallest(&apply_a, &apply_binv, op.dim(), opts.block, opts.max_outer, opts.seed)?;
    let threshold = opts.rel_threshold * lambda_max;
    let kernel_dim = theta.iter().filter(|t| **t < threshold).count();
    if kernel_dim == theta.len() {
        return Err(Error::GapUndetected {
            gap_ratio: 0.0,
            required: opts.required_gap,
        });
    }
    let gap_ratio = if kernel_dim == 0 {
        theta[0] / threshold
    } else {
        let zero_top = theta[kernel_dim - 1].abs().max(lambda_max * 1e-18);
        theta[kernel_dim] / zero_top
    };
    if kernel_dim > 0 && gap_ratio < opts.required_gap {
        return Err(Error::GapUndetected {
            gap_ratio,
            required: opts.required_gap,
        });
    }
    let aux = g.aux()?;
    let kernel_fields: Vec<FormField> = vectors[..kernel_dim]
        .iter()
        .map(|v| {
            let f = op.field_from_vec(v);
            let n = l2_norm(&f, &aux).max(1e-300);
            f.scale(1.0 / n)
        })
        .collect();
    let report = SpectralReport {
        eigenvalues: theta,
        kernel_dim,
        gap_ratio,
        tolerance: threshold,
        resolution: chart.resolution(),
        lambda_max,
        ritz_residuals: residuals,
    };
    Ok((report, kernel_fields))
}

/// Independent determination of `h^-_J`: the dimension of the subspace of
/// self-dual harmonic fields pointwise orthogonal to the fundamental form,
/// by a least-squares rank test.
pub fn h_minus_rank_test(
    g: &MetricField,
    j: &AcsField,
    params: &SolverParams,
) -> Result<usize> {
    let sd = sd_harmonic_basis(g, params)?;
    let omega = j.fundamental_form(g)?;
    let aux = g.aux()?;
    let traces: Vec<ScalarField> = sd
        .iter()
        .map(|psi| pointwise_inner(psi, &omega, &aux))
        .collect();
    let m = DMatrix::from_fn(3, 3, |r, c| {
        integrate_scalar(&traces[r].scale_pointwise(&traces[c]), &aux)
    });
    let eig = (0.5 * (&m + m.transpose())).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, b| a.max(*b));
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|v| **v < 1e-8 * max)
        .count())
}

/// `h^+_J = b_2 - h^-_J` on the torus (`b_2 = 6`).
pub fn h_plus(g: &MetricField, j: &AcsField, opts: &EigOptions) -> Result<usize> {
    let report = h_minus(g, j, opts)?;
    Ok(6 - report.kernel_dim)
}

/// The taming criterion `b^+ > h^-_J`, reported as the difference `b^+ - h^-`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TameIndicator {
    pub difference: i64,
    pub met: bool,
    /// True when `J` is detectably non-integrable, where the criterion is
    /// only a heuristic.
    pub heuristic: bool,
}

pub fn tame_indicator(
    g: &MetricField,
    j: &AcsField,
    opts: &EigOptions,
) -> Result<TameIndicator> {
    let params = SolverParams::default();
    let b_plus = sd_harmonic_basis(g, params_ref(&params))?.len() as i64;
    let h = h_minus(g, j, opts)?.kernel_dim as i64;
    let nij = crate::hermitian::nijenhuis_field(j)?;
    Ok(TameIndicator {
        difference: b_plus - h,
        met: b_plus - h >= 1,
        heuristic: nij.sup_norm > 1e-8,
    })
}

fn params_ref(p: &SolverParams) -> &SolverParams {
    p
}

/// A sampled path of almost complex structures.
pub struct PathOfAcs {
    pub samples: Vec<f64>,
    pub rule: Box<dyn Fn(f64) -> Result<AcsField>>,
}

impl PathOfAcs {
    pub fn new(samples: Vec<f64>, rule: impl Fn(f64) -> Result<AcsField> + 'static) -> Self {
        Self {
            samples,
            rule: Box::new(rule),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub kernel_dim: usize,
    pub gap_ratio: f64,
    /// Diagnostic flag: `h^-` increased relative to the previous sample.
    /// Discrete samples cannot prove or refute semi-continuity; the flag
    /// marks where the interesting jumps sit.
    pub upward_jump: bool,
}

/// Scans `h^-` along a path, averaging the base metric into compatibility at
/// every sample.
pub fn path_scan(
    path: &PathOfAcs,
    g_base: &MetricField,
    opts: &EigOptions,
) -> Result<Vec<PathSample>> {
    let mut out: Vec<PathSample> = Vec::with_capacity(path.samples.len());
    for &t in &path.samples {
        let j = (path.rule)(t)?;
        let g = g_base.average_with(&j);
        let report = h_minus(&g, &j, opts)?;
        let upward_jump = out
            .last()
            .map(|prev| report.kernel_dim > prev.kernel_dim)
            .unwrap_or(false);
        out.push(PathSample {
            t,
            kernel_dim: report.kernel_dim,
            gap_ratio: report.gap_ratio,
            upward_jump,
        });
    }
    Ok(out)
}

/// Residuals of the three kernel characterisations for a candidate field:
/// closedness, self-duality and pointwise orthogonality to the fundamental
/// form (all relative to the L2 norm of the field).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    pub closed: f64,
    pub self_dual: f64,
    pub pointwise_orth: f64,
}

pub fn kernel_diagnostics(
    psi: &FormField,
    g: &MetricField,
    j: &AcsField,
) -> Result<KernelDiagnostics> {
    let aux = g.aux()?;
    let fft = Fft4::new(*psi.chart());
    let omega = j.fundamental_form(g)?;
    let scale = l2_norm(psi, &aux).max(1e-300);
    let closed = l2_norm(&ext_d(psi, &fft)?, &aux) / scale;
    let star = hodge_star_field(psi, &aux);
    let self_dual = l2_norm(&star.sub(psi), &aux) / scale;
    let trace = pointwise_inner(psi, &omega, &aux);
    let pointwise_orth = trace
        .comp(0)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        / scale;
    Ok(KernelDiagnostics {
        closed,
        self_dual,
        pointwise_orth,
    })
}

/// Constructs the standard flat Kaehler reference data on a chart.
pub fn flat_reference(chart: GridChart) -> (MetricField, AcsField, FormField) {
    let g = MetricField::flat(chart);
    let j = AcsField::standard(chart);
    let omega = FormField::constant_two_form(
        chart,
        &TwoFormValue::basis(0, 1).add(&TwoFormValue::basis(2, 3)),
    );
    (g, j, omega)
}

/// Builds the almost complex structure field of a self-dual 2-form field of
/// pointwise norm 2 over `g` (the twistor correspondence, pointwise).
pub fn acs_field_from_form(g: &MetricField, omega_tilde: &FormField) -> Result<AcsField> {
    let chart = *g.chart();
    let mut values = Vec::with_capacity(chart.num_points());
    for idx in 0..chart.num_points() {
        let gv = g.value_at(idx);
        let ov = omega_tilde.two_form_at(idx);
        let jv = acs_from_form_with_tol(&gv, &ov, 1e-8)?;
        values.push(*jv.matrix());
    }
    AcsField::from_values(chart, values)
}
