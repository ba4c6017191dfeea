//! Hodge theory on the discrete torus: a preconditioned CG solver for the
//! (symmetrised) least-squares potentials, the L2-orthogonal decomposition of
//! 2-forms, and harmonic bases with their intersection form.

use nalgebra::DMatrix;

use crate::calculus::{
    ext_d, ext_d_transpose, hodge_star_field, integrate_wedge, l2_inner, l2_norm,
};
use crate::error::{Error, Result};
use crate::field::{FormField, MetricAux, MetricField, COMP_COUNT, INDEX_SETS};
use crate::grid::GridChart;
use crate::pointwise::TwoFormValue;
use crate::spectral::Fft4;

/// Iterative-solver parameters. Defaults: relative residual `1e-10`,
/// at most 500 iterations.
#[derive(Clone, Copy, Debug)]
pub struct SolverParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

/// Pointwise square roots `W^{1/2}`, `W^{-1/2}` of the L2 weight matrix
/// `W = dV * sqrt(det g) * Gram_p` of a form degree.
pub enum L2Weights {
    /// Flat metric: the weight is one scalar.
    Scalar { half: f64, minus_half: f64 },
    /// General metric: one symmetric matrix per node.
    Pointwise {
        half: Vec<DMatrix<f64>>,
        minus_half: Vec<DMatrix<f64>>,
    },
}

impl L2Weights {
    pub fn new(chart: &GridChart, aux: &MetricAux, degree: usize) -> Self {
        let dv = chart.cell_volume();
        if aux.euclidean {
            let half = dv.sqrt();
            return Self::Scalar {
                half,
                minus_half: 1.0 / half,
            };
        }
        let dim = COMP_COUNT[degree];
        let m = chart.num_points();
        let mut half = Vec::with_capacity(m);
        let mut minus_half = Vec::with_capacity(m);
        for idx in 0..m {
            let ginv = &aux.ginv[idx];
            let scale = dv * aux.sqrt_det[idx];
            let w = DMatrix::from_fn(dim, dim, |r, c| {
                scale
                    * crate::calculus::gram_minor(ginv, INDEX_SETS[degree][r], INDEX_SETS[degree][c])
            });
            let eig = w.clone().symmetric_eigen();
            let mut h = DMatrix::zeros(dim, dim);
            let mut mh = DMatrix::zeros(dim, dim);
            for (k, lambda) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(k);
                let s = lambda.max(0.0).sqrt();
                h += v * v.transpose() * s;
                mh += v * v.transpose() / s;
            }
            half.push(h);
            minus_half.push(mh);
        }
        Self::Pointwise { half, minus_half }
    }

    fn apply(&self, f: &FormField, inverse: bool) -> FormField {
        match self {
            Self::Scalar { half, minus_half } => {
                f.scale(if inverse { *minus_half } else { *half })
            }
            Self::Pointwise { half, minus_half } => {
                let mats = if inverse { minus_half } else { half };
                let dim = COMP_COUNT[f.degree()];
                let mut out = FormField::zeros(*f.chart(), f.degree());
                for idx in 0..f.chart().num_points() {
                    let m = &mats[idx];
                    for r in 0..dim {
                        let mut s = 0.0;
                        for c in 0..dim {
                            s += m[(r, c)] * f.comp(c)[idx];
                        }
                        out.comp_mut(r)[idx] = s;
                    }
                }
                out
            }
        }
    }

    pub fn apply_half(&self, f: &FormField) -> FormField {
        self.apply(f, false)
    }

    pub fn apply_minus_half(&self, f: &FormField) -> FormField {
        self.apply(f, true)
    }

    /// Upper bound for the operator norm of `W^{-1/2}`.
    pub fn minus_half_norm_bound(&self) -> f64 {
        match self {
            Self::Scalar { minus_half, .. } => *minus_half,
            Self::Pointwise { minus_half, .. } => minus_half
                .iter()
                .map(|m| m.norm())
                .fold(0.0_f64, f64::max),
        }
    }
}

fn plain_dot(a: &FormField, b: &FormField) -> f64 {
    a.comps()
        .iter()
        .zip(b.comps())
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(u, v)| u * v)
        .sum()
}

/// Preconditioned conjugate gradients in the plain componentwise dot product.
///
/// `apply` must be symmetric positive semidefinite and `rhs` consistent up to
/// round-off; `precond` symmetric positive definite. `floor` is an absolute
/// residual level (round-off scale of the problem) below which the solve is
/// accepted; a right-hand side already below it returns zero.
pub fn pcg(
    apply: &dyn Fn(&FormField) -> FormField,
    precond: &dyn Fn(&FormField) -> FormField,
    rhs: &FormField,
    params: &SolverParams,
    floor: f64,
) -> Result<FormField> {
    let mut x = FormField::zeros(*rhs.chart(), rhs.degree());
    let rhs_norm = plain_dot(rhs, rhs).sqrt();
    let target = (params.tol * rhs_norm).max(floor);
    if rhs_norm <= floor {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = plain_dot(&r, &z);
    let mut best = x.clone();
    let mut best_res = rhs_norm;
    for _ in 0..params.max_iter {
        let ap = apply(&p);
        let pap = plain_dot(&p, &ap);
        if pap <= 0.0 {
            // Hit the kernel: the consistent part is solved.
            break;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let res = plain_dot(&r, &r).sqrt();
        if res < best_res {
            best_res = res;
            best = x.clone();
        }
        if res <= target {
            return Ok(x);
        }
        if res > 1e3 * rhs_norm {
            // Round-off dominated regime; the best iterate is all there is.
            break;
        }
        z = precond(&r);
        let rz_new = plain_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_new = z.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    if best_res <= target * 100.0 {
        // Accept a mildly stalled solve; callers check a posteriori defects.
        return Ok(best);
    }
    Err(Error::SolverDivergence(format!(
        "PCG stalled at relative residual {:.3e} after {} iterations",
        best_res / rhs_norm,
        params.max_iter
    )))
}

/// Conjugate gradients on raw vectors, same contract as [`pcg`].
pub fn pcg_vec(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    params: &SolverParams,
    floor: f64,
) -> Result<Vec<f64>> {
    pcg_vec_from(apply, precond, rhs, params, floor, None)
}

/// [`pcg_vec`] with a warm-start guess.
pub fn pcg_vec_from(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    params: &SolverParams,
    floor: f64,
    guess: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let n = rhs.len();
    let mut x = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let rhs_norm = dot(rhs, rhs).sqrt();
    let target = (params.tol * rhs_norm).max(floor);
    if rhs_norm <= floor {
        return Ok(vec![0.0; n]);
    }
    let mut r = match guess {
        Some(_) => {
            let ax = apply(&x);
            rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        }
        None => rhs.to_vec(),
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = x.clone();
    let mut best_res = rhs_norm;
    for _ in 0..params.max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = dot(&r, &r).sqrt();
        if res < best_res {
            best_res = res;
            best.copy_from_slice(&x);
        }
        if res <= target {
            return Ok(x);
        }
        if res > 1e3 * rhs_norm {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if best_res <= target * 100.0 {
        return Ok(best);
    }
    Err(Error::SolverDivergence(format!(
        "CG stalled at relative residual {:.3e} after {} iterations",
        best_res / rhs_norm,
        params.max_iter
    )))
}

/// Restarted GMRES on raw vectors with right preconditioning: solves
/// `A M^{-1} y = b`, returns `x = M^{-1} y`.
pub fn gmres_vec(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    tol: f64,
    restart: usize,
    max_restarts: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let norm = |a: &[f64]| -> f64 { dot(a, a).sqrt() };
    let rhs_norm = norm(rhs).max(1e-300);
    let mut x = vec![0.0; n];
    for _ in 0..max_restarts {
        // r = b - A x
        let ax = apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * rhs_norm {
            return Ok(x);
        }
        for v in r.iter_mut() {
            *v /= beta;
        }
        let mut basis: Vec<Vec<f64>> = vec![r];
        let m = restart;
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut cs = vec![0.0_f64; m];
        let mut sn = vec![0.0_f64; m];
        let mut g = vec![0.0_f64; m + 1];
        g[0] = beta;
        let mut steps = 0;
        for j in 0..m {
            let w0 = precond(&basis[j]);
            let mut w = apply(&w0);
            // Arnoldi with modified Gram-Schmidt.
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[(i, j)] = hij;
                for (wk, bk) in w.iter_mut().zip(basis[i].iter()) {
                    *wk -= hij * bk;
                }
            }
            let hj1 = norm(&w);
            h[(j + 1, j)] = hj1;
            // Apply stored Givens rotations.
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let denom = (h[(j, j)] * h[(j, j)] + hj1 * hj1).sqrt();
            if denom == 0.0 {
                steps = j;
                break;
            }
            cs[j] = h[(j, j)] / denom;
            sn[j] = hj1 / denom;
            h[(j, j)] = denom;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            steps = j + 1;
            if g[j + 1].abs() <= tol * rhs_norm || hj1 == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hj1).collect());
        }
        // Solve the triangular system for the Krylov coefficients.
        let mut y = vec![0.0_f64; steps];
        for i in (0..steps).rev() {
            let mut v = g[i];
            for k in (i + 1)..steps {
                v -= h[(i, k)] * y[k];
            }
            y[i] = v / h[(i, i)];
        }
        let mut update = vec![0.0; n];
        for (k, yk) in y.iter().enumerate() {
            for (u, b) in update.iter_mut().zip(basis[k].iter()) {
                *u += yk * b;
            }
        }
        let pu = precond(&update);
        for (xi, u) in x.iter_mut().zip(pu.iter()) {
            *xi += u;
        }
        let ax = apply(&x);
        let res: f64 = rhs
            .iter()
            .zip(&ax)
            .map(|(b, a)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        if res <= tol * rhs_norm {
            return Ok(x);
        }
    }
    let ax = apply(&x);
    let res: f64 = rhs
        .iter()
        .zip(&ax)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    if res <= 100.0 * tol * rhs_norm {
        return Ok(x);
    }
    Err(Error::SolverDivergence(format!(
        "GMRES stalled at relative residual {:.3e}",
        res / rhs_norm
    )))
}

/// Solves the full Hodge Laplacian on 2-forms, `Laplacian eta = rhs`, for a
/// right-hand side L2-orthogonal to the harmonic space. The solution is the
/// one orthogonal to the kernel reachable by CG from zero.
pub fn laplacian_solve_two_form(
    rhs: &FormField,
    aux: &MetricAux,
    fft: &Fft4,
    params: &SolverParams,
) -> Result<FormField> {
    assert_eq!(rhs.degree(), 2);
    let chart = *rhs.chart();
    let w1 = L2Weights::new(&chart, aux, 1);
    let w2 = L2Weights::new(&chart, aux, 2);
    let w3 = L2Weights::new(&chart, aux, 3);
    // B = W2^{-1/2} d^T W3 d W2^{-1/2} + W2^{1/2} d W1^{-1} d^T W2^{1/2}.
    let apply = |v: &FormField| -> FormField {
        let u = w2.apply_minus_half(v);
        let du = ext_d(&u, fft).expect("degree 2");
        let wdu = w3.apply_half(&w3.apply_half(&du));
        let term1 = w2.apply_minus_half(&ext_d_transpose(&wdu, fft));
        let s = w1.apply_minus_half(&ext_d_transpose(&w2.apply_half(v), fft));
        let term2 = w2.apply_half(&ext_d(&w1.apply_minus_half(&s), fft).expect("degree 1"));
        term1.add(&term2)
    };
    let precond = |r: &FormField| -> FormField {
        let mut out = FormField::zeros(chart, 2);
        for c in 0..6 {
            let s = fft.inverse_helmholtz(r.comp(c), 1.0);
            out.comp_mut(c).copy_from_slice(&s);
        }
        out
    };
    let rhs_w = w2.apply_half(rhs);
    let floor = 1e-13 * plain_dot(&rhs_w, &rhs_w).sqrt();
    let x = pcg(&apply, &precond, &rhs_w, params, floor)?;
    Ok(w2.apply_minus_half(&x))
}

/// Bottom eigenpairs of a symmetric positive semidefinite operator by
/// inverse subspace iteration with Rayleigh-Ritz extraction.
///
/// `apply_a` is the operator, `apply_binv` an approximate application of
/// `(A + sigma)^{-1}`. Block iteration handles multiple eigenvalues (the
/// kernel of interest has dimension up to 3) that a single Lanczos run
/// cannot reliably reproduce. Returns ascending Ritz values of `A`, the
/// Ritz vectors and their residual norms.
pub fn subspace_smallest(
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_binv: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    dim: usize,
    block: usize,
    max_outer: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    orthonormalise_block(&mut basis);
    let mut prev: Option<Vec<f64>> = None;
    let mut theta = vec![0.0; block];
    let mut vectors = basis.clone();
    let mut stable = 0;
    for _ in 0..max_outer {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(block);
        for b in &basis {
            next.push(apply_binv(b)?);
        }
        orthonormalise_block(&mut next);
        // Rayleigh-Ritz on A in the enriched subspace.
        let images: Vec<Vec<f64>> = next.iter().map(|v| apply_a(v)).collect();
        let h = DMatrix::from_fn(block, block, |r, c| dot(&next[r], &images[c]));
        let h = 0.5 * (&h + h.transpose());
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        theta = order.iter().map(|i| eig.eigenvalues[*i]).collect();
        vectors = order
            .iter()
            .map(|i| {
                let mut v = vec![0.0; dim];
                for (j, bj) in next.iter().enumerate() {
                    let w = eig.eigenvectors[(j, *i)];
                    for (vk, bk) in v.iter_mut().zip(bj.iter()) {
                        *vk += w * bk;
                    }
                }
                v
            })
            .collect();
        basis = vectors.clone();
        // Convergence of the bottom half of the spectrum.
        let watch = (block / 2).max(3).min(block);
        if let Some(p) = &prev {
            let scale = theta.last().copied().unwrap_or(1.0).abs().max(1e-300);
            let drift = (0..watch)
                .map(|i| (theta[i] - p[i]).abs())
                .fold(0.0_f64, f64::max);
            if drift <= 1e-10 * scale {
                stable += 1;
                if stable >= 2 {
                    break;
                }
            } else {
                stable = 0;
            }
        }
        prev = Some(theta.clone());
    }
    let residuals: Vec<f64> = vectors
        .iter()
        .zip(theta.iter())
        .map(|(v, t)| {
            let av = apply_a(v);
            let mut s = 0.0;
            for (a, b) in av.iter().zip(v.iter()) {
                s += (a - t * b) * (a - t * b);
            }
            s.sqrt()
        })
        .collect();
    Ok((theta, vectors, residuals))
}

fn orthonormalise_block(block: &mut [Vec<f64>]) {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    for i in 0..block.len() {
        // Modified Gram-Schmidt, twice for stability.
        for _ in 0..2 {
            for j in 0..i {
                let proj = {
                    let (head, tail) = block.split_at(i);
                    dot(&head[j], &tail[0])
                };
                let prev = block[j].clone();
                for (v, w) in block[i].iter_mut().zip(prev.iter()) {
                    *v -= proj * w;
                }
            }
        }
        let norm = dot(&block[i], &block[i]).sqrt();
        if norm > 1e-300 {
            for v in block[i].iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// Crude upper bound for the operator norm of the spectral `d` (and its
/// transpose) on the chart: four derivative terms, each bounded by the
/// largest wavenumber.
fn d_norm_bound(chart: &GridChart) -> f64 {
    let n = chart.resolution() as f64;
    let kmax = chart
        .periods()
        .iter()
        .map(|l| std::f64::consts::PI * n / l)
        .fold(0.0_f64, f64::max);
    4.0 * kmax
}

/// Exact part of a 2-form: the L2(g)-orthogonal projection onto `im d`.
///
/// Returns `(projection, potential)` with `projection = d(potential)`.
pub fn exact_part(
    alpha: &FormField,
    aux: &MetricAux,
    fft: &Fft4,
    params: &SolverParams,
) -> Result<(FormField, FormField)> {
    assert_eq!(alpha.degree(), 2);
    let chart = *alpha.chart();
    let w0 = L2Weights::new(&chart, aux, 0);
    let w1 = L2Weights::new(&chart, aux, 1);
    let w2 = L2Weights::new(&chart, aux, 2);
    // Symmetrised full 1-form Laplacian
    //   B = W1^{-1/2} d^T W2 d W1^{-1/2} + W1^{1/2} d W0^{-1} d^T W1^{1/2}.
    // Its kernel is just the harmonic (constant) 1-forms, so the flat inverse
    // Helmholtz preconditions it well; d(solution) is unaffected by the d*d
    // completion term.
    let apply = |v: &FormField| -> FormField {
        let u = w1.apply_minus_half(v);
        let du = ext_d(&u, fft).expect("degree 1");
        let wdu = w2.apply_half(&w2.apply_half(&du));
        let term1 = w1.apply_minus_half(&ext_d_transpose(&wdu, fft));
        let s = w0.apply_minus_half(&ext_d_transpose(&w1.apply_half(v), fft));
        let term2 = w1.apply_half(&ext_d(&w0.apply_minus_half(&s), fft).expect("degree 0"));
        term1.add(&term2)
    };
    let shift = 1.0;
    let precond = |r: &FormField| -> FormField {
        let mut out = FormField::zeros(chart, 1);
        for c in 0..4 {
            let s = fft.inverse_helmholtz(r.comp(c), shift);
            out.comp_mut(c).copy_from_slice(&s);
        }
        out
    };
    let w2a = w2.apply_half(&w2.apply_half(alpha));
    let rhs = w1.apply_minus_half(&ext_d_transpose(&w2a, fft));
    // Round-off floor: |d^T| |W2 alpha| times an epsilon margin. A right-hand
    // side at this level means alpha has no exact component to resolve.
    let floor = 1e-12
        * d_norm_bound(&chart)
        * w1.minus_half_norm_bound()
        * plain_dot(&w2a, &w2a).sqrt();
    let x = pcg(&apply, &precond, &rhs, params, floor)?;
    let potential = w1.apply_minus_half(&x);
    let projection = ext_d(&potential, fft)?;
    Ok((projection, potential))
}

/// The three L2-orthogonal pieces of a 2-form.
#[derive(Clone, Debug)]
pub struct HodgeDecomposition {
    pub harm: FormField,
    pub exact: FormField,
    pub coexact: FormField,
}

/// Hodge decomposition of a 2-form field with respect to `g`.
///
/// `alpha = harm + exact + coexact`, the parts pairwise L2-orthogonal,
/// `d harm = 0` and `delta harm = 0` to solver tolerance.
pub fn hodge_decompose(
    alpha: &FormField,
    g: &MetricField,
    params: &SolverParams,
) -> Result<HodgeDecomposition> {
    let aux = g.aux()?;
    let fft = Fft4::new(*alpha.chart());
    hodge_decompose_with(alpha, &aux, &fft, params)
}

pub fn hodge_decompose_with(
    alpha: &FormField,
    aux: &MetricAux,
    fft: &Fft4,
    params: &SolverParams,
) -> Result<HodgeDecomposition> {
    let (exact, _) = exact_part(alpha, aux, fft, params)?;
    // The coexact part is the star of the exact part of the star:
    // im(delta) = *(im d) and * is an L2 isometry on 2-forms.
    let starred = hodge_star_field(alpha, aux);
    let (exact_of_star, _) = exact_part(&starred, aux, fft, params)?;
    let coexact = hodge_star_field(&exact_of_star, aux);
    let harm = alpha.sub(&exact).sub(&coexact);
    Ok(HodgeDecomposition {
        harm,
        exact,
        coexact,
    })
}

/// A basis of the harmonic 2-forms of `g`, L2-orthonormalised, with its Gram
/// matrix and the intersection (cup product) matrix.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub degree: usize,
    pub basis: Vec<FormField>,
    pub gram: DMatrix<f64>,
    pub intersection: DMatrix<f64>,
}

impl HarmonicBasis {
    /// Signature `(positive, negative)` of the intersection form.
    pub fn signature(&self, tol: f64) -> (usize, usize) {
        let eig = self.intersection.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let pos = eig.eigenvalues.iter().filter(|v| **v > tol * scale).count();
        let neg = eig.eigenvalues.iter().filter(|v| **v < -tol * scale).count();
        (pos, neg)
    }
}

/// Harmonic representatives of the six constant 2-form classes of the torus.
///
/// Errors with [`Error::DimensionMismatch`] when the detected dimension is
/// not `b_2 = 6` (a discretisation failure, never silently resolved).
pub fn harmonic_basis(g: &MetricField, params: &SolverParams) -> Result<HarmonicBasis> {
    let aux = g.aux()?;
    let chart = *g.chart();
    let fft = Fft4::new(chart);
    let mut reps = Vec::with_capacity(6);
    for c in 0..6 {
        let mut comps = [0.0; 6];
        comps[c] = 1.0;
        let seed = FormField::constant_two_form(chart, &TwoFormValue::new(comps));
        let dec = hodge_decompose_with(&seed, &aux, &fft, params)?;
        reps.push(dec.harm);
    }
    // Residual sanity: harmonic representatives must be closed and co-closed.
    for h in &reps {
        let dh = ext_d(h, &fft)?;
        let delta_h = crate::calculus::codiff(h, &aux, &fft)?;
        let scale = l2_norm(h, &aux).max(1e-30);
        if l2_norm(&dh, &aux) > 1e-6 * scale || l2_norm(&delta_h, &aux) > 1e-6 * scale {
            return Err(Error::SolverDivergence(format!(
                "harmonic representative residual d: {:.3e}, delta: {:.3e}",
                l2_norm(&dh, &aux),
                l2_norm(&delta_h, &aux)
            )));
        }
    }
    let basis = orthonormalise(reps, &aux, 6)?;
    let gram = DMatrix::from_fn(6, 6, |r, c| l2_inner(&basis[r], &basis[c], &aux));
    let intersection = DMatrix::from_fn(6, 6, |r, c| integrate_wedge(&basis[r], &basis[c]));
    Ok(HarmonicBasis {
        degree: 2,
        basis,
        gram,
        intersection,
    })
}

/// L2-orthonormalises a spanning set, failing if its Gram matrix is rank
/// deficient relative to `expected`.
fn orthonormalise(
    fields: Vec<FormField>,
    aux: &MetricAux,
    expected: usize,
) -> Result<Vec<FormField>> {
    let k = fields.len();
    let gram = DMatrix::from_fn(k, k, |r, c| l2_inner(&fields[r], &fields[c], aux));
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let detected = eig
        .eigenvalues
        .iter()
        .filter(|v| **v > 1e-6 * max)
        .count();
    if detected != expected {
        return Err(Error::DimensionMismatch {
            expected,
            detected,
            context: "harmonic space Gram rank".into(),
        });
    }
    // Symmetric inverse square root of the Gram matrix.
    let mut inv_half = DMatrix::zeros(k, k);
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        inv_half += v * v.transpose() / lambda.sqrt();
    }
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut f = FormField::zeros(*fields[0].chart(), fields[0].degree());
        for (j, fj) in fields.iter().enumerate() {
            f.axpy(inv_half[(i, j)], fj);
        }
        out.push(f);
    }
    Ok(out)
}

/// The `b^+ = 3` dimensional space of g-harmonic, g-self-dual 2-forms.
pub fn sd_harmonic_basis(g: &MetricField, params: &SolverParams) -> Result<Vec<FormField>> {
    let full = harmonic_basis(g, params)?;
    let aux = g.aux()?;
    split_sd(&full, &aux, true)
}

/// Splits an orthonormal harmonic basis by the star involution; `positive`
/// selects the self-dual eigenspace.
fn split_sd(basis: &HarmonicBasis, aux: &MetricAux, positive: bool) -> Result<Vec<FormField>> {
    let k = basis.basis.len();
    let star_mat = DMatrix::from_fn(k, k, |r, c| {
        l2_inner(&basis.basis[r], &hodge_star_field(&basis.basis[c], aux), aux)
    });
    let sym = 0.5 * (&star_mat + star_mat.transpose());
    let eig = sym.symmetric_eigen();
    let mut fields = Vec::new();
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let want = if positive { *lambda > 0.5 } else { *lambda < -0.5 };
        if (lambda.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::SolverDivergence(format!(
                "star involution eigenvalue {lambda:.6} far from +-1"
            )));
        }
        if want {
            let mut f = FormField::zeros(*basis.basis[0].chart(), 2);
            for (j, b) in basis.basis.iter().enumerate() {
                f.axpy(eig.eigenvectors[(j, i)], b);
            }
            fields.push(f);
        }
    }
    if fields.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            detected: fields.len(),
            context: "self-dual harmonic space".into(),
        });
    }
    Ok(fields)
}

/// Mean-zero scalar Poisson solve `Laplacian u = rhs` for a general metric,
/// used by the conformal gauge machinery.
pub fn poisson_scalar(
    rhs: &FormField,
    aux: &MetricAux,
    fft: &Fft4,
    params: &SolverParams,
) -> Result<FormField> {
    assert_eq!(rhs.degree(), 0);
    let chart = *rhs.chart();
    let w0 = L2Weights::new(&chart, aux, 0);
    let w1 = L2Weights::new(&chart, aux, 1);
    let apply = |v: &FormField| -> FormField {
        let u = w0.apply_minus_half(v);
        let du = ext_d(&u, fft).expect("degree 0");
        let wdu = w1.apply_half(&w1.apply_half(&du));
        w0.apply_minus_half(&ext_d_transpose(&wdu, fft))
    };
    let precond = |r: &FormField| -> FormField {
        let mut out = FormField::zeros(chart, 0);
        out.comp_mut(0)
            .copy_from_slice(&fft.inverse_helmholtz(r.comp(0), 1.0));
        out
    };
    // Weak form: rhs enters as W0^{ -1/2 } W0 rhs.
    let rhs_w = w0.apply_half(rhs);
    let floor = 1e-13 * plain_dot(&rhs_w, &rhs_w).sqrt();
    let x = pcg(&apply, &precond, &rhs_w, params, floor)?;
    let mut u = w0.apply_minus_half(&x);
    let mean = u.mean();
    for v in u.comp_mut(0) {
        *v -= mean;
    }
    Ok(u)
}
