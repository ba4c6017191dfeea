use acs4::anti_invariant::AntiInvariantOperator;
use acs4::families::torus_family;
use acs4::field::{FormField, MetricField};
use acs4::grid::GridChart;
use acs4::spectral::Fft4;
use std::f64::consts::TAU;

fn main() {
    let chart = GridChart::unit(12).unwrap();
    let g = MetricField::flat(chart);
    let l = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[0]).cos()).powi(2));
    let s = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[1]).cos()).powi(2));
    let mut f = FormField::zeros(chart, 0);
    for idx in 0..chart.num_points() {
        let lv = l.comp(0)[idx];
        let sv = s.comp(0)[idx];
        f.comp_mut(0)[idx] = (1.0 - lv * lv - sv * sv).sqrt();
    }
    let (jd, _) = torus_family(&f, &l, &s).unwrap();
    let op = AntiInvariantOperator::new(&g, &jd).unwrap();
    let lambda_max = op.lambda_max(12, 8);
    println!("lambda_max estimate {:.2}", lambda_max);
    let sigma = 1e-3 * lambda_max;
    op.set_nyquist_penalty(lambda_max * chart.cell_volume());
    let fft = Fft4::new(chart);
    let m = chart.num_points();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    // manual PCG with iteration count
    let rhs: Vec<f64> = (0..op.dim()).map(|i| (((i * 53) % 97) as f64 / 97.0 - 0.5)).collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut av = op.apply(v);
        for (a, b) in av.iter_mut().zip(v.iter()) { *a += sigma * b; }
        av
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; 2 * m];
        for half in 0..2 {
            let solved = fft.mode_multiply(&r[half * m..(half + 1) * m], |k| {
                let k2 = k.iter().map(|x| x * x).sum::<f64>();
                1.0 / (0.5 * k2 + sigma)
            });
            out[half * m..(half + 1) * m].copy_from_slice(&solved);
        }
        out
    };
    let mut x = vec![0.0; op.dim()];
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let rn0 = dot(&rhs, &rhs).sqrt();
    for it in 0..200 {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        let alpha = rz / pap;
        for i in 0..x.len() { x[i] += alpha * p[i]; r[i] -= alpha * ap[i]; }
        let rel = dot(&r, &r).sqrt() / rn0;
        if it % 10 == 0 || rel < 1e-5 {
            println!("it {it}: rel {rel:.3e}");
        }
        if rel < 1e-5 { break; }
        z = precond(&r);
        let rz2 = dot(&r, &z);
        let beta = rz2 / rz;
        rz = rz2;
        for i in 0..p.len() { p[i] = z[i] + beta * p[i]; }
    }
}
