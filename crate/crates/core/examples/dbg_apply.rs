use acs4::anti_invariant::AntiInvariantOperator;
use acs4::families::torus_family;
use acs4::field::{FormField, MetricField};
use acs4::grid::GridChart;
use std::f64::consts::TAU;
use std::time::Instant;

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
    op.set_nyquist_penalty(1.0);
    let v: Vec<f64> = (0..op.dim()).map(|i| ((i * 37) % 101) as f64 / 101.0 - 0.5).collect();
    // warm up
    let mut out = op.apply(&v);
    let t = Instant::now();
    let reps = 50;
    for _ in 0..reps {
        out = op.apply(&out.iter().map(|x| x * 0.999).collect::<Vec<_>>());
    }
    println!("apply: {:.2} ms", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);
    let t = Instant::now();
    op.set_nyquist_penalty(0.0);
    for _ in 0..reps {
        out = op.apply(&out.iter().map(|x| x * 0.999).collect::<Vec<_>>());
    }
    println!("apply no-penalty: {:.2} ms", t.elapsed().as_secs_f64() * 1000.0 / reps as f64);
    let _ = out;
}
