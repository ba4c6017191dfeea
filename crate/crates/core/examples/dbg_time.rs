use acs4::anti_invariant::{h_minus, EigOptions};
use acs4::families::torus_family;
use acs4::field::{FormField, MetricField};
use acs4::grid::GridChart;
use std::f64::consts::TAU;
use std::time::Instant;

fn main() {
    for n in [8usize, 12] {
        let chart = GridChart::unit(n).unwrap();
        let g = MetricField::flat(chart);
        // flat
        let j = acs4::field::AcsField::standard(chart);
        let t = Instant::now();
        let rep = h_minus(&g, &j, &EigOptions::default()).unwrap();
        println!("N={n} flat: kernel {} in {:.1} s", rep.kernel_dim, t.elapsed().as_secs_f64());
        // deformed
        let l = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[0]).cos()).powi(2));
        let s = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[1]).cos()).powi(2));
        let mut f = FormField::zeros(chart, 0);
        for idx in 0..chart.num_points() {
            let lv = l.comp(0)[idx];
            let sv = s.comp(0)[idx];
            f.comp_mut(0)[idx] = (1.0 - lv * lv - sv * sv).sqrt();
        }
        let (jd, _) = torus_family(&f, &l, &s).unwrap();
        let t = Instant::now();
        let rep = h_minus(&g, &jd, &EigOptions::default()).unwrap();
        println!("N={n} deformed: kernel {} in {:.1} s", rep.kernel_dim, t.elapsed().as_secs_f64());
    }
}
