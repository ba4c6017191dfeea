use acs4::calabi_yau::*;
use acs4::calculus::{hodge_star_field, l2_inner, l2_norm};
use acs4::field::{FormField, MetricField};
use acs4::grid::GridChart;
use acs4::anti_invariant::flat_reference;
use acs4::families::torus_family;
use acs4::hodge::SolverParams;
use std::f64::consts::TAU;

fn main() {
    let chart = GridChart::unit(16).unwrap();
    let r1 = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[0]).cos()).powi(2));
    let r2 = FormField::scalar_from_fn(chart, |x| 0.3 * (0.5 + 0.5 * (TAU * x[1]).cos()).powi(2));
    let mut f = FormField::zeros(chart, 0);
    for idx in 0..chart.num_points() {
        let l = r1.comp(0)[idx];
        let s = r2.comp(0)[idx];
        f.comp_mut(0)[idx] = (1.0 - l * l - s * s).sqrt();
    }
    let (j_new, _) = torus_family(&f, &r1, &r2).unwrap();
    let (g, _, omega) = flat_reference(chart);
    let zero_f = FormField::zeros(chart, 0);
    let problem = TypeDProblem::new(j_new, omega, g, &zero_f, &SolverParams::default()).unwrap();
    let aux = MetricField::flat(chart).aux().unwrap();
    let mut opts = TypeDOptions::default();
    opts.max_newton = 4;
    match solve_type_d(&problem, None, &opts) {
        Ok(_) => println!("unexpectedly converged"),
        Err(acs4::error::Error::NewtonDivergence { history, .. }) => {
            println!("history {:?}", history);
        }
        Err(e) => println!("{e}"),
    }
    // Reproduce 3 newton steps manually? simpler: look at Phi at (0,0)
    let b = FormField::zeros(chart, 1);
    let phi = phi_residual(&b, &[0.0, 0.0], &problem).unwrap();
    let total = l2_norm(&phi, &aux);
    let sd = phi.add(&hodge_star_field(&phi, &aux)).scale(0.5);
    let asd = phi.sub(&sd);
    let omega_n = l2_norm(&problem.omega_ref, &aux);
    let omega_comp = l2_inner(&phi, &problem.omega_ref, &aux) / omega_n;
    let chi_comp: Vec<f64> = problem.chi.iter().map(|c| l2_inner(&phi, c, &aux)).collect();
    println!("|phi| {:.4e}: sd {:.4e} asd {:.4e} omega-comp {:.4e} chi {:?}",
        total, l2_norm(&sd, &aux), l2_norm(&asd, &aux), omega_comp, chi_comp);
}
