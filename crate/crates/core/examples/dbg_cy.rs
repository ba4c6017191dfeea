use acs4::calabi_yau::*;
use acs4::calculus::l2_norm;
use acs4::field::{FormField, MetricField};
use acs4::grid::GridChart;
use acs4::anti_invariant::flat_reference;
use acs4::hodge::SolverParams;
use std::f64::consts::TAU;

fn main() {
    let chart = GridChart::unit(8).unwrap();
    let (g, j, omega) = flat_reference(chart);
    let f = FormField::scalar_from_fn(chart, |x| 0.1 * (TAU * x[0]).cos());
    let problem = TypeDProblem::new(j, omega, g, &f, &SolverParams::default()).unwrap();
    let aux = MetricField::flat(chart).aux().unwrap();
    let b = FormField::zeros(chart, 1);
    let phi = phi_residual(&b, &[0.0, 0.0], &problem).unwrap();
    println!("initial residual {:.4e}", l2_norm(&phi, &aux));
    match solve_type_d(&problem, None, &TypeDOptions::default()) {
        Ok(sol) => println!("converged in {} iterations, history {:?}", sol.iterations, sol.residual_history),
        Err(e) => println!("failed: {e}"),
    }
}
