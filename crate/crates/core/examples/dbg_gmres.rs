use acs4::hodge::gmres_vec;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() {
    // Ill-conditioned nonsymmetric test: diag(1..kappa) + skew noise.
    let n = 400;
    let kappa = 800.0;
    let mut rng = StdRng::seed_from_u64(5);
    let diag: Vec<f64> = (0..n).map(|i| 1.0 + kappa * (i as f64) / n as f64).collect();
    let noise: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                for j in 0..n {
                    s += 2.0 * (noise[i][j] - noise[j][i]) / (n as f64).sqrt() * x[j];
                }
                s
            })
            .collect()
    };
    let precond = |x: &[f64]| -> Vec<f64> { x.iter().zip(&diag).map(|(v, d)| v / d).collect() };
    let xtrue: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs = apply(&xtrue);
    match gmres_vec(&apply, &precond, &rhs, 1e-9, 50, 8) {
        Ok(x) => {
            let err: f64 = x.iter().zip(&xtrue).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            println!("recovery error {:.3e}", err);
        }
        Err(e) => println!("failed: {e}"),
    }
}
