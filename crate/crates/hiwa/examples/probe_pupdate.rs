use hiwa::solver::update_correspondence;
use nalgebra::DMatrix;

fn main() {
    // Representative late-stage pair-cost matrix: matched pairs cheap,
    // mismatched ~ median-scale m=2.0.
    let m = 2.0;
    let costs = DMatrix::from_fn(5, 5, |i, j| {
        if (i + 2) % 5 == j { 0.05 * m } else { m * (1.0 + 0.3 * ((i * 5 + j) as f64).sin()) }
    });
    for gamma1 in [0.05 * m, 0.1 * m, 0.3 * m] {
        for max_iters in [1000usize, 10_000, 100_000, 1_000_000] {
            let out = update_correspondence(&costs, gamma1, max_iters, 1e-9).unwrap();
            println!("g1={gamma1:.2} max={max_iters}: converged={} iters={} violation={:.2e}",
                out.converged, out.iterations, out.violation);
            if out.converged { break; }
        }
    }
}
