use hiwa::{datagen, solver, diagnostics};
fn main() {
    let spec = datagen::GenSpec {
        clusters: 5, intrinsic_dim: 2, ambient_dim: 6, samples_per_cluster: 100,
        subspace_mode: datagen::SubspaceMode::Random, noise_sigma: 0.0,
        permute_clusters: true, seed: 1000, shared_samples: false, identity_transform: false,
    };
    let (x, y, truth) = datagen::generate(&spec).unwrap();
    let t0 = std::time::Instant::now();
    let config = solver::SolverConfig { seed: 0, outer_max_iters: 30, ..Default::default() };
    let r = solver::solve(&x, &y, &config).unwrap();
    println!("30 outer iters took {:.2}s ({:.0}ms/iter)", t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64()*1000.0/30.0);
    let align = diagnostics::alignment_error(&r.transform, &truth.r_star, &x.pooled()).unwrap();
    let corr = diagnostics::correspondence_error(&r.correspondence, &truth.p_star).unwrap();
    println!("after 30 iters: align {align:.3e} corr {corr:.3e} primal {:.2e} delta-obj traces={:?}",
        r.primal_residual_trace.last().unwrap(),
        &r.objective_trace[..5.min(r.objective_trace.len())]);
}
