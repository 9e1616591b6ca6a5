use hiwa::{datagen, solver, diagnostics};
fn main() {
    for seed in 0..5u64 {
        let spec = datagen::GenSpec {
            clusters: 5, intrinsic_dim: 2, ambient_dim: 6, samples_per_cluster: 100,
            subspace_mode: datagen::SubspaceMode::Random, noise_sigma: 0.0,
            permute_clusters: true, seed: 1000 + seed, shared_samples: false, identity_transform: false,
        };
        let (x, y, truth) = datagen::generate(&spec).unwrap();
        let t0 = std::time::Instant::now();
        let config = solver::SolverConfig { seed, ..Default::default() };
        let r = solver::solve(&x, &y, &config).unwrap();
        let align = diagnostics::alignment_error(&r.transform, &truth.r_star, &x.pooled()).unwrap();
        let corr = diagnostics::correspondence_error(&r.correspondence, &truth.p_star).unwrap();
        println!("seed {seed}: {:.1}s iters {} converged {} align {align:.3e} corr {corr:.3e} sink_noncvg {}",
            t0.elapsed().as_secs_f64(), r.iterations, r.converged, r.sinkhorn_nonconverged);
    }
}
